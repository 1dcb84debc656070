//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use fibottention::{AttentionBlockParams, SplitMix64, SupportSet};
use ndarray::{Array2, ArrayView2, Axis};

pub const BLOCKED_LOGIT: f64 = -1e30;

pub fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform(-1.0, 1.0))
}

/// Plain dense attention with blocked logits replaced by -1e30.
pub fn dense_oracle_forward(
    x: ArrayView2<f64>,
    params: &AttentionBlockParams,
    masks: &[SupportSet],
) -> Array2<f64> {
    let g = x.nrows();
    let dh = params.heads[0].wq.ncols();
    let mut zs = Vec::new();
    for (p, m) in params.heads.iter().zip(masks) {
        let q = x.dot(&p.wq);
        let k = x.dot(&p.wk);
        let v = x.dot(&p.wv);
        let mut s = q.dot(&k.t()) / (dh as f64).sqrt();
        for j in 0..g {
            for kk in 0..g {
                if !m.contains(j, kk) {
                    s[[j, kk]] = BLOCKED_LOGIT;
                }
            }
        }
        for mut row in s.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        zs.push(s.dot(&v));
    }
    let views: Vec<_> = zs.iter().map(|z| z.view()).collect();
    ndarray::concatenate(Axis(1), &views).unwrap().dot(&params.wz)
}

/// Random structured mask with the class token, plus a few irregular links.
pub fn random_support(rng: &mut SplitMix64, n: usize) -> SupportSet {
    let offsets: Vec<usize> = (1..n).filter(|_| rng.next_f64() < 0.35).collect();
    let diag = rng.next_f64() < 0.5;
    let extra: Vec<(usize, usize)> = (0..rng.below(4))
        .map(|_| (1 + rng.below(n as u64) as usize, 1 + rng.below(n as u64) as usize))
        .collect();
    SupportSet::from_offsets(n, offsets, diag, true).with_explicit_pairs(extra)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Max relative error of the analytic VJP against central differences of
/// `<upstream, forward(X)>` over every input and parameter entry.
pub fn gradient_check(
    x: &Array2<f64>,
    params: &AttentionBlockParams,
    masks: &[SupportSet],
    upstream: &Array2<f64>,
    step: f64,
) -> f64 {
    use fibottention::{attention_vjp, fibottention_block_forward};

    let objective = |x: &Array2<f64>, p: &AttentionBlockParams| -> f64 {
        let o = fibottention_block_forward(x.view(), p, masks).unwrap();
        (&o * upstream).sum()
    };
    let grads = attention_vjp(x.view(), params, masks, upstream.view()).unwrap();
    let mut worst: f64 = 0.0;

    let mut xp = x.clone();
    for idx in 0..x.len() {
        let orig = xp.as_slice().unwrap()[idx];
        xp.as_slice_mut().unwrap()[idx] = orig + step;
        let fp = objective(&xp, params);
        xp.as_slice_mut().unwrap()[idx] = orig - step;
        let fm = objective(&xp, params);
        xp.as_slice_mut().unwrap()[idx] = orig;
        worst = worst.max(rel_err(grads.dx.as_slice().unwrap()[idx], (fp - fm) / (2.0 * step)));
    }

    let mut pp = params.clone();
    let n_heads = params.heads.len();
    for slot in 0..3 * n_heads + 1 {
        let len = param_slot(&mut pp, slot).len();
        for idx in 0..len {
            let orig = param_slot(&mut pp, slot).as_slice().unwrap()[idx];
            param_slot(&mut pp, slot).as_slice_mut().unwrap()[idx] = orig + step;
            let fp = objective(x, &pp);
            param_slot(&mut pp, slot).as_slice_mut().unwrap()[idx] = orig - step;
            let fm = objective(x, &pp);
            param_slot(&mut pp, slot).as_slice_mut().unwrap()[idx] = orig;
            let analytic = grad_slot(&grads, slot).as_slice().unwrap()[idx];
            worst = worst.max(rel_err(analytic, (fp - fm) / (2.0 * step)));
        }
    }
    worst
}

// Slots 3i, 3i+1, 3i+2 are head i's Q/K/V projections; the last slot is Wz.
fn param_slot(p: &mut AttentionBlockParams, slot: usize) -> &mut Array2<f64> {
    if slot == 3 * p.heads.len() {
        return &mut p.wz;
    }
    let h = &mut p.heads[slot / 3];
    match slot % 3 {
        0 => &mut h.wq,
        1 => &mut h.wk,
        _ => &mut h.wv,
    }
}

fn grad_slot(g: &fibottention::BlockGradients, slot: usize) -> &Array2<f64> {
    if slot == 3 * g.heads.len() {
        return &g.dwz;
    }
    let h = &g.heads[slot / 3];
    match slot % 3 {
        0 => &h.wq,
        1 => &h.wk,
        _ => &h.wv,
    }
}
