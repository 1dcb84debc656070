use fibottention::{attention_vjp, fibottention_block_forward, AttentionBlockParams, BlockGradients, SupportSet};
use ndarray::Array2;

use crate::failure::Failure;

const STEP: f64 = 1e-5;
pub const MAX_ENTRIES: usize = 20_000;

/// Largest relative error between the analytic gradients and central
/// differences of `<upstream, forward(X)>`, over every input and weight entry.
pub fn max_gradient_error(
    x: &Array2<f64>,
    params: &AttentionBlockParams,
    masks: &[SupportSet],
    upstream: &Array2<f64>,
) -> Result<f64, Failure> {
    let d = params.d_model();
    let entries = x.len() + 4 * d * d;
    if entries > MAX_ENTRIES {
        return Err(Failure::usage(format!(
            "--grad-check perturbs {entries} entries (limit {MAX_ENTRIES}); use a smaller --n or --d-model"
        )));
    }
    let objective = |x: &Array2<f64>, p: &AttentionBlockParams| -> Result<f64, Failure> {
        Ok((&fibottention_block_forward(x.view(), p, masks)? * upstream).sum())
    };
    let grads = attention_vjp(x.view(), params, masks, upstream.view())?;
    let mut worst: f64 = 0.0;

    let mut xp = x.clone();
    for (idx, &g) in grads.dx.iter().enumerate() {
        let numeric = central(&mut xp, idx, |xp| objective(xp, params))?;
        worst = worst.max(rel_err(g, numeric));
    }

    let mut pp = params.clone();
    for slot in 0..3 * params.n_heads() + 1 {
        let analytic = grad_slot(&grads, slot).clone();
        for (idx, &g) in analytic.iter().enumerate() {
            let orig = slot_mut(&mut pp, slot).as_slice_mut().unwrap()[idx];
            slot_mut(&mut pp, slot).as_slice_mut().unwrap()[idx] = orig + STEP;
            let fp = objective(x, &pp)?;
            slot_mut(&mut pp, slot).as_slice_mut().unwrap()[idx] = orig - STEP;
            let fm = objective(x, &pp)?;
            slot_mut(&mut pp, slot).as_slice_mut().unwrap()[idx] = orig;
            worst = worst.max(rel_err(g, (fp - fm) / (2.0 * STEP)));
        }
    }
    Ok(worst)
}

fn central(
    m: &mut Array2<f64>,
    idx: usize,
    mut f: impl FnMut(&Array2<f64>) -> Result<f64, Failure>,
) -> Result<f64, Failure> {
    let orig = m.as_slice().unwrap()[idx];
    m.as_slice_mut().unwrap()[idx] = orig + STEP;
    let fp = f(m)?;
    m.as_slice_mut().unwrap()[idx] = orig - STEP;
    let fm = f(m)?;
    m.as_slice_mut().unwrap()[idx] = orig;
    Ok((fp - fm) / (2.0 * STEP))
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

// slot 3i..3i+2: head i's Q, K, V; last slot: output projection
fn slot_mut(p: &mut AttentionBlockParams, slot: usize) -> &mut Array2<f64> {
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

fn grad_slot(g: &BlockGradients, slot: usize) -> &Array2<f64> {
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
