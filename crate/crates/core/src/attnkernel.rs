//! Reference multi-head self-attention restricted to per-head support sets.
//!
//! For head `i`: `Q = X Wq`, `K = X Wk`, `V = X Wv`; scores `Q_j . K_k / sqrt(d_h)`
//! are evaluated only on admissible pairs and every other entry is
//! [`HeadScores::get`] `None` (blocked). The block output is
//! `concat_i(softmax(S_i) V_i) Wz`. There is no residual, normalisation or MLP.

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::maskgen::SupportSet;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
}

/// Projections of one attention block: per head `d x d_h` matrices and the
/// `(h d_h) x d` output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlockParams {
    pub heads: Vec<HeadParams>,
    pub wz: Array2<f64>,
    pub seed: u64,
}

fn uniform_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform(-bound, bound))
}

impl AttentionBlockParams {
    /// Entries drawn from `U(-1/sqrt d, 1/sqrt d)`.
    pub fn seeded(d: usize, h: usize, seed: u64) -> Result<Self> {
        if h == 0 || d == 0 || !d.is_multiple_of(h) {
            return Err(Error::arg(format!("embedding width {d} must be a positive multiple of heads {h}")));
        }
        let dh = d / h;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = SplitMix64::new(seed);
        let heads = (0..h)
            .map(|_| HeadParams {
                wq: uniform_matrix(&mut rng, d, dh, bound),
                wk: uniform_matrix(&mut rng, d, dh, bound),
                wv: uniform_matrix(&mut rng, d, dh, bound),
            })
            .collect();
        let wz = uniform_matrix(&mut rng, h * dh, d, bound);
        Ok(Self { heads, wz, seed })
    }

    pub fn d_model(&self) -> usize {
        self.wz.ncols()
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn d_head(&self) -> usize {
        self.heads.first().map_or(0, |p| p.wq.ncols())
    }

    fn check(&self) -> Result<()> {
        let d = self.d_model();
        let dh = self.d_head();
        let h = self.n_heads();
        if h == 0 || self.wz.nrows() != h * dh {
            return Err(Error::shape(format!(
                "output projection is {}x{}, expected {}x{d}",
                self.wz.nrows(),
                d,
                h * dh
            )));
        }
        for (i, p) in self.heads.iter().enumerate() {
            for m in [&p.wq, &p.wk, &p.wv] {
                if m.dim() != (d, dh) {
                    return Err(Error::shape(format!("head {i} projection is {:?}, expected ({d}, {dh})", m.dim())));
                }
            }
        }
        Ok(())
    }
}

/// Masked score matrix. Blocked entries are `None`; they were never computed.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadScores {
    size: usize,
    values: Vec<Option<f64>>,
    dot_products: usize,
}

impl HeadScores {
    pub fn from_entries(size: usize, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::shape(format!("{} entries for a {size}x{size} score matrix", values.len())));
        }
        let dot_products = values.iter().filter(|v| v.is_some()).count();
        Ok(Self { size, values, dot_products })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, j: usize, k: usize) -> Option<f64> {
        self.values[j * self.size + k]
    }

    /// Query/key dot products evaluated to build this matrix.
    pub fn dot_products(&self) -> usize {
        self.dot_products
    }
}

/// `Q_j . K_k / sqrt(d_h)` on admissible pairs only.
pub fn masked_scores(q: ArrayView2<f64>, k: ArrayView2<f64>, mask: &SupportSet) -> Result<HeadScores> {
    let g = mask.grid_size();
    if q.dim() != k.dim() || q.nrows() != g {
        return Err(Error::shape(format!(
            "Q {:?} and K {:?} must both have {g} rows for a mask over {} patches",
            q.dim(),
            k.dim(),
            mask.n_patches()
        )));
    }
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut values = vec![None; g * g];
    let mut dot_products = 0;
    for j in 0..g {
        let qj = q.row(j);
        for kk in mask.row(j) {
            values[j * g + kk] = Some(qj.dot(&k.row(kk)) * scale);
            dot_products += 1;
        }
    }
    Ok(HeadScores { size: g, values, dot_products })
}

/// Row softmax over admissible entries; blocked entries get probability 0.
pub fn masked_softmax(scores: &HeadScores) -> Result<Array2<f64>> {
    let g = scores.size;
    let mut out = Array2::zeros((g, g));
    for j in 0..g {
        let row = &scores.values[j * g..(j + 1) * g];
        let max = row
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateRow { row: j });
        }
        let mut sum = 0.0;
        for (k, v) in row.iter().enumerate() {
            if let Some(s) = v {
                let e = (s - max).exp();
                out[[j, k]] = e;
                sum += e;
            }
        }
        out.row_mut(j).mapv_inplace(|e| e / sum);
    }
    Ok(out)
}

struct HeadCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Array2<f64>,
    out: Array2<f64>,
}

fn check_inputs(x: ArrayView2<f64>, params: &AttentionBlockParams, masks: &[SupportSet]) -> Result<()> {
    params.check()?;
    if x.ncols() != params.d_model() {
        return Err(Error::shape(format!("X has {} columns, params expect {}", x.ncols(), params.d_model())));
    }
    if masks.len() != params.n_heads() {
        return Err(Error::shape(format!("{} masks for {} heads", masks.len(), params.n_heads())));
    }
    if let Some(m) = masks.iter().find(|m| m.grid_size() != x.nrows()) {
        return Err(Error::shape(format!("mask grid {} does not match {} tokens", m.grid_size(), x.nrows())));
    }
    Ok(())
}

fn head_forward(x: ArrayView2<f64>, p: &HeadParams, mask: &SupportSet) -> Result<HeadCache> {
    let q = x.dot(&p.wq);
    let k = x.dot(&p.wk);
    let v = x.dot(&p.wv);
    let scores = masked_scores(q.view(), k.view(), mask)?;
    let probs = masked_softmax(&scores)?;
    let out = probs.dot(&v);
    Ok(HeadCache { q, k, v, probs, out })
}

fn forward_caches(
    x: ArrayView2<f64>,
    params: &AttentionBlockParams,
    masks: &[SupportSet],
) -> Result<Vec<HeadCache>> {
    check_inputs(x, params, masks)?;
    params
        .heads
        .iter()
        .zip(masks)
        .map(|(p, m)| head_forward(x, p, m))
        .collect()
}

fn concat_heads(caches: &[HeadCache]) -> Array2<f64> {
    let views: Vec<_> = caches.iter().map(|c| c.out.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("head outputs share row count")
}

/// Per-head features `Y_i = softmax(S_i) V_i`.
pub fn head_outputs(
    x: ArrayView2<f64>,
    params: &AttentionBlockParams,
    masks: &[SupportSet],
) -> Result<Vec<Array2<f64>>> {
    Ok(forward_caches(x, params, masks)?
        .into_iter()
        .map(|c| c.out)
        .collect())
}

/// Block output `concat_i(softmax(S_i) V_i) Wz`.
pub fn fibottention_block_forward(
    x: ArrayView2<f64>,
    params: &AttentionBlockParams,
    masks: &[SupportSet],
) -> Result<Array2<f64>> {
    let caches = forward_caches(x, params, masks)?;
    Ok(concat_heads(&caches).dot(&params.wz))
}

/// Plain multi-head attention over every pair; the reference for the masked path.
pub fn dense_block_forward(x: ArrayView2<f64>, params: &AttentionBlockParams) -> Result<Array2<f64>> {
    if x.nrows() < 2 {
        return Err(Error::shape("need a class token and at least one patch token"));
    }
    let full = vec![SupportSet::full(x.nrows() - 1); params.n_heads()];
    fibottention_block_forward(x, params, &full)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGradients {
    pub dx: Array2<f64>,
    pub heads: Vec<HeadParams>,
    pub dwz: Array2<f64>,
}

/// Reverse-mode gradients of `<upstream, forward(X)>` with respect to `X` and
/// every projection.
pub fn attention_vjp(
    x: ArrayView2<f64>,
    params: &AttentionBlockParams,
    masks: &[SupportSet],
    upstream: ArrayView2<f64>,
) -> Result<BlockGradients> {
    let caches = forward_caches(x, params, masks)?;
    let expected = (x.nrows(), params.d_model());
    if upstream.dim() != expected {
        return Err(Error::shape(format!("upstream is {:?}, output is {expected:?}", upstream.dim())));
    }
    let dh = params.d_head();
    let scale = 1.0 / (dh as f64).sqrt();
    let z = concat_heads(&caches);
    let dwz = z.t().dot(&upstream);
    let dz = upstream.dot(&params.wz.t());

    let mut dx = Array2::zeros(x.dim());
    let mut heads = Vec::with_capacity(caches.len());
    for (i, (c, p)) in caches.iter().zip(&params.heads).enumerate() {
        let dout = dz.slice(s![.., i * dh..(i + 1) * dh]);
        let dprobs = dout.dot(&c.v.t());
        let dv = c.probs.t().dot(&dout);
        // softmax backward; blocked entries have zero probability and so zero gradient
        let row_dot = (&c.probs * &dprobs).sum_axis(Axis(1));
        let mut ds = &dprobs - &row_dot.insert_axis(Axis(1));
        ds *= &c.probs;
        ds *= scale;
        let dq = ds.dot(&c.k);
        let dk = ds.t().dot(&c.q);

        dx = dx + dq.dot(&p.wq.t()) + dk.dot(&p.wk.t()) + dv.dot(&p.wv.t());
        heads.push(HeadParams {
            wq: x.t().dot(&dq),
            wk: x.t().dot(&dk),
            wv: x.t().dot(&dv),
        });
    }
    Ok(BlockGradients { dx, heads, dwz })
}
