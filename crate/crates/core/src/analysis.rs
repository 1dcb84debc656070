//! Exact checks of the analytic claims: per-head sparsity bound, block-level
//! dot-product bound, FLOP projections over image resolutions, and the head
//! diversity statistic.
//!
//! Logarithms are natural. The FLOP unit is a query/key dot product of width
//! `d/h`, i.e. `(d/h) * sum_i |Omega_i|` multiply-accumulates per block.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskgen::{fibottention_masks, HeadMaskConfig, SupportSet, Variant};
use crate::seqcore::{modified_wythoff_pair, wythoff_pair, PHI, PSI};

const SQRT5: f64 = 2.236_067_977_499_79;

/// Upper bound on `|Omega_w^Fib(a,b)|` over `N` patch tokens:
/// `2N ((ln(sqrt5 w + |a phi - b|) - ln(b - a psi)) / ln phi + 1)`.
/// Only claimed for `1 <= a < b <= w <= N`.
pub fn head_pair_bound(a: u64, b: u64, w: u64, n: u64) -> Result<f64> {
    if !(1 <= a && a < b && b <= w && w <= n) {
        return Err(Error::Domain(format!("need 1 <= a < b <= w <= N, got a={a} b={b} w={w} N={n}")));
    }
    let (a, b, w, n) = (a as f64, b as f64, w as f64, n as f64);
    let num = (SQRT5 * w + (a * PHI - b).abs()).ln() - (b - a * PSI).ln();
    Ok(2.0 * n * (num / PHI.ln() + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockCostBound {
    /// `2 N d (2.08 ln((sqrt5 + 1) w_max) - 1)`
    pub tight: f64,
    /// `4.16 N d ln(3.3 N)`
    pub simplified: f64,
}

/// Block-level bound on `(d/h) sum_i |Omega_i|` for Wythoff heads.
pub fn block_cost_bound(n: usize, d: usize, w_max: usize) -> Result<BlockCostBound> {
    if n == 0 || d == 0 || w_max == 0 {
        return Err(Error::Domain("N, d and w_max must be positive".into()));
    }
    if w_max > n {
        return Err(Error::Domain(format!("w_max {w_max} exceeds N {n}")));
    }
    let (n, d, w) = (n as f64, d as f64, w_max as f64);
    Ok(BlockCostBound {
        tight: 2.0 * n * d * (2.08 * ((SQRT5 + 1.0) * w).ln() - 1.0),
        simplified: 4.16 * n * d * (3.3 * n).ln(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadBound {
    /// 1-based head index (Wythoff row).
    pub head: usize,
    pub a: u64,
    pub b: u64,
    pub window: usize,
    pub measured: usize,
    /// `None` when the head's parameters fall outside the bound's hypotheses.
    pub bound: Option<f64>,
    pub slack: Option<f64>,
    pub pass: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n_patches: usize,
    pub d_model: usize,
    pub heads: usize,
    pub w_min: usize,
    pub w_max: usize,
    pub variant: Variant,
    pub per_head: Vec<HeadBound>,
    /// `(d/h) * sum_i |Omega_i|`
    pub measured_dot_products: f64,
    pub block_bound_tight: f64,
    pub block_bound_simplified: f64,
    pub pass_tight: bool,
    pub pass_simplified: bool,
    pub pass: bool,
}

/// Measures every head of `cfg` against the per-head bound and the block total
/// against both block-level forms.
pub fn verify_bounds(cfg: &HeadMaskConfig, d: usize) -> Result<BoundReport> {
    let stack = fibottention_masks(cfg)?;
    let windows = cfg.windows()?;
    let n = cfg.n_patches;
    let per_head: Vec<HeadBound> = stack
        .base()
        .iter()
        .zip(&windows)
        .enumerate()
        .map(|(i, (mask, &w))| {
            let row = i as u64 + 1;
            let p = match cfg.variant {
                Variant::Wythoff => wythoff_pair(row),
                Variant::ModifiedWythoff => modified_wythoff_pair(row),
            };
            let measured = mask.patch_pair_count();
            match head_pair_bound(p.a, p.b, w as u64, n as u64) {
                Ok(bound) => HeadBound {
                    head: i + 1,
                    a: p.a,
                    b: p.b,
                    window: w,
                    measured,
                    bound: Some(bound),
                    slack: Some(bound - measured as f64),
                    pass: Some(measured as f64 <= bound),
                    note: None,
                },
                Err(e) => HeadBound {
                    head: i + 1,
                    a: p.a,
                    b: p.b,
                    window: w,
                    measured,
                    bound: None,
                    slack: None,
                    pass: None,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect();

    let total: usize = per_head.iter().map(|h| h.measured).sum();
    let measured = d as f64 / cfg.heads as f64 * total as f64;
    let block = block_cost_bound(n, d, cfg.w_max)?;
    let pass_tight = measured <= block.tight;
    let pass_simplified = measured <= block.simplified;
    let heads_pass = per_head.iter().all(|h| h.pass != Some(false));
    Ok(BoundReport {
        n_patches: n,
        d_model: d,
        heads: cfg.heads,
        w_min: cfg.w_min,
        w_max: cfg.w_max,
        variant: cfg.variant,
        per_head,
        measured_dot_products: measured,
        block_bound_tight: block.tight,
        block_bound_simplified: block.simplified,
        pass_tight,
        pass_simplified,
        pass: heads_pass && pass_tight && pass_simplified,
    })
}

/// Mean normalised Frobenius distance between head features:
/// `2/(h(h-1)) sum_{i<j} |Y_i - Y_j| / (|Y_i| + |Y_j|)`.
/// Pairs where both features vanish contribute 0.
pub fn head_diversity(ys: &[Array2<f64>]) -> Result<f64> {
    let h = ys.len();
    if h < 2 {
        return Err(Error::arg(format!("diversity needs at least 2 heads, got {h}")));
    }
    if ys.iter().any(|y| y.dim() != ys[0].dim()) {
        return Err(Error::shape("head features differ in shape"));
    }
    let norms: Vec<f64> = ys.iter().map(frobenius).collect();
    let mut acc = 0.0;
    for i in 0..h {
        for j in i + 1..h {
            let denom = norms[i] + norms[j];
            if denom > 0.0 {
                acc += frobenius(&(&ys[i] - &ys[j])) / denom;
            }
        }
    }
    Ok(2.0 * acc / (h * (h - 1)) as f64)
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityStats {
    pub samples: Vec<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Five-number summary; quartiles interpolate linearly between order statistics.
pub fn diversity_stats(values: &[f64]) -> Result<DiversityStats> {
    if values.is_empty() {
        return Err(Error::arg("no diversity samples"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::arg("diversity samples contain NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    Ok(DiversityStats {
        samples: values.to_vec(),
        min: sorted[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// How head masks are chosen as the token count changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum MaskRule {
    /// `w_max = min(floor(N * num / den), N)` and `w_min` clamped to `w_max`.
    Fibottention {
        w_min: usize,
        w_max_num: usize,
        w_max_den: usize,
        variant: Variant,
    },
    /// Every pair, diagonal included.
    Full,
}

impl MaskRule {
    /// `w_min = 5`, `w_max = 65 N / 196`: the ViT-B setting carried to other resolutions.
    pub fn vit_default() -> Self {
        MaskRule::Fibottention {
            w_min: 5,
            w_max_num: 65,
            w_max_den: 196,
            variant: Variant::Wythoff,
        }
    }

    fn windows_for(&self, n: usize) -> Option<(usize, usize)> {
        match *self {
            MaskRule::Fibottention { w_min, w_max_num, w_max_den, .. } => {
                let w_max = (n * w_max_num / w_max_den).clamp(1, n);
                Some((w_min.clamp(1, w_max), w_max))
            }
            MaskRule::Full => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopRow {
    pub image_side: usize,
    pub patch_size: usize,
    pub n_patches: usize,
    pub w_min: Option<usize>,
    pub w_max: Option<usize>,
    /// `N^2 d`
    pub dense_dot_products: f64,
    /// `(d/h) sum_i |Omega_i|` over patch pairs
    pub sparse_dot_products: f64,
    /// `d (2N + 1)`, reported apart from the ratio
    pub class_token_dot_products: f64,
    /// Multiply-accumulates of `A V`, equal in count to the score products.
    pub value_macs: f64,
    /// Exponentials evaluated by the masked softmax (patch pairs, all heads).
    pub softmax_exps: usize,
    /// `sparse / dense`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopReport {
    pub d_model: usize,
    pub heads: usize,
    pub rule: MaskRule,
    pub rows: Vec<FlopRow>,
}

/// Attention dot-product counts for each `(image_side, patch_size)`.
pub fn flop_projection(
    sweep: &[(usize, usize)],
    d: usize,
    h: usize,
    rule: MaskRule,
) -> Result<FlopReport> {
    if d == 0 || h == 0 {
        return Err(Error::arg("d and h must be positive"));
    }
    let rows = sweep
        .iter()
        .map(|&(side, patch)| {
            if patch == 0 || side % patch != 0 {
                return Err(Error::arg(format!("patch size {patch} does not divide image side {side}")));
            }
            let n = (side / patch).pow(2);
            let (masks, windows): (Vec<SupportSet>, _) = match (rule, rule.windows_for(n)) {
                (MaskRule::Fibottention { variant, .. }, Some((w_min, w_max))) => {
                    let cfg = HeadMaskConfig {
                        heads: h,
                        w_min,
                        w_max,
                        variant,
                        n_patches: n,
                        layers: 1,
                        seed: 0,
                    };
                    (fibottention_masks(&cfg)?.base().to_vec(), Some((w_min, w_max)))
                }
                _ => (vec![SupportSet::full(n); h], None),
            };
            let pairs: usize = masks.iter().map(SupportSet::patch_pair_count).sum();
            let per_pair = d as f64 / h as f64;
            let dense = (n * n) as f64 * d as f64;
            let sparse = per_pair * pairs as f64;
            Ok(FlopRow {
                image_side: side,
                patch_size: patch,
                n_patches: n,
                w_min: windows.map(|w| w.0),
                w_max: windows.map(|w| w.1),
                dense_dot_products: dense,
                sparse_dot_products: sparse,
                class_token_dot_products: d as f64 * (2 * n + 1) as f64,
                value_macs: sparse,
                softmax_exps: pairs,
                ratio: sparse / dense,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FlopReport { d_model: d, heads: h, rule, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn head_pair_bound_examples() {
        let b = head_pair_bound(1, 2, 5, 196).unwrap();
        assert!((b - 1601.96).abs() < 0.01);
        assert!(1546.0 <= b);
        assert!(head_pair_bound(4, 7, 10, 196).unwrap() >= 762.0);
        assert!(head_pair_bound(1, 2, 2, 196).unwrap() >= 778.0);
        assert!(matches!(head_pair_bound(0, 1, 5, 196), Err(Error::Domain(_))));
        assert!(head_pair_bound(2, 2, 5, 196).is_err());
        assert!(head_pair_bound(1, 6, 5, 196).is_err());
        assert!(head_pair_bound(1, 2, 200, 196).is_err());
    }

    #[test]
    fn block_cost_bound_examples() {
        let t = block_cost_bound(196, 768, 65).unwrap();
        assert!((t.simplified - 4.05e6).abs() < 0.01e6);
        assert!(588_288.0 <= t.tight && t.tight <= t.simplified);
        let one = block_cost_bound(1, 1, 1).unwrap();
        assert!((one.simplified - 4.16 * 3.3f64.ln()).abs() < 1e-12);
        assert!(one.simplified > 0.0);
        assert!(block_cost_bound(10, 8, 11).is_err());
    }

    #[test]
    fn default_report_passes() {
        let r = verify_bounds(&HeadMaskConfig::vit_base(), 768).unwrap();
        assert_eq!(r.measured_dot_products, 588_288.0);
        assert!(r.pass && r.pass_tight && r.pass_simplified);
        assert_eq!(r.per_head.len(), 12);
        assert!(r.per_head.iter().all(|h| h.pass == Some(true)));
    }

    #[test]
    fn single_head_report() {
        let cfg = HeadMaskConfig { heads: 1, ..HeadMaskConfig::vit_base() };
        let r = verify_bounds(&cfg, 64).unwrap();
        assert_eq!(r.per_head.len(), 1);
        assert_eq!(r.per_head[0].measured, 1546);
        assert!(r.pass);
    }

    #[test]
    fn modified_first_head_is_annotated() {
        let cfg = HeadMaskConfig { variant: Variant::ModifiedWythoff, ..HeadMaskConfig::vit_base() };
        let r = verify_bounds(&cfg, 768).unwrap();
        assert_eq!(r.per_head[0].bound, None);
        assert!(r.per_head[0].note.is_some());
    }

    #[test]
    fn diversity_examples() {
        let y = array![[1.0, 2.0], [3.0, -1.0]];
        assert_eq!(head_diversity(&[y.clone(), y.clone(), y.clone()]).unwrap(), 0.0);
        assert!((head_diversity(&[y.clone(), -&y]).unwrap() - 1.0).abs() < 1e-15);
        let a = array![[1.0, 0.0], [0.0, 0.0]];
        let b = array![[0.0, 1.0], [0.0, 0.0]];
        assert!((head_diversity(&[a, b]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(head_diversity(std::slice::from_ref(&y)).is_err());
        let z = Array2::zeros((2, 2));
        assert_eq!(head_diversity(&[z.clone(), z]).unwrap(), 0.0);
    }

    #[test]
    fn stats_examples() {
        let s = diversity_stats(&[0.4]).unwrap();
        assert!([s.min, s.q1, s.median, s.q3, s.max].iter().all(|&v| v == 0.4));
        let s = diversity_stats(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let s = diversity_stats(&[0.7; 6]).unwrap();
        assert_eq!(s.max - s.min, 0.0);
        assert!(diversity_stats(&[]).is_err());
        let s = diversity_stats(&[1.0, 2.0]).unwrap();
        assert_eq!(s.median, 1.5);
    }

    #[test]
    fn flop_examples() {
        let r = flop_projection(&[(224, 16)], 768, 12, MaskRule::vit_default()).unwrap();
        assert_eq!(r.rows[0].n_patches, 196);
        assert!((r.rows[0].ratio - 0.0199).abs() < 5e-4);
        let full = flop_projection(&[(224, 16), (64, 8)], 768, 12, MaskRule::Full).unwrap();
        assert!(full.rows.iter().all(|row| row.ratio == 1.0));
        let sweep = flop_projection(&[(224, 16), (448, 16), (896, 16)], 768, 12, MaskRule::vit_default()).unwrap();
        let ratios: Vec<_> = sweep.rows.iter().map(|r| r.ratio).collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
        assert!(flop_projection(&[(100, 16)], 768, 12, MaskRule::Full).is_err());
    }
}
