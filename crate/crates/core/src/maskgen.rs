//! Sparse attention support sets.
//!
//! Masks live on the `(N+1) x (N+1)` token grid: index 0 is the class token
//! and patch tokens are `1..=N`. A [`SupportSet`] stores the diagonal part
//! symbolically (a set of offsets `o`, each meaning the two diagonals
//! `|j - k| = o`) and keeps any irregular pairs (random links, global
//! tokens) in an explicit list disjoint from the diagonal part.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::seqcore::{
    family_sequence, generalized_fibonacci, modified_wythoff_pair, wythoff_pair,
    DilationSequence, SequenceRule,
};

/// Admissible query/key pairs of one head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSet {
    n_patches: usize,
    offsets: Vec<usize>,
    include_diagonal: bool,
    include_class_token: bool,
    explicit_pairs: Option<BTreeSet<(usize, usize)>>,
}

impl SupportSet {
    /// Diagonal-structured mask. Offsets are deduplicated and anything outside
    /// `1..=N-1` is dropped.
    pub fn from_offsets(
        n_patches: usize,
        offsets: impl IntoIterator<Item = usize>,
        include_diagonal: bool,
        include_class_token: bool,
    ) -> Self {
        let set: BTreeSet<usize> = offsets
            .into_iter()
            .filter(|&o| o >= 1 && o < n_patches)
            .collect();
        Self {
            n_patches,
            offsets: set.into_iter().collect(),
            include_diagonal,
            include_class_token,
            explicit_pairs: None,
        }
    }

    /// Every pair of the grid, class token included.
    pub fn full(n_patches: usize) -> Self {
        Self::from_offsets(n_patches, 1..n_patches, true, true)
    }

    /// Adds irregular patch pairs (1-based grid indices). Pairs already covered
    /// by the diagonal part are ignored.
    pub fn with_explicit_pairs(mut self, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let n = self.n_patches;
        let mut set = self.explicit_pairs.take().unwrap_or_default();
        for (j, k) in pairs {
            assert!(
                (1..=n).contains(&j) && (1..=n).contains(&k),
                "explicit pair ({j},{k}) outside patch grid 1..={n}"
            );
            if !self.structured_contains(j, k) {
                set.insert((j, k));
            }
        }
        self.explicit_pairs = if set.is_empty() { None } else { Some(set) };
        self
    }

    pub fn with_class_token(mut self, include: bool) -> Self {
        self.include_class_token = include;
        self
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    /// Side of the token grid, `N + 1`.
    pub fn grid_size(&self) -> usize {
        self.n_patches + 1
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn include_diagonal(&self) -> bool {
        self.include_diagonal
    }

    pub fn include_class_token(&self) -> bool {
        self.include_class_token
    }

    pub fn explicit_pairs(&self) -> Option<&BTreeSet<(usize, usize)>> {
        self.explicit_pairs.as_ref()
    }

    fn structured_contains(&self, j: usize, k: usize) -> bool {
        let d = j.abs_diff(k);
        if d == 0 {
            self.include_diagonal
        } else {
            self.offsets.binary_search(&d).is_ok()
        }
    }

    /// Membership on the token grid (index 0 = class token).
    pub fn contains(&self, j: usize, k: usize) -> bool {
        let g = self.grid_size();
        if j >= g || k >= g {
            return false;
        }
        if j == 0 || k == 0 {
            return self.include_class_token;
        }
        self.structured_contains(j, k)
            || self
                .explicit_pairs
                .as_ref()
                .is_some_and(|s| s.contains(&(j, k)))
    }

    /// Admissible key indices of query row `j`, ascending.
    pub fn row(&self, j: usize) -> Vec<usize> {
        let n = self.n_patches;
        if j == 0 {
            return if self.include_class_token {
                (0..=n).collect()
            } else {
                Vec::new()
            };
        }
        let mut cols = Vec::with_capacity(2 * self.offsets.len() + 2);
        if self.include_class_token {
            cols.push(0);
        }
        for &o in self.offsets.iter().rev() {
            if j > o {
                cols.push(j - o);
            }
        }
        if self.include_diagonal {
            cols.push(j);
        }
        for &o in &self.offsets {
            if j + o <= n {
                cols.push(j + o);
            }
        }
        if let Some(extra) = &self.explicit_pairs {
            cols.extend(extra.range((j, 0)..=(j, usize::MAX)).map(|&(_, k)| k));
            cols.sort_unstable();
        }
        cols
    }

    /// `|Omega|` restricted to the `N x N` patch grid.
    pub fn patch_pair_count(&self) -> usize {
        let n = self.n_patches;
        let diag: usize = self.offsets.iter().map(|&o| 2 * (n - o)).sum();
        diag + if self.include_diagonal { n } else { 0 }
            + self.explicit_pairs.as_ref().map_or(0, BTreeSet::len)
    }

    /// Admissible pairs on the whole `(N+1) x (N+1)` grid.
    pub fn grid_pair_count(&self) -> usize {
        self.patch_pair_count() + if self.include_class_token { 2 * self.n_patches + 1 } else { 0 }
    }

    pub fn to_dense(&self) -> Array2<bool> {
        let g = self.grid_size();
        let mut m = Array2::from_elem((g, g), false);
        for j in 0..g {
            for k in self.row(j) {
                m[[j, k]] = true;
            }
        }
        m
    }

    pub fn is_symmetric(&self) -> bool {
        self.explicit_pairs
            .as_ref()
            .is_none_or(|s| s.iter().all(|&(j, k)| s.contains(&(k, j))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Wythoff,
    ModifiedWythoff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadMaskConfig {
    pub heads: usize,
    pub w_min: usize,
    pub w_max: usize,
    pub variant: Variant,
    pub n_patches: usize,
    pub layers: usize,
    pub seed: u64,
}

impl HeadMaskConfig {
    /// ViT-B on 224px images with 16px patches.
    pub fn vit_base() -> Self {
        Self {
            heads: 12,
            w_min: 5,
            w_max: 65,
            variant: Variant::Wythoff,
            n_patches: 196,
            layers: 1,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.layers == 0 {
            return Err(Error::arg("heads and layers must be >= 1"));
        }
        if self.n_patches < 2 {
            return Err(Error::arg("need at least 2 patch tokens"));
        }
        if !(1 <= self.w_min && self.w_min <= self.w_max && self.w_max <= self.n_patches) {
            return Err(Error::arg(format!(
                "window bounds must satisfy 1 <= w_min ({}) <= w_max ({}) <= N ({})",
                self.w_min, self.w_max, self.n_patches
            )));
        }
        Ok(())
    }

    pub fn windows(&self) -> Result<Vec<usize>> {
        head_window_sizes(self.heads, self.w_min, self.w_max)
    }
}

/// Per-layer, per-head masks after the layer shuffle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskStack {
    base: Vec<SupportSet>,
    /// `permutations[l][j]` is the (0-based) base mask used by head `j` of layer `l`.
    permutations: Vec<Vec<usize>>,
}

impl MaskStack {
    /// Unshuffled masks `Omega_1..Omega_h` in head order.
    pub fn base(&self) -> &[SupportSet] {
        &self.base
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.permutations
    }

    pub fn layers(&self) -> usize {
        self.permutations.len()
    }

    pub fn heads(&self) -> usize {
        self.base.len()
    }

    pub fn mask(&self, layer: usize, head: usize) -> &SupportSet {
        &self.base[self.permutations[layer][head]]
    }

    pub fn layer(&self, layer: usize) -> Vec<&SupportSet> {
        self.permutations[layer].iter().map(|&p| &self.base[p]).collect()
    }

    pub fn layer_owned(&self, layer: usize) -> Vec<SupportSet> {
        self.layer(layer).into_iter().cloned().collect()
    }
}

/// `w_i = w_min + floor((w_max - w_min)(i-1)/(h-1))`, or `[w_min]` for one head.
pub fn head_window_sizes(h: usize, w_min: usize, w_max: usize) -> Result<Vec<usize>> {
    if h == 0 {
        return Err(Error::arg("need at least one head"));
    }
    if w_min > w_max {
        return Err(Error::arg(format!("w_min {w_min} exceeds w_max {w_max}")));
    }
    if h == 1 {
        return Ok(vec![w_min]);
    }
    Ok((0..h)
        .map(|i| w_min + (w_max - w_min) * i / (h - 1))
        .collect())
}

/// Support of `|j - k| in seq, |j - k| <= w` on `N` patches.
pub fn support_from_sequence(
    seq: &DilationSequence,
    w: usize,
    n_patches: usize,
    include_class_token: bool,
) -> Result<SupportSet> {
    if n_patches < 2 {
        return Err(Error::arg("need at least 2 patch tokens"));
    }
    let offsets = seq
        .elements()
        .iter()
        .filter(|&&o| o >= 1 && o <= w as u64)
        .map(|&o| o as usize);
    Ok(SupportSet::from_offsets(n_patches, offsets, false, include_class_token))
}

fn base_masks(cfg: &HeadMaskConfig) -> Result<Vec<SupportSet>> {
    let windows = cfg.windows()?;
    windows
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let row = i as u64 + 1;
            let pair = match cfg.variant {
                Variant::Wythoff => wythoff_pair(row),
                Variant::ModifiedWythoff => modified_wythoff_pair(row),
            };
            let seq = generalized_fibonacci(pair.a, pair.b, w as u64);
            support_from_sequence(&seq, w, cfg.n_patches, true)
        })
        .collect()
}

/// Head masks for every layer: Wythoff rows with interpolated windows, then a
/// seeded permutation per layer (layer `l` uses sub-seed `seed ^ l`).
pub fn fibottention_masks(cfg: &HeadMaskConfig) -> Result<MaskStack> {
    cfg.validate()?;
    let base = base_masks(cfg)?;
    let permutations = (0..cfg.layers)
        .map(|l| {
            let mut rng = SplitMix64::new(cfg.seed ^ l as u64);
            let mut perm: Vec<usize> = (0..cfg.heads).collect();
            rng.shuffle(&mut perm);
            perm
        })
        .collect();
    Ok(MaskStack { base, permutations })
}

/// `|j - k| <= w`, with or without the main diagonal.
pub fn local_window_mask(n_patches: usize, w: usize, include_diagonal: bool) -> Result<SupportSet> {
    if n_patches == 0 || w > n_patches - 1 {
        return Err(Error::arg(format!("window {w} must be <= N-1 = {}", n_patches.saturating_sub(1))));
    }
    Ok(SupportSet::from_offsets(n_patches, 1..=w, include_diagonal, true))
}

/// `round(keep_fraction * N^2)` distinct patch pairs drawn uniformly (diagonal included).
pub fn random_mask(
    n_patches: usize,
    keep_fraction: f64,
    force_class_token: bool,
    seed: u64,
) -> Result<SupportSet> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(Error::arg(format!("keep fraction {keep_fraction} outside [0, 1]")));
    }
    let total = n_patches * n_patches;
    let k = (keep_fraction * total as f64).round() as usize;
    let mut rng = SplitMix64::new(seed);
    let pairs = rng
        .sample_distinct(total, k)
        .into_iter()
        .map(|idx| (idx / n_patches + 1, idx % n_patches + 1));
    Ok(SupportSet::from_offsets(n_patches, std::iter::empty(), false, force_class_token)
        .with_explicit_pairs(pairs))
}

/// Local window of `w` tokens around each query (diagonal plus offsets
/// `1..w`), `g` global tokens (the class token first, then leading patch
/// tokens) and `r` random links drawn from the pairs the union leaves out.
pub fn bigbird_mask(n_patches: usize, w: usize, g: usize, r: usize, seed: u64) -> Result<SupportSet> {
    if n_patches < 1 {
        return Err(Error::arg("need at least one patch token"));
    }
    let n = n_patches;
    let mut mask = SupportSet::from_offsets(n, 1..w, true, g >= 1);
    let globals = g.saturating_sub(1).min(n);
    let global_pairs = (1..=globals).flat_map(|t| (1..=n).flat_map(move |k| [(t, k), (k, t)]));
    mask = mask.with_explicit_pairs(global_pairs);

    let free: Vec<(usize, usize)> = (1..=n)
        .flat_map(|j| (1..=n).map(move |k| (j, k)))
        .filter(|&(j, k)| !mask.contains(j, k))
        .collect();
    let take = r.min(free.len());
    let mut rng = SplitMix64::new(seed);
    let picked = rng.sample_distinct(free.len(), take).into_iter().map(|i| free[i]);
    Ok(mask.with_explicit_pairs(picked))
}

/// `|j - k| <= local` or `j - k` divisible by `stride`.
pub fn strided_mask(n_patches: usize, stride: usize, local: usize) -> Result<SupportSet> {
    if stride == 0 {
        return Err(Error::arg("stride must be >= 1"));
    }
    let strided = (1..).map(|m| m * stride).take_while(|&o| o < n_patches);
    Ok(SupportSet::from_offsets(n_patches, (1..=local).chain(strided), true, true))
}

/// Constant-dilation heads `(c n)`; with `variable` head `i` (1-based) is
/// shifted to `(c n + i - 1)`.
pub fn dilated_heads_masks(
    c: usize,
    variable: bool,
    windows: &[usize],
    n_patches: usize,
) -> Result<Vec<SupportSet>> {
    if c == 0 {
        return Err(Error::arg("dilation factor must be >= 1"));
    }
    windows
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let rule = if variable {
                SequenceRule::LinearShifted { step: c as u64, shift: i as u64 }
            } else {
                SequenceRule::Linear { step: c as u64 }
            };
            sequence_mask(rule, w, n_patches)
        })
        .collect()
}

/// Head `i` (1-based) uses `Fib(i + delta, i + delta)` within its window.
pub fn offset_family_masks(delta: usize, windows: &[usize], n_patches: usize) -> Result<Vec<SupportSet>> {
    windows
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let start = (i + 1 + delta) as u64;
            let seq = generalized_fibonacci(start, start, w as u64);
            support_from_sequence(&seq, w, n_patches, true)
        })
        .collect()
}

/// Mask from one of the ablation sequence families; a family with no element
/// inside the window gives an empty (class-token only) mask.
pub fn sequence_mask(rule: SequenceRule, w: usize, n_patches: usize) -> Result<SupportSet> {
    match family_sequence(rule, w as u64) {
        Ok(seq) => support_from_sequence(&seq, w, n_patches, true),
        Err(Error::EmptySequence(_)) => {
            Ok(SupportSet::from_offsets(n_patches, std::iter::empty(), false, true))
        }
        Err(e) => Err(e),
    }
}

fn shared_n(masks: &[SupportSet]) -> Result<usize> {
    let first = masks.first().ok_or_else(|| Error::arg("mask list is empty"))?;
    let n = first.n_patches();
    if masks.iter().any(|m| m.n_patches() != n) {
        return Err(Error::arg("masks have different patch counts"));
    }
    Ok(n)
}

/// Percentage of the `N x N` patch grid excluded, averaged over heads. The
/// class-token row and column are left out of numerator and denominator.
pub fn pruning_ratio(masks: &[SupportSet]) -> Result<f64> {
    let n = shared_n(masks)? as f64;
    let mean = masks.iter().map(|m| m.patch_pair_count() as f64).sum::<f64>() / masks.len() as f64;
    Ok(100.0 * (1.0 - mean / (n * n)))
}

/// Percentage of the full `(N+1) x (N+1)` grid excluded, class token included.
pub fn grid_pruning_ratio(masks: &[SupportSet]) -> Result<f64> {
    let g = (shared_n(masks)? + 1) as f64;
    let mean = masks.iter().map(|m| m.grid_pair_count() as f64).sum::<f64>() / masks.len() as f64;
    Ok(100.0 * (1.0 - mean / (g * g)))
}

/// For each offset, how many heads use it.
pub fn overlap_histogram(masks: &[SupportSet]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for m in masks {
        for &o in m.offsets() {
            *hist.entry(o).or_insert(0) += 1;
        }
    }
    hist
}
