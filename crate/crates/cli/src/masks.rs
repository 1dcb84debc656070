use fibottention::{
    bigbird_mask, dilated_heads_masks, fibottention_masks, head_window_sizes, local_window_mask,
    maskgen::sequence_mask, offset_family_masks, random_mask, strided_mask, SequenceRule,
    SplitMix64, SupportSet,
};

use crate::config::{Family, RunConfig};
use crate::failure::Failure;

/// Independent generators derived from the single `--seed`.
pub struct Streams {
    pub masks: SplitMix64,
    pub params: u64,
    pub input: SplitMix64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let mut root = SplitMix64::new(seed);
        let masks = SplitMix64::new(root.next_u64());
        let params = root.next_u64();
        let input = SplitMix64::new(root.next_u64());
        Self { masks, params, input }
    }
}

/// `masks[layer][head]` for the configured family.
pub fn layer_masks(cfg: &RunConfig) -> Result<Vec<Vec<SupportSet>>, Failure> {
    let n = cfg.n_patches;
    if let Family::Fibottention = cfg.mask {
        let stack = fibottention_masks(&cfg.head_config())?;
        return Ok((0..stack.layers()).map(|l| stack.layer_owned(l)).collect());
    }
    let windows = || head_window_sizes(cfg.heads, cfg.w_min, cfg.w_max);
    let mut rng = Streams::new(cfg.seed).masks;
    let mut out = Vec::with_capacity(cfg.layers);
    for _ in 0..cfg.layers {
        let heads = match cfg.mask {
            Family::Fibottention => unreachable!(),
            Family::Linear { step, variable } => dilated_heads_masks(step, variable, &windows()?, n)?,
            Family::FibOffset { delta } => offset_family_masks(delta, &windows()?, n)?,
            Family::Power { base } => per_window(&windows()?, n, SequenceRule::Power { base })?,
            Family::Poly { exponent } => per_window(&windows()?, n, SequenceRule::Poly { exponent })?,
            ref fixed => (0..cfg.heads)
                .map(|_| single(fixed, n, rng.next_u64()))
                .collect::<Result<_, _>>()?,
        };
        out.push(heads);
    }
    Ok(out)
}

fn per_window(windows: &[usize], n: usize, rule: SequenceRule) -> Result<Vec<SupportSet>, Failure> {
    Ok(windows
        .iter()
        .map(|&w| sequence_mask(rule, w, n))
        .collect::<Result<_, _>>()?)
}

fn single(family: &Family, n: usize, seed: u64) -> Result<SupportSet, Failure> {
    Ok(match *family {
        Family::Full => SupportSet::full(n),
        Family::Local { window, diagonal } => local_window_mask(n, window, diagonal)?,
        Family::Random { fraction, diagonal } => random_mask(n, fraction, diagonal, seed)?,
        Family::Bigbird { window, globals, randoms } => bigbird_mask(n, window, globals, randoms, seed)?,
        Family::Strided { stride, local } => strided_mask(n, stride, local)?,
        _ => unreachable!("per-head families are handled by layer_masks"),
    })
}
