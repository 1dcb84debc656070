//! Fixtures shared by the criterion benches.

use fibottention::{fibottention_masks, AttentionBlockParams, HeadMaskConfig, SplitMix64, SupportSet};

pub struct BlockFixture {
    pub x: Vec<f64>,
    pub rows: usize,
    pub params: AttentionBlockParams,
    pub masks: Vec<SupportSet>,
}

/// Seeded block input for `n` patches, model width `d` and `h` heads, with
/// Fibottention masks under the default window rule.
pub fn block_fixture(n: usize, d: usize, h: usize, seed: u64) -> BlockFixture {
    let w_max = (n * 65 / 196).clamp(1, n);
    let cfg = HeadMaskConfig {
        heads: h,
        w_min: 5.min(w_max),
        w_max,
        n_patches: n,
        seed,
        ..HeadMaskConfig::vit_base()
    };
    let masks = fibottention_masks(&cfg).expect("valid fixture").layer_owned(0);
    let params = AttentionBlockParams::seeded(d, h, seed).expect("d divisible by h");
    let mut rng = SplitMix64::new(seed ^ 0x5eed);
    let x = (0..(n + 1) * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
    BlockFixture { x, rows: n + 1, params, masks }
}
