//! Sparse attention masks built from rows of the Wythoff array, the baseline
//! mask families they are compared against, a reference masked multi-head
//! attention block with an analytic backward pass, and exact analysis of
//! pruning ratios, dot-product bounds and head diversity.
//!
//! Module map:
//!
//! - [`seqcore`]: dilation sequences (generalized Fibonacci, Wythoff rows,
//!   Binet evaluation, ablation families).
//! - [`maskgen`]: per-head support sets, layer shuffling, baseline masks and
//!   sparsity statistics.
//! - [`attnkernel`]: masked scores, masked softmax, block forward and VJP.
//! - [`analysis`]: sparsity/complexity bounds, FLOP projection, diversity.
//! - [`export`]: PBM / CSV / JSON writers.

pub mod analysis;
pub mod attnkernel;
pub mod error;
pub mod export;
pub mod maskgen;
pub mod rng;
pub mod seqcore;

pub use analysis::{
    diversity_stats, flop_projection, head_diversity, head_pair_bound, block_cost_bound,
    verify_bounds, BoundReport, DiversityStats, FlopReport, MaskRule, BlockCostBound,
};
pub use attnkernel::{
    attention_vjp, dense_block_forward, fibottention_block_forward, head_outputs,
    masked_scores, masked_softmax, AttentionBlockParams, BlockGradients, HeadParams,
    HeadScores,
};
pub use error::{Error, Result};
pub use maskgen::{
    bigbird_mask, dilated_heads_masks, fibottention_masks, grid_pruning_ratio,
    head_window_sizes, local_window_mask, offset_family_masks, overlap_histogram,
    pruning_ratio, random_mask, strided_mask, support_from_sequence, HeadMaskConfig,
    MaskStack, SupportSet, Variant,
};
pub use rng::SplitMix64;
pub use seqcore::{
    binet, binet_from_first, family_sequence, generalized_fibonacci, modified_wythoff_pair,
    wythoff_pair, DilationSequence, FibParams, SequenceRule, PHI, PSI,
};
