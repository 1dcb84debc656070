use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fibottention::{HeadMaskConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Wythoff,
    Modified,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Wythoff => Variant::Wythoff,
            VariantArg::Modified => Variant::ModifiedWythoff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Fibottention,
    Full,
    Local,
    Random,
    Bigbird,
    Strided,
    Linear,
    Power,
    Poly,
    FibOffset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Pbm,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Table {
    LocalWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Mask,
    Stats,
    Bounds,
    Forward,
    Diversity,
}

/// Mask family with every parameter resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Fibottention,
    Full,
    Local { window: usize, diagonal: bool },
    Random { fraction: f64, diagonal: bool },
    Bigbird { window: usize, globals: usize, randoms: usize },
    Strided { stride: usize, local: usize },
    Linear { step: usize, variable: bool },
    Power { base: u64 },
    Poly { exponent: u32 },
    FibOffset { delta: usize },
}

impl Family {
    /// Families whose heads are sized by `w_min..w_max`.
    pub fn uses_head_windows(&self) -> bool {
        matches!(
            self,
            Family::Fibottention
                | Family::Linear { .. }
                | Family::Power { .. }
                | Family::Poly { .. }
                | Family::FibOffset { .. }
        )
    }
}

#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    /// Number of patch tokens N (class token not counted)
    #[arg(long, conflicts_with_all = ["image_side", "patch"])]
    pub n: Option<usize>,
    /// Image side in pixels; N = (side / patch)^2
    #[arg(long, requires = "patch")]
    pub image_side: Option<usize>,
    #[arg(long, requires = "image_side")]
    pub patch: Option<usize>,
    #[arg(long, default_value_t = 12)]
    pub heads: usize,
    /// Smallest head window [default: 5, capped at wmax]
    #[arg(long)]
    pub wmin: Option<usize>,
    /// Largest head window [default: floor(65 N / 196)]
    #[arg(long)]
    pub wmax: Option<usize>,
    #[arg(long, value_enum, default_value_t = VariantArg::Wythoff)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct FamilyArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Fibottention)]
    pub family: FamilyArg,
    /// Window for local and bigbird, local band for strided
    #[arg(long)]
    pub window: Option<usize>,
    /// Keep the main diagonal (local, random)
    #[arg(long)]
    pub diagonal: bool,
    /// Fraction of the N x N grid kept (random)
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Global tokens, the class token counting as the first (bigbird)
    #[arg(long)]
    pub globals: Option<usize>,
    /// Random links (bigbird) [default: N]
    #[arg(long)]
    pub randoms: Option<usize>,
    /// Stride (strided) [default: round(sqrt N)]
    #[arg(long)]
    pub stride: Option<usize>,
    /// Dilation step (linear)
    #[arg(long)]
    pub step: Option<usize>,
    /// Shift head i by i-1 (linear)
    #[arg(long)]
    pub variable: bool,
    /// Base of the power family
    #[arg(long)]
    pub base: Option<u64>,
    /// Exponent of the polynomial family
    #[arg(long)]
    pub exponent: Option<u32>,
    /// Head i starts at Fib(i + delta, i + delta) (fib-offset)
    #[arg(long)]
    pub delta: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output directory; a manifest.json is written next to the results
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fully resolved invocation; serialised as `manifest.json` and accepted by `fibo replay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub n_patches: usize,
    pub image_side: Option<usize>,
    pub patch: Option<usize>,
    pub heads: usize,
    pub w_min: usize,
    pub w_max: usize,
    pub variant: VariantArg,
    pub layers: usize,
    pub seed: u64,
    pub mask: Family,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub d_model: usize,
    pub table: Option<Table>,
    pub sweep: Vec<usize>,
    pub grad_check: bool,
    pub zero_input: bool,
    pub identical_heads: bool,
    pub samples: usize,
}

impl RunConfig {
    pub fn new(command: CommandKind, geo: &GeometryArgs, format: Format, out: Option<PathBuf>) -> Result<Self, Failure> {
        let (n_patches, image_side, patch) = match (geo.n, geo.image_side, geo.patch) {
            (Some(n), _, _) => (n, None, None),
            (None, Some(side), Some(p)) => {
                if p == 0 || side % p != 0 {
                    return Err(Failure::usage(format!("--patch {p} does not divide --image-side {side}")));
                }
                ((side / p).pow(2), Some(side), Some(p))
            }
            _ => (196, None, None),
        };
        if n_patches < 2 {
            return Err(Failure::usage("need at least 2 patch tokens"));
        }
        let w_max = geo.wmax.unwrap_or_else(|| (n_patches * 65 / 196).clamp(1, n_patches));
        let w_min = geo.wmin.unwrap_or_else(|| 5.min(w_max));
        Ok(Self {
            command,
            n_patches,
            image_side,
            patch,
            heads: geo.heads,
            w_min,
            w_max,
            variant: geo.variant,
            layers: geo.layers,
            seed: geo.seed,
            mask: Family::Fibottention,
            format,
            out,
            d_model: 64 * geo.heads,
            table: None,
            sweep: Vec::new(),
            grad_check: false,
            zero_input: false,
            identical_heads: false,
            samples: 0,
        })
    }

    pub fn with_family(mut self, f: &FamilyArgs) -> Result<Self, Failure> {
        let n = self.n_patches;
        self.mask = match f.family {
            FamilyArg::Fibottention => Family::Fibottention,
            FamilyArg::Full => Family::Full,
            FamilyArg::Local => Family::Local { window: f.window.unwrap_or(15), diagonal: f.diagonal },
            FamilyArg::Random => Family::Random { fraction: f.fraction.unwrap_or(0.1), diagonal: f.diagonal },
            FamilyArg::Bigbird => Family::Bigbird {
                window: f.window.unwrap_or(2),
                globals: f.globals.unwrap_or(1),
                randoms: f.randoms.unwrap_or(n),
            },
            FamilyArg::Strided => Family::Strided {
                stride: f.stride.unwrap_or(((n as f64).sqrt().round() as usize).max(1)),
                local: f.window.unwrap_or(1),
            },
            FamilyArg::Linear => Family::Linear { step: f.step.unwrap_or(1), variable: f.variable },
            FamilyArg::Power => Family::Power { base: f.base.unwrap_or(2) },
            FamilyArg::Poly => Family::Poly { exponent: f.exponent.unwrap_or(2) },
            FamilyArg::FibOffset => Family::FibOffset { delta: f.delta.unwrap_or(0) },
        };
        Ok(self)
    }

    pub fn head_config(&self) -> HeadMaskConfig {
        HeadMaskConfig {
            heads: self.heads,
            w_min: self.w_min,
            w_max: self.w_max,
            variant: self.variant.into(),
            n_patches: self.n_patches,
            layers: self.layers,
            seed: self.seed,
        }
    }

    /// Checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), Failure> {
        if self.heads == 0 || self.layers == 0 {
            return Err(Failure::usage("--heads and --layers must be >= 1"));
        }
        if self.mask.uses_head_windows() {
            self.head_config().validate()?;
        }
        if self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Failure::usage(format!(
                "--d-model {} must be a positive multiple of --heads {}",
                self.d_model, self.heads
            )));
        }
        Ok(())
    }
}
