use std::collections::BTreeMap;
use std::fmt::Write as _;

use fibottention::export::{coordinate_csv, pbm, to_json};
use fibottention::{
    diversity_stats, fibottention_block_forward, fibottention_masks, grid_pruning_ratio, head_diversity, head_outputs,
    local_window_mask, modified_wythoff_pair, overlap_histogram, pruning_ratio, verify_bounds,
    wythoff_pair, AttentionBlockParams, BoundReport, HeadMaskConfig, SupportSet,
};
use ndarray::Array2;
use serde::Serialize;

use crate::config::{Family, Format, RunConfig, Table, VariantArg};
use crate::failure::Failure;
use crate::gradcheck::max_gradient_error;
use crate::masks::{layer_masks, Streams};
use crate::output::{emit, ensure_dir, paint, write_atomic, write_manifest};

const TABLE_WINDOWS: [usize; 15] = [2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20, 40, 80, 120, 160];

pub fn mask(cfg: &RunConfig) -> Result<(), Failure> {
    let dir = cfg.out.as_deref().ok_or_else(|| Failure::usage("mask needs --out"))?;
    let masks = layer_masks(cfg)?;
    ensure_dir(dir)?;
    let mut written = 0;
    match cfg.format {
        Format::Pbm => {
            for (l, layer) in masks.iter().enumerate() {
                for (h, m) in layer.iter().enumerate() {
                    write_atomic(&dir.join(format!("layer{l:02}_head{h:02}.pbm")), pbm(m).as_bytes())?;
                    written += 1;
                }
            }
        }
        Format::Csv => {
            let rows = masks
                .iter()
                .enumerate()
                .flat_map(|(l, layer)| layer.iter().enumerate().map(move |(h, m)| (l, h, m)));
            write_atomic(&dir.join("masks.csv"), coordinate_csv(rows).as_bytes())?;
            written = 1;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Entry<'a> {
                layer: usize,
                head: usize,
                pairs: usize,
                mask: &'a SupportSet,
            }
            let entries: Vec<Entry> = masks
                .iter()
                .enumerate()
                .flat_map(|(l, layer)| {
                    layer.iter().enumerate().map(move |(h, m)| Entry {
                        layer: l,
                        head: h,
                        pairs: m.patch_pair_count(),
                        mask: m,
                    })
                })
                .collect();
            write_atomic(&dir.join("masks.json"), to_json(&entries).as_bytes())?;
            written = 1;
        }
    }
    write_manifest(dir, cfg)?;
    println!("wrote {written} file(s) and manifest.json to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct HeadCount {
    head: usize,
    window: Option<usize>,
    a: Option<u64>,
    b: Option<u64>,
    pairs: usize,
}

#[derive(Serialize)]
struct StatsReport {
    n_patches: usize,
    heads: usize,
    layers: usize,
    mask: Family,
    pruning_ratio: f64,
    grid_pruning_ratio: f64,
    per_head: Vec<HeadCount>,
    /// offset -> number of heads using it
    overlap_histogram: BTreeMap<usize, usize>,
}

#[derive(Serialize)]
struct TableRow {
    window: usize,
    with_diagonal: f64,
    without_diagonal: f64,
}

pub fn stats(cfg: &RunConfig) -> Result<(), Failure> {
    if let Some(Table::LocalWindow) = cfg.table {
        return local_window_table(cfg);
    }
    // the layer shuffle only permutes heads, so layer 0 carries every statistic
    let masks = layer_masks(cfg)?.swap_remove(0);
    let report = StatsReport {
        n_patches: cfg.n_patches,
        heads: cfg.heads,
        layers: cfg.layers,
        mask: cfg.mask.clone(),
        pruning_ratio: pruning_ratio(&masks)?,
        grid_pruning_ratio: grid_pruning_ratio(&masks)?,
        per_head: head_counts(cfg, &masks)?,
        overlap_histogram: overlap_histogram(&masks),
    };
    let body = match cfg.format {
        Format::Json => to_json(&report),
        _ => render_stats(&report),
    };
    emit(cfg, stats_name(cfg.format), &body)
}

/// Fibottention heads are listed by their unshuffled mask, with the Wythoff row.
fn head_counts(cfg: &RunConfig, layer0: &[SupportSet]) -> Result<Vec<HeadCount>, Failure> {
    if cfg.mask != Family::Fibottention {
        let windows = cfg.head_config().windows().ok().filter(|_| cfg.mask.uses_head_windows());
        return Ok(layer0
            .iter()
            .enumerate()
            .map(|(i, m)| HeadCount {
                head: i,
                window: windows.as_ref().map(|w| w[i]),
                a: None,
                b: None,
                pairs: m.patch_pair_count(),
            })
            .collect());
    }
    let stack = fibottention_masks(&cfg.head_config())?;
    let windows = cfg.head_config().windows()?;
    Ok(stack
        .base()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let row = i as u64 + 1;
            let p = match cfg.variant {
                VariantArg::Wythoff => wythoff_pair(row),
                VariantArg::Modified => modified_wythoff_pair(row),
            };
            HeadCount { head: i, window: Some(windows[i]), a: Some(p.a), b: Some(p.b), pairs: m.patch_pair_count() }
        })
        .collect())
}

fn stats_name(format: Format) -> &'static str {
    match format {
        Format::Json => "stats.json",
        _ => "stats.txt",
    }
}

fn render_stats(r: &StatsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "N={} heads={} layers={}", r.n_patches, r.heads, r.layers);
    let _ = writeln!(s, "pruning ratio: {:.2}%", r.pruning_ratio);
    let _ = writeln!(s, "grid pruning ratio (class token included): {:.2}%", r.grid_pruning_ratio);
    let _ = writeln!(s, "head  window  a     b     pairs");
    let opt = |v: Option<u64>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
    for h in &r.per_head {
        let _ = writeln!(
            s,
            "{:<5} {:<7} {:<5} {:<5} {}",
            h.head,
            opt(h.window.map(|w| w as u64)),
            opt(h.a),
            opt(h.b),
            h.pairs
        );
    }
    let _ = writeln!(s, "overlap histogram (offset: heads using it)");
    for (k, v) in &r.overlap_histogram {
        let _ = writeln!(s, "{k}: {v}");
    }
    s
}

fn local_window_table(cfg: &RunConfig) -> Result<(), Failure> {
    let n = cfg.n_patches;
    let ratio = |w, diag| -> Result<f64, Failure> { Ok(pruning_ratio(&[local_window_mask(n, w, diag)?])?) };
    let rows = TABLE_WINDOWS
        .iter()
        .filter(|&&w| w < n)
        .map(|&w| Ok(TableRow { window: w, with_diagonal: ratio(w, true)?, without_diagonal: ratio(w, false)? }))
        .collect::<Result<Vec<_>, Failure>>()?;
    let body = match cfg.format {
        Format::Json => to_json(&rows),
        _ => {
            let mut s = format!("local window pruning ratio, N={n}\nwindow  with-diagonal  without-diagonal\n");
            for r in &rows {
                let _ = writeln!(s, "{:<7} {:<14.2} {:.2}", r.window, r.with_diagonal, r.without_diagonal);
            }
            s
        }
    };
    emit(cfg, stats_name(cfg.format), &body)
}

pub fn bounds(cfg: &RunConfig) -> Result<(), Failure> {
    let reports: Vec<BoundReport> = if cfg.sweep.is_empty() {
        vec![verify_bounds(&cfg.head_config(), cfg.d_model)?]
    } else {
        cfg.sweep
            .iter()
            .map(|&n| {
                let w_max = (n * 65 / 196).clamp(1, n);
                let hc = HeadMaskConfig { n_patches: n, w_max, w_min: 5.min(w_max), ..cfg.head_config() };
                verify_bounds(&hc, cfg.d_model)
            })
            .collect::<Result<_, _>>()?
    };
    let body = if cfg.sweep.is_empty() { to_json(&reports[0]) } else { to_json(&reports) };
    emit(cfg, "bounds.json", &body)?;
    let failed: Vec<usize> = reports.iter().filter(|r| !r.pass).map(|r| r.n_patches).collect();
    if failed.is_empty() {
        eprintln!("{} all bounds hold", paint("ok:", "32"));
        Ok(())
    } else {
        Err(Failure::Violation(format!("bound violated for N = {failed:?}")))
    }
}

#[derive(Serialize)]
struct ForwardReport {
    rows: usize,
    cols: usize,
    sum: f64,
    abs_sum: f64,
    fnv1a: String,
    dot_products: usize,
    max_gradient_error: Option<f64>,
}

pub fn forward(cfg: &RunConfig) -> Result<(), Failure> {
    let masks = layer_masks(cfg)?.swap_remove(0);
    let mut streams = Streams::new(cfg.seed);
    let params = AttentionBlockParams::seeded(cfg.d_model, cfg.heads, streams.params)?;
    let x = input(cfg, &mut streams);
    let out = fibottention_block_forward(x.view(), &params, &masks)?;
    let max_gradient_error = if cfg.grad_check {
        let upstream = Array2::from_shape_simple_fn(x.dim(), || streams.input.uniform(-1.0, 1.0));
        Some(max_gradient_error(&x, &params, &masks, &upstream)?)
    } else {
        None
    };
    let d_head = cfg.d_model / cfg.heads;
    let report = ForwardReport {
        rows: out.nrows(),
        cols: out.ncols(),
        sum: out.sum(),
        abs_sum: out.iter().map(|v| v.abs()).sum(),
        fnv1a: format!("{:016x}", fnv1a(&out)),
        dot_products: d_head * masks.iter().map(SupportSet::grid_pair_count).sum::<usize>(),
        max_gradient_error,
    };
    let body = match cfg.format {
        Format::Json => to_json(&report),
        _ => {
            let mut s = format!(
                "output {}x{} sum={:.12e} abs_sum={:.12e} fnv1a={}\ndot products: {}\n",
                report.rows, report.cols, report.sum, report.abs_sum, report.fnv1a, report.dot_products
            );
            if let Some(e) = report.max_gradient_error {
                let _ = writeln!(s, "max finite-difference error: {e:.3e}");
            }
            s
        }
    };
    emit(cfg, if cfg.format == Format::Json { "forward.json" } else { "forward.txt" }, &body)
}

pub fn diversity(cfg: &RunConfig) -> Result<(), Failure> {
    if cfg.heads < 2 {
        return Err(Failure::usage("diversity needs --heads >= 2"));
    }
    if cfg.samples == 0 {
        return Err(Failure::usage("--samples must be >= 1"));
    }
    let mut masks = layer_masks(cfg)?.swap_remove(0);
    let mut streams = Streams::new(cfg.seed);
    let mut params = AttentionBlockParams::seeded(cfg.d_model, cfg.heads, streams.params)?;
    if cfg.identical_heads {
        let first = params.heads[0].clone();
        params.heads.iter_mut().for_each(|h| *h = first.clone());
        let m0 = masks[0].clone();
        masks.iter_mut().for_each(|m| *m = m0.clone());
    }
    let values = (0..cfg.samples)
        .map(|_| {
            let x = input(cfg, &mut streams);
            Ok(head_diversity(&head_outputs(x.view(), &params, &masks)?)?)
        })
        .collect::<Result<Vec<f64>, Failure>>()?;
    emit(cfg, "diversity.json", &to_json(&diversity_stats(&values)?))
}

fn input(cfg: &RunConfig, streams: &mut Streams) -> Array2<f64> {
    let dim = (cfg.n_patches + 1, cfg.d_model);
    if cfg.zero_input {
        Array2::zeros(dim)
    } else {
        Array2::from_shape_simple_fn(dim, || streams.input.uniform(-1.0, 1.0))
    }
}

fn fnv1a(m: &Array2<f64>) -> u64 {
    m.iter().flat_map(|v| v.to_bits().to_le_bytes()).fold(0xcbf29ce484222325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}
