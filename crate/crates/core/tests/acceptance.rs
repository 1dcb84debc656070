//! Exit criteria. Run with
//! `cargo test -p fibottention --test acceptance -- --nocapture --test-threads=1`
//! to see one PASS/FAIL line per criterion.

mod common;

use std::time::{Duration, Instant};

use common::{dense_oracle_forward, gradient_check, random_matrix, random_support};
use fibottention::export::{coordinate_csv, pbm, to_json};
use fibottention::*;
use ndarray::Array2;

fn report(name: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

#[test]
fn c1_default_pruning_ratio() {
    let start = Instant::now();
    let stack = fibottention_masks(&HeadMaskConfig::vit_base()).unwrap();
    let ratio = pruning_ratio(stack.base()).unwrap();
    let elapsed = start.elapsed();
    let ok = within(ratio, 98.01, 0.05) && elapsed < Duration::from_secs(1);
    assert!(report(
        "default pruning ratio 98.01 +/- 0.05 pp",
        ok,
        format!("{ratio:.4}% in {elapsed:?}")
    ));
}

#[test]
fn c2_local_window_tables() {
    let start = Instant::now();
    let with_and_without = [
        (2, 97.46, 97.97),
        (10, 89.57, 90.08),
        (15, 84.81, 85.32),
        (20, 80.17, 80.69),
        (40, 62.94, 63.45),
    ];
    let no_diagonal_column = [
        (2, 97.97),
        (3, 96.97),
        (4, 95.97),
        (5, 94.98),
        (6, 93.99),
        (7, 93.00),
        (8, 92.02),
        (9, 91.05),
        (10, 90.08),
        (15, 85.32),
        (20, 80.69),
        (40, 63.45),
        (80, 35.24),
        (120, 15.35),
        (160, 3.79),
    ];
    let ratio = |w, diag| pruning_ratio(&[local_window_mask(196, w, diag).unwrap()]).unwrap();
    let mut mismatches = Vec::new();
    for (w, with, without) in with_and_without {
        for (diag, expected) in [(true, with), (false, without)] {
            let got = format!("{:.2}", ratio(w, diag));
            if got != format!("{expected:.2}") {
                mismatches.push(format!("w={w} diag={diag}: {got} != {expected:.2}"));
            }
        }
    }
    for (w, expected) in no_diagonal_column {
        let got = format!("{:.2}", ratio(w, false));
        if got != format!("{expected:.2}") {
            mismatches.push(format!("column w={w}: {got} != {expected:.2}"));
        }
    }
    let elapsed = start.elapsed();
    let ok = mismatches.is_empty() && elapsed < Duration::from_secs(1);
    assert!(report(
        "local-window pruning tables (10 + 15 values, two decimals)",
        ok,
        if mismatches.is_empty() { format!("all match in {elapsed:?}") } else { mismatches.join("; ") }
    ));
}

#[test]
fn c3_bigbird_ratios() {
    let n = 196;
    let configs = [(2, 1, n, 96.97), (2, 1, 2 * n, 96.47), (4, 1, n, 94.21)];
    let mut all = true;
    let mut parts = Vec::new();
    for (w, g, r, target) in configs {
        let mask = bigbird_mask(n, w, g, r, 42).unwrap();
        let ratio = grid_pruning_ratio(&[mask]).unwrap();
        let ok = within(ratio, target, 0.05);
        all &= ok;
        parts.push(format!("w={w} g={g} r={r}: {ratio:.2} vs {target} [{}]", if ok { "ok" } else { "off" }));
    }
    assert!(report("BigBird mask ratios within 0.05 pp", all, parts.join("; ")));
}

#[test]
fn c4_wythoff_combinatorics() {
    let start = Instant::now();
    const K: u64 = 10_000;
    let row_set = |a: u64, b: u64| -> Vec<u64> {
        generalized_fibonacci(a, b, K)
            .elements()
            .iter()
            .copied()
            .filter(|x| (1..=K).contains(x))
            .collect()
    };

    // pairwise disjointness of rows 1..200
    let mut owner = vec![0u32; K as usize + 1];
    let mut disjoint = true;
    for i in 1..=200u64 {
        let p = wythoff_pair(i);
        for x in row_set(p.a, p.b) {
            if owner[x as usize] != 0 {
                disjoint = false;
            }
            owner[x as usize] = i as u32;
        }
    }

    // exact-once coverage of 1..=K by rows 1..=K
    let mut hits = vec![0u32; K as usize + 1];
    for i in 1..=K {
        let p = wythoff_pair(i);
        if p.a > K {
            break;
        }
        for x in row_set(p.a, p.b) {
            hits[x as usize] += 1;
        }
    }
    let covered = hits[1..].iter().all(|&c| c == 1);

    // modified rows share each integer among at most three rows
    let mut mod_hits = vec![0u32; K as usize + 1];
    for i in 1..=K {
        let p = modified_wythoff_pair(i);
        if p.a > K {
            break;
        }
        let mut xs = row_set(p.a, p.b);
        xs.dedup();
        for x in xs {
            mod_hits[x as usize] += 1;
        }
    }
    let max_share = *mod_hits[1..].iter().max().unwrap();
    let elapsed = start.elapsed();
    let ok = disjoint && covered && max_share <= 3 && elapsed < Duration::from_secs(10);
    assert!(report(
        "Wythoff disjointness / coverage / modified sharing <= 3",
        ok,
        format!("disjoint={disjoint} covered={covered} max_share={max_share} in {elapsed:?}")
    ));
}

#[test]
fn c5_bound_suite() {
    // per-head bound against brute-force pair counts
    let mut head_checked = 0;
    let mut head_ok = true;
    for n in [8u64, 32, 100, 196, 500, 1024] {
        for a in 1..=12u64 {
            for b in a + 1..=a + 20 {
                for w in [b, b + 1, 2 * b, 5 * b, n].into_iter().filter(|&w| w >= b && w <= n) {
                    let seq = generalized_fibonacci(a, b, w);
                    let brute = {
                        let elems = seq.elements();
                        let mut c = 0u64;
                        for d in 1..n.min(w + 1) {
                            if elems.contains(&d) {
                                c += 2 * (n - d);
                            }
                        }
                        c
                    };
                    let bound = head_pair_bound(a, b, w, n).unwrap();
                    head_checked += 1;
                    head_ok &= brute as f64 <= bound;
                }
            }
        }
    }

    // block totals against both forms
    let mut chain_ok = true;
    let mut configs = 0;
    for n in (49..=1024).step_by(25) {
        let w_max = (n * 65 / 196).clamp(1, n);
        for h in 1..=16 {
            let cfg = HeadMaskConfig {
                heads: h,
                w_min: 5.min(w_max),
                w_max,
                n_patches: n,
                ..HeadMaskConfig::vit_base()
            };
            let r = verify_bounds(&cfg, 64 * h).unwrap();
            configs += 1;
            chain_ok &= r.measured_dot_products <= r.block_bound_tight
                && r.block_bound_tight <= r.block_bound_simplified
                && r.pass;
        }
    }

    let vit = verify_bounds(&HeadMaskConfig::vit_base(), 768).unwrap();
    let vit_ok = vit.measured_dot_products == 588_288.0
        && vit.measured_dot_products <= vit.block_bound_simplified
        && within(vit.block_bound_simplified, 4.05e6, 0.01e6);

    let ok = head_ok && chain_ok && vit_ok;
    assert!(report(
        "sparsity and complexity bounds",
        ok,
        format!(
            "{head_checked} per-head cases ok={head_ok}; {configs} block configs ok={chain_ok}; ViT-B {} <= {:.4e} ok={vit_ok}",
            vit.measured_dot_products, vit.block_bound_simplified
        )
    ));
}

#[test]
fn c6_binet_and_sum_identity() {
    let mut worst: f64 = 0.0;
    for a in 0..=100u64 {
        for b in 0..=100u64 {
            let (mut prev, mut cur) = (a as u128, b as u128);
            for n in 2..=70u32 {
                if n > 2 {
                    let next = prev + cur;
                    prev = cur;
                    cur = next;
                }
                let f = cur as f64;
                let err = (binet(a, b, n).unwrap() - f).abs() / f.max(1.0);
                worst = worst.max(err);
            }
        }
    }

    let mut rng = SplitMix64::new(2024);
    let mut identity_ok = true;
    for _ in 0..10_000 {
        let a = rng.below(1_000_000) as u128;
        let b = rng.below(1_000_000) as u128;
        let d = 1 + rng.below(100) as usize;
        let mut f = vec![a, b];
        while f.len() < d + 2 {
            let k = f.len();
            f.push(f[k - 1] + f[k - 2]);
        }
        identity_ok &= f[..d].iter().sum::<u128>() + f[1] == f[d + 1];
    }
    let ok = worst < 1e-9 && identity_ok;
    assert!(report(
        "Binet agreement and sum identity",
        ok,
        format!("max relative error {worst:.3e}; identity exact on 10^4 draws = {identity_ok}")
    ));
}

#[test]
fn c7_kernel_correctness() {
    let mut forward_worst: f64 = 0.0;
    let mut row_worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = SplitMix64::new(seed);
        let n = 1 + rng.below(16) as usize;
        let n = n.max(2);
        let h = 1 + rng.below(4) as usize;
        let d = h * (1 + rng.below(3) as usize);
        let params = AttentionBlockParams::seeded(d, h, seed ^ 0xABCD).unwrap();
        let x = random_matrix(&mut rng, n + 1, d);
        let masks: Vec<_> = (0..h).map(|_| random_support(&mut rng, n)).collect();
        let got = fibottention_block_forward(x.view(), &params, &masks).unwrap();
        let want = dense_oracle_forward(x.view(), &params, &masks);
        for (a, b) in got.iter().zip(want.iter()) {
            forward_worst = forward_worst.max((a - b).abs() / b.abs().max(1.0));
        }
        let q = x.dot(&params.heads[0].wq);
        let k = x.dot(&params.heads[0].wk);
        let p = masked_softmax(&masked_scores(q.view(), k.view(), &masks[0]).unwrap()).unwrap();
        for row in p.rows() {
            row_worst = row_worst.max((row.sum() - 1.0).abs());
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    let mut grad_worst: f64 = 0.0;
    let mut instances = 0;
    for seed in 0..24u64 {
        let mut rng = SplitMix64::new(1000 + seed);
        let n = 2 + rng.below(7) as usize;
        let h = 1 + rng.below(2) as usize;
        let d = h * (1 + rng.below(4) as usize);
        let params = AttentionBlockParams::seeded(d, h, seed).unwrap();
        let x = random_matrix(&mut rng, n + 1, d);
        let up = random_matrix(&mut rng, n + 1, d);
        let masks: Vec<_> = if seed % 3 == 0 {
            vec![SupportSet::full(n); h]
        } else {
            (0..h).map(|_| random_support(&mut rng, n)).collect()
        };
        grad_worst = grad_worst.max(gradient_check(&x, &params, &masks, &up, 1e-5));
        instances += 1;
    }

    let ok = forward_worst < 1e-9 && row_worst < 1e-12 && grad_worst < 1e-4 && instances >= 20;
    assert!(report(
        "masked kernel vs dense oracle, softmax rows, gradients",
        ok,
        format!(
            "forward {forward_worst:.2e} (100 instances); row sum {row_worst:.2e}; gradient {grad_worst:.2e} ({instances} instances)"
        )
    ));
}

#[test]
fn c8_diversity_metric() {
    let mut rng = SplitMix64::new(8);
    let mut in_range = true;
    for _ in 0..1000 {
        let h = 2 + rng.below(6) as usize;
        let rows = 1 + rng.below(6) as usize;
        let cols = 1 + rng.below(4) as usize;
        let ys: Vec<Array2<f64>> = (0..h).map(|_| random_matrix(&mut rng, rows, cols)).collect();
        let v = head_diversity(&ys).unwrap();
        in_range &= (0.0..=1.0).contains(&v);
    }
    let y = random_matrix(&mut rng, 4, 3);
    let identical = head_diversity(&[y.clone(), y.clone(), y.clone()]).unwrap();
    let antipodal = head_diversity(&[y.clone(), -&y]).unwrap();
    let a = ndarray::array![[3.0, 0.0], [0.0, 4.0]];
    let b = ndarray::array![[0.0, 4.0], [-3.0, 0.0]];
    let orthogonal = head_diversity(&[a, b]).unwrap();
    let ok = in_range
        && identical == 0.0
        && within(antipodal, 1.0, 1e-12)
        && within(orthogonal, std::f64::consts::FRAC_1_SQRT_2, 1e-6);
    assert!(report(
        "head diversity range and reference values",
        ok,
        format!("range ok={in_range}; identical={identical}; antipodal={antipodal:.12}; orthogonal={orthogonal:.9} (sqrt(2)/2)")
    ));
}

#[test]
fn c9_determinism() {
    let render = || {
        let cfg = HeadMaskConfig { layers: 4, ..HeadMaskConfig::vit_base() };
        let stack = fibottention_masks(&cfg).unwrap();
        let mut out = String::new();
        for l in 0..stack.layers() {
            for h in 0..stack.heads() {
                out.push_str(&pbm(stack.mask(l, h)));
            }
        }
        out.push_str(&coordinate_csv(
            (0..stack.layers()).flat_map(|l| (0..stack.heads()).map(move |h| (l, h))).map(|(l, h)| (l, h, stack.mask(l, h))),
        ));
        out.push_str(&pbm(&random_mask(196, 0.1, true, 42).unwrap()));
        out.push_str(&pbm(&bigbird_mask(196, 2, 1, 196, 42).unwrap()));
        out.push_str(&to_json(&verify_bounds(&cfg, 768).unwrap()));
        out.push_str(&to_json(&flop_projection(&[(224, 16), (448, 16)], 768, 12, MaskRule::vit_default()).unwrap()));
        out
    };
    let first = render();
    let second = render();
    let ok = first == second;
    assert!(report(
        "identical seeds give byte-identical exports and reports",
        ok,
        format!("{} bytes compared", first.len())
    ));
}
