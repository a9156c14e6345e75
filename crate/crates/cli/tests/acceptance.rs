//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`cargo test --test acceptance`). The process fails
//! if any criterion fails, except those listed in `EXPECTED_FAILURES`, whose
//! failure is still printed.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simplex_cli::bench::{Benchmark, Cell};
use simplex_core::losses::{loss_value, subgradient_linear};
use simplex_core::online::train_online_observed;
use simplex_core::oracle::{verify_theory, TheoryConfig};
use simplex_core::srls::{fit_kernel, loo_errors, reg_path, reg_path_linear, reg_path_with_grid};
use simplex_core::svm_qp::{box_bound, fit_sc_svm, fit_sh_svm, kkt_report, solve_sc_dual, solve_sh_dual};
use simplex_core::{cross_gram, gram, CodeBook64, KernelSpec64, LossKind, OnlineOptions, QpOptions};

const EXPECTED_FAILURES: &[usize] = &[9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, f64, fn() -> Outcome); 10] = [
        (1, "code-book geometry", 1.0, code_book_geometry),
        (2, "closed-form leave-one-out", 30.0, leave_one_out_identity),
        (3, "comparison inequalities", 60.0, comparison_inequalities),
        (4, "noise-improved bound", 60.0, noise_bound),
        (5, "QP certification", 60.0, qp_certification),
        (6, "subgradient checks", 5.0, subgradient_checks),
        (7, "binary reduction", f64::INFINITY, binary_reduction),
        (8, "path cost independent of T", 120.0, path_t_independence),
        (9, "UCI desk-scale accuracies", 1200.0, uci_benchmark),
        (10, "online training on blobs", 30.0, online_blobs),
    ];
    let mut unexpected = 0;
    for (id, name, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs < budget;
        let pass = o.pass && in_time;
        let limit = if budget.is_finite() { format!(", limit {budget} s") } else { String::new() };
        println!(
            "criterion {id:>2} {} {name}: {} ({secs:.2} s{limit}{})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            if in_time { "" } else { ", over time" }
        );
        if !pass && !EXPECTED_FAILURES.contains(&id) {
            unexpected += 1;
        }
        if !pass && EXPECTED_FAILURES.contains(&id) {
            println!("             (known failure, see the README)");
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criteria failed");
        ExitCode::FAILURE
    }
}

fn code_book_geometry() -> Outcome {
    let mut worst = 0.0f64;
    for t in 2..=64 {
        let cb = CodeBook64::new(t).unwrap();
        let mut sum = vec![0.0; t - 1];
        for y in 0..t {
            let c = cb.code(y);
            worst = worst.max((c.iter().map(|v| v * v).sum::<f64>() - 1.0).abs());
            for (s, v) in sum.iter_mut().zip(c) {
                *s += v;
            }
            for yp in (y + 1)..t {
                let dot: f64 = c.iter().zip(cb.code(yp)).map(|(a, b)| a * b).sum();
                worst = worst.max((dot + 1.0 / (t as f64 - 1.0)).abs());
            }
        }
        worst = worst.max(sum.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    outcome(worst <= 1e-12, format!("T = 2..64, max deviation {worst:.1e}"))
}

/// Predictions at each held-out row after refitting on the other rows with
/// the ridge `lambda * n` of the full problem.
fn retrained_loo(k: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = k.nrows();
    let mut out = DMatrix::zeros(n, y.ncols());
    for i in 0..n {
        let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut a = k.select_rows(&keep).select_columns(&keep);
        for d in 0..keep.len() {
            a[(d, d)] += lambda * n as f64;
        }
        let coef = a.lu().solve(&y.select_rows(&keep)).unwrap();
        let row = k.select_rows(&[i]).select_columns(&keep);
        out.set_row(i, &(row * coef).row(0));
    }
    out
}

fn leave_one_out_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut count = 0;
    for p in 0..20 {
        let t = [2, 3, 5][p % 3];
        let n = rng.random_range(8..=30);
        let x = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-2.0..2.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..t)).collect();
        let cb = CodeBook64::new(t).unwrap();
        let spec = if p % 2 == 0 { KernelSpec64::Linear } else { KernelSpec64::rbf(1.5).unwrap() };
        let k = gram(&spec, &x).unwrap().k;
        let y = cb.label_matrix(&labels).unwrap();
        for lambda in [1e-3, 1e-1, 10.0] {
            let truth = retrained_loo(&k, &y, lambda);
            let mut candidates = vec![
                loo_errors(&k, &labels, &cb, lambda).unwrap().predictions,
                reg_path_with_grid(&k, &labels, &cb, vec![lambda]).unwrap().loo_at(lambda).unwrap().predictions,
            ];
            if spec == KernelSpec64::Linear {
                candidates.push(reg_path_linear(&x, &labels, &cb).unwrap().loo_at(lambda).unwrap().predictions);
            }
            for c in candidates {
                worst = worst.max((c - &truth).amax());
            }
            count += 1;
        }
    }
    outcome(worst <= 1e-8, format!("{count} (problem, lambda) pairs, max deviation {worst:.1e}"))
}

fn theory_reports() -> Vec<simplex_core::oracle::TheoryReport> {
    [2, 3, 5]
        .iter()
        .map(|&t| verify_theory(&TheoryConfig::new(t, 1000, 7)).unwrap())
        .collect()
}

fn comparison_inequalities() -> Outcome {
    let reports = theory_reports();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &reports {
        let samples: usize = r.comparison.iter().map(|c| c.samples).sum();
        let violations: usize = r.comparison.iter().map(|c| c.violations).sum();
        let ratio = r.comparison.iter().map(|c| c.max_ratio).fold(0.0f64, f64::max);
        let cons = r.consistency.iter().all(|c| c.passed());
        let binary = r.binary.as_ref().is_none_or(|b| b.passed());
        pass &= violations == 0 && cons && binary && r.comparison.iter().all(|c| c.passed());
        parts.push(format!(
            "T={}: {samples} samples, {violations} violations, max ratio {ratio:.3}, consistency {}",
            r.classes,
            if cons { "ok" } else { "broken" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn noise_bound() -> Outcome {
    let reports = theory_reports();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &reports {
        pass &= !r.noise.is_empty() && r.noise.iter().all(|n| n.passed());
        let qs: Vec<String> = r
            .noise
            .iter()
            .map(|n| format!("q={} {} samples {} violations ratio {:.3}", n.q, n.samples, n.violations, n.max_ratio))
            .collect();
        parts.push(format!("T={}: {}", r.classes, qs.join(", ")));
    }
    outcome(pass, parts.join("; "))
}

/// Accelerated projected gradient on `max b^T a - a^T Q a / 2` over `[0, c0]^m`.
fn box_qp_reference(q: &DMatrix<f64>, b: &DVector<f64>, c0: f64, iters: usize) -> f64 {
    let lip = q.clone().symmetric_eigenvalues().max().max(1e-12);
    let mut a = DVector::zeros(b.len());
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let next = (&z + (b - q * &z) / lip).map(|v| v.clamp(0.0, c0));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &next + (&next - &a) * ((t - 1.0) / t_next);
        a = next;
        t = t_next;
    }
    b.dot(&a) - 0.5 * a.dot(&(q * &a))
}

fn qp_certification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = QpOptions { tol: 1e-6, max_sweeps: Some(1_000_000) };
    let mut worst_kkt = 0.0f64;
    let mut all_converged = true;
    for p in 0..12 {
        let n = rng.random_range(10..=50);
        let t = rng.random_range(3..=5);
        let cb = CodeBook64::new(t).unwrap();
        let x = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..t)).collect();
        let spec = if p % 2 == 0 { KernelSpec64::rbf(0.8).unwrap() } else { KernelSpec64::Linear };
        let k = gram(&spec, &x).unwrap().k;
        let lambda = [1e-1, 1e-2][p % 2];
        let sc = solve_sc_dual(&k, &labels, &cb, lambda, &opts).unwrap();
        let sh = solve_sh_dual(&k, &labels, &cb, lambda, &opts).unwrap();
        all_converged &= sc.converged && sh.converged;
        worst_kkt = worst_kkt.max(kkt_report(&sc, &k, &labels, &cb).unwrap());
        worst_kkt = worst_kkt.max(kkt_report(&sh, &k, &labels, &cb).unwrap());
    }
    let tight = QpOptions { tol: 1e-10, max_sweeps: Some(1_000_000) };
    let mut worst_gap = 0.0f64;
    for p in 0..6 {
        let n = 2 + p % 5;
        let t = 3;
        let cb = CodeBook64::new(t).unwrap();
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..t)).collect();
        let k = gram(&KernelSpec64::rbf(rng.random_range(0.3..2.0)).unwrap(), &x).unwrap().k;
        let lambda = 10f64.powf(rng.random_range(-3.0..0.0));
        let c0 = box_bound(n, lambda);
        let mut vars = Vec::new();
        for (i, &yi) in labels.iter().enumerate() {
            vars.extend((0..t).filter(|&y| y != yi).map(|y| (i, y)));
        }
        let q = DMatrix::from_fn(vars.len(), vars.len(), |r, c| k[(vars[r].0, vars[c].0)] * cb.gram()[(vars[r].1, vars[c].1)]);
        let b = DVector::from_element(vars.len(), 1.0 / (t as f64 - 1.0));
        let sc = solve_sc_dual(&k, &labels, &cb, lambda, &tight).unwrap();
        worst_gap = worst_gap.max((sc.objective - box_qp_reference(&q, &b, c0, 400_000)).abs());
        let q = DMatrix::from_fn(n, n, |i, j| k[(i, j)] * cb.gram()[(labels[i], labels[j])]);
        let sh = solve_sh_dual(&k, &labels, &cb, lambda, &tight).unwrap();
        worst_gap = worst_gap.max((sh.objective - box_qp_reference(&q, &DVector::from_element(n, 1.0), c0, 400_000)).abs());
    }
    outcome(
        all_converged && worst_kkt <= 1e-6 && worst_gap <= 1e-6,
        format!("24 fits with n <= 50, max KKT violation {worst_kkt:.1e}; 12 fits with n <= 6, max objective gap {worst_gap:.1e}"),
    )
}

fn subgradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for kind in LossKind::ALL {
        let mut checked = 0;
        while checked < 100 {
            let t = rng.random_range(2..=6);
            let p = rng.random_range(1..=5);
            let cb = CodeBook64::new(t).unwrap();
            let y = rng.random_range(0..t);
            let w = DMatrix::from_fn(t - 1, p, |_, _| rng.random_range(-1.5..1.5));
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
            let v: Vec<f64> = (0..t - 1).map(|r| (0..p).map(|c| w[(r, c)] * x[c]).sum()).collect();
            // Hinge kinks: stay well away from them.
            let kink = match kind {
                LossKind::SLs => f64::INFINITY,
                LossKind::ShSvm => (1.0 - dot(cb.code(y), &v)).abs(),
                LossKind::ScSvm => (0..t)
                    .filter(|&k| k != y)
                    .map(|k| (1.0 / (t as f64 - 1.0) + dot(cb.code(k), &v)).abs())
                    .fold(f64::INFINITY, f64::min),
            };
            if kink < 1e-3 {
                continue;
            }
            let g = subgradient_linear(kind, &cb, y, &w, &x).unwrap();
            let fd = DMatrix::from_fn(t - 1, p, |r, c| {
                let (mut up, mut down) = (w.clone(), w.clone());
                up[(r, c)] += h;
                down[(r, c)] -= h;
                let f = |m: &DMatrix<f64>| {
                    let v: Vec<f64> = (0..t - 1).map(|r| (0..p).map(|c| m[(r, c)] * x[c]).sum()).collect();
                    loss_value(kind, &cb, y, &v).unwrap()
                };
                (f(&up) - f(&down)) / (2.0 * h)
            });
            let rel = (&g - &fd).norm() / g.norm().max(1.0);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    outcome(worst <= 1e-5, format!("100 points per loss, max relative error {worst:.1e}"))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bias-free binary SVM dual with labels in {+1, -1}, solved to machine precision.
fn binary_svm(k: &DMatrix<f64>, y: &[f64], c: f64) -> (DVector<f64>, f64) {
    let n = y.len();
    let mut a = DVector::<f64>::zeros(n);
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let s: f64 = (0..n).map(|j| a[j] * y[i] * y[j] * k[(i, j)]).sum();
            let next = (a[i] + (1.0 - s) / k[(i, i)]).clamp(0.0, c);
            change = change.max((next - a[i]).abs());
            a[i] = next;
        }
        if change < 1e-15 {
            break;
        }
    }
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]);
    let obj = a.sum() - 0.5 * a.dot(&(q * &a));
    (a, obj)
}

fn binary_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cb = CodeBook64::new(2).unwrap();
    let sign = cb.code(0)[0];
    let tight = QpOptions { tol: 1e-14, max_sweeps: Some(1_000_000) };
    let (mut pred_gap, mut obj_gap) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let n = 15;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let test = DMatrix::from_fn(10, 2, |_, _| rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let ys: Vec<f64> = labels.iter().map(|&l| if l == 0 { sign } else { -sign }).collect();
        let spec = KernelSpec64::rbf(0.7).unwrap();
        let g = gram(&spec, &x).unwrap();
        let cross = cross_gram(&spec, &x, &test).unwrap();
        let lambda = 0.02;

        // Binary regularized least squares.
        let mut a = g.k.clone();
        for i in 0..n {
            a[(i, i)] += lambda * n as f64;
        }
        let coef = a.lu().solve(&DVector::from_column_slice(&ys)).unwrap();
        let binary = &cross * coef;
        let model = fit_kernel(&g, &x, &labels, &cb, lambda).unwrap();
        pred_gap = pred_gap.max((model.predict(&test).unwrap().column(0) - &binary).amax());
        let path = reg_path(&g.k, &labels, &cb).unwrap();
        let via_path = path.model_at(lambda, &x, spec).unwrap().predict(&test).unwrap();
        pred_gap = pred_gap.max((via_path.column(0) - &binary).amax());

        // Binary hinge loss SVM.
        let (alpha, obj) = binary_svm(&g.k, &ys, box_bound(n, lambda));
        let binary = &cross * alpha.component_mul(&DVector::from_column_slice(&ys));
        let (sc, sc_model) = fit_sc_svm(&g, &x, &labels, &cb, lambda, &tight).unwrap();
        let (sh, sh_model) = fit_sh_svm(&g, &x, &labels, &cb, lambda, &tight).unwrap();
        for m in [&sc_model, &sh_model] {
            pred_gap = pred_gap.max((m.predict(&test).unwrap().column(0) - &binary).amax());
        }
        obj_gap = obj_gap.max((sc.objective - obj).abs()).max((sh.objective - obj).abs());
    }
    outcome(
        pred_gap <= 1e-10 && obj_gap <= 1e-8,
        format!("S-LS, SC-SVM, SH-SVM at T=2: max prediction gap {pred_gap:.1e}, max objective gap {obj_gap:.1e}"),
    )
}

fn path_seconds(k: &DMatrix<f64>, t: usize, rng: &mut ChaCha8Rng) -> f64 {
    let labels: Vec<usize> = (0..k.nrows()).map(|_| rng.random_range(0..t)).collect();
    let cb = CodeBook64::new(t).unwrap();
    (0..3)
        .map(|_| {
            let start = Instant::now();
            let path = reg_path(k, &labels, &cb).unwrap();
            assert_eq!(path.lambdas.len(), 100);
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn path_t_independence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = DMatrix::from_fn(500, 10, |_, _| rng.random_range(-1.0..1.0));
    let k = gram(&KernelSpec64::rbf(1.0).unwrap(), &x).unwrap().k;
    let t4 = path_seconds(&k, 4, &mut rng);
    let t32 = path_seconds(&k, 32, &mut rng);
    let ratio = t32 / t4;
    outcome(ratio < 2.0, format!("n=500: T=4 {t4:.3} s, T=32 {t32:.3} s, ratio {ratio:.2}"))
}

/// Test accuracies (percent) that the rbf S-LS model should land within 3 points of.
const RBF_REFERENCE: [(&str, f64); 3] = [("Optdigit", 97.09), ("Pendigit", 98.17), ("Letter", 96.48)];

fn uci_benchmark() -> Outcome {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/uci/manifest.toml");
    let table = Benchmark::from_file(&manifest).unwrap().run();
    for row in table.to_text().lines() {
        println!("             {row}");
    }
    let acc = |s: &str, d: &str| table.accuracy(s, d).map(|a| 100.0 * a);
    let mut failures = Vec::new();
    for (name, row) in table.solvers.iter().zip(&table.cells) {
        for (d, c) in table.datasets.iter().zip(row) {
            if let Cell::Failed(e) = c {
                failures.push(format!("{name} / {d} failed: {e}"));
            }
        }
    }
    for (d, reference) in RBF_REFERENCE {
        match acc("S-LS rbf batch (loo)", d) {
            Some(a) if (a - reference).abs() <= 3.0 => {}
            Some(a) => failures.push(format!("{d}: rbf S-LS {a:.2} vs {reference:.2}")),
            None => failures.push(format!("{d}: rbf S-LS missing")),
        }
        let ordered = |hi: &str, lo: &str| match (acc(hi, d), acc(lo, d)) {
            (Some(a), Some(b)) if a > b => None,
            (Some(a), Some(b)) => Some(format!("{d}: {hi} {a:.2} <= {lo} {b:.2}")),
            _ => Some(format!("{d}: {hi} or {lo} missing")),
        };
        failures.extend(ordered("S-LS rbf batch (loo)", "S-LS linear batch (loo)"));
        failures.extend(ordered("SC-SVM online (ho)", "SH-SVM online (ho)"));
        failures.extend(ordered("S-LS online (ho)", "SH-SVM online (ho)"));
    }
    if failures.is_empty() {
        outcome(true, "rbf S-LS within 3 points on all datasets, ordering reproduced")
    } else {
        outcome(false, failures.join("; "))
    }
}

fn online_blobs() -> Outcome {
    let t = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut blobs = |n: usize| {
        let labels: Vec<usize> = (0..n).map(|i| i % t).collect();
        let x = DMatrix::from_fn(n, 2, |i, k| {
            let angle = std::f64::consts::TAU * labels[i] as f64 / t as f64;
            let (r, phi) = (0.9 * rng.random::<f64>().sqrt(), rng.random_range(0.0..std::f64::consts::TAU));
            if k == 0 { 3.0 * angle.cos() + r * phi.cos() } else { 3.0 * angle.sin() + r * phi.sin() }
        });
        (x, labels)
    };
    let (x, labels) = blobs(2000);
    let (test, test_labels) = blobs(1000);
    let cb = CodeBook64::new(t).unwrap();
    let lambda: f64 = 1e-2;
    let radius = 1.0 / lambda.sqrt() + 1e-10;
    let mut pass = true;
    let mut parts = Vec::new();
    for loss in LossKind::ALL {
        let opts = OnlineOptions { epochs: 20, seed: 3, ..OnlineOptions::default() };
        let mut reached = None;
        let mut ball_ok = true;
        train_online_observed(&x, &labels, &cb, lambda, loss, &opts, |s| {
            ball_ok &= s.weights.norm() <= radius;
            if s.step % x.nrows() == 0 && reached.is_none() {
                let pred = cb.decode_batch(&(&test * s.weights.transpose())).unwrap();
                let acc = pred.iter().zip(&test_labels).filter(|(p, y)| p == y).count() as f64 / test_labels.len() as f64;
                if acc >= 0.95 {
                    reached = Some((s.step / x.nrows(), acc));
                }
            }
        })
        .unwrap();
        pass &= ball_ok && reached.is_some();
        parts.push(match reached {
            Some((e, a)) => format!("{loss} {:.1}% after {e} epoch(s)", 100.0 * a),
            None => format!("{loss} below 95% after 20 epochs"),
        });
        if !ball_ok {
            parts.push(format!("{loss} left the ball"));
        }
    }
    outcome(pass, parts.join(", "))
}
