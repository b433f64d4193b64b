//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#![allow(clippy::needless_range_loop)]

mod common;

use std::fs;
use std::time::{Duration, Instant};

use common::{max_abs_diff, oracle, run, series};
use mismatch_core::curves::scan_convergence;
use mismatch_core::lab::net::{Gradients, Targets};
use mismatch_core::lab::protocol::{analysis_config, SWEEP_TABLE};
use mismatch_core::lab::spec::{ILLPOSED_HUE, SIZE_SWEEP};
use mismatch_core::lab::{run_protocol, run_sweep, Activation, Loss, Mlp, ProtocolRunSpec};
use mismatch_core::{
    analyze, cofm, csm3, detect_convergence, m3_curve, mean_curves, mm3, mofm, mofm_max, msm3, msm3_max, normalize,
    ofm_curve, sm3_curve, BaselinePolicy, ConvergencePolicy, FoldSet, MismatchReport, MismatchValue, UnitCheck,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP0: BaselinePolicy = BaselinePolicy::RequireStepZero;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

/// Largest difference between a computed mismatch curve and a literal one
/// that uses IEEE infinity; infinite entries must coincide.
fn mismatch_diff(got: &[MismatchValue], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| match (g, w.is_infinite()) {
            (MismatchValue::Infinite, true) => 0.0,
            (MismatchValue::Finite(x), false) => (x - w).abs(),
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

fn scalar_diff(got: MismatchValue, want: f64) -> f64 {
    mismatch_diff(&[got], &[want])
}

/// Percent-of-improvement rescaling including its flat-baseline branches, evaluated pointwise.
fn literal_normalized(t: &[f64]) -> Vec<f64> {
    match oracle::normalize(t) {
        Some(n) => n,
        None => t.iter().map(|&x| if x > t[0] { f64::INFINITY } else { 0.0 }).collect(),
    }
}

fn literal_ofm(t: &[f64]) -> Vec<f64> {
    let n = literal_normalized(t);
    let mut out = Vec::new();
    for i in 0..n.len() {
        let mut min = n[0];
        for &v in &n[..=i] {
            min = min.min(v);
        }
        out.push(if n[i].is_infinite() { f64::INFINITY } else { n[i] - min });
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut flat_baselines = 0;
    for _ in 0..1000 {
        let len = rng.random_range(2..=50);
        let t = common::random_curve(&mut rng, len);
        let p = common::random_curve(&mut rng, len);
        let r = run(&p, &t);
        let s = series("target", &t);
        let lit_ofm = literal_ofm(&t);
        if oracle::normalize(&t).is_none() {
            flat_baselines += 1;
        }
        let lit_mean = if lit_ofm.iter().any(|v| v.is_infinite()) { f64::INFINITY } else { mean(&lit_ofm) };
        let lit_max = lit_ofm.iter().cloned().fold(0.0, f64::max);
        let diffs = [
            max_abs_diff(&m3_curve(&r, UnitCheck::Enforce).unwrap(), &oracle::m3(&t, &p)),
            (mm3(&r, UnitCheck::Enforce).unwrap() - oracle::mm3(&t, &p)).abs(),
            max_abs_diff(&sm3_curve(&s).unwrap(), &oracle::sm3(&t)),
            (msm3(&s).unwrap() - oracle::msm3(&t)).abs(),
            (csm3(&s).unwrap() - oracle::csm3(&t)).abs(),
            (msm3_max(&s).unwrap() - oracle::msm3_max(&t)).abs(),
            mismatch_diff(&normalize(&s, STEP0).unwrap().values, &literal_normalized(&t)),
            mismatch_diff(&ofm_curve(&s, STEP0).unwrap().1, &lit_ofm),
            scalar_diff(mofm(&s, STEP0).unwrap(), lit_mean),
            scalar_diff(cofm(&s, STEP0).unwrap(), *lit_ofm.last().unwrap()),
            scalar_diff(mofm_max(&s, STEP0).unwrap(), lit_max),
        ];
        worst = diffs.into_iter().fold(worst, f64::max);
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && within(elapsed, 10),
        format!("max abs diff {worst:.3e} over 1000 series ({flat_baselines} with flat baseline), {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let s = series("t", &[10.0, 6.0, 2.0, 4.0]);
    let n = normalize(&s, STEP0).unwrap().values;
    let o = ofm_curve(&s, STEP0).unwrap().1;
    let f = MismatchValue::Finite;
    let want_n = [125.0, 75.0, 25.0, 50.0].map(f);
    let want_o = [0.0, 0.0, 0.0, 25.0].map(f);
    let flat = mofm(&series("t", &[2.0, 2.0, 3.0]), STEP0).unwrap();
    let pass = n == want_n
        && o == want_o
        && mofm(&s, STEP0).unwrap() == f(6.25)
        && cofm(&s, STEP0).unwrap() == f(25.0)
        && mofm_max(&s, STEP0).unwrap() == f(25.0)
        && flat == MismatchValue::Infinite;
    outcome(pass, format!("normalized {n:?}, ofm {o:?}, (2,2,3) mofm {flat}"))
}

/// 500 random 5-fold sets on a common grid whose folds and fold mean all
/// improve on their baselines.
fn fold_sets() -> Vec<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sets = Vec::new();
    while sets.len() < 500 {
        let len = rng.random_range(2..=30);
        let folds: Vec<_> = (0..5)
            .map(|_| (common::random_curve(&mut rng, len), common::random_curve(&mut rng, len)))
            .collect();
        let mean_t: Vec<f64> = (0..len).map(|i| mean(&folds.iter().map(|f| f.1[i]).collect::<Vec<_>>())).collect();
        let finite = |t: &[f64]| oracle::normalize(t).is_some();
        if folds.iter().all(|f| finite(&f.1)) && finite(&mean_t) {
            sets.push(folds);
        }
    }
    sets
}

fn criterion_3(sets: &[Vec<(Vec<f64>, Vec<f64>)>]) -> (Outcome, Outcome, Vec<String>) {
    let start = Instant::now();
    let mut m3_worst: f64 = 0.0;
    let mut ofm_violations = Vec::new();
    let mut msm3_violations = 0;
    for (k, folds) in sets.iter().enumerate() {
        let runs: Vec<_> = folds.iter().map(|(p, t)| run(p, t)).collect();
        let mean_run = mean_curves(&FoldSet::new(runs.clone()).unwrap());
        let per_fold_m3: Vec<Vec<f64>> = runs.iter().map(|r| m3_curve(r, UnitCheck::Enforce).unwrap()).collect();
        let mean_of_m3: Vec<f64> =
            (0..mean_run.len()).map(|i| mean(&per_fold_m3.iter().map(|c| c[i]).collect::<Vec<_>>())).collect();
        m3_worst = m3_worst.max(max_abs_diff(&m3_curve(&mean_run, UnitCheck::Enforce).unwrap(), &mean_of_m3));
        let mean_of_mm3 = mean(&runs.iter().map(|r| mm3(r, UnitCheck::Enforce).unwrap()).collect::<Vec<_>>());
        m3_worst = m3_worst.max((mm3(&mean_run, UnitCheck::Enforce).unwrap() - mean_of_mm3).abs());

        let on_mean = mofm(mean_run.target(), STEP0).unwrap().as_f64();
        let per_fold: Vec<f64> = runs.iter().map(|r| mofm(r.target(), STEP0).unwrap().as_f64()).collect();
        if on_mean > mean(&per_fold) {
            ofm_violations.push((k, on_mean, mean(&per_fold)));
        }
        let msm3_mean = msm3(mean_run.target()).unwrap();
        if msm3_mean > mean(&runs.iter().map(|r| msm3(r.target()).unwrap()).collect::<Vec<_>>()) + 1e-12 {
            msm3_violations += 1;
        }
    }
    let elapsed = start.elapsed();
    let a = outcome(
        m3_worst <= 1e-12 && within(elapsed, 30),
        format!("M3/MM3 max diff {m3_worst:.3e} over {} fold sets, {elapsed:.2?}", sets.len()),
    );
    let b_detail = match ofm_violations.first() {
        None => format!("MOFM(mean) <= mean MOFM in all {} sets", sets.len()),
        Some((k, m, f)) => format!(
            "MOFM(mean) > mean per-fold MOFM in {}/{} sets (first: set {k}, {m:.4} > {f:.4}); see README",
            ofm_violations.len(),
            sets.len()
        ),
    };
    let b = outcome(ofm_violations.is_empty() && within(elapsed, 30), b_detail);

    // Bounds that do hold, shown alongside for context.
    let canonical = [vec![10.0, 0.0, 10.0], vec![1.0, 0.0, 0.0]];
    let runs: Vec<_> = canonical.iter().map(|t| run(&[0.0; 3], t)).collect();
    let mean_run = mean_curves(&FoldSet::new(runs.clone()).unwrap());
    let info = vec![
        format!("unnormalized MSM3 bound violated in {msm3_violations}/{} sets", sets.len()),
        format!(
            "two-fold witness (10,0,10),(1,0,0): per-fold MOFM {:.4}, {:.4}; mean-curve MOFM {:.4}",
            mofm(runs[0].target(), STEP0).unwrap().as_f64(),
            mofm(runs[1].target(), STEP0).unwrap().as_f64(),
            mofm(mean_run.target(), STEP0).unwrap().as_f64()
        ),
    ];
    (a, b, info)
}

/// Recomputes the whole improvement chain for every prefix.
fn brute_force_stop(values: &[f64], min_delta: f64, patience: usize) -> (usize, usize, bool) {
    let last_improvement = |end: usize| {
        let mut best = values[0];
        let mut at = 0;
        for i in 1..=end {
            if values[i] < best - min_delta {
                best = values[i];
                at = i;
            }
        }
        at
    };
    for end in 0..values.len() {
        let at = last_improvement(end);
        if end - at >= patience {
            return (end, at, true);
        }
    }
    (values.len() - 1, last_improvement(values.len() - 1), false)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut checks = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..=40);
        let mut v = 1.0;
        let curve: Vec<f64> = (0..len)
            .map(|_| {
                v += rng.random_range(-0.1..0.06);
                v
            })
            .collect();
        for patience in 1..=5 {
            for min_delta in [0.0, 0.01, 0.1] {
                let policy = ConvergencePolicy::new(min_delta, patience).unwrap();
                let got = scan_convergence(&curve, &policy).unwrap();
                checks += 1;
                if (got.stop_index, got.best_index, got.converged) != brute_force_stop(&curve, min_delta, patience) {
                    mismatches += 1;
                }
            }
        }
    }
    let example = series("p", &[1.0, 0.9, 0.8, 0.85, 0.9, 0.95]);
    let r = detect_convergence(&example, &ConvergencePolicy::default()).unwrap();
    let example_ok = r.best_step == 2 && r.stop_step == 5 && r.converged;
    outcome(
        mismatches == 0 && example_ok,
        format!(
            "{mismatches}/{checks} disagreements; example best step {} stop step {} (gap {})",
            r.best_step,
            r.stop_step,
            r.stop_step - r.best_step
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = [10.0, 6.0, 2.0, 4.0, 3.0, 7.0, 1.5, 2.5];
    let base: Vec<f64> = ofm_curve(&series("t", &t), STEP0).unwrap().1.iter().map(|v| v.as_f64()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a = 10f64.powf(rng.random_range(-3.0..3.0));
        let b = rng.random_range(-1000.0..1000.0);
        let mapped: Vec<f64> = t.iter().map(|v| a * v + b).collect();
        let got = ofm_curve(&series("t", &mapped), STEP0).unwrap().1;
        for (g, w) in got.iter().zip(&base) {
            worst = worst.max((g.as_f64() - w).abs() / w.abs().max(1.0));
        }
    }
    outcome(worst <= 1e-9, format!("max relative deviation {worst:.3e} over 100 transforms"))
}

fn gradient_error(activation: Activation, loss: Loss, rng: &mut ChaCha8Rng) -> f64 {
    let output = match (activation, loss) {
        (_, Loss::CrossEntropy) => Activation::Identity,
        (Activation::Relu, _) => Activation::Sigmoid,
        (a, _) => a,
    };
    let mut net = Mlp::new(&[6, 8, 5, 3], activation, output, rng);
    let x = ndarray::Array2::from_shape_fn((10, 6), |_| rng.random_range(-1.0..1.0));
    let y = ndarray::Array2::from_shape_fn((10, 3), |_| rng.random_range(0.0..1.0));
    let labels: Vec<usize> = (0..10).map(|_| rng.random_range(0..3)).collect();
    let targets = match loss {
        Loss::MeanSquared => Targets::Values(&y),
        Loss::CrossEntropy => Targets::Classes(&labels),
    };
    let trace = net.trace(&x);
    let (_, g) = loss.evaluate(trace.output(), targets);
    let grads: Gradients = net.backward(&trace, &g).0;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..64 {
        let i = rng.random_range(0..net.parameter_count());
        let w = *net.parameter_mut(i);
        *net.parameter_mut(i) = w + h;
        let up = loss.evaluate(&net.forward(&x), targets).0;
        *net.parameter_mut(i) = w - h;
        let down = loss.evaluate(&net.forward(&x), targets).0;
        *net.parameter_mut(i) = w;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get(i);
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut combos = 0;
    for activation in [Activation::Identity, Activation::Tanh, Activation::Relu, Activation::Sigmoid] {
        for loss in [Loss::MeanSquared, Loss::CrossEntropy] {
            worst = worst.max(gradient_error(activation, loss, &mut rng));
            combos += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-4 && within(elapsed, 60),
        format!("max relative error {worst:.3e} over {combos} activation/loss pairs, {elapsed:.2?}"),
    )
}

struct LabRun {
    report: MismatchReport,
    logs: Vec<Vec<u8>>,
    report_bytes: Vec<u8>,
    elapsed: Duration,
}

fn lab_run(workers: usize) -> LabRun {
    let start = Instant::now();
    let spec = ProtocolRunSpec::from_toml(ILLPOSED_HUE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_protocol(&spec, dir.path(), workers).unwrap();
    let analysis = analyze(&out.records(), &analysis_config(&spec).unwrap(), out.manifest.logs.clone()).unwrap();
    let report_bytes = analysis.report.to_json().into_bytes();
    LabRun {
        report: analysis.report,
        logs: out.log_paths.iter().map(|p| fs::read(p).unwrap()).collect(),
        report_bytes,
        elapsed: start.elapsed(),
    }
}

fn positive(v: MismatchValue) -> bool {
    matches!(v, MismatchValue::Finite(x) if x > 0.0)
}

fn criterion_7(first: &LabRun) -> Outcome {
    let r = &first.report;
    let per_fold: Vec<MismatchValue> = r.folds.iter().map(|f| f.scalars.mofm_max).collect();
    let pass = within(first.elapsed, 300) && positive(r.scalars.mofm_max) && per_fold.len() == 5 && per_fold.iter().all(|&v| positive(v));
    let folds: Vec<String> = per_fold.iter().map(|v| format!("{:.2}", v.as_f64())).collect();
    outcome(
        pass,
        format!(
            "mean-curve mOFM {:.2} (MOFM {:.2}), per-fold mOFM [{}], {:.2?}",
            r.scalars.mofm_max.as_f64(),
            r.scalars.mofm.as_f64(),
            folds.join(", "),
            first.elapsed
        ),
    )
}

fn criterion_8() -> (Outcome, String) {
    let start = Instant::now();
    let spec = ProtocolRunSpec::from_toml(SIZE_SWEEP).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rows = run_sweep(&spec, dir.path(), 4).unwrap();
    let table = fs::read_to_string(dir.path().join(SWEEP_TABLE)).unwrap();
    let sizes: Vec<usize> = rows.iter().map(|r| r.representation_size).collect();
    let pass = sizes == [4, 16, 64] && table.lines().count() == 4;
    (outcome(pass, format!("sizes {sizes:?}, {:.2?}", start.elapsed())), table)
}

fn criterion_9(first: &LabRun, second: &LabRun) -> Outcome {
    let logs_equal = first.logs == second.logs;
    let reports_equal = first.report_bytes == second.report_bytes;
    outcome(
        logs_equal && reports_equal,
        format!("logs identical: {logs_equal}, reports identical: {reports_equal} (1 vs 4 workers)"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        if !o.pass {
            failed += 1;
        }
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };

    report("1 oracle equivalence", criterion_1());
    report("2 worked example", criterion_2());
    let sets = fold_sets();
    let (a, b, info) = criterion_3(&sets);
    report("3a fold-mean M3 equivalence", a);
    report("3b fold-mean MOFM lower bound", b);
    for line in info {
        println!("       {line}");
    }
    report("4 convergence semantics", criterion_4());
    report("5 affine invariance", criterion_5());
    report("6 gradient check", criterion_6());
    let first = lab_run(1);
    report("7 ill-posed pair mismatch", criterion_7(&first));
    let (o, table) = criterion_8();
    report("8 representation-size sweep", o);
    for line in table.lines() {
        println!("       {line}");
    }
    let second = lab_run(4);
    report("9 lab determinism", criterion_9(&first, &second));

    println!("{failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
