use mismatch_core::io::plot::{mismatch_table, normalized_table};
use mismatch_core::io::{parse_log, write_log, write_report, SeriesKind};
use mismatch_core::{analyze, AnalyzeConfig, Direction, LogRecord, MismatchReport, MismatchValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(fold: u32, series: SeriesKind, snapshot: Option<u64>, epoch: u64, metric: &str, value: f64) -> LogRecord {
    LogRecord {
        run_id: "r".into(),
        fold,
        series,
        snapshot_step: snapshot,
        epoch,
        metric: metric.into(),
        value,
        direction: Direction::LowerIsBetter,
    }
}

/// Strictly decreasing pretext curves and noisy target curves over `folds`.
fn random_log(rng: &mut impl Rng, folds: u32, steps: u64) -> Vec<LogRecord> {
    let mut out = Vec::new();
    for fold in 0..folds {
        let mut p = 5.0;
        for s in 0..steps {
            p -= rng.random_range(0.01..0.5);
            out.push(record(fold, SeriesKind::PretextEval, None, s, "mse", p));
            for epoch in 1..=3 {
                let v = rng.random_range(0.5..3.0);
                out.push(record(fold, SeriesKind::TargetEval, Some(s), epoch, "ce", v));
            }
        }
    }
    out
}

fn worked_example() -> Vec<LogRecord> {
    let mut out = Vec::new();
    for (s, (p, t)) in [0.9, 0.7, 0.5, 0.4].into_iter().zip([10.0, 6.0, 2.0, 4.0]).enumerate() {
        out.push(record(0, SeriesKind::PretextEval, None, s as u64, "mse", p));
        out.push(record(0, SeriesKind::TargetEval, Some(s as u64), 1, "ce", t));
    }
    out
}

fn report_of(records: &[LogRecord]) -> MismatchReport {
    analyze(records, &AnalyzeConfig::default(), vec!["in.jsonl".into()]).unwrap().report
}

#[test]
fn worked_example_report_has_mofm_6_25() {
    let report = report_of(&worked_example());
    assert_eq!(report.scalars.mofm, MismatchValue::Finite(6.25));
    assert!(report.to_json().contains("\"mofm\": 6.25"));
}

#[test]
fn serialization_is_deterministic_and_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let folds = rng.random_range(1..5);
        let steps = rng.random_range(3..12);
        let records = random_log(&mut rng, folds, steps);
        let report = report_of(&records);
        let text = report.to_json();
        assert_eq!(text, report_of(&records).to_json());
        let mut buf = Vec::new();
        write_report(&report, &mut buf).unwrap();
        assert_eq!(buf, text.as_bytes());
        let parsed = MismatchReport::from_json(&text).unwrap();
        assert_eq!(parsed.to_json(), text);
        for ((name, a), (_, b)) in report.scalars.entries().into_iter().zip(parsed.scalars.entries()) {
            match (a, b) {
                (MismatchValue::Finite(x), MismatchValue::Finite(y)) => {
                    assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-300), "{name}: {x} vs {y}")
                }
                (a, b) => assert_eq!(a, b, "{name}"),
            }
        }
    }
}

#[test]
fn infinite_marker_survives_round_trip() {
    let mut records = worked_example();
    for r in records.iter_mut().filter(|r| r.series == SeriesKind::TargetEval) {
        r.value = [2.0, 2.0, 3.0, 3.0][r.snapshot_step.unwrap() as usize];
    }
    let report = report_of(&records);
    assert_eq!(report.scalars.mofm, MismatchValue::Infinite);
    let text = report.to_json();
    assert!(text.contains("\"mofm\": \"inf\""));
    assert_eq!(MismatchReport::from_json(&text).unwrap().scalars.mofm, MismatchValue::Infinite);
    assert!(mismatch_table(&report).lines().last().unwrap().ends_with("\tinf"));
}

#[test]
fn plot_tables_agree_with_report_scalars() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let folds = rng.random_range(1..4);
        let steps = rng.random_range(3..15);
        let report = report_of(&random_log(&mut rng, folds, steps));
        let Some(mofm) = report.scalars.mofm.finite() else { continue };
        let table = mismatch_table(&report);
        let column: Vec<f64> = table.lines().skip(1).map(|l| l.split('\t').nth(3).unwrap().parse().unwrap()).collect();
        let recomputed = column.iter().sum::<f64>() / column.len() as f64;
        assert!((recomputed - mofm).abs() <= 1e-9, "{recomputed} vs {mofm}");
        let max = column.iter().cloned().fold(0.0, f64::max);
        assert!((max - report.scalars.mofm_max.as_f64()).abs() <= 1e-9);
    }
}

#[test]
fn shifted_normalized_column_of_the_worked_example() {
    let table = normalized_table(&report_of(&worked_example()));
    let rows: Vec<Vec<&str>> = table.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows[0], ["step", "normalized", "shifted"]);
    let normalized: Vec<&str> = rows[1..].iter().map(|r| r[1]).collect();
    let shifted: Vec<&str> = rows[1..].iter().map(|r| r[2]).collect();
    assert_eq!(normalized, ["125", "75", "25", "50"]);
    assert_eq!(shifted, ["100", "50", "0", "25"]);
}

#[test]
fn logs_round_trip_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let records = random_log(&mut rng, 3, 6);
    assert_eq!(parse_log(write_log(&records).as_bytes()).unwrap(), records);
}

#[test]
fn record_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let records = random_log(&mut rng, 2, 8);
    let mut shuffled = records.clone();
    shuffled.reverse();
    assert_eq!(report_of(&records).to_json(), report_of(&shuffled).to_json());
}
