//! End-to-end analysis of parsed curve logs: best-of-run target reduction,
//! alignment onto the pretext steps, convergence truncation and metrics.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::aggregate::{report_with_ranges, AggregateError, FoldSet};
use crate::curves::{
    align_on_grid, detect_convergence, truncate_at_convergence, ConvergencePolicy, CurveError, Origin,
    PairedRun,
};
use crate::io::log::{pretext_series, reduce_target_runs, LogRecord, ReduceError, SeriesKind};
use crate::io::report::{
    ConfigEcho, ConvergenceSection, Curves, FoldConvergence, FoldEntry, MismatchReport, SeriesInfo, ToolInfo,
    SCHEMA_VERSION,
};
use crate::metrics::{BaselinePolicy, MetricOptions, MetricsError, RunMetrics, UnitCheck};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyzeError {
    #[error("{0}")]
    Selection(String),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("fold {fold}: {message}")]
    Fold { fold: u32, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeConfig {
    pub policy: ConvergencePolicy,
    /// Base for turning higher-is-better metrics into lower-is-better ones
    /// (`base - v`); negation when absent.
    pub complement_base: Option<f64>,
    pub units: UnitCheck,
    pub baseline: BaselinePolicy,
    pub run_id: Option<String>,
    pub pretext_metric: Option<String>,
    pub target_metric: Option<String>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            policy: ConvergencePolicy::default(),
            complement_base: None,
            units: UnitCheck::Enforce,
            baseline: BaselinePolicy::RequireStepZero,
            run_id: None,
            pretext_metric: None,
            target_metric: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub report: MismatchReport,
    /// Headline run (fold mean when several folds exist), as analyzed.
    pub run: PairedRun,
}

fn pick(what: &str, requested: Option<&str>, available: BTreeSet<&str>) -> Result<String, AnalyzeError> {
    match requested {
        Some(name) if available.contains(name) => Ok(name.to_owned()),
        Some(name) => Err(AnalyzeError::Selection(format!(
            "{what} `{name}` not found; available: {}",
            available.into_iter().collect::<Vec<_>>().join(", ")
        ))),
        None if available.len() == 1 => Ok(available.into_iter().next().unwrap().to_owned()),
        None if available.is_empty() => Err(AnalyzeError::Selection(format!("log contains no {what}"))),
        None => Err(AnalyzeError::Selection(format!(
            "several {what}s in log ({}); choose one",
            available.into_iter().collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Builds the aligned, untruncated run of one fold.
fn fold_run(
    fold: u32,
    pretext: &crate::curves::MetricSeries,
    target: &crate::curves::MetricSeries,
    notes: &mut Vec<String>,
) -> Result<PairedRun, AnalyzeError> {
    let first = target.steps()[0];
    let last = *target.steps().last().unwrap();
    let grid: Vec<_> = pretext
        .steps()
        .iter()
        .copied()
        .filter(|s| (first..=last).contains(s))
        .collect();
    if grid.is_empty() {
        return Err(AnalyzeError::Fold {
            fold,
            message: format!("no pretext step lies within the target snapshot range [{first}, {last}]"),
        });
    }
    if pretext.steps()[0] < first {
        notes.push(format!(
            "fold {fold}: pretext steps before the first target snapshot ({first}) were dropped"
        ));
    }
    if *pretext.steps().last().unwrap() > last {
        notes.push(format!(
            "fold {fold}: pretext steps after the last target snapshot ({last}) were dropped"
        ));
    }
    let missing: Vec<_> = target.steps().iter().filter(|s| !grid.contains(s)).collect();
    if !missing.is_empty() {
        return Err(AnalyzeError::Fold {
            fold,
            message: format!("target snapshots {missing:?} have no pretext measurement"),
        });
    }
    let p = align_on_grid(pretext, &grid)?;
    let t = align_on_grid(target, &grid)?;
    Ok(PairedRun::new(p, t)?)
}

/// Runs the whole pipeline on a record set.
///
/// `inputs` is echoed verbatim in the report configuration block.
pub fn analyze(records: &[LogRecord], config: &AnalyzeConfig, inputs: Vec<String>) -> Result<Analysis, AnalyzeError> {
    let run_id = pick("run_id", config.run_id.as_deref(), records.iter().map(|r| r.run_id.as_str()).collect())?;
    let records: Vec<LogRecord> = records.iter().filter(|r| r.run_id == run_id).cloned().collect();
    let metrics_of = |kind: SeriesKind| -> BTreeSet<&str> {
        records.iter().filter(|r| r.series == kind).map(|r| r.metric.as_str()).collect()
    };
    let pretext_metric = pick("pretext metric", config.pretext_metric.as_deref(), metrics_of(SeriesKind::PretextEval))?;
    let target_metric = pick("target metric", config.target_metric.as_deref(), metrics_of(SeriesKind::TargetEval))?;

    let pretexts = pretext_series(&records, &pretext_metric, config.complement_base)?;
    let targets = reduce_target_runs(&records, &target_metric, config.complement_base)?;
    let folds: BTreeSet<u32> = pretexts.keys().chain(targets.keys()).copied().collect();

    let mut notes = Vec::new();
    let mut runs: BTreeMap<u32, PairedRun> = BTreeMap::new();
    for &fold in &folds {
        let (Some(p), Some(t)) = (pretexts.get(&fold), targets.get(&fold)) else {
            return Err(AnalyzeError::Fold {
                fold,
                message: "needs both pretext_eval and target_eval records".into(),
            });
        };
        runs.insert(fold, fold_run(fold, p, t, &mut notes)?);
    }
    notes.dedup();

    let options = MetricOptions {
        units: config.units,
        baseline: config.baseline,
    };
    let fold_ids: Vec<u32> = runs.keys().copied().collect();
    let runs: Vec<PairedRun> = runs.into_values().collect();

    let (run, center, per_fold, ranges, convergence) = if runs.len() == 1 {
        let result = detect_convergence(runs[0].pretext(), &config.policy)?;
        let run = truncate_at_convergence(&runs[0], &result)?;
        let metrics = RunMetrics::compute(&run, options)?;
        let conv = ConvergenceSection {
            stop_step: result.stop_step,
            per_fold: vec![FoldConvergence {
                fold: fold_ids[0],
                stop_step: result.stop_step,
                best_step: result.best_step,
                converged: result.converged,
            }],
        };
        (run, metrics.clone(), vec![metrics], None, conv)
    } else {
        let set = FoldSet::new(runs).map_err(|e| match e {
            AggregateError::GridMismatch { fold } => AnalyzeError::Fold {
                fold: fold_ids[fold],
                message: format!("step grid differs from fold {}", fold_ids[0]),
            },
            other => other.into(),
        })?;
        let (cut, results) = set.truncate_to_common_stop(&config.policy)?;
        let agg = report_with_ranges(&cut, options)?;
        let conv = ConvergenceSection {
            stop_step: *cut.folds()[0].steps().last().unwrap(),
            per_fold: fold_ids
                .iter()
                .zip(&results)
                .map(|(&fold, r)| FoldConvergence {
                    fold,
                    stop_step: r.stop_step,
                    best_step: r.best_step,
                    converged: r.converged,
                })
                .collect(),
        };
        (agg.mean_run, agg.center, agg.per_fold, Some(agg.ranges), conv)
    };

    if center.m3.is_none() {
        notes.push(format!(
            "hard mismatch not computed: pretext unit `{}` differs from target unit `{}`",
            run.pretext().unit(),
            run.target().unit()
        ));
    }
    if center.normalized.context.infinite {
        notes.push("target never improved on its untrained baseline and later got worse: OFM is infinite".into());
    }
    let interpolated = run.target().origins().iter().filter(|o| **o == Origin::Interpolated).count();
    if interpolated > 0 {
        notes.push(format!("{interpolated} of {} target points are linearly interpolated", run.len()));
    }

    let report = MismatchReport {
        schema_version: SCHEMA_VERSION,
        tool: ToolInfo::default(),
        config: ConfigEcho {
            patience: config.policy.patience(),
            min_delta: config.policy.min_delta(),
            complement_base: config.complement_base,
            allow_incomparable_units: config.units == UnitCheck::Override,
            allow_missing_baseline: config.baseline == BaselinePolicy::AllowMissing,
            run_id,
            pretext_metric,
            target_metric,
            inputs,
        },
        convergence,
        n: run.len(),
        pretext: SeriesInfo::of(run.pretext()),
        target: SeriesInfo::of(run.target()),
        normalization: center.normalized.context,
        scalars: center.scalars.clone(),
        ranges,
        folds: fold_ids
            .iter()
            .zip(&per_fold)
            .map(|(&fold, m)| FoldEntry {
                fold,
                normalization: m.normalized.context,
                scalars: m.scalars.clone(),
            })
            .collect(),
        curves: Curves {
            steps: run.steps().to_vec(),
            pretext: run.pretext().values().to_vec(),
            target: run.target().values().to_vec(),
            target_origin: run.target().origins().to_vec(),
            m3: center.m3.clone(),
            sm3: center.sm3.clone(),
            normalized: center.normalized.values.clone(),
            ofm: center.ofm.clone(),
        },
        notes,
    };
    Ok(Analysis { report, run })
}
