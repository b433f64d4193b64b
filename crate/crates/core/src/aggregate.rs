//! Cross-validation folds: common truncation, fold-mean curves and
//! per-fold ranges around the headline (fold-mean) metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{
    detect_convergence, truncate_at_convergence, ConvergencePolicy, ConvergenceResult, CurveError,
    MetricSeries, Origin, PairedRun,
};
use crate::metrics::{MetricOptions, MetricsError, MismatchValue, RunMetrics, Scalars};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("a fold set needs at least two folds, got {0}")]
    TooFewFolds(usize),
    #[error("fold {fold} is measured on a different step grid than fold 0")]
    GridMismatch { fold: usize },
    #[error("fold {fold} differs from fold 0 in metric name, unit or direction")]
    MetadataMismatch { fold: usize },
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// k aligned runs from cross-validation, in fixed fold order.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldSet {
    folds: Vec<PairedRun>,
}

fn same_kind(a: &MetricSeries, b: &MetricSeries) -> bool {
    a.metric_name() == b.metric_name() && a.unit() == b.unit() && a.direction() == b.direction()
}

impl FoldSet {
    pub fn new(folds: Vec<PairedRun>) -> Result<Self, AggregateError> {
        if folds.len() < 2 {
            return Err(AggregateError::TooFewFolds(folds.len()));
        }
        let first = &folds[0];
        for (fold, run) in folds.iter().enumerate().skip(1) {
            if run.steps() != first.steps() {
                return Err(AggregateError::GridMismatch { fold });
            }
            if !same_kind(run.pretext(), first.pretext()) || !same_kind(run.target(), first.target()) {
                return Err(AggregateError::MetadataMismatch { fold });
            }
        }
        Ok(Self { folds })
    }

    pub fn folds(&self) -> &[PairedRun] {
        &self.folds
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Detects convergence on every fold's pretext curve and cuts all folds
    /// at the earliest stop step.
    pub fn truncate_to_common_stop(
        &self,
        policy: &ConvergencePolicy,
    ) -> Result<(FoldSet, Vec<ConvergenceResult>), AggregateError> {
        let results = self
            .folds
            .iter()
            .map(|run| detect_convergence(run.pretext(), policy))
            .collect::<Result<Vec<_>, _>>()?;
        let stop = results.iter().map(|r| r.stop_step).min().expect("k >= 2");
        let common = ConvergenceResult {
            stop_step: stop,
            best_step: stop,
            converged: true,
        };
        let folds = self
            .folds
            .iter()
            .map(|run| truncate_at_convergence(run, &common))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((FoldSet { folds }, results))
    }
}

fn mean_series(series: &[&MetricSeries]) -> MetricSeries {
    let first = series[0];
    let k = series.len() as f64;
    let values = (0..first.len())
        .map(|i| series.iter().map(|s| s.values()[i]).sum::<f64>() / k)
        .collect();
    let origins = (0..first.len())
        .map(|i| {
            if series.iter().all(|s| s.origins()[i] == Origin::Measured) {
                Origin::Measured
            } else {
                Origin::Interpolated
            }
        })
        .collect();
    let mut mean = MetricSeries::with_origins(
        first.metric_name(),
        first.unit(),
        first.direction(),
        first.steps().to_vec(),
        values,
        origins,
    )
    .expect("mean of valid aligned series is valid");
    mean.set_transform(first.transform());
    mean
}

/// Elementwise, unweighted mean of the pretext and target curves.
pub fn mean_curves(folds: &FoldSet) -> PairedRun {
    let pretext: Vec<_> = folds.folds.iter().map(PairedRun::pretext).collect();
    let target: Vec<_> = folds.folds.iter().map(PairedRun::target).collect();
    PairedRun::new(mean_series(&pretext), mean_series(&target)).expect("folds share a grid")
}

/// A headline value with the spread of the per-fold values around it.
///
/// `plus`/`minus` are the distances from the center to the largest and
/// smallest fold value, floored at zero: for the OFM family the center is
/// computed on mean curves and may lie outside the fold extrema, which are
/// kept alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangedValue {
    pub center: MismatchValue,
    pub plus: MismatchValue,
    pub minus: MismatchValue,
    pub fold_min: MismatchValue,
    pub fold_max: MismatchValue,
}

impl RangedValue {
    pub fn new(center: MismatchValue, per_fold: &[MismatchValue]) -> Self {
        let fold_max = per_fold.iter().fold(MismatchValue::Finite(f64::NEG_INFINITY), |a, &v| a.max(v));
        let fold_min = per_fold
            .iter()
            .map(MismatchValue::as_f64)
            .fold(f64::INFINITY, f64::min)
            .into();
        match (center, fold_max, fold_min) {
            (MismatchValue::Finite(c), MismatchValue::Finite(hi), MismatchValue::Finite(lo)) => Self {
                center,
                plus: MismatchValue::Finite((hi - c).max(0.0)),
                minus: MismatchValue::Finite((c - lo).max(0.0)),
                fold_min,
                fold_max,
            },
            _ => Self {
                center,
                plus: MismatchValue::Infinite,
                minus: MismatchValue::Infinite,
                fold_min,
                fold_max,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldMetrics {
    /// Metrics on the fold-mean curves.
    pub mean_run: PairedRun,
    pub center: RunMetrics,
    pub per_fold: Vec<RunMetrics>,
    pub ranges: Scalars<RangedValue>,
}

/// Computes every metric on the fold-mean curves and on each fold, and
/// attaches per-fold ranges. Folds must already share a truncation point.
pub fn report_with_ranges(folds: &FoldSet, options: MetricOptions) -> Result<FoldMetrics, AggregateError> {
    let mean_run = mean_curves(folds);
    let center = RunMetrics::compute(&mean_run, options)?;
    let per_fold = folds
        .folds
        .iter()
        .map(|run| RunMetrics::compute(run, options))
        .collect::<Result<Vec<_>, _>>()?;
    let pick = |f: &dyn Fn(&Scalars<MismatchValue>) -> Option<MismatchValue>| -> Option<RangedValue> {
        let c = f(&center.scalars)?;
        let vals: Option<Vec<_>> = per_fold.iter().map(|m| f(&m.scalars)).collect();
        Some(RangedValue::new(c, &vals?))
    };
    let ranges = Scalars {
        mm3: pick(&|s| s.mm3),
        msm3: pick(&|s| Some(s.msm3)).expect("always present"),
        csm3: pick(&|s| Some(s.csm3)).expect("always present"),
        msm3_max: pick(&|s| Some(s.msm3_max)).expect("always present"),
        mofm: pick(&|s| Some(s.mofm)).expect("always present"),
        cofm: pick(&|s| Some(s.cofm)).expect("always present"),
        mofm_max: pick(&|s| Some(s.mofm_max)).expect("always present"),
    };
    Ok(FoldMetrics {
        mean_run,
        center,
        per_fold,
        ranges,
    })
}
