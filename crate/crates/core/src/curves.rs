//! Metric curves over training steps: validation, direction handling,
//! alignment onto a step grid and early-stopping convergence detection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Training step (epoch or iteration index) at which a metric was measured.
pub type Step = u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("series `{name}` is empty")]
    Empty { name: String },
    #[error("series `{name}` has {steps} steps but {values} values")]
    LengthMismatch {
        name: String,
        steps: usize,
        values: usize,
    },
    #[error("series `{name}`: steps must be strictly increasing (step {next} follows {prev})")]
    UnorderedSteps { name: String, prev: Step, next: Step },
    #[error("series `{name}`: non-finite value {value} at step {step}")]
    NonFinite { name: String, step: Step, value: f64 },
    #[error("series `{name}` is lower-is-better; a complement base only applies to higher-is-better metrics")]
    AmbiguousComplement { name: String },
    #[error("series `{name}` must be canonical (lower-is-better) for this operation")]
    NotCanonical { name: String },
    #[error("series `{name}` carries no transform to invert")]
    NothingToInvert { name: String },
    #[error("grid step {step} lies outside the measured range [{first}, {last}] of `{name}`")]
    OutsideRange {
        name: String,
        step: Step,
        first: Step,
        last: Step,
    },
    #[error("grid steps must be strictly increasing (step {next} follows {prev})")]
    UnorderedGrid { prev: Step, next: Step },
    #[error("pretext and target series are not aligned on the same steps")]
    Misaligned,
    #[error("stop step {0} is not one of the run's steps")]
    UnknownStep(Step),
    #[error("patience must be at least 1")]
    ZeroPatience,
    #[error("min_delta must be finite and non-negative, got {0}")]
    InvalidMinDelta(f64),
    #[error("cannot detect convergence on an empty curve")]
    EmptyCurve,
}

/// Which end of the metric scale is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

/// Records how a canonical series was derived from its source values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Transform {
    Identity,
    /// `base - v`, e.g. accuracy in percent to error in percent.
    Complement { base: f64 },
    Negate,
}

/// Whether a value was observed or filled in by interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Measured,
    Interpolated,
}

/// One metric measured over strictly increasing training steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    metric_name: String,
    unit: String,
    direction: Direction,
    transform: Transform,
    steps: Vec<Step>,
    values: Vec<f64>,
    origins: Vec<Origin>,
}

impl MetricSeries {
    /// Builds a fully measured series, rejecting empty, unordered or
    /// non-finite input.
    pub fn new(
        metric_name: impl Into<String>,
        unit: impl Into<String>,
        direction: Direction,
        steps: Vec<Step>,
        values: Vec<f64>,
    ) -> Result<Self, CurveError> {
        let origins = vec![Origin::Measured; steps.len()];
        Self::with_origins(metric_name, unit, direction, steps, values, origins)
    }

    pub fn with_origins(
        metric_name: impl Into<String>,
        unit: impl Into<String>,
        direction: Direction,
        steps: Vec<Step>,
        values: Vec<f64>,
        origins: Vec<Origin>,
    ) -> Result<Self, CurveError> {
        let name = metric_name.into();
        if steps.is_empty() {
            return Err(CurveError::Empty { name });
        }
        if steps.len() != values.len() || steps.len() != origins.len() {
            return Err(CurveError::LengthMismatch {
                name,
                steps: steps.len(),
                values: values.len(),
            });
        }
        for w in steps.windows(2) {
            if w[1] <= w[0] {
                return Err(CurveError::UnorderedSteps {
                    name,
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        if let Some((&step, &value)) = steps.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
            return Err(CurveError::NonFinite { name, step, value });
        }
        Ok(Self {
            metric_name: name,
            unit: unit.into(),
            direction,
            transform: Transform::Identity,
            steps,
            values,
            origins,
        })
    }

    pub fn metric_name(&self) -> &str {
        &self.metric_name
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origins(&self) -> &[Origin] {
        &self.origins
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    /// Always false; a series holds at least one point.
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_canonical(&self) -> bool {
        self.direction == Direction::LowerIsBetter
    }

    pub(crate) fn ensure_canonical(&self) -> Result<(), CurveError> {
        if self.is_canonical() {
            Ok(())
        } else {
            Err(CurveError::NotCanonical {
                name: self.metric_name.clone(),
            })
        }
    }

    /// Keeps the first `len` points.
    pub fn prefix(&self, len: usize) -> MetricSeries {
        let len = len.clamp(1, self.len());
        MetricSeries {
            steps: self.steps[..len].to_vec(),
            values: self.values[..len].to_vec(),
            origins: self.origins[..len].to_vec(),
            ..self.clone()
        }
    }

    pub(crate) fn set_transform(&mut self, transform: Transform) {
        self.transform = transform;
    }

    pub(crate) fn position(&self, step: Step) -> Option<usize> {
        self.steps.binary_search(&step).ok()
    }
}

/// Maps a series onto lower-is-better form.
///
/// Higher-is-better values become `base - v` when a complement base is
/// given and `-v` otherwise. Lower-is-better input is returned unchanged.
pub fn canonicalize(
    series: &MetricSeries,
    complement_base: Option<f64>,
) -> Result<MetricSeries, CurveError> {
    match (series.direction, complement_base) {
        (Direction::LowerIsBetter, None) => Ok(series.clone()),
        (Direction::LowerIsBetter, Some(_)) => Err(CurveError::AmbiguousComplement {
            name: series.metric_name.clone(),
        }),
        (Direction::HigherIsBetter, base) => {
            let (transform, values): (Transform, Vec<f64>) = match base {
                Some(base) => (
                    Transform::Complement { base },
                    series.values.iter().map(|v| base - v).collect(),
                ),
                None => (Transform::Negate, series.values.iter().map(|v| -v).collect()),
            };
            if let Some((&step, &value)) =
                series.steps.iter().zip(&values).find(|(_, v)| !v.is_finite())
            {
                return Err(CurveError::NonFinite {
                    name: series.metric_name.clone(),
                    step,
                    value,
                });
            }
            Ok(MetricSeries {
                direction: Direction::LowerIsBetter,
                transform,
                values,
                ..series.clone()
            })
        }
    }
}

/// Undoes [`canonicalize`], returning the series in its original direction.
pub fn decanonicalize(series: &MetricSeries) -> Result<MetricSeries, CurveError> {
    let values = match series.transform {
        Transform::Identity => {
            return Err(CurveError::NothingToInvert {
                name: series.metric_name.clone(),
            })
        }
        Transform::Complement { base } => series.values.iter().map(|v| base - v).collect(),
        Transform::Negate => series.values.iter().map(|v| -v).collect(),
    };
    Ok(MetricSeries {
        direction: Direction::HigherIsBetter,
        transform: Transform::Identity,
        values,
        ..series.clone()
    })
}

/// Resamples `series` onto `grid`.
///
/// Measured steps are copied bit for bit; other grid steps are linearly
/// interpolated between the bracketing steps. No extrapolation.
pub fn align_on_grid(series: &MetricSeries, grid: &[Step]) -> Result<MetricSeries, CurveError> {
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(CurveError::UnorderedGrid {
                prev: w[0],
                next: w[1],
            });
        }
    }
    if grid.is_empty() {
        return Err(CurveError::Empty {
            name: series.metric_name.clone(),
        });
    }
    let first = series.steps[0];
    let last = *series.steps.last().expect("series is non-empty");
    let mut values = Vec::with_capacity(grid.len());
    let mut origins = Vec::with_capacity(grid.len());
    for &step in grid {
        if step < first || step > last {
            return Err(CurveError::OutsideRange {
                name: series.metric_name.clone(),
                step,
                first,
                last,
            });
        }
        match series.steps.binary_search(&step) {
            Ok(i) => {
                values.push(series.values[i]);
                origins.push(series.origins[i]);
            }
            Err(hi) => {
                // first <= step <= last and step is absent, so 0 < hi < len
                let lo = hi - 1;
                let (s0, s1) = (series.steps[lo] as f64, series.steps[hi] as f64);
                let (v0, v1) = (series.values[lo], series.values[hi]);
                let t = (step as f64 - s0) / (s1 - s0);
                let v = (v0 + (v1 - v0) * t).clamp(v0.min(v1), v0.max(v1));
                values.push(v);
                origins.push(Origin::Interpolated);
            }
        }
    }
    Ok(MetricSeries {
        steps: grid.to_vec(),
        values,
        origins,
        ..series.clone()
    })
}

/// Early-stopping criterion on a lower-is-better curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePolicy {
    min_delta: f64,
    patience: usize,
}

impl ConvergencePolicy {
    pub fn new(min_delta: f64, patience: usize) -> Result<Self, CurveError> {
        if patience == 0 {
            return Err(CurveError::ZeroPatience);
        }
        if !(min_delta.is_finite() && min_delta >= 0.0) {
            return Err(CurveError::InvalidMinDelta(min_delta));
        }
        Ok(Self {
            min_delta,
            patience,
        })
    }

    pub fn min_delta(&self) -> f64 {
        self.min_delta
    }

    pub fn patience(&self) -> usize {
        self.patience
    }
}

impl Default for ConvergencePolicy {
    /// Patience 3 with a zero improvement threshold.
    fn default() -> Self {
        Self {
            min_delta: 0.0,
            patience: 3,
        }
    }
}

/// Indices into the scanned curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopPoint {
    pub stop_index: usize,
    pub best_index: usize,
    pub converged: bool,
}

/// Scans `values` left to right. An epoch improves iff it is strictly below
/// `best - min_delta`; training stops once `patience` consecutive epochs
/// have failed to improve.
pub fn scan_convergence(values: &[f64], policy: &ConvergencePolicy) -> Result<StopPoint, CurveError> {
    let (&first, rest) = values.split_first().ok_or(CurveError::EmptyCurve)?;
    let mut best = first;
    let mut best_index = 0;
    let mut wait = 0;
    for (offset, &v) in rest.iter().enumerate() {
        let i = offset + 1;
        if v < best - policy.min_delta {
            best = v;
            best_index = i;
            wait = 0;
        } else {
            wait += 1;
            if wait >= policy.patience {
                return Ok(StopPoint {
                    stop_index: i,
                    best_index,
                    converged: true,
                });
            }
        }
    }
    Ok(StopPoint {
        stop_index: values.len() - 1,
        best_index,
        converged: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub stop_step: Step,
    pub best_step: Step,
    pub converged: bool,
}

pub fn detect_convergence(
    series: &MetricSeries,
    policy: &ConvergencePolicy,
) -> Result<ConvergenceResult, CurveError> {
    series.ensure_canonical()?;
    let p = scan_convergence(&series.values, policy)?;
    Ok(ConvergenceResult {
        stop_step: series.steps[p.stop_index],
        best_step: series.steps[p.best_index],
        converged: p.converged,
    })
}

/// Pretext and target curves measured on the same steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    pretext: MetricSeries,
    target: MetricSeries,
}

impl PairedRun {
    pub fn new(pretext: MetricSeries, target: MetricSeries) -> Result<Self, CurveError> {
        if pretext.steps != target.steps {
            return Err(CurveError::Misaligned);
        }
        Ok(Self { pretext, target })
    }

    pub fn pretext(&self) -> &MetricSeries {
        &self.pretext
    }

    pub fn target(&self) -> &MetricSeries {
        &self.target
    }

    pub fn steps(&self) -> &[Step] {
        self.pretext.steps()
    }

    pub fn len(&self) -> usize {
        self.pretext.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_parts(self) -> (MetricSeries, MetricSeries) {
        (self.pretext, self.target)
    }

    pub(crate) fn prefix(&self, len: usize) -> PairedRun {
        PairedRun {
            pretext: self.pretext.prefix(len),
            target: self.target.prefix(len),
        }
    }
}

/// Cuts both curves after the pretext convergence step.
pub fn truncate_at_convergence(
    run: &PairedRun,
    result: &ConvergenceResult,
) -> Result<PairedRun, CurveError> {
    let idx = run
        .pretext
        .position(result.stop_step)
        .ok_or(CurveError::UnknownStep(result.stop_step))?;
    Ok(run.prefix(idx + 1))
}
