//! Mismatch metrics between a pretext curve and the curve of target models
//! retrained on pretext snapshots.
//!
//! All inputs are canonical (lower is better) and already truncated at the
//! pretext convergence step, so every mean runs over the full tuple.
//!
//! * hard metrics mismatch: `M3_i = t_i - p_i`, and its mean `MM3`.
//! * soft metrics mismatch: `SM3_i = t_i - min_{j<=i} t_j`, its mean `MSM3`,
//!   final value `cSM3` and maximum `mSM3`.
//! * objective function mismatch: SM3 of the target curve rescaled so that
//!   100 corresponds to the gap between the untrained baseline `t_1` and the
//!   global best `t_b`. `MOFM`, `cOFM` and `mOFM` follow the SM3 pattern.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{CurveError, MetricSeries, PairedRun};
use crate::fmt::round_sig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(
        "pretext unit `{pretext}` and target unit `{target}` are not comparable; \
         the hard mismatch needs both metrics on the same scale (override to force)"
    )]
    IncomparableUnits { pretext: String, target: String },
    #[error(
        "target curve starts at step {first_step}, but the objective function mismatch is \
         normalized against the target trained on the untrained pretext model, which must be \
         measured at step 0 (allow a missing baseline to use the first step instead)"
    )]
    MissingBaseline { first_step: u64 },
}

/// A mismatch value; `Infinite` marks the forgetting case where the target
/// never improved on its untrained baseline and then got worse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MismatchValue {
    Finite(f64),
    Infinite,
}

impl MismatchValue {
    pub const ZERO: MismatchValue = MismatchValue::Finite(0.0);

    pub fn is_infinite(&self) -> bool {
        matches!(self, MismatchValue::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            MismatchValue::Finite(v) => Some(v),
            MismatchValue::Infinite => None,
        }
    }

    /// `f64::INFINITY` for the infinite marker.
    pub fn as_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn max(self, other: MismatchValue) -> MismatchValue {
        match (self, other) {
            (MismatchValue::Finite(a), MismatchValue::Finite(b)) => MismatchValue::Finite(a.max(b)),
            _ => MismatchValue::Infinite,
        }
    }
}

impl fmt::Display for MismatchValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MismatchValue::Finite(v) => write!(f, "{v}"),
            MismatchValue::Infinite => f.write_str("inf"),
        }
    }
}

impl From<f64> for MismatchValue {
    fn from(v: f64) -> Self {
        if v.is_infinite() && v > 0.0 {
            MismatchValue::Infinite
        } else {
            MismatchValue::Finite(v)
        }
    }
}

impl Serialize for MismatchValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            MismatchValue::Finite(v) => s.serialize_f64(round_sig(v)),
            MismatchValue::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for MismatchValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = MismatchValue;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                Ok(MismatchValue::Finite(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Ok(MismatchValue::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(MismatchValue::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                if v == "inf" {
                    Ok(MismatchValue::Infinite)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Whether the hard mismatch may compare metrics with different units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnitCheck {
    #[default]
    Enforce,
    Override,
}

/// Whether the first target point must sit at step 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselinePolicy {
    #[default]
    RequireStepZero,
    AllowMissing,
}

fn check_run(run: &PairedRun, units: UnitCheck) -> Result<(), MetricsError> {
    run.pretext().ensure_canonical()?;
    run.target().ensure_canonical()?;
    if units == UnitCheck::Enforce && run.pretext().unit() != run.target().unit() {
        return Err(MetricsError::IncomparableUnits {
            pretext: run.pretext().unit().to_owned(),
            target: run.target().unit().to_owned(),
        });
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn m3_curve(run: &PairedRun, units: UnitCheck) -> Result<Vec<f64>, MetricsError> {
    check_run(run, units)?;
    Ok(run
        .target()
        .values()
        .iter()
        .zip(run.pretext().values())
        .map(|(t, p)| t - p)
        .collect())
}

pub fn mm3(run: &PairedRun, units: UnitCheck) -> Result<f64, MetricsError> {
    Ok(mean(&m3_curve(run, units)?))
}

/// Excess of each value over the running minimum up to and including it.
pub fn soft_excess(values: &[f64]) -> Vec<f64> {
    let mut running = f64::INFINITY;
    values
        .iter()
        .map(|&v| {
            running = running.min(v);
            v - running
        })
        .collect()
}

pub fn sm3_curve(target: &MetricSeries) -> Result<Vec<f64>, MetricsError> {
    target.ensure_canonical()?;
    Ok(soft_excess(target.values()))
}

pub fn msm3(target: &MetricSeries) -> Result<f64, MetricsError> {
    Ok(mean(&sm3_curve(target)?))
}

pub fn csm3(target: &MetricSeries) -> Result<f64, MetricsError> {
    Ok(*sm3_curve(target)?.last().expect("series is non-empty"))
}

pub fn msm3_max(target: &MetricSeries) -> Result<f64, MetricsError> {
    Ok(sm3_curve(target)?.into_iter().fold(0.0, f64::max))
}

/// How the target curve is rescaled to percent of learned improvement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationContext {
    /// Target value on the untrained pretext model.
    #[serde(serialize_with = "crate::fmt::sig9")]
    pub baseline: f64,
    /// Global minimum of the target curve.
    #[serde(serialize_with = "crate::fmt::sig9")]
    pub best: f64,
    /// Earliest index attaining `best`.
    pub best_index: usize,
    /// `100 / (baseline - best)` when the target improved on its baseline.
    #[serde(serialize_with = "crate::fmt::sig9_opt")]
    pub scale: Option<f64>,
    /// Baseline is the best value and the curve later rises above it.
    pub infinite: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub context: NormalizationContext,
    pub values: Vec<MismatchValue>,
}

pub fn normalization_context(
    target: &MetricSeries,
    baseline: BaselinePolicy,
) -> Result<NormalizationContext, MetricsError> {
    target.ensure_canonical()?;
    let first_step = target.steps()[0];
    if baseline == BaselinePolicy::RequireStepZero && first_step != 0 {
        return Err(MetricsError::MissingBaseline { first_step });
    }
    let values = target.values();
    let base = values[0];
    let (best_index, best) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, base), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let scale = (base > best).then(|| 100.0 / (base - best));
    let infinite = scale.is_none() && values.iter().any(|&v| v > base);
    Ok(NormalizationContext {
        baseline: base,
        best,
        best_index,
        scale,
        infinite,
    })
}

impl NormalizationContext {
    /// `100 · v / (baseline - best)`, or `None` without an improvement gap.
    pub fn rescale(&self, v: f64) -> Option<f64> {
        self.scale.map(|_| 100.0 * v / (self.baseline - self.best))
    }
}

/// Rescales every target value.
///
/// With a positive improvement gap all values are mapped through
/// [`NormalizationContext::rescale`], including values above the baseline. A flat
/// curve maps to zeros. When the baseline is the best value, points above
/// it are infinite.
pub fn normalize(target: &MetricSeries, baseline: BaselinePolicy) -> Result<Normalized, MetricsError> {
    let context = normalization_context(target, baseline)?;
    let values = target
        .values()
        .iter()
        .map(|&v| match context.rescale(v) {
            Some(n) => MismatchValue::Finite(n),
            None if v > context.baseline => MismatchValue::Infinite,
            None => MismatchValue::ZERO,
        })
        .collect();
    Ok(Normalized { context, values })
}

/// Per-step objective function mismatch.
///
/// In the forgetting case every step from the first rise above the flat
/// baseline onwards is infinite.
pub fn ofm_curve(
    target: &MetricSeries,
    baseline: BaselinePolicy,
) -> Result<(NormalizationContext, Vec<MismatchValue>), MetricsError> {
    let context = normalization_context(target, baseline)?;
    let curve = match context.scale {
        Some(_) => {
            let normalized: Vec<f64> = target.values().iter().filter_map(|&v| context.rescale(v)).collect();
            soft_excess(&normalized).into_iter().map(MismatchValue::Finite).collect()
        }
        None => {
            let mut forgot = false;
            target
                .values()
                .iter()
                .map(|&v| {
                    forgot |= v > context.baseline;
                    if forgot {
                        MismatchValue::Infinite
                    } else {
                        MismatchValue::ZERO
                    }
                })
                .collect()
        }
    };
    Ok((context, curve))
}

fn mean_value(curve: &[MismatchValue]) -> MismatchValue {
    let mut sum = 0.0;
    for v in curve {
        match v {
            MismatchValue::Finite(x) => sum += x,
            MismatchValue::Infinite => return MismatchValue::Infinite,
        }
    }
    MismatchValue::Finite(sum / curve.len() as f64)
}

fn max_value(curve: &[MismatchValue]) -> MismatchValue {
    curve.iter().fold(MismatchValue::ZERO, |acc, &v| acc.max(v))
}

pub fn mofm(target: &MetricSeries, baseline: BaselinePolicy) -> Result<MismatchValue, MetricsError> {
    Ok(mean_value(&ofm_curve(target, baseline)?.1))
}

pub fn cofm(target: &MetricSeries, baseline: BaselinePolicy) -> Result<MismatchValue, MetricsError> {
    Ok(*ofm_curve(target, baseline)?.1.last().expect("series is non-empty"))
}

pub fn mofm_max(target: &MetricSeries, baseline: BaselinePolicy) -> Result<MismatchValue, MetricsError> {
    Ok(max_value(&ofm_curve(target, baseline)?.1))
}

/// Scalar summaries of one run. `T` is a plain value for a single run and
/// a ranged value for a cross-validated set of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalars<T> {
    /// Absent when the two metrics are not comparable.
    pub mm3: Option<T>,
    pub msm3: T,
    pub csm3: T,
    pub msm3_max: T,
    pub mofm: T,
    pub cofm: T,
    pub mofm_max: T,
}

impl<T> Scalars<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Scalars<U> {
        Scalars {
            mm3: self.mm3.as_ref().map(&mut f),
            msm3: f(&self.msm3),
            csm3: f(&self.csm3),
            msm3_max: f(&self.msm3_max),
            mofm: f(&self.mofm),
            cofm: f(&self.cofm),
            mofm_max: f(&self.mofm_max),
        }
    }

    /// `(name, value)` pairs in report order.
    pub fn entries(&self) -> Vec<(&'static str, &T)> {
        let mut out = Vec::with_capacity(7);
        if let Some(v) = &self.mm3 {
            out.push(("mm3", v));
        }
        out.extend([
            ("msm3", &self.msm3),
            ("csm3", &self.csm3),
            ("msm3_max", &self.msm3_max),
            ("mofm", &self.mofm),
            ("cofm", &self.cofm),
            ("mofm_max", &self.mofm_max),
        ]);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricOptions {
    pub units: UnitCheck,
    pub baseline: BaselinePolicy,
}

/// Every per-step curve and scalar for one truncated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub m3: Option<Vec<f64>>,
    pub sm3: Vec<f64>,
    pub normalized: Normalized,
    pub ofm: Vec<MismatchValue>,
    pub scalars: Scalars<MismatchValue>,
}

impl RunMetrics {
    pub fn compute(run: &PairedRun, options: MetricOptions) -> Result<Self, MetricsError> {
        let m3 = match m3_curve(run, options.units) {
            Ok(curve) => Some(curve),
            Err(MetricsError::IncomparableUnits { .. }) => None,
            Err(e) => return Err(e),
        };
        let target = run.target();
        let sm3 = sm3_curve(target)?;
        let normalized = normalize(target, options.baseline)?;
        let (_, ofm) = ofm_curve(target, options.baseline)?;
        let scalars = Scalars {
            mm3: m3.as_deref().map(|c| MismatchValue::Finite(mean(c))),
            msm3: MismatchValue::Finite(mean(&sm3)),
            csm3: MismatchValue::Finite(*sm3.last().expect("series is non-empty")),
            msm3_max: MismatchValue::Finite(sm3.iter().copied().fold(0.0, f64::max)),
            mofm: mean_value(&ofm),
            cofm: *ofm.last().expect("series is non-empty"),
            mofm_max: max_value(&ofm),
        };
        Ok(Self {
            m3,
            sm3,
            normalized,
            ofm,
            scalars,
        })
    }
}
