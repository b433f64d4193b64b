//! The analysis report: one JSON document with a fixed key order, floats
//! rounded to nine significant digits and `"inf"` for infinite mismatches.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::aggregate::RangedValue;
use crate::curves::{ConvergencePolicy, CurveError, Direction, MetricSeries, Origin, PairedRun, Step, Transform};
use crate::metrics::{MismatchValue, NormalizationContext, Scalars};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
#[error("malformed report: {0}")]
pub struct ParseReportError(#[from] serde_json::Error);
pub const TOOL_NAME: &str = "mismatch";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: TOOL_NAME.to_owned(),
            version: TOOL_VERSION.to_owned(),
        }
    }
}

/// Echo of every setting that influenced the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub patience: usize,
    #[serde(serialize_with = "crate::fmt::sig9")]
    pub min_delta: f64,
    #[serde(serialize_with = "crate::fmt::sig9_opt")]
    pub complement_base: Option<f64>,
    pub allow_incomparable_units: bool,
    pub allow_missing_baseline: bool,
    pub run_id: String,
    pub pretext_metric: String,
    pub target_metric: String,
    pub inputs: Vec<String>,
}

impl ConfigEcho {
    pub fn policy(&self) -> Result<ConvergencePolicy, CurveError> {
        ConvergencePolicy::new(self.min_delta, self.patience)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldConvergence {
    pub fold: u32,
    pub stop_step: Step,
    pub best_step: Step,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSection {
    /// Step at which every curve was cut (the earliest per-fold stop).
    pub stop_step: Step,
    pub per_fold: Vec<FoldConvergence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesInfo {
    pub metric: String,
    pub unit: String,
    pub direction: Direction,
    pub transform: Transform,
}

impl SeriesInfo {
    pub fn of(series: &MetricSeries) -> Self {
        Self {
            metric: series.metric_name().to_owned(),
            unit: series.unit().to_owned(),
            direction: series.direction(),
            transform: series.transform(),
        }
    }
}

/// Per-step curves of the headline run (the fold mean when folds exist).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub steps: Vec<Step>,
    #[serde(serialize_with = "crate::fmt::sig9_vec")]
    pub pretext: Vec<f64>,
    #[serde(serialize_with = "crate::fmt::sig9_vec")]
    pub target: Vec<f64>,
    pub target_origin: Vec<Origin>,
    #[serde(serialize_with = "crate::fmt::sig9_opt_vec")]
    pub m3: Option<Vec<f64>>,
    #[serde(serialize_with = "crate::fmt::sig9_vec")]
    pub sm3: Vec<f64>,
    pub normalized: Vec<MismatchValue>,
    pub ofm: Vec<MismatchValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEntry {
    pub fold: u32,
    pub normalization: NormalizationContext,
    pub scalars: Scalars<MismatchValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub config: ConfigEcho,
    pub convergence: ConvergenceSection,
    pub n: usize,
    pub pretext: SeriesInfo,
    pub target: SeriesInfo,
    pub normalization: NormalizationContext,
    /// Headline values, computed on the fold-mean curves.
    pub scalars: Scalars<MismatchValue>,
    /// Per-fold spread; absent for a single fold.
    pub ranges: Option<Scalars<RangedValue>>,
    pub folds: Vec<FoldEntry>,
    pub curves: Curves,
    pub notes: Vec<String>,
}

impl MismatchReport {
    /// Rebuilds the headline run from the curve block.
    pub fn paired_run(&self) -> Result<PairedRun, CurveError> {
        let pretext = series_from(&self.pretext, &self.curves.steps, &self.curves.pretext, None)?;
        let target = series_from(
            &self.target,
            &self.curves.steps,
            &self.curves.target,
            Some(&self.curves.target_origin),
        )?;
        PairedRun::new(pretext, target)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ParseReportError> {
        Ok(serde_json::from_str(text)?)
    }
}

fn series_from(
    info: &SeriesInfo,
    steps: &[Step],
    values: &[f64],
    origins: Option<&[Origin]>,
) -> Result<MetricSeries, CurveError> {
    let origins = origins.map_or_else(|| vec![Origin::Measured; steps.len()], <[Origin]>::to_vec);
    let mut s = MetricSeries::with_origins(
        info.metric.clone(),
        info.unit.clone(),
        info.direction,
        steps.to_vec(),
        values.to_vec(),
        origins,
    )?;
    s.set_transform(info.transform);
    Ok(s)
}

/// Writes the report document to `dest`.
pub fn write_report(report: &MismatchReport, mut dest: impl Write) -> std::io::Result<()> {
    dest.write_all(report.to_json().as_bytes())?;
    dest.flush()
}
