//! Line-delimited JSON curve logs.
//!
//! Every line is one flat object:
//!
//! ```text
//! {"run_id":"demo","fold":0,"series":"target_eval","snapshot_step":10,"epoch":3,"metric":"loss","value":0.71,"direction":"lower_is_better"}
//! ```
//!
//! Pretext records carry `"snapshot_step": null`; their `epoch` is the
//! pretext step. Target records carry the pretext step whose frozen
//! representations the target model was trained on, and `epoch` is the
//! target model's own epoch.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{canonicalize, CurveError, Direction, MetricSeries, Step, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    PretextEval,
    PretextTrain,
    TargetEval,
    TargetTrain,
}

impl SeriesKind {
    pub fn is_target(self) -> bool {
        matches!(self, SeriesKind::TargetEval | SeriesKind::TargetTrain)
    }
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeriesKind::PretextEval => "pretext_eval",
            SeriesKind::PretextTrain => "pretext_train",
            SeriesKind::TargetEval => "target_eval",
            SeriesKind::TargetTrain => "target_train",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub run_id: String,
    pub fold: u32,
    pub series: SeriesKind,
    #[serde(default)]
    pub snapshot_step: Option<Step>,
    pub epoch: u64,
    pub metric: String,
    pub value: f64,
    pub direction: Direction,
}

impl LogRecord {
    /// One JSON line, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }

    fn key(&self) -> RecordKey {
        (
            self.run_id.clone(),
            self.fold,
            self.series,
            self.snapshot_step,
            self.epoch,
            self.metric.clone(),
        )
    }
}

type RecordKey = (String, u32, SeriesKind, Option<Step>, u64, String);

/// Where a record came from: source name (usually a file path) and 1-based line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub source: String,
    pub line: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.source.is_empty() {
            write!(f, "line {}", self.line)
        } else {
            write!(f, "{}:{}", self.source, self.line)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogErrorKind {
    #[error("line is not valid UTF-8")]
    Utf8,
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("{0} record must carry a snapshot_step")]
    MissingSnapshot(SeriesKind),
    #[error("{0} record must not carry a snapshot_step")]
    UnexpectedSnapshot(SeriesKind),
    #[error("duplicate record; first seen at {0}")]
    Duplicate(Location),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{at}: {kind}")]
pub struct LogError {
    pub at: Location,
    pub kind: LogErrorKind,
}

/// Parses one log. Blank lines are skipped.
pub fn parse_log(bytes: &[u8]) -> Result<Vec<LogRecord>, LogError> {
    parse_logs([("", bytes)])
}

/// Parses several logs as one record set; uniqueness is enforced across
/// all sources.
pub fn parse_logs<'a, I>(sources: I) -> Result<Vec<LogRecord>, LogError>
where
    I: IntoIterator<Item = (&'a str, &'a [u8])>,
{
    let mut out = Vec::new();
    let mut seen: HashMap<RecordKey, Location> = HashMap::new();
    for (source, bytes) in sources {
        for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
            let at = Location {
                source: source.to_owned(),
                line: idx + 1,
            };
            let fail = |kind| LogError { at: at.clone(), kind };
            let text = std::str::from_utf8(raw).map_err(|_| fail(LogErrorKind::Utf8))?;
            let text = text.trim();
            if text.is_empty() {
                continue;
            }
            let record: LogRecord =
                serde_json::from_str(text).map_err(|e| fail(LogErrorKind::Malformed(e.to_string())))?;
            if !record.value.is_finite() {
                return Err(fail(LogErrorKind::NonFinite(record.value)));
            }
            match (record.series.is_target(), record.snapshot_step) {
                (true, None) => return Err(fail(LogErrorKind::MissingSnapshot(record.series))),
                (false, Some(_)) => return Err(fail(LogErrorKind::UnexpectedSnapshot(record.series))),
                _ => {}
            }
            if let Some(first) = seen.get(&record.key()) {
                return Err(fail(LogErrorKind::Duplicate(first.clone())));
            }
            seen.insert(record.key(), at.clone());
            out.push(record);
        }
    }
    Ok(out)
}

/// Serializes records as a log, one line each with a trailing newline.
pub fn write_log(records: &[LogRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReduceError {
    #[error("fold {fold}: snapshot {snapshot} has no target_eval records for metric `{metric}`")]
    EmptySnapshot { fold: u32, snapshot: Step, metric: String },
    #[error("metric `{metric}` is logged with conflicting directions")]
    MixedDirection { metric: String },
    #[error("no {series} records for metric `{metric}`")]
    NoRecords { series: SeriesKind, metric: String },
    #[error(transparent)]
    Curve(#[from] CurveError),
}

fn canonical_point(
    value: f64,
    direction: Direction,
    complement_base: Option<f64>,
) -> f64 {
    match (direction, complement_base) {
        (Direction::LowerIsBetter, _) => value,
        (Direction::HigherIsBetter, Some(base)) => base - value,
        (Direction::HigherIsBetter, None) => -value,
    }
}

fn common_direction<'a>(
    records: impl Iterator<Item = &'a LogRecord>,
    metric: &str,
) -> Result<Option<Direction>, ReduceError> {
    let mut dir = None;
    for r in records {
        match dir {
            None => dir = Some(r.direction),
            Some(d) if d != r.direction => {
                return Err(ReduceError::MixedDirection {
                    metric: metric.to_owned(),
                })
            }
            _ => {}
        }
    }
    Ok(dir)
}

fn base_for(direction: Direction, complement_base: Option<f64>) -> Option<f64> {
    match direction {
        Direction::HigherIsBetter => complement_base,
        Direction::LowerIsBetter => None,
    }
}

/// Collapses every snapshot's target evaluation curve to its best value.
///
/// Values are compared in canonical (lower-is-better) space; higher-is-better
/// metrics use `complement_base - v` when a base is given and `-v`
/// otherwise. Only `target_eval` records count; `target_train` records
/// merely announce snapshots that must also have evaluations.
pub fn reduce_target_runs(
    records: &[LogRecord],
    metric: &str,
    complement_base: Option<f64>,
) -> Result<BTreeMap<u32, MetricSeries>, ReduceError> {
    let relevant = || {
        records
            .iter()
            .filter(move |r| r.series.is_target() && r.metric == metric)
    };
    let direction = common_direction(relevant().filter(|r| r.series == SeriesKind::TargetEval), metric)?
        .ok_or_else(|| ReduceError::NoRecords {
            series: SeriesKind::TargetEval,
            metric: metric.to_owned(),
        })?;
    let base = base_for(direction, complement_base);

    let mut best: BTreeMap<u32, BTreeMap<Step, Option<f64>>> = BTreeMap::new();
    for r in relevant() {
        let snapshot = r.snapshot_step.expect("validated on parse");
        let slot = best.entry(r.fold).or_default().entry(snapshot).or_insert(None);
        if r.series == SeriesKind::TargetEval {
            let v = canonical_point(r.value, direction, base);
            *slot = Some(slot.map_or(v, |b: f64| b.min(v)));
        }
    }

    let mut out = BTreeMap::new();
    for (fold, snapshots) in best {
        let mut steps = Vec::with_capacity(snapshots.len());
        let mut values = Vec::with_capacity(snapshots.len());
        for (snapshot, v) in snapshots {
            let v = v.ok_or_else(|| ReduceError::EmptySnapshot {
                fold,
                snapshot,
                metric: metric.to_owned(),
            })?;
            steps.push(snapshot);
            values.push(v);
        }
        out.insert(fold, canonical_series(metric, steps, values, direction, base)?);
    }
    Ok(out)
}

/// Wraps values that are already canonical, recording how they were derived.
fn canonical_series(
    metric: &str,
    steps: Vec<Step>,
    values: Vec<f64>,
    direction: Direction,
    base: Option<f64>,
) -> Result<MetricSeries, CurveError> {
    let mut series = MetricSeries::new(metric, metric, Direction::LowerIsBetter, steps, values)?;
    if direction == Direction::HigherIsBetter {
        series.set_transform(match base {
            Some(base) => Transform::Complement { base },
            None => Transform::Negate,
        });
    }
    Ok(series)
}

/// Per-fold pretext curves, canonicalized, keyed by fold.
pub fn pretext_series(
    records: &[LogRecord],
    metric: &str,
    complement_base: Option<f64>,
) -> Result<BTreeMap<u32, MetricSeries>, ReduceError> {
    let relevant = || {
        records
            .iter()
            .filter(move |r| r.series == SeriesKind::PretextEval && r.metric == metric)
    };
    let direction = common_direction(relevant(), metric)?.ok_or_else(|| ReduceError::NoRecords {
        series: SeriesKind::PretextEval,
        metric: metric.to_owned(),
    })?;
    let mut by_fold: BTreeMap<u32, BTreeMap<Step, f64>> = BTreeMap::new();
    for r in relevant() {
        by_fold.entry(r.fold).or_default().insert(r.epoch, r.value);
    }
    let mut out = BTreeMap::new();
    for (fold, points) in by_fold {
        let (steps, values) = points.into_iter().unzip();
        let raw = MetricSeries::new(metric, metric, direction, steps, values)?;
        out.insert(fold, canonicalize(&raw, base_for(direction, complement_base))?);
    }
    Ok(out)
}
