//! Mismatch analysis for self-supervised representation learning.
//!
//! A pretext model is trained and snapshotted; at every snapshot a target
//! model is trained from scratch on the frozen representations. Comparing
//! the pretext curve with the curve of best target values shows whether,
//! and by how much, continued pretext training hurts the target task.
//!
//! * [`curves`]: series, direction handling, interpolation, early stopping
//! * [`metrics`]: hard/soft metrics mismatch and objective function mismatch
//! * [`aggregate`]: cross-validation folds and ranges
//! * [`io`]: curve logs, reports, plot tables
//! * [`analyze`]: the log-to-report pipeline
//! * [`lab`]: a desk-scale self-supervised lab producing curve logs

pub mod aggregate;
pub mod analyze;
pub mod curves;
pub mod fmt;
pub mod io;
pub mod lab;
pub mod metrics;

pub use aggregate::{mean_curves, report_with_ranges, FoldSet, RangedValue};
pub use analyze::{analyze, AnalyzeConfig, AnalyzeError, Analysis};
pub use curves::{
    align_on_grid, canonicalize, decanonicalize, detect_convergence, truncate_at_convergence, ConvergencePolicy,
    ConvergenceResult, CurveError, Direction, MetricSeries, Origin, PairedRun, Step,
};
pub use io::{LogRecord, MismatchReport};
pub use metrics::{
    csm3, cofm, m3_curve, mm3, mofm, mofm_max, msm3, msm3_max, normalize, ofm_curve, sm3_curve, BaselinePolicy,
    MetricOptions, MismatchValue, NormalizationContext, Scalars, UnitCheck,
};
