//! Desk-scale self-supervised lab.
//!
//! Generates a synthetic factor-labeled image set, trains a small pretext
//! encoder while saving snapshots, retrains a probe on every snapshot and
//! writes the resulting curves as JSONL logs that [`crate::analyze`] reads.

pub mod dataset;
pub mod net;
pub mod protocol;
pub mod spec;
pub mod train;

use thiserror::Error;

pub use dataset::{generate_dataset, Factor, Factors, Split, SyntheticDataset};
pub use net::{Activation, Adam, Loss, Mlp};
pub use protocol::{analysis_config, run_protocol, run_sweep, simulate, LabOutput, Manifest, SweepRow};
pub use spec::{Head, PretextSpec, PretextTask, ProtocolRunSpec, TargetSpec};
pub use train::{derive_seed, train_pretext, train_target_on_snapshot, Encoder, JobTag, PretextOutcome};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid lab configuration: {0}")]
    Config(String),
    #[error("{phase} diverged at epoch {epoch}: loss is {loss}")]
    Divergence { phase: String, epoch: u64, loss: f64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
