//! Training episodes, augmentation and evaluation metrics.
//!
//! An episode stores, per aligned step, the observed state and the action
//! target. Arm actions are deltas `arm(t + k) - arm(t)` (k = 1 unless a
//! chunk horizon is given), hand actions are the absolute next-step
//! angles `hand(t + 1)`. Targets past the end hold the last sample, so the
//! final arm delta is zero.
//!
//! Episode files use the session container with the `EPIS` chunk tag and
//! these streams, all stamped with the grid time of the step:
//!
//! | id | name              | payload                                        |
//! |----|-------------------|------------------------------------------------|
//! | 5  | `joint-state`     | 5 source timestamps (u64) then 22 angles (f64) |
//! | 6  | `action`          | 8 arm deltas then 14 hand targets (f64)        |
//! | 1-4| images            | as in sessions                                 |

mod augment;
mod episode;
mod metrics;

pub use augment::{augment, jitter_image, AugmentConfig, AugmentStats};
pub use episode::{export_episode, read_episode, write_episode, Action, Episode, SourceTag};
pub use metrics::{
    format_mean_sem, mix_manifest, normalized_success, stage_time_stats, throughput, Manifest, ManifestRecord, SourceBatch, StageStats, SuccessReport, ThroughputReport, Trial,
    DEFAULT_CAP_S,
};

use thiserror::Error;

use crate::session::SessionError;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("need at least 2 aligned steps, got {0}")]
    TooShort(usize),
    #[error("chunk horizon must be at least 1")]
    BadHorizon,
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("no trials")]
    EmptyInput,
    #[error("completion time must be finite and positive, got {0}")]
    InvalidTime(f64),
    #[error("expected 6 stage rates, got {0}")]
    WrongStageCount(usize),
    #[error("stage {stage} rate {value} outside [0, 1]")]
    RateOutOfRange { stage: usize, value: f64 },
    #[error("stage {0} has no trials")]
    EmptyStage(usize),
    #[error("malformed episode: {0}")]
    Malformed(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
