//! Deep-FSMN residual echo suppression: a feed-forward network whose
//! blocks add learned, per-dimension weighted sums of past projection
//! vectors, predicting a phase-sensitive mask for the linear filter output.

mod batch;
mod features;
mod io;
mod kernels;
mod mask;
mod model;
mod runtime;

pub use batch::forward_batch;
pub use features::{frame_features, FeatureSplicer, FRAME_FEATURES, SPLICE};
pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use mask::{apply_mask, psm_target, PsmMask};
pub use model::{FsmnBlock, FsmnModel, FsmnShape};
pub use runtime::FsmnRuntime;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported model version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid model shape: {0}")]
    Shape(String),
    #[error("model file truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("model checksum mismatch: file says {stored} floats, header implies {expected}")]
    Checksum { stored: u64, expected: u64 },
    #[error("{0} unexpected trailing bytes after model")]
    TrailingBytes(usize),
}
