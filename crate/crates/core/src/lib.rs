//! Streaming acoustic echo cancellation: GCC-PHAT delay compensation,
//! per-bin weighted RLS linear filtering and Deep-FSMN residual echo
//! suppression, plus a synthetic scenario generator and objective metrics.
//!
//! ```no_run
//! use echoforge::pipeline::{Pipeline, PipelineConfig};
//!
//! let mut aec = Pipeline::new(PipelineConfig::default(), None)?;
//! let (mic, far) = (vec![0.0; 1600], vec![0.0; 1600]);
//! let mut out = aec.push(&mic, &far)?;
//! out.extend(aec.finish()?);
//! # Ok::<(), echoforge::Error>(())
//! ```

pub mod activity;
pub mod dsp;
pub mod error;
pub mod fsmn;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod tdc;
pub mod wrls;

pub use error::{Error, Result};
