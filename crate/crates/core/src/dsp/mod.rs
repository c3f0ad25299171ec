//! Signal-processing primitives shared by every stage: framing, the
//! short-time Fourier transform, overlap-add synthesis, log-mel features
//! and WAV I/O.

mod fbank;
mod frame;
mod resample;
mod stft;
pub mod wav;

pub use fbank::{log_fbank, FbankConfig, MelFilterbank};
pub use frame::{frame_signal, FrameConfig, WindowKind};
pub use resample::resample;
pub use stft::{istft_ola, Spectrum, Stft, StreamingAnalyzer, StreamingSynthesizer};

pub use num_complex::Complex64;
