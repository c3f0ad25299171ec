use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Periodic square-root Hann, used for both analysis and synthesis.
    SqrtHann,
    /// Rectangular window (all ones).
    Rect,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::SqrtHann => (0..len)
                .map(|n| (0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).sqrt())
                .collect(),
            WindowKind::Rect => vec![1.0; len],
        }
    }
}

/// Framing and transform geometry for the main STFT grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_len: 320,
            hop: 160,
            fft_size: 320,
            window: WindowKind::SqrtHann,
        }
    }
}

impl FrameConfig {
    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window(&self) -> Vec<f64> {
        self.window.coefficients(self.frame_len)
    }

    pub fn hop_ms(&self) -> f64 {
        1000.0 * self.hop as f64 / self.sample_rate as f64
    }

    /// Checks geometry and that the squared window overlap-adds to a
    /// constant at the configured hop.
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::config("sample_rate must be positive"));
        }
        if self.hop == 0 || self.hop > self.frame_len || self.frame_len > self.fft_size {
            return Err(Error::config(format!(
                "frame geometry requires 0 < hop <= frame_len <= fft_size (got hop={}, frame_len={}, fft_size={})",
                self.hop, self.frame_len, self.fft_size
            )));
        }
        if !self.fft_size.is_multiple_of(2) {
            return Err(Error::config("fft_size must be even"));
        }
        let (lo, hi) = cola_range(&self.window(), self.hop);
        if lo <= 0.0 || (hi - lo) > 1e-6 * hi {
            return Err(Error::config(format!(
                "window does not overlap-add to a constant at hop {} (squared-window sum in [{lo}, {hi}])",
                self.hop
            )));
        }
        Ok(())
    }

    /// Constant that the squared window sums to across overlapping frames.
    pub fn cola_gain(&self) -> f64 {
        cola_range(&self.window(), self.hop).0
    }
}

fn cola_range(window: &[f64], hop: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for phase in 0..hop {
        let s: f64 = window.iter().skip(phase).step_by(hop).map(|w| w * w).sum();
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (lo, hi)
}

/// Splits `samples` into windowed frames of `fft_size` samples (window
/// applied to the first `frame_len`, zeros after). Frame `k` starts at
/// `k * hop`; frames are emitted while the start lies inside the signal,
/// so the tail frame is zero-padded.
pub fn frame_signal(samples: &[f64], cfg: &FrameConfig) -> Vec<Vec<f64>> {
    let window = cfg.window();
    let n_frames = samples.len().div_ceil(cfg.hop);
    (0..n_frames)
        .map(|k| {
            let start = k * cfg.hop;
            let mut frame = vec![0.0; cfg.fft_size];
            for (i, w) in window.iter().enumerate() {
                if let Some(&x) = samples.get(start + i) {
                    frame[i] = x * w;
                }
            }
            frame
        })
        .collect()
}
