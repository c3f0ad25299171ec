use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::frame::FrameConfig;
use crate::error::{Error, Result};

/// One frame of one-sided STFT coefficients (`fft_size / 2 + 1` bins).
///
/// Forward transforms are unnormalized; the inverse scales by `1 / fft_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    pub frame_index: u64,
}

impl Spectrum {
    pub fn zeros(n_bins: usize, frame_index: u64) -> Self {
        Self {
            bins: vec![Complex64::new(0.0, 0.0); n_bins],
            frame_index,
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.bins.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Time-domain energy of the frame this spectrum came from, using the
    /// unnormalized-forward convention (Parseval over the full spectrum).
    pub fn energy(&self, fft_size: usize) -> f64 {
        let last = self.bins.len() - 1;
        let mut e = 0.0;
        for (k, c) in self.bins.iter().enumerate() {
            let p = c.norm_sqr();
            e += if k == 0 || (k == last && fft_size.is_multiple_of(2)) {
                p
            } else {
                2.0 * p
            };
        }
        e / fft_size as f64
    }
}

/// Forward/inverse real transform of a fixed size.
#[derive(Clone)]
pub struct Stft {
    fft_size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("fft_size", &self.fft_size).finish()
    }
}

impl Stft {
    pub fn new(fft_size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fft_size,
            forward: planner.plan_fft_forward(fft_size),
            inverse: planner.plan_fft_inverse(fft_size),
        }
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Transforms a (windowed, padded) frame. Shorter input is zero-padded.
    pub fn forward(&self, frame: &[f64], frame_index: u64) -> Spectrum {
        let mut buf: Vec<Complex64> = (0..self.fft_size)
            .map(|i| Complex64::new(frame.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.forward.process(&mut buf);
        buf.truncate(self.n_bins());
        Spectrum {
            bins: buf,
            frame_index,
        }
    }

    /// Inverse transform back to `fft_size` real samples.
    pub fn inverse(&self, spectrum: &Spectrum) -> Result<Vec<f64>> {
        let n = self.fft_size;
        if spectrum.len() != self.n_bins() {
            return Err(Error::config(format!(
                "spectrum has {} bins, transform expects {}",
                spectrum.len(),
                self.n_bins()
            )));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..spectrum.len()].copy_from_slice(&spectrum.bins);
        for k in 1..n.div_ceil(2) {
            buf[n - k] = spectrum.bins[k].conj();
        }
        // the DC and Nyquist bins of a real signal are real
        buf[0].im = 0.0;
        if n.is_multiple_of(2) {
            buf[n / 2].im = 0.0;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        Ok(buf.iter().map(|c| c.re * scale).collect())
    }
}

/// Inverse-transforms each spectrum, applies the synthesis window and
/// overlap-adds at `cfg.hop`. Output length is `(n - 1) * hop + frame_len`.
pub fn istft_ola(spectra: &[Spectrum], cfg: &FrameConfig) -> Result<Vec<f64>> {
    if spectra.is_empty() {
        return Ok(Vec::new());
    }
    let stft = Stft::new(cfg.fft_size);
    let window = cfg.window();
    let gain = 1.0 / cfg.cola_gain();
    let mut out = vec![0.0; (spectra.len() - 1) * cfg.hop + cfg.frame_len];
    for (k, spec) in spectra.iter().enumerate() {
        let frame = stft.inverse(spec)?;
        let start = k * cfg.hop;
        for (i, w) in window.iter().enumerate() {
            out[start + i] += frame[i] * w * gain;
        }
    }
    Ok(out)
}

/// Sliding analysis over a stream: every `push` of `hop` new samples
/// yields the spectrum of the latest `frame_len` samples.
#[derive(Debug, Clone)]
pub struct StreamingAnalyzer {
    stft: Stft,
    window: Vec<f64>,
    buffer: Vec<f64>,
    hop: usize,
    frames: u64,
}

impl StreamingAnalyzer {
    pub fn new(cfg: &FrameConfig) -> Self {
        Self {
            stft: Stft::new(cfg.fft_size),
            window: cfg.window(),
            buffer: vec![0.0; cfg.frame_len],
            hop: cfg.hop,
            frames: 0,
        }
    }

    pub fn push(&mut self, hop_samples: &[f64]) -> Spectrum {
        debug_assert_eq!(hop_samples.len(), self.hop);
        self.buffer.copy_within(self.hop.., 0);
        let keep = self.buffer.len() - self.hop;
        self.buffer[keep..].copy_from_slice(hop_samples);
        let spec = self.analyze(&self.buffer);
        self.frames += 1;
        spec
    }

    /// Windows and transforms an arbitrary `frame_len` block, tagged with
    /// the index the next `push` would produce.
    pub fn analyze(&self, block: &[f64]) -> Spectrum {
        let windowed: Vec<f64> = block.iter().zip(&self.window).map(|(x, w)| x * w).collect();
        self.stft.forward(&windowed, self.frames)
    }

    pub fn reset(&mut self) {
        self.buffer.fill(0.0);
        self.frames = 0;
    }
}

/// Overlap-add synthesis: each pushed spectrum completes `hop` samples.
#[derive(Debug, Clone)]
pub struct StreamingSynthesizer {
    stft: Stft,
    window: Vec<f64>,
    accum: Vec<f64>,
    hop: usize,
    gain: f64,
}

impl StreamingSynthesizer {
    pub fn new(cfg: &FrameConfig) -> Self {
        Self {
            stft: Stft::new(cfg.fft_size),
            window: cfg.window(),
            accum: vec![0.0; cfg.frame_len],
            hop: cfg.hop,
            gain: 1.0 / cfg.cola_gain(),
        }
    }

    pub fn push(&mut self, spectrum: &Spectrum) -> Result<Vec<f64>> {
        let frame = self.stft.inverse(spectrum)?;
        for (i, w) in self.window.iter().enumerate() {
            self.accum[i] += frame[i] * w * self.gain;
        }
        let out = self.accum[..self.hop].to_vec();
        self.accum.copy_within(self.hop.., 0);
        let keep = self.accum.len() - self.hop;
        self.accum[keep..].fill(0.0);
        Ok(out)
    }
}
