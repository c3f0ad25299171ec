//! Time-delay compensation: GCC-PHAT delay estimation between the far-end
//! reference and the microphone, and a ring-buffer delay line that aligns
//! the reference before linear filtering.
//!
//! The smoothed cross-spectrum is updated on a rotating slice of
//! frequencies, one slice per main-grid frame, so that a whole update
//! cycle costs one large transform pair per `update_period` frames. The
//! delay is re-estimated once per cycle.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dsp::{Spectrum, Stft};
use crate::error::{Error, Result};

/// Peak-to-mean ratio mapped to confidence 0.
const CONFIDENCE_RATIO_FLOOR: f64 = 6.0;
/// Ratio span over which confidence rises from 0 to 1.
const CONFIDENCE_RATIO_SPAN: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TdcConfig {
    pub fft_size: usize,
    pub max_delay: usize,
    /// Frames per amortized update cycle.
    pub update_period: usize,
    pub alpha: f64,
    /// Main-grid hop; one cross-spectrum slice is updated per hop.
    pub hop: usize,
    pub min_confidence: f64,
    /// Relative margin a new peak must beat the current lag's correlation by.
    pub switch_margin: f64,
}

impl Default for TdcConfig {
    fn default() -> Self {
        Self {
            fft_size: 16_384,
            max_delay: 8_000,
            update_period: 25,
            alpha: 0.9,
            hop: 160,
            min_confidence: 0.5,
            switch_margin: 0.1,
        }
    }
}

impl TdcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_multiple_of(2) {
            return Err(Error::config("tdc fft_size must be even and >= 2"));
        }
        if self.max_delay >= self.fft_size {
            return Err(Error::config("tdc max_delay must be below fft_size"));
        }
        if self.update_period == 0 || self.update_period > self.fft_size / 2 + 1 {
            return Err(Error::config("tdc update_period must be in 1..=n_bins"));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::config("tdc alpha must be in [0, 1)"));
        }
        if self.hop == 0 {
            return Err(Error::config("tdc hop must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEstimate {
    /// Delay of the microphone behind the far end, in samples.
    pub tau: usize,
    pub confidence: f64,
}

/// Lag-indexed phase-transform correlation: `by_lag[k]` is the
/// correlation at a microphone lag of `k` samples (modulo the transform
/// size).
#[derive(Debug, Clone)]
pub struct GccCorrelation {
    pub by_lag: Vec<f64>,
}

impl GccCorrelation {
    pub fn mean_abs(&self) -> f64 {
        self.by_lag.iter().map(|v| v.abs()).sum::<f64>() / self.by_lag.len() as f64
    }

    /// Largest value over lags `0..=max_lag`, earliest lag on ties.
    pub fn peak(&self, max_lag: usize) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (lag, &v) in self.by_lag.iter().enumerate().take(max_lag + 1) {
            if v > best.1 {
                best = (lag, v);
            }
        }
        best
    }
}

pub struct CrossCorrState {
    phi: Vec<Complex64>,
    alpha: f64,
    fft_size: usize,
    max_delay: usize,
    min_confidence: f64,
    switch_margin: f64,
    slices: Vec<Range<usize>>,
    cursor: usize,
    current_delay: usize,
    confidence: f64,
    locked: bool,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CrossCorrState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CrossCorrState")
            .field("fft_size", &self.fft_size)
            .field("cursor", &self.cursor)
            .field("current_delay", &self.current_delay)
            .field("confidence", &self.confidence)
            .finish_non_exhaustive()
    }
}

impl CrossCorrState {
    pub fn new(cfg: &TdcConfig) -> Result<Self> {
        cfg.validate()?;
        let n_bins = cfg.fft_size / 2 + 1;
        let p = cfg.update_period;
        let slices = (0..p).map(|i| (i * n_bins / p)..((i + 1) * n_bins / p)).collect();
        Ok(Self {
            phi: vec![Complex64::new(0.0, 0.0); n_bins],
            alpha: cfg.alpha,
            fft_size: cfg.fft_size,
            max_delay: cfg.max_delay,
            min_confidence: cfg.min_confidence,
            switch_margin: cfg.switch_margin,
            slices,
            cursor: 0,
            current_delay: 0,
            confidence: 0.0,
            locked: false,
            inverse: FftPlanner::new().plan_fft_inverse(cfg.fft_size),
        })
    }

    pub fn phi(&self) -> &[Complex64] {
        &self.phi
    }

    pub fn current_delay(&self) -> usize {
        self.current_delay
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    /// Bin range the next `gcc_update` will touch.
    pub fn next_slice(&self) -> Range<usize> {
        self.slices[self.cursor].clone()
    }

    /// Recursive cross-spectrum update `phi = alpha * phi + (1 - alpha) * X conj(D)`
    /// on the scheduled slice. Returns `true` when this call completed a
    /// cycle over all bins.
    pub fn gcc_update(&mut self, far: &Spectrum, mic: &Spectrum) -> Result<bool> {
        if far.len() != self.phi.len() || mic.len() != self.phi.len() {
            return Err(Error::config(format!(
                "tdc spectra must have {} bins (got {} and {})",
                self.phi.len(),
                far.len(),
                mic.len()
            )));
        }
        let range = self.slices[self.cursor].clone();
        let (a, b) = (self.alpha, 1.0 - self.alpha);
        for k in range {
            self.phi[k] = self.phi[k] * a + far.bins[k] * mic.bins[k].conj() * b;
        }
        self.cursor = (self.cursor + 1) % self.slices.len();
        Ok(self.cursor == 0)
    }

    /// Inverse transform of the phase-normalized cross-spectrum, or `None`
    /// if fewer than half of the bins carry any energy.
    pub fn correlation(&self) -> Option<GccCorrelation> {
        let n = self.fft_size;
        let live = self
            .phi
            .iter()
            .filter(|c| c.norm() > f64::MIN_POSITIVE && c.re.is_finite() && c.im.is_finite())
            .count();
        if 2 * live <= self.phi.len() {
            return None;
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (k, c) in self.phi.iter().enumerate() {
            let mag = c.norm();
            if mag > f64::MIN_POSITIVE && mag.is_finite() {
                buf[k] = c / mag;
            }
        }
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        for k in 1..n / 2 {
            buf[n - k] = buf[k].conj();
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        // X conj(D) puts a microphone lag of k at index -k
        let by_lag = (0..n).map(|lag| buf[(n - lag) % n].re * scale).collect();
        Some(GccCorrelation { by_lag })
    }

    /// Phase-transform delay estimate over lags `0..=max_delay`. The
    /// returned `tau` is the delay in effect after hysteresis; confidence
    /// belongs to this cycle's peak.
    pub fn phat_delay(&mut self) -> DelayEstimate {
        let Some(corr) = self.correlation() else {
            self.confidence = 0.0;
            return DelayEstimate {
                tau: self.current_delay,
                confidence: 0.0,
            };
        };
        let (lag, peak) = corr.peak(self.max_delay);
        let mean_abs = corr.mean_abs();
        let ratio = if mean_abs > 0.0 { peak / mean_abs } else { 0.0 };
        let confidence =
            ((ratio - CONFIDENCE_RATIO_FLOOR) / CONFIDENCE_RATIO_SPAN).clamp(0.0, 1.0);
        self.confidence = confidence;

        if confidence >= self.min_confidence && lag != self.current_delay {
            let incumbent = corr.by_lag[self.current_delay];
            if !self.locked || peak >= incumbent + self.switch_margin * incumbent.abs() {
                self.current_delay = lag;
            }
        }
        if confidence >= self.min_confidence {
            self.locked = true;
        }
        DelayEstimate {
            tau: self.current_delay,
            confidence,
        }
    }
}

/// Streaming GCC-PHAT estimator fed one main-grid hop at a time.
///
/// Every `update_period` hops the latest `fft_size` samples of both
/// signals are transformed (rectangular window); the following hops each
/// fold one frequency slice of that block pair into the cross-spectrum.
pub struct TdcEstimator {
    state: CrossCorrState,
    fft: Stft,
    hop: usize,
    update_period: usize,
    far_hist: Vec<f64>,
    mic_hist: Vec<f64>,
    block_far: Spectrum,
    block_mic: Spectrum,
    frames: u64,
}

impl TdcEstimator {
    pub fn new(cfg: &TdcConfig) -> Result<Self> {
        let state = CrossCorrState::new(cfg)?;
        let n_bins = cfg.fft_size / 2 + 1;
        Ok(Self {
            state,
            fft: Stft::new(cfg.fft_size),
            hop: cfg.hop,
            update_period: cfg.update_period,
            far_hist: vec![0.0; cfg.fft_size],
            mic_hist: vec![0.0; cfg.fft_size],
            block_far: Spectrum::zeros(n_bins, 0),
            block_mic: Spectrum::zeros(n_bins, 0),
            frames: 0,
        })
    }

    pub fn state(&self) -> &CrossCorrState {
        &self.state
    }

    pub fn current_delay(&self) -> usize {
        self.state.current_delay()
    }

    /// Feeds one hop of raw far-end and microphone samples. Returns a new
    /// estimate when an update cycle completes.
    pub fn push_hop(&mut self, far: &[f64], mic: &[f64]) -> Result<Option<DelayEstimate>> {
        if far.len() != self.hop || mic.len() != self.hop {
            return Err(Error::config(format!("tdc expects hops of {} samples", self.hop)));
        }
        shift_in(&mut self.far_hist, far);
        shift_in(&mut self.mic_hist, mic);
        if self.frames.is_multiple_of(self.update_period as u64) {
            self.block_far = self.fft.forward(&self.far_hist, self.frames);
            self.block_mic = self.fft.forward(&self.mic_hist, self.frames);
        }
        self.frames += 1;
        let cycle_done = self.state.gcc_update(&self.block_far, &self.block_mic)?;
        Ok(cycle_done.then(|| self.state.phat_delay()))
    }
}

fn shift_in(hist: &mut [f64], new: &[f64]) {
    let n = hist.len();
    if new.len() >= n {
        hist.copy_from_slice(&new[new.len() - n..]);
        return;
    }
    hist.copy_within(new.len().., 0);
    hist[n - new.len()..].copy_from_slice(new);
}

/// Clamps a requested delay into `0..=max_delay`, logging when it had to.
pub fn clamp_delay(tau: usize, max_delay: usize) -> usize {
    if tau > max_delay {
        log::warn!("requested delay {tau} exceeds maximum {max_delay}; clamping");
        max_delay
    } else {
        tau
    }
}

/// Ring buffer of far-end history from which delayed blocks are read.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: Vec<f64>,
    written: u64,
    max_delay: usize,
}

impl DelayLine {
    /// `history` is how far back, beyond `max_delay`, reads may reach.
    pub fn new(max_delay: usize, history: usize) -> Self {
        Self {
            buf: vec![0.0; max_delay + history],
            written: 0,
            max_delay,
        }
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    pub fn write(&mut self, x: &[f64]) {
        let cap = self.buf.len();
        for &v in x {
            self.buf[(self.written % cap as u64) as usize] = v;
            self.written += 1;
        }
    }

    /// The `len` samples that end `ago` samples before the newest write,
    /// delayed by `tau`. Positions before the stream start read as zero.
    pub fn read(&self, tau: usize, len: usize, ago: usize) -> Vec<f64> {
        let tau = clamp_delay(tau, self.max_delay);
        let cap = self.buf.len() as u64;
        let end = self.written as i64 - (ago + tau) as i64;
        (0..len)
            .map(|i| {
                let pos = end - len as i64 + i as i64;
                if pos < 0 || (self.written - pos as u64) > cap {
                    0.0
                } else {
                    self.buf[(pos as u64 % cap) as usize]
                }
            })
            .collect()
    }
}

/// Delays a whole signal: `out[t] = x[t - tau]`, zero history.
pub fn apply_delay(x: &[f64], tau: usize, max_delay: usize) -> Vec<f64> {
    let tau = clamp_delay(tau, max_delay);
    let mut out = vec![0.0; x.len()];
    if tau < x.len() {
        out[tau..].copy_from_slice(&x[..x.len() - tau]);
    }
    out
}
