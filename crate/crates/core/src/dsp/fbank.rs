use serde::{Deserialize, Serialize};

use super::frame::FrameConfig;
use super::stft::Spectrum;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FbankConfig {
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for FbankConfig {
    fn default() -> Self {
        Self {
            n_mels: 40,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-10,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over the one-sided power spectrum.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_mels x n_bins`, row-major.
    weights: Vec<f64>,
    n_mels: usize,
    n_bins: usize,
    log_floor: f64,
}

impl MelFilterbank {
    pub fn new(cfg: &FbankConfig, frame: &FrameConfig) -> Result<Self> {
        let nyquist = frame.sample_rate as f64 / 2.0;
        if cfg.n_mels == 0 {
            return Err(Error::config("n_mels must be at least 1"));
        }
        if !(cfg.fmin >= 0.0 && cfg.fmin < cfg.fmax && cfg.fmax <= nyquist) {
            return Err(Error::config(format!(
                "filterbank range must satisfy 0 <= fmin < fmax <= {nyquist} (got {}..{})",
                cfg.fmin, cfg.fmax
            )));
        }
        if !(cfg.log_floor > 0.0) {
            return Err(Error::config("log_floor must be positive"));
        }
        let n_bins = frame.n_bins();
        let bin_hz = frame.sample_rate as f64 / frame.fft_size as f64;
        let (mlo, mhi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let mut weights = vec![0.0; cfg.n_mels * n_bins];
        for m in 0..cfg.n_mels {
            let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * n_bins..(m + 1) * n_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                let v = if f > lo && f <= centre {
                    (f - lo) / (centre - lo)
                } else if f > centre && f < hi {
                    (hi - f) / (hi - centre)
                } else {
                    0.0
                };
                *w = v.max(0.0);
            }
            // a filter narrower than one bin falls back to its nearest bin
            if row.iter().sum::<f64>() <= 0.0 {
                let k = ((centre / bin_hz).round() as usize).min(n_bins - 1);
                row[k] = 1.0;
            }
        }
        Ok(Self {
            weights,
            n_mels: cfg.n_mels,
            n_bins,
            log_floor: cfg.log_floor,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn filter(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Mel energies of a power spectrum, before the log.
    pub fn energies(&self, power: &[f64]) -> Vec<f64> {
        (0..self.n_mels)
            .map(|m| self.filter(m).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }

    pub fn apply(&self, spectrum: &Spectrum) -> Vec<f64> {
        let power: Vec<f64> = spectrum.bins.iter().map(|c| c.norm_sqr()).collect();
        self.energies(&power)
            .into_iter()
            .map(|e| e.max(self.log_floor).ln())
            .collect()
    }
}

/// Log mel filterbank energies of one frame. Builds the filterbank on each
/// call; hold a [`MelFilterbank`] in streaming code.
pub fn log_fbank(spectrum: &Spectrum, cfg: &FbankConfig, frame: &FrameConfig) -> Result<Vec<f64>> {
    if spectrum.len() != frame.n_bins() {
        return Err(Error::config("spectrum bin count does not match frame config"));
    }
    Ok(MelFilterbank::new(cfg, frame)?.apply(spectrum))
}
