//! Weighted recursive least squares echo canceller, one independent
//! filter per frequency bin.
//!
//! Treating the microphone bin and the last `L` aligned far-end bins as a
//! mixture whose first unmixing row is `[1, w^H]`, the auxiliary-function
//! update for that row reduces to `w = -R^{-1} r`, with `R` and `r` the
//! correlations of the far-end tap vector weighted by `G'(|S|)/|S|` for a
//! super-Gaussian contrast `G(r) = (r/eta)^beta`. Small `beta` puts little
//! weight on frames where the separated near end is loud, so adaptation
//! slows down during double talk. With `beta = 2` the weight is constant
//! and the recursion is ordinary exponentially-weighted RLS.
//!
//! Per frame and bin:
//!
//! 1. shift the aligned far-end bin into the tap history `x`
//! 2. prior estimate `S~ = D + w_prev^H x`
//! 3. weight `phi = contrast_weight(|S~|)`
//! 4. `R <- lam R + (1 - lam) phi x x^H`, `r <- lam r + (1 - lam) phi x conj(D)`
//! 5. `w = -(R + delta I)^{-1} r`
//! 6. output `S^ = D + w^H x`

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::Spectrum;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WrlsConfig {
    pub taps: usize,
    /// Exponential smoothing of the weighted correlations.
    pub smoothing: f64,
    /// Contrast shape; 0 selects the log contrast.
    pub beta: f64,
    /// Contrast scale.
    pub eta: f64,
    /// Floor on the residual magnitude fed to the weight.
    pub weight_floor: f64,
    /// Diagonal loading relative to the running far-end power of the bin.
    pub diag_load: f64,
    /// Absolute lower bound on the diagonal loading.
    pub diag_floor: f64,
}

impl Default for WrlsConfig {
    fn default() -> Self {
        Self {
            taps: 5,
            smoothing: 0.8,
            beta: 0.2,
            eta: 1.0,
            weight_floor: 1e-6,
            diag_load: 1e-6,
            diag_floor: 1e-10,
        }
    }
}

impl WrlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::config("wrls taps must be at least 1"));
        }
        if !(self.smoothing > 0.0 && self.smoothing < 1.0) {
            return Err(Error::config("wrls smoothing must be in (0, 1)"));
        }
        if !(0.0..=2.0).contains(&self.beta) {
            return Err(Error::config("wrls beta must be in [0, 2]"));
        }
        if !(self.eta > 0.0 && self.weight_floor > 0.0 && self.diag_floor > 0.0) {
            return Err(Error::config("wrls eta, weight_floor and diag_floor must be positive"));
        }
        if !(self.diag_load >= 0.0) {
            return Err(Error::config("wrls diag_load must be non-negative"));
        }
        Ok(())
    }
}

/// Correlation weight `G'(r)/r` of the contrast `G(r) = (r/eta)^beta`;
/// `beta = 0` uses `G(r) = log r`, i.e. weight `1/r^2`.
pub fn contrast_weight(r_mag: f64, cfg: &WrlsConfig) -> f64 {
    let r = r_mag.max(cfg.weight_floor);
    if cfg.beta == 0.0 {
        1.0 / (r * r)
    } else {
        cfg.beta * r.powf(cfg.beta - 2.0) / cfg.eta.powf(cfg.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite;

/// Solves `(R + delta I) w = -r` for Hermitian `R` (row-major, `n x n`)
/// by Cholesky factorization.
pub fn solve_taps(
    r_mat: &[Complex64],
    r_vec: &[Complex64],
    delta: f64,
    w: &mut [Complex64],
) -> std::result::Result<(), NotPositiveDefinite> {
    let n = r_vec.len();
    debug_assert_eq!(r_mat.len(), n * n);
    debug_assert_eq!(w.len(), n);
    // lower-triangular factor, row-major
    let mut l = vec![ZERO; n * n];
    for j in 0..n {
        let mut d = r_mat[j * n + j].re + delta;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(NotPositiveDefinite);
        }
        let d = d.sqrt();
        l[j * n + j] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = r_mat[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / d;
        }
    }
    // L y = -r
    let mut y = vec![ZERO; n];
    for i in 0..n {
        let mut s = -r_vec[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i].re;
    }
    // L^H w = y
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i].conj() * w[k];
        }
        w[i] = s / l[i * n + i].re;
    }
    Ok(())
}

/// Outcome of one bin update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub estimate: Complex64,
    pub weight: f64,
    pub fault: Option<BinFault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinFault {
    /// Non-finite input; the bin state was reset.
    NonFinite,
    /// Factorization failed; previous taps kept.
    Solve,
}

/// Filter state of one frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct WrlsState {
    taps: usize,
    r_mat: Vec<Complex64>,
    r_vec: Vec<Complex64>,
    w: Vec<Complex64>,
    x_hist: Vec<Complex64>,
    far_power: f64,
}

impl WrlsState {
    pub fn new(cfg: &WrlsConfig) -> Self {
        let n = cfg.taps;
        let mut r_mat = vec![ZERO; n * n];
        for i in 0..n {
            r_mat[i * n + i] = Complex64::new(cfg.diag_floor, 0.0);
        }
        Self {
            taps: n,
            r_mat,
            r_vec: vec![ZERO; n],
            w: vec![ZERO; n],
            x_hist: vec![ZERO; n],
            far_power: 0.0,
        }
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.w
    }

    pub fn covariance(&self) -> &[Complex64] {
        &self.r_mat
    }

    pub fn cross_correlation(&self) -> &[Complex64] {
        &self.r_vec
    }

    /// Tap history, newest first.
    pub fn history(&self) -> &[Complex64] {
        &self.x_hist
    }

    /// Replaces the tap history (newest first) without touching the
    /// correlations, e.g. after a delay change.
    pub fn set_history(&mut self, hist: &[Complex64]) {
        let n = self.taps.min(hist.len());
        self.x_hist[..n].copy_from_slice(&hist[..n]);
        self.x_hist[n..].fill(ZERO);
    }

    fn apply(&self, d: Complex64) -> Complex64 {
        self.w
            .iter()
            .zip(&self.x_hist)
            .fold(d, |acc, (w, x)| acc + w.conj() * x)
    }

    pub fn step(&mut self, d: Complex64, x: Complex64, cfg: &WrlsConfig) -> StepOutput {
        if !(d.re.is_finite() && d.im.is_finite() && x.re.is_finite() && x.im.is_finite()) {
            *self = Self::new(cfg);
            return StepOutput {
                estimate: if d.re.is_finite() && d.im.is_finite() { d } else { ZERO },
                weight: 0.0,
                fault: Some(BinFault::NonFinite),
            };
        }
        let n = self.taps;
        self.x_hist.rotate_right(1);
        self.x_hist[0] = x;

        let prior = self.apply(d);
        let weight = contrast_weight(prior.norm(), cfg);
        let lam = cfg.smoothing;
        let gain = (1.0 - lam) * weight;
        let dc = d.conj();
        for i in 0..n {
            let xi = self.x_hist[i];
            for j in i..n {
                let v = self.r_mat[i * n + j] * lam + xi * self.x_hist[j].conj() * gain;
                self.r_mat[i * n + j] = v;
                self.r_mat[j * n + i] = v.conj();
            }
            self.r_mat[i * n + i].im = 0.0;
            self.r_vec[i] = self.r_vec[i] * lam + xi * dc * gain;
        }

        self.far_power = lam * self.far_power + (1.0 - lam) * x.norm_sqr();
        let delta = (cfg.diag_load * self.far_power).max(cfg.diag_floor);
        let mut w = vec![ZERO; n];
        let fault = match solve_taps(&self.r_mat, &self.r_vec, delta, &mut w) {
            Ok(()) if w.iter().all(|c| c.re.is_finite() && c.im.is_finite()) => {
                self.w = w;
                None
            }
            _ => Some(BinFault::Solve),
        };
        StepOutput {
            estimate: self.apply(d),
            weight,
            fault,
        }
    }
}

/// A bank of independent per-bin filters covering one spectrum.
#[derive(Debug, Clone)]
pub struct WrlsFilter {
    cfg: WrlsConfig,
    bins: Vec<WrlsState>,
    faults: u64,
    #[cfg(feature = "parallel")]
    pool: Option<std::sync::Arc<rayon::ThreadPool>>,
}

impl WrlsFilter {
    pub fn new(cfg: WrlsConfig, n_bins: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            bins: vec![WrlsState::new(&cfg); n_bins],
            cfg,
            faults: 0,
            #[cfg(feature = "parallel")]
            pool: None,
        })
    }

    /// Spreads bin updates over `threads` workers (1 keeps them inline).
    #[cfg(feature = "parallel")]
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        self.pool = if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?;
            Some(std::sync::Arc::new(pool))
        } else {
            None
        };
        Ok(self)
    }

    pub fn config(&self) -> &WrlsConfig {
        &self.cfg
    }

    pub fn bins(&self) -> &[WrlsState] {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut [WrlsState] {
        &mut self.bins
    }

    /// Count of bin updates that hit a fault since construction.
    pub fn faults(&self) -> u64 {
        self.faults
    }

    /// Runs one frame. `mic` and `far` must match the filter's bin count.
    pub fn process(&mut self, mic: &Spectrum, far: &Spectrum) -> Result<Spectrum> {
        if mic.len() != self.bins.len() || far.len() != self.bins.len() {
            return Err(Error::config("wrls spectrum size mismatch"));
        }
        let cfg = &self.cfg;
        let mut out = vec![ZERO; self.bins.len()];
        let run = |(state, (o, (d, x))): (&mut WrlsState, (&mut Complex64, (&Complex64, &Complex64)))| {
            let step = state.step(*d, *x, cfg);
            *o = step.estimate;
            step.fault.is_some() as u64
        };
        #[cfg(feature = "parallel")]
        let faults: u64 = if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            pool.install(|| {
                self.bins
                    .par_iter_mut()
                    .zip(out.par_iter_mut().zip(mic.bins.par_iter().zip(far.bins.par_iter())))
                    .map(run)
                    .sum()
            })
        } else {
            self.bins
                .iter_mut()
                .zip(out.iter_mut().zip(mic.bins.iter().zip(&far.bins)))
                .map(run)
                .sum()
        };
        #[cfg(not(feature = "parallel"))]
        let faults: u64 = self
            .bins
            .iter_mut()
            .zip(out.iter_mut().zip(mic.bins.iter().zip(&far.bins)))
            .map(run)
            .sum();
        if faults > 0 {
            log::debug!("wrls: {faults} bin faults in frame {}", mic.frame_index);
        }
        self.faults += faults;
        Ok(Spectrum {
            bins: out,
            frame_index: mic.frame_index,
        })
    }

    /// Replaces every bin's tap history from past aligned spectra, newest
    /// first (`history[0]` is the previous frame).
    pub fn reprime(&mut self, history: &[Spectrum]) {
        let mut hist = vec![ZERO; self.cfg.taps];
        for (f, state) in self.bins.iter_mut().enumerate() {
            for (slot, spec) in hist.iter_mut().zip(history) {
                *slot = spec.bins[f];
            }
            state.set_history(&hist);
        }
    }
}
