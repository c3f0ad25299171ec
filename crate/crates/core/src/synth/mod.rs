//! Synthetic echo scenarios: `mic = delay(x) * a + s + v` with known
//! ground truth, plus the augmentation used to build test suites.

mod effects;
mod rir;
mod signals;
pub mod suite;

pub use effects::{apply_effects, Effect};
pub use rir::gen_echo_path;
pub use signals::{speech_like, white_noise};
pub use suite::{gen_suite, ClipManifest, LoadedClip, ScenarioClass, SuiteIndex, SuiteSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::activity::{activity_mask, masked_power};
use crate::error::{Error, Result};
use crate::tdc::apply_delay;

/// Sample grid all stored component signals are snapped to, so the mixture
/// and its parts add and subtract without rounding.
const GRID: f64 = (1u64 << 30) as f64;

pub(crate) fn quantize(x: &mut [f64]) {
    for v in x {
        *v = (*v * GRID).round() / GRID;
    }
}

/// Linear convolution truncated to `x.len()` samples.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    if h.len() <= 64 {
        let mut y = vec![0.0; x.len()];
        for (t, out) in y.iter_mut().enumerate() {
            *out = h
                .iter()
                .enumerate()
                .take(t + 1)
                .map(|(k, hk)| hk * x[t - k])
                .sum();
        }
        return y;
    }
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let (fwd, inv) = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
    let pad = |v: &[f64]| {
        let mut b: Vec<Complex64> = v.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        b.resize(n, Complex64::new(0.0, 0.0));
        b
    };
    let (mut a, mut b) = (pad(x), pad(h));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a.iter().take(x.len()).map(|c| c.re / n as f64).collect()
}

/// Echo path switch at a frame boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct PathChange {
    /// Main-grid frame (10 ms hop) at which the new path takes over.
    pub frame: usize,
    pub path: Vec<f64>,
}

pub const CHANGE_HOP: usize = 160;
/// Crossfade length at a path change (one 20 ms frame).
pub const CHANGE_FADE: usize = 320;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixSpec {
    /// Target near-end-to-echo ratio in dB. `None` keeps the echo at its
    /// natural level; `+inf` removes it.
    pub ser_db: Option<f64>,
    pub delay: usize,
    /// Noise level relative to the active echo-plus-near-end power.
    pub noise_snr_db: Option<f64>,
    pub effects: Vec<Effect>,
    pub path_change: Option<PathChange>,
    pub seed: u64,
}

/// One synthetic clip with every component kept.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoScenario {
    pub far_end: Vec<f64>,
    pub near_end: Vec<f64>,
    pub echo_path: Vec<f64>,
    pub echo: Vec<f64>,
    pub noise: Vec<f64>,
    pub mic: Vec<f64>,
    pub ser_db: Option<f64>,
    pub effects: Vec<Effect>,
    pub delay: usize,
    pub path_change: Option<PathChange>,
    pub seed: u64,
    pub sample_rate: u32,
}

impl EchoScenario {
    /// `echo + near_end + noise`, recomputed from the stored parts.
    pub fn reconstruct_mic(&self) -> Vec<f64> {
        self.echo
            .iter()
            .zip(&self.near_end)
            .zip(&self.noise)
            .map(|((e, s), v)| e + s + v)
            .collect()
    }

    /// Measured SER over active regions, if both parts are active somewhere.
    pub fn measured_ser_db(&self) -> Option<f64> {
        let ps = masked_power(&self.near_end, &activity_mask(&self.near_end))?;
        let pe = masked_power(&self.echo, &activity_mask(&self.echo))?;
        Some(10.0 * (ps / pe).log10())
    }
}

fn echo_through(x: &[f64], path: &[f64], change: Option<&PathChange>) -> Vec<f64> {
    let first = convolve(x, path);
    let Some(change) = change else { return first };
    let second = convolve(x, &change.path);
    let start = change.frame * CHANGE_HOP;
    first
        .iter()
        .zip(&second)
        .enumerate()
        .map(|(t, (a, b))| {
            let c = if t < start {
                0.0
            } else {
                ((t - start) as f64 / CHANGE_FADE as f64).min(1.0)
            };
            a * (1.0 - c) + b * c
        })
        .collect()
}

/// Builds the microphone signal from far end, near end and echo path.
pub fn mix_scenario(
    far_end: Vec<f64>,
    near_end: Vec<f64>,
    echo_path: Vec<f64>,
    spec: &MixSpec,
    sample_rate: u32,
) -> Result<EchoScenario> {
    let n = far_end.len().max(near_end.len());
    let mut far_end = far_end;
    let mut near_end = near_end;
    far_end.resize(n, 0.0);
    near_end.resize(n, 0.0);
    quantize(&mut near_end);

    let delayed = apply_delay(&far_end, spec.delay, n);
    let driven = apply_effects(&delayed, &spec.effects, sample_rate);
    let mut echo = echo_through(&driven, &echo_path, spec.path_change.as_ref());

    match spec.ser_db {
        None => {}
        Some(ser) if ser == f64::INFINITY => echo.fill(0.0),
        Some(ser) => {
            if !ser.is_finite() {
                return Err(Error::Scenario(format!("SER {ser} dB is not usable")));
            }
            let ps = masked_power(&near_end, &activity_mask(&near_end))
                .ok_or_else(|| Error::Scenario("near end is silent; SER undefined".into()))?;
            let pe = masked_power(&echo, &activity_mask(&echo))
                .ok_or_else(|| Error::Scenario("echo is silent; SER undefined".into()))?;
            let gain = (ps / (pe * 10f64.powf(ser / 10.0))).sqrt();
            for v in &mut echo {
                *v *= gain;
            }
        }
    }
    quantize(&mut echo);

    let mut noise = vec![0.0; n];
    if let Some(snr) = spec.noise_snr_db {
        let signal: Vec<f64> = echo.iter().zip(&near_end).map(|(e, s)| e + s).collect();
        let p = masked_power(&signal, &activity_mask(&signal)).unwrap_or(1e-6);
        let sigma = (p / 10f64.powf(snr / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x006e_6f69_7365);
        for v in &mut noise {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = sigma * g;
        }
        quantize(&mut noise);
    }

    let mic = echo
        .iter()
        .zip(&near_end)
        .zip(&noise)
        .map(|((e, s), v)| e + s + v)
        .collect();
    Ok(EchoScenario {
        far_end,
        near_end,
        echo_path,
        echo,
        noise,
        mic,
        ser_db: spec.ser_db,
        effects: spec.effects.clone(),
        delay: spec.delay,
        path_change: spec.path_change.clone(),
        seed: spec.seed,
        sample_rate,
    })
}
