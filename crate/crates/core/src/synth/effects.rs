use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Nonlinear or spectral distortion applied to the loudspeaker signal
/// before the echo path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Effect {
    /// Hard limit at `fraction` of the signal peak.
    Clip { fraction: f64 },
    /// Remove everything above `cutoff_hz`.
    Bandlimit { cutoff_hz: f64 },
    /// Smooth random gain curve through `points` control gains in
    /// `[-max_gain_db, max_gain_db]`.
    Eq { seed: u64, max_gain_db: f64, points: usize },
    /// `peak * tanh(g x / peak) / tanh(g)`.
    SigmoidNl { gain: f64 },
}

fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn spectral<F: Fn(f64) -> f64>(x: &[f64], sample_rate: u32, gain_at: F) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for k in 0..n {
        // mirror so the gain is real and even
        let kk = k.min(n - k);
        let f = kk as f64 * sample_rate as f64 / n as f64;
        buf[k] *= gain_at(f);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn apply_one(x: &[f64], effect: &Effect, sample_rate: u32) -> Vec<f64> {
    match *effect {
        Effect::Clip { fraction } => {
            let limit = fraction * peak(x);
            x.iter().map(|v| v.clamp(-limit, limit)).collect()
        }
        Effect::Bandlimit { cutoff_hz } => {
            spectral(x, sample_rate, |f| if f > cutoff_hz { 0.0 } else { 1.0 })
        }
        Effect::Eq { seed, max_gain_db, points } => {
            let points = points.max(2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gains: Vec<f64> = (0..points)
                .map(|_| rng.gen_range(-max_gain_db..=max_gain_db))
                .collect();
            let nyq = sample_rate as f64 / 2.0;
            spectral(x, sample_rate, |f| {
                let pos = (f / nyq).min(1.0) * (points - 1) as f64;
                let i = (pos.floor() as usize).min(points - 2);
                let frac = pos - i as f64;
                let w = 0.5 - 0.5 * (std::f64::consts::PI * frac).cos();
                let db = gains[i] * (1.0 - w) + gains[i + 1] * w;
                10f64.powf(db / 20.0)
            })
        }
        Effect::SigmoidNl { gain } => {
            let p = peak(x);
            if p == 0.0 || gain.abs() < 1e-12 {
                return x.to_vec();
            }
            let norm = gain.tanh();
            x.iter().map(|v| p * (gain * v / p).tanh() / norm).collect()
        }
    }
}

pub fn apply_effects(signal: &[f64], effects: &[Effect], sample_rate: u32) -> Vec<f64> {
    effects
        .iter()
        .fold(signal.to_vec(), |x, e| apply_one(&x, e, sample_rate))
}
