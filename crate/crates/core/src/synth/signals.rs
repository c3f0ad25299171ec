use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn white_noise(seed: u64, len: usize, std_dev: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * std_dev
        })
        .collect()
}

struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, sample_rate: f64) -> Self {
        let r = (-PI * bandwidth / sample_rate).exp();
        let theta = 2.0 * PI * freq / sample_rate;
        Self {
            a1: 2.0 * r * theta.cos(),
            a2: -r * r,
            gain: 1.0 - r,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Speech-like surrogate: syllable-length bursts of formant-filtered
/// noise with random pitch-pulse voicing and pauses. Peak-normalized
/// to 0.5.
pub fn speech_like(seed: u64, len: usize, sample_rate: u32) -> Vec<f64> {
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let mut t = 0;
    while t < len {
        let seg = ((rng.gen_range(0.08..0.3)) * sr) as usize;
        let end = (t + seg).min(len);
        if rng.gen_bool(0.3) {
            t = end;
            continue;
        }
        let amp = rng.gen_range(0.3..1.0);
        let mut f1 = Resonator::new(rng.gen_range(300.0..900.0), 120.0, sr);
        let mut f2 = Resonator::new(rng.gen_range(900.0..2600.0), 200.0, sr);
        let voiced = rng.gen_bool(0.7);
        let period = (sr / rng.gen_range(90.0..240.0)) as usize;
        let n = end - t;
        for i in 0..n {
            let env = (PI * i as f64 / n as f64).sin().powi(2);
            let g: f64 = StandardNormal.sample(&mut rng);
            let excitation = if voiced && i % period == 0 { 8.0 } else { 0.0 } + 0.3 * g;
            let y = f1.tick(excitation) + 0.5 * f2.tick(excitation);
            out[t + i] = amp * env * y;
        }
        t = end;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    out
}
