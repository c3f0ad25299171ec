use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Relative level of the diffuse tail against the direct path. Low enough
/// that no tail sample outweighs the direct path, so the path delay is
/// unambiguous.
const TAIL_GAIN: f64 = 0.1;

/// Random echo path: a direct-path spike at index 0 followed by Gaussian
/// noise whose energy decays by 60 dB over `rt60_ms`. Unit l2 norm.
pub fn gen_echo_path(seed: u64, rt60_ms: f64, length: usize, sample_rate: u32) -> Vec<f64> {
    let length = length.max(1);
    let mut h = vec![0.0; length];
    h[0] = 1.0;
    let rt60 = rt60_ms * sample_rate as f64 / 1000.0;
    if rt60 > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // 60 dB in energy is a factor 1e3 in amplitude
        let rate = 3.0 * std::f64::consts::LN_10 / rt60;
        for (n, v) in h.iter_mut().enumerate().skip(1) {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = TAIL_GAIN * g * (-rate * n as f64).exp();
        }
    }
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= norm);
    h
}
