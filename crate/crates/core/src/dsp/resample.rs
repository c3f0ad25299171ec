use std::f64::consts::PI;

const HALF_TAPS: isize = 32;

fn blackman(t: f64) -> f64 {
    // t in [-1, 1]
    let x = (t + 1.0) / 2.0;
    0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos()
}

/// Linear-phase windowed-sinc sample-rate conversion.
pub fn resample(input: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    if from_hz == to_hz || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to_hz as f64 / from_hz as f64;
    let cutoff = ratio.min(1.0) * 0.95;
    let out_len = (input.len() as f64 * ratio).round() as usize;
    let span = (HALF_TAPS as f64 / cutoff).ceil() as isize;
    (0..out_len)
        .map(|m| {
            let t = m as f64 / ratio;
            let centre = t.floor() as isize;
            let mut acc = 0.0;
            for k in centre - span + 1..=centre + span {
                if k < 0 || k as usize >= input.len() {
                    continue;
                }
                let d = t - k as f64;
                let arg = d * cutoff;
                let sinc = if arg.abs() < 1e-12 {
                    1.0
                } else {
                    (PI * arg).sin() / (PI * arg)
                };
                let w = blackman((d / span as f64).clamp(-1.0, 1.0));
                acc += input[k as usize] * cutoff * sinc * w;
            }
            acc
        })
        .collect()
}
