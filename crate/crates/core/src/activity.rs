//! Frame-energy activity detection used for SER targets and metric masks.

/// Analysis frame for activity decisions (10 ms at 16 kHz).
pub const ACTIVITY_FRAME: usize = 160;
/// Frames within this many dB of the loudest frame count as active.
pub const ACTIVITY_THRESHOLD_DB: f64 = -40.0;

/// Per-sample activity: a sample is active when its frame's energy is
/// within `ACTIVITY_THRESHOLD_DB` of the loudest frame.
pub fn activity_mask(signal: &[f64]) -> Vec<bool> {
    let energies: Vec<f64> = signal
        .chunks(ACTIVITY_FRAME)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64)
        .collect();
    let peak = energies.iter().cloned().fold(0.0, f64::max);
    let threshold = peak * 10f64.powf(ACTIVITY_THRESHOLD_DB / 10.0);
    let mut mask = Vec::with_capacity(signal.len());
    for (c, &e) in signal.chunks(ACTIVITY_FRAME).zip(&energies) {
        let on = peak > 0.0 && e >= threshold;
        mask.extend(std::iter::repeat_n(on, c.len()));
    }
    mask
}

/// Mean square over the samples where `mask` is set; `None` if none are.
pub fn masked_power(signal: &[f64], mask: &[bool]) -> Option<f64> {
    let (sum, n) = signal
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v * v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
