//! Browser demo: a few engine pieces exposed to JavaScript.
//!
//! The plain functions carry the logic and are tested natively; the
//! `#[wasm_bindgen]` wrappers only adapt argument types.

use echoforge::dsp::{frame_signal, istft_ola, FrameConfig, Spectrum, Stft};
use echoforge::synth::{convolve, gen_echo_path, white_noise};
use echoforge::tdc::{CrossCorrState, TdcConfig};
use echoforge::wrls::{WrlsConfig, WrlsState};
use wasm_bindgen::prelude::*;

const RATE: u32 = 16_000;

/// Smaller than the engine default so one estimate stays interactive.
fn demo_tdc() -> TdcConfig {
    TdcConfig {
        fft_size: 4096,
        max_delay: 2000,
        update_period: 1,
        ..TdcConfig::default()
    }
}

/// Phase-transform correlation over lags `0..=max_delay` for white noise
/// delayed by `delay` samples at the given echo-to-noise ratio.
pub fn tdc_curve(delay: usize, enr_db: f64, seed: u64) -> Result<(Vec<f64>, usize, f64), String> {
    let cfg = demo_tdc();
    let delay = delay.min(cfg.max_delay);
    let n = cfg.fft_size;
    let far = white_noise(seed, n + cfg.max_delay, 1.0);
    let noise = white_noise(seed ^ 0x5eed, n, 10f64.powf(-enr_db / 20.0));
    let off = cfg.max_delay;
    let mic: Vec<f64> = (0..n).map(|t| far[off + t - delay] + noise[t]).collect();
    let stft = Stft::new(n);
    let mut state = CrossCorrState::new(&cfg).map_err(|e| e.to_string())?;
    state
        .gcc_update(&stft.forward(&far[off..], 0), &stft.forward(&mic, 0))
        .map_err(|e| e.to_string())?;
    let est = state.phat_delay();
    let corr = state.correlation().ok_or("no correlation")?;
    Ok((corr.by_lag[..=cfg.max_delay].to_vec(), est.tau, est.confidence))
}

/// ERLE in dB per 100 ms segment of a linear-filter run on a synthetic
/// echo, with an optional near-end talker switched on halfway.
pub fn linear_convergence(beta: f64, seconds: f64, double_talk: bool, seed: u64) -> Vec<f64> {
    let frame = FrameConfig::default();
    let n = (seconds.clamp(0.5, 10.0) * RATE as f64) as usize;
    let far = white_noise(seed, n, 0.3);
    let path = gen_echo_path(seed + 1, 80.0, 480, RATE);
    let echo = convolve(&far, &path);
    let talker = white_noise(seed + 2, n, 0.1);
    let mic: Vec<f64> = (0..n)
        .map(|t| echo[t] + if double_talk && t >= n / 2 { talker[t] } else { 0.0 })
        .collect();
    let cfg = WrlsConfig {
        beta,
        ..WrlsConfig::default()
    };
    let stft = Stft::new(frame.fft_size);
    let spectra = |x: &[f64]| -> Vec<Spectrum> {
        frame_signal(x, &frame)
            .iter()
            .enumerate()
            .map(|(i, f)| stft.forward(f, i as u64))
            .collect()
    };
    let (xs, ds) = (spectra(&far), spectra(&mic));
    let mut bins = vec![WrlsState::new(&cfg); frame.n_bins()];
    let outputs: Vec<Spectrum> = xs
        .iter()
        .zip(&ds)
        .map(|(x, d)| Spectrum {
            bins: bins
                .iter_mut()
                .zip(x.bins.iter().zip(&d.bins))
                .map(|(s, (&x, &d))| s.step(d, x, &cfg).estimate)
                .collect(),
            frame_index: x.frame_index,
        })
        .collect();
    let Ok(y) = istft_ola(&outputs, &frame) else {
        return Vec::new();
    };
    // residual echo only, so double talk does not read as poor cancellation
    let seg = RATE as usize / 10;
    (0..n / seg)
        .map(|k| {
            let r = k * seg..(k + 1) * seg;
            let e: f64 = echo[r.clone()].iter().map(|v| v * v).sum();
            let res: f64 = r.map(|t| (y[t] - (mic[t] - echo[t])).powi(2)).sum();
            if res <= 0.0 {
                80.0
            } else {
                (10.0 * (e / res).log10()).min(80.0)
            }
        })
        .collect()
}

/// Synthetic echo path for a reverberation time.
pub fn echo_path(rt60_ms: f64, length: usize, seed: u64) -> Vec<f64> {
    gen_echo_path(seed, rt60_ms.clamp(1.0, 2000.0), length.clamp(16, 8192), RATE)
}

/// Returns `[tau, confidence, c_0, c_1, ...]`.
#[wasm_bindgen(js_name = tdcCurve)]
pub fn js_tdc_curve(delay: u32, enr_db: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    let (curve, tau, conf) = tdc_curve(delay as usize, enr_db, seed as u64).map_err(|e| JsError::new(&e))?;
    let mut out = vec![tau as f64, conf];
    out.extend(curve);
    Ok(out)
}

#[wasm_bindgen(js_name = linearConvergence)]
pub fn js_linear_convergence(beta: f64, seconds: f64, double_talk: bool, seed: u32) -> Vec<f64> {
    linear_convergence(beta, seconds, double_talk, seed as u64)
}

#[wasm_bindgen(js_name = echoPath)]
pub fn js_echo_path(rt60_ms: f64, length: u32, seed: u32) -> Vec<f64> {
    echo_path(rt60_ms, length as usize, seed as u64)
}
