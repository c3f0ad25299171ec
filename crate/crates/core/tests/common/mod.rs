//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use echoforge::dsp::{frame_signal, Complex64, FrameConfig, Spectrum, Stft};
use echoforge::wrls::{WrlsConfig, WrlsState};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Lag in `0..=max_lag` maximizing the time-domain cross-correlation
/// `sum_t mic[t] * far[t - lag]`.
pub fn brute_force_delay(far: &[f64], mic: &[f64], max_lag: usize) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for lag in 0..=max_lag {
        let c: f64 = mic[lag..].iter().zip(far).map(|(m, f)| m * f).sum();
        if c > best.1 {
            best = (lag, c);
        }
    }
    best.0
}

/// Windowed spectra of a whole signal, one per hop.
pub fn batch_spectra(x: &[f64], cfg: &FrameConfig) -> Vec<Spectrum> {
    let stft = Stft::new(cfg.fft_size);
    frame_signal(x, cfg)
        .iter()
        .enumerate()
        .map(|(i, f)| stft.forward(f, i as u64))
        .collect()
}

/// Tap history vector `[x_t, x_{t-1}, ...]` of one bin.
pub fn history(xs: &[Spectrum], t: usize, bin: usize, taps: usize) -> Vec<Complex64> {
    (0..taps).map(|k| if t >= k { xs[t - k].bins[bin] } else { ZERO }).collect()
}

/// Gaussian elimination with partial pivoting on a dense complex system.
pub fn dense_solve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let n = b.len();
    let mut m: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            let mut row = a[i * n..(i + 1) * n].to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].norm().total_cmp(&m[j][c].norm())).unwrap();
        m.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                let v = m[c][k];
                m[r][k] -= f * v;
            }
        }
    }
    let mut x = vec![ZERO; n];
    for r in (0..n).rev() {
        let s: Complex64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// Whole-utterance least squares for one bin: minimizes
/// `sum_t g_t |d_t + w^H x_t|^2`.
pub fn weighted_ls(xs: &[Spectrum], ds: &[Spectrum], bin: usize, taps: usize, weights: &[f64]) -> Vec<Complex64> {
    let mut r = vec![ZERO; taps * taps];
    let mut p = vec![ZERO; taps];
    for t in 0..xs.len() {
        let h = history(xs, t, bin, taps);
        let g = weights[t];
        for i in 0..taps {
            for j in 0..taps {
                r[i * taps + j] += h[i] * h[j].conj() * g;
            }
            p[i] -= h[i] * ds[t].bins[bin].conj() * g;
        }
    }
    dense_solve(&r, &p)
}

/// Conventional exponentially weighted RLS on `e = d - h^H x`, with the
/// inverse correlation propagated by the matrix inversion lemma and
/// re-symmetrized each step. Returns `h` after every frame.
pub fn textbook_rls(d: &[Complex64], x: &[Complex64], taps: usize, lambda: f64, delta0: f64) -> Vec<Vec<Complex64>> {
    let l = taps;
    let mut p = vec![ZERO; l * l];
    for i in 0..l {
        p[i * l + i] = Complex64::new(1.0 / delta0, 0.0);
    }
    let mut h = vec![ZERO; l];
    let mut u = vec![ZERO; l];
    let mut out = Vec::with_capacity(d.len());
    for (&dt, &xt) in d.iter().zip(x) {
        u.rotate_right(1);
        u[0] = xt;
        let pu: Vec<Complex64> = (0..l).map(|i| (0..l).map(|j| p[i * l + j] * u[j]).sum()).collect();
        let denom = lambda + u.iter().zip(&pu).map(|(a, b)| a.conj() * b).sum::<Complex64>().re;
        let k: Vec<Complex64> = pu.iter().map(|v| v / denom).collect();
        let e = dt - h.iter().zip(&u).map(|(a, b)| a.conj() * b).sum::<Complex64>();
        for i in 0..l {
            h[i] += k[i] * e.conj();
        }
        let mut next = vec![ZERO; l * l];
        for i in 0..l {
            for j in 0..l {
                next[i * l + j] = (p[i * l + j] - k[i] * pu[j].conj()) / lambda;
            }
        }
        for i in 0..l {
            for j in 0..l {
                p[i * l + j] = (next[i * l + j] + next[j * l + i].conj()) * 0.5;
            }
        }
        out.push(h.clone());
    }
    out
}

/// Runs a bank of per-bin filters over whole-signal spectra.
pub struct BankRun {
    pub outputs: Vec<Spectrum>,
    /// `taps[t][bin]` after frame `t`.
    pub taps: Vec<Vec<Vec<Complex64>>>,
}

pub fn run_bank(xs: &[Spectrum], ds: &[Spectrum], cfg: &WrlsConfig) -> BankRun {
    let nb = xs[0].len();
    let mut states = vec![WrlsState::new(cfg); nb];
    let mut outputs = Vec::with_capacity(xs.len());
    let mut taps = Vec::with_capacity(xs.len());
    for t in 0..xs.len() {
        let mut o = Spectrum::zeros(nb, t as u64);
        for f in 0..nb {
            o.bins[f] = states[f].step(ds[t].bins[f], xs[t].bins[f], cfg).estimate;
        }
        outputs.push(o);
        taps.push(states.iter().map(|s| s.taps().to_vec()).collect());
    }
    BankRun { outputs, taps }
}

pub fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum();
    let den: f64 = b.iter().map(|q| q.norm_sqr()).sum();
    (num / den).sqrt()
}
