//! Objective scores against synthesizer ground truth.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use serde::Serialize;

use crate::activity::{activity_mask, ACTIVITY_FRAME};
use crate::dsp::wav::{write_wav, SampleFormat};
use crate::error::{Error, Result};
use crate::fsmn::FsmnModel;
use crate::pipeline::{run_signals, PipelineConfig};
use crate::synth::{LoadedClip, ScenarioClass, SuiteIndex};

pub const ERLE_CAP_DB: f64 = 80.0;
pub const DISTORTION_FLOOR_DB: f64 = -80.0;
/// External scorer invoked as `<cmd> <reference.wav> <degraded.wav>`; the
/// last number it prints is taken as the score.
pub const PESQ_ENV: &str = "ECHOFORGE_PESQ_CMD";

fn masked_energy(x: &[f64], mask: &[bool]) -> (f64, usize) {
    x.iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0), |(s, n), (v, _)| (s + v * v, n + 1))
}

/// `10 log10(sum mic^2 / sum out^2)` over the masked samples, capped at
/// +80 dB. `None` when the mask is empty or the mic is silent under it.
pub fn erle(mic: &[f64], out: &[f64], mask: &[bool]) -> Option<f64> {
    assert_eq!(mic.len(), out.len(), "erle: signal lengths differ");
    let (em, n) = masked_energy(mic, mask);
    let (eo, _) = masked_energy(out, mask);
    if n == 0 || em == 0.0 {
        return None;
    }
    if eo == 0.0 {
        return Some(ERLE_CAP_DB);
    }
    Some((10.0 * (em / eo).log10()).min(ERLE_CAP_DB))
}

/// ERLE per whole second of signal; seconds with nothing masked are `None`.
pub fn erle_curve(mic: &[f64], out: &[f64], mask: &[bool], sample_rate: u32) -> Vec<Option<f64>> {
    let sr = sample_rate as usize;
    (0..mic.len() / sr)
        .map(|k| {
            let r = k * sr..(k + 1) * sr;
            erle(&mic[r.clone()], &out[r.clone()], &mask[r])
        })
        .collect()
}

pub fn delay_error(estimated: usize, truth: usize) -> i64 {
    estimated as i64 - truth as i64
}

/// Energy of `estimate - clean` relative to `clean` over masked samples,
/// in dB, floored at -80 dB.
pub fn nearend_distortion_db(estimate: &[f64], clean: &[f64], mask: &[bool]) -> Option<f64> {
    assert_eq!(estimate.len(), clean.len(), "distortion: signal lengths differ");
    let (es, n) = masked_energy(clean, mask);
    if n == 0 || es == 0.0 {
        return None;
    }
    let err: Vec<f64> = estimate.iter().zip(clean).map(|(a, b)| a - b).collect();
    let (ee, _) = masked_energy(&err, mask);
    if ee == 0.0 {
        return Some(DISTORTION_FLOOR_DB);
    }
    Some((10.0 * (ee / es).log10()).max(DISTORTION_FLOOR_DB))
}

/// Samples where echo is present and the near end is not.
pub fn far_single_talk_mask(echo: &[f64], near_end: &[f64]) -> Vec<bool> {
    activity_mask(echo)
        .into_iter()
        .zip(activity_mask(near_end))
        .map(|(e, s)| e && !s)
        .collect()
}

/// Samples in activity frames where the near end is active and carries
/// more energy than the echo.
pub fn near_dominant_mask(echo: &[f64], near_end: &[f64]) -> Vec<bool> {
    let active = activity_mask(near_end);
    let mut mask = Vec::with_capacity(near_end.len());
    for (k, (e, s)) in echo.chunks(ACTIVITY_FRAME).zip(near_end.chunks(ACTIVITY_FRAME)).enumerate() {
        let (pe, ps): (f64, f64) = (e.iter().map(|v| v * v).sum(), s.iter().map(|v| v * v).sum());
        let on = active[k * ACTIVITY_FRAME] && ps > pe;
        mask.extend(std::iter::repeat_n(on, s.len()));
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStage {
    Linear,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub clip: String,
    pub class: ScenarioClass,
    pub erle_db: Option<f64>,
    pub erle_curve: Vec<Option<f64>>,
    /// Final estimate minus the true delay.
    pub delay_err: Option<i64>,
    /// Largest error over estimates made after the re-lock window.
    pub max_delay_err_after_relock: Option<i64>,
    pub nearend_distortion_db: Option<f64>,
    pub pesq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub class: ScenarioClass,
    pub clips: usize,
    pub erle_db: Option<f64>,
    pub nearend_distortion_db: Option<f64>,
    pub mean_abs_delay_err: Option<f64>,
    pub pesq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SuiteReport {
    pub clips: Vec<EvalReport>,
    pub classes: Vec<ClassSummary>,
}

/// Frames after a delay or path change during which estimates are not
/// held against the truth.
pub const RELOCK_FRAMES: u64 = 300;

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

impl SuiteReport {
    pub fn from_clips(clips: Vec<EvalReport>) -> Self {
        let mut by_class: BTreeMap<ScenarioClass, Vec<&EvalReport>> = BTreeMap::new();
        for c in &clips {
            by_class.entry(c.class).or_default().push(c);
        }
        let classes = by_class
            .into_iter()
            .map(|(class, v)| ClassSummary {
                class,
                clips: v.len(),
                erle_db: mean(v.iter().filter_map(|c| c.erle_db)),
                nearend_distortion_db: mean(v.iter().filter_map(|c| c.nearend_distortion_db)),
                mean_abs_delay_err: mean(v.iter().filter_map(|c| c.delay_err).map(|e| e.abs() as f64)),
                pesq: mean(v.iter().filter_map(|c| c.pesq)),
            })
            .collect();
        Self { clips, classes }
    }

    pub fn to_table(&self) -> String {
        let pesq = self.classes.iter().any(|c| c.pesq.is_some());
        let mut s = format!("{:<18} {:>5} {:>9} {:>11} {:>10}", "class", "clips", "erle_db", "distort_db", "|delay_e|");
        if pesq {
            s += &format!(" {:>6}", "pesq");
        }
        s.push('\n');
        for c in &self.classes {
            s += &format!(
                "{:<18} {:>5} {:>9} {:>11} {:>10}",
                c.class.name(),
                c.clips,
                opt(c.erle_db),
                opt(c.nearend_distortion_db),
                opt(c.mean_abs_delay_err)
            );
            if pesq {
                s += &format!(" {:>6}", opt(c.pesq));
            }
            s.push('\n');
        }
        s
    }

    /// One row per clip.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
        let i = |v: Option<i64>| v.map_or(String::new(), |x| x.to_string());
        let mut s = String::from("clip,class,erle_db,nearend_distortion_db,delay_err,max_delay_err_after_relock,pesq\n");
        for c in &self.clips {
            s += &format!(
                "{},{},{},{},{},{},{}\n",
                c.clip,
                c.class.name(),
                f(c.erle_db),
                f(c.nearend_distortion_db),
                i(c.delay_err),
                i(c.max_delay_err_after_relock),
                f(c.pesq)
            );
        }
        s
    }
}

fn external_score(cmd: &str, reference: &Path, degraded: &[f64], rate: u32) -> Option<f64> {
    let tmp = std::env::temp_dir().join(format!("echoforge-eval-{}-{:x}.wav", std::process::id(), degraded.len() ^ (degraded.as_ptr() as usize)));
    write_wav(&tmp, degraded, rate, SampleFormat::Pcm16).ok()?;
    let output = Command::new(cmd).arg(reference).arg(&tmp).output();
    let _ = std::fs::remove_file(&tmp);
    let output = output.ok().filter(|o| o.status.success())?;
    String::from_utf8_lossy(&output.stdout)
        .split(|c: char| c.is_whitespace() || c == ',' || c == '=')
        .filter_map(|t| t.parse::<f64>().ok())
        .next_back()
}

/// Scores one clip's output against its ground truth.
pub fn evaluate_clip(clip: &LoadedClip, cfg: &PipelineConfig, model: Option<&FsmnModel>) -> Result<EvalReport> {
    let (out, summary) = run_signals(cfg.clone(), model.cloned(), &clip.mic, &clip.far_end)?;
    let m = &clip.manifest;
    let fst = far_single_talk_mask(&clip.echo, &clip.near_end);
    let near = near_dominant_mask(&clip.echo, &clip.near_end);
    let has_far = clip.far_end.iter().any(|&v| v != 0.0);
    let delay_err = (has_far && cfg.stages.tdc && !summary.delay_trace.is_empty())
        .then(|| delay_error(summary.final_delay, m.delay));
    let change = m.path_change_frame.map_or(0, |f| f as u64);
    let max_after = summary
        .delay_trace
        .iter()
        .filter(|e| e.frame >= RELOCK_FRAMES && e.frame >= change + RELOCK_FRAMES.min(change))
        .map(|e| delay_error(e.tau, m.delay))
        .max_by_key(|e| e.abs());
    let pesq = match std::env::var(PESQ_ENV) {
        Ok(cmd) if !cmd.is_empty() && clip.near_end.iter().any(|&v| v != 0.0) => {
            external_score(&cmd, &clip.dir.join(&m.files.near_end), &out, m.sample_rate)
        }
        _ => None,
    };
    Ok(EvalReport {
        clip: m.name.clone(),
        class: m.class,
        erle_db: erle(&clip.mic, &out, &fst),
        erle_curve: erle_curve(&clip.mic, &out, &fst, m.sample_rate),
        delay_err: if has_far { delay_err } else { None },
        max_delay_err_after_relock: if has_far { max_after } else { None },
        nearend_distortion_db: nearend_distortion_db(&out, &clip.near_end, &near),
        pesq,
    })
}

/// Runs and scores every clip of a suite directory.
pub fn evaluate_suite(
    dir: impl AsRef<Path>,
    cfg: &PipelineConfig,
    model: Option<&FsmnModel>,
    stage: EvalStage,
) -> Result<SuiteReport> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "suite directory not found")));
    }
    let index = SuiteIndex::load(dir)?;
    let model = match stage {
        EvalStage::Linear => None,
        EvalStage::Full => model,
    };
    let run = |name: &String| -> Result<EvalReport> {
        let clip = LoadedClip::load(dir.join(name))?;
        evaluate_clip(&clip, cfg, model)
    };
    #[cfg(feature = "parallel")]
    let clips: Result<Vec<EvalReport>> = {
        use rayon::prelude::*;
        index.clips.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let clips: Result<Vec<EvalReport>> = index.clips.iter().map(run).collect();
    Ok(SuiteReport::from_clips(clips?))
}
