//! Streaming orchestration: delay compensation, linear filtering and
//! residual suppression run hop by hop over a microphone/far-end pair.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::activity::activity_mask;
use crate::dsp::wav::{read_wav, write_wav, RatePolicy, SampleFormat};
use crate::dsp::{FbankConfig, FrameConfig, MelFilterbank, Spectrum, StreamingAnalyzer, StreamingSynthesizer};
use crate::error::{Error, Result};
use crate::fsmn::{
    apply_mask, frame_features, load_model, FeatureSplicer, FsmnModel, FsmnRuntime, ModelError, FRAME_FEATURES,
    SPLICE,
};
use crate::metrics::erle;
use crate::tdc::{DelayEstimate, DelayLine, TdcConfig, TdcEstimator};
use crate::wrls::{WrlsConfig, WrlsFilter};

pub const THREADS_ENV: &str = "ECHOFORGE_THREADS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub tdc: bool,
    pub linear: bool,
    /// Residual suppression; only runs when a model is available.
    pub res: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            tdc: true,
            linear: true,
            res: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdcMode {
    #[default]
    Inline,
    /// Estimation on a worker thread; new delays are picked up at the
    /// next frame boundary. Output then depends on thread timing.
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub frame: FrameConfig,
    pub fbank: FbankConfig,
    pub wrls: WrlsConfig,
    pub tdc: TdcConfig,
    pub tdc_mode: TdcMode,
    pub stages: StageToggles,
    /// Delay used when the tdc stage is off, and before the first estimate.
    pub fixed_delay: usize,
    pub model_path: Option<PathBuf>,
    pub output_gain: f64,
    /// Workers for per-bin filter updates (capped by `ECHOFORGE_THREADS`).
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            fbank: FbankConfig::default(),
            wrls: WrlsConfig::default(),
            tdc: TdcConfig::default(),
            tdc_mode: TdcMode::Inline,
            stages: StageToggles::default(),
            fixed_delay: 0,
            model_path: None,
            output_gain: 1.0,
            threads: 1,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(format!("pipeline config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        self.wrls.validate()?;
        self.tdc.validate()?;
        if self.tdc.hop != self.frame.hop {
            return Err(Error::config("tdc hop must equal the frame hop"));
        }
        if self.frame.frame_len != 2 * self.frame.hop {
            return Err(Error::config("the pipeline needs frame_len = 2 * hop"));
        }
        if self.stages.res && !self.stages.linear && self.model_path.is_some() {
            return Err(Error::config("residual suppression requires the linear stage"));
        }
        if self.fixed_delay > self.tdc.max_delay {
            return Err(Error::config("fixed_delay exceeds tdc max_delay"));
        }
        if !(self.output_gain.is_finite() && self.output_gain >= 0.0) {
            return Err(Error::config("output_gain must be finite and non-negative"));
        }
        Ok(())
    }

    /// Worker count after applying the environment cap.
    pub fn effective_threads(&self) -> usize {
        let cap = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0);
        let n = self.threads.max(1);
        cap.map_or(n, |c| n.min(c))
    }

    /// Loads the configured model, if any.
    pub fn load_model(&self) -> Result<Option<FsmnModel>> {
        self.model_path.as_ref().map(load_model).transpose().map_err(Error::from)
    }
}

/// Compute-time statistics for one stage, in milliseconds per frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub frames: u64,
    pub stages: Vec<StageTiming>,
    pub total: StageTiming,
    /// Input-to-output delay built into the processing chain.
    pub algorithmic_latency_ms: f64,
}

impl LatencyReport {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<8} {:>9} {:>9} {:>9}\n", "stage", "mean_ms", "p95_ms", "max_ms");
        for t in self.stages.iter().chain(std::iter::once(&self.total)) {
            s += &format!("{:<8} {:>9.4} {:>9.4} {:>9.4}\n", t.stage, t.mean_ms, t.p95_ms, t.max_ms);
        }
        s += &format!("frames {}, algorithmic latency {:.1} ms\n", self.frames, self.algorithmic_latency_ms);
        s
    }
}

/// Microsecond histogram; bounded memory however long the stream runs.
#[derive(Debug, Clone)]
struct Timer {
    name: &'static str,
    hist: Vec<u32>,
    count: u64,
    sum_us: f64,
    max_us: f64,
}

const HIST_US: usize = 50_000;

impl Timer {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            hist: vec![0; HIST_US + 1],
            count: 0,
            sum_us: 0.0,
            max_us: 0.0,
        }
    }

    fn record(&mut self, since: Instant) {
        let us = since.elapsed().as_secs_f64() * 1e6;
        self.hist[(us as usize).min(HIST_US)] += 1;
        self.count += 1;
        self.sum_us += us;
        self.max_us = self.max_us.max(us);
    }

    fn timing(&self) -> StageTiming {
        let target = (self.count as f64 * 0.95).ceil() as u64;
        let mut acc = 0u64;
        let mut p95 = 0usize;
        for (us, &c) in self.hist.iter().enumerate() {
            acc += c as u64;
            if acc >= target.max(1) {
                p95 = us;
                break;
            }
        }
        StageTiming {
            stage: self.name.to_string(),
            mean_ms: if self.count > 0 { self.sum_us / self.count as f64 / 1e3 } else { 0.0 },
            p95_ms: (p95 as f64 + 1.0).min(self.max_us.max(0.0)) / 1e3,
            max_ms: self.max_us / 1e3,
        }
    }
}

enum Tdc {
    Off,
    Inline(Box<TdcEstimator>),
    Background(BackgroundTdc),
}

/// Worker-thread estimator. The worker is the only writer of `latest`;
/// the pipeline reads it once per frame.
struct BackgroundTdc {
    tx: Option<mpsc::Sender<(Vec<f64>, Vec<f64>)>>,
    latest: Arc<AtomicU64>,
    worker: Option<JoinHandle<Vec<(u64, DelayEstimate)>>>,
}

const NO_ESTIMATE: u64 = u64::MAX;

impl BackgroundTdc {
    fn spawn(cfg: &TdcConfig) -> Result<Self> {
        let mut est = TdcEstimator::new(cfg)?;
        let (tx, rx) = mpsc::channel::<(Vec<f64>, Vec<f64>)>();
        let latest = Arc::new(AtomicU64::new(NO_ESTIMATE));
        let shared = latest.clone();
        let worker = std::thread::spawn(move || {
            let mut trace = Vec::new();
            let mut frame = 0u64;
            while let Ok((far, mic)) = rx.recv() {
                if let Ok(Some(e)) = est.push_hop(&far, &mic) {
                    trace.push((frame, e));
                    shared.store(e.tau as u64, Ordering::Release);
                }
                frame += 1;
            }
            trace
        });
        Ok(Self {
            tx: Some(tx),
            latest,
            worker: Some(worker),
        })
    }

    fn finish(&mut self) -> Vec<(u64, DelayEstimate)> {
        self.tx.take();
        self.worker.take().and_then(|w| w.join().ok()).unwrap_or_default()
    }
}

impl Drop for BackgroundTdc {
    fn drop(&mut self) {
        self.finish();
    }
}

struct Residual {
    model: FsmnModel,
    runtime: FsmnRuntime,
    fbank: MelFilterbank,
    splicer: FeatureSplicer,
    /// Linear output waiting for the next frame's features.
    pending: Option<Spectrum>,
}

/// A delay estimate produced while streaming.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayTraceEntry {
    pub frame: u64,
    pub tau: usize,
    pub confidence: f64,
}

/// One streaming echo canceller.
pub struct Pipeline {
    cfg: PipelineConfig,
    hop: usize,
    analyzer: StreamingAnalyzer,
    synth: StreamingSynthesizer,
    far_line: DelayLine,
    mic_buf: Vec<f64>,
    far_buf: Vec<f64>,
    tdc: Tdc,
    tau: usize,
    pending_tau: Option<usize>,
    wrls: Option<WrlsFilter>,
    res: Option<Residual>,
    frames: u64,
    underruns: u64,
    delay_trace: Vec<DelayTraceEntry>,
    timers: [Timer; 3],
    total: Timer,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("frames", &self.frames)
            .field("tau", &self.tau)
            .field("res", &self.res.is_some())
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    /// Builds a pipeline. With `model = None` the residual stage is off.
    pub fn new(cfg: PipelineConfig, model: Option<FsmnModel>) -> Result<Self> {
        cfg.validate()?;
        let n_bins = cfg.frame.n_bins();
        let wrls = if cfg.stages.linear {
            let filter = WrlsFilter::new(cfg.wrls.clone(), n_bins)?;
            #[cfg(feature = "parallel")]
            let filter = filter.with_threads(cfg.effective_threads())?;
            Some(filter)
        } else {
            None
        };
        let res = match model {
            Some(model) if cfg.stages.res => {
                if !cfg.stages.linear {
                    return Err(Error::config("residual suppression requires the linear stage"));
                }
                model.validate()?;
                let fbank = MelFilterbank::new(&cfg.fbank, &cfg.frame)?;
                if 2 * fbank.n_mels() != FRAME_FEATURES || model.shape.input_dim != SPLICE * FRAME_FEATURES {
                    return Err(ModelError::Shape(format!(
                        "model expects {} inputs, features give {}",
                        model.shape.input_dim,
                        SPLICE * 2 * fbank.n_mels()
                    ))
                    .into());
                }
                if model.shape.mask_dim != n_bins {
                    return Err(ModelError::Shape(format!(
                        "model predicts {} bins, frames have {n_bins}",
                        model.shape.mask_dim
                    ))
                    .into());
                }
                Some(Residual {
                    runtime: FsmnRuntime::new(&model),
                    model,
                    fbank,
                    splicer: FeatureSplicer::new(FRAME_FEATURES),
                    pending: None,
                })
            }
            _ => None,
        };
        let tdc = match (cfg.stages.tdc, cfg.tdc_mode) {
            (false, _) => Tdc::Off,
            (true, TdcMode::Inline) => Tdc::Inline(Box::new(TdcEstimator::new(&cfg.tdc)?)),
            (true, TdcMode::Background) => Tdc::Background(BackgroundTdc::spawn(&cfg.tdc)?),
        };
        let history = cfg.frame.frame_len + cfg.wrls.taps * cfg.frame.hop;
        Ok(Self {
            hop: cfg.frame.hop,
            analyzer: StreamingAnalyzer::new(&cfg.frame),
            synth: StreamingSynthesizer::new(&cfg.frame),
            far_line: DelayLine::new(cfg.tdc.max_delay, history),
            mic_buf: Vec::new(),
            far_buf: Vec::new(),
            tdc,
            tau: cfg.fixed_delay,
            pending_tau: None,
            wrls,
            res,
            frames: 0,
            underruns: 0,
            delay_trace: Vec::new(),
            timers: [Timer::new("tdc"), Timer::new("linear"), Timer::new("res")],
            total: Timer::new("total"),
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn has_residual_stage(&self) -> bool {
        self.res.is_some()
    }

    /// Samples between an input sample and its processed output.
    pub fn latency_samples(&self) -> usize {
        self.hop * if self.res.is_some() { 2 } else { 1 }
    }

    pub fn algorithmic_latency_ms(&self) -> f64 {
        1000.0 * self.latency_samples() as f64 / self.cfg.frame.sample_rate as f64
    }

    pub fn current_delay(&self) -> usize {
        self.tau
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    /// Frames for which the far end had not delivered a full hop.
    pub fn underruns(&self) -> u64 {
        self.underruns
    }

    pub fn delay_trace(&self) -> &[DelayTraceEntry] {
        &self.delay_trace
    }

    pub fn wrls_faults(&self) -> u64 {
        self.wrls.as_ref().map_or(0, |w| w.faults())
    }

    pub fn fsmn_faults(&self) -> u64 {
        self.res.as_ref().map_or(0, |r| r.runtime.faults())
    }

    pub fn push_far(&mut self, far: &[f64]) {
        self.far_buf.extend_from_slice(far);
    }

    /// Queues microphone samples and returns every completed output hop.
    pub fn push_mic(&mut self, mic: &[f64]) -> Result<Vec<f64>> {
        self.mic_buf.extend_from_slice(mic);
        let mut out = Vec::with_capacity(self.mic_buf.len() / self.hop * self.hop);
        let mut start = 0;
        while self.mic_buf.len() - start >= self.hop {
            let mic_hop: Vec<f64> = self.mic_buf[start..start + self.hop].to_vec();
            let take = self.far_buf.len().min(self.hop);
            let mut far_hop: Vec<f64> = self.far_buf.drain(..take).collect();
            if take < self.hop {
                self.underruns += 1;
                far_hop.resize(self.hop, 0.0);
            }
            out.extend(self.process_hop(&mic_hop, &far_hop)?);
            start += self.hop;
        }
        self.mic_buf.drain(..start);
        Ok(out)
    }

    /// Feeds matching chunks of far end and microphone.
    pub fn push(&mut self, mic: &[f64], far: &[f64]) -> Result<Vec<f64>> {
        self.push_far(far);
        self.push_mic(mic)
    }

    /// Zero-pads the last partial hop and drains the latency, so the
    /// returned tail completes every input sample.
    pub fn finish(&mut self) -> Result<Vec<f64>> {
        let rem = self.mic_buf.len();
        let mut out = Vec::new();
        if rem > 0 {
            let pad = vec![0.0; self.hop - rem];
            let far_pad = self.hop.saturating_sub(self.far_buf.len());
            self.push_far(&vec![0.0; far_pad]);
            out.extend(self.push_mic(&pad)?);
        }
        for _ in 0..self.latency_samples() / self.hop {
            let zeros = vec![0.0; self.hop];
            out.extend(self.push(&zeros, &zeros)?);
        }
        if let Tdc::Background(bg) = &mut self.tdc {
            for (frame, e) in bg.finish() {
                self.delay_trace.push(DelayTraceEntry {
                    frame,
                    tau: e.tau,
                    confidence: e.confidence,
                });
            }
        }
        Ok(out)
    }

    fn aligned_far(&self, ago: usize) -> Spectrum {
        let block = self.far_line.read(self.tau, self.cfg.frame.frame_len, ago);
        self.analyzer.analyze(&block)
    }

    fn process_hop(&mut self, mic: &[f64], far: &[f64]) -> Result<Vec<f64>> {
        let t0 = Instant::now();
        let frame = self.frames;

        // Delay changes take effect between frames.
        if let Some(tau) = self.pending_tau.take() {
            if tau != self.tau {
                self.tau = tau;
                if self.wrls.is_some() {
                    // Previous frames as they look at the new delay, newest first.
                    let history: Vec<Spectrum> = (0..self.cfg.wrls.taps).map(|k| self.aligned_far(k * self.hop)).collect();
                    if let Some(w) = &mut self.wrls {
                        w.reprime(&history);
                    }
                }
            }
        }

        let t = Instant::now();
        match &mut self.tdc {
            Tdc::Off => {}
            Tdc::Inline(est) => {
                if let Some(e) = est.push_hop(far, mic)? {
                    self.delay_trace.push(DelayTraceEntry {
                        frame,
                        tau: e.tau,
                        confidence: e.confidence,
                    });
                    self.pending_tau = Some(e.tau);
                }
            }
            Tdc::Background(bg) => {
                if let Some(tx) = &bg.tx {
                    let _ = tx.send((far.to_vec(), mic.to_vec()));
                }
                let latest = bg.latest.load(Ordering::Acquire);
                if latest != NO_ESTIMATE {
                    self.pending_tau = Some(latest as usize);
                }
            }
        }
        self.timers[0].record(t);

        let t = Instant::now();
        self.far_line.write(far);
        let mut d = self.analyzer.push(mic);
        d.frame_index = frame;
        let mut x = self.aligned_far(0);
        x.frame_index = frame;
        let estimate = match &mut self.wrls {
            Some(w) => w.process(&d, &x)?,
            None => d,
        };
        self.timers[1].record(t);

        let t = Instant::now();
        let to_synth = match &mut self.res {
            None => Some(estimate),
            Some(r) => {
                let feats = frame_features(&r.fbank, &estimate, &x);
                let prev = r.pending.replace(estimate);
                match r.splicer.push(feats) {
                    Some(mut v) => {
                        r.model.normalize(&mut v);
                        let mask = r.runtime.forward(&r.model, &v);
                        prev.map(|s| apply_mask(&s, &mask))
                    }
                    None => None,
                }
            }
        };
        self.timers[2].record(t);

        let mut out = match to_synth {
            Some(spec) => self.synth.push(&spec)?,
            None => vec![0.0; self.hop],
        };
        if self.cfg.output_gain != 1.0 {
            for v in &mut out {
                *v *= self.cfg.output_gain;
            }
        }
        self.frames += 1;
        self.total.record(t0);
        Ok(out)
    }

    pub fn latency_report(&self) -> LatencyReport {
        let stages = self
            .timers
            .iter()
            .filter(|t| match t.name {
                "tdc" => self.cfg.stages.tdc,
                "linear" => true,
                _ => self.res.is_some(),
            })
            .map(Timer::timing)
            .collect();
        LatencyReport {
            frames: self.frames,
            stages,
            total: self.total.timing(),
            algorithmic_latency_ms: self.algorithmic_latency_ms(),
        }
    }
}

/// Runs a whole signal pair and returns the output aligned to the input,
/// with the same length as `mic`.
pub fn process_signals(pipeline: &mut Pipeline, mic: &[f64], far: &[f64]) -> Result<Vec<f64>> {
    let latency = pipeline.latency_samples();
    let mut far = far.to_vec();
    far.resize(mic.len(), 0.0);
    let mut out = pipeline.push(mic, &far)?;
    out.extend(pipeline.finish()?);
    Ok(out.into_iter().skip(latency).take(mic.len()).collect())
}

/// Summary of a file run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub samples: usize,
    /// Input-over-output energy where the far end is active, in dB.
    pub erle_db: Option<f64>,
    pub delay_trace: Vec<DelayTraceEntry>,
    pub final_delay: usize,
    pub underruns: u64,
    pub wrls_faults: u64,
    pub fsmn_faults: u64,
    pub latency: LatencyReport,
}

pub fn run_signals(cfg: PipelineConfig, model: Option<FsmnModel>, mic: &[f64], far: &[f64]) -> Result<(Vec<f64>, RunSummary)> {
    let mut p = Pipeline::new(cfg, model)?;
    let out = process_signals(&mut p, mic, far)?;
    let mut far_full = far.to_vec();
    far_full.resize(mic.len(), 0.0);
    let summary = RunSummary {
        samples: out.len(),
        erle_db: erle(mic, &out, &activity_mask(&far_full)),
        delay_trace: p.delay_trace().to_vec(),
        final_delay: p.current_delay(),
        underruns: p.underruns(),
        wrls_faults: p.wrls_faults(),
        fsmn_faults: p.fsmn_faults(),
        latency: p.latency_report(),
    };
    Ok((out, summary))
}

/// Processes WAV files. Mono inputs only; rates other than 16 kHz are
/// handled per `policy`. The output is always 16 kHz.
pub fn run_file(
    mic: impl AsRef<Path>,
    far: impl AsRef<Path>,
    out: impl AsRef<Path>,
    cfg: PipelineConfig,
    model: Option<FsmnModel>,
    policy: RatePolicy,
    format: SampleFormat,
) -> Result<RunSummary> {
    let mic = read_wav(mic, policy)?;
    let far = read_wav(far, policy)?;
    let rate = cfg.frame.sample_rate;
    let (y, summary) = run_signals(cfg, model, &mic, &far)?;
    write_wav(out, &y, rate, format)?;
    Ok(summary)
}
