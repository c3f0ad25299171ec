use echoforge::dsp::wav::{read_wav, write_wav, RatePolicy, SampleFormat};
use echoforge::dsp::{FrameConfig, StreamingAnalyzer, StreamingSynthesizer};
use echoforge::fsmn::{FsmnModel, FsmnShape};
use echoforge::pipeline::{process_signals, run_file, Pipeline, PipelineConfig};
use echoforge::synth::{convolve, gen_echo_path, speech_like, white_noise};
use echoforge::wrls::WrlsFilter;
use echoforge::Error;

fn echoic_pair(n: usize, delay: usize) -> (Vec<f64>, Vec<f64>) {
    let far = speech_like(1, n, 16_000);
    let rir = gen_echo_path(2, 80.0, 512, 16_000);
    let echo = convolve(&far, &rir);
    let near = speech_like(3, n, 16_000);
    let mic = (0..n)
        .map(|t| 0.3 * near[t] + if t >= delay { echo[t - delay] } else { 0.0 })
        .collect();
    (mic, far)
}

fn linear_only() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.stages.tdc = false;
    cfg.stages.res = false;
    cfg
}

#[test]
fn impulse_appears_after_two_hops_with_residual_stage() {
    // all-zero weights give a constant 0.5 mask
    let model = FsmnModel::zeros(FsmnShape::default());
    let mut p = Pipeline::new(PipelineConfig::default(), Some(model)).unwrap();
    assert_eq!(p.latency_samples(), 320);
    let n = 4000;
    let at = 1000;
    let mut mic = vec![0.0; n];
    mic[at] = 1.0;
    let far = vec![0.0; n];
    let mut out = p.push(&mic, &far).unwrap();
    out.extend(p.finish().unwrap());
    let peak = out
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    assert_eq!(peak.0, at + 320);
    assert!((peak.1 - 0.5).abs() < 1e-9, "peak {}", peak.1);
}

#[test]
fn impulse_appears_after_one_hop_linear_only() {
    let mut p = Pipeline::new(linear_only(), None).unwrap();
    assert_eq!(p.latency_samples(), 160);
    let mut mic = vec![0.0; 2000];
    mic[700] = 1.0;
    let out = p.push(&mic, &vec![0.0; 2000]).unwrap();
    let peak = out.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
    assert_eq!(peak.0, 860);
}

#[test]
fn linear_stage_matches_hand_composed_filter_chain() {
    let n = 16_000;
    let (mic, far) = echoic_pair(n, 0);
    let cfg = linear_only();
    let mut p = Pipeline::new(cfg.clone(), None).unwrap();
    let got = p.push(&mic, &far).unwrap();

    let frame = FrameConfig::default();
    let (mut am, mut af) = (StreamingAnalyzer::new(&frame), StreamingAnalyzer::new(&frame));
    let mut synth = StreamingSynthesizer::new(&frame);
    let mut filt = WrlsFilter::new(cfg.wrls.clone(), frame.n_bins()).unwrap();
    let mut want = Vec::new();
    for (m, f) in mic.chunks(frame.hop).zip(far.chunks(frame.hop)) {
        let d = am.push(m);
        let x = af.push(f);
        want.extend(synth.push(&filt.process(&d, &x).unwrap()).unwrap());
    }
    assert_eq!(got.len(), want.len());
    let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-12, "max deviation {err}");
}

#[test]
fn disabling_residual_stage_equals_running_without_model() {
    let (mic, far) = echoic_pair(8000, 400);
    let model = FsmnModel::random(FsmnShape::default(), 4);
    let mut cfg = PipelineConfig::default();
    cfg.stages.res = false;
    let a = process_signals(&mut Pipeline::new(cfg, Some(model)).unwrap(), &mic, &far).unwrap();
    let b = process_signals(&mut Pipeline::new(PipelineConfig::default(), None).unwrap(), &mic, &far).unwrap();
    assert_eq!(a, b);
}

#[test]
fn full_pipeline_is_chunking_invariant() {
    let (mic, far) = echoic_pair(12_000, 900);
    let model = FsmnModel::random(FsmnShape::default(), 8);
    let run = |chunk: usize| {
        let mut p = Pipeline::new(PipelineConfig::default(), Some(model.clone())).unwrap();
        let mut out = Vec::new();
        for (m, f) in mic.chunks(chunk).zip(far.chunks(chunk)) {
            out.extend(p.push(m, f).unwrap());
        }
        out.extend(p.finish().unwrap());
        out
    };
    let reference = run(160);
    for chunk in [1, 97, 480, 12_000] {
        assert_eq!(run(chunk), reference, "chunk {chunk}");
    }
}

#[test]
fn delay_is_tracked_in_the_stream() {
    let delay = 1234;
    let n = 48_000;
    let far = white_noise(5, n, 0.3);
    let rir = gen_echo_path(6, 60.0, 480, 16_000);
    let echo = convolve(&far, &rir);
    let mic: Vec<f64> = (0..n).map(|t| if t >= delay { echo[t - delay] } else { 0.0 }).collect();
    let mut p = Pipeline::new(PipelineConfig::default(), None).unwrap();
    process_signals(&mut p, &mic, &far).unwrap();
    // the RIR peak may sit a few samples after the bulk delay
    let tau = p.current_delay() as i64;
    let peak = rir.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0 as i64;
    assert!((tau - delay as i64 - peak).abs() <= 1, "tau {tau}, expected {}", delay as i64 + peak);
}

#[test]
fn run_file_preserves_length_and_rejects_foreign_rates() {
    let dir = tempfile::tempdir().unwrap();
    let (mic, far) = echoic_pair(10_007, 300);
    let (mp, fp, op) = (dir.path().join("mic.wav"), dir.path().join("far.wav"), dir.path().join("out.wav"));
    write_wav(&mp, &mic, 16_000, SampleFormat::Pcm16).unwrap();
    write_wav(&fp, &far, 16_000, SampleFormat::Pcm16).unwrap();
    let summary = run_file(&mp, &fp, &op, linear_only(), None, RatePolicy::Reject, SampleFormat::Float32).unwrap();
    assert_eq!(summary.samples, mic.len());
    assert_eq!(read_wav(&op, RatePolicy::Reject).unwrap().len(), mic.len());

    let slow = dir.path().join("mic8k.wav");
    write_wav(&slow, &mic[..5000], 8000, SampleFormat::Pcm16).unwrap();
    let err = run_file(&slow, &fp, &op, linear_only(), None, RatePolicy::Reject, SampleFormat::Float32).unwrap_err();
    assert!(matches!(err, Error::SampleRate { found: 8000, .. }), "{err}");

    let summary = run_file(&slow, &fp, &op, linear_only(), None, RatePolicy::Resample, SampleFormat::Float32).unwrap();
    assert_eq!(summary.samples, 10_000);
}
