use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use echoforge::dsp::wav::{read_wav, write_wav, RatePolicy, SampleFormat};
use echoforge::synth::{convolve, gen_echo_path, speech_like, white_noise};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_echoforge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn echoforge")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a 2 s echoic pair at 16-bit and returns (mic, far) paths.
fn pair(dir: &Path, delay: usize) -> (PathBuf, PathBuf) {
    let n = 32_000;
    let far = white_noise(1, n, 0.2);
    let near = speech_like(2, n, 16_000);
    let echo = convolve(&far, &gen_echo_path(3, 60.0, 400, 16_000));
    let mic: Vec<f64> = (0..n)
        .map(|t| 0.1 * near[t] + if t >= delay { echo[t - delay] } else { 0.0 })
        .collect();
    let (mp, fp) = (dir.join("mic.wav"), dir.join("far.wav"));
    write_wav(&mp, &mic, 16_000, SampleFormat::Pcm16).unwrap();
    write_wav(&fp, &far, 16_000, SampleFormat::Pcm16).unwrap();
    (mp, fp)
}

#[test]
fn tdc_prints_json_records_with_the_delay() {
    let dir = tempfile::tempdir().unwrap();
    let (mic, far) = pair(dir.path(), 640);
    let out = run(&["tdc", "--mic", s(&mic), "--farend", s(&far)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(records.len() >= 5);
    let last = records.last().unwrap();
    let tau = last["tau"].as_u64().unwrap();
    assert!((640..=650).contains(&tau), "tau {tau}");
    assert!(last["confidence"].as_f64().unwrap() > 0.5);
}

#[test]
fn process_without_residual_stage_matches_linear_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let (mic, far) = pair(dir.path(), 320);
    let model = dir.path().join("m.fsmn");
    let (a, b) = (dir.path().join("lin.wav"), dir.path().join("proc.wav"));
    assert!(run(&["init-model", "--seed", "3", "--out", s(&model)]).status.success());
    let lin = run(&["linear", "--mic", s(&mic), "--farend", s(&far), "--out", s(&a)]);
    assert!(lin.status.success());
    assert!(String::from_utf8_lossy(&lin.stderr).contains("ERLE"));
    let proc = run(&["process", "--mic", s(&mic), "--farend", s(&far), "--out", s(&b), "--model", s(&model), "--no-res"]);
    assert!(proc.status.success(), "{}", String::from_utf8_lossy(&proc.stderr));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn linear_flags_change_the_filter() {
    let dir = tempfile::tempdir().unwrap();
    let (mic, far) = pair(dir.path(), 0);
    let (a, b) = (dir.path().join("a.wav"), dir.path().join("b.wav"));
    assert!(run(&["linear", "--mic", s(&mic), "--farend", s(&far), "--out", s(&a)]).status.success());
    assert!(run(&["linear", "--mic", s(&mic), "--farend", s(&far), "--out", s(&b), "--beta", "1.0", "--taps", "3"]).status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn full_pipeline_with_model_reports_benchmark_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let (mic, far) = pair(dir.path(), 160);
    let model = dir.path().join("m.fsmn");
    let out_wav = dir.path().join("out.wav");
    let summary = dir.path().join("summary.json");
    assert!(run(&["init-model", "--out", s(&model)]).status.success());
    let out = run(&[
        "process", "--mic", s(&mic), "--farend", s(&far), "--out", s(&out_wav), "--model", s(&model), "--bench", "--summary", s(&summary),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    for stage in ["tdc", "linear", "res", "total"] {
        assert!(err.contains(stage), "missing {stage} in {err}");
    }
    assert_eq!(read_wav(&out_wav, RatePolicy::Reject).unwrap().len(), 32_000);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(json["samples"], 32_000);
    assert_eq!(json["latency"]["algorithmic_latency_ms"], 20.0);
}

#[test]
fn stdin_stream_matches_file_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (mic, far) = pair(dir.path(), 480);
    let file_out = dir.path().join("file.wav");
    assert!(run(&["process", "--mic", s(&mic), "--farend", s(&far), "--out", s(&file_out), "--format", "pcm16"]).status.success());

    let raw: Vec<u8> = read_wav(&mic, RatePolicy::Reject)
        .unwrap()
        .iter()
        .flat_map(|v| ((v * 32768.0).round() as i16).to_le_bytes())
        .collect();
    let mut child = bin()
        .args(["process", "--mic", "-", "--farend", s(&far), "--out", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let writer = std::thread::spawn(move || {
        // odd-sized writes exercise sample reassembly
        for chunk in raw.chunks(777) {
            stdin.write_all(chunk).unwrap();
        }
    });
    let out = child.wait_with_output().unwrap();
    writer.join().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let streamed: Vec<i16> = out.stdout.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])).collect();
    let filed: Vec<i16> = read_wav(&file_out, RatePolicy::Reject)
        .unwrap()
        .iter()
        .map(|v| (v * 32768.0).round() as i16)
        .collect();
    assert_eq!(streamed, filed);
}

#[test]
fn synth_then_eval_writes_table_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(&spec, "clips_per_class = 1\nduration_s = 2.0\nclasses = [\"st_fe\", \"dt\"]\n").unwrap();
    let suite = dir.path().join("suite");
    let out = run(&["synth", "--spec", s(&spec), "--out", s(&suite)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(suite.join("st_fe_00/manifest.toml").is_file());

    let csv = dir.path().join("r.csv");
    let out = run(&["eval", "--suite", s(&suite), "--stage", "linear", "--csv", s(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("st_fe") && table.contains("dt"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("clip,class,erle_db"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let (mic, far) = pair(dir.path(), 0);
    let out_wav = dir.path().join("o.wav");

    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "no_such_key = 1\n").unwrap();
    let r = run(&["process", "--mic", s(&mic), "--farend", s(&far), "--out", s(&out_wav), "--config", s(&bad_cfg)]);
    assert_eq!(r.status.code(), Some(2));

    let r = run(&["linear", "--mic", s(&mic), "--farend", s(&far), "--out", s(&out_wav), "--taps", "0"]);
    assert_eq!(r.status.code(), Some(2));

    let r = run(&["process", "--mic", "-", "--farend", "-", "--out", s(&out_wav)]);
    assert_eq!(r.status.code(), Some(2));

    let r = run(&["process", "--mic", "/nonexistent.wav", "--farend", s(&far), "--out", s(&out_wav)]);
    assert_eq!(r.status.code(), Some(3));

    let slow = dir.path().join("slow.wav");
    write_wav(&slow, &[0.0; 800], 8000, SampleFormat::Pcm16).unwrap();
    let r = run(&["process", "--mic", s(&slow), "--farend", s(&far), "--out", s(&out_wav)]);
    assert_eq!(r.status.code(), Some(3));
    let r = run(&["process", "--mic", s(&slow), "--farend", s(&far), "--out", s(&out_wav), "--resample"]);
    assert_eq!(r.status.code(), Some(0));

    let junk = dir.path().join("junk.fsmn");
    std::fs::write(&junk, b"not a model at all").unwrap();
    let r = run(&["process", "--mic", s(&mic), "--farend", s(&far), "--out", s(&out_wav), "--model", s(&junk)]);
    assert_eq!(r.status.code(), Some(4));

    let r = run(&["process", "--mic", s(&mic)]);
    assert_eq!(r.status.code(), Some(2));
}
