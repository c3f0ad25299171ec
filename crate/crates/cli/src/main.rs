use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use echoforge::activity::activity_mask;
use echoforge::dsp::wav::{read_wav, write_wav, RatePolicy, SampleFormat};
use echoforge::fsmn::{save_model, FsmnModel, FsmnShape};
use echoforge::metrics::{erle, evaluate_suite, EvalStage};
use echoforge::pipeline::{run_signals, Pipeline, PipelineConfig, RunSummary};
use echoforge::synth::{gen_suite, SuiteSpec};
use echoforge::tdc::TdcEstimator;
use echoforge::Error;
use serde_json::json;

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_MODEL: u8 = 4;

/// Marks stdin/stdout; audio there is raw mono 16-bit little-endian PCM at 16 kHz.
const STDIO: &str = "-";

#[derive(Parser)]
#[command(name = "echoforge", version, about = "Streaming acoustic echo cancellation")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the far-end delay; prints one JSON record per update cycle.
    Tdc {
        #[command(flatten)]
        io: Inputs,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Delay compensation and linear filtering only.
    Linear {
        #[command(flatten)]
        io: Inputs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        taps: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Full pipeline.
    Process {
        #[command(flatten)]
        io: Inputs,
        #[arg(long)]
        out: PathBuf,
        /// Residual suppression model; without one the stage is skipped.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        no_res: bool,
        /// Print per-stage compute time.
        #[arg(long)]
        bench: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the run summary as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Generate a labelled synthetic test suite.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a suite.
    Eval {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Stage::Full)]
        stage: Stage,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Per-clip CSV (default: eval.csv inside the suite directory).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a model file with seeded random weights.
    InitModel {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    mic: PathBuf,
    #[arg(long)]
    farend: PathBuf,
    /// Convert inputs that are not at 16 kHz instead of rejecting them.
    #[arg(long)]
    resample: bool,
}

#[derive(Args)]
struct OutputOpts {
    #[arg(long, value_enum, default_value_t = Format::F32)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    F32,
    Pcm16,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Linear,
    Full,
}

#[derive(Debug)]
enum CliError {
    Engine(Error),
    Config(String),
    Io(String, io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Engine(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(..) => EXIT_IO,
            CliError::Engine(e) => match e {
                Error::Config(_) | Error::Scenario(_) => EXIT_CONFIG,
                Error::Io { .. } | Error::Wav { .. } | Error::SampleRate { .. } => EXIT_IO,
                Error::Model(_) => EXIT_MODEL,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Engine(e) => write!(f, "{e}"),
            CliError::Config(m) => write!(f, "invalid arguments: {m}"),
            CliError::Io(what, e) => write!(f, "{what}: {e}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn is_stdio(p: &Path) -> bool {
    p.as_os_str() == STDIO
}

fn policy(resample: bool) -> RatePolicy {
    if resample {
        RatePolicy::Resample
    } else {
        RatePolicy::Reject
    }
}

fn load_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

fn read_raw_s16le<R: Read>(mut r: R) -> CliResult<Vec<f64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| CliError::Io("reading stdin".into(), e))?;
    Ok(s16le_to_f64(&bytes))
}

fn s16le_to_f64(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect()
}

fn f64_to_s16le(samples: &[f64]) -> Vec<u8> {
    samples
        .iter()
        .flat_map(|&s| ((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16).to_le_bytes())
        .collect()
}

fn read_input(path: &Path, resample: bool) -> CliResult<Vec<f64>> {
    if is_stdio(path) {
        read_raw_s16le(io::stdin().lock())
    } else {
        Ok(read_wav(path, policy(resample))?)
    }
}

fn read_inputs(io: &Inputs) -> CliResult<(Vec<f64>, Vec<f64>)> {
    if is_stdio(&io.mic) && is_stdio(&io.farend) {
        return Err(CliError::Config("only one of --mic and --farend can read stdin".into()));
    }
    Ok((read_input(&io.mic, io.resample)?, read_input(&io.farend, io.resample)?))
}

fn write_output(path: &Path, samples: &[f64], rate: u32, format: Format) -> CliResult {
    if is_stdio(path) {
        let mut out = io::stdout().lock();
        out.write_all(&f64_to_s16le(samples))
            .and_then(|_| out.flush())
            .map_err(|e| CliError::Io("writing stdout".into(), e))
    } else {
        let format = match format {
            Format::F32 => SampleFormat::Float32,
            Format::Pcm16 => SampleFormat::Pcm16,
        };
        Ok(write_wav(path, samples, rate, format)?)
    }
}

fn report_erle(summary: &RunSummary) {
    match summary.erle_db {
        Some(e) => eprintln!("ERLE {e:.2} dB over far-end-active frames"),
        None => eprintln!("ERLE undefined (far end silent)"),
    }
}

fn cmd_tdc(io: &Inputs, config: Option<&Path>) -> CliResult {
    let cfg = load_config(config)?;
    let (mic, far) = read_inputs(io)?;
    let mut est = TdcEstimator::new(&cfg.tdc)?;
    let hop = cfg.tdc.hop;
    let rate = cfg.frame.sample_rate as f64;
    let mut out = BufWriter::new(io::stdout().lock());
    let frames = mic.len().div_ceil(hop);
    for k in 0..frames {
        let hop_of = |x: &[f64]| {
            let mut v: Vec<f64> = x.iter().skip(k * hop).take(hop).copied().collect();
            v.resize(hop, 0.0);
            v
        };
        if let Some(e) = est.push_hop(&hop_of(&far), &hop_of(&mic))? {
            let rec = json!({
                "frame": k,
                "time_s": ((k + 1) * hop) as f64 / rate,
                "tau": e.tau,
                "tau_ms": e.tau as f64 * 1e3 / rate,
                "confidence": e.confidence,
            });
            writeln!(out, "{rec}").map_err(|e| CliError::Io("writing stdout".into(), e))?;
        }
    }
    out.flush().map_err(|e| CliError::Io("writing stdout".into(), e))
}

fn cmd_linear(io: &Inputs, out: &Path, beta: Option<f64>, taps: Option<usize>, config: Option<&Path>, format: Format) -> CliResult {
    let mut cfg = load_config(config)?;
    cfg.stages.res = false;
    if let Some(b) = beta {
        cfg.wrls.beta = b;
    }
    if let Some(l) = taps {
        cfg.wrls.taps = l;
    }
    cfg.validate()?;
    let (mic, far) = read_inputs(io)?;
    let rate = cfg.frame.sample_rate;
    let (y, summary) = run_signals(cfg, None, &mic, &far)?;
    write_output(out, &y, rate, format)?;
    report_erle(&summary);
    Ok(())
}

/// Streams microphone audio from stdin through the pipeline, writing each
/// completed block as soon as it is available.
fn stream_stdin(p: &mut Pipeline, far: &[f64], out: &Path, rate: u32, format: Format) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let mut stdin = io::stdin().lock();
    let mut mic = Vec::new();
    let mut y = Vec::new();
    let mut buf = vec![0u8; 2 * 1600];
    let mut carry: Option<u8> = None;
    let latency = p.latency_samples();
    let mut skipped = 0;
    let to_stdout = is_stdio(out);
    let mut emit = |chunk: Vec<f64>, y: &mut Vec<f64>| -> CliResult {
        let drop = (latency - skipped).min(chunk.len());
        skipped += drop;
        let kept = &chunk[drop..];
        if to_stdout {
            let mut o = io::stdout().lock();
            o.write_all(&f64_to_s16le(kept))
                .and_then(|_| o.flush())
                .map_err(|e| CliError::Io("writing stdout".into(), e))?;
        }
        y.extend_from_slice(kept);
        Ok(())
    };
    loop {
        let n = stdin.read(&mut buf).map_err(|e| CliError::Io("reading stdin".into(), e))?;
        if n == 0 {
            break;
        }
        let mut bytes: Vec<u8> = carry.take().into_iter().collect();
        bytes.extend_from_slice(&buf[..n]);
        if bytes.len() % 2 == 1 {
            carry = bytes.pop();
        }
        let chunk = s16le_to_f64(&bytes);
        let start = mic.len();
        mic.extend_from_slice(&chunk);
        let far_chunk: Vec<f64> = (start..mic.len()).map(|t| far.get(t).copied().unwrap_or(0.0)).collect();
        emit(p.push(&chunk, &far_chunk)?, &mut y)?;
    }
    emit(p.finish()?, &mut y)?;
    y.truncate(mic.len());
    if !to_stdout {
        write_output(out, &y, rate, format)?;
    }
    Ok((mic, y))
}

#[allow(clippy::too_many_arguments)]
fn cmd_process(
    io: &Inputs,
    out: &Path,
    model: Option<&Path>,
    no_res: bool,
    bench: bool,
    config: Option<&Path>,
    summary_path: Option<&Path>,
    format: Format,
) -> CliResult {
    let mut cfg = load_config(config)?;
    if let Some(m) = model {
        cfg.model_path = Some(m.to_path_buf());
    }
    if no_res {
        cfg.stages.res = false;
    }
    cfg.validate()?;
    let model = if cfg.stages.res { cfg.load_model()? } else { None };
    if cfg.stages.res && model.is_none() {
        log::info!("no model given; residual suppression disabled");
    }
    let rate = cfg.frame.sample_rate;

    let summary = if is_stdio(&io.mic) {
        if is_stdio(&io.farend) {
            return Err(CliError::Config("only one of --mic and --farend can read stdin".into()));
        }
        let far = read_wav(&io.farend, policy(io.resample))?;
        let mut p = Pipeline::new(cfg, model)?;
        let (mic, y) = stream_stdin(&mut p, &far, out, rate, format)?;
        let mut far_full = far;
        far_full.resize(mic.len(), 0.0);
        RunSummary {
            samples: y.len(),
            erle_db: erle(&mic, &y, &activity_mask(&far_full)),
            delay_trace: p.delay_trace().to_vec(),
            final_delay: p.current_delay(),
            underruns: p.underruns(),
            wrls_faults: p.wrls_faults(),
            fsmn_faults: p.fsmn_faults(),
            latency: p.latency_report(),
        }
    } else {
        let (mic, far) = read_inputs(io)?;
        let (y, summary) = run_signals(cfg, model, &mic, &far)?;
        write_output(out, &y, rate, format)?;
        summary
    };

    report_erle(&summary);
    if summary.underruns > 0 {
        log::warn!("far end ran short on {} hops (zero-filled)", summary.underruns);
    }
    if summary.wrls_faults + summary.fsmn_faults > 0 {
        log::warn!("recovered from {} filter and {} network faults", summary.wrls_faults, summary.fsmn_faults);
    }
    if bench {
        eprint!("{}", summary.latency.to_table());
    }
    if let Some(path) = summary_path {
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(path, text).map_err(|e| CliError::Io(format!("writing {}", path.display()), e))?;
    }
    Ok(())
}

fn cmd_synth(spec: Option<&Path>, out: &Path) -> CliResult {
    let spec = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("reading {}", p.display()), e))?;
            SuiteSpec::from_toml(&text)?
        }
        None => SuiteSpec::default(),
    };
    let index = gen_suite(&spec, out)?;
    eprintln!("wrote {} clips to {}", index.clips.len(), out.display());
    Ok(())
}

fn cmd_eval(suite: &Path, model: Option<&Path>, stage: Stage, config: Option<&Path>, csv: Option<&Path>) -> CliResult {
    let mut cfg = load_config(config)?;
    if let Some(m) = model {
        cfg.model_path = Some(m.to_path_buf());
    }
    let stage = match stage {
        Stage::Linear => EvalStage::Linear,
        Stage::Full => EvalStage::Full,
    };
    let model = match stage {
        EvalStage::Full => cfg.load_model()?,
        EvalStage::Linear => None,
    };
    if matches!(stage, EvalStage::Full) && model.is_none() {
        log::warn!("no model given; scoring the linear stage only");
    }
    let report = evaluate_suite(suite, &cfg, model.as_ref(), stage)?;
    print!("{}", report.to_table());
    let csv_path = csv.map_or_else(|| suite.join("eval.csv"), Path::to_path_buf);
    std::fs::write(&csv_path, report.to_csv()).map_err(|e| CliError::Io(format!("writing {}", csv_path.display()), e))?;
    eprintln!("per-clip results in {}", csv_path.display());
    Ok(())
}

fn cmd_init_model(seed: u64, out: &Path) -> CliResult {
    let model = FsmnModel::random(FsmnShape::default(), seed);
    save_model(&model, out).map_err(Error::from)?;
    eprintln!("wrote {} parameters to {}", model.param_count(), out.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Tdc { io, config } => cmd_tdc(&io, config.as_deref()),
        Command::Linear {
            io,
            out,
            beta,
            taps,
            config,
            output,
        } => cmd_linear(&io, &out, beta, taps, config.as_deref(), output.format),
        Command::Process {
            io,
            out,
            model,
            no_res,
            bench,
            config,
            summary,
            output,
        } => cmd_process(&io, &out, model.as_deref(), no_res, bench, config.as_deref(), summary.as_deref(), output.format),
        Command::Synth { spec, out } => cmd_synth(spec.as_deref(), &out),
        Command::Eval {
            suite,
            model,
            stage,
            config,
            csv,
        } => cmd_eval(&suite, model.as_deref(), stage, config.as_deref(), csv.as_deref()),
        Command::InitModel { seed, out } => cmd_init_model(seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("echoforge: {e}");
            ExitCode::from(e.code())
        }
    }
}
