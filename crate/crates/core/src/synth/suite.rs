//! Directory-of-clips test suites with per-clip manifests.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gen_echo_path, mix_scenario, speech_like, Effect, EchoScenario, MixSpec, PathChange};
use crate::dsp::wav::{read_wav, write_wav, RatePolicy, SampleFormat, ENGINE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioClass {
    /// Far-end single talk.
    StFe,
    StFePathChange,
    /// Near-end single talk.
    StNe,
    /// Double talk.
    Dt,
    DtPathChange,
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; 5] = [
        ScenarioClass::StFe,
        ScenarioClass::StFePathChange,
        ScenarioClass::StNe,
        ScenarioClass::Dt,
        ScenarioClass::DtPathChange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioClass::StFe => "st_fe",
            ScenarioClass::StFePathChange => "st_fe_path_change",
            ScenarioClass::StNe => "st_ne",
            ScenarioClass::Dt => "dt",
            ScenarioClass::DtPathChange => "dt_path_change",
        }
    }

    fn has_far_end(self) -> bool {
        self != ScenarioClass::StNe
    }

    fn has_near_end(self) -> bool {
        !matches!(self, ScenarioClass::StFe | ScenarioClass::StFePathChange)
    }

    fn has_path_change(self) -> bool {
        matches!(self, ScenarioClass::StFePathChange | ScenarioClass::DtPathChange)
    }
}

/// Suite description, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSpec {
    pub master_seed: u64,
    pub clips_per_class: usize,
    pub duration_s: f64,
    pub classes: Vec<ScenarioClass>,
    pub ser_db_range: [f64; 2],
    pub delay_range: [usize; 2],
    pub rt60_ms_range: [f64; 2],
    pub path_len: usize,
    pub noise_snr_db: Option<f64>,
    /// Probability of distorting the loudspeaker signal with one random effect.
    pub effect_probability: f64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            master_seed: 2020,
            clips_per_class: 2,
            duration_s: 8.0,
            classes: ScenarioClass::ALL.to_vec(),
            ser_db_range: [-6.0, 10.0],
            delay_range: [160, 4000],
            rt60_ms_range: [30.0, 150.0],
            path_len: 1024,
            noise_snr_db: Some(40.0),
            effect_probability: 0.0,
        }
    }
}

impl SuiteSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("suite spec: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFiles {
    pub mic: String,
    pub far_end: String,
    pub near_end: String,
    pub echo: String,
    pub noise: String,
    pub echo_path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub echo_path_after_change: Option<String>,
}

/// Ground truth for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub name: String,
    pub class: ScenarioClass,
    pub seed: u64,
    pub sample_rate: u32,
    pub samples: usize,
    pub delay: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ser_db: Option<f64>,
    pub rt60_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_change_frame: Option<usize>,
    #[serde(default)]
    pub effects: Vec<Effect>,
    pub files: ClipFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteIndex {
    pub master_seed: u64,
    pub clips: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const INDEX_FILE: &str = "suite.toml";

fn clip_seed(master: u64, class: usize, idx: usize) -> u64 {
    // splitmix64 finalizer over the clip coordinates
    let mut z = master ^ ((class as u64) << 32) ^ idx as u64;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    // TOML integers are signed 64-bit
    (z ^ (z >> 31)) >> 1
}

fn random_effect(rng: &mut ChaCha8Rng) -> Effect {
    match rng.gen_range(0..4) {
        0 => Effect::Clip { fraction: rng.gen_range(0.3..0.9) },
        1 => Effect::Bandlimit { cutoff_hz: rng.gen_range(2000.0..7000.0) },
        2 => Effect::Eq { seed: rng.gen::<u32>() as u64, max_gain_db: rng.gen_range(2.0..8.0), points: 8 },
        _ => Effect::SigmoidNl { gain: rng.gen_range(0.5..3.0) },
    }
}

/// Builds the scenario for one clip of a suite.
pub fn build_clip(spec: &SuiteSpec, class: ScenarioClass, idx: usize) -> Result<(ClipManifest, EchoScenario)> {
    let class_idx = ScenarioClass::ALL.iter().position(|&c| c == class).unwrap();
    let seed = clip_seed(spec.master_seed, class_idx, idx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (spec.duration_s * ENGINE_RATE as f64) as usize;
    let far = if class.has_far_end() {
        speech_like(rng.gen(), n, ENGINE_RATE)
    } else {
        vec![0.0; n]
    };
    let near = if class.has_near_end() {
        speech_like(rng.gen(), n, ENGINE_RATE)
    } else {
        vec![0.0; n]
    };
    let rt60 = rng.gen_range(spec.rt60_ms_range[0]..=spec.rt60_ms_range[1]);
    let path = gen_echo_path(rng.gen(), rt60, spec.path_len, ENGINE_RATE);
    let delay = rng.gen_range(spec.delay_range[0]..=spec.delay_range[1]);
    let ser_db = match class {
        ScenarioClass::StFe | ScenarioClass::StFePathChange => None,
        ScenarioClass::StNe => Some(f64::INFINITY),
        _ => Some(rng.gen_range(spec.ser_db_range[0]..=spec.ser_db_range[1])),
    };
    let path_change = class.has_path_change().then(|| PathChange {
        frame: n / 2 / super::CHANGE_HOP,
        path: gen_echo_path(rng.gen(), rt60, spec.path_len, ENGINE_RATE),
    });
    let effects = if rng.gen_bool(spec.effect_probability.clamp(0.0, 1.0)) {
        vec![random_effect(&mut rng)]
    } else {
        Vec::new()
    };
    let mix = MixSpec {
        ser_db,
        delay,
        noise_snr_db: spec.noise_snr_db,
        effects: effects.clone(),
        path_change: path_change.clone(),
        seed,
    };
    let scenario = mix_scenario(far, near, path, &mix, ENGINE_RATE)?;
    let name = format!("{}_{:02}", class.name(), idx);
    let manifest = ClipManifest {
        name,
        class,
        seed,
        sample_rate: ENGINE_RATE,
        samples: n,
        delay,
        ser_db,
        rt60_ms: rt60,
        path_change_frame: path_change.as_ref().map(|c| c.frame),
        effects,
        files: ClipFiles {
            mic: "mic.wav".into(),
            far_end: "far_end.wav".into(),
            near_end: "near_end.wav".into(),
            echo: "echo.wav".into(),
            noise: "noise.wav".into(),
            echo_path: "echo_path.wav".into(),
            echo_path_after_change: path_change.map(|_| "echo_path_after_change.wav".into()),
        },
    };
    Ok((manifest, scenario))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes every clip of the suite under `out_dir`, one directory per clip,
/// and a suite index. Returns the index.
pub fn gen_suite(spec: &SuiteSpec, out_dir: impl AsRef<Path>) -> Result<SuiteIndex> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut index = SuiteIndex {
        master_seed: spec.master_seed,
        clips: Vec::new(),
    };
    for &class in &spec.classes {
        for idx in 0..spec.clips_per_class {
            let (manifest, sc) = build_clip(spec, class, idx)?;
            let dir = out_dir.join(&manifest.name);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let f = &manifest.files;
            let fmt = SampleFormat::Float32;
            write_wav(dir.join(&f.mic), &sc.mic, ENGINE_RATE, fmt)?;
            write_wav(dir.join(&f.far_end), &sc.far_end, ENGINE_RATE, fmt)?;
            write_wav(dir.join(&f.near_end), &sc.near_end, ENGINE_RATE, fmt)?;
            write_wav(dir.join(&f.echo), &sc.echo, ENGINE_RATE, fmt)?;
            write_wav(dir.join(&f.noise), &sc.noise, ENGINE_RATE, fmt)?;
            write_wav(dir.join(&f.echo_path), &sc.echo_path, ENGINE_RATE, fmt)?;
            if let (Some(file), Some(change)) = (&f.echo_path_after_change, &sc.path_change) {
                write_wav(dir.join(file), &change.path, ENGINE_RATE, fmt)?;
            }
            let text = toml::to_string(&manifest).map_err(|e| Error::config(e.to_string()))?;
            write_text(&dir.join(MANIFEST_FILE), &text)?;
            index.clips.push(manifest.name);
        }
    }
    let text = toml::to_string(&index).map_err(|e| Error::config(e.to_string()))?;
    write_text(&out_dir.join(INDEX_FILE), &text)?;
    Ok(index)
}

/// A clip read back from a suite directory.
#[derive(Debug, Clone)]
pub struct LoadedClip {
    pub dir: PathBuf,
    pub manifest: ClipManifest,
    pub mic: Vec<f64>,
    pub far_end: Vec<f64>,
    pub near_end: Vec<f64>,
    pub echo: Vec<f64>,
}

impl LoadedClip {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let mpath = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: ClipManifest =
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", mpath.display())))?;
        let f = &manifest.files;
        let read = |name: &str| read_wav(dir.join(name), RatePolicy::Reject);
        Ok(Self {
            mic: read(&f.mic)?,
            far_end: read(&f.far_end)?,
            near_end: read(&f.near_end)?,
            echo: read(&f.echo)?,
            manifest,
            dir,
        })
    }
}

impl SuiteIndex {
    /// Reads `suite.toml` if present; otherwise lists clip directories
    /// that contain a manifest, sorted by name.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let ipath = dir.join(INDEX_FILE);
        if ipath.exists() {
            let text = std::fs::read_to_string(&ipath).map_err(|e| Error::io(&ipath, e))?;
            return toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", ipath.display())));
        }
        let mut clips = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            if entry.path().join(MANIFEST_FILE).exists() {
                clips.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        clips.sort();
        Ok(Self { master_seed: 0, clips })
    }
}
