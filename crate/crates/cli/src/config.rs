//! Experiment configuration file.
//!
//! ```toml
//! version = 1
//! output_dir = "runs/demo"
//! representation = "dft"        # raw | dct | dft
//! variant = "attention"         # attention | no-attention | early | late
//!
//! [dataset]
//! source = "synth"              # daily | csv | synth
//! # path = "data/daily"         # daily root or csv manifest
//! preset = "planted-relevance"  # synth only
//! num_sensors = 3
//! ...
//!
//! [windowing]
//! length = 32
//! stride = 8
//!
//! [model]
//! share_sensor_weights = true
//!
//! [train]
//! epochs = 10
//! ```
//!
//! Relative paths resolve against the config file's directory. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use attnhar::data::{load_csv_dataset, load_daily_dataset, synth_generate, Dataset, SynthSpec, Tone};
use attnhar::{HarError, ImageKind, ModelConfig, ModelVariant, Representation, TrainConfig, WindowingConfig};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub windowing: WindowingConfig,
    #[serde(default = "default_kind")]
    pub representation: ImageKind,
    #[serde(default = "default_variant")]
    pub variant: ModelVariant,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_kind() -> ImageKind {
    ImageKind::Dft
}

fn default_variant() -> ModelVariant {
    ModelVariant::Attention
}

fn default_output() -> PathBuf {
    PathBuf::from("attnhar-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Daily { path: PathBuf },
    Csv { path: PathBuf },
    Synth(SynthConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthPreset {
    DistinctFrequencies,
    PlantedRelevance,
}

/// A synthetic dataset: a preset, or explicit per-class tones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default)]
    pub preset: Option<SynthPreset>,
    pub num_sensors: usize,
    pub num_channels: usize,
    pub num_classes: usize,
    pub num_subjects: usize,
    pub recordings_per_class: usize,
    pub frames: usize,
    pub sample_rate_hz: u32,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub signatures: Option<Vec<Vec<Tone>>>,
    #[serde(default)]
    pub relevant_sensor_map: Option<Vec<usize>>,
}

impl SynthConfig {
    pub fn to_spec(&self) -> Result<SynthSpec, HarError> {
        let mut spec = match (self.preset, &self.signatures) {
            (Some(_), Some(_)) => {
                return Err(HarError::Config(
                    "synth: give either a preset or signatures, not both".into(),
                ))
            }
            (None, None) => {
                return Err(HarError::Config("synth: a preset or signatures is required".into()))
            }
            (Some(p), None) => {
                let make = match p {
                    SynthPreset::DistinctFrequencies => SynthSpec::distinct_frequencies,
                    SynthPreset::PlantedRelevance => SynthSpec::planted_relevance,
                };
                make(
                    self.num_sensors,
                    self.num_channels,
                    self.num_classes,
                    self.num_subjects,
                    self.recordings_per_class,
                    self.frames,
                    self.sample_rate_hz,
                    self.noise_std,
                )
            }
            (None, Some(sig)) => SynthSpec {
                num_sensors: self.num_sensors,
                num_channels: self.num_channels,
                num_classes: self.num_classes,
                num_subjects: self.num_subjects,
                recordings_per_class: self.recordings_per_class,
                frames: self.frames,
                sample_rate_hz: self.sample_rate_hz,
                signatures: sig.clone(),
                noise_std: self.noise_std,
                relevant_sensor_map: None,
            },
        };
        if self.relevant_sensor_map.is_some() {
            spec.relevant_sensor_map = self.relevant_sensor_map.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            HarError::Config(m) => HarError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Parses and validates; TOML errors carry the offending line and key.
    pub fn parse(text: &str) -> Result<Self, HarError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarError::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(HarError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        cfg.windowing.validate()?;
        cfg.model.block.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.dataset {
            DatasetSource::Daily { path } | DatasetSource::Csv { path } => fix(path),
            DatasetSource::Synth(_) => {}
        }
        fix(&mut self.output_dir);
    }

    pub fn representation(&self) -> Representation {
        Representation {
            windowing: self.windowing,
            kind: self.representation,
        }
    }

    /// Short name used in artifact file names.
    pub fn dataset_name(&self) -> String {
        match &self.dataset {
            DatasetSource::Daily { .. } => "daily".into(),
            DatasetSource::Csv { path } => path
                .file_stem()
                .map_or("csv".into(), |s| s.to_string_lossy().into_owned()),
            DatasetSource::Synth(_) => "synth".into(),
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset, HarError> {
        let ds = match &self.dataset {
            DatasetSource::Daily { path } => {
                if !path.is_dir() {
                    return Err(HarError::MissingPath(path.clone()));
                }
                load_daily_dataset(path)?
            }
            DatasetSource::Csv { path } => {
                if !path.is_file() {
                    return Err(HarError::MissingPath(path.clone()));
                }
                load_csv_dataset(path)?
            }
            DatasetSource::Synth(s) => synth_generate(&s.to_spec()?, s.seed)?,
        };
        ds.validate()?;
        Ok(ds)
    }
}
