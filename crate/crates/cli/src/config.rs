//! Run configuration: a flat `key = value` file with `[section]` headers.
//!
//! Every key is listed in `docs/config.md`. Relative paths are resolved
//! against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use brpsnn::data::SynthKind;
use brpsnn::encode::{EncoderConfig, Polarity};
use brpsnn::learn::{FeedbackScale, TpApply, TpMode, TrainConfig};
use brpsnn::{LifParams, Shape, Topology};
use ini::Ini;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Cifar10 {
        train_files: Vec<PathBuf>,
        test_files: Vec<PathBuf>,
    },
    Events {
        train: PathBuf,
        test: PathBuf,
    },
    Synth {
        kind: SynthKind,
        train_per_class: usize,
        test_per_class: usize,
        channels: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub topology: Topology,
    pub init_gain: f32,
    pub feedback_scale: FeedbackScale,
    pub lif: LifParams,
    pub train: TrainConfig,
    pub epochs: usize,
    /// Stop after the first epoch whose test accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    pub data: DataSource,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub out_dir: PathBuf,
}

/// Keys accepted in each section.
const KEYS: &[(&str, &[&str])] = &[
    ("model", &["topology", "init_gain", "feedback_scale"]),
    ("neuron", &["g", "v_th", "v_reset", "v_rest", "tau_ref", "surrogate_width"]),
    ("encoding", &["t_window", "alpha", "polarity"]),
    (
        "train",
        &[
            "tp_mode",
            "tp_apply",
            "eta_conv",
            "eta_fc",
            "batch",
            "epochs",
            "seed",
            "shuffle",
            "target_accuracy",
        ],
    ),
    (
        "data",
        &[
            "kind",
            "train_images",
            "train_labels",
            "test_images",
            "test_labels",
            "train_files",
            "test_files",
            "train_events",
            "test_events",
            "synth_kind",
            "train_per_class",
            "test_per_class",
            "channels",
            "train_limit",
            "test_limit",
        ],
    ),
    ("output", &["dir"]),
];

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

struct Sections {
    ini: Ini,
    base: PathBuf,
}

impl Sections {
    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.section(Some(section)).and_then(|s| s.get(key)).map(str::trim)
    }

    fn parse<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(section, key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| cfg_err(format!("[{section}] {key} = '{v}': {e}")))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(section, key)?.unwrap_or(default))
    }

    fn path(&self, section: &str, key: &str) -> Result<PathBuf, CliError> {
        let v = self
            .raw(section, key)
            .ok_or_else(|| cfg_err(format!("[{section}] {key} is required")))?;
        Ok(self.base.join(v))
    }

    fn paths(&self, section: &str, key: &str) -> Result<Vec<PathBuf>, CliError> {
        let v = self
            .raw(section, key)
            .ok_or_else(|| cfg_err(format!("[{section}] {key} is required")))?;
        Ok(v.split(',').map(|p| self.base.join(p.trim())).collect())
    }
}

fn parse_polarity(s: &str) -> Result<Polarity, CliError> {
    match s {
        "intensity" => Ok(Polarity::Intensity),
        "literal" => Ok(Polarity::Literal),
        other => Err(cfg_err(format!("[encoding] polarity = '{other}': expected intensity or literal"))),
    }
}

impl RunConfig {
    /// Reads and validates a config file, then applies `section.key=value`
    /// overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str_with(&text, &base, overrides)
    }

    pub fn from_str_with(text: &str, base: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let mut ini = Ini::load_from_str(text).map_err(|e| cfg_err(format!("config syntax: {e}")))?;
        for o in overrides {
            let (lhs, value) = o
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("override '{o}' is not section.key=value")))?;
            let (section, key) = lhs
                .trim()
                .split_once('.')
                .ok_or_else(|| cfg_err(format!("override '{o}' is not section.key=value")))?;
            ini.with_section(Some(section)).set(key, value.trim());
        }
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(cfg_err(format!("key '{k}' appears before any [section]")));
                }
                continue;
            };
            let allowed = KEYS
                .iter()
                .find(|(s, _)| *s == section)
                .ok_or_else(|| cfg_err(format!("unknown section [{section}]")))?
                .1;
            if let Some((k, _)) = props.iter().find(|(k, _)| !allowed.contains(k)) {
                return Err(cfg_err(format!("unknown key '{k}' in [{section}]")));
            }
        }
        let s = Sections {
            ini,
            base: base.to_path_buf(),
        };

        let topology = Topology::parse(
            s.raw("model", "topology")
                .ok_or_else(|| cfg_err("[model] topology is required"))?,
        )
        .map_err(|e| cfg_err(e.to_string()))?;
        let d = LifParams::default();
        let lif = LifParams {
            g: s.or("neuron", "g", d.g)?,
            v_th: s.or("neuron", "v_th", d.v_th)?,
            v_reset: s.or("neuron", "v_reset", d.v_reset)?,
            v_rest: s.or("neuron", "v_rest", d.v_rest)?,
            tau_ref: s.or("neuron", "tau_ref", d.tau_ref)?,
            surrogate_width: s.or("neuron", "surrogate_width", d.surrogate_width)?,
        };
        lif.validate().map_err(|e| cfg_err(e.to_string()))?;

        let de = EncoderConfig::default();
        let encoder = EncoderConfig {
            t_window: s.or("encoding", "t_window", de.t_window)?,
            alpha: s.or("encoding", "alpha", de.alpha)?,
            polarity: s
                .raw("encoding", "polarity")
                .map(parse_polarity)
                .transpose()?
                .unwrap_or(de.polarity),
        };

        let dt = TrainConfig::default();
        let train = TrainConfig {
            mode: s
                .parse::<TpMode>("train", "tp_mode")?
                .unwrap_or(dt.mode),
            apply: s.parse::<TpApply>("train", "tp_apply")?.unwrap_or(dt.apply),
            eta_conv: s.or("train", "eta_conv", dt.eta_conv)?,
            eta_fc: s.or("train", "eta_fc", dt.eta_fc)?,
            batch: s.or("train", "batch", dt.batch)?,
            shuffle: s.or("train", "shuffle", dt.shuffle)?,
            encoder,
            seed: s.or("train", "seed", dt.seed)?,
            threads: 1,
        };
        train.validate().map_err(|e| cfg_err(e.to_string()))?;
        let epochs = s.or("train", "epochs", 1usize)?;
        let target_accuracy = s.parse::<f64>("train", "target_accuracy")?;

        let kind = s.raw("data", "kind").ok_or_else(|| cfg_err("[data] kind is required"))?;
        let data = match kind {
            "mnist" => DataSource::Mnist {
                train_images: s.path("data", "train_images")?,
                train_labels: s.path("data", "train_labels")?,
                test_images: s.path("data", "test_images")?,
                test_labels: s.path("data", "test_labels")?,
            },
            "cifar10" => DataSource::Cifar10 {
                train_files: s.paths("data", "train_files")?,
                test_files: s.paths("data", "test_files")?,
            },
            "events" => DataSource::Events {
                train: s.path("data", "train_events")?,
                test: s.path("data", "test_events")?,
            },
            "synth" => DataSource::Synth {
                kind: s
                    .parse::<SynthKind>("data", "synth_kind")?
                    .ok_or_else(|| cfg_err("[data] synth_kind is required"))?,
                train_per_class: s.or("data", "train_per_class", 200)?,
                test_per_class: s.or("data", "test_per_class", 100)?,
                channels: s.or("data", "channels", 16)?,
            },
            other => return Err(cfg_err(format!("[data] kind = '{other}': expected mnist, cifar10, events or synth"))),
        };

        Ok(Self {
            topology,
            init_gain: s.or("model", "init_gain", 1.0f32)?,
            feedback_scale: s
                .parse::<FeedbackScale>("model", "feedback_scale")?
                .unwrap_or(FeedbackScale::Unit),
            lif,
            train,
            epochs,
            target_accuracy,
            data,
            train_limit: s.parse("data", "train_limit")?,
            test_limit: s.parse("data", "test_limit")?,
            out_dir: s.base.join(s.raw("output", "dir").unwrap_or("out")),
        })
    }

    /// Every input file named by the config, for existence checks.
    pub fn input_files(&self) -> Vec<&Path> {
        match &self.data {
            DataSource::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => vec![train_images, train_labels, test_images, test_labels],
            DataSource::Cifar10 { train_files, test_files } => train_files.iter().chain(test_files).collect(),
            DataSource::Events { train, test } => vec![train, test],
            DataSource::Synth { .. } => vec![],
        }
        .into_iter()
        .map(PathBuf::as_path)
        .collect()
    }

    /// Input shape implied by the data source, used when the topology does
    /// not declare one.
    pub fn default_input(&self) -> Option<Shape> {
        match &self.data {
            DataSource::Mnist { .. } => Some(Shape::new(1, 28, 28)),
            DataSource::Cifar10 { .. } => Some(Shape::new(3, 32, 32)),
            DataSource::Synth { channels, .. } => Some(Shape::new(1, 1, *channels)),
            DataSource::Events { .. } => None,
        }
    }
}
