//! Experiment configuration and named presets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Activation;
use crate::oscillator::OscParams;
use crate::train::{AdamConfig, KeepProbs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Image,
    Nlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "kebab-case")]
pub enum DataSource {
    /// IDX image/label pair. Without a separate test pair, the last
    /// `test_holdout` examples of the file are the test set.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default)]
        test_holdout: Option<usize>,
    },
    /// RLXD containers for the training pool and the test set.
    Raw { train: PathBuf, test: PathBuf },
    /// Plain UTF-8 corpus, optionally with a variant-character table.
    Text {
        corpus: PathBuf,
        #[serde(default)]
        variants: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: Task,
    pub data: DataSource,
    /// Cap on the training pool (before the train/validation split).
    #[serde(default)]
    pub train_limit: Option<usize>,
    /// Cap on the test set.
    #[serde(default)]
    pub test_limit: Option<usize>,
    /// Fraction of the training pool kept for training; the rest validates.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Seed of the train/validation split, shared by every cell.
    #[serde(default)]
    pub split_seed: u64,
    pub l_w: Vec<usize>,
    pub l_t: Vec<usize>,
    /// Hidden widths; ignored when `budget` is set.
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Hidden-parameter budget; each cell's width comes from
    /// `model::width_for_budget`.
    #[serde(default)]
    pub budget: Option<usize>,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub dropout: Option<KeepProbs>,
    #[serde(default)]
    pub clip_norm: Option<f64>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Crop, jitter and noise on training images, redrawn every epoch.
    #[serde(default)]
    pub augment: bool,
    /// Keep the input projection at its random initialization.
    #[serde(default)]
    pub freeze_input: bool,
    /// Token embedding width (text task).
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    /// Vocabulary frequency threshold (text task).
    #[serde(default = "default_min_rate")]
    pub min_rate: f64,
    /// Evaluate the validation and test sets after every epoch instead of
    /// only after the last one.
    #[serde(default)]
    pub eval_every_epoch: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_train_fraction() -> f64 {
    0.9
}
fn default_batch() -> usize {
    64
}
fn default_activation() -> Activation {
    Activation::Relu
}
fn default_embed() -> usize {
    36
}
fn default_min_rate() -> f64 {
    crate::data::text::DEFAULT_MIN_RATE
}

pub const PRESETS: [&str; 6] = ["desk-mnist", "desk-nlp", "desk-osc", "full-svhn", "full-nlp", "full-budget"];

impl ExperimentConfig {
    /// Named configuration; data paths are relative to `data_dir`.
    pub fn preset(name: &str, data_dir: &Path) -> Result<Self> {
        let mnist = DataSource::Idx {
            images: data_dir.join("mnist10k-images-idx3-ubyte.gz"),
            labels: data_dir.join("mnist10k-labels-idx1-ubyte.gz"),
            test_images: None,
            test_labels: None,
            test_holdout: Some(2000),
        };
        let svhn = DataSource::Raw {
            train: data_dir.join("svhn-train.rlxd"),
            test: data_dir.join("svhn-test.rlxd"),
        };
        let desk_image = ExperimentConfig {
            name: name.to_string(),
            task: Task::Image,
            data: mnist,
            train_limit: None,
            test_limit: None,
            train_fraction: 0.9,
            split_seed: 0,
            l_w: vec![1, 2, 8],
            l_t: vec![8],
            hidden: vec![32],
            budget: None,
            epochs: 15,
            seeds: (0..5).collect(),
            batch_size: 64,
            adam: AdamConfig::default(),
            dropout: None,
            clip_norm: None,
            activation: Activation::Relu,
            augment: false,
            freeze_input: false,
            embed_dim: 36,
            min_rate: default_min_rate(),
            eval_every_epoch: false,
            out: None,
        };
        let cfg = match name {
            "desk-mnist" => desk_image,
            "desk-osc" => ExperimentConfig {
                activation: Activation::Oscillator(OscParams {
                    dt: 0.01,
                    ..OscParams::default()
                }),
                ..desk_image
            },
            "desk-nlp" => ExperimentConfig {
                task: Task::Nlp,
                data: DataSource::Text {
                    corpus: data_dir.join("sonnets.txt"),
                    variants: None,
                },
                l_w: vec![1, 2],
                epochs: 5,
                seeds: (0..3).collect(),
                dropout: Some(KeepProbs::uniform(0.9)),
                eval_every_epoch: true,
                ..desk_image
            },
            "full-svhn" => ExperimentConfig {
                data: svhn,
                l_w: (1..=12).collect(),
                l_t: vec![12],
                hidden: vec![64],
                epochs: 900,
                augment: true,
                ..desk_image
            },
            "full-nlp" => ExperimentConfig {
                task: Task::Nlp,
                data: DataSource::Text {
                    corpus: data_dir.join("shakespeare.txt"),
                    variants: None,
                },
                l_w: vec![1, 4, 8, 12],
                l_t: vec![12],
                hidden: vec![128],
                epochs: 200,
                dropout: Some(KeepProbs::uniform(0.9)),
                eval_every_epoch: true,
                ..desk_image
            },
            "full-budget" => ExperimentConfig {
                data: svhn,
                l_w: (1..=8).collect(),
                l_t: (1..=12).collect(),
                hidden: Vec::new(),
                budget: Some(crate::model::REFERENCE_BUDGET),
                freeze_input: true,
                epochs: 900,
                augment: true,
                ..desk_image
            },
            other => {
                return Err(Error::config(format!(
                    "unknown preset {other:?}; choose one of {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// TOML when the extension is `.toml`, JSON otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.l_w.is_empty() || self.l_t.is_empty() {
            return Err(Error::config("l_w and l_t axes must be non-empty"));
        }
        if self.l_w.contains(&0) || self.l_t.contains(&0) {
            return Err(Error::config("l_w and l_t values must be positive"));
        }
        match self.budget {
            Some(0) => return Err(Error::config("budget must be positive")),
            None if self.hidden.is_empty() || self.hidden.contains(&0) => {
                return Err(Error::config("hidden widths must be non-empty and positive"))
            }
            _ => {}
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::config("train fraction must lie in (0, 1]"));
        }
        if let Some(k) = self.dropout {
            for p in [k.input, k.recurrent, k.output] {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::config(format!("keep probability {p} outside (0, 1]")));
                }
            }
        }
        match (&self.task, &self.data) {
            (Task::Nlp, DataSource::Text { .. }) => {
                if self.embed_dim == 0 {
                    return Err(Error::config("embedding width must be positive"));
                }
            }
            (Task::Image, DataSource::Idx { .. } | DataSource::Raw { .. }) => {}
            _ => return Err(Error::config("data format does not match the task")),
        }
        Ok(())
    }
}
