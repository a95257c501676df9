//! Dataset preparation, single runs and sweeps.

use std::borrow::Cow;
use std::fs;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::text::{preprocess, split_contiguous, VariantMap};
use crate::data::{
    augmented_samples, build_vocab, image_samples, load_idx, load_raw, tokenize, train_val_split, window_split,
    Augment, ImageDataset, Sample, Vocabulary,
};
use crate::error::{Error, Result};
use crate::harness::config::{DataSource, ExperimentConfig, Task};
use crate::harness::metrics::{EpochRecord, MetricsRecord, RunEcho, RunStatus, SCHEMA_VERSION};
use crate::linalg::{mix_seed, Rng};
use crate::model::checkpoint::Checkpoint;
use crate::model::{count_all_params, width_for_budget, LayerSchedule, ModelDims, ModelParams};
use crate::train::{evaluate, init_params, train_epoch, AdamState, TrainConfig};

/// Loaded data shared by every cell of a sweep.
#[derive(Debug, Clone)]
pub enum PreparedData {
    Images {
        /// Training pool and the indices selected for training, kept for
        /// per-epoch augmentation.
        pool: ImageDataset,
        train_idx: Vec<usize>,
        train: Vec<Sample>,
        val: Vec<Sample>,
        test: Vec<Sample>,
        classes: usize,
    },
    Text {
        vocab: Vocabulary,
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
    },
}

fn limit(ds: ImageDataset, n: Option<usize>) -> ImageDataset {
    match n {
        Some(n) if n < ds.len() => slice(&ds, 0, n),
        _ => ds,
    }
}

fn slice(ds: &ImageDataset, start: usize, end: usize) -> ImageDataset {
    let s = ds.image_size();
    ImageDataset {
        height: ds.height,
        width: ds.width,
        channels: ds.channels,
        pixels: ds.pixels[start * s..end * s].to_vec(),
        labels: ds.labels[start..end].to_vec(),
    }
}

/// Loads and splits the configured data. Images: the pool is split
/// `train_fraction : rest` by `split_seed`. Text: the corpus stream is cut
/// contiguously into training pool and test (90:10), and the pool again into
/// train and validation by `train_fraction`.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    match &cfg.data {
        DataSource::Idx {
            images,
            labels,
            test_images,
            test_labels,
            test_holdout,
        } => {
            let all = load_idx(images, labels)?;
            let (pool, test) = match (test_images, test_labels) {
                (Some(ti), Some(tl)) => (all, load_idx(ti, tl)?),
                (None, None) => {
                    let hold = test_holdout.ok_or_else(|| {
                        Error::config("IDX source without test files needs test_holdout")
                    })?;
                    if hold == 0 || hold >= all.len() {
                        return Err(Error::config(format!(
                            "test_holdout {hold} must be in 1..{}",
                            all.len()
                        )));
                    }
                    let cut = all.len() - hold;
                    (slice(&all, 0, cut), slice(&all, cut, all.len()))
                }
                _ => return Err(Error::config("test_images and test_labels go together")),
            };
            prepare_images(cfg, pool, test)
        }
        DataSource::Raw { train, test } => prepare_images(cfg, load_raw(train)?, load_raw(test)?),
        DataSource::Text { corpus, variants } => {
            let raw = fs::read_to_string(corpus).map_err(|e| Error::io(corpus, e))?;
            let map = match variants {
                Some(p) => VariantMap::load(p)?,
                None => VariantMap::default(),
            };
            let text = preprocess(&raw, &map);
            let vocab = build_vocab(&text, 1, cfg.min_rate)?;
            let tokens = tokenize(&text, &vocab);
            let (pool, test) = split_contiguous(&tokens, 0.9);
            let (mut train, val) = split_contiguous(&pool, cfg.train_fraction);
            if let Some(n) = cfg.train_limit {
                train.truncate(n);
            }
            let mut test = test;
            if let Some(n) = cfg.test_limit {
                test.truncate(n);
            }
            Ok(PreparedData::Text { vocab, train, val, test })
        }
    }
}

fn prepare_images(cfg: &ExperimentConfig, pool: ImageDataset, test: ImageDataset) -> Result<PreparedData> {
    let pool = limit(pool, cfg.train_limit);
    let test = limit(test, cfg.test_limit);
    if pool.is_empty() || test.is_empty() {
        return Err(Error::data("empty training pool or test set"));
    }
    if (pool.height, pool.width, pool.channels) != (test.height, test.width, test.channels) {
        return Err(Error::data("training and test images differ in shape"));
    }
    let (train_idx, val_idx) = train_val_split(pool.len(), cfg.train_fraction, cfg.split_seed)?;
    let train = image_samples(&pool, &train_idx)?;
    let val = image_samples(&pool, &val_idx)?;
    let test_all: Vec<usize> = (0..test.len()).collect();
    let test_samples = image_samples(&test, &test_all)?;
    let classes = pool.num_classes().max(test.num_classes());
    Ok(PreparedData::Images {
        pool,
        train_idx,
        train,
        val,
        test: test_samples,
        classes,
    })
}

impl PreparedData {
    /// Per-step input width fed to `W_xh`.
    pub fn input_dim(&self, cfg: &ExperimentConfig) -> usize {
        match self {
            PreparedData::Images { pool, .. } => pool.image_size(),
            PreparedData::Text { .. } => cfg.embed_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            PreparedData::Images { classes, .. } => *classes,
            PreparedData::Text { vocab, .. } => vocab.len(),
        }
    }

    pub fn vocab(&self) -> Option<&Vocabulary> {
        match self {
            PreparedData::Text { vocab, .. } => Some(vocab),
            _ => None,
        }
    }

    /// Train, validation and test samples for sequence length `l_t`.
    pub fn samples(&self, l_t: usize) -> Result<(Cow<'_, [Sample]>, Cow<'_, [Sample]>, Cow<'_, [Sample]>)> {
        match self {
            PreparedData::Images { train, val, test, .. } => {
                Ok((Cow::Borrowed(train), Cow::Borrowed(val), Cow::Borrowed(test)))
            }
            PreparedData::Text { train, val, test, .. } => {
                let w = |s: &[usize]| -> Result<Vec<Sample>> {
                    if s.len() < l_t + 1 {
                        return Ok(Vec::new());
                    }
                    Ok(window_split(s, l_t)?.into_iter().map(Sample::from).collect())
                };
                let tr = w(train)?;
                if tr.is_empty() {
                    return Err(Error::data(format!("training text too short for l_t = {l_t}")));
                }
                Ok((Cow::Owned(tr), Cow::Owned(w(val)?), Cow::Owned(w(test)?)))
            }
        }
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub l_w: usize,
    pub l_t: usize,
    pub hidden: usize,
}

/// Seed for replicate `replicate` of a cell, independent of scheduling.
pub fn cell_seed(base_seed: u64, l_w: usize, l_t: usize, replicate: usize) -> u64 {
    mix_seed(&[base_seed, l_w as u64, l_t as u64, replicate as u64])
}

/// Grid in `l_w`-major order; budget mode derives the width per `l_w`.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for &l_w in &cfg.l_w {
        let widths = match cfg.budget {
            Some(b) => vec![width_for_budget(b, l_w)?],
            None => cfg.hidden.clone(),
        };
        for &l_t in &cfg.l_t {
            for &hidden in &widths {
                cells.push(Cell { l_w, l_t, hidden });
            }
        }
    }
    Ok(cells)
}

/// A trained run: its record plus the final network.
#[derive(Debug)]
pub struct RunOutput {
    pub record: MetricsRecord,
    pub checkpoint: Option<Checkpoint>,
    /// Set when the record's status is `Failed`.
    pub failure: Option<Error>,
}

fn echo(cfg: &ExperimentConfig, sizes: (usize, usize, usize)) -> RunEcho {
    RunEcho {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.adam.lr,
        beta1: cfg.adam.beta1,
        beta2: cfg.adam.beta2,
        eps: cfg.adam.eps,
        dropout: cfg.dropout,
        clip_norm: cfg.clip_norm,
        activation: cfg.activation.clone(),
        augment: cfg.augment,
        freeze_input: cfg.freeze_input,
        embed_dim: (cfg.task == Task::Nlp).then_some(cfg.embed_dim),
        train_size: sizes.0,
        val_size: sizes.1,
        test_size: sizes.2,
    }
}

/// Trains one cell for one replicate. Infeasible cells and errors come back
/// as records with the matching status.
pub fn run_training(cfg: &ExperimentConfig, data: &PreparedData, cell: Cell, replicate: usize) -> RunOutput {
    let start = Instant::now();
    let base_seed = cfg.seeds[replicate];
    let seed = cell_seed(base_seed, cell.l_w, cell.l_t, replicate);
    let mut record = MetricsRecord {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.name.clone(),
        status: RunStatus::Ok,
        error: None,
        task: cfg.task,
        l_w: cell.l_w,
        l_t: cell.l_t,
        hidden: cell.hidden,
        budget: cfg.budget,
        replicate,
        base_seed,
        seed,
        config: echo(cfg, (0, 0, 0)),
        params: None,
        epochs: Vec::new(),
        wall_clock_secs: 0.0,
    };
    if !LayerSchedule::is_feasible(cell.l_w, cell.l_t) {
        record.status = RunStatus::Infeasible;
        return RunOutput {
            record,
            checkpoint: None,
            failure: None,
        };
    }
    let (checkpoint, failure) = match train_cell(cfg, data, cell, seed, &mut record) {
        Ok(ckpt) => (Some(ckpt), None),
        Err(e) => {
            record.status = RunStatus::Failed;
            record.error = Some(e.to_string());
            (None, Some(e))
        }
    };
    record.wall_clock_secs = start.elapsed().as_secs_f64();
    RunOutput {
        record,
        checkpoint,
        failure,
    }
}

fn train_cell(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    cell: Cell,
    seed: u64,
    record: &mut MetricsRecord,
) -> Result<Checkpoint> {
    let sched = LayerSchedule::new(cell.l_w, cell.l_t)?;
    let (train, val, test) = data.samples(cell.l_t)?;
    record.config = echo(cfg, (train.len(), val.len(), test.len()));
    let dims = ModelDims {
        input: data.input_dim(cfg),
        hidden: cell.hidden,
        output: data.output_dim(),
        l_w: cell.l_w,
        vocab: data.vocab().map(Vocabulary::len),
    };
    let mut params = init_params(&dims, &cfg.activation, &mut Rng::derived(seed, &[0]))?;
    record.params = Some(count_all_params(&params));
    let tcfg = TrainConfig {
        batch_size: cfg.batch_size,
        adam: cfg.adam,
        dropout: cfg.dropout,
        clip_norm: cfg.clip_norm,
        freeze_input: cfg.freeze_input,
    };
    let mut state = AdamState::new(&params, tcfg.adam);

    let eval = |p: &ModelParams, epoch: usize, train_loss: Option<f64>| -> Result<EpochRecord> {
        let v = if val.is_empty() { None } else { Some(evaluate(p, &val, &sched)?) };
        let t = if test.is_empty() { None } else { Some(evaluate(p, &test, &sched)?) };
        Ok(EpochRecord {
            epoch,
            train_loss,
            val_loss: v.map(|e| e.loss),
            val_error: v.map(|e| e.error_rate),
            test_loss: t.map(|e| e.loss),
            error_rate: t.map(|e| e.error_rate),
        })
    };
    record.epochs.push(eval(&params, 0, None)?);

    for epoch in 1..=cfg.epochs {
        let augmented;
        let epoch_train: &[Sample] = match data {
            PreparedData::Images { pool, train_idx, .. } if cfg.augment => {
                augmented = augmented_samples(pool, train_idx, &Augment::FULL, mix_seed(&[seed, 2, epoch as u64]))?;
                &augmented
            }
            _ => &train,
        };
        let mut rng = Rng::derived(seed, &[1, epoch as u64]);
        let stats = train_epoch(&mut params, &mut state, epoch_train, &sched, &tcfg, &mut rng, None)?;
        if cfg.eval_every_epoch || epoch == cfg.epochs {
            record.epochs.push(eval(&params, epoch, Some(stats.train_loss))?);
        } else {
            record.epochs.push(EpochRecord {
                epoch,
                train_loss: Some(stats.train_loss),
                val_loss: None,
                val_error: None,
                test_loss: None,
                error_rate: None,
            });
        }
    }
    Ok(Checkpoint {
        params,
        schedule: sched,
        vocab: data.vocab().cloned(),
    })
}

/// Mean and sample standard deviation (`n − 1`; zero for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub l_w: usize,
    pub l_t: usize,
    pub hidden: usize,
    pub status: RunStatus,
    /// Replicates that finished.
    pub completed: usize,
    pub failed: usize,
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    pub mean_test_loss: Option<f64>,
    pub std_test_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub experiment: String,
    pub cells: Vec<CellSummary>,
}

pub fn summarize(name: &str, cells: &[Cell], records: &[MetricsRecord]) -> SweepSummary {
    let out = cells
        .iter()
        .map(|c| {
            let rs: Vec<&MetricsRecord> = records
                .iter()
                .filter(|r| r.l_w == c.l_w && r.l_t == c.l_t && r.hidden == c.hidden)
                .collect();
            let ok: Vec<&&MetricsRecord> = rs.iter().filter(|r| r.status == RunStatus::Ok).collect();
            let errs: Vec<f64> = ok.iter().filter_map(|r| r.final_error()).collect();
            let losses: Vec<f64> = ok.iter().filter_map(|r| r.final_test_loss()).collect();
            let stat = |v: &[f64]| if v.is_empty() { (None, None) } else {
                let (m, s) = mean_std(v);
                (Some(m), Some(s))
            };
            let (mean_error, std_error) = stat(&errs);
            let (mean_test_loss, std_test_loss) = stat(&losses);
            let status = if rs.iter().any(|r| r.status == RunStatus::Infeasible) {
                RunStatus::Infeasible
            } else if ok.is_empty() {
                RunStatus::Failed
            } else {
                RunStatus::Ok
            };
            CellSummary {
                l_w: c.l_w,
                l_t: c.l_t,
                hidden: c.hidden,
                status,
                completed: ok.len(),
                failed: rs.iter().filter(|r| r.status == RunStatus::Failed).count(),
                mean_error,
                std_error,
                mean_test_loss,
                std_test_loss,
            }
        })
        .collect();
    SweepSummary {
        experiment: name.to_string(),
        cells: out,
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// One per (cell, replicate), cells in grid order and replicates in seed
    /// order within a cell.
    pub records: Vec<MetricsRecord>,
    pub summary: SweepSummary,
}

/// Runs every (cell, replicate) pair. Jobs run in parallel on the rayon pool;
/// each one is seeded from its own coordinates so the schedule cannot change
/// results.
pub fn run_sweep_with(cfg: &ExperimentConfig, data: &PreparedData) -> Result<SweepResult> {
    cfg.validate()?;
    let cells = sweep_cells(cfg)?;
    let jobs: Vec<(Cell, usize)> = cells
        .iter()
        .flat_map(|&c| (0..cfg.seeds.len()).map(move |r| (c, r)))
        .collect();
    let records: Vec<MetricsRecord> = jobs
        .par_iter()
        .map(|&(c, r)| run_training(cfg, data, c, r).record)
        .collect();
    let summary = summarize(&cfg.name, &cells, &records);
    Ok(SweepResult { records, summary })
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    run_sweep_with(cfg, &data)
}
