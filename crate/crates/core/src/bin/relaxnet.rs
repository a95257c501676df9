//! Command-line front end: train, sweep, generate, count-params, convert.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use relaxnet::data::formats::{from_planar, load_idx, write_raw};
use relaxnet::harness::metrics::emit_metrics;
use relaxnet::harness::runner::{prepare_data, run_sweep_with, run_training, sweep_cells};
use relaxnet::harness::{generate_text, ExperimentConfig, RunStatus};
use relaxnet::linalg::Rng;
use relaxnet::model::checkpoint;
use relaxnet::model::{width_for_budget, Activation, ModelDims, ParamCounts};
use relaxnet::oscillator::{DriveMode, OscParams};
use relaxnet::train::KeepProbs;
use relaxnet::{Error, Result};

#[derive(Parser)]
#[command(name = "relaxnet", version, about = "Layer-reusing recurrent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one cell and save its checkpoint.
    Train(RunArgs),
    /// Run the full (l_w, l_t, width) grid over every seed.
    Sweep(RunArgs),
    /// Sample text from a token checkpoint.
    Generate(GenerateArgs),
    /// Print the trainable-parameter breakdown.
    CountParams(CountArgs),
    /// Convert image data to the RLXD container.
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Image,
    Nlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    Oscillator,
    /// Oscillator driven by the input projection only.
    OscillatorInputOnly,
}

impl ActivationArg {
    fn to_activation(self) -> Activation {
        match self {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Oscillator => Activation::Oscillator(OscParams::default()),
            ActivationArg::OscillatorInputOnly => Activation::Oscillator(OscParams {
                drive: DriveMode::InputOnly,
                ..OscParams::default()
            }),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Named preset (desk-mnist, desk-nlp, desk-osc, full-svhn, full-nlp, full-budget).
    #[arg(long)]
    preset: Option<String>,
    /// TOML or JSON experiment file; overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Picks the desk preset for the task when neither --preset nor --config is given.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Directory holding the preset datasets.
    #[arg(long, default_value = "data")]
    data: PathBuf,
    #[arg(long, value_delimiter = ',')]
    lw: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    lt: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, value_enum)]
    activation: Option<ActivationArg>,
    /// Keep probability for all three dropout masks; 1 disables dropout.
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
    /// Metrics file (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint path written by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "to be, or not to be,")]
    prompt: String,
    #[arg(long, default_value_t = 200)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 0 picks the most likely character at every step.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long, default_value_t = 3072)]
    input: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 10)]
    output: usize,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    lw: Vec<usize>,
    /// Vocabulary size; adds an embedding table of width --input.
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long, value_enum, default_value = "relu")]
    activation: ActivationArg,
    /// Derive the width per l_w from a hidden-parameter budget.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Args)]
struct ConvertArgs {
    /// IDX image file to convert (with --idx-labels).
    #[arg(long, requires = "idx_labels")]
    idx_images: Option<PathBuf>,
    #[arg(long)]
    idx_labels: Option<PathBuf>,
    /// Raw planar uint8 array laid out [count][channel][height][width].
    #[arg(long, requires = "planar_labels", conflicts_with = "idx_images")]
    planar: Option<PathBuf>,
    /// One uint8 label per image.
    #[arg(long)]
    planar_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    channels: usize,
    /// Keep label 10 instead of folding it to 0.
    #[arg(long)]
    keep_ten: bool,
    #[arg(long)]
    out: PathBuf,
}

fn build_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&a.config, &a.preset, a.task) {
        (Some(p), _, _) => ExperimentConfig::load(p)?,
        (None, Some(name), _) => ExperimentConfig::preset(name, &a.data)?,
        (None, None, Some(TaskArg::Nlp)) => ExperimentConfig::preset("desk-nlp", &a.data)?,
        (None, None, _) => ExperimentConfig::preset("desk-mnist", &a.data)?,
    };
    if let Some(v) = &a.lw {
        cfg.l_w = v.clone();
    }
    if let Some(v) = &a.lt {
        cfg.l_t = v.clone();
    }
    if let Some(v) = &a.hidden {
        cfg.hidden = v.clone();
        cfg.budget = None;
    }
    if a.budget.is_some() {
        cfg.budget = a.budget;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    if let Some(b) = a.batch {
        cfg.batch_size = b;
    }
    if let Some(act) = a.activation {
        cfg.activation = act.to_activation();
    }
    if let Some(k) = a.dropout {
        cfg.dropout = if k == 1.0 { None } else { Some(KeepProbs::uniform(k)) };
    }
    if a.train_limit.is_some() {
        cfg.train_limit = a.train_limit;
    }
    if a.test_limit.is_some() {
        cfg.test_limit = a.test_limit;
    }
    if a.out.is_some() {
        cfg.out = a.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summarize_line(r: &relaxnet::harness::MetricsRecord) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    format!(
        "l_w={} l_t={} H={} seed={} status={:?} test_error={} test_loss={} ({:.1}s)",
        r.l_w,
        r.l_t,
        r.hidden,
        r.base_seed,
        r.status,
        fmt(r.final_error()),
        fmt(r.final_test_loss()),
        r.wall_clock_secs
    )
}

fn cmd_train(a: &RunArgs) -> Result<()> {
    let mut cfg = build_config(a)?;
    cfg.seeds.truncate(1);
    let cell = *sweep_cells(&cfg)?
        .first()
        .ok_or_else(|| Error::config("empty grid"))?;
    let data = prepare_data(&cfg)?;
    let mut run = run_training(&cfg, &data, cell, 0);
    eprintln!("{}", summarize_line(&run.record));
    if let Some(p) = &cfg.out {
        emit_metrics(std::slice::from_ref(&run.record), p)?;
    }
    match run.record.status {
        RunStatus::Ok => {}
        RunStatus::Infeasible => return Err(Error::config(format!("l_w = {} exceeds l_t = {}", cell.l_w, cell.l_t))),
        RunStatus::Failed => {
            return Err(run.failure.take().unwrap_or_else(|| Error::Numeric("training failed".into())));
        }
    }
    if let (Some(p), Some(c)) = (&a.checkpoint, &run.checkpoint) {
        checkpoint::save(c, p)?;
    }
    Ok(())
}

fn cmd_sweep(a: &RunArgs) -> Result<()> {
    let cfg = build_config(a)?;
    let data = prepare_data(&cfg)?;
    let res = run_sweep_with(&cfg, &data)?;
    for r in &res.records {
        eprintln!("{}", summarize_line(r));
    }
    let summary = serde_json::to_string_pretty(&res.summary).map_err(|e| Error::Numeric(e.to_string()))?;
    if let Some(p) = &cfg.out {
        emit_metrics(&res.records, p)?;
        let sp = summary_path(p);
        fs::write(&sp, &summary).map_err(|e| Error::io(&sp, e))?;
    }
    println!("{summary}");
    Ok(())
}

fn summary_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let ckpt = checkpoint::load(&a.checkpoint)?;
    let text = generate_text(&ckpt, &a.prompt, a.length, &mut Rng::new(a.seed), a.temperature)?;
    println!("{}{}", a.prompt, text);
    Ok(())
}

fn cmd_count(a: &CountArgs) -> Result<()> {
    let osc = !matches!(a.activation, ActivationArg::Relu);
    println!("l_w\tH\tinput\thidden\toutput\tother\ttotal");
    for &l_w in &a.lw {
        let hidden = match a.budget {
            Some(b) => width_for_budget(b, l_w)?,
            None => a.hidden,
        };
        let c = ParamCounts::for_dims(
            &ModelDims {
                input: a.input,
                hidden,
                output: a.output,
                l_w,
                vocab: a.vocab,
            },
            osc,
        );
        println!(
            "{l_w}\t{hidden}\t{}\t{}\t{}\t{}\t{}",
            c.input,
            c.hidden,
            c.output,
            c.other,
            c.total()
        );
    }
    Ok(())
}

fn cmd_convert(a: &ConvertArgs) -> Result<()> {
    let ds = match (&a.idx_images, &a.idx_labels, &a.planar, &a.planar_labels) {
        (Some(i), Some(l), None, None) => load_idx(i, l)?,
        (None, None, Some(p), Some(l)) => {
            let planar = fs::read(p).map_err(|e| Error::io(p, e))?;
            let labels = fs::read(l).map_err(|e| Error::io(l, e))?;
            from_planar(&planar, &labels, a.height, a.width, a.channels, !a.keep_ten)?
        }
        _ => return Err(Error::config("give either --idx-images/--idx-labels or --planar/--planar-labels")),
    };
    write_raw(&ds, &a.out)?;
    eprintln!("wrote {} images of {}x{}x{} to {}", ds.len(), ds.height, ds.width, ds.channels, a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Generate(a) => cmd_generate(a),
        Command::CountParams(a) => cmd_count(a),
        Command::Convert(a) => cmd_convert(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
