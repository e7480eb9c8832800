use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use streamdp::dpmm::sample_generative;
use streamdp::harness::{
    assign_rows, load_checkpoint, load_dataset, load_labels, make_gmm, save_checkpoint, save_dataset, ProtocolRun,
    RunConfig,
};
use streamdp::metrics::{metric_report, novelty_precision_recall};
use streamdp::{Error, Result};

#[derive(Parser)]
#[command(name = "streamdp", version, about = "Streaming Dirichlet-process clustering in a learned latent space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training protocol over a CSV dataset.
    Train(TrainArgs),
    /// Sample data rows from a checkpointed model.
    Generate(GenerateArgs),
    /// Assign each row of a dataset to a cluster of a checkpointed model.
    Assign(AssignArgs),
    /// Compare predicted cluster labels against ground truth.
    Evaluate(EvaluateArgs),
    /// Write a synthetic Gaussian-mixture dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Comma-separated rows of features.
    #[arg(long)]
    data: PathBuf,
    /// The last column of each row is an integer class label.
    #[arg(long)]
    labels: bool,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set stream.birth.k_prime=6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, conflicts_with = "no_replay")]
    replay: bool,
    #[arg(long)]
    no_replay: bool,
    /// Generated rows per mini-batch when replay is on.
    #[arg(long, value_name = "N")]
    replay_samples: Option<usize>,
    /// Worker threads for responsibility updates.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Where to write the JSON run report (stdout when omitted).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Where to write the checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Continue a run from a checkpoint written with `--stop-after`.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many streams in total and checkpoint without a report.
    #[arg(long, value_name = "STREAMS", requires = "checkpoint")]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, short)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AssignArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Ignore a trailing label column in the data.
    #[arg(long)]
    labels: bool,
    /// One cluster id per line (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth labels, one per line.
    #[arg(long)]
    truth: PathBuf,
    /// Predicted cluster labels, one per line.
    #[arg(long)]
    pred: PathBuf,
    /// Classes to score for novelty detection.
    #[arg(long)]
    novel: Vec<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, short, default_value_t = 5)]
    k: usize,
    #[arg(long, short, default_value_t = 2)]
    d: usize,
    #[arg(long, short, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature rows with the label as the last column.
    #[arg(long)]
    out: PathBuf,
    /// Also write the labels alone, one per line.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

fn build_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if args.replay {
        cfg.stream.replay.enabled = true;
    }
    if args.no_replay {
        cfg.stream.replay.enabled = false;
    }
    if let Some(n) = args.replay_samples {
        cfg.stream.replay.samples_per_minibatch = n;
    }
    if args.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    cfg.stream.workers = args.workers;
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let data = load_dataset(&args.data, args.labels)?;
    let mut run = match &args.resume {
        Some(path) => {
            let mut ckpt = load_checkpoint(path)?;
            ckpt.config.stream.workers = args.workers.max(1);
            ProtocolRun::resume(ckpt, &data)?
        }
        None => ProtocolRun::new(build_config(&args)?, &data)?,
    };
    let limit = args.stop_after.unwrap_or(usize::MAX);
    while run.completed_streams() < limit && run.step()?.is_some() {}
    if let Some(path) = &args.checkpoint {
        save_checkpoint(path, &run.checkpoint())?;
    }
    if run.is_finished() {
        write_text(args.report.as_deref(), &(run.report()?.to_json()? + "\n"))?;
    } else {
        log::info!(
            "stopped after {} of {} streams",
            run.completed_streams(),
            run.total_streams()
        );
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let x = sample_generative(&ckpt.ledger.model, &ckpt.ledger.codec, args.n, args.seed)?;
    save_dataset(&args.out, &x.scaled(1.0 / ckpt.config.input_scale), None)
}

fn assign(args: AssignArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let data = load_dataset(&args.data, args.labels)?;
    if data.dim() != ckpt.ledger.codec.data_dim {
        return Err(Error::Shape(format!(
            "data has {} columns, the checkpoint expects {}",
            data.dim(),
            ckpt.ledger.codec.data_dim
        )));
    }
    let idx = assign_rows(&ckpt.ledger, &data.x.scaled(ckpt.config.input_scale), args.workers.max(1))?;
    let text: String = idx
        .iter()
        .map(|&k| format!("{}\n", ckpt.ledger.model.clusters[k].id))
        .collect();
    write_text(args.out.as_deref(), &text)
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let truth = load_labels(&args.truth)?;
    let pred = load_labels(&args.pred)?;
    let mut out = serde_json::Map::new();
    let report = metric_report(&truth, &pred)?;
    out.insert("metrics".into(), serde_json::to_value(report).expect("plain struct"));
    if !args.novel.is_empty() {
        let scores = novelty_precision_recall(&truth, &pred, &args.novel)?;
        out.insert("novelty".into(), serde_json::to_value(scores).expect("plain struct"));
    }
    let text = serde_json::to_string_pretty(&out).expect("plain map") + "\n";
    write_text(None, &text)
}

fn synth(args: SynthArgs) -> Result<()> {
    let (x, labels) = make_gmm(args.seed, args.k, args.d, args.n, args.separation)?;
    save_dataset(&args.out, &x, Some(&labels))?;
    if let Some(path) = &args.labels_out {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Generate(a) => generate(a),
        Command::Assign(a) => assign(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
