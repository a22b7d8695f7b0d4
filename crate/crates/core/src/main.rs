use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use wdtcn::analysis::{average_models, bin_by_t60, bins_csv, collect_attention, parse_edges, DEFAULT_T60_EDGES};
use wdtcn::dsp::{generate_corpus, load_corpus, read_manifest, read_wav, write_corpus, CorpusConfig};
use wdtcn::loss::sisdr;
use wdtcn::model::{count_parameters, Model, ModelConfig, Variant};
use wdtcn::train::{evaluate, load_resumable, mean_db, train, TrainConfig};

#[derive(Parser)]
#[command(name = "wdtcn", version, about = "WD-TCN speech dereverberation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a corpus manifest.
    Train(TrainArgs),
    /// Print the mean SISDR over a manifest.
    Eval(EvalArgs),
    /// Bin attention weights of WD-TCN checkpoints by T60.
    Analyze(AnalyzeArgs),
    /// Print the itemized parameter count.
    Params(ModelArgs),
    /// Generate a synthetic reverberant corpus.
    GenData(GenArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// JSON file with optional `model`, `train` and `corpus` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "wd-tcn")]
    variant: Variant,
    #[arg(long)]
    x: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    /// Use the small desk-scale channel widths (N=64, B=32, H=64).
    #[arg(long)]
    toy: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Continue from a resumable checkpoint (`last.ckpt.json`).
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Model to evaluate; without it the unprocessed inputs are scored.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Repeat to average several models.
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated bin edges in seconds.
    #[arg(long = "t60-bins")]
    t60_bins: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
    corpus: Option<CorpusConfig>,
}

/// Errors that map to exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("{what} `{}` does not exist", path.display())).into());
    }
    Ok(())
}

fn read_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    require_file(path, "config file")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
}

impl ModelArgs {
    fn resolve(&self, file: &FileConfig) -> ModelConfig {
        let mut cfg = match &file.model {
            Some(m) => m.clone(),
            None if self.toy => ModelConfig::toy(self.variant),
            None => ModelConfig::reference(self.variant, 8, 8),
        };
        if file.model.is_none() {
            cfg.variant = self.variant;
        }
        if let Some(x) = self.x {
            cfg.x = x;
        }
        if let Some(r) = self.r {
            cfg.r = r;
        }
        cfg
    }
}

fn cmd_params(args: &ModelArgs) -> Result<()> {
    let file = read_file_config(args.config.as_deref())?;
    let cfg = args.resolve(&file);
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    println!("{}", count_parameters(&cfg));
    Ok(())
}

fn cmd_gen_data(args: &GenArgs) -> Result<()> {
    let file = read_file_config(args.config.as_deref())?;
    let mut cfg = file.corpus.unwrap_or_default();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(count) = args.count {
        cfg.count = count;
    }
    if let Some(d) = args.duration {
        cfg.duration_s = d;
    }
    let samples = generate_corpus(&cfg)?;
    let manifest = write_corpus(&args.out, &samples)?;
    println!("wrote {} clips, manifest {}", samples.len(), manifest.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    require_file(&args.corpus, "manifest")?;
    let file = read_file_config(args.model.config.as_deref())?;
    let mut tcfg = file.train.clone().unwrap_or_default();
    if let Some(seed) = args.seed {
        tcfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        tcfg.epochs = epochs;
    }
    let corpus = load_corpus(&args.corpus)?;
    let (mut model, state) = match &args.resume {
        Some(path) => {
            require_file(path, "checkpoint")?;
            let (model, state) = load_resumable(path)?;
            (model, Some(state))
        }
        None => {
            let cfg = args.model.resolve(&file);
            (Model::new(cfg, tcfg.seed).map_err(|e| UsageError(e.to_string()))?, None)
        }
    };
    eprintln!(
        "training {} X={} R={} ({} parameters) on {} clips",
        model.config().variant,
        model.config().x,
        model.config().r,
        model.num_parameters(),
        corpus.len()
    );
    let outcome = train(&mut model, &corpus, &tcfg, state, Some(&args.out), |r| {
        eprintln!(
            "epoch {:>4}  train {:>8.3} dB  val {:>8.3} dB  lr {:.2e}",
            r.epoch, r.train_loss_db, r.val_loss_db, r.lr
        );
    })?;
    println!("best validation SISDR: {:.2} dB", -outcome.state.best_validation_loss);
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    require_file(&args.corpus, "manifest")?;
    let mean = match &args.checkpoint {
        Some(path) => {
            require_file(path, "checkpoint")?;
            let model = Model::load(path)?;
            mean_db(&evaluate(&model, &load_corpus(&args.corpus)?)?)
        }
        None => {
            // Score the manifest's inputs directly against their targets.
            let dir = args.corpus.parent().unwrap_or(Path::new("."));
            let records = read_manifest(&args.corpus)?;
            if records.is_empty() {
                bail!("manifest {} is empty", args.corpus.display());
            }
            let mut total = 0.0;
            for r in &records {
                let est = read_wav(dir.join(&r.path_in))?;
                let target = read_wav(dir.join(&r.path_target))?;
                let n = est.len().min(target.len());
                total += sisdr(&est.samples[..n], &target.samples[..n])?.value_db;
            }
            total / records.len() as f64
        }
    };
    println!("mean SISDR: {mean:.2} dB");
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    require_file(&args.corpus, "manifest")?;
    for c in &args.checkpoint {
        require_file(c, "checkpoint")?;
    }
    let edges = match &args.t60_bins {
        Some(list) => parse_edges(list).map_err(|e| UsageError(e.to_string()))?,
        None => DEFAULT_T60_EDGES.to_vec(),
    };
    let corpus = load_corpus(&args.corpus)?;
    let mut per_model = Vec::new();
    for path in &args.checkpoint {
        let model = Model::load(path)?;
        let records = collect_attention(&model, &corpus).with_context(|| path.display().to_string())?;
        let binning = bin_by_t60(&records, &edges)?;
        if !binning.spill.is_empty() {
            let mut ids: Vec<usize> = binning.spill.iter().map(|r| r.utterance_id).collect();
            ids.dedup();
            eprintln!(
                "{}: {} records from utterances {ids:?} fall outside the T60 bins",
                path.display(),
                binning.spill.len()
            );
        }
        per_model.push(binning.bins);
    }
    let bins = average_models(&per_model);
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join("t60_bins.csv");
    std::fs::write(&path, bins_csv(&bins)).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {} bins to {}", bins.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Params(a) => cmd_params(&a),
        Command::GenData(a) => cmd_gen_data(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
