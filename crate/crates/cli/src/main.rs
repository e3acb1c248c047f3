//! `meder`: command-line front end for corpus preparation, training,
//! evaluation and the single-vs-ensemble comparison.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meder::ErrorClass;

use config::{OrderChoice, RunConfig};

#[derive(Parser)]
#[command(name = "meder", version, about = "Dual-order transformer ensemble for medical entity classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a CSV/TSV export into canonical JSONL records.
    Prepare(PrepareArgs),
    /// Print class counts and split fingerprints.
    Stats(DataArgs),
    /// Train and write the subword vocabulary.
    Vocab(DataArgs),
    /// Train a model and write checkpoint, vocabulary and history.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write the metrics report.
    Eval(EvalArgs),
    /// Classify one (text, entity) pair and print JSON.
    Predict(PredictArgs),
    /// Train the text-first single model and the ensemble on the same split.
    Compare(CompareArgs),
    /// Check back-propagated gradients of a small ensemble.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Clone)]
pub struct Common {
    /// key = value configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for splitting, initialization, shuffling and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct CorpusArgs {
    /// JSONL records; the bundled toy corpus when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Label file, one name per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Raw CSV or TSV export with a header row.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct DataArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: CorpusArgs,
}

#[derive(Args, Clone)]
pub struct TrainFlags {
    /// Vocabulary file; trained on the training split when omitted.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Positions per packed sequence, specials included.
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Args, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: CorpusArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Layout(s) to train on: a single branch or the ensemble.
    #[arg(long, value_enum)]
    pub order: Option<OrderChoice>,
}

#[derive(Args, Clone)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: CorpusArgs,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: CorpusArgs,
    /// Model checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Vocabulary file; `vocab.txt` next to the checkpoint when omitted.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Split to evaluate.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitChoice,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum SplitChoice {
    Train,
    Val,
    Test,
}

#[derive(Args, Clone)]
pub struct PredictArgs {
    /// key = value configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// The statement containing the entity.
    #[arg(long)]
    pub text: String,
    /// The entity mention to classify.
    #[arg(long)]
    pub entity: String,
}

#[derive(Args, Clone)]
pub struct GradcheckArgs {
    /// Seed for the model and the random input pair.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Check only this many evenly spaced entries per tensor.
    #[arg(long)]
    pub sample: Option<usize>,
}

/// A failed command: bad invocation or a pipeline error.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(meder::Error),
}

impl From<meder::Error> for Failure {
    fn from(e: meder::Error) -> Self {
        Failure::Run(e)
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| meder::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(RunConfig::parse(&text)?)
}

/// `--config` if given, else the `run.conf` written next to the checkpoint.
fn config_near(config: Option<&PathBuf>, checkpoint: Option<&PathBuf>) -> Option<PathBuf> {
    config.cloned().or_else(|| {
        let p = checkpoint?.parent()?.join("run.conf");
        p.exists().then_some(p)
    })
}

fn apply_common(cfg: &mut RunConfig, c: &Common) {
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(d) = &c.out_dir {
        cfg.out_dir = d.clone();
    }
}

fn apply_data(cfg: &mut RunConfig, d: &CorpusArgs) {
    if d.corpus.is_some() {
        cfg.corpus = d.corpus.clone();
    }
    if d.labels.is_some() {
        cfg.labels = d.labels.clone();
    }
}

fn apply_train(cfg: &mut RunConfig, t: &TrainFlags) {
    if t.vocab.is_some() {
        cfg.vocab = t.vocab.clone();
    }
    if let Some(v) = t.max_len {
        cfg.max_len = v;
    }
    if let Some(v) = t.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = t.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = t.lr {
        cfg.learning_rate = v;
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Prepare(a) => {
            let mut cfg = load_config(a.common.config.as_ref())?;
            apply_common(&mut cfg, &a.common);
            apply_data(
                &mut cfg,
                &CorpusArgs {
                    corpus: a.corpus,
                    labels: a.labels,
                },
            );
            commands::prepare(&cfg)
        }
        Command::Stats(a) => {
            let mut cfg = load_config(a.common.config.as_ref())?;
            apply_common(&mut cfg, &a.common);
            apply_data(&mut cfg, &a.data);
            commands::stats(&cfg)
        }
        Command::Vocab(a) => {
            let mut cfg = load_config(a.common.config.as_ref())?;
            apply_common(&mut cfg, &a.common);
            apply_data(&mut cfg, &a.data);
            commands::vocab(&cfg)
        }
        Command::Train(a) => {
            let mut cfg = load_config(a.common.config.as_ref())?;
            apply_common(&mut cfg, &a.common);
            apply_data(&mut cfg, &a.data);
            apply_train(&mut cfg, &a.train);
            if let Some(o) = a.order {
                cfg.order = o;
            }
            commands::train(&cfg)
        }
        Command::Compare(a) => {
            let mut cfg = load_config(a.common.config.as_ref())?;
            apply_common(&mut cfg, &a.common);
            apply_data(&mut cfg, &a.data);
            apply_train(&mut cfg, &a.train);
            commands::compare(&cfg)
        }
        Command::Eval(a) => {
            let mut cfg = load_config(config_near(a.common.config.as_ref(), a.checkpoint.as_ref()).as_ref())?;
            apply_common(&mut cfg, &a.common);
            apply_data(&mut cfg, &a.data);
            if a.checkpoint.is_some() {
                cfg.checkpoint = a.checkpoint;
            }
            if a.vocab.is_some() {
                cfg.vocab = a.vocab;
            }
            commands::eval(&cfg, a.split)
        }
        Command::Predict(a) => {
            let mut cfg = load_config(config_near(a.config.as_ref(), a.checkpoint.as_ref()).as_ref())?;
            if a.checkpoint.is_some() {
                cfg.checkpoint = a.checkpoint;
            }
            if a.vocab.is_some() {
                cfg.vocab = a.vocab;
            }
            if a.labels.is_some() {
                cfg.labels = a.labels;
            }
            commands::predict(&cfg, &a.text, &a.entity)
        }
        Command::Gradcheck(a) => commands::gradcheck(a.seed, a.sample),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Data => ExitCode::from(2),
                ErrorClass::Numeric => ExitCode::from(3),
            }
        }
    }
}
