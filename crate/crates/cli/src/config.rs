//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use meder::corpus::{parse_fraction, Fraction, SplitSpec};
use meder::model::ModelConfig;
use meder::pipeline::PipelineConfig;
use meder::textprep::{default_strip_charset, parse_stopwords, PrepConfig, SuffixTable, BUNDLED_STOPWORDS};
use meder::trainer::TrainConfig;
use meder::{Error, Result};

/// Which model(s) a command builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OrderChoice {
    /// Single branch over `[CLS] text [SEP] entity [SEP]`.
    TextFirst,
    /// Single branch over `[CLS] entity [SEP] text [SEP]`.
    EntityFirst,
    /// Ensemble of both layouts.
    Both,
}

impl OrderChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TextFirst => "text-first",
            Self::EntityFirst => "entity-first",
            Self::Both => "both",
        }
    }
}

impl FromStr for OrderChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text-first" => Ok(Self::TextFirst),
            "entity-first" => Ok(Self::EntityFirst),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!("unknown order {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub stopwords: Option<PathBuf>,
    pub suffixes: Option<PathBuf>,
    pub enable_stopwords: bool,
    pub enable_stemming: bool,
    pub strip_danda: bool,
    pub stem_passes: usize,
    pub vocab_size: usize,
    pub min_freq: u64,
    pub train_frac: Fraction,
    pub val_frac: Fraction,
    pub test_frac: Fraction,
    pub stratified: bool,
    pub seed: u64,
    pub max_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub d_hidden: usize,
    pub dropout: f64,
    pub init_std: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub eval_every: usize,
    pub patience: usize,
    pub order: OrderChoice,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(0, 0, 0);
        let t = TrainConfig::default();
        let p = PipelineConfig::default();
        let s = SplitSpec::default();
        Self {
            corpus: None,
            labels: None,
            vocab: None,
            checkpoint: None,
            out_dir: PathBuf::from("out"),
            stopwords: None,
            suffixes: None,
            enable_stopwords: true,
            enable_stemming: true,
            strip_danda: true,
            stem_passes: 1,
            vocab_size: p.vocab_size,
            min_freq: p.min_freq,
            train_frac: s.train,
            val_frac: s.val,
            test_frac: s.test,
            stratified: s.stratified,
            seed: t.seed,
            max_len: t.max_len,
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_layers: m.n_layers,
            d_ff: m.d_ff,
            d_hidden: m.d_hidden,
            dropout: m.dropout_rate,
            init_std: m.init_std,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            weight_decay: t.weight_decay,
            eval_every: t.eval_every,
            patience: t.patience,
            order: OrderChoice::Both,
        }
    }
}

fn parse_num<F: FromStr>(key: &str, v: &str) -> Result<F> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Applies `key = value` lines on top of the current values. Blank lines
    /// and lines starting with `#` are ignored; unknown keys are errors.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "corpus" => self.corpus = opt_path(v),
            "labels" => self.labels = opt_path(v),
            "vocab" => self.vocab = opt_path(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "stopwords" => self.stopwords = opt_path(v),
            "suffixes" => self.suffixes = opt_path(v),
            "enable_stopwords" => self.enable_stopwords = parse_bool(key, v)?,
            "enable_stemming" => self.enable_stemming = parse_bool(key, v)?,
            "strip_danda" => self.strip_danda = parse_bool(key, v)?,
            "stem_passes" => self.stem_passes = parse_num(key, v)?,
            "vocab_size" => self.vocab_size = parse_num(key, v)?,
            "min_freq" => self.min_freq = parse_num(key, v)?,
            "train_frac" => self.train_frac = parse_fraction(v)?,
            "val_frac" => self.val_frac = parse_fraction(v)?,
            "test_frac" => self.test_frac = parse_fraction(v)?,
            "stratified" => self.stratified = parse_bool(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "max_len" => self.max_len = parse_num(key, v)?,
            "d_model" => self.d_model = parse_num(key, v)?,
            "n_heads" => self.n_heads = parse_num(key, v)?,
            "n_layers" => self.n_layers = parse_num(key, v)?,
            "d_ff" => self.d_ff = parse_num(key, v)?,
            "d_hidden" => self.d_hidden = parse_num(key, v)?,
            "dropout" => self.dropout = parse_num(key, v)?,
            "init_std" => self.init_std = parse_num(key, v)?,
            "learning_rate" => self.learning_rate = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "weight_decay" => self.weight_decay = parse_num(key, v)?,
            "eval_every" => self.eval_every = parse_num(key, v)?,
            "patience" => self.patience = parse_num(key, v)?,
            "order" => self.order = v.parse()?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every key, in a fixed order; `parse` of the result gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("corpus", show_path(&self.corpus));
        kv("labels", show_path(&self.labels));
        kv("vocab", show_path(&self.vocab));
        kv("checkpoint", show_path(&self.checkpoint));
        kv("out_dir", self.out_dir.display().to_string());
        kv("stopwords", show_path(&self.stopwords));
        kv("suffixes", show_path(&self.suffixes));
        kv("enable_stopwords", self.enable_stopwords.to_string());
        kv("enable_stemming", self.enable_stemming.to_string());
        kv("strip_danda", self.strip_danda.to_string());
        kv("stem_passes", self.stem_passes.to_string());
        kv("vocab_size", self.vocab_size.to_string());
        kv("min_freq", self.min_freq.to_string());
        kv("train_frac", self.train_frac.to_string());
        kv("val_frac", self.val_frac.to_string());
        kv("test_frac", self.test_frac.to_string());
        kv("stratified", self.stratified.to_string());
        kv("seed", self.seed.to_string());
        kv("max_len", self.max_len.to_string());
        kv("d_model", self.d_model.to_string());
        kv("n_heads", self.n_heads.to_string());
        kv("n_layers", self.n_layers.to_string());
        kv("d_ff", self.d_ff.to_string());
        kv("d_hidden", self.d_hidden.to_string());
        kv("dropout", self.dropout.to_string());
        kv("init_std", self.init_std.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("eval_every", self.eval_every.to_string());
        kv("patience", self.patience.to_string());
        kv("order", self.order.as_str().to_string());
        s
    }

    pub fn prep(&self) -> Result<PrepConfig> {
        let stopwords = match &self.stopwords {
            Some(p) => parse_stopwords(&read(p)?),
            None => parse_stopwords(BUNDLED_STOPWORDS),
        };
        let suffixes = match &self.suffixes {
            Some(p) => SuffixTable::from_file(p)?,
            None => SuffixTable::bundled(),
        };
        let mut cfg = PrepConfig::new(
            default_strip_charset(),
            stopwords,
            suffixes,
            self.enable_stopwords,
            self.enable_stemming,
        )?
        .with_danda_stripped(self.strip_danda);
        cfg.max_passes = self.stem_passes;
        Ok(cfg)
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        SplitSpec::new(self.train_frac, self.val_frac, self.test_frac, self.seed, self.stratified)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            prep: self.prep()?,
            vocab_size: self.vocab_size,
            min_freq: self.min_freq,
            max_len: self.max_len,
            split: self.split_spec()?,
        })
    }

    pub fn model(&self, vocab_size: usize, n_classes: usize) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            d_hidden: self.d_hidden,
            dropout_rate: self.dropout,
            init_std: self.init_std,
            seed: self.seed,
            ..ModelConfig::new(vocab_size, self.max_len, n_classes)
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_len: self.max_len,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            seed: self.seed,
            eval_every: self.eval_every,
            patience: self.patience,
            target_train_accuracy: None,
        }
    }
}

fn read(p: &PathBuf) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::Io {
        path: p.clone(),
        source: e,
    })
}
