//! Transformer encoder branches and the two classification heads.
//!
//! Parameter count for one branch with `d = d_model`, vocabulary `V`,
//! `L` layers and feed-forward width `f`:
//!
//! ```text
//! branch   = d·(V + 2 + max_len) + L·(4d² + 4d + 2·d·f + f + d + 4d)
//! ensemble = 2·branch + 2d·h + h + h·C + C      (h = d_hidden, C = classes)
//! single   = branch + d·C + C
//! ```

mod check;
mod checkpoint;
mod encoder;
mod heads;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use check::{ensemble_gradcheck, gradcheck_config, GRADCHECK_STEP, GRADCHECK_TOLERANCE};
pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use encoder::EncoderBranch;
pub use heads::{EnsembleModel, SingleModel};

use crate::error::{Error, Result};
use crate::numcore::{cst, Float, Graph, NodeId, ParamStore, Tensor};
use crate::pairseq::PairedInput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    /// Width of the ensemble head's hidden layer.
    pub d_hidden: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
    /// Standard deviation of the truncated-normal initializer.
    pub init_std: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Small defaults; `d_hidden` follows `d_model`.
    pub fn new(vocab_size: usize, max_len: usize, n_classes: usize) -> Self {
        Self {
            vocab_size,
            max_len,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 128,
            d_hidden: 64,
            n_classes,
            dropout_rate: 0.1,
            init_std: 0.02,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 || self.max_len == 0 || self.d_model == 0 || self.d_ff == 0 || self.d_hidden == 0 {
            return fail("model dimensions must be positive".into());
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.n_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return fail(format!("init_std {} must be positive", self.init_std));
        }
        Ok(())
    }

    pub fn branch_param_count(&self) -> usize {
        let (d, f) = (self.d_model, self.d_ff);
        let per_layer = 4 * d * d + 4 * d + 2 * d * f + f + d + 4 * d;
        d * (self.vocab_size + 2 + self.max_len) + self.n_layers * per_layer
    }

    pub fn ensemble_param_count(&self) -> usize {
        let (d, h, c) = (self.d_model, self.d_hidden, self.n_classes);
        2 * self.branch_param_count() + 2 * d * h + h + h * c + c
    }

    pub fn single_param_count(&self) -> usize {
        self.branch_param_count() + self.d_model * self.n_classes + self.n_classes
    }

    /// `key=value` pairs in a fixed order, used by the checkpoint header.
    pub(crate) fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("vocab_size", self.vocab_size.to_string()),
            ("max_len", self.max_len.to_string()),
            ("d_model", self.d_model.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("n_layers", self.n_layers.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("d_hidden", self.d_hidden.to_string()),
            ("n_classes", self.n_classes.to_string()),
            ("dropout_rate", self.dropout_rate.to_string()),
            ("init_std", self.init_std.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub(crate) fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = Self::new(1, 1, 2);
        let mut seen = 0;
        for (k, v) in pairs {
            fn num<F: std::str::FromStr>(k: &str, v: &str) -> Result<F> {
                v.parse().map_err(|_| Error::Checkpoint(format!("bad value {v:?} for {k}")))
            }
            match k {
                "vocab_size" => cfg.vocab_size = num(k, v)?,
                "max_len" => cfg.max_len = num(k, v)?,
                "d_model" => cfg.d_model = num(k, v)?,
                "n_heads" => cfg.n_heads = num(k, v)?,
                "n_layers" => cfg.n_layers = num(k, v)?,
                "d_ff" => cfg.d_ff = num(k, v)?,
                "d_hidden" => cfg.d_hidden = num(k, v)?,
                "n_classes" => cfg.n_classes = num(k, v)?,
                "dropout_rate" => cfg.dropout_rate = num(k, v)?,
                "init_std" => cfg.init_std = num(k, v)?,
                "seed" => cfg.seed = num(k, v)?,
                _ => return Err(Error::Checkpoint(format!("unknown config key {k:?}"))),
            }
            seen += 1;
        }
        if seen != 11 {
            return Err(Error::Checkpoint(format!("expected 11 config keys, found {seen}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Forward-pass mode. Training mode draws dropout masks from a generator
/// seeded with `seed`, so a pass is reproducible given its seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// Inverted dropout driven by an optional generator.
pub(crate) struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub(crate) fn new(rate: f64, mode: Mode) -> Self {
        match mode {
            Mode::Train { seed } if rate > 0.0 => Self {
                rate,
                rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            },
            _ => Self { rate, rng: None },
        }
    }

    pub(crate) fn apply<T: Float>(&mut self, g: &mut Graph<T>, x: NodeId) -> Result<NodeId> {
        let Some(rng) = self.rng.as_mut() else {
            return Ok(x);
        };
        use rand::Rng;
        let keep = cst::<T>(1.0 / (1.0 - self.rate));
        let shape = g.value(x).shape().to_vec();
        let n = g.value(x).len();
        let mask = (0..n)
            .map(|_| if rng.random::<f64>() < self.rate { T::zero() } else { keep })
            .collect();
        let m = g.constant(Tensor::new(shape, mask)?);
        g.mul(x, m)
    }
}

/// Truncated normal (resampled beyond two standard deviations).
pub(crate) struct Initializer {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
    std: f64,
}

impl Initializer {
    pub(crate) fn new(seed: u64, std: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, std).expect("positive std"),
            std,
        }
    }

    pub(crate) fn trunc_normal<T: Float>(&mut self, shape: &[usize]) -> Tensor<T> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| loop {
                let v = self.normal.sample(&mut self.rng);
                if v.abs() <= 2.0 * self.std {
                    break cst::<T>(v);
                }
            })
            .collect();
        Tensor::new(shape.to_vec(), data).expect("shape matches")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Single,
    Ensemble,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Single => "single",
            ModelKind::Ensemble => "ensemble",
        }
    }
}

/// Anything that maps one observation (both layouts) to class logits.
pub trait Classifier<T: Float>: Send + Sync {
    fn config(&self) -> &ModelConfig;
    fn kind(&self) -> ModelKind;
    fn params(&self) -> &ParamStore<T>;
    fn params_mut(&mut self) -> &mut ParamStore<T>;

    /// Adds the forward pass for one observation to `g`, reading parameters
    /// from `params`, and returns the `[1, n_classes]` logits node.
    fn logits_graph(&self, params: &ParamStore<T>, g: &mut Graph<T>, input: &PairedInput, mode: Mode) -> Result<NodeId>;

    fn logits(&self, input: &PairedInput, mode: Mode) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let z = self.logits_graph(self.params(), &mut g, input, mode)?;
        Ok(g.value(z).data().to_vec())
    }
}

/// Either model, for code that loads checkpoints of unknown kind.
#[derive(Debug, Clone)]
pub enum AnyModel<T> {
    Single(SingleModel<T>),
    Ensemble(EnsembleModel<T>),
}

impl<T: Float> AnyModel<T> {
    pub fn cast<U: Float>(&self) -> AnyModel<U> {
        match self {
            AnyModel::Single(m) => AnyModel::Single(m.cast()),
            AnyModel::Ensemble(m) => AnyModel::Ensemble(m.cast()),
        }
    }

    fn inner(&self) -> &dyn Classifier<T> {
        match self {
            AnyModel::Single(m) => m,
            AnyModel::Ensemble(m) => m,
        }
    }
}

impl<T: Float> Classifier<T> for AnyModel<T> {
    fn config(&self) -> &ModelConfig {
        self.inner().config()
    }

    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn params(&self) -> &ParamStore<T> {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        match self {
            AnyModel::Single(m) => m.params_mut(),
            AnyModel::Ensemble(m) => m.params_mut(),
        }
    }

    fn logits_graph(&self, params: &ParamStore<T>, g: &mut Graph<T>, input: &PairedInput, mode: Mode) -> Result<NodeId> {
        self.inner().logits_graph(params, g, input, mode)
    }
}

impl<T> From<SingleModel<T>> for AnyModel<T> {
    fn from(m: SingleModel<T>) -> Self {
        AnyModel::Single(m)
    }
}

impl<T> From<EnsembleModel<T>> for AnyModel<T> {
    fn from(m: EnsembleModel<T>) -> Self {
        AnyModel::Ensemble(m)
    }
}

/// Numerically stable softmax of one logit vector.
pub fn softmax<T: Float>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax<T: Float>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    best
}
