//! Training loop, evaluation, prediction and the single-vs-ensemble harness.

mod adamw;
mod compare;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adamw::{AdamW, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use compare::{compare, ArmReport, ComparisonReport, Deltas, COMPARISON_SCHEMA_VERSION};

use crate::corpus::LabelSet;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, confusion, MetricsReport};
use crate::model::{argmax, softmax, AnyModel, Classifier, Mode};
use crate::numcore::{cst, Float, Gradients, Graph, ParamStore};
use crate::pairseq::{build_both, trim_pair, PairedInput};
use crate::textprep::{preprocess_str, PrepConfig};
use crate::tokenizer::{encode_text, Vocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_len: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// Extra validation every this many optimizer steps; 0 = per epoch only.
    pub eval_every: usize,
    /// Stop after this many epochs without a better validation accuracy; 0 = off.
    pub patience: usize,
    /// Stop once eval-mode accuracy on the training set reaches this value.
    #[serde(default)]
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            batch_size: 32,
            max_len: 484,
            epochs: 40,
            weight_decay: 0.01,
            seed: 42,
            eval_every: 0,
            patience: 0,
            target_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be non-negative", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss and accuracy of the training-mode passes during the epoch.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// Eval-mode training accuracy, measured only with a target set.
    #[serde(default)]
    pub train_eval_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub step_evals: Vec<StepRecord>,
    /// Epoch whose parameters were kept (1-based); `None` without validation data.
    pub best_epoch: Option<usize>,
    pub steps: usize,
}

/// Dropout seed for one example of one step.
fn example_seed(seed: u64, step: usize, index: usize) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct ExampleResult<T> {
    loss: f64,
    correct: bool,
    grads: Gradients<T>,
}

fn example_step<T: Float, M: Classifier<T>>(
    model: &M,
    params: &ParamStore<T>,
    input: &PairedInput,
    mode: Mode,
) -> Result<ExampleResult<T>> {
    let mut g = Graph::new();
    let z = model.logits_graph(params, &mut g, &trim_pair(input), mode)?;
    let pred = argmax(g.value(z).data());
    let label = input.0.label_id;
    let loss = g.cross_entropy(z, &[label])?;
    let grads = g.backward(loss, params.len())?;
    Ok(ExampleResult {
        loss: g.value(loss).data()[0].to_f64().unwrap_or(f64::NAN),
        correct: pred == label,
        grads,
    })
}

/// Mean loss and accuracy in eval mode.
pub fn loss_and_accuracy<T: Float, M: Classifier<T>>(model: &M, pairs: &[PairedInput]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Model("cannot evaluate an empty set".into()));
    }
    let per: Vec<(f64, bool)> = pairs
        .par_iter()
        .map(|p| {
            let z = model.logits(&trim_pair(p), Mode::Eval)?;
            let probs = softmax(&z);
            let y = p.0.label_id;
            let loss = -probs[y].max(T::min_positive_value()).ln().to_f64().unwrap_or(f64::NAN);
            Ok((loss, argmax(&z) == y))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let loss = per.iter().map(|x| x.0).sum::<f64>() / n;
    let acc = per.iter().filter(|x| x.1).count() as f64 / n;
    Ok((loss, acc))
}

/// Trains `model` in place with AdamW on unweighted cross-entropy.
///
/// Examples of a batch are processed in parallel; their gradients are summed
/// in batch order, so results do not depend on the thread count. With
/// validation data the parameters of the best-validation-accuracy epoch
/// are restored at the end.
pub fn train<M: Classifier<f32>>(
    model: &mut M,
    train_pairs: &[PairedInput],
    val_pairs: &[PairedInput],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::Model("training set is empty".into()));
    }
    let mut opt = AdamW::new(model.params(), cfg.learning_rate, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ParamStore<f32>)> = None;
    let mut since_best = 0;
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let params = model.params();
            let results: Vec<ExampleResult<f32>> = chunk
                .par_iter()
                .enumerate()
                .map(|(i, &idx)| {
                    let mode = Mode::Train {
                        seed: example_seed(cfg.seed, step, i),
                    };
                    example_step(&*model, params, &train_pairs[idx], mode)
                })
                .collect::<Result<_>>()?;
            let mut grads = Gradients::zeros_like(params);
            let mut batch_loss = 0.0;
            for r in &results {
                grads.accumulate(&r.grads)?;
                batch_loss += r.loss;
                correct += usize::from(r.correct);
            }
            batch_loss /= results.len() as f64;
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(Error::Divergence { step, loss: batch_loss });
            }
            grads.scale(cst(1.0 / results.len() as f64));
            opt.step(model.params_mut(), &grads)?;
            loss_sum += batch_loss * results.len() as f64;

            if cfg.eval_every > 0 && step % cfg.eval_every == 0 && !val_pairs.is_empty() {
                let (val_loss, val_accuracy) = loss_and_accuracy(&*model, val_pairs)?;
                history.step_evals.push(StepRecord {
                    step,
                    val_loss,
                    val_accuracy,
                });
            }
        }
        let n = train_pairs.len() as f64;
        let mut rec = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss: None,
            val_accuracy: None,
            train_eval_accuracy: None,
        };
        if !val_pairs.is_empty() {
            let (vl, va) = loss_and_accuracy(&*model, val_pairs)?;
            rec.val_loss = Some(vl);
            rec.val_accuracy = Some(va);
            if best.as_ref().is_none_or(|(b, _)| va > *b) {
                best = Some((va, model.params().clone()));
                history.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        info!(
            "epoch {epoch}: train loss {:.4} acc {:.4}{}",
            rec.train_loss,
            rec.train_accuracy,
            rec.val_accuracy.map(|a| format!(" val acc {a:.4}")).unwrap_or_default()
        );
        let reached = match cfg.target_train_accuracy {
            Some(target) => {
                let acc = loss_and_accuracy(&*model, train_pairs)?.1;
                rec.train_eval_accuracy = Some(acc);
                acc >= target
            }
            None => false,
        };
        history.epochs.push(rec);
        if reached {
            info!("training accuracy target reached after epoch {epoch}");
            break;
        }
        if cfg.patience > 0 && since_best >= cfg.patience {
            info!("early stop after epoch {epoch}");
            break;
        }
    }
    history.steps = step;
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok(history)
}

/// Predicted label id and eval-mode logits for every pair.
pub fn predict_all<T: Float, M: Classifier<T>>(model: &M, pairs: &[PairedInput]) -> Result<Vec<(usize, Vec<T>)>> {
    pairs
        .par_iter()
        .map(|p| {
            let z = model.logits(&trim_pair(p), Mode::Eval)?;
            Ok((argmax(&z), z))
        })
        .collect()
}

/// Eval-mode metrics. Ties in the logits go to the lowest label id.
pub fn evaluate<T: Float, M: Classifier<T>>(model: &M, pairs: &[PairedInput], labels: &[String]) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Model("cannot evaluate an empty set".into()));
    }
    let preds: Vec<usize> = predict_all(model, pairs)?.into_iter().map(|p| p.0).collect();
    let golds: Vec<usize> = pairs.iter().map(|p| p.0.label_id).collect();
    aggregate(&confusion(&golds, &preds, model.config().n_classes)?, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub label_id: usize,
    pub probabilities: Vec<ClassProbability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbability {
    pub label: String,
    pub probability: f64,
}

/// Packs raw `(text, entity)` with the same pipeline used for training.
pub fn encode_raw(vocab: &Vocab, prep: &PrepConfig, max_len: usize, text: &str, entity: &str) -> Result<PairedInput> {
    let ent = preprocess_str(entity, prep);
    if ent.is_empty() {
        return Err(Error::Prep("entity is empty after preprocessing".into()));
    }
    let txt = preprocess_str(text, prep);
    if txt.is_empty() {
        return Err(Error::Prep("text is empty after preprocessing".into()));
    }
    build_both(&encode_text(&txt, vocab), &encode_text(&ent, vocab), max_len, 0)
}

pub fn predict(
    model: &AnyModel<f32>,
    vocab: &Vocab,
    prep: &PrepConfig,
    labels: &LabelSet,
    text: &str,
    entity: &str,
) -> Result<Prediction> {
    let input = trim_pair(&encode_raw(vocab, prep, model.config().max_len, text, entity)?);
    let z: Vec<f64> = model.logits(&input, Mode::Eval)?.iter().map(|&v| f64::from(v)).collect();
    let probs = softmax(&z);
    let label_id = argmax(&z);
    let name = |i: usize| labels.name(i).map_or_else(|| i.to_string(), str::to_owned);
    Ok(Prediction {
        label: name(label_id),
        label_id,
        probabilities: probs
            .iter()
            .enumerate()
            .map(|(i, &p)| ClassProbability {
                label: name(i),
                probability: p,
            })
            .collect(),
    })
}
