use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Classifier, EnsembleModel, Mode, ModelConfig};
use crate::error::Result;
use crate::numcore::{grad_check, GradCheckReport, Graph};
use crate::pairseq::build_both;
use crate::tokenizer::N_SPECIALS;

pub const GRADCHECK_STEP: f64 = 1e-4;
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

/// The small ensemble used for gradient checks: vocabulary 50, length 16,
/// width 8, two heads, one layer, six classes, no dropout.
pub fn gradcheck_config(seed: u64) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 16,
        d_hidden: 8,
        dropout_rate: 0.0,
        seed,
        ..ModelConfig::new(50, 16, 6)
    }
}

/// Central-difference check of every ensemble parameter on the
/// cross-entropy of one random padded pair.
pub fn ensemble_gradcheck(cfg: &ModelConfig, seed: u64, sample_per_tensor: Option<usize>) -> Result<GradCheckReport> {
    let model = EnsembleModel::<f64>::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = N_SPECIALS as u32..cfg.vocab_size as u32;
    let ent_len = rng.random_range(1..=3usize.min(cfg.max_len - 4));
    let text_len = rng.random_range(1..=(cfg.max_len - 3 - ent_len).saturating_sub(2).max(1));
    let text: Vec<u32> = (0..text_len).map(|_| rng.random_range(vocab.clone())).collect();
    let entity: Vec<u32> = (0..ent_len).map(|_| rng.random_range(vocab.clone())).collect();
    let label = rng.random_range(0..cfg.n_classes);
    let input = build_both(&text, &entity, cfg.max_len, label)?;
    grad_check(
        model.params(),
        |p| {
            let mut g = Graph::new();
            let z = model.logits_graph(p, &mut g, &input, Mode::Eval)?;
            let loss = g.cross_entropy(z, &[label])?;
            Ok((g, loss))
        },
        GRADCHECK_STEP,
        sample_per_tensor,
    )
}
