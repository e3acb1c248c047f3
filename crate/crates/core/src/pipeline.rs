//! Corpus → split → preprocess → vocabulary → packed pairs.

use log::warn;

use crate::corpus::{split, Corpus, LabelSet, RawRecord, Split, SplitFingerprints, SplitSpec};
use crate::error::Result;
use crate::pairseq::{build_both, PairedInput};
use crate::textprep::{preprocess_record, CleanRecord, PrepConfig};
use crate::tokenizer::{encode_text, train_vocab, Vocab};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub prep: PrepConfig,
    pub vocab_size: usize,
    pub min_freq: u64,
    pub max_len: usize,
    pub split: SplitSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prep: PrepConfig::default(),
            vocab_size: 8000,
            min_freq: 1,
            max_len: 484,
            split: SplitSpec::default(),
        }
    }
}

/// A record left out because it did not survive preprocessing or packing.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Dropped {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub labels: LabelSet,
    pub vocab: Vocab,
    pub split: Split,
    pub fingerprints: SplitFingerprints,
    pub train: Vec<PairedInput>,
    pub val: Vec<PairedInput>,
    pub test: Vec<PairedInput>,
    pub dropped: Vec<Dropped>,
}

/// Packs one preprocessed record in both layouts.
pub fn encode_record(rec: &CleanRecord, vocab: &Vocab, max_len: usize) -> Result<PairedInput> {
    let text = encode_text(&rec.clean_text, vocab);
    let entity = encode_text(&rec.clean_entity, vocab);
    build_both(&text, &entity, max_len, rec.label_id)
}

fn clean_all(records: &[RawRecord], prep: &PrepConfig, dropped: &mut Vec<Dropped>) -> Vec<CleanRecord> {
    records
        .iter()
        .filter_map(|r| match preprocess_record(r, prep) {
            Ok(c) => Some(c),
            Err(e) => {
                dropped.push(Dropped {
                    id: r.id.clone(),
                    reason: e.to_string(),
                });
                None
            }
        })
        .collect()
}

fn encode_all(records: &[CleanRecord], vocab: &Vocab, max_len: usize, dropped: &mut Vec<Dropped>) -> Vec<PairedInput> {
    records
        .iter()
        .filter_map(|r| match encode_record(r, vocab, max_len) {
            Ok(p) => Some(p),
            Err(e) => {
                dropped.push(Dropped {
                    id: r.id.clone(),
                    reason: e.to_string(),
                });
                None
            }
        })
        .collect()
}

/// Splits the corpus, preprocesses every record and packs the pairs.
/// Without a supplied vocabulary one is trained on the training split only.
pub fn prepare(corpus: &Corpus, labels: &LabelSet, cfg: &PipelineConfig, vocab: Option<Vocab>) -> Result<Prepared> {
    let sp = split(&corpus.records, &cfg.split)?;
    let mut dropped = Vec::new();
    let train_clean = clean_all(&sp.train, &cfg.prep, &mut dropped);
    let val_clean = clean_all(&sp.val, &cfg.prep, &mut dropped);
    let test_clean = clean_all(&sp.test, &cfg.prep, &mut dropped);
    let vocab = match vocab {
        Some(v) => v,
        None => {
            let words: Vec<Vec<String>> = train_clean
                .iter()
                .flat_map(|r| [r.clean_text.clone(), r.clean_entity.clone()])
                .collect();
            train_vocab(&words, cfg.vocab_size, cfg.min_freq)?
        }
    };
    let train = encode_all(&train_clean, &vocab, cfg.max_len, &mut dropped);
    let val = encode_all(&val_clean, &vocab, cfg.max_len, &mut dropped);
    let test = encode_all(&test_clean, &vocab, cfg.max_len, &mut dropped);
    for d in &dropped {
        warn!("dropped record {}: {}", d.id, d.reason);
    }
    Ok(Prepared {
        labels: labels.clone(),
        vocab,
        fingerprints: sp.fingerprints(),
        split: sp,
        train,
        val,
        test,
        dropped,
    })
}

/// Preprocessed words of every record, for vocabulary training.
pub fn vocab_corpus(records: &[RawRecord], prep: &PrepConfig) -> Vec<Vec<String>> {
    let mut dropped = Vec::new();
    clean_all(records, prep, &mut dropped)
        .into_iter()
        .flat_map(|r| [r.clean_text, r.clean_entity])
        .collect()
}
