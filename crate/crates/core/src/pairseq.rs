//! Packing (text, entity) id sequences into the two complementary
//! BERT-style pair layouts.
//!
//! ```text
//! TextFirst:   [CLS] text   [SEP] entity [SEP] [PAD] ...
//! EntityFirst: [CLS] entity [SEP] text   [SEP] [PAD] ...
//! ```
//!
//! On overflow the text is truncated from the right; the entity is never cut.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{CLS, PAD, SEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    TextFirst,
    EntityFirst,
}

impl Order {
    pub fn as_str(self) -> &'static str {
        match self {
            Order::TextFirst => "text-first",
            Order::EntityFirst => "entity-first",
        }
    }
}

impl std::str::FromStr for Order {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text-first" => Ok(Order::TextFirst),
            "entity-first" => Ok(Order::EntityFirst),
            _ => Err(Error::Config(format!("unknown order {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedPair {
    pub input_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
    pub order: Order,
    pub label_id: usize,
}

impl EncodedPair {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    /// Number of non-padding positions.
    pub fn content_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    /// Extends with padding up to `len` positions.
    pub fn padded_to(&self, len: usize) -> Self {
        let mut p = self.clone();
        p.input_ids.resize(len.max(self.len()), PAD);
        p.segment_ids.resize(len.max(self.len()), 0);
        p.attention_mask.resize(len.max(self.len()), 0);
        p
    }

    /// Drops trailing padding. Padded keys are masked in attention, so an
    /// encoder gives the same CLS output for the trimmed pair.
    pub fn trimmed(&self) -> Self {
        let n = self.content_len();
        let mut p = self.clone();
        p.input_ids.truncate(n);
        p.segment_ids.truncate(n);
        p.attention_mask.truncate(n);
        p
    }

    /// Checks every structural invariant of a packed pair.
    pub fn validate(&self) -> Result<()> {
        let n = self.input_ids.len();
        let fail = |m: &str| Err(Error::Pack(m.to_owned()));
        if self.segment_ids.len() != n || self.attention_mask.len() != n {
            return fail("id, segment and mask lengths differ");
        }
        if n == 0 || self.input_ids[0] != CLS {
            return fail("first position must be [CLS]");
        }
        let content = self.content_len();
        if self.attention_mask[..content].iter().any(|&m| m != 1) {
            return fail("mask is not a prefix of ones");
        }
        for i in 0..n {
            let is_pad = self.input_ids[i] == PAD;
            if is_pad == (i < content) {
                return fail("mask disagrees with padding");
            }
        }
        if self.input_ids[1..].contains(&CLS) {
            return fail("more than one [CLS]");
        }
        let seps: Vec<usize> = (0..content).filter(|&i| self.input_ids[i] == SEP).collect();
        if seps.len() != 2 || seps[1] != content - 1 {
            return fail("need exactly two [SEP], the second terminating the content");
        }
        for i in 0..n {
            let want = u8::from(i > seps[0] && i < content);
            if self.segment_ids[i] != want {
                return fail("segment ids do not follow the layout");
            }
        }
        Ok(())
    }
}

/// Packs one pair. `max_len` counts every position including specials.
pub fn build_pair(
    text_ids: &[u32],
    entity_ids: &[u32],
    order: Order,
    max_len: usize,
    label_id: usize,
) -> Result<EncodedPair> {
    if entity_ids.is_empty() {
        return Err(Error::Pack("entity is empty".into()));
    }
    if text_ids.is_empty() {
        return Err(Error::Pack("text is empty".into()));
    }
    let text_room = max_len
        .checked_sub(3 + entity_ids.len())
        .filter(|&room| room >= 1)
        .ok_or_else(|| {
            Error::Pack(format!(
                "entity of {} pieces does not fit max_len {max_len} with at least one text piece",
                entity_ids.len()
            ))
        })?;
    let text = &text_ids[..text_ids.len().min(text_room)];
    let (first, second) = match order {
        Order::TextFirst => (text, entity_ids),
        Order::EntityFirst => (entity_ids, text),
    };

    let mut input_ids = Vec::with_capacity(max_len);
    let mut segment_ids = Vec::with_capacity(max_len);
    input_ids.push(CLS);
    input_ids.extend_from_slice(first);
    input_ids.push(SEP);
    segment_ids.resize(input_ids.len(), 0);
    input_ids.extend_from_slice(second);
    input_ids.push(SEP);
    segment_ids.resize(input_ids.len(), 1);
    let content = input_ids.len();
    let mut attention_mask = vec![1u8; content];

    input_ids.resize(max_len, PAD);
    segment_ids.resize(max_len, 0);
    attention_mask.resize(max_len, 0);
    Ok(EncodedPair {
        input_ids,
        segment_ids,
        attention_mask,
        order,
        label_id,
    })
}

/// Both layouts from the same inputs: `(TextFirst, EntityFirst)`.
pub fn build_both(
    text_ids: &[u32],
    entity_ids: &[u32],
    max_len: usize,
    label_id: usize,
) -> Result<(EncodedPair, EncodedPair)> {
    Ok((
        build_pair(text_ids, entity_ids, Order::TextFirst, max_len, label_id)?,
        build_pair(text_ids, entity_ids, Order::EntityFirst, max_len, label_id)?,
    ))
}

/// One observation in both layouts.
pub type PairedInput = (EncodedPair, EncodedPair);

pub fn trim_pair(p: &PairedInput) -> PairedInput {
    (p.0.trimmed(), p.1.trimmed())
}

/// Row-aligned id/segment/mask matrices for one encoder branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub input_ids: Vec<Vec<u32>>,
    pub segment_ids: Vec<Vec<u8>>,
    pub attention_mask: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub pairs: Vec<PairedInput>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn block(&self, order: Order) -> Block {
        fn pick(p: &PairedInput, order: Order) -> &EncodedPair {
            match order {
                Order::TextFirst => &p.0,
                Order::EntityFirst => &p.1,
            }
        }
        Block {
            input_ids: self.pairs.iter().map(|p| pick(p, order).input_ids.clone()).collect(),
            segment_ids: self.pairs.iter().map(|p| pick(p, order).segment_ids.clone()).collect(),
            attention_mask: self.pairs.iter().map(|p| pick(p, order).attention_mask.clone()).collect(),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0.label_id).collect()
    }
}

/// Order-preserving chunks of `batch_size`; the last may be short.
pub fn batchify(pairs: &[PairedInput], batch_size: usize) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch size must be positive");
    pairs
        .chunks(batch_size)
        .map(|c| Batch { pairs: c.to_vec() })
        .collect()
}
