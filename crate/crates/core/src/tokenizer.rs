//! Subword vocabulary induction and WordPiece-style encoding.
//!
//! Vocabularies are grown bottom-up from single characters by merging the
//! most frequent adjacent piece pair, and words are encoded by greedy
//! longest-match with `##` continuation pieces.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const N_SPECIALS: usize = 4;
pub const SPECIAL_TOKENS: [&str; N_SPECIALS] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];
pub const CONTINUATION: &str = "##";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    id_of: HashMap<String, u32>,
    max_piece_chars: usize,
}

impl Vocab {
    /// Builds a vocabulary from an ordered token list; ids are list positions.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < N_SPECIALS || tokens[..N_SPECIALS] != SPECIAL_TOKENS {
            return Err(Error::Vocab(format!(
                "first {N_SPECIALS} tokens must be {SPECIAL_TOKENS:?}"
            )));
        }
        let mut id_of = HashMap::with_capacity(tokens.len());
        let mut max_piece_chars = 0;
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t == CONTINUATION || t.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("invalid token {t:?} at id {i}")));
            }
            if id_of.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate token {t:?}")));
            }
            max_piece_chars = max_piece_chars.max(t.trim_start_matches(CONTINUATION).chars().count());
        }
        Ok(Self {
            tokens,
            id_of,
            max_piece_chars,
        })
    }

    pub fn specials_only() -> Self {
        Self::from_tokens(SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect()).expect("specials are valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r').to_owned()).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.id_of.contains_key(token)
    }

    /// Non-special lookup: specials are never produced by encoding.
    fn piece_id(&self, piece: &str) -> Option<u32> {
        self.id(piece).filter(|&id| id as usize >= N_SPECIALS)
    }

    /// A copy with one token removed; ids after it shift down.
    pub fn without(&self, token: &str) -> Result<Self> {
        Self::from_tokens(self.tokens.iter().filter(|t| *t != token).cloned().collect())
    }
}

fn initial_pieces(word: &str) -> impl Iterator<Item = String> + '_ {
    word.chars().enumerate().map(|(i, c)| {
        if i == 0 {
            c.to_string()
        } else {
            format!("{CONTINUATION}{c}")
        }
    })
}

fn merged(left: &str, right: &str) -> String {
    format!("{left}{}", right.strip_prefix(CONTINUATION).unwrap_or(right))
}

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: String,
    right: String,
    pair: (u32, u32),
}

impl Ord for Candidate {
    // Highest count first; among equal counts the lexicographically
    // smallest (left, right) wins.
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| Reverse((&self.left, &self.right)).cmp(&Reverse((&other.left, &other.right))))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Induces a vocabulary from word lists.
///
/// The vocabulary holds the four specials, every character piece seen at
/// least `min_freq` times (plain word-initially, `##`-prefixed inside a
/// word), then merged pairs in order of descending frequency until
/// `target_size` is reached or no pair occurs `min_freq` times.
pub fn train_vocab(corpus: &[Vec<String>], target_size: usize, min_freq: u64) -> Result<Vocab> {
    let mut word_freq: BTreeMap<&str, u64> = BTreeMap::new();
    for sent in corpus {
        for w in sent {
            if !w.is_empty() {
                *word_freq.entry(w.as_str()).or_default() += 1;
            }
        }
    }
    let mut char_freq: BTreeMap<String, u64> = BTreeMap::new();
    for (w, &f) in &word_freq {
        for p in initial_pieces(w) {
            *char_freq.entry(p).or_default() += f;
        }
    }
    let alphabet: Vec<String> = char_freq
        .into_iter()
        .filter(|&(_, f)| f >= min_freq.max(1))
        .map(|(p, _)| p)
        .collect();
    if target_size < N_SPECIALS + alphabet.len() {
        return Err(Error::Vocab(format!(
            "target size {target_size} is below {} specials + {} alphabet pieces",
            N_SPECIALS,
            alphabet.len()
        )));
    }

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(alphabet.iter().cloned());
    let mut symbol: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();

    // Words made entirely of alphabet pieces, as symbol-id sequences.
    let mut words: Vec<(Vec<u32>, u64)> = Vec::new();
    for (w, &f) in &word_freq {
        let ids: Option<Vec<u32>> = initial_pieces(w).map(|p| symbol.get(&p).copied()).collect();
        if let Some(ids) = ids {
            words.push((ids, f));
        }
    }

    let mut pair_count: HashMap<(u32, u32), u64> = HashMap::new();
    let mut pair_words: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, (ids, f)) in words.iter().enumerate() {
        for win in ids.windows(2) {
            let p = (win[0], win[1]);
            *pair_count.entry(p).or_default() += f;
            pair_words.entry(p).or_default().insert(wi);
        }
    }
    let candidate = |tokens: &[String], pair: (u32, u32), count: u64| Candidate {
        count,
        left: tokens[pair.0 as usize].clone(),
        right: tokens[pair.1 as usize].clone(),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = pair_count
        .iter()
        .map(|(&p, &c)| candidate(&tokens, p, c))
        .collect();

    while tokens.len() < target_size {
        let Some(top) = heap.pop() else { break };
        let current = pair_count.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            if current > 0 {
                heap.push(candidate(&tokens, top.pair, current));
            }
            continue;
        }
        if current < min_freq.max(1) {
            break;
        }
        let new_token = merged(&top.left, &top.right);
        let new_id = match symbol.get(&new_token) {
            Some(&id) => id,
            None => {
                let id = tokens.len() as u32;
                tokens.push(new_token.clone());
                symbol.insert(new_token, id);
                id
            }
        };

        let mut affected: Vec<usize> = pair_words.remove(&top.pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        let mut touched: HashSet<(u32, u32)> = HashSet::new();
        for wi in affected {
            let (ids, f) = &mut words[wi];
            let f = *f;
            if !ids.windows(2).any(|w| (w[0], w[1]) == top.pair) {
                continue;
            }
            for win in ids.windows(2) {
                let p = (win[0], win[1]);
                if let Some(c) = pair_count.get_mut(&p) {
                    *c -= f;
                }
            }
            let mut out = Vec::with_capacity(ids.len());
            let mut i = 0;
            while i < ids.len() {
                if i + 1 < ids.len() && (ids[i], ids[i + 1]) == top.pair {
                    out.push(new_id);
                    i += 2;
                } else {
                    out.push(ids[i]);
                    i += 1;
                }
            }
            *ids = out;
            for win in ids.windows(2) {
                let p = (win[0], win[1]);
                *pair_count.entry(p).or_default() += f;
                pair_words.entry(p).or_default().insert(wi);
                touched.insert(p);
            }
        }
        pair_count.remove(&top.pair);
        let mut touched: Vec<_> = touched.into_iter().collect();
        touched.sort_unstable();
        for p in touched {
            let c = pair_count.get(&p).copied().unwrap_or(0);
            if c > 0 {
                heap.push(candidate(&tokens, p, c));
            }
        }
    }
    Vocab::from_tokens(tokens)
}

/// Greedy longest-match encoding of one word. If any position cannot be
/// matched the whole word becomes `[UNK]`.
pub fn encode_word(word: &str, vocab: &Vocab) -> Vec<u32> {
    let bounds: Vec<usize> = word.char_indices().map(|(i, _)| i).chain(std::iter::once(word.len())).collect();
    let n_chars = bounds.len() - 1;
    let mut ids = Vec::new();
    let mut start = 0;
    while start < n_chars {
        let longest = (n_chars - start).min(vocab.max_piece_chars);
        let found = (1..=longest).rev().find_map(|len| {
            let s = &word[bounds[start]..bounds[start + len]];
            let id = if start == 0 {
                vocab.piece_id(s)
            } else {
                vocab.piece_id(&format!("{CONTINUATION}{s}"))
            };
            id.map(|id| (id, len))
        });
        match found {
            Some((id, len)) => {
                ids.push(id);
                start += len;
            }
            None => return vec![UNK],
        }
    }
    ids
}

pub fn encode_text<S: AsRef<str>>(tokens: &[S], vocab: &Vocab) -> Vec<u32> {
    tokens.iter().flat_map(|t| encode_word(t.as_ref(), vocab)).collect()
}

/// Joins pieces back into text, fusing `##` pieces onto their predecessor
/// and dropping special tokens.
pub fn decode(ids: &[u32], vocab: &Vocab) -> Result<String> {
    let mut out = String::new();
    for &id in ids {
        let tok = vocab.token(id).ok_or(Error::Index {
            op: "decode",
            index: id as usize,
            bound: vocab.len(),
        })?;
        if (id as usize) < N_SPECIALS {
            continue;
        }
        match tok.strip_prefix(CONTINUATION) {
            Some(rest) => out.push_str(rest),
            None => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
    }
    Ok(out)
}
