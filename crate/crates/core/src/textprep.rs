//! Text cleaning: symbol stripping, stopword removal and suffix stripping.
//!
//! The pipeline for one string is clean → whitespace-tokenize →
//! stopword-remove → normalize. Text and entity go through it independently.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use crate::corpus::RawRecord;
use crate::error::{Error, Result};

pub const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_bn.txt");
pub const BUNDLED_SUFFIXES: &str = include_str!("../data/suffixes_bn.tsv");

const DANDA: char = '\u{0964}';
const DOUBLE_DANDA: char = '\u{0965}';

/// ASCII punctuation, Bangla danda marks and a handful of typographic symbols.
pub fn default_strip_charset() -> BTreeSet<char> {
    let mut set: BTreeSet<char> = (0x21u8..=0x7e)
        .map(char::from)
        .filter(|c| c.is_ascii_punctuation())
        .collect();
    set.extend([DANDA, DOUBLE_DANDA]);
    set.extend(['\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}', '\u{2013}', '\u{2014}', '\u{2026}', '\u{00B7}', '\u{2022}']);
    set
}

fn is_protected(c: char) -> bool {
    ('\u{0980}'..='\u{09FF}').contains(&c) || c.is_ascii_digit()
}

/// Longest-suffix rewrite rules with optional embedded self-tests.
///
/// File format: `suffix<TAB>replacement` per line (replacement may be
/// empty), `#test <form> <root>` lines for self-tests, other `#` lines are
/// comments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuffixTable {
    /// Sorted longest-first (by char count), ties in file order.
    rules: Vec<(String, String)>,
    self_tests: Vec<(String, String)>,
}

impl SuffixTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        let mut self_tests = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if let Some(rest) = line.strip_prefix("#test") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(Error::Prep(format!("suffix table line {}: malformed #test", i + 1)));
                }
                self_tests.push((nfc(parts[0]), nfc(parts[1])));
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (suffix, replacement) = line.split_once('\t').unwrap_or((line, ""));
            let (suffix, replacement) = (nfc(suffix.trim()), nfc(replacement.trim()));
            if suffix.is_empty() {
                return Err(Error::Prep(format!("suffix table line {}: empty suffix", i + 1)));
            }
            if replacement.chars().count() > suffix.chars().count() {
                return Err(Error::Prep(format!(
                    "suffix table line {}: replacement longer than suffix",
                    i + 1
                )));
            }
            rules.push((suffix, replacement));
        }
        rules.sort_by_key(|(s, _)| std::cmp::Reverse(s.chars().count()));
        Ok(Self { rules, self_tests })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SUFFIXES).expect("bundled suffix table parses")
    }

    pub fn rules(&self) -> &[(String, String)] {
        &self.rules
    }

    pub fn self_tests(&self) -> &[(String, String)] {
        &self.self_tests
    }

    /// Longest rule whose suffix ends `word`, including a whole-word match.
    fn longest_match(&self, word: &str) -> Option<&(String, String)> {
        self.rules.iter().find(|(s, _)| word.ends_with(s.as_str()))
    }
}

fn nfc(s: &str) -> String {
    s.nfc().collect()
}

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(nfc)
        .collect()
}

#[derive(Debug, Clone)]
pub struct PrepConfig {
    strip_charset: BTreeSet<char>,
    pub stopwords: HashSet<String>,
    pub suffixes: SuffixTable,
    pub enable_stopwords: bool,
    pub enable_stemming: bool,
    pub max_passes: usize,
}

impl PrepConfig {
    pub fn new(
        strip_charset: BTreeSet<char>,
        stopwords: HashSet<String>,
        suffixes: SuffixTable,
        enable_stopwords: bool,
        enable_stemming: bool,
    ) -> Result<Self> {
        if let Some(c) = strip_charset.iter().find(|&&c| is_protected(c)) {
            return Err(Error::Prep(format!(
                "strip charset may not contain Bangla letters or digits (found {c:?})"
            )));
        }
        Ok(Self {
            strip_charset,
            stopwords,
            suffixes,
            enable_stopwords,
            enable_stemming,
            max_passes: 1,
        })
    }

    pub fn strip_charset(&self) -> &BTreeSet<char> {
        &self.strip_charset
    }

    /// Keeps or drops the danda marks from the strip set.
    pub fn with_danda_stripped(mut self, strip: bool) -> Self {
        for c in [DANDA, DOUBLE_DANDA] {
            if strip {
                self.strip_charset.insert(c);
            } else {
                self.strip_charset.remove(&c);
            }
        }
        self
    }
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self::new(
            default_strip_charset(),
            parse_stopwords(BUNDLED_STOPWORDS),
            SuffixTable::bundled(),
            true,
            true,
        )
        .expect("default prep config is valid")
    }
}

/// NFC-normalizes, deletes strip-set code points and collapses whitespace.
pub fn clean_text(raw: &str, cfg: &PrepConfig) -> String {
    // NFC runs again after stripping: deleting a symbol can leave a base
    // character next to a combining mark.
    let stripped: String = raw
        .nfc()
        .filter(|c| !cfg.strip_charset.contains(c))
        .collect::<String>()
        .nfc()
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn tokenize(cleaned: &str) -> Vec<String> {
    cleaned.split_whitespace().map(str::to_owned).collect()
}

pub fn remove_stopwords(tokens: Vec<String>, cfg: &PrepConfig) -> Vec<String> {
    tokens.into_iter().filter(|t| !cfg.stopwords.contains(t)).collect()
}

/// Applies the longest matching suffix rule up to `max_passes` times.
/// A word that is itself a suffix entry is left alone, so the result is
/// never empty.
pub fn normalize_word(word: &str, cfg: &PrepConfig) -> String {
    let mut current = word.to_owned();
    for _ in 0..cfg.max_passes {
        let Some((suffix, replacement)) = cfg.suffixes.longest_match(&current) else {
            break;
        };
        if suffix.len() == current.len() {
            break;
        }
        let stem = &current[..current.len() - suffix.len()];
        let next = format!("{stem}{replacement}");
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// Runs the full pipeline on one string.
pub fn preprocess_str(raw: &str, cfg: &PrepConfig) -> Vec<String> {
    let mut tokens = tokenize(&clean_text(raw, cfg));
    if cfg.enable_stopwords {
        tokens = remove_stopwords(tokens, cfg);
    }
    if cfg.enable_stemming {
        tokens = tokens.iter().map(|t| normalize_word(t, cfg)).collect();
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CleanRecord {
    pub id: String,
    pub clean_text: Vec<String>,
    pub clean_entity: Vec<String>,
    pub label_id: usize,
}

pub fn preprocess_record(r: &RawRecord, cfg: &PrepConfig) -> Result<CleanRecord> {
    let clean_text = preprocess_str(&r.text, cfg);
    let clean_entity = preprocess_str(&r.entity, cfg);
    if clean_entity.is_empty() {
        return Err(Error::Prep(format!("record {}: entity is empty after preprocessing", r.id)));
    }
    if clean_text.is_empty() {
        return Err(Error::Prep(format!("record {}: text is empty after preprocessing", r.id)));
    }
    Ok(CleanRecord {
        id: r.id.clone(),
        clean_text,
        clean_entity,
        label_id: r.label_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PrepConfig {
        PrepConfig::default()
    }

    #[test]
    fn strips_symbols_and_collapses_whitespace() {
        assert_eq!(clean_text("ab#c  d%", &cfg()), "abc d");
        assert_eq!(clean_text("$$$", &cfg()), "");
        assert_eq!(clean_text("  জ্বর।  হয়েছে ", &cfg()), "জ্বর হয়েছে");
    }

    #[test]
    fn danda_is_configurable() {
        let keep = cfg().with_danda_stripped(false);
        assert_eq!(clean_text("জ্বর।", &keep), "জ্বর।");
    }

    #[test]
    fn charset_may_not_contain_bangla_or_digits() {
        let mut set = default_strip_charset();
        set.insert('ক');
        assert!(PrepConfig::new(set, HashSet::new(), SuffixTable::default(), true, true).is_err());
        let mut set = default_strip_charset();
        set.insert('7');
        assert!(PrepConfig::new(set, HashSet::new(), SuffixTable::default(), true, true).is_err());
    }

    #[test]
    fn stopword_edge_cases() {
        let c = cfg();
        assert!(remove_stopwords(vec![], &c).is_empty());
        let all: Vec<String> = ["এবং", "ও", "এই"].iter().map(|s| s.to_string()).collect();
        for w in &all {
            assert!(c.stopwords.contains(w), "{w} should be bundled");
        }
        assert!(remove_stopwords(all, &c).is_empty());
    }

    #[test]
    fn normalize_identity_and_guard() {
        let c = cfg();
        assert_eq!(normalize_word("xyz", &c), "xyz");
        for (suffix, _) in c.suffixes.rules() {
            assert_eq!(&normalize_word(suffix, &c), suffix);
        }
    }

    #[test]
    fn bundled_suffix_self_tests_hold() {
        let c = cfg();
        assert!(c.suffixes.self_tests().len() >= 10);
        for (form, root) in c.suffixes.self_tests() {
            assert_eq!(&normalize_word(form, &c), root, "form {form}");
        }
    }

    #[test]
    fn longest_rule_wins() {
        let table = SuffixTable::parse("র\t\nদের\t\n").unwrap();
        let c = PrepConfig::new(BTreeSet::new(), HashSet::new(), table, true, true).unwrap();
        assert_eq!(normalize_word("রোগীদের", &c), "রোগী");
    }

    #[test]
    fn rejects_growing_replacements() {
        assert!(SuffixTable::parse("a\tbcd\n").is_err());
    }

    #[test]
    fn entity_of_only_symbols_is_an_error() {
        let r = RawRecord {
            id: "x".into(),
            text: "ওষুধ খেতে হবে".into(),
            entity: "#$%".into(),
            label: "Disease".into(),
            label_id: 2,
        };
        assert!(matches!(preprocess_record(&r, &cfg()), Err(Error::Prep(_))));
    }

    #[test]
    fn single_token_entity() {
        let r = RawRecord {
            id: "x".into(),
            text: "নাপা জ্বরের ওষুধ".into(),
            entity: "নাপা".into(),
            label: "Medicine/Chemical Name".into(),
            label_id: 0,
        };
        let out = preprocess_record(&r, &cfg()).unwrap();
        assert_eq!(out.clean_entity, vec!["নাপা".to_string()]);
        assert_eq!(out.label_id, 0);
    }
}
