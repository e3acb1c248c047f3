//! Annotated corpus ingestion, validation, splitting and class statistics.
//!
//! Records are stored as JSONL, one `{id, text, entity, label}` object per
//! line. Text and entity are NFC-normalized on load.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use num::rational::Ratio;
use num::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// The six entity categories, in their canonical id order.
pub const DEFAULT_LABELS: [&str; 6] = [
    "Medicine/Chemical Name",
    "Common Medical Terms",
    "Disease",
    "Organ",
    "Pharmacological Class",
    "Hormone",
];

/// Per-category counts of the published dataset, in [`DEFAULT_LABELS`] order.
pub const PUBLISHED_CLASS_COUNTS: [usize; 6] = [1938, 1127, 1098, 1066, 877, 807];

/// Observation count stated alongside the published dataset. It does not
/// agree with the sum of [`PUBLISHED_CLASS_COUNTS`] (6913).
pub const PUBLISHED_STATED_TOTAL: usize = 6895;

pub type Fraction = Ratio<u64>;

/// Ordered category names with a name → id index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::LabelSet("no labels".into()));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::LabelSet(format!("label {i} is blank")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::LabelSet(format!("duplicate label {name:?}")));
            }
        }
        Ok(Self { names, index })
    }

    /// One label per line; order is significant. Blank lines are ignored.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(|l| l.trim_end_matches('\r').trim())
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for n in &self.names {
            out.push_str(n);
            out.push('\n');
        }
        out
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        Self::new(DEFAULT_LABELS).expect("default labels are valid")
    }
}

/// 120-record bilingual sample whose classes are separable by entity.
pub const TOY_CORPUS: &str = include_str!("../data/toy_corpus.jsonl");
pub const TOY_LABELS: &str = include_str!("../data/labels.txt");

pub fn toy_corpus() -> Result<(Corpus, LabelSet)> {
    let labels = LabelSet::parse(TOY_LABELS)?;
    Ok((parse_corpus(TOY_CORPUS, &labels)?, labels))
}

/// One annotated observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    pub entity: String,
    pub label: String,
    pub label_id: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    text: String,
    entity: String,
    label: String,
}

/// Loaded records plus non-fatal diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub records: Vec<RawRecord>,
    /// Records whose entity is not a substring of the text.
    pub entity_not_in_text: usize,
}

pub fn load_corpus(path: impl AsRef<Path>, labels: &LabelSet) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, labels)
}

pub fn parse_corpus(text: &str, labels: &LabelSet) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let rec: RecordLine = serde_json::from_str(raw_line).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let record = validate(rec, labels, line)?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                line,
                id: record.id,
            });
        }
        if !record.text.contains(&record.entity) {
            corpus.entity_not_in_text += 1;
        }
        corpus.records.push(record);
    }
    Ok(corpus)
}

fn validate(rec: RecordLine, labels: &LabelSet, line: usize) -> Result<RawRecord> {
    let label_id = labels.id(&rec.label).ok_or_else(|| Error::UnknownLabel {
        line,
        label: rec.label.clone(),
    })?;
    if rec.id.is_empty() {
        return Err(Error::InvalidRecord {
            line,
            reason: "empty id".into(),
        });
    }
    let text: String = rec.text.nfc().collect();
    let entity: String = rec.entity.nfc().collect();
    if text.trim().is_empty() {
        return Err(Error::InvalidRecord {
            line,
            reason: "empty text".into(),
        });
    }
    if entity.trim().is_empty() {
        return Err(Error::InvalidRecord {
            line,
            reason: "empty entity".into(),
        });
    }
    Ok(RawRecord {
        id: rec.id,
        text,
        entity,
        label: rec.label,
        label_id,
    })
}

pub fn record_to_json_line(r: &RawRecord) -> String {
    serde_json::to_string(&RecordLine {
        id: r.id.clone(),
        text: r.text.clone(),
        entity: r.entity.clone(),
        label: r.label.clone(),
    })
    .expect("string fields always serialize")
}

pub fn write_corpus(records: &[RawRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", record_to_json_line(r))?;
    }
    Ok(())
}

pub fn save_corpus(records: &[RawRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_corpus(records, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// A delimited-export row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    /// 1-based line number in the source file, header included.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Import {
    pub corpus: Corpus,
    pub rejected: Vec<RejectedRow>,
}

const TEXT_COLUMNS: [&str; 4] = ["text", "sentence", "statement", "medical_text"];
const ENTITY_COLUMNS: [&str; 5] = ["entity", "word", "term", "mention", "medical_entity"];
const LABEL_COLUMNS: [&str; 5] = ["label", "class", "category", "entity_type", "tag"];

fn header_key(h: &str) -> String {
    h.trim()
        .trim_start_matches('\u{feff}')
        .to_lowercase()
        .replace([' ', '-'], "_")
}

fn find_column(headers: &[String], names: &[&str]) -> Option<usize> {
    names.iter().find_map(|n| headers.iter().position(|h| h == n))
}

/// Tab if the header line contains one, comma otherwise.
pub fn sniff_delimiter(text: &str) -> u8 {
    match text.lines().next() {
        Some(h) if h.contains('\t') => b'\t',
        _ => b',',
    }
}

/// Converts a CSV/TSV export with a header row into records.
///
/// Columns are located by header name, case-insensitively (`text`,
/// `sentence` or `statement`; `entity`, `word` or `term`; `label`, `class`
/// or `category`; optional `id`). Rows without an id get `r<line>`. Labels
/// match exactly, then ignoring case, spaces and punctuation. Rows that fail validation are
/// collected in `rejected` instead of aborting the import.
pub fn import_delimited(text: &str, delimiter: u8, labels: &LabelSet) -> Result<Import> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(header_key)
        .collect();
    let need = |names: &[&str], what: &str| {
        find_column(&headers, names).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("no {what} column among {headers:?}"),
        })
    };
    let (ti, ei, li) = (need(&TEXT_COLUMNS, "text")?, need(&ENTITY_COLUMNS, "entity")?, need(&LABEL_COLUMNS, "label")?);
    let id_col = find_column(&headers, &["id"]);
    let loose = |s: &str| -> String { s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect() };
    let by_key: HashMap<String, &str> = labels.names().iter().map(|n| (loose(n), n.as_str())).collect();

    let mut out = Import::default();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                out.rejected.push(RejectedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| row.get(i).unwrap_or("").trim().to_string();
        let raw_label = field(li);
        let label = match labels.id(&raw_label) {
            Some(_) => raw_label,
            None => by_key.get(&loose(&raw_label)).map_or(raw_label, |n| n.to_string()),
        };
        let id = id_col.map(field).filter(|s| !s.is_empty()).unwrap_or_else(|| format!("r{line}"));
        let rec = RecordLine {
            id,
            text: field(ti),
            entity: field(ei),
            label,
        };
        match validate(rec, labels, line) {
            Ok(r) if !seen.insert(r.id.clone()) => out.rejected.push(RejectedRow {
                line,
                reason: format!("duplicate record id {:?}", r.id),
            }),
            Ok(r) => {
                if !r.text.contains(&r.entity) {
                    out.corpus.entity_not_in_text += 1;
                }
                out.corpus.records.push(r);
            }
            Err(e) => out.rejected.push(RejectedRow {
                line,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Parses `"0.8"`, `"4/5"` or `"1"` into an exact fraction.
pub fn parse_fraction(s: &str) -> Result<Fraction> {
    let s = s.trim();
    let bad = || Error::Split(format!("invalid fraction {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        let d: u64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if (int.is_empty() && frac.is_empty()) || frac.len() > 18 {
        return Err(bad());
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
    let denom = 10u64.pow(frac.len() as u32);
    let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    Ok(Ratio::new(int * denom + frac, denom))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Fraction,
    pub val: Fraction,
    pub test: Fraction,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(train: Fraction, val: Fraction, test: Fraction, seed: u64, stratified: bool) -> Result<Self> {
        let spec = Self {
            train,
            val,
            test,
            seed,
            stratified,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let sum = self.train + self.val + self.test;
        if sum != Ratio::from_integer(1) {
            return Err(Error::Split(format!(
                "fractions {}/{}/{} sum to {sum}, not 1",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: Ratio::new(8, 10),
            val: Ratio::new(1, 10),
            test: Ratio::new(1, 10),
            seed: 42,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<RawRecord>,
    pub val: Vec<RawRecord>,
    pub test: Vec<RawRecord>,
}

impl Split {
    pub fn fingerprints(&self) -> SplitFingerprints {
        SplitFingerprints {
            train: fingerprint(&self.train),
            val: fingerprint(&self.val),
            test: fingerprint(&self.test),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFingerprints {
    pub train: String,
    pub val: String,
    pub test: String,
}

/// SHA-256 over the record ids in order, as lowercase hex (first 16 bytes).
pub fn fingerprint(records: &[RawRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(r.id.as_bytes());
        h.update([0u8]);
    }
    h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
}

fn floor_mul(n: usize, f: Fraction) -> usize {
    (Ratio::from_integer(n as u64) * f).floor().to_integer() as usize
}

/// Split sizes: floor for val and test, the remainder goes to train.
fn split_sizes(n: usize, spec: &SplitSpec) -> [usize; 3] {
    let val = floor_mul(n, spec.val);
    let test = floor_mul(n, spec.test);
    [n - val - test, val, test]
}

/// Partitions `records` into train/val/test.
///
/// Deterministic for a fixed seed. Each split preserves corpus order. With
/// `stratified`, every label's count in every split is within one record of
/// `n_label · split_size / n`, its global proportion applied to the split.
pub fn split(records: &[RawRecord], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    if records.is_empty() {
        return Err(Error::Split("no records to split".into()));
    }
    let sizes = split_sizes(records.len(), spec);
    if sizes[0] == 0 {
        return Err(Error::Split(format!(
            "train split would be empty (sizes {}/{}/{})",
            sizes[0], sizes[1], sizes[2]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut assign = vec![0usize; records.len()];

    if spec.stratified {
        let n_groups = records.iter().map(|r| r.label_id).max().unwrap_or(0) + 1;
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
        for (i, r) in records.iter().enumerate() {
            groups[r.label_id].push(i);
        }
        let group_sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        // Target each split's realized share, so row and column sums are exact.
        let n = records.len() as u64;
        let shares = sizes.map(|s| Ratio::new(s as u64, n));
        let alloc = allocate_stratified(&group_sizes, &shares, sizes);
        for (g, members) in groups.iter_mut().enumerate() {
            members.shuffle(&mut rng);
            let [_, val, test] = alloc[g];
            for (k, &idx) in members.iter().enumerate() {
                assign[idx] = if k < val {
                    1
                } else if k < val + test {
                    2
                } else {
                    0
                };
            }
        }
    } else {
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.shuffle(&mut rng);
        for (k, &idx) in order.iter().enumerate() {
            assign[idx] = if k < sizes[1] {
                1
            } else if k < sizes[1] + sizes[2] {
                2
            } else {
                0
            };
        }
    }

    let mut out = Split::default();
    for (r, &a) in records.iter().zip(&assign) {
        match a {
            0 => out.train.push(r.clone()),
            1 => out.val.push(r.clone()),
            _ => out.test.push(r.clone()),
        }
    }
    Ok(out)
}

/// Rounds the per-group ideal counts `n_g * f_s` to integers so that every
/// row sums to its group size and every column to `totals`.
///
/// Starts from the floors and places the leftover units with a max-flow over
/// (group, split) cells, each cell taking at most one extra unit. Cells with
/// the largest fractional remainder are tried first.
fn allocate_stratified(group_sizes: &[usize], fracs: &[Fraction; 3], totals: [usize; 3]) -> Vec<[usize; 3]> {
    let g_n = group_sizes.len();
    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(g_n);
    let mut remainders: Vec<[Fraction; 3]> = Vec::with_capacity(g_n);
    for &n in group_sizes {
        let mut row = [0usize; 3];
        let mut rem = [Ratio::zero(); 3];
        for s in 0..3 {
            let ideal = Ratio::from_integer(n as u64) * fracs[s];
            row[s] = ideal.floor().to_integer() as usize;
            rem[s] = ideal.fract();
        }
        alloc.push(row);
        remainders.push(rem);
    }
    let row_need: Vec<usize> = alloc
        .iter()
        .zip(group_sizes)
        .map(|(row, &n)| n - row.iter().sum::<usize>())
        .collect();
    let col_need: Vec<usize> = (0..3)
        .map(|s| totals[s] - alloc.iter().map(|r| r[s]).sum::<usize>())
        .collect();

    // Node layout: 0 = source, 1..=g_n groups, g_n+1..=g_n+3 splits, g_n+4 sink.
    let n_nodes = g_n + 5;
    let sink = g_n + 4;
    let mut cap = vec![vec![0i64; n_nodes]; n_nodes];
    for g in 0..g_n {
        cap[0][1 + g] = row_need[g] as i64;
    }
    for s in 0..3 {
        cap[g_n + 1 + s][sink] = col_need[s] as i64;
    }
    // Neighbour order per group: splits by descending remainder.
    let order: Vec<[usize; 3]> = remainders
        .iter()
        .map(|rem| {
            let mut idx = [0usize, 1, 2];
            idx.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let total: i64 = row_need.iter().sum::<usize>() as i64;
    let mut placed = 0;
    // A second extra unit per cell is only granted when one is not enough.
    for _ in 0..2 {
        for g in 0..g_n {
            for s in 0..3 {
                cap[1 + g][g_n + 1 + s] += 1;
            }
        }
        placed += max_flow(&mut cap, &order, g_n, sink);
        if placed >= total {
            break;
        }
    }
    for g in 0..g_n {
        for s in 0..3 {
            alloc[g][s] += cap[g_n + 1 + s][1 + g] as usize;
        }
    }
    alloc
}

/// Edmonds-Karp on a dense residual matrix. Group → split edges are explored
/// in `order` so high-remainder cells are preferred.
fn max_flow(cap: &mut [Vec<i64>], order: &[[usize; 3]], g_n: usize, sink: usize) -> i64 {
    let n = cap.len();
    let mut flow = 0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            if u == sink {
                break;
            }
            let neighbours: Vec<usize> = if (1..=g_n).contains(&u) {
                let mut v: Vec<usize> = order[u - 1].iter().map(|&s| g_n + 1 + s).collect();
                v.push(0);
                v
            } else {
                (0..n).collect()
            };
            for v in neighbours {
                if prev[v] == usize::MAX && cap[u][v] > 0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[sink] == usize::MAX {
            return flow;
        }
        let mut v = sink;
        while v != 0 {
            let u = prev[v];
            cap[u][v] -= 1;
            cap[v][u] += 1;
            v = u;
        }
        flow += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub labels: Vec<String>,
    pub counts: Vec<usize>,
    pub total: usize,
}

pub fn class_stats(records: &[RawRecord], labels: &LabelSet) -> ClassStats {
    let mut counts = vec![0usize; labels.len()];
    for r in records {
        counts[r.label_id] += 1;
    }
    ClassStats {
        labels: labels.names().to_vec(),
        total: counts.iter().sum(),
        counts,
    }
}

impl ClassStats {
    /// Whether the per-label counts equal the published category counts.
    pub fn matches_published(&self) -> bool {
        self.labels.iter().map(String::as_str).eq(DEFAULT_LABELS) && self.counts == PUBLISHED_CLASS_COUNTS
    }

    /// Warnings comparing these counts with the published dataset figures.
    pub fn published_warnings(&self) -> Vec<String> {
        let fig_sum: usize = PUBLISHED_CLASS_COUNTS.iter().sum();
        let mut out = Vec::new();
        if self.matches_published() {
            out.push(format!(
                "per-category counts match the published distribution, which sums to {fig_sum} \
                 while the stated dataset size is {PUBLISHED_STATED_TOTAL} (difference {})",
                fig_sum - PUBLISHED_STATED_TOTAL
            ));
        } else if self.total == PUBLISHED_STATED_TOTAL || self.total == fig_sum {
            out.push(format!(
                "total {} matches one published figure; published category counts sum to {fig_sum}, \
                 stated size is {PUBLISHED_STATED_TOTAL}",
                self.total
            ));
        }
        out
    }

    pub fn fraction(&self, label_id: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        (Ratio::new(self.counts[label_id] as u64, self.total as u64))
            .to_f64()
            .unwrap_or(0.0)
    }
}
