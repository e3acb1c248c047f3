//! Confusion matrices and classification metrics.
//!
//! Every metric is computed as an exact rational and converted to `f64` only
//! in [`MetricsReport`]. A ratio whose denominator is zero is defined as 0.

use num::{BigInt, BigRational, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// `counts[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|r| r.len() != n) {
            return Err(Error::Metrics("confusion matrix must be square".into()));
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn tp(&self, i: usize) -> u64 {
        self.counts[i][i]
    }

    pub fn fp(&self, i: usize) -> u64 {
        self.counts.iter().map(|r| r[i]).sum::<u64>() - self.tp(i)
    }

    pub fn fn_(&self, i: usize) -> u64 {
        self.counts[i].iter().sum::<u64>() - self.tp(i)
    }

    pub fn tn(&self, i: usize) -> u64 {
        self.total() - self.tp(i) - self.fp(i) - self.fn_(i)
    }

    /// Gold instances of class `i`.
    pub fn support(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    /// Relabels classes: new class `k` is old class `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            counts: perm.iter().map(|&a| perm.iter().map(|&p| self.counts[a][p]).collect()).collect(),
        }
    }
}

pub fn confusion(golds: &[usize], preds: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::Metrics(format!(
            "{} gold labels but {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(n_classes);
    for (&g, &p) in golds.iter().zip(preds) {
        if g >= n_classes || p >= n_classes {
            return Err(Error::Metrics(format!(
                "label id {} out of range for {n_classes} classes",
                g.max(p)
            )));
        }
        cm.counts[g][p] += 1;
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> BigRational {
    if den == 0 {
        BigRational::zero()
    } else {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
}

fn harmonic(p: &BigRational, r: &BigRational) -> BigRational {
    let sum = p + r;
    if sum.is_zero() {
        BigRational::zero()
    } else {
        BigRational::from_integer(BigInt::from(2)) * p * r / sum
    }
}

fn mean(values: impl Iterator<Item = BigRational>, n: usize) -> BigRational {
    if n == 0 {
        return BigRational::zero();
    }
    values.fold(BigRational::zero(), |a, b| a + b) / BigRational::from_integer(BigInt::from(n))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactClassMetrics {
    pub precision: BigRational,
    pub recall: BigRational,
    pub f1: BigRational,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactReport {
    pub per_class: Vec<ExactClassMetrics>,
    pub accuracy: BigRational,
    pub macro_precision: BigRational,
    pub macro_recall: BigRational,
    pub macro_f1: BigRational,
    pub micro_f1: BigRational,
    pub weighted_precision: BigRational,
    pub weighted_recall: BigRational,
    pub weighted_f1: BigRational,
    pub total: u64,
}

pub fn per_class_exact(cm: &ConfusionMatrix) -> Vec<ExactClassMetrics> {
    (0..cm.n_classes())
        .map(|i| {
            let tp = cm.tp(i);
            let precision = ratio(tp, tp + cm.fp(i));
            let recall = ratio(tp, tp + cm.fn_(i));
            let f1 = harmonic(&precision, &recall);
            ExactClassMetrics {
                precision,
                recall,
                f1,
                support: cm.support(i),
            }
        })
        .collect()
}

pub fn aggregate_exact(cm: &ConfusionMatrix) -> Result<ExactReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Metrics("cannot aggregate an empty confusion matrix".into()));
    }
    let n = cm.n_classes();
    let per_class = per_class_exact(cm);
    let diag: u64 = (0..n).map(|i| cm.tp(i)).sum();
    let sum_fp: u64 = (0..n).map(|i| cm.fp(i)).sum();
    let sum_fn: u64 = (0..n).map(|i| cm.fn_(i)).sum();
    // ΣTP / (ΣTP + ½(ΣFN + ΣFP)), scaled by 2 to stay in integers
    let micro_f1 = ratio(2 * diag, 2 * diag + sum_fn + sum_fp);
    let weighted = |f: fn(&ExactClassMetrics) -> &BigRational| {
        per_class
            .iter()
            .map(|c| ratio(c.support, total) * f(c))
            .fold(BigRational::zero(), |a, b| a + b)
    };
    Ok(ExactReport {
        accuracy: ratio(diag, total),
        macro_precision: mean(per_class.iter().map(|c| c.precision.clone()), n),
        macro_recall: mean(per_class.iter().map(|c| c.recall.clone()), n),
        macro_f1: mean(per_class.iter().map(|c| c.f1.clone()), n),
        micro_f1,
        weighted_precision: weighted(|c| &c.precision),
        weighted_recall: weighted(|c| &c.recall),
        weighted_f1: weighted(|c| &c.f1),
        per_class,
        total,
    })
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub n_classes: usize,
    pub total: u64,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub confusion: ConfusionMatrix,
}

/// Per-class precision, recall, F1 and support as `f64`.
pub fn per_class(cm: &ConfusionMatrix, labels: &[String]) -> Vec<ClassMetrics> {
    per_class_exact(cm)
        .iter()
        .enumerate()
        .map(|(i, c)| ClassMetrics {
            label: labels.get(i).cloned().unwrap_or_else(|| i.to_string()),
            precision: to_f64(&c.precision),
            recall: to_f64(&c.recall),
            f1: to_f64(&c.f1),
            support: c.support,
        })
        .collect()
}

/// Full report for `cm`. `labels` names the classes in id order; missing
/// names fall back to the id.
pub fn aggregate(cm: &ConfusionMatrix, labels: &[String]) -> Result<MetricsReport> {
    let e = aggregate_exact(cm)?;
    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n_classes: cm.n_classes(),
        total: e.total,
        per_class: per_class(cm, labels),
        accuracy: to_f64(&e.accuracy),
        macro_precision: to_f64(&e.macro_precision),
        macro_recall: to_f64(&e.macro_recall),
        macro_f1: to_f64(&e.macro_f1),
        micro_f1: to_f64(&e.micro_f1),
        weighted_precision: to_f64(&e.weighted_precision),
        weighted_recall: to_f64(&e.weighted_recall),
        weighted_f1: to_f64(&e.weighted_f1),
        confusion: cm.clone(),
    })
}

/// `0.875` → `"87.50"`.
pub fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Fixed-width table: one row per class, then macro and weighted averages,
/// then overall accuracy and micro F1. Values are percentages.
pub fn render_table(r: &MetricsReport) -> String {
    let width = r
        .per_class
        .iter()
        .map(|c| c.label.chars().count())
        .chain(["Overall Accuracy".len()])
        .max()
        .unwrap_or(0);
    let cell = |v: f64| format!("{}%", pct(v));
    let mut out = format!(
        "{:<width$}  {:>10}  {:>10}  {:>10}  {:>8}\n",
        "Class", "Precision", "Recall", "F1-Score", "Support"
    );
    for c in &r.per_class {
        out.push_str(&format!(
            "{:<width$}  {:>10}  {:>10}  {:>10}  {:>8}\n",
            c.label,
            cell(c.precision),
            cell(c.recall),
            cell(c.f1),
            c.support
        ));
    }
    for (name, p, rc, f) in [
        ("Macro Avg", r.macro_precision, r.macro_recall, r.macro_f1),
        ("Weighted Avg", r.weighted_precision, r.weighted_recall, r.weighted_f1),
    ] {
        out.push_str(&format!(
            "{name:<width$}  {:>10}  {:>10}  {:>10}  {:>8}\n",
            cell(p),
            cell(rc),
            cell(f),
            r.total
        ));
    }
    out.push_str(&format!("{:<width$}  {:>10}\n", "Overall Accuracy", cell(r.accuracy)));
    out.push_str(&format!("{:<width$}  {:>10}\n", "Micro F1-Score", cell(r.micro_f1)));
    out
}

pub fn render_json(r: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report_json(s: &str) -> Result<MetricsReport> {
    let r: MetricsReport = serde_json::from_str(s)?;
    if r.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Metrics(format!("unsupported report schema {}", r.schema_version)));
    }
    Ok(r)
}

/// Header of predicted labels, then one row per actual label.
pub fn render_confusion_csv(cm: &ConfusionMatrix, labels: &[String]) -> String {
    let name = |i: usize| labels.get(i).cloned().unwrap_or_else(|| i.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["actual\\predicted".to_owned()];
    header.extend((0..cm.n_classes()).map(name));
    w.write_record(&header).expect("in-memory write");
    for (i, row) in cm.counts().iter().enumerate() {
        let mut rec = vec![name(i)];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::One;

    fn one() -> BigRational {
        BigRational::one()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn worked() -> ConfusionMatrix {
        ConfusionMatrix::from_counts(vec![vec![2, 1, 0], vec![0, 3, 1], vec![1, 0, 2]]).unwrap()
    }

    #[test]
    fn worked_example() {
        let r = aggregate_exact(&worked()).unwrap();
        assert_eq!(r.accuracy, q(7, 10));
        assert_eq!(r.micro_f1, q(7, 10));
        assert_eq!(r.macro_f1, q(25, 36));
        assert_eq!(r.weighted_f1, q(7, 10));
        let want = [q(2, 3), q(3, 4), q(2, 3)];
        for (c, w) in r.per_class.iter().zip(&want) {
            assert_eq!((&c.precision, &c.recall, &c.f1), (w, w, w));
        }
        let supports: Vec<u64> = r.per_class.iter().map(|c| c.support).collect();
        assert_eq!(supports, [3, 4, 3]);
    }

    #[test]
    fn confusion_counts() {
        let cm = confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(confusion(&[], &[], 3).unwrap(), ConfusionMatrix::zeros(3));
        assert!(confusion(&[0], &[], 3).is_err());
        assert!(confusion(&[3], &[0], 3).is_err());
    }

    #[test]
    fn empty_matrix_cannot_be_aggregated() {
        assert!(aggregate_exact(&ConfusionMatrix::zeros(4)).is_err());
    }

    #[test]
    fn absent_class_scores_zero() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 0], vec![0, 0]]).unwrap();
        let pc = per_class_exact(&cm);
        assert!(pc[1].precision.is_zero() && pc[1].recall.is_zero() && pc[1].f1.is_zero());
        assert_eq!(pc[0].f1, one());
    }

    #[test]
    fn perfect_diagonal() {
        let cm = confusion(&[0, 1, 1, 2], &[0, 1, 1, 2], 3).unwrap();
        let r = aggregate_exact(&cm).unwrap();
        for v in [&r.accuracy, &r.macro_f1, &r.micro_f1, &r.weighted_f1, &r.macro_precision] {
            assert_eq!(v, &one());
        }
    }

    #[test]
    fn tn_completes_the_partition() {
        let cm = worked();
        for i in 0..3 {
            assert_eq!(cm.tp(i) + cm.fp(i) + cm.fn_(i) + cm.tn(i), 10);
        }
        assert_eq!((cm.tp(1), cm.fp(1), cm.fn_(1), cm.tn(1)), (3, 1, 1, 5));
    }

    #[test]
    fn percent_format() {
        assert_eq!(pct(0.875), "87.50");
        assert_eq!(pct(25.0 / 36.0), "69.44");
    }

    fn labels() -> Vec<String> {
        ["Disease", "Organ", "Hormone"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn table_shape() {
        let r = aggregate(&worked(), &labels()).unwrap();
        let t = render_table(&r);
        assert_eq!(t.lines().count(), 1 + 3 + 2 + 2);
        assert!(t.contains("69.44%"));
        assert!(t.lines().nth(2).unwrap().starts_with("Organ"));
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let r = aggregate(&worked(), &labels()).unwrap();
        let s = render_json(&r);
        assert_eq!(render_json(&parse_report_json(&s).unwrap()), s);
    }

    #[test]
    fn csv_has_header_and_one_row_per_class() {
        let names: Vec<String> = vec!["Medicine/Chemical Name".into(), "Disease, other".into(), "Organ".into()];
        let csv = render_confusion_csv(&worked(), &names);
        let mut rdr = csv::Reader::from_reader(csv.as_bytes());
        assert_eq!(rdr.headers().unwrap().len(), 4);
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].iter().skip(1).collect::<Vec<_>>(), ["0", "3", "1"]);
        assert_eq!(&rows[1][0], "Disease, other");
    }
}
