use serde::{Deserialize, Serialize};

use super::{evaluate, train, TrainConfig, TrainHistory};
use crate::corpus::SplitFingerprints;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{EnsembleModel, ModelConfig, ModelKind, SingleModel};
use crate::pairseq::Order;
use crate::pipeline::Prepared;

pub const COMPARISON_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub kind: ModelKind,
    /// Layout read by a single-branch model.
    pub order: Option<Order>,
    pub fingerprints: SplitFingerprints,
    pub history: TrainHistory,
    pub test: MetricsReport,
}

/// `ensemble − single` for each headline metric and per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub accuracy: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
}

impl Deltas {
    pub fn between(single: &MetricsReport, ensemble: &MetricsReport) -> Self {
        let per = |f: fn(&crate::metrics::ClassMetrics) -> f64| {
            ensemble
                .per_class
                .iter()
                .zip(&single.per_class)
                .map(|(e, s)| f(e) - f(s))
                .collect()
        };
        Self {
            accuracy: ensemble.accuracy - single.accuracy,
            micro_f1: ensemble.micro_f1 - single.micro_f1,
            macro_f1: ensemble.macro_f1 - single.macro_f1,
            weighted_f1: ensemble.weighted_f1 - single.weighted_f1,
            per_class_precision: per(|c| c.precision),
            per_class_recall: per(|c| c.recall),
            per_class_f1: per(|c| c.f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub single: ArmReport,
    pub ensemble: ArmReport,
    pub deltas: Deltas,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        if r.schema_version != COMPARISON_SCHEMA_VERSION {
            return Err(Error::Metrics(format!("unsupported comparison schema {}", r.schema_version)));
        }
        Ok(r)
    }
}

/// Trains a text-first single-branch model and the ensemble on the same
/// splits with the same seeds, and reports both on the test split. Falls
/// back to the validation split, then the training split, when the test
/// split is empty.
pub fn compare(data: &Prepared, model_cfg: &ModelConfig, train_cfg: &TrainConfig) -> Result<ComparisonReport> {
    let eval_set = [&data.test, &data.val, &data.train]
        .into_iter()
        .find(|s| !s.is_empty())
        .ok_or_else(|| Error::Model("no data to compare on".into()))?;
    let labels = data.labels.names();

    let mut single = SingleModel::<f32>::new(model_cfg.clone(), Order::TextFirst)?;
    let single_history = train(&mut single, &data.train, &data.val, train_cfg)?;
    let single_test = evaluate(&single, eval_set, labels)?;

    let mut ensemble = EnsembleModel::<f32>::new(model_cfg.clone())?;
    let ensemble_history = train(&mut ensemble, &data.train, &data.val, train_cfg)?;
    let ensemble_test = evaluate(&ensemble, eval_set, labels)?;

    let deltas = Deltas::between(&single_test, &ensemble_test);
    Ok(ComparisonReport {
        schema_version: COMPARISON_SCHEMA_VERSION,
        model: model_cfg.clone(),
        train: train_cfg.clone(),
        single: ArmReport {
            kind: ModelKind::Single,
            order: Some(Order::TextFirst),
            fingerprints: data.fingerprints.clone(),
            history: single_history,
            test: single_test,
        },
        ensemble: ArmReport {
            kind: ModelKind::Ensemble,
            order: None,
            fingerprints: data.fingerprints.clone(),
            history: ensemble_history,
            test: ensemble_test,
        },
        deltas,
    })
}
