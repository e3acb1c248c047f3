use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};

/// Lower bound on the denominator of the relative error, so that two
/// near-zero gradients do not produce a large ratio.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }

    pub fn require(&self, tolerance: f64) -> Result<()> {
        if self.passes(tolerance) {
            Ok(())
        } else {
            Err(Error::GradCheck {
                max_rel_err: self.max_rel_err,
                tolerance,
            })
        }
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_FLOOR)
}

/// Compares back-propagated gradients against central differences.
///
/// `build` constructs a fresh graph over the given parameters and returns the
/// scalar loss node. With `sample_per_tensor = Some(k)` only `k` evenly spaced
/// entries of each tensor are perturbed.
pub fn grad_check<F>(store: &ParamStore<f64>, build: F, h: f64, sample_per_tensor: Option<usize>) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore<f64>) -> Result<(Graph<f64>, NodeId)>,
{
    let (g, loss) = build(store)?;
    let grads = g.backward(loss, store.len())?;
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let (g, l) = build(s)?;
        Ok(g.value(l).data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = store.clone();
    for id in store.ids() {
        let n = store.get(id).len();
        let indices: Vec<usize> = match sample_per_tensor {
            Some(k) if k < n => (0..k).map(|i| i * n / k).collect(),
            _ => (0..n).collect(),
        };
        for i in indices {
            let orig = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + h;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - h;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |t| t.data()[i]);
            let err = rel_err(analytic, numeric);
            report.checked += 1;
            if report.checked == 1 || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = store.name(id).to_owned();
                report.worst_index = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
