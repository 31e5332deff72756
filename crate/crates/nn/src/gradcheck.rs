//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::param::ParamStore;

/// Relative errors use `max(|analytic|, |numeric|, REL_FLOOR)` as the
/// denominator so that gradients that are zero up to rounding do not blow up.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat element index of the worst disagreement.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares analytic gradients against `(f(θ+h) − f(θ−h)) / 2h` for every
/// trainable element (or at most `max_per_param` evenly spaced elements of
/// each array). `build` must construct a scalar-valued graph from the store.
pub fn finite_diff_check<F>(
    store: &ParamStore,
    h: f64,
    max_per_param: Option<usize>,
    mut build: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let root = build(store, &mut g)?;
    let grads = g.backward(root);
    let mut analytic = store.clone();
    analytic.zero_grad();
    g.accumulate_param_grads(&grads, &mut analytic);

    let mut probe = store.clone();
    let mut eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let root = build(s, &mut g)?;
        Ok(g.value(root).data()[0])
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in store.ids() {
        let entry = store.entry(id);
        if !entry.kind.is_trainable() {
            continue;
        }
        let len = entry.param.value.len();
        let step = match max_per_param {
            Some(k) if k > 0 && len > k => len.div_ceil(k),
            _ => 1,
        };
        for idx in (0..len).step_by(step) {
            let orig = store.value(id).data()[idx];
            probe.param_mut(id).value.data_mut()[idx] = orig + h;
            let plus = eval(&probe)?;
            probe.param_mut(id).value.data_mut()[idx] = orig - h;
            let minus = eval(&probe)?;
            probe.param_mut(id).value.data_mut()[idx] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.param(id).grad.data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = Some((entry.name.clone(), idx));
                }
            }
        }
    }
    Ok(report)
}
