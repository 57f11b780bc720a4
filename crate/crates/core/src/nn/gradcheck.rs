//! Central finite-difference gradient checker.
//!
//! Evaluates the forward closure only; never touches the backward pass of
//! the code under test.

use super::matrix::Matrix;
use super::params::{ParamGrads, ParamStore};
use super::tape::{Tape, Var};

/// Denominator floor of the relative error, so that gradients that are
/// numerically zero are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

impl GradCheckReport {
    fn record(&mut self, what: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        self.checked += 1;
        if rel > self.max_rel_error || self.checked == 1 {
            self.max_rel_error = rel;
            self.worst = format!("{} analytic={analytic:e} numeric={numeric:e}", what());
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
    }
}

/// Picks up to `limit` spread-out coordinates of an `n`-entry tensor.
fn coordinates(n: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(k) if k < n => (0..k).map(|i| (i * n) / k + (n / k) / 2).map(|i| i.min(n - 1)).collect(),
        _ => (0..n).collect(),
    }
}

/// Checks the gradient of the scalar built by `forward` with respect to the
/// parameters in `store`, at most `per_param` entries per tensor.
pub fn check_params(
    store: &mut ParamStore,
    per_param: Option<usize>,
    step: f64,
    forward: impl Fn(&ParamStore, &mut Tape) -> Var,
) -> GradCheckReport {
    let mut tape = Tape::new();
    let root = forward(store, &mut tape);
    let grads = tape.backward(root);
    let mut analytic = ParamGrads::zeros_like(store);
    tape.accumulate_param_grads(&grads, &mut analytic);

    let eval = |store: &ParamStore| {
        let mut t = Tape::new();
        let r = forward(store, &mut t);
        t.scalar(r)
    };
    let mut report = GradCheckReport::default();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.value(id).data().len();
        for k in coordinates(n, per_param) {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + step;
            let plus = eval(store);
            store.value_mut(id).data_mut()[k] = orig - step;
            let minus = eval(store);
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(id).data()[k];
            report.record(|| format!("{}[{k}]", store.name(id)), a, numeric);
        }
    }
    report
}

/// Checks the gradient with respect to constant inputs.
pub fn check_inputs(
    inputs: &[Matrix],
    step: f64,
    forward: impl Fn(&mut Tape, &[Var]) -> Var,
) -> GradCheckReport {
    let run = |inputs: &[Matrix]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
        let root = forward(&mut tape, &vars);
        (tape, vars, root)
    };
    let (tape, vars, root) = run(inputs);
    let grads = tape.backward(root);
    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let zero = Matrix::zeros(inputs[i].rows(), inputs[i].cols());
        let g = grads.wrt(*v).unwrap_or(&zero).clone();
        for k in 0..inputs[i].data().len() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + step;
            let (t, _, r) = run(&work);
            let plus = t.scalar(r);
            work[i].data_mut()[k] = orig - step;
            let (t, _, r) = run(&work);
            let minus = t.scalar(r);
            work[i].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            report.record(|| format!("input{i}[{k}]"), g.data()[k], numeric);
        }
    }
    report
}
