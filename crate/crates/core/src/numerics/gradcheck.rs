//! Central finite-difference verification of tape gradients.

use ndarray::Array2;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Result of comparing analytic and numeric gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Analytic gradient of the scalar produced by `loss`, one array per tensor.
pub fn analytic_gradient<F>(store: &mut ParamStore, loss: &mut F) -> Result<Vec<Array2<f64>>>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let root = loss(store, &mut tape)?;
    tape.backward(root, 1.0, store)?;
    let grads = store.iter().map(|t| t.grad.clone()).collect();
    store.zero_grads();
    Ok(grads)
}

/// Central differences `(f(w+eps) - f(w-eps)) / 2eps` for every scalar entry.
/// Stop-gradient outputs are held at their unperturbed values.
pub fn numeric_gradient<F>(store: &mut ParamStore, eps: f64, loss: &mut F) -> Result<Vec<Array2<f64>>>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    let stops = {
        let mut tape = Tape::new();
        loss(store, &mut tape)?;
        tape.stop_values()
    };
    let mut eval = |store: &ParamStore| -> Result<(Tape, Var)> {
        let mut tape = Tape::with_frozen_stops(stops.clone());
        let root = loss(store, &mut tape)?;
        Ok((tape, root))
    };
    let ids: Vec<_> = store.ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let shape = store.value(id).raw_dim();
        let mut g = Array2::zeros(shape);
        for k in 0..g.len() {
            let orig = store.get(id).value.as_slice().expect("standard layout")[k];
            let (hi, lo) = (orig + eps, orig - eps);
            store.get_mut(id).value.as_slice_mut().expect("standard layout")[k] = hi;
            let (plus, root) = eval(store)?;
            store.get_mut(id).value.as_slice_mut().expect("standard layout")[k] = lo;
            let (minus, _) = eval(store)?;
            store.get_mut(id).value.as_slice_mut().expect("standard layout")[k] = orig;
            let delta = Tape::difference(&plus, &minus, root)[[0, 0]];
            g.as_slice_mut().expect("standard layout")[k] = delta / (hi - lo);
        }
        out.push(g);
    }
    Ok(out)
}

pub fn compare(store: &ParamStore, analytic: &[Array2<f64>], numeric: &[Array2<f64>]) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for ((t, a), n) in store.iter().zip(analytic).zip(numeric) {
        for (k, (&av, &nv)) in a.iter().zip(n.iter()).enumerate() {
            let err = relative_error(av, nv);
            report.entries_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((t.name.clone(), k));
            }
        }
    }
    report
}

/// Compare tape gradients of `loss` against central differences with step
/// `eps` over every parameter entry in `store`.
pub fn finite_diff_check<F>(store: &mut ParamStore, eps: f64, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let analytic = analytic_gradient(store, &mut loss)?;
    let numeric = numeric_gradient(store, eps, &mut loss)?;
    Ok(compare(store, &analytic, &numeric))
}
