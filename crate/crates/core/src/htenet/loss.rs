use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::model::{DoseInput, UniMvt};
use crate::datagen::{features_of, Sample};
use crate::dcr::orth_penalty;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tape, Var};

/// Term weights of the joint objective. `l1`/`l2` weight the absolute and
/// squared intensity errors inside the intensity loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub base: f64,
    pub treat: f64,
    pub t: f64,
    pub x: f64,
    pub o: f64,
    pub l1: f64,
    pub l2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            base: 1.0,
            treat: 1.0,
            t: 0.1,
            x: 0.5,
            o: 1e-4,
            l1: 1.0,
            l2: 1.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            base: 0.0,
            treat: 0.0,
            t: 0.0,
            x: 0.0,
            o: 0.0,
            l1: 0.0,
            l2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.base, self.treat, self.t, self.x, self.o, self.l1, self.l2];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::config(format!("loss weights must be finite and nonnegative: {self:?}")));
        }
        Ok(())
    }
}

/// Unweighted loss terms of one batch (sums over the relevant rows).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub base: f64,
    pub treat: f64,
    pub t: f64,
    pub x_treat: f64,
    pub x_base: f64,
    pub orth: f64,
}

impl LossComponents {
    pub fn x(&self) -> f64 {
        self.x_treat + self.x_base
    }

    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.base * self.base + w.treat * self.treat + w.t * self.t + w.x * self.x() + w.o * self.orth
    }
}

/// Which optional terms are active.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// `false` removes the counterfactual terms entirely.
    pub xnet: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            xnet: true,
        }
    }
}

/// Build the weighted joint objective for `batch` on `tape`.
///
/// Control rows feed the base cross-entropy and the base-side counterfactual
/// term (treatment tower evaluated at the imputed intensity). Treated rows
/// feed the treatment cross-entropy (observed intensity), the intensity
/// regression and the treatment-side counterfactual term.
pub fn joint_loss(
    model: &UniMvt,
    store: &ParamStore,
    batch: &[Sample],
    loss: &LossConfig,
    tape: &mut Tape,
) -> Result<(Var, LossComponents)> {
    if batch.is_empty() {
        return Err(Error::usage("joint loss on an empty batch"));
    }
    let w = &loss.weights;
    let x = features_of(batch.iter());
    let y = Array2::from_shape_fn((batch.len(), 1), |(i, _)| f64::from(u8::from(batch[i].y)));
    let treated: Array1<f64> = batch.iter().map(|s| f64::from(u8::from(s.w))).collect();
    let control = treated.mapv(|v| 1.0 - v);
    let t_obs: Array1<f64> = batch.iter().map(|s| s.t).collect();

    let out = model.forward_with(
        store,
        tape,
        x,
        &DoseInput::Mixed {
            t: t_obs.clone(),
            treated: treated.clone(),
        },
    )?;

    let masked_sum = |tape: &mut Tape, v: Var, mask: &Array1<f64>| -> Result<Var> {
        let m = tape.scale_rows(v, mask.clone())?;
        Ok(tape.sum(m))
    };
    let zero = |tape: &mut Tape| tape.constant(Array2::zeros((1, 1)));

    let bce0 = tape.bce(out.p0, y.clone())?;
    let l_base = masked_sum(tape, bce0, &control)?;

    let l_treat = match out.pt {
        Some(pt) => {
            let bce = tape.bce(pt, y.clone())?;
            masked_sum(tape, bce, &treated)?
        }
        None => zero(tape),
    };

    let t_col = tape.constant(t_obs.insert_axis(Axis(1)));
    let diff = tape.sub(t_col, out.t_hat)?;
    let sq = tape.square(diff);
    let ab = tape.abs(diff);
    let sq = masked_sum(tape, sq, &treated)?;
    let ab = masked_sum(tape, ab, &treated)?;
    let sq = tape.affine(sq, w.l1, 0.0);
    let ab = tape.affine(ab, w.l2, 0.0);
    let l_t = tape.add(sq, ab)?;

    let (l_xt, l_xb) = if loss.xnet {
        let y_v = tape.constant(y);
        let tau = tape.mul(out.t_hat, out.eta)?;
        let base_logit = tape.logit(out.p0);
        let shifted = tape.add(base_logit, tau)?;
        let p_treat_cf = tape.sigmoid(shifted);
        let r = tape.sub(y_v, p_treat_cf)?;
        let r = tape.square(r);
        let l_xt = masked_sum(tape, r, &treated)?;

        let pt = out.pt.unwrap_or(p_treat_cf);
        let treat_logit = tape.logit(pt);
        let shifted = tape.sub(treat_logit, tau)?;
        let p_base_cf = tape.sigmoid(shifted);
        let r = tape.sub(y_v, p_base_cf)?;
        let r = tape.square(r);
        let l_xb = masked_sum(tape, r, &control)?;
        (l_xt, l_xb)
    } else {
        (zero(tape), zero(tape))
    };

    let orth = orth_penalty(&model.dcr, store, tape)?;

    let components = LossComponents {
        base: tape.scalar(l_base),
        treat: tape.scalar(l_treat),
        t: tape.scalar(l_t),
        x_treat: tape.scalar(l_xt),
        x_base: tape.scalar(l_xb),
        orth: tape.scalar(orth),
    };

    let l_x = tape.add(l_xt, l_xb)?;
    let mut total = tape.affine(l_base, w.base, 0.0);
    for (term, weight) in [(l_treat, w.treat), (l_t, w.t), (l_x, w.x), (orth, w.o)] {
        let scaled = tape.affine(term, weight, 0.0);
        total = tape.add(total, scaled)?;
    }
    Ok((total, components))
}
