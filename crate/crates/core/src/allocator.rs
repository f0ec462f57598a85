//! Coupon decisions: sweep a grid of candidate intensities, score net gain
//! and uplift-to-cost ratio, then issue the best coupon or withhold.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::htenet::Prediction;
use crate::numerics::{logit, sigmoid, PROB_EPS};

/// How a predicted unit uplift turns into a click probability at dose `q`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulateMode {
    /// `min(p0 + eta * q, 1 - 1e-7)`
    Additive,
    /// `sigmoid(logit(p0) + eta * q)`
    #[default]
    Logit,
}

impl fmt::Display for SimulateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Additive => "additive",
            Self::Logit => "logit",
        })
    }
}

impl FromStr for SimulateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(Self::Additive),
            "logit" => Ok(Self::Logit),
            other => Err(Error::usage(format!("unknown mode {other:?}, expected additive or logit"))),
        }
    }
}

pub fn simulate(p0: f64, eta: f64, q: f64, mode: SimulateMode) -> f64 {
    match mode {
        SimulateMode::Additive => (p0 + eta * q).min(1.0 - PROB_EPS),
        SimulateMode::Logit => sigmoid(logit(p0) + eta * q),
    }
}

/// Candidate intensities `q_min, q_min + step, ...` up to `q_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub step: f64,
}

impl AllocationGrid {
    pub fn new(q_min: f64, q_max: f64, step: f64) -> Result<Self> {
        if !(q_min > 0.0 && q_min <= q_max && step > 0.0 && q_max.is_finite()) {
            return Err(Error::config(format!(
                "grid needs 0 < q_min <= q_max and step > 0, got {q_min}:{q_max}:{step}"
            )));
        }
        Ok(Self { q_min, q_max, step })
    }

    /// Grid points; `q_max` itself is included when the step lands on it.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.q_max - self.q_min) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.q_min + i as f64 * self.step).collect()
    }
}

impl FromStr for AllocationGrid {
    type Err = Error;

    /// `qmin:qmax:step`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let nums = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::usage(format!("grid {s:?} is not qmin:qmax:step")))?;
        match nums[..] {
            [lo, hi, step] => Self::new(lo, hi, step),
            _ => Err(Error::usage(format!("grid {s:?} is not qmin:qmax:step"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision {
    pub issue: bool,
    /// 0 when withheld.
    pub q_star: f64,
    pub expected_uplift: f64,
    pub ratio: f64,
    pub net_gain: f64,
    pub mode: SimulateMode,
}

impl AllocationDecision {
    fn withhold(mode: SimulateMode) -> Self {
        Self {
            issue: false,
            q_star: 0.0,
            expected_uplift: 0.0,
            ratio: 0.0,
            net_gain: 0.0,
            mode,
        }
    }
}

pub const DECISION_HEADER: &str = "index,issue,q_star,expected_uplift,ratio,net_gain";

/// Pick `q* = argmax value * uplift(q) - q` (ties to the smallest `q`) and
/// issue iff its ratio `value * uplift / q` reaches `threshold` and the net
/// gain is positive. Withheld decisions report zeros.
pub fn decide_scores(
    p0: f64,
    eta: f64,
    grid: &[f64],
    value_per_click: f64,
    threshold: f64,
    mode: SimulateMode,
) -> Result<AllocationDecision> {
    if grid.is_empty() {
        return Err(Error::config("allocation grid is empty"));
    }
    if !(value_per_click > 0.0) {
        return Err(Error::config("value per click must be positive"));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for &q in grid {
        let uplift = simulate(p0, eta, q, mode) - p0;
        let net = value_per_click * uplift - q;
        if best.is_none_or(|(bq, _, b)| net > b || (net == b && q < bq)) {
            best = Some((q, uplift, net));
        }
    }
    let (q, uplift, net) = best.expect("grid is nonempty");
    let ratio = value_per_click * uplift / q;
    if ratio >= threshold && net > 0.0 {
        Ok(AllocationDecision {
            issue: true,
            q_star: q,
            expected_uplift: uplift.max(0.0),
            ratio,
            net_gain: net,
            mode,
        })
    } else {
        Ok(AllocationDecision::withhold(mode))
    }
}

/// Uplift on the scale `mode` expects: the logit shift `eta_hat` for
/// [`SimulateMode::Logit`], the probability gain at intensity 1 for
/// [`SimulateMode::Additive`].
pub fn mode_uplift(prediction: &Prediction, mode: SimulateMode) -> f64 {
    match mode {
        SimulateMode::Logit => prediction.eta_hat,
        SimulateMode::Additive => prediction.unit_uplift(),
    }
}

/// Logit shift equivalent to a probability gain `uplift` over `p0`.
pub fn logit_shift(p0: f64, uplift: f64) -> f64 {
    logit(p0 + uplift) - logit(p0)
}

pub fn decide(
    prediction: &Prediction,
    grid: &AllocationGrid,
    value_per_click: f64,
    threshold: f64,
    mode: SimulateMode,
) -> Result<AllocationDecision> {
    decide_scores(
        prediction.p0_hat,
        mode_uplift(prediction, mode),
        &grid.values(),
        value_per_click,
        threshold,
        mode,
    )
}

pub fn decision_row(index: usize, d: &AllocationDecision) -> String {
    format!(
        "{index},{},{},{},{},{}",
        u8::from(d.issue),
        d.q_star,
        d.expected_uplift,
        d.ratio,
        d.net_gain
    )
}
