use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Sample;
use crate::dcr::{dcr_forward, DcrConfig, DcrOutput, DcrParams};
use crate::error::{Error, Result};
use crate::numerics::{logit, sigmoid, Activation, Dense, Mlp, ParamStore, Tape, Var};

/// Architecture of the full network. Tower and head widths are shared by
/// the base and treatment paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dcr: DcrConfig,
    pub tower_hidden: Vec<usize>,
    pub head_hidden: usize,
    /// `false` drops the treatment tower; counterfactual terms then use the
    /// logit-shifted base prediction in its place.
    pub treat_tower: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dcr: DcrConfig::default(),
            tower_hidden: vec![32, 32],
            head_hidden: 16,
            treat_tower: true,
        }
    }
}

/// Width of the treatment encoding: normalized intensity and its square.
pub const ENCODING_DIM: usize = 2;

/// Treatment attributes fed to the TA-Gates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreatmentEncoding {
    pub e_t: [f64; ENCODING_DIM],
}

impl TreatmentEncoding {
    pub fn new(t: f64, t_min: f64, t_max: f64) -> Self {
        let z = (t - t_min) / (t_max - t_min);
        Self { e_t: [z, z * z] }
    }
}

/// Parameters of the towers, gates and heads on top of the DCR layer.
#[derive(Clone, Debug, PartialEq)]
pub struct HteParams {
    pub base_tower: Mlp,
    pub treat_tower: Option<Mlp>,
    /// One per hidden layer of the treatment tower.
    pub ta_gates: Vec<Dense>,
    pub intensity_head: Mlp,
    pub uplift_head: Mlp,
    pub t_min: f64,
    pub t_max: f64,
}

impl HteParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        config: &ModelConfig,
        input_dim: usize,
        t_min: f64,
        t_max: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
            return Err(Error::config(format!(
                "intensity bounds need 0 < t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        let tower_sizes: Vec<usize> = std::iter::once(input_dim)
            .chain(config.tower_hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let base_tower = Mlp::new(store, "base_tower", &tower_sizes, Activation::Relu, Activation::Sigmoid, rng);
        let (treat_tower, ta_gates) = if config.treat_tower {
            let tower = Mlp::new(store, "treat_tower", &tower_sizes, Activation::Relu, Activation::Sigmoid, rng);
            let gates = config
                .tower_hidden
                .iter()
                .enumerate()
                .map(|(l, &w)| Dense::new(store, &format!("ta_gate.{l}"), ENCODING_DIM, w, Activation::Sigmoid, rng))
                .collect();
            (Some(tower), gates)
        } else {
            (None, Vec::new())
        };
        let head_sizes = [input_dim, config.head_hidden, 1];
        let intensity_head = Mlp::new(store, "intensity_head", &head_sizes, Activation::Relu, Activation::Identity, rng);
        let uplift_head = Mlp::new(store, "uplift_head", &head_sizes, Activation::Relu, Activation::Identity, rng);
        Ok(Self {
            base_tower,
            treat_tower,
            ta_gates,
            intensity_head,
            uplift_head,
            t_min,
            t_max,
        })
    }
}

/// `a = 2 sigmoid(W_g e_t + b_g)`; returns `a * h` elementwise.
pub fn ta_gate(gate: &Dense, store: &ParamStore, e_t: Var, h: Var, tape: &mut Tape) -> Result<Var> {
    let s = gate.forward(store, tape, e_t)?;
    let a = tape.affine(s, 2.0, 0.0);
    tape.mul(a, h)
}

/// `t_hat = sigmoid(MLP(SG(ut))) * (t_max - t_min) + t_min`
pub fn intensity_head(params: &HteParams, store: &ParamStore, ut: Var, tape: &mut Tape) -> Result<Var> {
    if !(params.t_min < params.t_max) {
        return Err(Error::config("intensity head needs t_min < t_max"));
    }
    let blocked = tape.stop_gradient(ut);
    let z = params.intensity_head.forward(store, tape, blocked)?;
    let s = tape.sigmoid(z);
    Ok(tape.affine(s, params.t_max - params.t_min, params.t_min))
}

/// `eta_hat = ReLU(MLP(ut))`
pub fn uplift_head(params: &HteParams, store: &ParamStore, ut: Var, tape: &mut Tape) -> Result<Var> {
    let z = params.uplift_head.forward(store, tape, ut)?;
    Ok(tape.relu(z))
}

/// `sigmoid(logit(p0) + t * eta)`
pub fn counterfactual_treat(p0_hat: f64, t_hat: f64, eta_hat: f64) -> f64 {
    sigmoid(logit(p0_hat) + t_hat * eta_hat)
}

/// `sigmoid(logit(pt) - t * eta)`
pub fn counterfactual_base(pt_hat: f64, t_hat: f64, eta_hat: f64) -> f64 {
    sigmoid(logit(pt_hat) - t_hat * eta_hat)
}

/// Which intensity drives the treatment tower's TA-Gates for each row.
#[derive(Clone, Debug)]
pub enum DoseInput {
    /// The same explicit intensity per row.
    Given(Array1<f64>),
    /// The model's own imputed intensity.
    Imputed,
    /// Observed intensity on treated rows, imputed on the rest.
    Mixed { t: Array1<f64>, treated: Array1<f64> },
}

/// Tape handles for one batch through the whole network.
#[derive(Clone, Debug)]
pub struct BatchOutputs {
    pub dcr: DcrOutput,
    pub p0: Var,
    /// Treatment-tower prediction, absent when the tower is ablated.
    pub pt: Option<Var>,
    pub t_hat: Var,
    pub eta: Var,
}

/// Output of [`UniMvt::predict`] for one row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub p0_hat: f64,
    /// Treatment-tower probability at `q` (or at `t_hat` when no `q` is given).
    pub pt_hat: f64,
    pub t_hat: f64,
    pub eta_hat: f64,
    /// `t_hat * eta_hat`, or `q * eta_hat` when `q` is given.
    pub tau_hat: f64,
    /// `sigmoid(logit(p0_hat) + tau_hat)`.
    pub p_uplifted: f64,
    /// `q` lies outside the intensity range seen in training.
    pub extrapolated: bool,
}

impl Prediction {
    /// Click-probability gain at intensity 1 implied by the model,
    /// `sigmoid(logit(p0_hat) + eta_hat) - p0_hat`.
    pub fn unit_uplift(&self) -> f64 {
        counterfactual_treat(self.p0_hat, 1.0, self.eta_hat) - self.p0_hat
    }
}

/// The trained network: DCR layer, towers, heads and their parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct UniMvt {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub dcr: DcrParams,
    pub hte: HteParams,
}

impl UniMvt {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, t_min: f64, t_max: f64, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        let dcr = DcrParams::new(&mut store, config.dcr.clone(), rng)?;
        let hte = HteParams::new(&mut store, &config, dcr.output_dim(), t_min, t_max, rng)?;
        Ok(Self { config, store, dcr, hte })
    }

    pub fn t_bounds(&self) -> (f64, f64) {
        (self.hte.t_min, self.hte.t_max)
    }

    fn encode(&self, tape: &mut Tape, t: Var) -> Result<Var> {
        let (lo, hi) = self.t_bounds();
        let z = tape.affine(t, 1.0 / (hi - lo), -lo / (hi - lo));
        let z2 = tape.square(z);
        tape.concat(&[z, z2])
    }

    /// Forward a batch of feature rows with an explicit store, so the same
    /// wiring serves training, finite differences and inference.
    pub fn forward_with(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        x: Array2<f64>,
        dose: &DoseInput,
    ) -> Result<BatchOutputs> {
        let n = x.nrows();
        let xv = tape.constant(x);
        let dcr = dcr_forward(&self.dcr, store, xv, tape)?;
        let p0 = self.hte.base_tower.forward(store, tape, dcr.u0)?;
        let t_hat = intensity_head(&self.hte, store, dcr.ut, tape)?;
        let eta = uplift_head(&self.hte, store, dcr.ut, tape)?;

        let pt = match &self.hte.treat_tower {
            None => None,
            Some(tower) => {
                let column = |tape: &mut Tape, t: &Array1<f64>| {
                    tape.constant(t.clone().insert_axis(Axis(1)))
                };
                let e_t = match dose {
                    DoseInput::Given(t) => {
                        check_len(t.len(), n)?;
                        let tv = column(tape, t);
                        self.encode(tape, tv)?
                    }
                    DoseInput::Imputed => self.encode(tape, t_hat)?,
                    DoseInput::Mixed { t, treated } => {
                        check_len(t.len(), n)?;
                        check_len(treated.len(), n)?;
                        let tv = column(tape, t);
                        let observed = self.encode(tape, tv)?;
                        let imputed = self.encode(tape, t_hat)?;
                        let a = tape.scale_rows(observed, treated.clone())?;
                        let b = tape.scale_rows(imputed, treated.mapv(|w| 1.0 - w))?;
                        tape.add(a, b)?
                    }
                };
                let gates = &self.hte.ta_gates;
                Some(tower.forward_modulated(store, tape, dcr.ut, |l, h, tape| {
                    ta_gate(&gates[l], store, e_t, h, tape)
                })?)
            }
        };
        Ok(BatchOutputs { dcr, p0, pt, t_hat, eta })
    }

    /// Batch inference. With `q`, the treatment tower and `tau_hat` use `q`
    /// for every row; otherwise the imputed intensity.
    pub fn predict_batch(&self, rows: &[[f64; crate::datagen::N_FEATURES]], q: Option<f64>) -> Result<Vec<Prediction>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let x = Array2::from_shape_vec((rows.len(), rows[0].len()), flat)
            .map_err(|e| Error::config(e.to_string()))?;
        let dose = match q {
            Some(q) => DoseInput::Given(Array1::from_elem(rows.len(), q)),
            None => DoseInput::Imputed,
        };
        let mut tape = Tape::new();
        let out = self.forward_with(&self.store, &mut tape, x, &dose)?;
        let (lo, hi) = self.t_bounds();
        let mut preds = Vec::with_capacity(rows.len());
        for i in 0..rows.len() {
            let p0_hat = tape.value(out.p0)[[i, 0]];
            let t_hat = tape.value(out.t_hat)[[i, 0]];
            let eta_hat = tape.value(out.eta)[[i, 0]];
            let dose = q.unwrap_or(t_hat);
            let tau_hat = dose * eta_hat;
            let p_uplifted = counterfactual_treat(p0_hat, dose, eta_hat);
            let pt_hat = match out.pt {
                Some(pt) => tape.value(pt)[[i, 0]],
                None => p_uplifted,
            };
            preds.push(Prediction {
                p0_hat,
                pt_hat,
                t_hat,
                eta_hat,
                tau_hat,
                p_uplifted,
                extrapolated: q.is_some_and(|q| q < lo || q > hi),
            });
        }
        Ok(preds)
    }

    pub fn predict(&self, x: &[f64; crate::datagen::N_FEATURES], q: Option<f64>) -> Result<Prediction> {
        Ok(self.predict_batch(std::slice::from_ref(x), q)?[0])
    }

    pub fn predict_samples(&self, samples: &[Sample], q: Option<f64>) -> Result<Vec<Prediction>> {
        let rows: Vec<_> = samples.iter().map(|s| s.x).collect();
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(4096) {
            out.extend(self.predict_batch(chunk, q)?);
        }
        Ok(out)
    }
}

fn check_len(got: usize, n: usize) -> Result<()> {
    if got != n {
        return Err(Error::config(format!("dose vector has {got} rows, batch has {n}")));
    }
    Ok(())
}
