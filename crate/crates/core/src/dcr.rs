//! Deconfounded causal representation layer.
//!
//! Three expert groups (base, shared, treated) read the same input. Two
//! softmax gates weight every expert's output block; the base view blocks
//! gradients into the treated experts and the treatment view blocks gradients
//! into the base experts, so only the shared experts receive both signals:
//!
//! ```text
//! u0 = concat_k g0_k * [H_base, H_shared, SG(H_treated)]_k
//! ut = concat_k gt_k * [SG(H_base), H_shared, H_treated]_k
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Activation, Mlp, ParamId, ParamStore, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcrConfig {
    pub input_dim: usize,
    pub experts_per_group: usize,
    /// Hidden width of each expert; 0 gives single-layer experts.
    pub hidden: usize,
    pub out_dim: usize,
    /// `false` replaces the expert mixture with one shared encoder.
    pub enabled: bool,
}

impl Default for DcrConfig {
    fn default() -> Self {
        Self {
            input_dim: crate::datagen::N_FEATURES,
            experts_per_group: 2,
            hidden: 32,
            out_dim: 16,
            enabled: true,
        }
    }
}

impl DcrConfig {
    /// Width of `u0` and `ut`.
    pub fn output_dim(&self) -> usize {
        3 * self.experts_per_group * self.out_dim
    }

    fn expert_sizes(&self) -> Vec<usize> {
        if self.hidden == 0 {
            vec![self.input_dim, self.out_dim]
        } else {
            vec![self.input_dim, self.hidden, self.out_dim]
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpertGroup {
    Base,
    Shared,
    Treated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcrParams {
    pub config: DcrConfig,
    pub base_experts: Vec<Mlp>,
    pub shared_experts: Vec<Mlp>,
    pub treated_experts: Vec<Mlp>,
    pub gate0: Mlp,
    pub gate_t: Mlp,
    /// Only present when the mixture is disabled.
    pub shared_encoder: Option<Mlp>,
}

/// Tape handles produced by one [`dcr_forward`] call.
#[derive(Clone, Debug)]
pub struct DcrOutput {
    pub u0: Var,
    pub ut: Var,
    /// Expert outputs in slot order: base, shared, treated.
    pub expert_outputs: Vec<Var>,
    pub gate0: Option<Var>,
    pub gate_t: Option<Var>,
}

impl DcrParams {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: DcrConfig, rng: &mut R) -> Result<Self> {
        if config.experts_per_group == 0 || config.out_dim == 0 || config.input_dim == 0 {
            return Err(Error::config("dcr: expert count and widths must be positive"));
        }
        let sizes = config.expert_sizes();
        let group = |tag: &str, store: &mut ParamStore, rng: &mut R| -> Vec<Mlp> {
            if !config.enabled {
                return Vec::new();
            }
            (0..config.experts_per_group)
                .map(|j| {
                    Mlp::new(store, &format!("dcr.{tag}{j}"), &sizes, Activation::Relu, Activation::Identity, rng)
                })
                .collect()
        };
        let base_experts = group("base", store, rng);
        let shared_experts = group("shared", store, rng);
        let treated_experts = group("treated", store, rng);
        let slots = 3 * config.experts_per_group;
        let gate_sizes = [config.input_dim, slots];
        let gate0 = Mlp::new(store, "dcr.gate0", &gate_sizes, Activation::Relu, Activation::Identity, rng);
        let gate_t = Mlp::new(store, "dcr.gate_t", &gate_sizes, Activation::Relu, Activation::Identity, rng);
        let shared_encoder = (!config.enabled).then(|| {
            let hidden = config.hidden.max(1);
            Mlp::new(
                store,
                "dcr.encoder",
                &[config.input_dim, hidden, config.output_dim()],
                Activation::Relu,
                Activation::Relu,
                rng,
            )
        });
        Ok(Self {
            config,
            base_experts,
            shared_experts,
            treated_experts,
            gate0,
            gate_t,
            shared_encoder,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn experts(&self, group: ExpertGroup) -> &[Mlp] {
        match group {
            ExpertGroup::Base => &self.base_experts,
            ExpertGroup::Shared => &self.shared_experts,
            ExpertGroup::Treated => &self.treated_experts,
        }
    }

    pub fn group_params(&self, group: ExpertGroup) -> Vec<ParamId> {
        self.experts(group).iter().flat_map(Mlp::params).collect()
    }

    /// Every trainable tensor of the layer, gates and encoder included.
    pub fn params(&self) -> Vec<ParamId> {
        let mut out: Vec<ParamId> = [ExpertGroup::Base, ExpertGroup::Shared, ExpertGroup::Treated]
            .into_iter()
            .flat_map(|g| self.group_params(g))
            .collect();
        if self.shared_encoder.is_none() {
            out.extend(self.gate0.params());
            out.extend(self.gate_t.params());
        }
        if let Some(enc) = &self.shared_encoder {
            out.extend(enc.params());
        }
        out
    }
}

/// Encode a batch `x` (rows are samples) into the base view `u0` and the
/// treatment view `ut`.
pub fn dcr_forward(params: &DcrParams, store: &ParamStore, x: Var, tape: &mut Tape) -> Result<DcrOutput> {
    let width = tape.value(x).ncols();
    if width != params.config.input_dim {
        return Err(Error::config(format!(
            "dcr expects input width {}, got {width}",
            params.config.input_dim
        )));
    }
    if let Some(enc) = &params.shared_encoder {
        let u = enc.forward(store, tape, x)?;
        return Ok(DcrOutput {
            u0: u,
            ut: u,
            expert_outputs: vec![u],
            gate0: None,
            gate_t: None,
        });
    }

    let mut outputs = Vec::new();
    let mut groups = Vec::new();
    for group in [ExpertGroup::Base, ExpertGroup::Shared, ExpertGroup::Treated] {
        for expert in params.experts(group) {
            outputs.push(expert.forward(store, tape, x)?);
            groups.push(group);
        }
    }
    let logits0 = params.gate0.forward(store, tape, x)?;
    let logits_t = params.gate_t.forward(store, tape, x)?;
    let g0 = tape.softmax_rows(logits0);
    let gt = tape.softmax_rows(logits_t);

    let mut blocks0 = Vec::with_capacity(outputs.len());
    let mut blocks_t = Vec::with_capacity(outputs.len());
    for (k, (&h, &group)) in outputs.iter().zip(&groups).enumerate() {
        let h0 = if group == ExpertGroup::Treated { tape.stop_gradient(h) } else { h };
        let ht = if group == ExpertGroup::Base { tape.stop_gradient(h) } else { h };
        blocks0.push(tape.mul_col(h0, g0, k)?);
        blocks_t.push(tape.mul_col(ht, gt, k)?);
    }
    let u0 = tape.concat(&blocks0)?;
    let ut = tape.concat(&blocks_t)?;
    Ok(DcrOutput {
        u0,
        ut,
        expert_outputs: outputs,
        gate0: Some(g0),
        gate_t: Some(gt),
    })
}

/// Sum over layers and group pairs (s,b), (s,t), (b,t) of the squared
/// Frobenius norm of `Theta_i^T Theta_j`, where a group's layer matrix is the
/// column-wise concatenation of its experts' weights. Biases are excluded.
pub fn orth_penalty(params: &DcrParams, store: &ParamStore, tape: &mut Tape) -> Result<Var> {
    if params.shared_encoder.is_some() {
        return Ok(tape.constant(ndarray::Array2::zeros((1, 1))));
    }
    let depth = |g: ExpertGroup| params.experts(g).first().map_or(0, |m| m.layers.len());
    let groups = [ExpertGroup::Shared, ExpertGroup::Base, ExpertGroup::Treated];
    let layers = depth(ExpertGroup::Shared);
    for g in groups {
        if params.experts(g).iter().any(|m| m.layers.len() != layers) || depth(g) != layers {
            return Err(Error::config("orth penalty: expert groups differ in depth"));
        }
    }
    let mut terms = Vec::new();
    for l in 0..layers {
        let mut stacked = Vec::with_capacity(3);
        for g in groups {
            let ws: Vec<Var> = params
                .experts(g)
                .iter()
                .map(|m| tape.param(store, m.layers[l].weight))
                .collect();
            stacked.push(tape.concat(&ws)?);
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let cross = tape.matmul_tn(stacked[i], stacked[j]).map_err(|_| {
                Error::config(format!(
                    "orth penalty: layer {l} weights of {:?} and {:?} have incompatible shapes",
                    groups[i], groups[j]
                ))
            })?;
            let sq = tape.square(cross);
            terms.push(tape.sum(sq));
        }
    }
    let mut total = match terms.first() {
        Some(&t) => t,
        None => return Ok(tape.constant(ndarray::Array2::zeros((1, 1)))),
    };
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    Ok(total)
}

/// Value-only form of [`orth_penalty`].
pub fn orth_penalty_value(params: &DcrParams, store: &ParamStore) -> Result<f64> {
    let mut tape = Tape::new();
    let v = orth_penalty(params, store, &mut tape)?;
    Ok(tape.scalar(v))
}
