//! Dense-network substrate: parameters, a reverse-mode tape with a
//! stop-gradient primitive, MLP layers, Adam, and a finite-difference checker.

pub mod gradcheck;
pub mod mlp;
pub mod optim;
pub mod params;
pub mod tape;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use mlp::{mlp_forward, Activation, Dense, Mlp};
pub use optim::{optimizer_step, Adam, AdamConfig};
pub use params::{ParamId, ParamStore, ParamTensor};
pub use tape::{clamp_prob, logit, sigmoid, Tape, Var, PROB_EPS};
