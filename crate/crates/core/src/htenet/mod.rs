//! Heterogeneous treatment-effect network: base and treatment towers with
//! intensity-conditioned gates, intensity and uplift heads, counterfactual
//! losses and the training loop.

mod io;
mod loss;
mod model;
mod train;

pub use io::{load_model, model_from_text, model_to_text, save_model};
pub use loss::{joint_loss, LossComponents, LossConfig, LossWeights};
pub use model::{
    counterfactual_base, counterfactual_treat, intensity_head, ta_gate, uplift_head, BatchOutputs, DoseInput,
    HteParams, ModelConfig, Prediction, TreatmentEncoding, UniMvt, ENCODING_DIM,
};
pub use train::{history_csv, train, EpochRecord, TrainConfig, HISTORY_HEADER};
pub(crate) use train::{batches, check_train_config};

#[cfg(test)]
mod tests;
