use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{joint_loss, LossComponents, LossConfig};
use super::model::{ModelConfig, UniMvt};
use crate::datagen::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::numerics::{Adam, AdamConfig, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch: 256,
            lr: 1e-3,
            seed: 0,
            loss: LossConfig::default(),
        }
    }
}

/// Per-row mean of each loss component over one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub components: LossComponents,
    pub total: f64,
}

pub const HISTORY_HEADER: &str = "epoch,l_base,l_treat,l_t,l_x,r_orth,total";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        let c = &r.components;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch,
            c.base,
            c.treat,
            c.t,
            c.x(),
            c.orth,
            r.total
        ));
    }
    out
}

pub(crate) fn check_train_config(data: &Dataset, cfg: &TrainConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if cfg.batch == 0 || cfg.epochs == 0 {
        return Err(Error::config("epochs and batch size must be positive"));
    }
    cfg.loss.weights.validate()
}

/// Shuffled mini-batches of `data`, reshuffled every epoch from `rng`.
pub(crate) fn batches(data: &Dataset, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Sample>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    order
        .chunks(batch)
        .map(|idx| idx.iter().map(|&i| data.samples[i].clone()).collect())
        .collect()
}

/// Fit the full network end to end on `data`. The intensity bounds are the
/// observed range over treated rows.
pub fn train(data: &Dataset, model_config: &ModelConfig, cfg: &TrainConfig) -> Result<(UniMvt, Vec<EpochRecord>)> {
    check_train_config(data, cfg)?;
    let (t_min, t_max) = data
        .treated_range()
        .ok_or_else(|| Error::config("training set has no treated rows"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = UniMvt::new(model_config.clone(), t_min, t_max, &mut rng)?;
    let mut adam = Adam::new(
        &model.store,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    )?;

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut sum = LossComponents::default();
        let mut total = 0.0;
        for (b, batch) in batches(data, cfg.batch, &mut rng).iter().enumerate() {
            let mut tape = Tape::new();
            let (root, parts) = joint_loss(&model, &model.store, batch, &cfg.loss, &mut tape)?;
            let value = tape.scalar(root);
            if !value.is_finite() {
                return Err(Error::numeric(
                    format!("epoch {epoch} batch {b}"),
                    format!("non-finite loss {value}"),
                ));
            }
            tape.backward(root, 1.0, &mut model.store)?;
            adam.step(&mut model.store).map_err(|e| match e {
                Error::Numeric { location, message } => {
                    Error::numeric(format!("epoch {epoch} batch {b}, {location}"), message)
                }
                other => other,
            })?;
            sum.base += parts.base;
            sum.treat += parts.treat;
            sum.t += parts.t;
            sum.x_treat += parts.x_treat;
            sum.x_base += parts.x_base;
            sum.orth += parts.orth;
            total += value;
        }
        let n = data.len() as f64;
        let batches_per_epoch = data.len().div_ceil(cfg.batch) as f64;
        history.push(EpochRecord {
            epoch,
            components: LossComponents {
                base: sum.base / n,
                treat: sum.treat / n,
                t: sum.t / n,
                x_treat: sum.x_treat / n,
                x_base: sum.x_base / n,
                // The penalty is a per-batch constant, not a per-row sum.
                orth: sum.orth / batches_per_epoch,
            },
            total: total / n,
        });
    }
    Ok((model, history))
}
