//! Flat `key=value` experiment configuration with typed accessors.
//!
//! Files hold one pair per line (`#` starts a comment). Command-line
//! `--key value` flags are applied on top in order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::htenet::{LossConfig, LossWeights, ModelConfig, TrainConfig};

/// Environment variable consulted when `train.seed` is not set.
pub const SEED_ENV: &str = "UNIMVT_SEED";

/// Every recognised key with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("model", "unimvt"),
    ("loss.lambda_base", "1"),
    ("loss.lambda_treat", "1"),
    ("loss.lambda_t", "0.1"),
    ("loss.lambda_x", "0.5"),
    ("loss.lambda_o", "0.0001"),
    ("loss.l1", "1"),
    ("loss.l2", "1"),
    ("train.epochs", "10"),
    ("train.batch", "256"),
    ("train.lr", "0.001"),
    ("train.seed", ""),
    ("ablate.dcr", "true"),
    ("ablate.xnet", "true"),
    ("ablate.treat_tower", "true"),
    ("eval.grid", "100"),
    ("eval.bins", "5"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    UniMvt,
    SLearner,
    TLearner,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unimvt" => Ok(Self::UniMvt),
            "slearner" => Ok(Self::SLearner),
            "tlearner" => Ok(Self::TLearner),
            other => Err(Error::usage(format!(
                "unknown model {other:?}, expected unimvt, slearner or tlearner"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UniMvt => "unimvt",
            Self::SLearner => "slearner",
            Self::TLearner => "tlearner",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("config line {}: expected key=value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::usage(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Explicit value, else the default.
    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| KEYS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d))
            .unwrap_or("")
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| Error::config(format!("config key {key}: cannot parse {v:?}")))
    }

    /// Every key with its effective value, for manifests.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|(k, _)| (k.to_string(), self.get(k).to_string()))
            .collect()
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        self.get("model").parse()
    }

    /// `train.seed`, else `UNIMVT_SEED`, else 0. The resolved value is
    /// written back so snapshots record it.
    pub fn resolve_seed(&mut self) -> Result<u64> {
        if self.get("train.seed").is_empty() {
            let seed = std::env::var(SEED_ENV).unwrap_or_else(|_| "0".into());
            self.set("train.seed", &seed)?;
        }
        self.parse("train.seed")
    }

    pub fn loss(&self) -> Result<LossConfig> {
        let weights = LossWeights {
            base: self.parse("loss.lambda_base")?,
            treat: self.parse("loss.lambda_treat")?,
            t: self.parse("loss.lambda_t")?,
            x: self.parse("loss.lambda_x")?,
            o: self.parse("loss.lambda_o")?,
            l1: self.parse("loss.l1")?,
            l2: self.parse("loss.l2")?,
        };
        weights.validate()?;
        Ok(LossConfig {
            weights,
            xnet: self.parse("ablate.xnet")?,
        })
    }

    pub fn train(&mut self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.parse("train.epochs")?,
            batch: self.parse("train.batch")?,
            lr: self.parse("train.lr")?,
            seed: self.resolve_seed()?,
            loss: self.loss()?,
        })
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let mut m = ModelConfig::default();
        m.dcr.enabled = self.parse("ablate.dcr")?;
        m.treat_tower = self.parse("ablate.treat_tower")?;
        Ok(m)
    }

    pub fn baseline(&mut self) -> Result<BaselineConfig> {
        Ok(BaselineConfig {
            train: self.train()?,
            ..BaselineConfig::default()
        })
    }

    pub fn grid(&self) -> Result<usize> {
        self.parse("eval.grid")
    }

    pub fn bins(&self) -> Result<usize> {
        self.parse("eval.bins")
    }

    /// Row label in comparison tables: the model, or for the full network the
    /// disabled components.
    pub fn label(&self) -> Result<String> {
        Ok(match self.model_kind()? {
            ModelKind::SLearner => "S-Learner".into(),
            ModelKind::TLearner => "T-Learner".into(),
            ModelKind::UniMvt => {
                let off: Vec<&str> = [
                    ("ablate.dcr", "w/o DCR"),
                    ("ablate.xnet", "w/o X-Network"),
                    ("ablate.treat_tower", "w/o Treatment Tower"),
                ]
                .iter()
                .filter(|(k, _)| self.get(k) == "false")
                .map(|(_, l)| *l)
                .collect();
                if off.is_empty() {
                    "full".into()
                } else {
                    off.join(" + ")
                }
            }
        })
    }
}
