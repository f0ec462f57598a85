//! S-Learner and T-Learner references for multi-valued treatments, and the
//! common scoring interface shared with the full network.
//!
//! Both learners see the dose min-max normalized with the treated training
//! range, and report unit uplift as the response gap at dose 1.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::{features_of, Dataset, Sample, N_FEATURES};
use crate::error::{Error, Result};
use crate::htenet::{batches, check_train_config, TrainConfig, UniMvt};
use crate::numerics::{Activation, Adam, AdamConfig, Mlp, ParamStore, Tape};

/// Anything that scores rows with a base click probability and a unit uplift.
pub trait UpliftEstimator {
    fn base_probs(&self, samples: &[Sample]) -> Result<Vec<f64>>;
    fn unit_uplifts(&self, samples: &[Sample]) -> Result<Vec<f64>>;
}

impl UpliftEstimator for UniMvt {
    fn base_probs(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        Ok(self.predict_samples(samples, None)?.iter().map(|p| p.p0_hat).collect())
    }

    /// Probability gain at intensity 1, on the same scale as the learners'
    /// response gaps.
    fn unit_uplifts(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        Ok(self.predict_samples(samples, None)?.iter().map(|p| p.unit_uplift()).collect())
    }
}

/// Dose normalization shared with the full network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoseScale {
    pub t_min: f64,
    pub t_max: f64,
}

impl DoseScale {
    /// Treated training range, or the identity map when nothing is treated.
    pub fn from_data(data: &Dataset) -> Self {
        match data.treated_range() {
            Some((lo, hi)) if lo < hi => Self { t_min: lo, t_max: hi },
            _ => Self { t_min: 0.0, t_max: 1.0 },
        }
    }

    pub fn normalize(&self, t: f64) -> f64 {
        (t - self.t_min) / (self.t_max - self.t_min)
    }
}

fn with_dose(samples: &[Sample], scale: DoseScale, dose: impl Fn(&Sample) -> f64) -> Array2<f64> {
    let x = features_of(samples.iter());
    let mut out = Array2::zeros((samples.len(), N_FEATURES + 1));
    out.slice_mut(ndarray::s![.., ..N_FEATURES]).assign(&x);
    for (i, s) in samples.iter().enumerate() {
        out[[i, N_FEATURES]] = scale.normalize(dose(s));
    }
    out
}

/// Sigmoid-output network with the towers' hidden sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClickNet {
    pub store: ParamStore,
    pub mlp: Mlp,
}

impl ClickNet {
    pub fn new(name: &str, input_dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut store = ParamStore::new();
        let sizes: Vec<usize> = std::iter::once(input_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let mlp = Mlp::new(&mut store, name, &sizes, Activation::Relu, Activation::Sigmoid, rng);
        Self { store, mlp }
    }

    pub fn predict(&self, x: Array2<f64>) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(x.nrows());
        for chunk in x.axis_chunks_iter(ndarray::Axis(0), 4096) {
            let mut tape = Tape::new();
            let xv = tape.constant(chunk.to_owned());
            let p = self.mlp.forward(&self.store, &mut tape, xv)?;
            out.extend(tape.value(p).iter().copied());
        }
        Ok(out)
    }

    /// Minimize summed cross-entropy with Adam over shuffled mini-batches.
    /// `inputs` maps a batch of rows to the network input.
    fn fit(
        &mut self,
        rows: &Dataset,
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
        inputs: impl Fn(&[Sample]) -> Array2<f64>,
    ) -> Result<Vec<f64>> {
        let mut adam = Adam::new(
            &self.store,
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
        )?;
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let mut total = 0.0;
            for (b, batch) in batches(rows, cfg.batch, rng).iter().enumerate() {
                let mut tape = Tape::new();
                let xv = tape.constant(inputs(batch));
                let p = self.mlp.forward(&self.store, &mut tape, xv)?;
                let y = Array2::from_shape_fn((batch.len(), 1), |(i, _)| f64::from(u8::from(batch[i].y)));
                let l = tape.bce(p, y)?;
                let root = tape.sum(l);
                let value = tape.scalar(root);
                if !value.is_finite() {
                    return Err(Error::numeric(format!("epoch {epoch} batch {b}"), format!("non-finite loss {value}")));
                }
                tape.backward(root, 1.0, &mut self.store)?;
                adam.step(&mut self.store)?;
                total += value;
            }
            history.push(total / rows.len() as f64);
        }
        Ok(history)
    }
}

/// One network over `(x, normalized t)`, controls at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SLearner {
    pub net: ClickNet,
    pub scale: DoseScale,
}

impl SLearner {
    pub fn predict_at(&self, samples: &[Sample], t: f64) -> Result<Vec<f64>> {
        self.net.predict(with_dose(samples, self.scale, |_| t))
    }

    /// Predictions at each row's own observed dose.
    pub fn predict_observed(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        self.net.predict(with_dose(samples, self.scale, |s| s.t))
    }
}

impl UpliftEstimator for SLearner {
    fn base_probs(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        self.predict_at(samples, 0.0)
    }

    /// `f(x, 1) - f(x, 0)`
    fn unit_uplifts(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        let on = self.predict_at(samples, 1.0)?;
        let off = self.predict_at(samples, 0.0)?;
        Ok(on.iter().zip(&off).map(|(a, b)| a - b).collect())
    }
}

/// Control network `f_C(x)` and treated network `f_T(x, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TLearner {
    pub control: ClickNet,
    pub treated: ClickNet,
    pub scale: DoseScale,
}

impl UpliftEstimator for TLearner {
    fn base_probs(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        self.control.predict(features_of(samples.iter()))
    }

    /// `f_T(x, 1) - f_C(x)`
    fn unit_uplifts(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        let on = self.treated.predict(with_dose(samples, self.scale, |_| 1.0))?;
        let off = self.base_probs(samples)?;
        Ok(on.iter().zip(&off).map(|(a, b)| a - b).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            train: TrainConfig::default(),
        }
    }
}

pub fn train_slearner(data: &Dataset, cfg: &BaselineConfig) -> Result<(SLearner, Vec<f64>)> {
    check_train_config(data, &cfg.train)?;
    let scale = DoseScale::from_data(data);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut net = ClickNet::new("slearner", N_FEATURES + 1, &cfg.hidden, &mut rng);
    let history = net.fit(data, &cfg.train, &mut rng, |b| with_dose(b, scale, |s| s.t))?;
    Ok((SLearner { net, scale }, history))
}

/// Each network sees only its own group.
pub fn train_tlearner(data: &Dataset, cfg: &BaselineConfig) -> Result<(TLearner, Vec<f64>)> {
    check_train_config(data, &cfg.train)?;
    let split = |treated: bool| Dataset {
        samples: data.samples.iter().filter(|s| s.w == treated).cloned().collect(),
        split: data.split,
        rct: data.rct,
    };
    let (controls, treated) = (split(false), split(true));
    if controls.is_empty() || treated.is_empty() {
        return Err(Error::config("t-learner needs both control and treated rows"));
    }
    let scale = DoseScale::from_data(data);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut control = ClickNet::new("tlearner_control", N_FEATURES, &cfg.hidden, &mut rng);
    let mut treated_net = ClickNet::new("tlearner_treated", N_FEATURES + 1, &cfg.hidden, &mut rng);
    let mut history = control.fit(&controls, &cfg.train, &mut rng, |b| features_of(b.iter()))?;
    let h_t = treated_net.fit(&treated, &cfg.train, &mut rng, |b| with_dose(b, scale, |s| s.t))?;
    for (a, b) in history.iter_mut().zip(h_t) {
        *a += b;
    }
    Ok((
        TLearner {
            control,
            treated: treated_net,
            scale,
        },
        history,
    ))
}

const SLEARNER_MAGIC: &str = "slearner-model 1";
const TLEARNER_MAGIC: &str = "tlearner-model 1";

fn header(magic: &str, scale: DoseScale, hidden: &[usize]) -> String {
    let hidden: Vec<String> = hidden.iter().map(usize::to_string).collect();
    format!("{magic}\nt_min={}\nt_max={}\nhidden={}\n", scale.t_min, scale.t_max, hidden.join(" "))
}

fn hidden_of(net: &ClickNet) -> Vec<usize> {
    let n = net.mlp.layers.len();
    net.mlp.layers[..n - 1].iter().map(|l| net.store.value(l.weight).ncols()).collect()
}

impl SLearner {
    pub fn to_text(&self) -> String {
        header(SLEARNER_MAGIC, self.scale, &hidden_of(&self.net)) + &self.net.store.to_text()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (scale, hidden, body) = parse_header(text, SLEARNER_MAGIC)?;
        let mut net = ClickNet::new("slearner", N_FEATURES + 1, &hidden, &mut ChaCha8Rng::seed_from_u64(0));
        net.store.load_values(body)?;
        Ok(Self { net, scale })
    }
}

impl TLearner {
    pub fn to_text(&self) -> String {
        let mut out = header(TLEARNER_MAGIC, self.scale, &hidden_of(&self.control));
        out.push_str(&self.control.store.to_text());
        out.push_str(&self.treated.store.to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (scale, hidden, body) = parse_header(text, TLEARNER_MAGIC)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut control = ClickNet::new("tlearner_control", N_FEATURES, &hidden, &mut rng);
        let mut treated = ClickNet::new("tlearner_treated", N_FEATURES + 1, &hidden, &mut rng);
        let (c, t): (Vec<_>, Vec<_>) = body.into_iter().partition(|(_, l)| l.starts_with("tlearner_control."));
        control.store.load_values(c)?;
        treated.store.load_values(t)?;
        Ok(Self {
            control,
            treated,
            scale,
        })
    }
}

type Body<'a> = Vec<(usize, &'a str)>;

fn parse_header<'a>(text: &'a str, magic: &str) -> Result<(DoseScale, Vec<usize>, Body<'a>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let bad = |line: usize, msg: &str| Error::config(format!("model file line {line}: {msg}"));
    match lines.next() {
        Some((_, l)) if l.trim() == magic => {}
        _ => return Err(bad(1, &format!("expected header {magic:?}"))),
    }
    let mut field = |key: &str| -> Result<(usize, String)> {
        let (n, l) = lines.next().ok_or_else(|| bad(0, "truncated model file"))?;
        l.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .map(|v| (n, v.trim().to_string()))
            .ok_or_else(|| bad(n, &format!("expected {key}=")))
    };
    let num = |(n, v): (usize, String)| v.parse::<f64>().map_err(|_| bad(n, "bad number"));
    let t_min = num(field("t_min")?)?;
    let t_max = num(field("t_max")?)?;
    let (n, h) = field("hidden")?;
    let hidden = h
        .split_whitespace()
        .map(|s| s.parse::<usize>().map_err(|_| bad(n, "bad hidden size")))
        .collect::<Result<Vec<_>>>()?;
    let body = lines.filter(|(_, l)| !l.trim().is_empty()).collect();
    Ok((DoseScale { t_min, t_max }, hidden, body))
}
