//! Synthetic multi-valued-treatment benchmarks with closed-form ground truth.
//!
//! Each row carries 8 correlated Gaussian covariates, a coupon flag `w`, an
//! intensity `t` (zero for control rows) and a click label `y` drawn from
//!
//! ```text
//! P(y = 1 | x, t) = min(p0(x) + eta(x) * t, 0.99)
//! p0(x)  = sigmoid(a . x + b)
//! eta(x) = eta_max * sigmoid(c . x)
//! ```
//!
//! The training split is observational: coupon propensity and dose tier both
//! depend on the assignment score `d . x`. The test split is a randomized trial.

mod csv_io;

use std::fmt;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::sigmoid;

pub use csv_io::{load_csv, meta_path, save_csv, CSV_HEADER};

pub const N_FEATURES: usize = 8;

/// Cap on the potential-outcome click probability.
pub const MAX_CLICK_PROB: f64 = 0.99;

/// Toeplitz correlation decay between adjacent covariates.
const FEATURE_CORRELATION: f64 = 0.5;
/// Standard deviation of the base-CTR logit `a . x`.
const BASE_LOGIT_SD: f64 = 0.8;
/// Standard deviation of the sensitivity logit `c . x`.
const SENSITIVITY_LOGIT_SD: f64 = 1.5;
/// Mean absolute uplift `eta * t` at the mixture's mean dose.
const MEAN_UPLIFT_AT_MEAN_DOSE: f64 = 0.05;
/// Within-tier dose shift per unit of standardized assignment score, in
/// jitter standard deviations, scaled by the confounding strength.
const WITHIN_MODE_SHIFT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: [f64; N_FEATURES],
    pub w: bool,
    pub t: f64,
    pub y: bool,
    pub truth_p0: Option<f64>,
    pub truth_eta: Option<f64>,
}

impl Sample {
    /// Checks `w = 0 <=> t = 0`, `t > 0` when treated and the truth ranges.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.t.is_finite() || self.x.iter().any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        if !self.w && self.t != 0.0 {
            return Err(format!("control row (w=0) has intensity t={}", self.t));
        }
        if self.w && self.t <= 0.0 {
            return Err(format!("treated row (w=1) has intensity t={}", self.t));
        }
        if let Some(p) = self.truth_p0 {
            if !(p > 0.0 && p < 1.0) {
                return Err(format!("truth_p0={p} outside (0,1)"));
            }
        }
        if let Some(e) = self.truth_eta {
            if !(e >= 0.0) {
                return Err(format!("truth_eta={e} negative"));
            }
        }
        if self.truth_p0.is_some() != self.truth_eta.is_some() {
            return Err("truth_p0 and truth_eta must be present together".into());
        }
        Ok(())
    }

    /// Ground-truth click probability at intensity `t`.
    pub fn truth_click_prob(&self, t: f64) -> Option<f64> {
        Some((self.truth_p0? + self.truth_eta? * t).min(MAX_CLICK_PROB))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub split: Split,
    /// Treatment assigned independently of covariates.
    pub rct: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_truth(&self) -> bool {
        self.samples.first().is_some_and(|s| s.truth_p0.is_some())
    }

    /// Row-major `n x 8` feature matrix.
    pub fn features(&self) -> Array2<f64> {
        features_of(self.samples.iter())
    }

    pub fn coupon_ratio(&self) -> f64 {
        self.samples.iter().filter(|s| s.w).count() as f64 / self.len().max(1) as f64
    }

    pub fn avg_ctr(&self) -> f64 {
        self.samples.iter().filter(|s| s.y).count() as f64 / self.len().max(1) as f64
    }

    /// Observed intensity range over treated rows.
    pub fn treated_range(&self) -> Option<(f64, f64)> {
        self.samples
            .iter()
            .filter(|s| s.w)
            .map(|s| s.t)
            .fold(None, |acc, t| match acc {
                None => Some((t, t)),
                Some((lo, hi)) => Some((lo.min(t), hi.max(t))),
            })
    }

    pub fn subset(&self, n: usize) -> Dataset {
        Dataset {
            samples: self.samples[..n.min(self.len())].to_vec(),
            split: self.split,
            rct: self.rct,
        }
    }
}

pub fn features_of<'a>(rows: impl Iterator<Item = &'a Sample>) -> Array2<f64> {
    let flat: Vec<f64> = rows.flat_map(|s| s.x).collect();
    let n = flat.len() / N_FEATURES;
    Array2::from_shape_vec((n, N_FEATURES), flat).expect("rows are fixed width")
}

/// Parameters of one synthetic benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynSpec {
    pub name: String,
    pub n_train: usize,
    pub n_test: usize,
    pub coupon_ratio: f64,
    pub modes: Vec<f64>,
    pub mode_weights: Vec<f64>,
    pub mode_jitter_sd: f64,
    pub target_avg_ctr: f64,
    pub confounding_strength: f64,
    pub seed: u64,
}

pub const PRESETS: [&str; 3] = ["syn1", "syn2", "syn3"];

impl SynSpec {
    pub fn syn1() -> Self {
        Self {
            name: "syn1".into(),
            n_train: 80_000,
            n_test: 8_000,
            coupon_ratio: 0.3478,
            modes: vec![2.5],
            mode_weights: vec![1.0],
            mode_jitter_sd: 0.3,
            target_avg_ctr: 0.208,
            confounding_strength: 1.0,
            seed: 1,
        }
    }

    pub fn syn2() -> Self {
        Self {
            name: "syn2".into(),
            coupon_ratio: 0.3517,
            modes: vec![1.5],
            mode_jitter_sd: 0.25,
            target_avg_ctr: 0.183,
            seed: 2,
            ..Self::syn1()
        }
    }

    pub fn syn3() -> Self {
        Self {
            name: "syn3".into(),
            coupon_ratio: 0.3523,
            modes: vec![1.0, 1.6, 2.4, 4.0],
            mode_weights: vec![0.25; 4],
            mode_jitter_sd: 0.15,
            target_avg_ctr: 0.209,
            seed: 3,
            ..Self::syn1()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "").as_str() {
            "syn1" => Ok(Self::syn1()),
            "syn2" => Ok(Self::syn2()),
            "syn3" => Ok(Self::syn3()),
            _ => Err(Error::usage(format!(
                "unknown preset {name:?}; available presets: {}",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Parse a `key=value` spec file. Keys mirror the field names; `modes`
    /// and `mode_weights` are comma separated. Missing keys fall back to Syn-1.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut spec = Self::syn1();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("spec line {}: expected key=value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let bad = || Error::config(format!("spec line {}: bad value for {k}: {v:?}", i + 1));
            let list = |v: &str| -> Result<Vec<f64>> {
                v.split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
                    .collect()
            };
            match k {
                "name" => spec.name = v.to_string(),
                "n_train" => spec.n_train = v.parse().map_err(|_| bad())?,
                "n_test" => spec.n_test = v.parse().map_err(|_| bad())?,
                "coupon_ratio" => spec.coupon_ratio = v.parse().map_err(|_| bad())?,
                "modes" => spec.modes = list(v)?,
                "mode_weights" => spec.mode_weights = list(v)?,
                "mode_jitter_sd" => spec.mode_jitter_sd = v.parse().map_err(|_| bad())?,
                "target_avg_ctr" => spec.target_avg_ctr = v.parse().map_err(|_| bad())?,
                "confounding_strength" => spec.confounding_strength = v.parse().map_err(|_| bad())?,
                "seed" => spec.seed = v.parse().map_err(|_| bad())?,
                other => return Err(Error::config(format!("spec line {}: unknown key {other}", i + 1))),
            }
        }
        if spec.mode_weights.len() != spec.modes.len() {
            let k = spec.modes.len();
            spec.mode_weights = vec![1.0 / k as f64; k];
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(format!("spec {}: {m}", self.name)));
        if self.n_train == 0 || self.n_test == 0 {
            return fail("split sizes must be positive".into());
        }
        if !(self.coupon_ratio > 0.0 && self.coupon_ratio < 1.0) {
            return fail(format!("coupon_ratio {} outside (0,1)", self.coupon_ratio));
        }
        if !(self.target_avg_ctr > 0.0 && self.target_avg_ctr < 1.0) {
            return fail(format!("target_avg_ctr {} outside (0,1)", self.target_avg_ctr));
        }
        if self.modes.is_empty() || self.modes.len() != self.mode_weights.len() {
            return fail("modes must be nonempty with one weight each".into());
        }
        if self.modes.iter().any(|&m| !(m > 0.0)) || self.mode_weights.iter().any(|&w| !(w > 0.0)) {
            return fail("modes and weights must be positive".into());
        }
        if (self.mode_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return fail("mode weights must sum to 1".into());
        }
        if !(self.mode_jitter_sd > 0.0) {
            return fail("mode_jitter_sd must be positive".into());
        }
        if self.min_mode() - 3.0 * self.mode_jitter_sd <= 0.0 {
            return fail("smallest mode minus three jitter sds must stay positive".into());
        }
        if !(self.confounding_strength >= 0.0) {
            return fail("confounding_strength must be nonnegative".into());
        }
        Ok(())
    }

    pub fn min_mode(&self) -> f64 {
        self.modes.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_dose(&self) -> f64 {
        self.modes.iter().zip(&self.mode_weights).map(|(m, w)| m * w).sum()
    }
}

/// Coefficients and calibrated intercepts of one generated benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub seed: u64,
    pub base_coef: [f64; N_FEATURES],
    pub sensitivity_coef: [f64; N_FEATURES],
    pub assignment_coef: [f64; N_FEATURES],
    pub base_intercept: f64,
    pub propensity_intercept: f64,
    pub eta_max: f64,
}

impl GeneratorMeta {
    pub fn to_lines(&self) -> Vec<(String, String)> {
        let vec = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        vec![
            ("seed".into(), self.seed.to_string()),
            ("base_coef".into(), vec(&self.base_coef)),
            ("sensitivity_coef".into(), vec(&self.sensitivity_coef)),
            ("assignment_coef".into(), vec(&self.assignment_coef)),
            ("base_intercept".into(), format!("{}", self.base_intercept)),
            ("propensity_intercept".into(), format!("{}", self.propensity_intercept)),
            ("eta_max".into(), format!("{}", self.eta_max)),
        ]
    }
}

/// Both splits plus the generating coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub spec: SynSpec,
    pub train: Dataset,
    pub test: Dataset,
    pub meta: GeneratorMeta,
}

fn dot(a: &[f64; N_FEATURES], b: &[f64; N_FEATURES]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn toeplitz() -> [[f64; N_FEATURES]; N_FEATURES] {
    let mut s = [[0.0; N_FEATURES]; N_FEATURES];
    for (i, row) in s.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = FEATURE_CORRELATION.powi((i as i32 - j as i32).abs());
        }
    }
    s
}

fn cholesky(a: &[[f64; N_FEATURES]; N_FEATURES]) -> [[f64; N_FEATURES]; N_FEATURES] {
    let mut l = [[0.0; N_FEATURES]; N_FEATURES];
    for i in 0..N_FEATURES {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Rescale `v` so that `v' S v = sd^2`, i.e. `v . x` has standard deviation `sd`.
fn scale_to_sd(v: [f64; N_FEATURES], cov: &[[f64; N_FEATURES]; N_FEATURES], sd: f64) -> [f64; N_FEATURES] {
    let mut q = 0.0;
    for i in 0..N_FEATURES {
        for j in 0..N_FEATURES {
            q += v[i] * cov[i][j] * v[j];
        }
    }
    let k = sd / q.sqrt();
    v.map(|x| x * k)
}

fn normal_vec(rng: &mut ChaCha8Rng) -> [f64; N_FEATURES] {
    std::array::from_fn(|_| rng.sample(StandardNormal))
}

/// Find `z` in `[lo, hi]` with `f(z) = target` for nondecreasing `f`.
fn bisect(what: &str, target: f64, mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo <= target && target <= fhi) {
        return Err(Error::config(format!(
            "cannot calibrate {what}: target {target} outside bracket [{flo}, {fhi}]"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

struct Draft {
    x: [f64; N_FEATURES],
    w: bool,
    t: f64,
}

fn pick_mode(rng: &mut ChaCha8Rng, logits: &[f64]) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Draw both splits of a benchmark from its seeded stream.
pub fn generate(spec: &SynSpec) -> Result<Benchmark> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cov = toeplitz();
    let chol = cholesky(&cov);

    let base_coef = scale_to_sd(normal_vec(&mut rng), &cov, BASE_LOGIT_SD);
    let sensitivity_coef = scale_to_sd(normal_vec(&mut rng), &cov, SENSITIVITY_LOGIT_SD);
    // High-sensitivity, high-CTR users lean towards coupons and higher tiers.
    let fresh = normal_vec(&mut rng);
    let mixed: [f64; N_FEATURES] = std::array::from_fn(|i| {
        base_coef[i] / BASE_LOGIT_SD + sensitivity_coef[i] / SENSITIVITY_LOGIT_SD + fresh[i]
    });
    let assignment_coef = scale_to_sd(mixed, &cov, 1.0);

    let draw_x = |n: usize, rng: &mut ChaCha8Rng| -> Vec<[f64; N_FEATURES]> {
        (0..n)
            .map(|_| {
                let z = normal_vec(rng);
                std::array::from_fn(|i| (0..=i).map(|k| chol[i][k] * z[k]).sum())
            })
            .collect()
    };
    let x_train = draw_x(spec.n_train, &mut rng);
    let x_test = draw_x(spec.n_test, &mut rng);

    let scores: Vec<f64> = x_train.iter().map(|x| dot(&assignment_coef, x)).collect();
    let propensity_intercept = bisect("propensity intercept", spec.coupon_ratio, -30.0, 30.0, |e| {
        scores.iter().map(|s| sigmoid(s + e)).sum::<f64>() / scores.len() as f64
    })?;

    let mode_mean = spec.mean_dose();
    let mode_sd = (spec
        .modes
        .iter()
        .zip(&spec.mode_weights)
        .map(|(m, w)| w * (m - mode_mean).powi(2))
        .sum::<f64>())
    .sqrt();
    let mode_pos: Vec<f64> = spec
        .modes
        .iter()
        .map(|m| if mode_sd > 0.0 { (m - mode_mean) / mode_sd } else { 0.0 })
        .collect();
    let log_w: Vec<f64> = spec.mode_weights.iter().map(|w| w.ln()).collect();
    let jitter = spec.mode_jitter_sd;

    let draw_dose = |rng: &mut ChaCha8Rng, shift: f64| -> f64 {
        let logits: Vec<f64> = log_w.iter().zip(&mode_pos).map(|(l, z)| l + shift * z).collect();
        let k = pick_mode(rng, &logits);
        let eps: f64 = rng.sample(StandardNormal);
        let dev = (WITHIN_MODE_SHIFT * shift + eps).clamp(-3.0, 3.0) * jitter;
        spec.modes[k] + dev
    };

    let mut train: Vec<Draft> = Vec::with_capacity(spec.n_train);
    for (x, s) in x_train.into_iter().zip(&scores) {
        let w = rng.random::<f64>() < sigmoid(s + propensity_intercept);
        let t = if w {
            draw_dose(&mut rng, spec.confounding_strength * s)
        } else {
            0.0
        };
        train.push(Draft { x, w, t });
    }
    let mut test: Vec<Draft> = Vec::with_capacity(spec.n_test);
    for x in x_test {
        let w = rng.random::<f64>() < spec.coupon_ratio;
        let t = if w { draw_dose(&mut rng, 0.0) } else { 0.0 };
        test.push(Draft { x, w, t });
    }

    let mean_sens = train
        .iter()
        .map(|d| sigmoid(dot(&sensitivity_coef, &d.x)))
        .sum::<f64>()
        / train.len() as f64;
    let eta_max = MEAN_UPLIFT_AT_MEAN_DOSE / (mode_mean * mean_sens);
    let eta = |x: &[f64; N_FEATURES]| eta_max * sigmoid(dot(&sensitivity_coef, x));

    let base_logits: Vec<f64> = train.iter().map(|d| dot(&base_coef, &d.x)).collect();
    let uplifts: Vec<f64> = train.iter().map(|d| eta(&d.x) * d.t).collect();
    let base_intercept = bisect("base intercept", spec.target_avg_ctr, -30.0, 30.0, |b| {
        base_logits
            .iter()
            .zip(&uplifts)
            .map(|(l, u)| (sigmoid(l + b) + u).min(MAX_CLICK_PROB))
            .sum::<f64>()
            / base_logits.len() as f64
    })?;

    let finish = |drafts: Vec<Draft>, rng: &mut ChaCha8Rng| -> Vec<Sample> {
        drafts
            .into_iter()
            .map(|d| {
                let p0 = sigmoid(dot(&base_coef, &d.x) + base_intercept);
                let e = eta(&d.x);
                let p = (p0 + e * d.t).min(MAX_CLICK_PROB);
                let y = rng.random::<f64>() < p;
                Sample {
                    x: d.x,
                    w: d.w,
                    t: d.t,
                    y,
                    truth_p0: Some(p0),
                    truth_eta: Some(e),
                }
            })
            .collect()
    };
    let train = finish(train, &mut rng);
    let test = finish(test, &mut rng);

    Ok(Benchmark {
        spec: spec.clone(),
        train: Dataset {
            samples: train,
            split: Split::Train,
            rct: false,
        },
        test: Dataset {
            samples: test,
            split: Split::Test,
            rct: true,
        },
        meta: GeneratorMeta {
            seed: spec.seed,
            base_coef,
            sensitivity_coef,
            assignment_coef,
            base_intercept,
            propensity_intercept,
            eta_max,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(spec: SynSpec, n_train: usize, n_test: usize) -> SynSpec {
        SynSpec { n_train, n_test, ..spec }
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn cholesky_reconstructs_toeplitz() {
        let s = toeplitz();
        let l = cholesky(&s);
        for i in 0..N_FEATURES {
            for j in 0..N_FEATURES {
                let v: f64 = (0..N_FEATURES).map(|k| l[i][k] * l[j][k]).sum();
                assert!((v - s[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn syn1_marginals() {
        let b = generate(&SynSpec::syn1()).unwrap();
        assert_eq!(b.train.len(), 80_000);
        assert_eq!(b.test.len(), 8_000);
        assert!((b.train.coupon_ratio() - 0.3478).abs() < 0.005, "{}", b.train.coupon_ratio());
        assert!((b.train.avg_ctr() - 0.208).abs() < 0.01, "{}", b.train.avg_ctr());
        assert!(b.test.rct && !b.train.rct);
    }

    #[test]
    fn same_seed_is_identical() {
        let spec = small(SynSpec::syn3(), 2_000, 500);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynSpec { seed: 99, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().train, generate(&other).unwrap().train);
    }

    #[test]
    fn row_invariants_hold() {
        for spec in [SynSpec::syn1(), SynSpec::syn2(), SynSpec::syn3()] {
            let spec = small(spec, 5_000, 2_000);
            let b = generate(&spec).unwrap();
            let floor = spec.min_mode() - 3.0 * spec.mode_jitter_sd;
            for s in b.train.samples.iter().chain(&b.test.samples) {
                s.validate().unwrap();
                if s.w {
                    assert!(s.t > 0.0 && s.t >= floor - 1e-12);
                }
                let p0 = s.truth_click_prob(0.0).unwrap();
                let p1 = s.truth_click_prob(s.t + 1.0).unwrap();
                assert!(p1 >= p0);
            }
        }
    }

    #[test]
    fn confounding_only_in_train_split() {
        for spec in [SynSpec::syn1(), SynSpec::syn3()] {
            let spec = small(spec, 20_000, 20_000);
            let b = generate(&spec).unwrap();
            let pairs = |d: &Dataset| -> (Vec<f64>, Vec<f64>) {
                d.samples
                    .iter()
                    .filter(|s| s.w)
                    .map(|s| (dot(&b.meta.assignment_coef, &s.x), s.t))
                    .unzip()
            };
            let (s_tr, t_tr) = pairs(&b.train);
            let (s_te, t_te) = pairs(&b.test);
            assert!(corr(&s_tr, &t_tr) > 0.0);
            let bound = 3.0 / (s_te.len() as f64).sqrt();
            assert!(corr(&s_te, &t_te).abs() < bound, "{}", corr(&s_te, &t_te));
        }
    }

    #[test]
    fn rct_slope_recovers_mean_sensitivity() {
        // Large randomized split so the pooled slope is tight.
        let spec = small(SynSpec::syn1(), 2_000, 200_000);
        let b = generate(&spec).unwrap();
        let rows = &b.test.samples;
        let t: Vec<f64> = rows.iter().map(|s| s.t).collect();
        let r: Vec<f64> = rows
            .iter()
            .map(|s| if s.y { 1.0 } else { 0.0 } - s.truth_p0.unwrap())
            .collect();
        let n = t.len() as f64;
        let (mt, mr) = (t.iter().sum::<f64>() / n, r.iter().sum::<f64>() / n);
        let cov: f64 = t.iter().zip(&r).map(|(a, b)| (a - mt) * (b - mr)).sum();
        let var: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
        let slope = cov / var;
        let mean_eta = rows.iter().map(|s| s.truth_eta.unwrap()).sum::<f64>() / n;
        assert!((slope - mean_eta).abs() < 0.1 * mean_eta, "slope {slope} vs {mean_eta}");
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad_weights = SynSpec { mode_weights: vec![0.5], ..SynSpec::syn1() };
        assert!(matches!(generate(&bad_weights), Err(Error::Config(_))));
        let too_wide = SynSpec { mode_jitter_sd: 1.0, ..SynSpec::syn1() };
        assert!(too_wide.validate().is_err());
        let unreachable = SynSpec { target_avg_ctr: 0.999, n_train: 100, n_test: 10, ..SynSpec::syn1() };
        assert!(matches!(generate(&unreachable), Err(Error::Config(_))));
        assert!(matches!(SynSpec::preset("syn9"), Err(Error::Usage(_))));
    }

    #[test]
    fn spec_file_roundtrip() {
        let text = "name=custom\nn_train=100\nn_test=50\nmodes=1.0, 2.0\nmode_weights=0.3,0.7\nmode_jitter_sd=0.1\nseed=5\n";
        let spec = SynSpec::from_text(text).unwrap();
        assert_eq!(spec.modes, vec![1.0, 2.0]);
        assert_eq!(spec.mode_weights, vec![0.3, 0.7]);
        assert_eq!(spec.seed, 5);
        assert!(SynSpec::from_text("bogus=1").is_err());
    }
}
