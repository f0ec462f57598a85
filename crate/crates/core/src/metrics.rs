//! Evaluation metrics: AUC, LogLoss, PCOC, rank correlation and the
//! cumulative-slope uplift curves (CS-AUUC, CS-Qini).
//!
//! The cumulative-slope curve ranks rows by predicted unit uplift, takes the
//! top `phi` fraction and regresses outcome on dose within that prefix:
//!
//! ```text
//! beta(phi) = cov(T, Y) / var(T)            over the top ceil(phi * n) rows
//! CS-AUUC   = integral_0^1 beta(phi) * phi * n dphi
//! CS-Qini   = integral_0^1 (beta(phi) - beta_global) * phi * n dphi
//! ```

use serde::{Deserialize, Serialize};

use crate::datagen::Sample;
use crate::error::{Error, Result};
use crate::numerics::clamp_prob;

pub const DEFAULT_GRID: usize = 100;

/// Average 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Probability that a random positive outscores a random negative, ties ½.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::config("auc: labels and scores differ in length"));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("auc needs both classes".into()));
    }
    let ranks = average_ranks(scores);
    let pos_rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y).map(|(r, _)| r).sum();
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub fn logloss(labels: &[bool], probs: &[f64]) -> Result<f64> {
    if labels.len() != probs.len() {
        return Err(Error::config("logloss: labels and probabilities differ in length"));
    }
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("logloss of an empty set".into()));
    }
    let total: f64 = labels
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = clamp_prob(p);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::UndefinedMetric("spearman needs two equal-length series of length >= 2".into()));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let slope_parts = |x: &[f64], y: &[f64]| {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
        let vx: f64 = x.iter().map(|u| (u - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
        (cov, vx, vy)
    };
    let (cov, va, vb) = slope_parts(&ra, &rb);
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedMetric("spearman of a constant series".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

/// OLS slope with intercept, `cov(T, Y) / var(T)`; `None` when `var(T) = 0`.
pub fn ols_slope(t: &[f64], y: &[f64]) -> Option<f64> {
    let mut acc = SlopeAccumulator::default();
    for (&t, &y) in t.iter().zip(y) {
        acc.push(t, y);
    }
    acc.slope()
}

/// Streaming co-moments (Welford), exact zero variance for constant doses.
#[derive(Clone, Copy, Debug, Default)]
struct SlopeAccumulator {
    n: f64,
    mean_t: f64,
    mean_y: f64,
    m2_t: f64,
    c_ty: f64,
}

impl SlopeAccumulator {
    fn push(&mut self, t: f64, y: f64) {
        self.n += 1.0;
        let dt = t - self.mean_t;
        self.mean_t += dt / self.n;
        self.mean_y += (y - self.mean_y) / self.n;
        self.m2_t += dt * (t - self.mean_t);
        self.c_ty += dt * (y - self.mean_y);
    }

    fn slope(&self) -> Option<f64> {
        (self.m2_t > 0.0).then(|| self.c_ty / self.m2_t)
    }
}

/// Indices sorted by descending score; equal scores keep original order.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Prefix slopes on the grid `phi_k = k / K`. Only grid points whose prefix
/// has dose variance are kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulativeSlopeCurve {
    pub phi: Vec<f64>,
    pub slope: Vec<f64>,
    pub global_slope: f64,
    pub n: usize,
    pub grid: usize,
}

pub const CURVE_HEADER: &str = "phi,beta,beta_global";

impl CumulativeSlopeCurve {
    /// `scores` are predicted unit uplifts aligned with `samples`.
    pub fn new(scores: &[f64], samples: &[Sample], grid: usize) -> Result<Self> {
        if scores.len() != samples.len() {
            return Err(Error::config("scores and samples differ in length"));
        }
        if grid == 0 {
            return Err(Error::config("grid size must be positive"));
        }
        let n = samples.len();
        let treated = samples.iter().filter(|s| s.w).count();
        if treated == 0 || treated == n {
            return Err(Error::UndefinedMetric(
                "cumulative slope needs treated and control rows".into(),
            ));
        }
        let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
        let y: Vec<f64> = samples.iter().map(|s| f64::from(u8::from(s.y))).collect();
        let global_slope = ols_slope(&t, &y)
            .ok_or_else(|| Error::UndefinedMetric("dose has no variance".into()))?;

        let order = rank_desc(scores);
        let mut acc = SlopeAccumulator::default();
        let mut taken = 0;
        let (mut phi, mut slope) = (Vec::with_capacity(grid), Vec::with_capacity(grid));
        for k in 1..=grid {
            let m = (k * n).div_ceil(grid);
            while taken < m {
                let i = order[taken];
                acc.push(t[i], y[i]);
                taken += 1;
            }
            if let Some(b) = acc.slope() {
                phi.push(k as f64 / grid as f64);
                slope.push(b);
            }
        }
        Ok(Self {
            phi,
            slope,
            global_slope,
            n,
            grid,
        })
    }

    /// Curve points `(phi, value)` used for integration. The origin anchors
    /// the curve only when the first grid point is defined; otherwise the
    /// integral starts at the first defined point.
    fn integrate(&self, value: impl Fn(f64, f64) -> f64) -> f64 {
        let n = self.n as f64;
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(self.phi.len() + 1);
        let step = 1.0 / self.grid as f64;
        if self.phi.first().is_some_and(|&p| p == step) {
            pts.push((0.0, 0.0));
        }
        for (&p, &b) in self.phi.iter().zip(&self.slope) {
            pts.push((p, value(b, p * n)));
        }
        trapezoid(&pts)
    }

    pub fn cs_auuc(&self) -> f64 {
        self.integrate(|b, mass| b * mass)
    }

    pub fn cs_qini(&self) -> f64 {
        let g = self.global_slope;
        self.integrate(|b, mass| (b - g) * mass)
    }

    /// Area under `beta_global * phi * n` on the same points as the curve.
    pub fn global_area(&self) -> f64 {
        let g = self.global_slope;
        self.integrate(|_, mass| g * mass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CURVE_HEADER}\n");
        for (p, b) in self.phi.iter().zip(&self.slope) {
            out.push_str(&format!("{p},{b},{}\n", self.global_slope));
        }
        out
    }
}

pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

pub fn cs_auuc(scores: &[f64], samples: &[Sample], grid: usize) -> Result<f64> {
    Ok(CumulativeSlopeCurve::new(scores, samples, grid)?.cs_auuc())
}

pub fn cs_qini(scores: &[f64], samples: &[Sample], grid: usize) -> Result<f64> {
    Ok(CumulativeSlopeCurve::new(scores, samples, grid)?.cs_qini())
}

/// Predicted over observed click rate for rows whose dose lies in one bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcocBin {
    pub lo: f64,
    pub hi: f64,
    pub ratio: f64,
    pub count: usize,
}

/// Per-bin PCOC with bins `[edges[i], edges[i+1])`, the last one closed.
/// Bins without rows or without any click are omitted.
pub fn pcoc(predictions: &[f64], samples: &[Sample], edges: &[f64]) -> Result<Vec<PcocBin>> {
    if predictions.len() != samples.len() {
        return Err(Error::config("predictions and samples differ in length"));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("pcoc bin edges must be strictly increasing, at least two"));
    }
    let nb = edges.len() - 1;
    let mut pred = vec![0.0; nb];
    let mut clicks = vec![0.0; nb];
    let mut count = vec![0usize; nb];
    for (p, s) in predictions.iter().zip(samples) {
        let Some(b) = (0..nb).find(|&b| s.t >= edges[b] && (s.t < edges[b + 1] || (b + 1 == nb && s.t <= edges[nb]))) else {
            continue;
        };
        pred[b] += p;
        clicks[b] += f64::from(u8::from(s.y));
        count[b] += 1;
    }
    Ok((0..nb)
        .filter(|&b| count[b] > 0 && clicks[b] > 0.0)
        .map(|b| PcocBin {
            lo: edges[b],
            hi: edges[b + 1],
            ratio: pred[b] / clicks[b],
            count: count[b],
        })
        .collect())
}

/// A control bin `[0, t_min)` followed by `n_bins` equal-width dose bins
/// over `[t_min, t_max]`.
pub fn intensity_edges(t_min: f64, t_max: f64, n_bins: usize) -> Vec<f64> {
    let mut edges = vec![0.0];
    let n = n_bins.max(1);
    edges.extend((0..=n).map(|i| t_min + (t_max - t_min) * i as f64 / n as f64));
    edges
}

/// The five headline numbers plus the calibration bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Absent when the evaluated rows hold a single class.
    pub auc: Option<f64>,
    pub logloss: f64,
    pub cs_auuc: f64,
    pub cs_qini: f64,
    pub pcoc_bins: Vec<PcocBin>,
}

pub const REPORT_HEADER: &str = "auc,logloss,cs_auuc,cs_qini";

impl MetricsReport {
    /// Base-CTR quality is scored on control rows with `p0`; the uplift
    /// curves use `uplift` over all rows; PCOC bins `p0` by dose.
    pub fn compute(p0: &[f64], uplift: &[f64], samples: &[Sample], grid: usize, edges: &[f64]) -> Result<Self> {
        if p0.len() != samples.len() || uplift.len() != samples.len() {
            return Err(Error::config("predictions and samples differ in length"));
        }
        let (labels, probs): (Vec<bool>, Vec<f64>) = samples
            .iter()
            .zip(p0)
            .filter(|(s, _)| !s.w)
            .map(|(s, &p)| (s.y, p))
            .unzip();
        let auc = match auc(&labels, &probs) {
            Ok(a) => Some(a),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        let curve = CumulativeSlopeCurve::new(uplift, samples, grid)?;
        Ok(Self {
            auc,
            logloss: logloss(&labels, &probs)?,
            cs_auuc: curve.cs_auuc(),
            cs_qini: curve.cs_qini(),
            pcoc_bins: pcoc(p0, samples, edges)?,
        })
    }

    pub fn csv_row(&self) -> String {
        let auc = self.auc.map(|a| a.to_string()).unwrap_or_default();
        format!("{auc},{},{},{}", self.logloss, self.cs_auuc, self.cs_qini)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(t: f64, y: bool) -> Sample {
        Sample {
            x: [0.0; 8],
            w: t > 0.0,
            t,
            y,
            truth_p0: None,
            truth_eta: None,
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[false, true], &[0.1, 0.9]).unwrap(), 1.0);
        assert_eq!(auc(&[false, true], &[0.9, 0.1]).unwrap(), 0.0);
        assert_eq!(auc(&[false, true, true, false], &[0.2, 0.3, 0.2, 0.1]).unwrap(), 0.875);
        assert!(matches!(auc(&[true, true], &[0.1, 0.2]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn auc_matches_pair_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.random_range(2..60);
            let labels: Vec<bool> = (0..n).map(|i| i == 0 || (i != 1 && rng.random_bool(0.4))).collect();
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect();
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if labels[i] && !labels[j] {
                        den += 1.0;
                        num += if scores[i] > scores[j] {
                            1.0
                        } else if scores[i] == scores[j] {
                            0.5
                        } else {
                            0.0
                        };
                    }
                }
            }
            assert!((auc(&labels, &scores).unwrap() - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn logloss_examples() {
        let l = logloss(&[true, false, true], &[0.5, 0.5, 0.5]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let l = logloss(&[true, false], &[1.0, 0.0]).unwrap();
        assert!(l > 0.0 && l < 2e-7);
        let l = logloss(&[true, false], &[0.8, 0.3]).unwrap();
        assert!((l - (-(0.8f64.ln()) - 0.7f64.ln()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn slope_examples() {
        assert_eq!(ols_slope(&[0.0, 1.0], &[0.0, 1.0]), Some(1.0));
        assert_eq!(ols_slope(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]), Some(0.0));
        assert_eq!(ols_slope(&[2.5, 2.5, 2.5], &[0.0, 1.0, 1.0]), None);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..4.0)).collect();
        let y: Vec<f64> = (0..20).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
        let (mt, my) = (t.iter().sum::<f64>() / 20.0, y.iter().sum::<f64>() / 20.0);
        let cov: f64 = t.iter().zip(&y).map(|(a, b)| (a - mt) * (b - my)).sum();
        let var: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
        assert!((ols_slope(&t, &y).unwrap() - cov / var).abs() < 1e-12);
    }

    #[test]
    fn linear_outcome_has_constant_slope() {
        // y = c * t exactly; y is a click flag, so fake it through the slope
        // of a two-valued design: t in {0, 1}, y = t gives c = 1.
        let samples: Vec<Sample> = (0..200).map(|i| row(f64::from(i % 2), i % 2 == 1)).collect();
        let scores: Vec<f64> = (0..200).map(|i| -(i as f64)).collect();
        let curve = CumulativeSlopeCurve::new(&scores, &samples, 100).unwrap();
        assert!(curve.slope.iter().all(|&b| (b - 1.0).abs() < 1e-12));
        assert!((curve.cs_auuc() - 100.0).abs() < 1e-9);
        assert!(curve.cs_qini().abs() < 1e-9);
    }

    #[test]
    fn ties_keep_original_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<Sample> = (0..150)
            .map(|_| {
                let t = if rng.random_bool(0.4) { rng.random_range(1.0..3.0) } else { 0.0 };
                row(t, rng.random_bool(0.3))
            })
            .collect();
        let flat = vec![0.7; 150];
        let descending: Vec<f64> = (0..150).map(|i| -(i as f64)).collect();
        let a = CumulativeSlopeCurve::new(&flat, &samples, 100).unwrap();
        let b = CumulativeSlopeCurve::new(&descending, &samples, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn undefined_metrics() {
        let all_control: Vec<Sample> = (0..10).map(|i| row(0.0, i % 2 == 0)).collect();
        assert!(matches!(
            cs_auuc(&[0.0; 10], &all_control, 10),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pcoc_examples() {
        let samples = vec![row(0.0, true), row(0.0, false), row(1.5, true), row(3.0, true), row(3.0, false)];
        let edges = intensity_edges(1.0, 3.0, 2);
        assert_eq!(edges, vec![0.0, 1.0, 2.0, 3.0]);
        let observed = [0.5, 0.5, 1.0, 0.5, 0.5];
        let bins = pcoc(&observed, &samples, &edges).unwrap();
        assert_eq!(bins.len(), 3);
        assert!(bins.iter().all(|b| (b.ratio - 1.0).abs() < 1e-12));
        let doubled: Vec<f64> = observed.iter().map(|p| p * 2.0).collect();
        assert!(pcoc(&doubled, &samples, &edges).unwrap().iter().all(|b| (b.ratio - 2.0).abs() < 1e-12));
        let none_clicked = vec![row(1.5, false)];
        assert!(pcoc(&[0.3], &none_clicked, &edges).unwrap().is_empty());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }
}
