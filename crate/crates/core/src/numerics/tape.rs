//! Reverse-mode differentiation over dense row-batched matrices.
//!
//! Every value on the tape is an `n x m` matrix whose rows are samples. Nodes
//! are appended in evaluation order, so a single reverse sweep over the node
//! list visits each node exactly once after all of its consumers.

use ndarray::{s, Array1, Array2, Axis, Zip};

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before logs and logits.
pub const PROB_EPS: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Inverse sigmoid of a clamped probability.
pub fn logit(p: f64) -> f64 {
    let p = clamp_prob(p);
    (p / (1.0 - p)).ln()
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a^T b`
    MatMulTn(Var, Var),
    /// `a (n x m) + b (1 x m)` broadcast over rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a (n x m)` with row i scaled by `g[i, col]`.
    MulCol(Var, Var, usize),
    /// `a (n x m)` with row i scaled by a constant weight.
    ScaleRows(Var, Array1<f64>),
    /// Scale only; the shift has no gradient.
    Affine(Var, f64),
    Sigmoid(Var),
    Relu(Var),
    Abs(Var),
    Square(Var),
    Logit(Var),
    Bce(Var, Array2<f64>),
    SoftmaxRows(Var),
    Concat(Vec<Var>),
    StopGradient,
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Ordered record of primitive operations for one forward evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    /// Values substituted, in order, for stop-gradient outputs.
    frozen: Option<Vec<Array2<f64>>>,
    stops_seen: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose stop-gradient nodes emit `values` (in creation order)
    /// instead of their inputs. Evaluating a perturbed loss this way holds the
    /// blocked paths constant, which is what the analytic gradient
    /// differentiates.
    pub fn with_frozen_stops(values: Vec<Array2<f64>>) -> Self {
        Self {
            frozen: Some(values),
            ..Self::default()
        }
    }

    /// Outputs of every stop-gradient node, in creation order.
    pub fn stop_values(&self) -> Vec<Array2<f64>> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::StopGradient))
            .map(|n| n.value.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn shape_err(&self, what: &str, a: Var, b: Var) -> Error {
        Error::config(format!(
            "{what}: incompatible shapes {:?} and {:?}",
            self.value(a).dim(),
            self.value(b).dim()
        ))
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).ncols() != self.value(b).nrows() {
            return Err(self.shape_err("matmul", a, b));
        }
        let v = self.value(a).dot(self.value(b));
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).nrows() != self.value(b).nrows() {
            return Err(self.shape_err("matmul_tn", a, b));
        }
        let v = self.value(a).t().dot(self.value(b));
        Ok(self.push(v, Op::MatMulTn(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let ca = self.value(a).ncols();
        let (rb, cb) = self.value(row).dim();
        if rb != 1 || ca != cb {
            return Err(self.shape_err("add_row", a, row));
        }
        let mut v = self.value(a).clone();
        v += &self.value(row).row(0);
        Ok(self.push(v, Op::AddRow(a, row)))
    }

    fn same_shape(&self, what: &str, a: Var, b: Var) -> Result<()> {
        if self.value(a).dim() != self.value(b).dim() {
            return Err(self.shape_err(what, a, b));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a) + self.value(b);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a) - self.value(b);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a) * self.value(b);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Scale each row of `a` by the matching entry of column `col` of `g`.
    pub fn mul_col(&mut self, a: Var, g: Var, col: usize) -> Result<Var> {
        if self.value(a).nrows() != self.value(g).nrows() || col >= self.value(g).ncols() {
            return Err(self.shape_err("mul_col", a, g));
        }
        let w = self.value(g).column(col).to_owned();
        let v = self.value(a) * &w.insert_axis(Axis(1));
        Ok(self.push(v, Op::MulCol(a, g, col)))
    }

    /// Scale each row by a constant weight (row masks, per-row loss weights).
    pub fn scale_rows(&mut self, a: Var, weights: Array1<f64>) -> Result<Var> {
        if self.value(a).nrows() != weights.len() {
            return Err(Error::config(format!(
                "scale_rows: {} rows vs {} weights",
                self.value(a).nrows(),
                weights.len()
            )));
        }
        let v = self.value(a) * &weights.view().insert_axis(Axis(1));
        Ok(self.push(v, Op::ScaleRows(a, weights)))
    }

    /// `scale * a + shift`
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(a).mapv(|x| scale * x + shift);
        self.push(v, Op::Affine(a, scale))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Inverse sigmoid with the probability clamp applied first.
    pub fn logit(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(logit);
        self.push(v, Op::Logit(a))
    }

    /// Elementwise binary cross-entropy of probabilities `p` against labels.
    pub fn bce(&mut self, p: Var, labels: Array2<f64>) -> Result<Var> {
        if self.value(p).dim() != labels.dim() {
            return Err(Error::config(format!(
                "bce: predictions {:?} vs labels {:?}",
                self.value(p).dim(),
                labels.dim()
            )));
        }
        let mut v = Array2::zeros(labels.raw_dim());
        Zip::from(&mut v)
            .and(self.value(p))
            .and(&labels)
            .for_each(|o, &p, &y| {
                let p = clamp_prob(p);
                *o = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            });
        Ok(self.push(v, Op::Bce(p, labels)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let total = row.sum();
            row.mapv_inplace(|x| x / total);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::config("concat of zero tensors"))?;
        let rows = self.value(first).nrows();
        if let Some(&bad) = parts.iter().find(|&&p| self.value(p).nrows() != rows) {
            return Err(self.shape_err("concat", first, bad));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| Error::config(format!("concat: {e}")))?;
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    /// Forward identity; contributes exactly zero gradient to `a`.
    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let k = self.stops_seen;
        self.stops_seen += 1;
        let v = match self.frozen.as_ref().and_then(|f| f.get(k)) {
            Some(f) if f.dim() == self.value(a).dim() => f.clone(),
            _ => self.value(a).clone(),
        };
        self.push(v, Op::StopGradient)
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), total), Op::Sum(a))
    }

    /// `plus[v] - minus[v]` for two tapes recorded from the same program.
    /// Sums and other linear nodes are differenced term by term so the
    /// cancellation happens on small per-row values rather than on totals.
    pub fn difference(plus: &Tape, minus: &Tape, v: Var) -> Array2<f64> {
        let direct = || &plus.nodes[v.0].value - &minus.nodes[v.0].value;
        if plus.nodes.len() != minus.nodes.len() {
            return direct();
        }
        match &plus.nodes[v.0].op {
            Op::Sum(a) => Array2::from_elem((1, 1), Self::difference(plus, minus, *a).sum()),
            Op::Add(a, b) => Self::difference(plus, minus, *a) + Self::difference(plus, minus, *b),
            Op::Sub(a, b) => Self::difference(plus, minus, *a) - Self::difference(plus, minus, *b),
            Op::Affine(a, scale) => Self::difference(plus, minus, *a) * *scale,
            Op::ScaleRows(a, w) => {
                let w = w.view().insert_axis(Axis(1));
                Self::difference(plus, minus, *a) * w
            }
            _ => direct(),
        }
    }

    /// Propagate `seed * d(loss)/d(.)` back through the tape and add the
    /// result into the `grad` of every parameter reached.
    pub fn backward(&self, loss: Var, seed: f64, store: &mut ParamStore) -> Result<()> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::usage("backward called before any forward evaluation"));
        }
        if self.value(loss).dim() != (1, 1) {
            return Err(Error::usage(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(loss).dim()
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Array2::from_elem((1, 1), seed));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant | Op::StopGradient => {}
                Op::Param(id) => {
                    let t = store.get_mut(*id);
                    if t.grad.dim() != g.dim() {
                        return Err(Error::usage(format!(
                            "parameter {} changed shape since forward",
                            t.name
                        )));
                    }
                    t.grad += &g;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulTn(a, b) => {
                    let ga = self.value(*b).dot(&g.t());
                    let gb = self.value(*a).dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *row, gr);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, -&g);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MulCol(a, gate, col) => {
                    let w = self.value(*gate).column(*col).to_owned().insert_axis(Axis(1));
                    let ga = &g * &w;
                    let per_row = (&g * self.value(*a)).sum_axis(Axis(1));
                    let mut gg = Array2::zeros(self.value(*gate).raw_dim());
                    gg.slice_mut(s![.., *col]).assign(&per_row);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *gate, gg);
                }
                Op::ScaleRows(a, w) => {
                    let ga = &g * &w.view().insert_axis(Axis(1));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Affine(a, scale) => {
                    accumulate(&mut grads, *a, g * *scale);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|gi, &y| *gi *= y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gi, &x| {
                            if x <= 0.0 {
                                *gi = 0.0
                            }
                        });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gi, &x| *gi *= sign(x));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gi, &x| *gi *= 2.0 * x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Logit(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|gi, &p| {
                        *gi *= if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                            1.0 / (p * (1.0 - p))
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Bce(p, labels) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*p))
                        .and(labels)
                        .for_each(|gi, &p, &y| {
                            *gi *= if (PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                                (p - y) / (p * (1.0 - p))
                            } else {
                                0.0
                            }
                        });
                    accumulate(&mut grads, *p, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let dot = (&g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = y * &(&g - &dot);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let width = self.value(p).ncols();
                        let gp = g.slice(s![.., start..start + width]).to_owned();
                        accumulate(&mut grads, p, gp);
                        start += width;
                    }
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        Ok(())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_param(store: &mut ParamStore, v: f64) -> ParamId {
        store.add("w", array![[v]])
    }

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::new();
        let w = scalar_param(&mut store, 3.0);
        let mut tape = Tape::new();
        let x = tape.param(&store, w);
        let y = tape.mul(x, x).unwrap();
        let l = tape.sum(y);
        tape.backward(l, 1.0, &mut store).unwrap();
        assert_eq!(store.grad(w)[[0, 0]], 6.0);
    }

    #[test]
    fn stop_gradient_kills_one_path() {
        let mut store = ParamStore::new();
        let w = scalar_param(&mut store, 3.0);
        let mut tape = Tape::new();
        let x = tape.param(&store, w);
        let sg = tape.stop_gradient(x);
        let y = tape.mul(sg, x).unwrap();
        let l = tape.sum(y);
        tape.backward(l, 1.0, &mut store).unwrap();
        assert_eq!(tape.scalar(l), 9.0);
        assert_eq!(store.grad(w)[[0, 0]], 3.0);
    }

    #[test]
    fn stop_gradient_forward_identity_backward_zero() {
        let mut store = ParamStore::new();
        let w = store.add("x", array![[1.5, -2.0]]);
        let mut tape = Tape::new();
        let x = tape.param(&store, w);
        let sg = tape.stop_gradient(x);
        assert_eq!(tape.value(sg), &array![[1.5, -2.0]]);
        let l = tape.sum(sg);
        tape.backward(l, 1.0, &mut store).unwrap();
        assert_eq!(store.grad(w), &array![[0.0, 0.0]]);

        store.zero_grads();
        let mut tape = Tape::new();
        let x = tape.param(&store, w);
        let sg = tape.stop_gradient(x);
        let both = tape.add(x, sg).unwrap();
        let l = tape.sum(both);
        tape.backward(l, 1.0, &mut store).unwrap();
        assert_eq!(store.grad(w), &array![[1.0, 1.0]]);
    }

    #[test]
    fn backward_before_forward_is_usage_error() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let x = tape.constant(array![[1.0]]);
        let empty = Tape::new();
        assert!(matches!(
            empty.backward(x, 1.0, &mut store),
            Err(Error::Usage(_))
        ));
        let v = tape.constant(array![[1.0, 2.0]]);
        assert!(matches!(tape.backward(v, 1.0, &mut store), Err(Error::Usage(_))));
    }

    #[test]
    fn softmax_rows_normalized() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[1.0, 2.0, 3.0], [-50.0, 0.0, 700.0], [0.0, 0.0, 0.0]]);
        let y = tape.softmax_rows(x);
        for row in tape.value(y).rows() {
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!((tape.value(y)[[2, 0]] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_and_bounded() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(sigmoid(30.0) < 1.0 && sigmoid(-30.0) > 0.0);
        assert!((logit(0.75) - 3f64.ln()).abs() < 1e-15);
        assert!(logit(0.0).is_finite() && logit(1.0).is_finite());
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Array2::zeros((2, 3)));
        let b = tape.constant(Array2::zeros((2, 3)));
        assert!(matches!(tape.matmul(a, b), Err(Error::Config(_))));
        let c = tape.constant(Array2::zeros((3, 2)));
        assert!(matches!(tape.add(a, c), Err(Error::Config(_))));
    }

    #[test]
    fn frozen_stops_replace_values_in_order() {
        let mut tape = Tape::with_frozen_stops(vec![array![[5.0]], array![[7.0, 8.0]]]);
        let a = tape.constant(array![[1.0]]);
        let b = tape.constant(array![[2.0, 3.0]]);
        let sa = tape.stop_gradient(a);
        let sb = tape.stop_gradient(b);
        let sc = tape.stop_gradient(a);
        assert_eq!(tape.value(sa), &array![[5.0]]);
        assert_eq!(tape.value(sb), &array![[7.0, 8.0]]);
        assert_eq!(tape.value(sc), &array![[1.0]]);
        assert_eq!(tape.stop_values(), vec![array![[5.0]], array![[7.0, 8.0]], array![[1.0]]]);
    }

    #[test]
    fn difference_matches_direct_subtraction() {
        let build = |x: f64| {
            let mut tape = Tape::new();
            let a = tape.constant(array![[x, 2.0 * x], [1.0, x * x]]);
            let s = tape.sigmoid(a);
            let r = tape.scale_rows(s, array![1.0, 0.5]).unwrap();
            let t = tape.sum(r);
            let u = tape.affine(t, 3.0, 1.0);
            (tape, u)
        };
        let (p, root) = build(0.3);
        let (m, _) = build(0.1);
        let d = Tape::difference(&p, &m, root)[[0, 0]];
        assert!((d - (p.scalar(root) - m.scalar(root))).abs() < 1e-14);
    }
}
