use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable matrix and its accumulated gradient.
///
/// Weight matrices are stored `fan_in x fan_out` so that a batch `X` (rows are
/// samples) maps through a layer as `X W + b`. Biases are `1 x fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.dim()
    }
}

/// Flat, ordered collection of every trainable tensor of a model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<ParamTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        self.tensors.push(ParamTensor::new(name, value));
        ParamId(self.tensors.len() - 1)
    }

    pub fn zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Array2::zeros((rows, cols)))
    }

    /// Uniform in `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`.
    pub fn glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..=limit));
        self.add(name, value)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor {
        &mut self.tensors[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.tensors[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array2<f64> {
        &self.tensors[id.0].grad
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.tensors.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad.fill(0.0);
        }
    }

    /// Overwrite a tensor's value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Array2<f64>) -> Result<()> {
        let t = &mut self.tensors[id.0];
        if t.value.dim() != value.dim() {
            return Err(Error::config(format!(
                "parameter {} has shape {:?}, got {:?}",
                t.name,
                t.value.dim(),
                value.dim()
            )));
        }
        t.value = value;
        Ok(())
    }

    /// Serialize as `name=rows cols v0 v1 ...` lines, row-major, lossless decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tensors {
            let (r, c) = t.value.dim();
            out.push_str(&format!("{}={} {}", t.name, r, c));
            for v in t.value.iter() {
                out.push(' ');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Load values from `name=rows cols v...` lines into tensors already
    /// registered under the same names. Unknown names and shape mismatches
    /// are configuration errors; every registered tensor must be present.
    pub fn load_values<'a>(&mut self, lines: impl IntoIterator<Item = (usize, &'a str)>) -> Result<()> {
        let mut seen = vec![false; self.tensors.len()];
        for (line_no, line) in lines {
            let (name, rest) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {line_no}: expected name=values")))?;
            let id = self
                .find(name.trim())
                .ok_or_else(|| Error::config(format!("line {line_no}: unknown parameter {name}")))?;
            let mut fields = rest.split_whitespace();
            let mut dim = || -> Result<usize> {
                fields
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::config(format!("line {line_no}: bad shape for {name}")))
            };
            let (rows, cols) = (dim()?, dim()?);
            let values = fields
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::config(format!("line {line_no}: bad number {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let arr = Array2::from_shape_vec((rows, cols), values)
                .map_err(|e| Error::config(format!("line {line_no}: {e}")))?;
            self.set_value(id, arr)?;
            seen[id.0] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!(
                "parameter {} missing from model file",
                self.tensors[i].name
            )));
        }
        Ok(())
    }
}
