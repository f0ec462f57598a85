use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// One fully connected layer `act(x W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let weight = store.glorot(format!("{name}.w"), fan_in, fan_out, rng);
        let bias = store.zeros(format!("{name}.b"), 1, fan_out);
        Self {
            weight,
            bias,
            activation,
        }
    }

    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let z = tape.matmul(x, w)?;
        let z = tape.add_row(z, b)?;
        Ok(self.activation.apply(tape, z))
    }
}

/// Stack of dense layers sharing one hidden activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes` lists every width from input to output, e.g. `[8, 32, 16]`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Dense::new(store, &format!("{name}.{i}"), sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self, store: &ParamStore) -> usize {
        store.value(self.layers[0].weight).nrows()
    }

    pub fn output_dim(&self, store: &ParamStore) -> usize {
        store.value(self.layers[self.layers.len() - 1].weight).ncols()
    }

    pub fn weights(&self) -> Vec<ParamId> {
        self.layers.iter().map(|l| l.weight).collect()
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, input: Var) -> Result<Var> {
        self.forward_modulated(store, tape, input, |_, h, _| Ok(h))
    }

    /// Forward pass with `hook(layer, h, tape)` applied to the output of every
    /// hidden layer (never the output layer).
    pub fn forward_modulated<F>(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        input: Var,
        mut hook: F,
    ) -> Result<Var>
    where
        F: FnMut(usize, Var, &mut Tape) -> Result<Var>,
    {
        let expected = self.input_dim(store);
        let got = tape.value(input).ncols();
        if got != expected {
            return Err(Error::config(format!(
                "MLP expects input width {expected}, got {got}"
            )));
        }
        let mut h = input;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(store, tape, h)?;
            if i < last {
                h = hook(i, h, tape)?;
            }
            if tape.value(h).iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(
                    format!("layer {i}"),
                    "non-finite activation",
                ));
            }
        }
        Ok(h)
    }
}

/// Free-function form of [`Mlp::forward`].
pub fn mlp_forward(mlp: &Mlp, store: &ParamStore, input: Var, tape: &mut Tape) -> Result<Var> {
    mlp.forward(store, tape, input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new(&mut store, "m", &[2, 2], Activation::Relu, Activation::Identity, &mut rng);
        store.set_value(mlp.layers[0].weight, Array2::eye(2)).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(array![[3.0, -1.0]]);
        let y = mlp.forward(&store, &mut tape, x).unwrap();
        assert_eq!(tape.value(y), &array![[3.0, -1.0]]);
    }

    #[test]
    fn sigmoid_of_zero() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new(&mut store, "m", &[2, 1], Activation::Relu, Activation::Sigmoid, &mut rng);
        store.set_value(mlp.layers[0].weight, array![[1.0], [1.0]]).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(array![[0.0, 0.0]]);
        let y = mlp_forward(&mlp, &store, x, &mut tape).unwrap();
        assert_eq!(tape.value(y)[[0, 0]], 0.5);
    }

    #[test]
    fn two_layers_match_straight_line_arithmetic() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mlp = Mlp::new(&mut store, "m", &[3, 4, 2], Activation::Relu, Activation::Sigmoid, &mut rng);
        // Non-zero biases so they are exercised too.
        for l in &mlp.layers {
            let b = store.value(l.bias).mapv(|_| rng.random_range(-0.5..0.5));
            store.set_value(l.bias, b).unwrap();
        }
        let input = [0.3, -1.2, 2.0];
        let mut tape = Tape::new();
        let x = tape.constant(Array2::from_shape_vec((1, 3), input.to_vec()).unwrap());
        let y = mlp.forward(&store, &mut tape, x).unwrap();

        let (w0, b0) = (store.value(mlp.layers[0].weight), store.value(mlp.layers[0].bias));
        let (w1, b1) = (store.value(mlp.layers[1].weight), store.value(mlp.layers[1].bias));
        let mut hidden = [0.0; 4];
        for j in 0..4 {
            let mut z = b0[[0, j]];
            for i in 0..3 {
                z += input[i] * w0[[i, j]];
            }
            hidden[j] = z.max(0.0);
        }
        for k in 0..2 {
            let mut z = b1[[0, k]];
            for j in 0..4 {
                z += hidden[j] * w1[[j, k]];
            }
            let expected = 1.0 / (1.0 + (-z).exp());
            assert!((tape.value(y)[[0, k]] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new(&mut store, "m", &[3, 2], Activation::Relu, Activation::Identity, &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(Array2::zeros((1, 2)));
        assert!(matches!(mlp.forward(&store, &mut tape, x), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_activation_names_layer() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new(&mut store, "m", &[1, 1, 1], Activation::Relu, Activation::Identity, &mut rng);
        store.set_value(mlp.layers[0].weight, array![[f64::MAX]]).unwrap();
        store.set_value(mlp.layers[1].weight, array![[f64::MAX]]).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(array![[10.0]]);
        match mlp.forward(&store, &mut tape, x) {
            Err(Error::Numeric { location, .. }) => assert_eq!(location, "layer 0"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Dense::new(&mut store, "d", 10, 22, Activation::Relu, &mut rng);
        let limit = (6.0f64 / 32.0).sqrt();
        assert!(store.value(d.weight).iter().all(|w| w.abs() <= limit));
        assert!(store.value(d.bias).iter().all(|&b| b == 0.0));
    }
}
