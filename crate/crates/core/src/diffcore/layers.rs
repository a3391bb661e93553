use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Array, ParamId, ParameterStore, Tape, Var};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    fn apply_tape(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Relu => tape.relu(x),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => super::sigmoid_scalar(x),
            Activation::Relu => x.max(0.0),
        }
    }
}

/// Affine layer `act(W x + b)` with `W: [out, in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl Dense {
    /// Registers `{prefix}.weight` (uniform ±1/√in) and `{prefix}.bias` (zeros).
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add_uniform(format!("{prefix}.weight"), &[output, input], input, rng)?;
        let bias = store.add(format!("{prefix}.bias"), Array::zeros(&[output]))?;
        Ok(Self { weight, bias, input, output, activation })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let z = tape.matvec(w, x)?;
        let z = tape.add(z, b)?;
        self.activation.apply_tape(tape, z)
    }

    /// Applies the layer to every row of `x: [m, in]` at once.
    pub fn forward_rows(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let wt = transpose_on_tape(tape, w, self.output, self.input)?;
        let z = tape.matmul(x, wt)?;
        let z = tape.add_bias(z, b)?;
        self.activation.apply_tape(tape, z)
    }

    pub fn apply(&self, store: &ParameterStore, x: &[f64]) -> Vec<f64> {
        let w = store.value(self.weight).data();
        let b = store.value(self.bias).data();
        (0..self.output)
            .map(|r| {
                let z: f64 = w[r * self.input..(r + 1) * self.input].iter().zip(x).map(|(a, c)| a * c).sum();
                self.activation.apply(z + b[r])
            })
            .collect()
    }
}

fn transpose_on_tape(tape: &mut Tape, w: Var, rows: usize, cols: usize) -> Result<Var> {
    let idx: Vec<usize> = (0..cols).flat_map(|c| (0..rows).map(move |r| r * cols + c)).collect();
    let g = tape.gather(w, &idx)?;
    tape.reshape(g, &[cols, rows])
}
