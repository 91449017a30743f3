use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::{sigmoid, Tensor};
use crate::error::{Error, Result};

/// Uniform Glorot initialization, `U(−a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-a..a))
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Fully connected layer `x · W + b`.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            glorot_uniform(rng, input, output, input, output),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, output));
        Dense {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }
}

/// Multi-layer perceptron with ReLU between layers and a sigmoid output.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// `dims` lists the layer widths, input first: `[8, 4, 1]` is 8→4→1.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "mlp {name} needs at least two non-zero widths, got {dims:?}"
            )));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().output
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_width() {
            return Err(Error::shape(
                "mlp_forward",
                format!("input has {cols} columns, mlp expects {}", self.input_width()),
            ));
        }
        Ok(())
    }

    /// `σ(MLP(h))` row by row, recorded on the tape.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var> {
        self.check_input(tape.value(h)?.cols())?;
        let mut x = h;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, store, x)?;
            x = if i + 1 == self.layers.len() {
                tape.sigmoid(x)?
            } else {
                tape.relu(x)?
            };
        }
        Ok(x)
    }

    /// Same map as [`Mlp::forward`] evaluated without recording anything.
    pub fn predict(&self, store: &ParamStore, h: &Tensor) -> Result<Tensor> {
        self.check_input(h.cols())?;
        let mut x = h.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = x.matmul(store.value(layer.weight))?;
            let bias = store.value(layer.bias).data();
            let last = i + 1 == self.layers.len();
            let n = y.cols();
            for (k, v) in y.data_mut().iter_mut().enumerate() {
                let z = *v + bias[k % n];
                *v = if last { sigmoid(z) } else { z.max(0.0) };
            }
            x = y;
        }
        Ok(x)
    }
}
