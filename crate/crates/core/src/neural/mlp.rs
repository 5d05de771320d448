//! Dense layers and small MLP stacks (shared point functions, readout).

use super::{Activation, ParamTensor};
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use rand::Rng;

/// Fully connected layer `x · W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

impl Linear {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: ParamTensor::uniform(&format!("{name}.weight"), in_dim, out_dim, in_dim, rng),
            bias: ParamTensor::uniform(&format!("{name}.bias"), 1, out_dim, in_dim, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    /// Binds both tensors as tape leaves, in `visit_params` order.
    pub fn bind(&self, tape: &mut Tape) -> LinearVars {
        LinearVars {
            w: self.weight.bind(tape),
            b: self.bias.bind(tape),
        }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &LinearVars, x: Var) -> Result<Var> {
        if x.cols() != self.in_dim() {
            return Err(Error::DimensionMismatch(format!(
                "linear layer '{}' expects width {}, got {}",
                self.weight.name,
                self.in_dim(),
                x.cols()
            )));
        }
        let h = tape.matmul(x, vars.w);
        Ok(tape.add(h, vars.b))
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&ParamTensor)) {
        f(&self.weight);
        f(&self.bias);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamTensor)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Tape handles for one bound [`Linear`] layer.
#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    w: Var,
    b: Var,
}

/// Tape handles for a bound [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpVars {
    layers: Vec<LinearVars>,
}

/// Stack of [`Linear`] layers with a fixed hidden activation. The final
/// layer is linear unless `activate_last` is set.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    pub activate_last: bool,
}

impl Mlp {
    /// `widths` runs input → hidden… → output.
    pub fn new(
        name: &str,
        widths: &[usize],
        activation: Activation,
        activate_last: bool,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(widths.len() >= 2, "MLP needs at least input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self {
            layers,
            activation,
            activate_last,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().unwrap().in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn bind(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
        }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &MlpVars, mut x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (i, (layer, lv)) in self.layers.iter().zip(&vars.layers).enumerate() {
            x = layer.forward(tape, lv, x)?;
            if i < last || self.activate_last {
                x = self.activation.apply(tape, x);
            }
        }
        Ok(x)
    }

    /// Binds and runs in one call, for single-pass uses.
    pub fn forward_once(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let vars = self.bind(tape);
        self.forward(tape, &vars, x)
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&ParamTensor)) {
        for layer in &self.layers {
            layer.visit_params(f);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamTensor)) {
        for layer in &mut self.layers {
            layer.visit_params_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_rejects_wrong_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = Linear::new("l", 3, 2, &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::zeros(1, 4));
        let vars = layer.bind(&mut tape);
        assert!(layer.forward(&mut tape, &vars, x).is_err());
    }

    #[test]
    fn mlp_shapes_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new("m", &[5, 8, 2], Activation::Relu, false, &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::zeros(7, 5));
        let y = mlp.forward_once(&mut tape, x).unwrap();
        assert_eq!((y.rows(), y.cols()), (7, 2));
    }
}
