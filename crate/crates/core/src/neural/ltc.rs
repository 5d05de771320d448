//! Liquid time-constant cell: leaky continuous-time dynamics with an
//! input-dependent time constant, integrated by fixed-step explicit Euler.
//!
//! Per neuron i:
//!   tau_i · dh_i/dt = -h_i + Σ_j w_ij σ(h_j) + Σ_k w_ik x_k + b_i
//!   tau_i = exp(θ_iᵀ x), clamped to [tau_min, tau_max]
//!   y_i = σ(h_i)
//!
//! σ is tanh. The recurrent weight matrix carries a multiplicative binary
//! sparsity mask standing in for a wired NCP topology.

use super::ParamTensor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tape::{Tape, Var};
use rand::Rng;

/// Integration and clamping knobs for [`LtcCell`].
#[derive(Debug, Clone, Copy)]
pub struct LtcOptions {
    pub unfold_steps: usize,
    pub dt: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Expose `y = tanh(h)` as the cell output; raw `h` when false.
    pub output_tanh: bool,
}

impl Default for LtcOptions {
    fn default() -> Self {
        Self {
            unfold_steps: 6,
            dt: 0.1,
            tau_min: 0.05,
            tau_max: 20.0,
            output_tanh: true,
        }
    }
}

/// Tape handles for a bound [`LtcCell`].
#[derive(Debug, Clone, Copy)]
pub struct LtcVars {
    /// Recurrent weights with the sparsity mask already applied.
    w_masked: Var,
    w_in: Var,
    bias: Var,
    theta: Var,
}

#[derive(Debug, Clone)]
pub struct LtcCell {
    /// Recurrent weights, entry (j, i) = w_ij (from neuron j into i).
    w_rec: ParamTensor,
    /// Input weights, entry (k, i) = w_ik.
    w_in: ParamTensor,
    bias: ParamTensor,
    /// Time-constant parameters θ, entry (k, i) = θ_i[k].
    theta: ParamTensor,
    /// Binary sparsity mask on `w_rec`, applied multiplicatively.
    mask: Matrix,
    options: LtcOptions,
    input_dim: usize,
    neurons: usize,
}

impl LtcCell {
    pub fn new(
        input_dim: usize,
        neurons: usize,
        options: LtcOptions,
        mask_density: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if options.unfold_steps == 0 || options.dt <= 0.0 {
            return Err(Error::InvalidConfig(
                "LTC needs unfold_steps >= 1 and dt > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&mask_density) {
            return Err(Error::InvalidConfig(format!(
                "mask density must be in [0, 1], got {mask_density}"
            )));
        }
        let mut mask = Matrix::zeros(neurons, neurons);
        for v in mask.data_mut() {
            *v = if mask_density >= 1.0 || rng.random_range(0.0..1.0) < mask_density {
                1.0
            } else {
                0.0
            };
        }
        Ok(Self {
            w_rec: ParamTensor::uniform("ltc.w_rec", neurons, neurons, neurons, rng),
            w_in: ParamTensor::uniform("ltc.w_in", input_dim, neurons, input_dim, rng),
            bias: ParamTensor::uniform("ltc.bias", 1, neurons, input_dim, rng),
            theta: ParamTensor::uniform("ltc.theta", input_dim, neurons, input_dim, rng),
            mask,
            options,
            input_dim,
            neurons,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn options(&self) -> &LtcOptions {
        &self.options
    }

    pub fn mask(&self) -> &Matrix {
        &self.mask
    }

    /// Binds all tensors in `visit_params` order and applies the sparsity
    /// mask to the recurrent weights.
    pub fn bind(&self, tape: &mut Tape) -> LtcVars {
        let w_rec = self.w_rec.bind(tape);
        let w_in = self.w_in.bind(tape);
        let bias = self.bias.bind(tape);
        let theta = self.theta.bind(tape);
        let mask = tape.constant(self.mask.clone());
        let w_masked = tape.mul(w_rec, mask);
        LtcVars {
            w_masked,
            w_in,
            bias,
            theta,
        }
    }

    /// Integrates the dynamics over `unfold_steps` Euler substeps of size
    /// `dt`, returning the new hidden state.
    pub fn step(&self, tape: &mut Tape, vars: &LtcVars, x: Var, h: Var) -> Result<Var> {
        if x.cols() != self.input_dim || h.cols() != self.neurons {
            return Err(Error::DimensionMismatch(format!(
                "LTC step got x width {}, h width {}; cell is {}->{}",
                x.cols(),
                h.cols(),
                self.input_dim,
                self.neurons
            )));
        }
        let tau_lin = tape.matmul(x, vars.theta);
        let tau_raw = tape.exp(tau_lin);
        // Overflow saturates at the clamp bound; NaN means the parameters
        // blew up and must surface as an error.
        if tape.value(tau_raw).data().iter().any(|v| v.is_nan()) {
            return Err(Error::NonFiniteTimeConstant);
        }
        let tau = tape.clamp(tau_raw, self.options.tau_min, self.options.tau_max);
        let inv_tau = tape.recip(tau);
        let rate = tape.scale(inv_tau, self.options.dt);

        let drive_in = tape.matmul(x, vars.w_in);
        let drive_const = tape.add(drive_in, vars.bias);

        let mut h = h;
        for _ in 0..self.options.unfold_steps {
            let sh = tape.tanh(h);
            let rec = tape.matmul(sh, vars.w_masked);
            let drive = tape.add(rec, drive_const);
            let pre = tape.sub(drive, h);
            let delta = tape.mul(rate, pre);
            h = tape.add(h, delta);
        }
        Ok(h)
    }

    /// Binds and steps in one call, for single-pass uses.
    pub fn step_once(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var> {
        let vars = self.bind(tape);
        self.step(tape, &vars, x, h)
    }

    /// Cell output `y = σ(h)`, or raw `h` when `output_tanh` is off.
    pub fn output(&self, tape: &mut Tape, h: Var) -> Var {
        if self.options.output_tanh {
            tape.tanh(h)
        } else {
            h
        }
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&ParamTensor)) {
        f(&self.w_rec);
        f(&self.w_in);
        f(&self.bias);
        f(&self.theta);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamTensor)) {
        f(&mut self.w_rec);
        f(&mut self.w_in);
        f(&mut self.bias);
        f(&mut self.theta);
    }

    /// Zeroes every parameter; test hook.
    pub fn zero_all(&mut self) {
        self.visit_params_mut(&mut |p| p.values.iter_mut().for_each(|v| *v = 0.0));
    }

    /// Overwrites the bias vector; test hook.
    pub fn set_bias(&mut self, value: f64) {
        self.bias.values.iter_mut().for_each(|v| *v = value);
    }
}
