//! Standard LSTM cell with sigmoid gates and tanh squashing.

use super::ParamTensor;
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use rand::Rng;

/// Per-gate weights: input projection, recurrent projection, bias.
#[derive(Debug, Clone)]
struct Gate {
    w: ParamTensor,
    u: ParamTensor,
    b: ParamTensor,
}

impl Gate {
    fn new(name: &str, input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let fan_in = input_dim + hidden_dim;
        Self {
            w: ParamTensor::uniform(&format!("{name}.w"), input_dim, hidden_dim, fan_in, rng),
            u: ParamTensor::uniform(&format!("{name}.u"), hidden_dim, hidden_dim, fan_in, rng),
            b: ParamTensor::uniform(&format!("{name}.b"), 1, hidden_dim, fan_in, rng),
        }
    }

    fn bind(&self, tape: &mut Tape) -> GateVars {
        GateVars {
            w: self.w.bind(tape),
            u: self.u.bind(tape),
            b: self.b.bind(tape),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct GateVars {
    w: Var,
    u: Var,
    b: Var,
}

impl GateVars {
    /// Pre-activation `x·W + h·U + b`.
    fn preact(&self, tape: &mut Tape, x: Var, h: Var) -> Var {
        let xw = tape.matmul(x, self.w);
        let hu = tape.matmul(h, self.u);
        let s = tape.add(xw, hu);
        tape.add(s, self.b)
    }
}

/// Tape handles for a bound [`LstmCell`].
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    input: GateVars,
    forget: GateVars,
    output: GateVars,
    candidate: GateVars,
}

/// LSTM cell; all four gates share `hidden_dim`.
#[derive(Debug, Clone)]
pub struct LstmCell {
    input_gate: Gate,
    forget_gate: Gate,
    output_gate: Gate,
    candidate_gate: Gate,
    input_dim: usize,
    hidden_dim: usize,
}

impl LstmCell {
    pub fn new(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            input_gate: Gate::new("lstm.input", input_dim, hidden_dim, rng),
            forget_gate: Gate::new("lstm.forget", input_dim, hidden_dim, rng),
            output_gate: Gate::new("lstm.output", input_dim, hidden_dim, rng),
            candidate_gate: Gate::new("lstm.candidate", input_dim, hidden_dim, rng),
            input_dim,
            hidden_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// Binds all gates in `visit_params` order.
    pub fn bind(&self, tape: &mut Tape) -> LstmVars {
        LstmVars {
            input: self.input_gate.bind(tape),
            forget: self.forget_gate.bind(tape),
            output: self.output_gate.bind(tape),
            candidate: self.candidate_gate.bind(tape),
        }
    }

    /// One gate update: returns `(h', c')`.
    pub fn step(&self, tape: &mut Tape, vars: &LstmVars, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        if x.cols() != self.input_dim || h.cols() != self.hidden_dim || c.cols() != self.hidden_dim
        {
            return Err(Error::DimensionMismatch(format!(
                "LSTM step got x width {}, h width {}, c width {}; cell is {}->{}",
                x.cols(),
                h.cols(),
                c.cols(),
                self.input_dim,
                self.hidden_dim
            )));
        }
        let i_pre = vars.input.preact(tape, x, h);
        let i = tape.sigmoid(i_pre);
        let f_pre = vars.forget.preact(tape, x, h);
        let f = tape.sigmoid(f_pre);
        let o_pre = vars.output.preact(tape, x, h);
        let o = tape.sigmoid(o_pre);
        let g_pre = vars.candidate.preact(tape, x, h);
        let g = tape.tanh(g_pre);

        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c_next = tape.add(fc, ig);
        let c_squash = tape.tanh(c_next);
        let h_next = tape.mul(o, c_squash);
        Ok((h_next, c_next))
    }

    /// Binds and steps in one call, for single-pass uses.
    pub fn step_once(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let vars = self.bind(tape);
        self.step(tape, &vars, x, h, c)
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&ParamTensor)) {
        for gate in [
            &self.input_gate,
            &self.forget_gate,
            &self.output_gate,
            &self.candidate_gate,
        ] {
            f(&gate.w);
            f(&gate.u);
            f(&gate.b);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamTensor)) {
        for gate in [
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.output_gate,
            &mut self.candidate_gate,
        ] {
            f(&mut gate.w);
            f(&mut gate.u);
            f(&mut gate.b);
        }
    }

    /// Zeroes every parameter; test hook for degenerate-cell cases.
    pub fn zero_all(&mut self) {
        self.visit_params_mut(&mut |p| p.values.iter_mut().for_each(|v| *v = 0.0));
    }

    /// Overwrites the forget-gate bias, e.g. to saturate the gate.
    pub fn set_forget_bias(&mut self, value: f64) {
        self.forget_gate.b.values.iter_mut().for_each(|v| *v = value);
    }

    /// Drives the input gate toward closed by biasing it strongly negative.
    pub fn set_input_bias(&mut self, value: f64) {
        self.input_gate.b.values.iter_mut().for_each(|v| *v = value);
    }
}
