//! Graph convolution layers with symmetric-normalized propagation.

use super::{Activation, ParamTensor};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::tape::{Tape, Var};
use rand::Rng;

/// One propagation layer `σ(Â · H · W)`. No bias term.
#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub weight: ParamTensor,
    pub activation: Activation,
}

impl GcnLayer {
    pub fn new(
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            weight: ParamTensor::uniform(&format!("{name}.weight"), in_dim, out_dim, in_dim, rng),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn bind(&self, tape: &mut Tape) -> GcnLayerVars {
        GcnLayerVars {
            weight: self.weight.bind(tape),
        }
    }

    /// Propagates node features: `σ(Â · H · W)`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &GcnLayerVars,
        adj: &NormalizedAdjacency,
        h: Var,
    ) -> Result<Var> {
        if h.cols() != self.in_dim() {
            return Err(Error::DimensionMismatch(format!(
                "GCN layer '{}' expects feature width {}, got {}",
                self.weight.name,
                self.in_dim(),
                h.cols()
            )));
        }
        if h.rows() != adj.dim() {
            return Err(Error::DimensionMismatch(format!(
                "adjacency is {}x{} but features have {} rows",
                adj.dim(),
                adj.dim(),
                h.rows()
            )));
        }
        let propagated = tape.spmm(adj.csr(), h);
        let hw = tape.matmul(propagated, vars.weight);
        Ok(self.activation.apply(tape, hw))
    }

    /// Binds and runs in one call, for single-pass uses.
    pub fn forward_once(&self, tape: &mut Tape, adj: &NormalizedAdjacency, h: Var) -> Result<Var> {
        let vars = self.bind(tape);
        self.forward(tape, &vars, adj, h)
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&ParamTensor)) {
        f(&self.weight);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamTensor)) {
        f(&mut self.weight);
    }
}

/// Tape handle for one bound [`GcnLayer`].
#[derive(Debug, Clone, Copy)]
pub struct GcnLayerVars {
    weight: Var,
}

/// Tape handles for a bound [`GcnEncoder`].
#[derive(Debug, Clone)]
pub struct GcnEncoderVars {
    layers: Vec<GcnLayerVars>,
}

/// GCN layer stack with a global mean-pool readout over nodes.
#[derive(Debug, Clone)]
pub struct GcnEncoder {
    pub layers: Vec<GcnLayer>,
}

impl GcnEncoder {
    /// `widths` are layer output widths; the input width comes first.
    pub fn new(input_width: usize, widths: &[usize], rng: &mut impl Rng) -> Self {
        assert!(!widths.is_empty(), "GCN encoder needs at least one layer");
        let mut layers = Vec::with_capacity(widths.len());
        let mut in_dim = input_width;
        for (i, &out_dim) in widths.iter().enumerate() {
            layers.push(GcnLayer::new(
                &format!("gcn.{i}"),
                in_dim,
                out_dim,
                Activation::Relu,
                rng,
            ));
            in_dim = out_dim;
        }
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().unwrap().in_dim()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn bind(&self, tape: &mut Tape) -> GcnEncoderVars {
        GcnEncoderVars {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
        }
    }

    /// Stacked propagation followed by mean pooling to a 1×d embedding.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &GcnEncoderVars,
        adj: &NormalizedAdjacency,
        mut h: Var,
    ) -> Result<Var> {
        for (layer, lv) in self.layers.iter().zip(&vars.layers) {
            h = layer.forward(tape, lv, adj, h)?;
        }
        Ok(tape.mean_rows(h))
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
