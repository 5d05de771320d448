//! Differentiable building blocks and their composition into steering
//! models: GCN and PointNet++ spatial encoders, LSTM and liquid
//! time-constant recurrent cells, and a dense readout.

pub mod gcn;
pub mod gradcheck;
pub mod lstm;
pub mod ltc;
pub mod mlp;
pub mod pointnet;
mod preset;

pub use preset::{preset, preset_names, EncoderSpec, LtcSpec, PresetConfig, RecurrentSpec, SaSpec};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, NormalizedAdjacency, SemanticGraph};
use crate::matrix::Matrix;
use crate::pointcloud::{Point3, PointCloud};
use crate::tape::{Gradients, Tape, Var};
use gcn::GcnEncoder;
use lstm::LstmCell;
use ltc::LtcCell;
use mlp::Mlp;
use pointnet::PointNetEncoder;
use rand::Rng;

/// A trainable tensor: values plus a gradient buffer of the same shape.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    rows: usize,
    cols: usize,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub has_grad: bool,
}

impl ParamTensor {
    /// Seeded uniform init in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
    pub fn uniform(name: &str, rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let values = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            name: name.to_string(),
            rows,
            cols,
            values,
            grad: vec![0.0; rows * cols],
            has_grad: false,
        }
    }

    pub fn zeros(name: &str, rows: usize, cols: usize) -> Self {
        Self {
            name: name.to_string(),
            rows,
            cols,
            values: vec![0.0; rows * cols],
            grad: vec![0.0; rows * cols],
            has_grad: false,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bind(&self, tape: &mut Tape) -> Var {
        tape.param(&self.name, self.rows, self.cols, &self.values)
    }
}

/// Named nonlinearity applied on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(&self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(v),
            Activation::Tanh => tape.tanh(v),
            Activation::Linear => v,
        }
    }
}

/// One prepared frame of model input. Graphs feed the GCN encoder, clouds
/// feed PointNet++.
#[derive(Debug, Clone)]
pub enum FrameInput {
    Graph {
        adj: NormalizedAdjacency,
        features: Matrix,
    },
    Cloud {
        points: Vec<Point3>,
        features: Matrix,
    },
}

impl FrameInput {
    /// Normalizes the graph adjacency and stacks node features.
    pub fn from_graph(graph: &SemanticGraph) -> Result<Self> {
        Ok(FrameInput::Graph {
            adj: normalize_adjacency(graph)?,
            features: graph.feature_matrix(),
        })
    }

    /// Uses coordinates (plus one-hot classes when present) as features.
    pub fn from_cloud(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud("frame input".into()));
        }
        let one_hot = cloud.one_hot_width();
        let d = 3 + one_hot;
        let mut features = Matrix::zeros(cloud.len(), d);
        for (i, p) in cloud.points.iter().enumerate() {
            let row = features.row_mut(i);
            row[0] = p.x;
            row[1] = p.y;
            row[2] = p.z;
            if let Some(classes) = &cloud.classes {
                row[3 + classes[i] as usize] = 1.0;
            }
        }
        Ok(FrameInput::Cloud {
            points: cloud.points.clone(),
            features,
        })
    }

    pub fn feature_width(&self) -> usize {
        match self {
            FrameInput::Graph { features, .. } | FrameInput::Cloud { features, .. } => {
                features.cols()
            }
        }
    }
}

/// Spatial encoder: per-frame embedding of a graph or cloud.
#[derive(Debug, Clone)]
pub enum Encoder {
    Gcn(GcnEncoder),
    PointNet(PointNetEncoder),
}

/// Tape handles for a bound [`Encoder`].
#[derive(Debug, Clone)]
pub enum EncoderVars {
    Gcn(gcn::GcnEncoderVars),
    PointNet(pointnet::PointNetVars),
}

impl Encoder {
    pub fn bind(&self, tape: &mut Tape) -> EncoderVars {
        match self {
            Encoder::Gcn(e) => EncoderVars::Gcn(e.bind(tape)),
            Encoder::PointNet(e) => EncoderVars::PointNet(e.bind(tape)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &EncoderVars, frame: &FrameInput) -> Result<Var> {
        match (self, vars, frame) {
            (Encoder::Gcn(enc), EncoderVars::Gcn(v), FrameInput::Graph { adj, features }) => {
                let h = tape.input(features.clone());
                enc.forward(tape, v, adj, h)
            }
            (
                Encoder::PointNet(enc),
                EncoderVars::PointNet(v),
                FrameInput::Cloud { points, features },
            ) => {
                let f = tape.input(features.clone());
                enc.forward(tape, v, points, f)
            }
            (Encoder::Gcn(_), _, FrameInput::Cloud { .. }) => Err(Error::InvalidConfig(
                "GCN encoder expects graph frames, got a raw cloud".into(),
            )),
            (Encoder::PointNet(_), _, FrameInput::Graph { .. }) => Err(Error::InvalidConfig(
                "PointNet++ encoder expects cloud frames, got a graph".into(),
            )),
            _ => Err(Error::InvalidConfig("encoder/vars mismatch".into())),
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Encoder::Gcn(e) => e.input_width(),
            Encoder::PointNet(e) => e.input_width(),
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            Encoder::Gcn(e) => e.output_width(),
            Encoder::PointNet(e) => e.output_width(),
        }
    }

    fn visit_params(&self, f: &mut dyn FnMut(&ParamTensor)) {
        match self {
            Encoder::Gcn(e) => e.visit_params(f),
            Encoder::PointNet(e) => e.visit_params(f),
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamTensor)) {
        match self {
            Encoder::Gcn(e) => e.visit_params_mut(f),
            Encoder::PointNet(e) => e.visit_params_mut(f),
        }
    }
}

/// Recurrent temporal head.
#[derive(Debug, Clone)]
pub enum RecurrentCell {
    Lstm(LstmCell),
    Ltc(LtcCell),
}

/// Hidden state handles on the current tape.
#[derive(Debug, Clone, Copy)]
pub enum RecurrentState {
    Lstm { h: Var, c: Var },
    Ltc { h: Var },
}

/// Tape handles for a bound [`RecurrentCell`].
#[derive(Debug, Clone)]
pub enum CellVars {
    Lstm(lstm::LstmVars),
    Ltc(ltc::LtcVars),
}

impl RecurrentCell {
    pub fn bind(&self, tape: &mut Tape) -> CellVars {
        match self {
            RecurrentCell::Lstm(c) => CellVars::Lstm(c.bind(tape)),
            RecurrentCell::Ltc(c) => CellVars::Ltc(c.bind(tape)),
        }
    }

    pub fn init_state(&self, tape: &mut Tape) -> RecurrentState {
        match self {
            RecurrentCell::Lstm(cell) => RecurrentState::Lstm {
                h: tape.constant(Matrix::zeros(1, cell.hidden_dim())),
                c: tape.constant(Matrix::zeros(1, cell.hidden_dim())),
            },
            RecurrentCell::Ltc(cell) => RecurrentState::Ltc {
                h: tape.constant(Matrix::zeros(1, cell.neurons())),
            },
        }
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        vars: &CellVars,
        x: Var,
        state: RecurrentState,
    ) -> Result<RecurrentState> {
        match (self, vars, state) {
            (RecurrentCell::Lstm(cell), CellVars::Lstm(v), RecurrentState::Lstm { h, c }) => {
                let (h2, c2) = cell.step(tape, v, x, h, c)?;
                Ok(RecurrentState::Lstm { h: h2, c: c2 })
            }
            (RecurrentCell::Ltc(cell), CellVars::Ltc(v), RecurrentState::Ltc { h }) => {
                Ok(RecurrentState::Ltc {
                    h: cell.step(tape, v, x, h)?,
                })
            }
            _ => Err(Error::InvalidConfig("recurrent state/cell mismatch".into())),
        }
    }

    /// Cell output exposed to the readout.
    pub fn output(&self, tape: &mut Tape, state: RecurrentState) -> Var {
        match (self, state) {
            (RecurrentCell::Lstm(_), RecurrentState::Lstm { h, .. }) => h,
            (RecurrentCell::Ltc(cell), RecurrentState::Ltc { h }) => cell.output(tape, h),
            _ => unreachable!("recurrent state/cell mismatch"),
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            RecurrentCell::Lstm(c) => c.input_dim(),
            RecurrentCell::Ltc(c) => c.input_dim(),
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            RecurrentCell::Lstm(c) => c.hidden_dim(),
            RecurrentCell::Ltc(c) => c.neurons(),
        }
    }

    fn visit_params(&self, f: &mut dyn FnMut(&ParamTensor)) {
        match self {
            RecurrentCell::Lstm(c) => c.visit_params(f),
            RecurrentCell::Ltc(c) => c.visit_params(f),
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamTensor)) {
        match self {
            RecurrentCell::Lstm(c) => c.visit_params_mut(f),
            RecurrentCell::Ltc(c) => c.visit_params_mut(f),
        }
    }
}

/// Tape handles for a fully bound [`SteeringModel`].
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub encoder: EncoderVars,
    pub cell: CellVars,
    pub readout: mlp::MlpVars,
}

/// Spatial encoder + recurrent cell + scalar readout.
#[derive(Debug, Clone)]
pub struct SteeringModel {
    pub preset_name: String,
    pub encoder: Encoder,
    pub cell: RecurrentCell,
    pub readout: Mlp,
}

impl SteeringModel {
    /// Builds a model from a preset for the given input feature width, with
    /// seeded parameter initialization.
    pub fn from_preset(cfg: &PresetConfig, input_width: usize, seed: u64) -> Result<Self> {
        preset::build_model(cfg, input_width, seed)
    }

    pub fn input_width(&self) -> usize {
        self.encoder.input_width()
    }

    /// Binds every parameter once, in `visit_params` order, so gradient
    /// slots line up with the parameter traversal.
    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            encoder: self.encoder.bind(tape),
            cell: self.cell.bind(tape),
            readout: self.readout.bind(tape),
        }
    }

    /// Runs the full sequence on the tape, returning one steering prediction
    /// per frame (1×1 vars). The last element is the sequence output.
    pub fn forward_on_tape(&self, tape: &mut Tape, frames: &[FrameInput]) -> Result<Vec<Var>> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("model_forward needs >= 1 frame".into()));
        }
        let vars = self.bind(tape);
        let mut state = self.cell.init_state(tape);
        let mut preds = Vec::with_capacity(frames.len());
        for frame in frames {
            if frame.feature_width() != self.input_width() {
                return Err(Error::DimensionMismatch(format!(
                    "frame feature width {} does not match model input width {}",
                    frame.feature_width(),
                    self.input_width()
                )));
            }
            let embedding = self.encoder.forward(tape, &vars.encoder, frame)?;
            state = self.cell.step(tape, &vars.cell, embedding, state)?;
            let y = self.cell.output(tape, state);
            preds.push(self.readout.forward(tape, &vars.readout, y)?);
        }
        Ok(preds)
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&ParamTensor)) {
        self.encoder.visit_params(f);
        self.cell.visit_params(f);
        self.readout.visit_params(f);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamTensor)) {
        self.encoder.visit_params_mut(f);
        self.cell.visit_params_mut(f);
        self.readout.visit_params_mut(f);
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_| n += 1);
        n
    }

    pub fn scalar_param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    /// Copies gradients from a backward pass into the parameter buffers.
    /// Gradient slots must line up with `visit_params` order, which holds for
    /// tapes produced by [`SteeringModel::forward_on_tape`].
    pub fn store_gradients(&mut self, grads: &Gradients) -> Result<()> {
        let mut slot = 0;
        let mut result = Ok(());
        self.visit_params_mut(&mut |p| {
            if result.is_err() {
                return;
            }
            if slot >= grads.param_count() || grads.param(slot).len() != p.len() {
                result = Err(Error::ShapeMismatch(format!(
                    "gradient slot {slot} does not match parameter '{}'",
                    p.name
                )));
                return;
            }
            p.grad.copy_from_slice(grads.param(slot).data());
            p.has_grad = true;
            slot += 1;
        });
        result
    }

    /// Flattens all parameter values in `visit_params` order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.extend_from_slice(&p.values));
        out
    }

    /// Writes a flat parameter vector back (inverse of [`Self::flat_params`]).
    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_params_mut(&mut |p| {
            let n = p.len();
        p.values.copy_from_slice(&flat[offset..offset + n]);
            offset += p.len();
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// Names every parameter holding a non-finite value.
    pub fn non_finite_params(&self) -> Vec<String> {
        let mut bad = Vec::new();
        self.visit_params(&mut |p| {
            if p.values.iter().any(|v| !v.is_finite()) {
                bad.push(p.name.clone());
            }
        });
        bad
    }
}

/// Runs the model over a frame sequence and returns the final-frame steering
/// angle in radians.
pub fn model_forward(model: &SteeringModel, frames: &[FrameInput]) -> Result<f64> {
    let mut tape = Tape::new();
    let preds = model.forward_on_tape(&mut tape, frames)?;
    Ok(tape.scalar_value(*preds.last().unwrap()))
}

/// Per-frame predictions plus the edge-message count of the forward pass.
pub fn model_forward_sequence(
    model: &SteeringModel,
    frames: &[FrameInput],
) -> Result<(Vec<f64>, u64)> {
    let mut tape = Tape::new();
    let preds = model.forward_on_tape(&mut tape, frames)?;
    let values = preds.iter().map(|&p| tape.scalar_value(p)).collect();
    Ok((values, tape.edge_message_ops()))
}
