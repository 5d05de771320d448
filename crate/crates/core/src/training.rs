//! Weighted-MSE loss, adaptive-moment optimizer, the training loop with
//! early stopping, and evaluation.

use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, prune_inter_class};
use crate::neural::{FrameInput, SteeringModel};
use crate::pointcloud::{random_downsample, PointCloud};
use crate::tape::{Tape, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Training-loop knobs.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Early stopping: epochs allowed without a validation improvement.
    pub patience: usize,
    /// Sequence length consumed per optimization step.
    pub horizon: usize,
    /// Turn-emphasis strength in `w(Θ) = 1 + α·|Θ|`; 0 is plain MSE.
    pub weight_alpha: f64,
    pub seed: u64,
    pub points_per_frame: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 300,
            patience: 20,
            horizon: 4,
            weight_alpha: 0.0,
            seed: 0,
            points_per_frame: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.max_epochs == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig(
                "training needs learning_rate > 0, max_epochs >= 1, horizon >= 1".into(),
            ));
        }
        if self.weight_alpha < 0.0 {
            return Err(Error::InvalidConfig("weight_alpha must be >= 0".into()));
        }
        Ok(())
    }
}

/// Weighted mean of squared residuals with `w(Θ) = 1 + α·|Θ|` over the
/// ground-truth angle, so turn-heavy samples weigh more. `alpha = 0`
/// reduces to the plain mean.
pub fn weighted_mse(pred: &[f64], truth: &[f64], weight_alpha: f64) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("weighted_mse over empty lists".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        let w = 1.0 + weight_alpha * t.abs();
        let r = p - t;
        num += w * r * r;
        den += w;
    }
    Ok(num / den)
}

/// Tape-side weighted MSE over per-frame prediction vars; matches
/// [`weighted_mse`] exactly for the recorded values.
pub fn weighted_mse_loss(
    tape: &mut Tape,
    preds: &[Var],
    truth: &[f64],
    weight_alpha: f64,
) -> Result<Var> {
    if preds.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} truths",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("loss over empty lists".into()));
    }
    let den: f64 = truth.iter().map(|t| 1.0 + weight_alpha * t.abs()).sum();
    let mut acc = tape.scalar(0.0);
    for (&p, &t) in preds.iter().zip(truth) {
        let w = 1.0 + weight_alpha * t.abs();
        let d = tape.add_scalar(p, -t);
        let sq = tape.mul(d, d);
        let term = tape.scale(sq, w / den);
        acc = tape.add(acc, term);
    }
    Ok(acc)
}

/// Bias-corrected adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub(crate) m: Vec<Vec<f64>>,
    pub(crate) v: Vec<Vec<f64>>,
    pub(crate) step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(model: &SteeringModel) -> Self {
        let mut m = Vec::new();
        model.visit_params(&mut |p| m.push(vec![0.0; p.len()]));
        let v = m.clone();
        Self {
            m,
            v,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every parameter; gradients must have been stored by
    /// `SteeringModel::store_gradients` and are zeroed afterwards.
    pub fn adam_step(&mut self, model: &mut SteeringModel, lr: f64) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (beta1, beta2, eps) = (self.beta1, self.beta2, self.epsilon);
        let mut slot = 0;
        let mut result = Ok(());
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_params_mut(&mut |p| {
            if result.is_err() {
                return;
            }
            if !p.has_grad {
                result = Err(Error::MissingGradient(p.name.clone()));
                return;
            }
            let m = &mut ms[slot];
            let v = &mut vs[slot];
            for i in 0..p.len() {
                let g = p.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                p.grad[i] = 0.0;
            }
            p.has_grad = false;
            slot += 1;
        });
        result
    }
}

/// One training window: raw clouds with per-frame steering truth.
#[derive(Debug, Clone)]
pub struct SteeringSample {
    pub clouds: Vec<PointCloud>,
    pub truth: Vec<f64>,
}

/// A window converted to model inputs.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub frames: Vec<FrameInput>,
    pub truth: Vec<f64>,
}

/// Which input representation the encoder consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Graph,
    Cloud,
}

/// Frame preparation pipeline settings.
#[derive(Debug, Clone)]
pub struct FramePrep {
    pub kind: FrameKind,
    pub points_per_frame: usize,
    /// Attach semantics (one-hot class features, semantic-aware pruning).
    pub semantic: bool,
    pub knn_k: usize,
    /// Inter-class keep ratio; `None` disables pruning.
    pub prune_keep_ratio: Option<f64>,
    pub seed: u64,
}

impl Default for FramePrep {
    fn default() -> Self {
        Self {
            kind: FrameKind::Graph,
            points_per_frame: 256,
            semantic: true,
            knn_k: 8,
            prune_keep_ratio: None,
            seed: 0,
        }
    }
}

impl FramePrep {
    /// Input feature width produced by this pipeline for the given cloud.
    pub fn input_width_for(&self, cloud: &PointCloud) -> usize {
        3 + if self.semantic {
            cloud.one_hot_width()
        } else {
            0
        }
    }
}

/// Cuts a sequence into non-overlapping horizon-length windows, skipping
/// frames without a valid steering label.
pub fn window_sequence(
    clouds: &[PointCloud],
    truth: &[Option<f64>],
    horizon: usize,
) -> Vec<SteeringSample> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + horizon <= clouds.len() {
        let window = &truth[i..i + horizon];
        if window.iter().all(|t| t.is_some()) {
            out.push(SteeringSample {
                clouds: clouds[i..i + horizon].to_vec(),
                truth: window.iter().map(|t| t.unwrap()).collect(),
            });
        }
        i += horizon;
    }
    out
}

/// Converts one window to model inputs: seeded downsample per frame, then
/// either kNN graph construction (with optional semantic pruning) or the
/// raw-cloud path.
pub fn prepare_sample(sample: &SteeringSample, prep: &FramePrep) -> Result<PreparedSample> {
    let mut frames = Vec::with_capacity(sample.clouds.len());
    for (i, cloud) in sample.clouds.iter().enumerate() {
        let frame_seed = prep
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(cloud.frame_index as u64)
            .wrapping_add(i as u64);
        let mut cloud = random_downsample(cloud, prep.points_per_frame, frame_seed)?;
        if !prep.semantic {
            cloud.classes = None;
            cloud.class_table = None;
        }
        let frame = match prep.kind {
            FrameKind::Graph => {
                let graph = build_knn_graph(&cloud, prep.knn_k)?;
                let graph = match prep.prune_keep_ratio {
                    Some(ratio) if prep.semantic => {
                        prune_inter_class(&graph, ratio, frame_seed ^ 0x5EED)?
                    }
                    _ => graph,
                };
                FrameInput::from_graph(&graph)?
            }
            FrameKind::Cloud => FrameInput::from_cloud(&cloud)?,
        };
        frames.push(frame);
    }
    Ok(PreparedSample {
        frames,
        truth: sample.truth.clone(),
    })
}

/// Prepares many windows; parallel when the feature is enabled, with
/// index-ordered assembly either way.
pub fn prepare_samples(samples: &[SteeringSample], prep: &FramePrep) -> Result<Vec<PreparedSample>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        samples.par_iter().map(|s| prepare_sample(s, prep)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        samples.iter().map(|s| prepare_sample(s, prep)).collect()
    }
}

/// Evaluation result over one split.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub split: String,
    /// Plain (unweighted) MSE over all frames, in radians².
    pub mse: f64,
    /// Per-frame residuals `pred − truth` in window order.
    pub residuals: Vec<f64>,
    /// Sparse-propagation multiply-adds counted over every forward pass.
    pub edge_message_ops: u64,
}

fn eval_one(model: &SteeringModel, sample: &PreparedSample) -> Result<(Vec<f64>, u64)> {
    let (preds, ops) = crate::neural::model_forward_sequence(model, &sample.frames)?;
    let residuals = preds
        .iter()
        .zip(&sample.truth)
        .map(|(p, t)| p - t)
        .collect();
    Ok((residuals, ops))
}

fn finish_eval(split: &str, per_sample: Vec<(Vec<f64>, u64)>) -> Result<EvalReport> {
    let mut residuals = Vec::new();
    let mut ops = 0u64;
    for (r, o) in per_sample {
        residuals.extend(r);
        ops += o;
    }
    if residuals.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    let mse = residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64;
    Ok(EvalReport {
        split: split.to_string(),
        mse,
        residuals,
        edge_message_ops: ops,
    })
}

/// Plain MSE over every frame of the split, sequentially.
pub fn evaluate(model: &SteeringModel, samples: &[PreparedSample], split: &str) -> Result<EvalReport> {
    let per_sample: Result<Vec<_>> = samples.iter().map(|s| eval_one(model, s)).collect();
    finish_eval(split, per_sample?)
}

/// Parallel evaluation fanning samples across threads; the ordered
/// reduction makes the report identical to [`evaluate`].
#[cfg(feature = "parallel")]
pub fn par_evaluate(
    model: &SteeringModel,
    samples: &[PreparedSample],
    split: &str,
) -> Result<EvalReport> {
    use rayon::prelude::*;
    let per_sample: Result<Vec<_>> = samples.par_iter().map(|s| eval_one(model, s)).collect();
    finish_eval(split, per_sample?)
}

fn evaluate_dispatch(model: &SteeringModel, samples: &[PreparedSample], split: &str) -> Result<EvalReport> {
    #[cfg(feature = "parallel")]
    {
        par_evaluate(model, samples, split)
    }
    #[cfg(not(feature = "parallel"))]
    {
        evaluate(model, samples, split)
    }
}

/// MSE of the constant predictor that outputs the split's own mean truth;
/// the baseline for the desk-scale learning checks.
pub fn mean_predictor_mse(samples: &[PreparedSample]) -> f64 {
    let all: Vec<f64> = samples.iter().flat_map(|s| s.truth.iter().copied()).collect();
    if all.is_empty() {
        return 0.0;
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    all.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / all.len() as f64
}

/// Per-epoch loss record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean weighted training loss across the epoch's steps.
    pub train_mse: f64,
    /// Plain validation MSE after the epoch.
    pub val_mse: f64,
}

/// Full training history plus the index of the best validation epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

impl TrainHistory {
    /// CSV rendering `epoch,train_mse,val_mse`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_mse, e.val_mse));
        }
        out
    }
}

/// Result of a training run. `best_model` is the minimum-validation
/// checkpoint; `final_model` and `optimizer` capture the last step so a run
/// can be resumed.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_model: SteeringModel,
    pub final_model: SteeringModel,
    pub optimizer: OptimizerState,
    pub history: TrainHistory,
    /// First epoch index a resumed run should use.
    pub next_epoch: usize,
}

/// Epoch loop over shuffled training windows: per window one forward pass,
/// weighted-MSE loss, backward, optimizer step. Stops at `max_epochs` or
/// after `patience` epochs without a validation improvement, returning the
/// checkpoint with the best validation MSE seen.
pub fn train(
    model: SteeringModel,
    train_set: &[PreparedSample],
    val_set: &[PreparedSample],
    cfg: &TrainConfig,
) -> Result<(SteeringModel, TrainHistory)> {
    let outcome = train_with_optimizer(model, None, train_set, val_set, cfg, 0)?;
    Ok((outcome.best_model, outcome.history))
}

/// [`train`] with explicit optimizer state and starting epoch, for resuming
/// from a checkpoint.
pub fn train_with_optimizer(
    mut model: SteeringModel,
    optimizer: Option<OptimizerState>,
    train_set: &[PreparedSample],
    val_set: &[PreparedSample],
    cfg: &TrainConfig,
    start_epoch: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if val_set.is_empty() {
        return Err(Error::EmptySplit("val".into()));
    }
    let mut opt = optimizer.unwrap_or_else(|| OptimizerState::new(&model));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_val = f64::INFINITY;
    let mut best_model = model.clone();
    let mut best_epoch = start_epoch;
    let mut bad_epochs = 0usize;
    let mut history = Vec::new();

    for epoch in start_epoch..cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (step, &idx) in order.iter().enumerate() {
            let sample = &train_set[idx];
            let mut tape = Tape::new();
            let preds = model.forward_on_tape(&mut tape, &sample.frames)?;
            let loss = weighted_mse_loss(&mut tape, &preds, &sample.truth, cfg.weight_alpha)?;
            let loss_value = tape.scalar_value(loss);
            if !loss_value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            epoch_loss += loss_value;
            let grads = tape.backward(loss)?;
            model.store_gradients(&grads)?;
            opt.adam_step(&mut model, cfg.learning_rate)?;
        }
        let val = evaluate_dispatch(&model, val_set, "val")?;
        history.push(EpochStats {
            epoch,
            train_mse: epoch_loss / train_set.len() as f64,
            val_mse: val.mse,
        });
        if val.mse < best_val {
            best_val = val.mse;
            best_model = model.clone();
            best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > cfg.patience {
                break;
            }
        }
    }

    let next_epoch = history.last().map(|e: &EpochStats| e.epoch + 1).unwrap_or(start_epoch);
    Ok(TrainOutcome {
        best_model,
        final_model: model,
        optimizer: opt,
        history: TrainHistory {
            epochs: history,
            best_epoch,
            best_val_mse: best_val,
        },
        next_epoch,
    })
}
