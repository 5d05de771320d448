//! Finite-difference gradient verification for every cell and the composed
//! model. The numeric side re-runs the forward pass only, so it stays
//! independent of the reverse sweep it checks.

use super::gcn::GcnLayer;
use super::lstm::LstmCell;
use super::ltc::{LtcCell, LtcOptions};
use super::pointnet::SetAbstractionLevel;
use super::{Activation, FrameInput, SteeringModel};
use crate::error::Result;
use crate::graph::{build_knn_graph, normalize_adjacency};
use crate::matrix::Matrix;
use crate::pointcloud::{ClassTable, Point3, PointCloud};
use crate::tape::{Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite differences of `f` at `params`, one scalar at a time.
pub fn finite_difference_gradient<F>(f: F, params: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite difference step must be positive");
    let mut grad = Vec::with_capacity(params.len());
    let mut work = params.to_vec();
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + step;
        let fp = f(&work);
        work[i] = orig - step;
        let fm = f(&work);
        work[i] = orig;
        grad.push((fp - fm) / (2.0 * step));
    }
    grad
}

/// Relative error with a floor so near-zero gradients compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Outcome of one component check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub component: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

const DEFAULT_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

struct Worst {
    err: f64,
    label: String,
}

/// Rewrites a `model[offset]` label to the owning parameter's name.
fn resolve_model_label(model: &SteeringModel, worst: &mut Worst) {
    if let Some(offset) = worst
        .label
        .strip_prefix("model[")
        .and_then(|s| s.strip_suffix(']'))
        .and_then(|s| s.parse::<usize>().ok())
    {
        let mut base = 0;
        model.visit_params(&mut |p| {
            if offset >= base && offset < base + p.len() {
                worst.label = format!("{}[{}]", p.name, offset - base);
            }
            base += p.len();
        });
    }
}

impl Worst {
    fn new() -> Self {
        Self {
            err: 0.0,
            label: "-".into(),
        }
    }

    fn update(&mut self, analytic: &[f64], numeric: &[f64], label: &str) {
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let e = relative_error(*a, *n);
            if e > self.err {
                self.err = e;
                self.label = format!("{label}[{i}]");
            }
        }
    }
}

/// Checks `σ(Â H W)` gradients w.r.t. the weight and the input features.
pub fn check_gcn_layer(seed: u64, instances: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    for _ in 0..instances {
        let n = rng.random_range(4..9);
        let cloud = random_cloud(&mut rng, n);
        let adj = normalize_adjacency(&build_knn_graph(&cloud, 2)?)?;
        let in_dim = rng.random_range(2..5);
        let out_dim = rng.random_range(2..5);
        let layer = GcnLayer::new("gcn", in_dim, out_dim, Activation::Tanh, &mut rng);
        let feats: Vec<f64> = (0..n * in_dim).map(|_| rng.random_range(-1.0..1.0)).collect();

        let run = |w: &[f64], x: &[f64]| -> f64 {
            let mut layer = layer.clone();
            layer.weight.values.copy_from_slice(w);
            let mut tape = Tape::new();
            let h = tape.input(Matrix::from_vec(n, in_dim, x.to_vec()));
            let out = layer.forward_once(&mut tape, &adj, h).unwrap();
            quadratic_readout(&mut tape, out)
        };

        let mut tape = Tape::new();
        let h = tape.input(Matrix::from_vec(n, in_dim, feats.clone()));
        let out = layer.forward_once(&mut tape, &adj, h)?;
        let loss = quadratic_readout_var(&mut tape, out);
        let grads = tape.backward(loss)?;

        let w0 = layer.weight.values.clone();
        let num_w = finite_difference_gradient(|w| run(w, &feats), &w0, FD_STEP);
        worst.update(grads.param(0).data(), &num_w, "gcn.weight");
        let num_x = finite_difference_gradient(|x| run(&w0, x), &feats, FD_STEP);
        worst.update(grads.input(0).data(), &num_x, "gcn.features");
    }
    Ok(GradCheckReport {
        component: "gcn_layer".into(),
        instances,
        max_rel_err: worst.err,
        worst_param: worst.label,
        tolerance: DEFAULT_TOL,
    })
}

/// Checks one set abstraction level w.r.t. all MLP parameters and inputs.
pub fn check_set_abstraction(seed: u64, instances: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    for _ in 0..instances {
        let n = rng.random_range(6..12);
        let cloud = random_cloud(&mut rng, n);
        let in_features = rng.random_range(1..4);
        let level = SetAbstractionLevel::new(
            "sa",
            rng.random_range(2..4),
            1.5,
            6,
            in_features,
            &[rng.random_range(2..5)],
            &mut rng,
        )?;
        let feats: Vec<f64> = (0..n * in_features)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();

        let flat0 = flatten_level(&level);
        let run = |flat: &[f64], x: &[f64]| -> f64 {
            let mut level = level.clone();
            unflatten_level(&mut level, flat);
            let mut tape = Tape::new();
            let f = tape.input(Matrix::from_vec(n, in_features, x.to_vec()));
            let (_, pooled) = level.forward_once(&mut tape, &cloud.points, f, 0).unwrap();
            quadratic_readout(&mut tape, pooled)
        };

        let mut tape = Tape::new();
        let f = tape.input(Matrix::from_vec(n, in_features, feats.clone()));
        let (_, pooled) = level.forward_once(&mut tape, &cloud.points, f, 0)?;
        let loss = quadratic_readout_var(&mut tape, pooled);
        let grads = tape.backward(loss)?;
        let mut analytic = Vec::new();
        for slot in 0..grads.param_count() {
            analytic.extend_from_slice(grads.param(slot).data());
        }

        let numeric = finite_difference_gradient(|p| run(p, &feats), &flat0, FD_STEP);
        worst.update(&analytic, &numeric, "sa.mlp");
        let num_x = finite_difference_gradient(|x| run(&flat0, x), &feats, FD_STEP);
        worst.update(grads.input(0).data(), &num_x, "sa.features");
    }
    Ok(GradCheckReport {
        component: "set_abstraction".into(),
        instances,
        max_rel_err: worst.err,
        worst_param: worst.label,
        tolerance: DEFAULT_TOL,
    })
}

/// Checks one LSTM step w.r.t. all gate parameters and the input.
pub fn check_lstm(seed: u64, instances: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    for _ in 0..instances {
        let d = rng.random_range(2..6);
        let k = rng.random_range(2..6);
        let cell = LstmCell::new(d, k, &mut rng);
        let x_data: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h_data: Vec<f64> = (0..k).map(|_| rng.random_range(-0.8..0.8)).collect();
        let c_data: Vec<f64> = (0..k).map(|_| rng.random_range(-0.8..0.8)).collect();

        let flat0 = flatten_cell(&cell);
        let run = |flat: &[f64], x: &[f64]| -> f64 {
            let mut cell = cell.clone();
            unflatten_cell(&mut cell, flat);
            let mut tape = Tape::new();
            let xv = tape.input(Matrix::row_vector(x));
            let hv = tape.constant(Matrix::row_vector(&h_data));
            let cv = tape.constant(Matrix::row_vector(&c_data));
            let (h2, c2) = cell.step_once(&mut tape, xv, hv, cv).unwrap();
            let both = tape.concat_cols(h2, c2);
            quadratic_readout(&mut tape, both)
        };

        let mut tape = Tape::new();
        let xv = tape.input(Matrix::row_vector(&x_data));
        let hv = tape.constant(Matrix::row_vector(&h_data));
        let cv = tape.constant(Matrix::row_vector(&c_data));
        let (h2, c2) = cell.step_once(&mut tape, xv, hv, cv)?;
        let both = tape.concat_cols(h2, c2);
        let loss = quadratic_readout_var(&mut tape, both);
        let grads = tape.backward(loss)?;
        let mut analytic = Vec::new();
        for slot in 0..grads.param_count() {
            analytic.extend_from_slice(grads.param(slot).data());
        }

        let numeric = finite_difference_gradient(|p| run(p, &x_data), &flat0, FD_STEP);
        worst.update(&analytic, &numeric, "lstm");
        let num_x = finite_difference_gradient(|x| run(&flat0, x), &x_data, FD_STEP);
        worst.update(grads.input(0).data(), &num_x, "lstm.x");
    }
    Ok(GradCheckReport {
        component: "lstm".into(),
        instances,
        max_rel_err: worst.err,
        worst_param: worst.label,
        tolerance: DEFAULT_TOL,
    })
}

/// Checks one LTC step w.r.t. all cell parameters and the input.
pub fn check_ltc(seed: u64, instances: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    for _ in 0..instances {
        let d = rng.random_range(2..5);
        let n = rng.random_range(3..7);
        let cell = LtcCell::new(d, n, LtcOptions::default(), 1.0, &mut rng)?;
        let x_data: Vec<f64> = (0..d).map(|_| rng.random_range(-0.8..0.8)).collect();
        let h_data: Vec<f64> = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();

        let flat0 = flatten_cell_ltc(&cell);
        let run = |flat: &[f64], x: &[f64]| -> f64 {
            let mut cell = cell.clone();
            unflatten_cell_ltc(&mut cell, flat);
            let mut tape = Tape::new();
            let xv = tape.input(Matrix::row_vector(x));
            let hv = tape.constant(Matrix::row_vector(&h_data));
            let h2 = cell.step_once(&mut tape, xv, hv).unwrap();
            let y = cell.output(&mut tape, h2);
            quadratic_readout(&mut tape, y)
        };

        let mut tape = Tape::new();
        let xv = tape.input(Matrix::row_vector(&x_data));
        let hv = tape.constant(Matrix::row_vector(&h_data));
        let h2 = cell.step_once(&mut tape, xv, hv)?;
        let y = cell.output(&mut tape, h2);
        let loss = quadratic_readout_var(&mut tape, y);
        let grads = tape.backward(loss)?;
        let mut analytic = Vec::new();
        for slot in 0..grads.param_count() {
            analytic.extend_from_slice(grads.param(slot).data());
        }

        let numeric = finite_difference_gradient(|p| run(p, &x_data), &flat0, FD_STEP);
        worst.update(&analytic, &numeric, "ltc");
        let num_x = finite_difference_gradient(|x| run(&flat0, x), &x_data, FD_STEP);
        worst.update(grads.input(0).data(), &num_x, "ltc.x");
    }
    Ok(GradCheckReport {
        component: "ltc".into(),
        instances,
        max_rel_err: worst.err,
        worst_param: worst.label,
        tolerance: DEFAULT_TOL,
    })
}

/// Checks the composed GNN-LTC model on a 10-node graph sequence, comparing
/// the full parameter gradient against central differences.
pub fn check_full_model(seed: u64, instances: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    for inst in 0..instances {
        let cfg = crate::neural::preset("gnn-ncp")?;
        let model = SteeringModel::from_preset(&cfg, 6, seed.wrapping_add(inst as u64))?;
        let frames: Vec<FrameInput> = (0..2)
            .map(|_| {
                let cloud = random_semantic_cloud(&mut rng, 10);
                FrameInput::from_graph(&build_knn_graph(&cloud, 3).unwrap()).unwrap()
            })
            .collect();
        let targets: Vec<f64> = (0..2).map(|_| rng.random_range(-0.5..0.5)).collect();

        let run = |flat: &[f64]| -> f64 {
            let mut m = model.clone();
            m.set_flat_params(flat);
            let mut tape = Tape::new();
            let preds = m.forward_on_tape(&mut tape, &frames).unwrap();
            let loss = squared_error_loss(&mut tape, &preds, &targets);
            tape.scalar_value(loss)
        };

        let mut tape = Tape::new();
        let preds = model.forward_on_tape(&mut tape, &frames)?;
        let loss = squared_error_loss(&mut tape, &preds, &targets);
        let grads = tape.backward(loss)?;
        let mut analytic = Vec::new();
        for slot in 0..grads.param_count() {
            analytic.extend_from_slice(grads.param(slot).data());
        }

        let flat0 = model.flat_params();
        let numeric = finite_difference_gradient(run, &flat0, FD_STEP);
        let before = worst.err;
        worst.update(&analytic, &numeric, "model");
        if worst.err > before {
            resolve_model_label(&model, &mut worst);
        }
    }
    Ok(GradCheckReport {
        component: "gnn_ltc_model".into(),
        instances,
        max_rel_err: worst.err,
        worst_param: worst.label,
        tolerance: DEFAULT_TOL,
    })
}

/// Finite-difference check of an arbitrary model against random frames of
/// the matching kind, e.g. for a loaded checkpoint.
pub fn check_model(model: &SteeringModel, seed: u64, instances: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    let one_hot = model.input_width().saturating_sub(3);
    // PointNet++ frames must hold at least as many points as the widest
    // sampling level.
    let min_points = match &model.encoder {
        super::Encoder::Gcn(_) => 10,
        super::Encoder::PointNet(e) => {
            e.levels.iter().map(|l| l.m).max().unwrap_or(8) + 8
        }
    };
    for _ in 0..instances {
        let frames: Vec<FrameInput> = (0..2)
            .map(|_| {
                let n = min_points;
                let cloud = if one_hot > 0 {
                    random_cloud(&mut rng, n)
                        .with_classes(
                            (0..n).map(|_| rng.random_range(0..one_hot as u16)).collect(),
                            ClassTable::unnamed(one_hot),
                        )
                        .unwrap()
                } else {
                    random_cloud(&mut rng, n)
                };
                match model.encoder {
                    super::Encoder::Gcn(_) => {
                        FrameInput::from_graph(&build_knn_graph(&cloud, 3).unwrap()).unwrap()
                    }
                    super::Encoder::PointNet(_) => FrameInput::from_cloud(&cloud).unwrap(),
                }
            })
            .collect();
        let targets: Vec<f64> = (0..2).map(|_| rng.random_range(-0.5..0.5)).collect();

        let run = |flat: &[f64]| -> f64 {
            let mut m = model.clone();
            m.set_flat_params(flat);
            let mut tape = Tape::new();
            let preds = m.forward_on_tape(&mut tape, &frames).unwrap();
            let loss = squared_error_loss(&mut tape, &preds, &targets);
            tape.scalar_value(loss)
        };

        let mut tape = Tape::new();
        let preds = model.forward_on_tape(&mut tape, &frames)?;
        let loss = squared_error_loss(&mut tape, &preds, &targets);
        let grads = tape.backward(loss)?;
        let mut analytic = Vec::new();
        for slot in 0..grads.param_count() {
            analytic.extend_from_slice(grads.param(slot).data());
        }
        let numeric = finite_difference_gradient(run, &model.flat_params(), FD_STEP);
        let before = worst.err;
        worst.update(&analytic, &numeric, "model");
        if worst.err > before {
            resolve_model_label(model, &mut worst);
        }
    }
    Ok(GradCheckReport {
        component: format!("model_{}", model.preset_name),
        instances,
        max_rel_err: worst.err,
        worst_param: worst.label,
        tolerance: DEFAULT_TOL,
    })
}

/// Runs every component check with derived seeds.
pub fn check_all(seed: u64, instances: usize) -> Result<Vec<GradCheckReport>> {
    Ok(vec![
        check_gcn_layer(seed, instances)?,
        check_set_abstraction(seed.wrapping_add(1), instances)?,
        check_lstm(seed.wrapping_add(2), instances)?,
        check_ltc(seed.wrapping_add(3), instances)?,
        check_full_model(seed.wrapping_add(4), instances.min(5))?,
    ])
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                )
            })
            .collect(),
    )
    .unwrap()
}

fn random_semantic_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    random_cloud(rng, n)
        .with_classes(
            (0..n).map(|_| rng.random_range(0..3u16)).collect(),
            ClassTable::unnamed(3),
        )
        .unwrap()
}

/// Smooth scalar readout `Σ v²` keeping every output on the gradient path.
fn quadratic_readout_var(tape: &mut Tape, v: Var) -> Var {
    let sq = tape.mul(v, v);
    tape.sum_all(sq)
}

fn quadratic_readout(tape: &mut Tape, v: Var) -> f64 {
    let loss = quadratic_readout_var(tape, v);
    tape.scalar_value(loss)
}

fn squared_error_loss(tape: &mut Tape, preds: &[Var], targets: &[f64]) -> Var {
    let mut acc = tape.scalar(0.0);
    for (&p, &t) in preds.iter().zip(targets) {
        let d = tape.add_scalar(p, -t);
        let sq = tape.mul(d, d);
        acc = tape.add(acc, sq);
    }
    acc
}

fn flatten_level(level: &SetAbstractionLevel) -> Vec<f64> {
    let mut out = Vec::new();
    level.visit_params(&mut |p| out.extend_from_slice(&p.values));
    out
}

fn unflatten_level(level: &mut SetAbstractionLevel, flat: &[f64]) {
    let mut offset = 0;
    level.visit_params_mut(&mut |p| {
        let n = p.len();
        p.values.copy_from_slice(&flat[offset..offset + n]);
        offset += p.len();
    });
}

fn flatten_cell(cell: &LstmCell) -> Vec<f64> {
    let mut out = Vec::new();
    cell.visit_params(&mut |p| out.extend_from_slice(&p.values));
    out
}

fn unflatten_cell(cell: &mut LstmCell, flat: &[f64]) {
    let mut offset = 0;
    cell.visit_params_mut(&mut |p| {
        let n = p.len();
        p.values.copy_from_slice(&flat[offset..offset + n]);
        offset += p.len();
    });
}

fn flatten_cell_ltc(cell: &LtcCell) -> Vec<f64> {
    let mut out = Vec::new();
    cell.visit_params(&mut |p| out.extend_from_slice(&p.values));
    out
}

fn unflatten_cell_ltc(cell: &mut LtcCell, flat: &[f64]) {
    let mut offset = 0;
    cell.visit_params_mut(&mut |p| {
        let n = p.len();
        p.values.copy_from_slice(&flat[offset..offset + n]);
        offset += p.len();
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_quadratic_is_exact() {
        // f(w) = Σ w², df/dw_i = 2w_i; central differences are exact.
        let params = [0.4, -1.3, 2.2];
        let grad = finite_difference_gradient(
            |w| w.iter().map(|v| v * v).sum(),
            &params,
            1e-4,
        );
        for (g, w) in grad.iter().zip(params) {
            assert!((g - 2.0 * w).abs() < 1e-10);
        }
    }

    #[test]
    fn fd_reproducible_for_seeded_function() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let cloud = random_semantic_cloud(&mut rng, 12);
            let graph = build_knn_graph(&cloud, 3).unwrap();
            let pruned = crate::graph::prune_inter_class(&graph, 0.2, 11).unwrap();
            let adj = normalize_adjacency(&pruned).unwrap();
            let layer = GcnLayer::new("g", 6, 2, Activation::Tanh, &mut rng);
            let feats = graph.feature_matrix();
            let w0 = layer.weight.values.clone();
            finite_difference_gradient(
                |w| {
                    let mut l = layer.clone();
                    l.weight.values.copy_from_slice(w);
                    let mut tape = Tape::new();
                    let h = tape.constant(feats.clone());
                    let out = l.forward_once(&mut tape, &adj, h).unwrap();
                    quadratic_readout(&mut tape, out)
                },
                &w0,
                1e-5,
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fd_error_shrinks_quadratically_with_step() {
        // Richardson behavior on a smooth scalar function.
        let f = |w: &[f64]| (w[0]).sin() * (w[0]).exp();
        let x = [0.7f64];
        let exact = x[0].cos() * x[0].exp() + x[0].sin() * x[0].exp();
        let e1 = (finite_difference_gradient(f, &x, 1e-2)[0] - exact).abs();
        let e2 = (finite_difference_gradient(f, &x, 5e-3)[0] - exact).abs();
        let ratio = e1 / e2;
        assert!(
            (2.5..6.0).contains(&ratio),
            "expected ~4x error reduction, got {ratio}"
        );
    }

    #[test]
    fn gcn_layer_gradients_match() {
        let report = check_gcn_layer(100, 20).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn set_abstraction_gradients_match() {
        let report = check_set_abstraction(200, 20).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn lstm_gradients_match() {
        let report = check_lstm(300, 20).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn ltc_gradients_match() {
        let report = check_ltc(400, 20).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn full_model_gradients_match() {
        let report = check_full_model(500, 2).unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
