//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`
//! (release profile recommended for the training criteria).

mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use steercloud::graph::{build_knn_graph, graph_stats, normalize_adjacency, prune_inter_class};
use steercloud::neural::gradcheck::{
    check_full_model, check_gcn_layer, check_lstm, check_ltc, check_set_abstraction,
};
use steercloud::neural::{model_forward, preset, Encoder, FrameInput, SteeringModel};
use steercloud::pointcloud::PointCloud;
use steercloud::spatial::{farthest_point_sampling, SpatialIndex};
use steercloud::training::{evaluate, mean_predictor_mse, train, TrainConfig};
use steercloud::vehicle::{
    integrate_path_kinematic, integrate_path_paper, steering_from_yaw, yaw_from_steering, EgoState,
};

fn pass(criterion: &str, detail: String) {
    println!("PASS {criterion}: {detail}");
}

/// Criterion 1 — exact agreement of spatial queries with O(N²) oracles on
/// 200 seeded random clouds, under 30 seconds.
#[test]
fn acceptance_c01_spatial_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_250_101);
    for cloud_idx in 0..200 {
        let n = rng.random_range(2..=500);
        let cloud = random_cloud(&mut rng, n, 4.0);
        let index = SpatialIndex::build(&cloud).unwrap();

        for _ in 0..5 {
            let q = steercloud::pointcloud::Point3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
            );
            let k = rng.random_range(1..=32);
            let got = index.knn_query(&q, k);
            let want = brute_knn(&cloud.points, &q, k);
            assert_eq!(
                got.iter().map(|g| g.0).collect::<Vec<_>>(),
                want.iter().map(|w| w.0).collect::<Vec<_>>(),
                "knn mismatch on cloud {cloud_idx}"
            );

            let r = rng.random_range(0.2..4.0);
            let max_count = rng.random_range(1..64);
            assert_eq!(
                index.ball_query(&q, r, max_count),
                brute_ball(&cloud.points, &q, r, max_count),
                "ball mismatch on cloud {cloud_idx}"
            );
        }

        let m = rng.random_range(1..=n.min(40));
        let seed = rng.random_range(0..n);
        assert_eq!(
            farthest_point_sampling(&cloud, m, seed).unwrap(),
            brute_fps(&cloud.points, m, seed),
            "fps mismatch on cloud {cloud_idx}"
        );
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "oracle sweep took {elapsed:?} (budget 30 s)"
    );
    pass(
        "criterion 1 (spatial oracle equivalence)",
        format!("200 clouds, knn/ball/fps exact, {elapsed:?}"),
    );
}

/// Criterion 2 — analytic gradients match central finite differences
/// (step 1e-5) within 1e-4 relative error, >= 20 instances per component
/// and for the composed GNN-LTC model on 10-node graphs.
#[test]
fn acceptance_c02_gradient_correctness() {
    let reports = vec![
        check_gcn_layer(11, 20).unwrap(),
        check_set_abstraction(12, 20).unwrap(),
        check_lstm(13, 20).unwrap(),
        check_ltc(14, 20).unwrap(),
        check_full_model(15, 20).unwrap(),
    ];
    for r in &reports {
        assert!(
            r.passed(),
            "{}: max_rel_err {:.3e} exceeds {:.0e} at {}",
            r.component,
            r.max_rel_err,
            r.tolerance,
            r.worst_param
        );
    }
    let worst = reports
        .iter()
        .map(|r| r.max_rel_err)
        .fold(0.0f64, f64::max);
    pass(
        "criterion 2 (gradient correctness)",
        format!("5 components x >=20 instances, worst rel err {worst:.3e} <= 1e-4"),
    );
}

/// Criterion 3 — pruning keeps exactly floor(0.2·m_inter) inter-class
/// edges, never touches same-class edges, is bit-stable under the seed, and
/// reproduces the reported graph-reduction magnitude (45–55% fewer edges)
/// on randomized mixed-class scenes.
#[test]
fn acceptance_c03_pruning_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut reductions = Vec::new();
    let mut same_fracs = Vec::new();
    for trial in 0..20 {
        // Unbalanced class frequencies (0.45/0.35/0.20) put the same-class
        // edge share near 36%, centering the expected total reduction at
        // 0.8 · 0.64 ≈ 51% — the reported reduction magnitude.
        let cloud = {
            let base = random_cloud(&mut rng, 100, 5.0);
            let classes: Vec<u16> = (0..100)
                .map(|_| match rng.random_range(0..20u8) {
                    0..=8 => 0u16,
                    9..=15 => 1,
                    _ => 2,
                })
                .collect();
            base.with_classes(classes, steercloud::pointcloud::ClassTable::unnamed(3))
                .unwrap()
        };
        let graph = build_knn_graph(&cloud, 8).unwrap();
        let stats = graph_stats(&graph);
        let pruned = prune_inter_class(&graph, 0.2, 7 + trial).unwrap();
        let pstats = graph_stats(&pruned);

        assert_eq!(pstats.same_class_edges, stats.same_class_edges);
        assert_eq!(
            pstats.inter_class_edges,
            (0.2 * stats.inter_class_edges as f64).floor() as usize,
            "trial {trial}: inter-class retention is not the exact floor"
        );
        let again = prune_inter_class(&graph, 0.2, 7 + trial).unwrap();
        assert_eq!(pruned, again, "trial {trial}: pruning not bit-stable");

        reductions
            .push(1.0 - pstats.edge_count as f64 / stats.edge_count as f64);
        same_fracs.push(stats.same_class_edges as f64 / stats.edge_count as f64);
    }
    let mean_reduction = reductions.iter().sum::<f64>() / reductions.len() as f64;
    let mean_same = same_fracs.iter().sum::<f64>() / same_fracs.len() as f64;
    for (i, r) in reductions.iter().enumerate() {
        assert!(
            (0.45..=0.55).contains(r),
            "scene {i}: total edge reduction {r:.3} outside the 45-55% anchor"
        );
    }
    pass(
        "criterion 3 (pruning exactness)",
        format!(
            "floor counts exact, bit-stable; mean reduction {:.1}% at {:.1}% same-class edges",
            100.0 * mean_reduction,
            100.0 * mean_same
        ),
    );
}

/// Criterion 4 — the normalized adjacency is symmetric by construction and
/// its spectral radius stays within 1 + 1e-9 (dense eigendecomposition).
#[test]
fn acceptance_c04_normalized_adjacency_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst_radius = 0.0f64;
    for _ in 0..15 {
        let n = rng.random_range(2..=200);
        let cloud = random_cloud(&mut rng, n, 3.0);
        let graph = build_knn_graph(&cloud, 6).unwrap();
        let adj = normalize_adjacency(&graph).unwrap();
        let dense = adj.csr().to_dense();
        let mut na = nalgebra::DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                assert_eq!(dense.get(r, c), dense.get(c, r), "asymmetry at ({r},{c})");
                na[(r, c)] = dense.get(r, c);
            }
        }
        let eigen = nalgebra::SymmetricEigen::new(na);
        let radius = eigen
            .eigenvalues
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        worst_radius = worst_radius.max(radius);
        assert!(radius <= 1.0 + 1e-9, "spectral radius {radius}");
    }
    pass(
        "criterion 4 (normalized adjacency)",
        format!("symmetric, spectral radius <= {worst_radius:.12} <= 1+1e-9"),
    );
}

/// Criterion 5 — bicycle model: Θ(10, 0.5, 2.7) = atan(0.135) to 1e-12 and
/// the steering/yaw roundtrip is the identity to 1e-12 for |Θ| <= 1.2.
#[test]
fn acceptance_c05_bicycle_model() {
    let theta = steering_from_yaw(10.0, 0.5, 2.7).unwrap();
    assert!((theta - 0.135f64.atan()).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let v = rng.random_range(0.6..40.0);
        let wheelbase = rng.random_range(0.8..6.0);
        let theta = rng.random_range(-1.2..1.2);
        let yaw = yaw_from_steering(theta, v, wheelbase).unwrap();
        let back = steering_from_yaw(v, yaw, wheelbase).unwrap();
        worst = worst.max((back - theta).abs());
    }
    assert!(worst < 1e-12, "roundtrip error {worst}");
    pass(
        "criterion 5 (bicycle model)",
        format!("atan(0.135) exact to 1e-12; roundtrip worst error {worst:.2e}"),
    );
}

/// Criterion 6 — constant-steering kinematic integration closes a circle of
/// radius L/tan(Θ) within 1% at dt = 0.01 of the period; the literal
/// integrator's step length is exactly v·dt.
#[test]
fn acceptance_c06_trajectory_kinematics() {
    let wheelbase = 2.7;
    let mut worst_closing = 0.0f64;
    for theta in [0.1, 0.25, -0.4] {
        let v = 7.5;
        let yaw_rate = v * f64::tan(theta) / wheelbase;
        let period = std::f64::consts::TAU / yaw_rate.abs();
        let dt = 0.01 * period;
        let radius = (wheelbase / f64::tan(theta)).abs();
        let traj = integrate_path_kinematic(
            &vec![theta; 100],
            &vec![v; 100],
            dt,
            EgoState::origin(),
            wheelbase,
        )
        .unwrap();
        let end = traj.states().last().unwrap();
        let closing = (end.x.powi(2) + end.y.powi(2)).sqrt() / radius;
        worst_closing = worst_closing.max(closing);
        assert!(closing < 0.01, "closing error {closing:.4} of radius");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let angles: Vec<f64> = (0..200).map(|_| rng.random_range(-1.2..1.2)).collect();
    let velocities: Vec<f64> = (0..200).map(|_| rng.random_range(0.5..25.0)).collect();
    let dt = 0.08;
    let traj = integrate_path_paper(&angles, &velocities, dt, EgoState::origin()).unwrap();
    for (i, w) in traj.states().windows(2).enumerate() {
        let step = ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt();
        assert!(
            (step - velocities[i] * dt).abs() < 1e-12,
            "step {i} length {step} != v*dt"
        );
    }
    pass(
        "criterion 6 (trajectory kinematics)",
        format!(
            "circle closing error <= {:.3}% of radius; literal steps exactly v*dt",
            100.0 * worst_closing
        ),
    );
}

/// Criterion 7 — encoder outputs are invariant to node/point permutation
/// within a frame to 1e-9, with the FPS seed remapped under permutation.
#[test]
fn acceptance_c07_permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let cloud = random_semantic_cloud(&mut rng, 90, 3.0, 3);
        let mut perm: Vec<usize> = (0..cloud.len()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let permuted = PointCloud::new(perm.iter().map(|&i| cloud.points[i]).collect())
            .unwrap()
            .with_classes(
                perm.iter()
                    .map(|&i| cloud.classes.as_ref().unwrap()[i])
                    .collect(),
                cloud.class_table.clone().unwrap(),
            )
            .unwrap();

        // GCN path: graphs rebuilt from the permuted cloud.
        let gnn = SteeringModel::from_preset(&preset("gnn-ncp").unwrap(), 6, trial).unwrap();
        let a = model_forward(
            &gnn,
            &[FrameInput::from_graph(&build_knn_graph(&cloud, 5).unwrap()).unwrap()],
        )
        .unwrap();
        let b = model_forward(
            &gnn,
            &[FrameInput::from_graph(&build_knn_graph(&permuted, 5).unwrap()).unwrap()],
        )
        .unwrap();
        worst = worst.max((a - b).abs());
        assert!((a - b).abs() < 1e-9, "GCN trial {trial}: {a} vs {b}");

        // PointNet++ path with the FPS seed remapped to old point 0.
        let mut pnpp =
            SteeringModel::from_preset(&preset("pnpp-ncp").unwrap(), 6, 100 + trial).unwrap();
        let a = model_forward(&pnpp, &[FrameInput::from_cloud(&cloud).unwrap()]).unwrap();
        if let Encoder::PointNet(enc) = &mut pnpp.encoder {
            enc.fps_seed = perm.iter().position(|&i| i == 0).unwrap();
        }
        let b = model_forward(&pnpp, &[FrameInput::from_cloud(&permuted).unwrap()]).unwrap();
        worst = worst.max((a - b).abs());
        assert!((a - b).abs() < 1e-9, "PointNet trial {trial}: {a} vs {b}");
    }
    pass(
        "criterion 7 (permutation invariance)",
        format!("both encoders, 10 permutations, worst deviation {worst:.2e} <= 1e-9"),
    );
}

/// Criterion 8 — on the seeded corridor dataset (12/2/1, 256 points/frame,
/// horizon 4) the gnn-lstm and gnn-ncp presets reach held-out MSE <= 50% of
/// the constant-mean predictor within 200 epochs and 15 minutes, with a
/// bit-reproducible loss history.
#[test]
fn acceptance_c08_desk_scale_learning() {
    let data = corridor_dataset(None);
    let baseline = mean_predictor_mse(&data.test);
    assert!(baseline > 1e-5, "degenerate test split variance {baseline}");

    for preset_name in ["gnn-lstm", "gnn-ncp"] {
        let start = Instant::now();
        let cfg = preset(preset_name).unwrap();
        let tc = TrainConfig {
            max_epochs: 200,
            patience: 30,
            ..TrainConfig::default()
        };
        let model = SteeringModel::from_preset(&cfg, 6, 42).unwrap();
        let (best, history) = train(model, &data.train, &data.val, &tc).unwrap();
        let elapsed = start.elapsed();
        let report = evaluate(&best, &data.test, "test").unwrap();
        let ratio = report.mse / baseline;
        assert!(
            ratio <= 0.5,
            "{preset_name}: held-out MSE {:.3e} is {:.1}% of baseline {:.3e}",
            report.mse,
            100.0 * ratio,
            baseline
        );
        assert!(
            elapsed.as_secs() < 900,
            "{preset_name}: training took {elapsed:?} (budget 15 min)"
        );

        // Bit-reproducibility: a shorter rerun reproduces the history
        // prefix exactly.
        let rerun_epochs = history.epochs.len().min(10);
        let rerun_cfg = TrainConfig {
            max_epochs: rerun_epochs,
            patience: usize::MAX,
            ..tc.clone()
        };
        let model = SteeringModel::from_preset(&cfg, 6, 42).unwrap();
        let (_, rerun) = train(model, &data.train, &data.val, &rerun_cfg).unwrap();
        assert_eq!(
            &history.epochs[..rerun_epochs],
            &rerun.epochs[..],
            "{preset_name}: loss history is not bit-reproducible"
        );

        pass(
            "criterion 8 (desk-scale learning)",
            format!(
                "{preset_name}: held-out MSE {:.3e} = {:.2}% of mean-predictor {:.3e}, \
                 {} epochs in {elapsed:?}, history bit-reproducible",
                report.mse,
                100.0 * ratio,
                baseline,
                history.epochs.len()
            ),
        );
    }
}

/// Criterion 9 — with identical budgets, the semantic-pruned GNN variant
/// stays within +10% of the unpruned variant's held-out MSE while counting
/// strictly fewer edge-message operations per forward pass. Both variants
/// are trained as small fixed-seed ensembles so the comparison reflects the
/// approach, not one initialization.
#[test]
fn acceptance_c09_pruning_ordering_probe() {
    let plain = corridor_dataset(None);
    let pruned_data = corridor_dataset(Some(0.2));
    let tc = TrainConfig {
        max_epochs: 80,
        patience: 80,
        ..TrainConfig::default()
    };
    let cfg = preset("gnn-ncp").unwrap();
    let seeds = [42u64, 7, 11, 23];

    let mut mse_plain = 0.0;
    let mut mse_pruned = 0.0;
    let mut ops_plain = 0u64;
    let mut ops_pruned = 0u64;
    for &seed in &seeds {
        let model = SteeringModel::from_preset(&cfg, 6, seed).unwrap();
        let (best, _) = train(model, &plain.train, &plain.val, &tc).unwrap();
        let report = evaluate(&best, &plain.test, "test").unwrap();
        mse_plain += report.mse;
        ops_plain = report.edge_message_ops;

        let model = SteeringModel::from_preset(&cfg, 6, seed).unwrap();
        let (best, _) = train(model, &pruned_data.train, &pruned_data.val, &tc).unwrap();
        let report = evaluate(&best, &pruned_data.test, "test").unwrap();
        mse_pruned += report.mse;
        ops_pruned = report.edge_message_ops;
    }
    mse_plain /= seeds.len() as f64;
    mse_pruned /= seeds.len() as f64;

    assert!(
        ops_pruned < ops_plain,
        "pruned forward pass must count strictly fewer edge messages \
         ({ops_pruned} vs {ops_plain})"
    );
    assert!(
        mse_pruned <= mse_plain * 1.10,
        "pruned MSE {mse_pruned:.3e} exceeds unpruned {mse_plain:.3e} + 10%"
    );
    pass(
        "criterion 9 (relative ordering probe)",
        format!(
            "pruned MSE {:.3e} vs unpruned {:.3e} (ratio {:.3} <= 1.10); \
             edge messages {} < {} per test pass",
            mse_pruned,
            mse_plain,
            mse_pruned / mse_plain,
            ops_pruned,
            ops_plain
        ),
    );
}

/// Criterion 10 — sensor formats round-trip byte-exactly and the oxts
/// accessor indices are pinned by the checked-in dataformat fixture.
#[test]
fn acceptance_c10_format_fidelity() {
    let fixture_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");

    // Velodyne roundtrip (reflectance channel documented lossy, fixture
    // carries zeros there).
    let bin_path = fixture_dir.join("velodyne_0000000000.bin");
    let bytes = std::fs::read(&bin_path).unwrap();
    let cloud = steercloud::data::velodyne::parse_velodyne_bin(&bytes, &bin_path).unwrap();
    let rewritten = steercloud::data::velodyne::serialize_velodyne_bin(&cloud);
    assert_eq!(bytes, rewritten, "velodyne roundtrip is not byte-exact");

    // Oxts roundtrip.
    let oxts_path = fixture_dir.join("oxts_0000000000.txt");
    let text = std::fs::read_to_string(&oxts_path).unwrap();
    let line = text.lines().next().unwrap();
    let record = steercloud::data::oxts::parse_oxts(line).unwrap();
    assert_eq!(record.to_line(), line, "oxts roundtrip is not byte-exact");

    // Accessor indices validated against the dataformat fixture.
    let fmt = std::fs::read_to_string(fixture_dir.join("dataformat.txt")).unwrap();
    let names: Vec<&str> = fmt
        .lines()
        .filter_map(|l| l.split(':').next())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    assert_eq!(names.len(), 30, "dataformat fixture must list 30 fields");
    assert_eq!(names[steercloud::data::oxts::VF_INDEX], "vf");
    assert_eq!(names[steercloud::data::oxts::WZ_INDEX], "wz");
    for (i, name) in names.iter().enumerate() {
        assert_eq!(
            *name,
            steercloud::data::oxts::FIELD_NAMES[i],
            "field {i} disagrees with the dataformat fixture"
        );
    }
    pass(
        "criterion 10 (format fidelity)",
        "velodyne and oxts fixtures roundtrip byte-exactly; vf=8, wz=19 pinned by dataformat"
            .to_string(),
    );
}

/// Criterion 11 — the README states explicitly that the full-scale results
/// (test MSE 0.267 -> 0.077) are not reproduction targets and points to the
/// desk-scale criteria instead.
#[test]
fn acceptance_c11_non_reproducibility_documented() {
    let readme_path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let readme = std::fs::read_to_string(&readme_path).expect("README.md must exist");
    for needle in ["0.267", "0.077", "not reproduction targets", "desk-scale"] {
        assert!(
            readme.contains(needle),
            "README.md must state the non-reproducibility of full-scale results \
             (missing '{needle}')"
        );
    }
    pass(
        "criterion 11 (explicit non-reproducibility)",
        "README names the full-scale error figures and defers to the desk-scale criteria"
            .to_string(),
    );
}
