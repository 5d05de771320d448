//! Shared helpers for integration tests: brute-force spatial oracles and the
//! corridor dataset recipe used by the learning criteria.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use steercloud::data::synthetic::{
    corridor_curvature_schedule, generate_synthetic_sequence, SyntheticSceneSpec,
};
use steercloud::pointcloud::{ClassTable, Point3, PointCloud};
use steercloud::training::{prepare_samples, window_sequence, FrameKind, FramePrep, PreparedSample};

/// Exhaustive kNN: the `min(k, N)` nearest by (distance, index).
pub fn brute_knn(points: &[Point3], q: &Point3, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.dist2(q)))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
}

/// Exhaustive ball query: all indices within `r`, nearest `max_count` kept.
pub fn brute_ball(points: &[Point3], c: &Point3, r: f64, max_count: usize) -> Vec<usize> {
    let mut hits: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.dist2(c)))
        .filter(|(_, d2)| *d2 <= r * r)
        .collect();
    hits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    hits.truncate(max_count);
    hits.into_iter().map(|(i, _)| i).collect()
}

/// Greedy farthest point sampling straight from its definition.
pub fn brute_fps(points: &[Point3], m: usize, seed: usize) -> Vec<usize> {
    let mut picks = vec![seed];
    while picks.len() < m {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..points.len() {
            let d2 = picks
                .iter()
                .map(|&p| points[i].dist2(&points[p]))
                .fold(f64::INFINITY, f64::min);
            if d2 > best.0 {
                best = (d2, i);
            }
        }
        picks.push(best.1);
    }
    picks
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                    rng.random_range(-scale..scale),
                )
            })
            .collect(),
    )
    .unwrap()
}

pub fn random_semantic_cloud(
    rng: &mut ChaCha8Rng,
    n: usize,
    scale: f64,
    n_classes: u16,
) -> PointCloud {
    random_cloud(rng, n, scale)
        .with_classes(
            (0..n).map(|_| rng.random_range(0..n_classes)).collect(),
            ClassTable::unnamed(n_classes as usize),
        )
        .unwrap()
}

/// The corridor dataset recipe behind the desk-scale learning criteria:
/// 12 train / 2 val / 1 test sequences, 256 points per frame after
/// downsampling, horizon-4 windows.
pub struct CorridorDataset {
    pub train: Vec<PreparedSample>,
    pub val: Vec<PreparedSample>,
    pub test: Vec<PreparedSample>,
}

pub fn corridor_prep(prune: Option<f64>) -> FramePrep {
    FramePrep {
        kind: FrameKind::Graph,
        points_per_frame: 256,
        semantic: true,
        knn_k: 8,
        prune_keep_ratio: prune,
        seed: 99,
    }
}

pub fn corridor_split(seq_seeds: &[u64], frames: usize, prep: &FramePrep) -> Vec<PreparedSample> {
    let mut out = Vec::new();
    for &seed in seq_seeds {
        let spec = SyntheticSceneSpec {
            frames,
            points_per_frame: 300,
            noise_sigma: 0.15,
            curvature_schedule: corridor_curvature_schedule(seed * 31 + 7, frames),
            seed,
            ..SyntheticSceneSpec::default()
        };
        let seq = generate_synthetic_sequence(&spec).unwrap();
        let truth: Vec<Option<f64>> = seq.truth.iter().map(|&t| Some(t)).collect();
        let windows = window_sequence(&seq.clouds, &truth, 4);
        out.extend(prepare_samples(&windows, prep).unwrap());
    }
    out
}

pub fn corridor_dataset(prune: Option<f64>) -> CorridorDataset {
    let prep = corridor_prep(prune);
    CorridorDataset {
        train: corridor_split(&(0..12).collect::<Vec<u64>>(), 24, &prep),
        val: corridor_split(&[100, 101], 24, &prep),
        test: corridor_split(&[200], 64, &prep),
    }
}
