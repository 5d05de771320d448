//! PointNet++ set abstraction: farthest point sampling, ball-query grouping,
//! a shared point MLP, and symmetric max aggregation.

use super::mlp::Mlp;
use super::{Activation, ParamTensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pointcloud::Point3;
use crate::spatial::{fps_points, SpatialIndex};
use crate::tape::{Tape, Var};
use rand::Rng;

/// One sampling + grouping + shared-MLP + max-pool level.
#[derive(Debug, Clone)]
pub struct SetAbstractionLevel {
    /// Number of sampled centroids.
    pub m: usize,
    /// Ball query radius in meters.
    pub radius: f64,
    /// Neighborhood size cap; nearest members are kept.
    pub max_group: usize,
    /// Shared point function h_θ applied to (x_j − x_i, f_j).
    pub mlp: Mlp,
}

impl SetAbstractionLevel {
    pub fn new(
        name: &str,
        m: usize,
        radius: f64,
        max_group: usize,
        in_features: usize,
        widths: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if m == 0 || radius <= 0.0 || max_group == 0 || widths.is_empty() {
            return Err(Error::InvalidConfig(
                "set abstraction needs m >= 1, radius > 0, max_group >= 1, non-empty widths".into(),
            ));
        }
        let mut all_widths = vec![3 + in_features];
        all_widths.extend_from_slice(widths);
        Ok(Self {
            m,
            radius,
            max_group,
            mlp: Mlp::new(name, &all_widths, Activation::Relu, true, rng),
        })
    }

    pub fn out_dim(&self) -> usize {
        self.mlp.out_dim()
    }

    pub fn bind(&self, tape: &mut Tape) -> SetAbstractionVars {
        SetAbstractionVars {
            mlp: self.mlp.bind(tape),
        }
    }

    /// Runs the level: returns sampled centroid positions and their pooled
    /// features. `fps_seed` is the index of the first FPS pick.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &SetAbstractionVars,
        points: &[Point3],
        features: Var,
        fps_seed: usize,
    ) -> Result<(Vec<Point3>, Var)> {
        if self.m > points.len() {
            return Err(Error::InvalidConfig(format!(
                "set abstraction samples m={} from only {} points",
                self.m,
                points.len()
            )));
        }
        if features.rows() != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {} points",
                features.rows(),
                points.len()
            )));
        }
        let centroid_ids = fps_points(points, self.m, fps_seed)?;
        let index = SpatialIndex::build_from_points(points)?;

        let mut member_ids: Vec<u32> = Vec::new();
        let mut rel_coords: Vec<f64> = Vec::new();
        let mut offsets: Vec<u32> = vec![0];
        for &ci in &centroid_ids {
            let center = points[ci];
            let mut group = index.ball_query(&center, self.radius, self.max_group);
            if group.is_empty() {
                // Cannot happen when the centroid is a cloud point, but the
                // contract is: an empty neighborhood keeps the centroid.
                group.push(ci);
            }
            for &j in &group {
                member_ids.push(j as u32);
                let p = points[j];
                rel_coords.extend_from_slice(&[p.x - center.x, p.y - center.y, p.z - center.z]);
            }
            offsets.push(member_ids.len() as u32);
        }

        let rel = tape.constant(Matrix::from_vec(member_ids.len(), 3, rel_coords));
        let gathered = tape.gather_rows(features, &member_ids);
        let h_in = tape.concat_cols(rel, gathered);
        let h = self.mlp.forward(tape, &vars.mlp, h_in)?;
        let pooled = tape.segment_max(h, &offsets);
        let centroids = centroid_ids.iter().map(|&i| points[i]).collect();
        Ok((centroids, pooled))
    }

    /// Binds and runs in one call, for single-pass uses.
    pub fn forward_once(
        &self,
        tape: &mut Tape,
        points: &[Point3],
        features: Var,
        fps_seed: usize,
    ) -> Result<(Vec<Point3>, Var)> {
        let vars = self.bind(tape);
        self.forward(tape, &vars, points, features, fps_seed)
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&ParamTensor)) {
        self.mlp.visit_params(f);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamTensor)) {
        self.mlp.visit_params_mut(f);
    }
}

/// Tape handles for one bound [`SetAbstractionLevel`].
#[derive(Debug, Clone)]
pub struct SetAbstractionVars {
    mlp: super::mlp::MlpVars,
}

/// Tape handles for a bound [`PointNetEncoder`].
#[derive(Debug, Clone)]
pub struct PointNetVars {
    levels: Vec<SetAbstractionVars>,
}

/// Stacked set abstraction levels with a global max-pool readout.
#[derive(Debug, Clone)]
pub struct PointNetEncoder {
    pub levels: Vec<SetAbstractionLevel>,
    /// Index of the first FPS pick, remappable for permutation tests.
    pub fps_seed: usize,
    input_width: usize,
}

impl PointNetEncoder {
    pub fn new(
        input_width: usize,
        levels: Vec<SetAbstractionLevel>,
        fps_seed: usize,
    ) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidConfig(
                "PointNet++ encoder needs at least one level".into(),
            ));
        }
        Ok(Self {
            levels,
            fps_seed,
            input_width,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.levels.last().unwrap().out_dim()
    }

    pub fn bind(&self, tape: &mut Tape) -> PointNetVars {
        PointNetVars {
            levels: self.levels.iter().map(|l| l.bind(tape)).collect(),
        }
    }

    /// Hierarchical abstraction followed by a global max pool to 1×d.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &PointNetVars,
        points: &[Point3],
        features: Var,
    ) -> Result<Var> {
        let mut pts: Vec<Point3> = points.to_vec();
        let mut feats = features;
        let mut seed = self.fps_seed.min(pts.len().saturating_sub(1));
        for (level, lv) in self.levels.iter().zip(&vars.levels) {
            let (next_pts, next_feats) = level.forward(tape, lv, &pts, feats, seed)?;
            pts = next_pts;
            feats = next_feats;
            // Deeper levels sample from the previous level's centroids; the
            // configured seed point survives as centroid 0.
            seed = 0;
        }
        let all = [0u32, pts.len() as u32];
        Ok(tape.segment_max(feats, &all))
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&ParamTensor)) {
        for level in &self.levels {
            level.visit_params(f);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut ParamTensor)) {
        for level in &mut self.levels {
            level.visit_params_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_points(n: usize) -> Vec<Point3> {
        (0..n).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect()
    }

    #[test]
    fn degenerate_grouping_keeps_self_only() {
        // m = N with a radius below the point spacing: every neighborhood is
        // just the centroid, so the MLP sees (0, 0, 0, f_i).
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let level =
            SetAbstractionLevel::new("sa", 4, 0.5, 8, 1, &[4], &mut rng).unwrap();
        let pts = line_points(4);
        let feats = [0.1, 0.2, 0.3, 0.4];
        let mut tape = Tape::new();
        let f = tape.constant(Matrix::from_vec(4, 1, feats.to_vec()));
        let (centroids, pooled) = level.forward_once(&mut tape, &pts, f, 0).unwrap();
        assert_eq!(centroids.len(), 4);
        // Single-member groups: pooled output equals the MLP of each member.
        for ci in 0usize..4 {
            let mut check = Tape::new();
            let input = check.constant(Matrix::row_vector(&[0.0, 0.0, 0.0, feats[ci]]));
            let out = level.mlp.forward_once(&mut check, input).unwrap();
            let want = check.value(out).row(0).to_vec();
            // Centroid order follows FPS, so locate the centroid first.
            let pos = centroids
                .iter()
                .position(|p| (p.x - ci as f64).abs() < 1e-12)
                .unwrap();
            let got = tape.value(pooled).row(pos).to_vec();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn single_neighbor_matches_direct_mlp_evaluation() {
        // Neighborhood of exactly one non-centroid point at offset (1,0,0).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let level = SetAbstractionLevel::new("sa", 1, 1.5, 8, 1, &[3], &mut rng).unwrap();
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        let mut tape = Tape::new();
        let f = tape.constant(Matrix::from_vec(2, 1, vec![0.5, -0.25]));
        let (_, pooled) = level.forward_once(&mut tape, &pts, f, 0).unwrap();

        // By hand: members are the centroid (offset 0) and the point at
        // (1,0,0); pooled = max of the two MLP outputs.
        let mut check = Tape::new();
        let member0 = check.constant(Matrix::row_vector(&[0.0, 0.0, 0.0, 0.5]));
        let member1 = check.constant(Matrix::row_vector(&[1.0, 0.0, 0.0, -0.25]));
        let o0 = level.mlp.forward_once(&mut check, member0).unwrap();
        let o1 = level.mlp.forward_once(&mut check, member1).unwrap();
        let want: Vec<f64> = check
            .value(o0)
            .row(0)
            .iter()
            .zip(check.value(o1).row(0))
            .map(|(a, b)| a.max(*b))
            .collect();
        assert_eq!(tape.value(pooled).row(0), &want[..]);
    }

    #[test]
    fn max_aggregation_selects_largest_feature() {
        // Identity-like MLP: weight picks the feature column only, so the
        // pooled value is the max member feature.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut level = SetAbstractionLevel::new("sa", 1, 10.0, 8, 1, &[1], &mut rng).unwrap();
        level.visit_params_mut(&mut |p| {
            p.values.iter_mut().for_each(|v| *v = 0.0);
            if p.name == "sa.0.weight" {
                // Input layout: (dx, dy, dz, f); select f.
                p.values[3] = 1.0;
            }
        });
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let mut tape = Tape::new();
        let f = tape.constant(Matrix::from_vec(3, 1, vec![1.0, 5.0, 3.0]));
        let (_, pooled) = level.forward_once(&mut tape, &pts, f, 0).unwrap();
        assert_eq!(tape.value(pooled).data(), &[5.0]);
    }

    #[test]
    fn m_larger_than_cloud_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let level = SetAbstractionLevel::new("sa", 5, 1.0, 4, 1, &[2], &mut rng).unwrap();
        let pts = line_points(3);
        let mut tape = Tape::new();
        let f = tape.constant(Matrix::zeros(3, 1));
        assert!(level.forward_once(&mut tape, &pts, f, 0).is_err());
    }
}
