//! Exact spatial queries: k-nearest neighbors, ball query, farthest point
//! sampling. Queries return exact results; ties are broken by the smaller
//! original point index.

use crate::error::{Error, Result};
use crate::pointcloud::{Point3, PointCloud};
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        len: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Balanced kd-tree over a point cloud. Construction is deterministic for a
/// given input order; a built index is immutable and safe to query from many
/// threads.
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

fn coord(p: &Point3, axis: usize) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

impl SpatialIndex {
    /// Builds the index over all points of the cloud.
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::build_from_points(&cloud.points)
    }

    /// Builds the index over a bare point slice.
    pub fn build_from_points(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud("cannot index an empty cloud".into()));
        }
        let points = points.to_vec();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        let n = points.len();
        let root = Self::build_node(&points, &mut order, &mut nodes, 0, n);
        Ok(Self {
            points,
            order,
            nodes,
            root,
        })
    }

    fn build_node(
        points: &[Point3],
        order: &mut [u32],
        nodes: &mut Vec<Node>,
        start: usize,
        len: usize,
    ) -> usize {
        if len <= LEAF_SIZE {
            nodes.push(Node::Leaf { start, len });
            return nodes.len() - 1;
        }
        let slice = &mut order[start..start + len];
        // Split along the widest extent; ties prefer the lower axis.
        let mut axis = 0;
        let mut best_extent = f64::NEG_INFINITY;
        for a in 0..3 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in slice.iter() {
                let c = coord(&points[i as usize], a);
                lo = lo.min(c);
                hi = hi.max(c);
            }
            if hi - lo > best_extent {
                best_extent = hi - lo;
                axis = a;
            }
        }
        slice.sort_unstable_by(|&a, &b| {
            coord(&points[a as usize], axis)
                .total_cmp(&coord(&points[b as usize], axis))
                .then(a.cmp(&b))
        });
        let mid = len / 2;
        let value = coord(&points[slice[mid] as usize], axis);
        let left = Self::build_node(points, order, nodes, start, mid);
        let right = Self::build_node(points, order, nodes, start + mid, len - mid);
        nodes.push(Node::Split {
            axis,
            value,
            left,
            right,
        });
        nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `min(k, N)` points closest to `q`, sorted ascending by distance;
    /// equal distances are ordered by the smaller original index.
    pub fn knn_query(&self, q: &Point3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_visit(self.root, q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        out.into_iter()
            .map(|c| (c.idx as usize, c.d2.sqrt()))
            .collect()
    }

    fn knn_visit(&self, node: usize, q: &Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, len } => {
                for &i in &self.order[start..start + len] {
                    let cand = Candidate {
                        d2: self.points[i as usize].dist2(q),
                        idx: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = coord(q, axis) - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.knn_visit(near, q, k, heap);
                // The far side can still hold an equal-distance point with a
                // smaller index, so prune only on strict excess.
                let worst = heap.peek().map(|c| c.d2).unwrap_or(f64::INFINITY);
                if heap.len() < k || delta * delta <= worst {
                    self.knn_visit(far, q, k, heap);
                }
            }
        }
    }

    /// All point indices within radius `r` of `center`, sorted ascending by
    /// distance (ties by index) and truncated to the nearest `max_count`.
    pub fn ball_query(&self, center: &Point3, r: f64, max_count: usize) -> Vec<usize> {
        let mut hits: Vec<Candidate> = Vec::new();
        self.ball_visit(self.root, center, r * r, &mut hits);
        hits.sort_unstable();
        hits.truncate(max_count);
        hits.into_iter().map(|c| c.idx as usize).collect()
    }

    fn ball_visit(&self, node: usize, center: &Point3, r2: f64, hits: &mut Vec<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, len } => {
                for &i in &self.order[start..start + len] {
                    let d2 = self.points[i as usize].dist2(center);
                    if d2 <= r2 {
                        hits.push(Candidate { d2, idx: i });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = coord(center, axis) - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.ball_visit(near, center, r2, hits);
                if delta * delta <= r2 {
                    self.ball_visit(far, center, r2, hits);
                }
            }
        }
    }
}

#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    idx: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy farthest point sampling. The first pick is `seed_index`; each later
/// pick maximizes the minimum distance to all previous picks, ties broken by
/// the smaller index. Returns picks in selection order.
pub fn farthest_point_sampling(
    cloud: &PointCloud,
    m: usize,
    seed_index: usize,
) -> Result<Vec<usize>> {
    fps_points(&cloud.points, m, seed_index)
}

/// [`farthest_point_sampling`] over a bare point slice.
pub fn fps_points(points: &[Point3], m: usize, seed_index: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(Error::InvalidConfig(format!(
            "farthest point sampling needs 1 <= m <= {n}, got {m}"
        )));
    }
    if seed_index >= n {
        return Err(Error::IndexOutOfRange {
            index: seed_index,
            len: n,
        });
    }
    let mut picks = Vec::with_capacity(m);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut current = seed_index;
    picks.push(current);
    for _ in 1..m {
        let picked = points[current];
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, p) in points.iter().enumerate() {
            let d2 = p.dist2(&picked).min(min_d2[i]);
            min_d2[i] = d2;
            if d2 > best.0 {
                best = (d2, i);
            }
        }
        current = best.1;
        picks.push(current);
    }
    Ok(picks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_knn(points: &[Point3], q: &Point3, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.dist2(q)))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
    }

    fn brute_ball(points: &[Point3], c: &Point3, r: f64, max_count: usize) -> Vec<usize> {
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

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> PointCloud {
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

    fn collinear_cloud() -> PointCloud {
        PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(10.0, 0.0, 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn build_single_point() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)]).unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        assert_eq!(index.len(), 1);
    }

    #[test]
    fn index_size_matches_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cloud = random_cloud(&mut rng, 133, 5.0);
        assert_eq!(SpatialIndex::build(&cloud).unwrap().len(), 133);
    }

    #[test]
    fn knn_exhaustive_when_k_exceeds_n() {
        let cloud = collinear_cloud();
        let index = SpatialIndex::build(&cloud).unwrap();
        let res = index.knn_query(&Point3::new(0.4, 0.0, 0.0), 10);
        assert_eq!(res.len(), 3);
        assert_eq!(res[0].0, 0);
        assert_eq!(res[1].0, 1);
        assert_eq!(res[2].0, 2);
    }

    #[test]
    fn knn_collinear_case() {
        let cloud = collinear_cloud();
        let index = SpatialIndex::build(&cloud).unwrap();
        let res = index.knn_query(&Point3::new(0.0, 0.0, 0.0), 2);
        let ids: Vec<usize> = res.iter().map(|r| r.0).collect();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn knn_duplicate_points_prefer_lower_index() {
        let cloud = PointCloud::new(vec![
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
        ])
        .unwrap();
        let index = SpatialIndex::build(&cloud).unwrap();
        let res = index.knn_query(&Point3::new(0.0, 0.0, 0.0), 2);
        assert_eq!(res[0].0, 1);
        assert_eq!(res[1].0, 2);
    }

    #[test]
    fn ball_query_edge_radii() {
        let cloud = collinear_cloud();
        let index = SpatialIndex::build(&cloud).unwrap();
        assert!(index
            .ball_query(&Point3::new(0.5, 0.0, 0.0), 0.4, 10)
            .is_empty());
        let all = index.ball_query(&Point3::new(0.0, 0.0, 0.0), 1e12, 10);
        assert_eq!(all, vec![0, 1, 2]);
    }

    #[test]
    fn queries_match_brute_force_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..25 {
            let n = rng.random_range(2..300);
            let cloud = random_cloud(&mut rng, n, 2.0);
            let index = SpatialIndex::build(&cloud).unwrap();
            for _ in 0..10 {
                let q = Point3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                );
                let k = rng.random_range(1..20);
                let got = index.knn_query(&q, k);
                let want = brute_knn(&cloud.points, &q, k);
                assert_eq!(
                    got.iter().map(|g| g.0).collect::<Vec<_>>(),
                    want.iter().map(|w| w.0).collect::<Vec<_>>(),
                    "knn mismatch in trial {trial}"
                );
                let r = rng.random_range(0.1..2.5);
                let got = index.ball_query(&q, r, 25);
                let want = brute_ball(&cloud.points, &q, r, 25);
                assert_eq!(got, want, "ball mismatch in trial {trial}");
            }
        }
    }

    #[test]
    fn permuted_cloud_gives_same_geometry_answers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cloud = random_cloud(&mut rng, 120, 3.0);
        let perm: Vec<usize> = {
            use rand::seq::SliceRandom;
            let mut p: Vec<usize> = (0..cloud.len()).collect();
            p.shuffle(&mut rng);
            p
        };
        let permuted =
            PointCloud::new(perm.iter().map(|&i| cloud.points[i]).collect()).unwrap();
        let ia = SpatialIndex::build(&cloud).unwrap();
        let ib = SpatialIndex::build(&permuted).unwrap();
        let q = Point3::new(0.3, -0.2, 0.9);
        let da: Vec<f64> = ia.knn_query(&q, 12).into_iter().map(|r| r.1).collect();
        let db: Vec<f64> = ib.knn_query(&q, 12).into_iter().map(|r| r.1).collect();
        assert_eq!(da, db);
    }

    #[test]
    fn fps_trivia() {
        let cloud = collinear_cloud();
        assert_eq!(farthest_point_sampling(&cloud, 1, 2).unwrap(), vec![2]);
        let all = farthest_point_sampling(&cloud, 3, 0).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
        assert!(farthest_point_sampling(&cloud, 4, 0).is_err());
    }

    #[test]
    fn fps_collinear_greedy() {
        let cloud = collinear_cloud();
        assert_eq!(farthest_point_sampling(&cloud, 2, 0).unwrap(), vec![0, 2]);
    }

    #[test]
    fn fps_matches_brute_force_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = rng.random_range(3..80);
            let cloud = random_cloud(&mut rng, n, 4.0);
            let m = rng.random_range(1..=n);
            let got = farthest_point_sampling(&cloud, m, 0).unwrap();
            // Brute force greedy by definition.
            let mut picks = vec![0usize];
            while picks.len() < m {
                let mut best = (f64::NEG_INFINITY, usize::MAX);
                for i in 0..n {
                    let d2 = picks
                        .iter()
                        .map(|&p| cloud.points[i].dist2(&cloud.points[p]))
                        .fold(f64::INFINITY, f64::min);
                    if d2 > best.0 {
                        best = (d2, i);
                    }
                }
                picks.push(best.1);
            }
            assert_eq!(got, picks);
        }
    }

    #[test]
    fn fps_min_pairwise_distance_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = random_cloud(&mut rng, 60, 3.0);
        let picks = farthest_point_sampling(&cloud, 60, 4).unwrap();
        let mut last = f64::INFINITY;
        for m in 2..=picks.len() {
            let chosen = &picks[..m];
            let mut min_d = f64::INFINITY;
            for i in 0..m {
                for j in i + 1..m {
                    min_d = min_d
                        .min(cloud.points[chosen[i]].dist(&cloud.points[chosen[j]]));
                }
            }
            assert!(min_d <= last + 1e-12);
            last = min_d;
        }
    }
}
