//! kNN graphs over semantic point clouds, semantic-aware edge pruning, and
//! the symmetric-normalized adjacency used by GCN layers.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pointcloud::{Point3, PointCloud};
use crate::sparse::CsrMatrix;
use crate::spatial::SpatialIndex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

/// One graph node: a cloud point with its feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub point_index: usize,
    pub position: Point3,
    pub feature: Vec<f64>,
    pub class_id: Option<u16>,
}

/// Undirected graph over a point cloud. Edges are canonical `(i, j)` pairs
/// with `i < j`, kept sorted; the CSR adjacency mirrors the edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph {
    pub nodes: Vec<GraphNode>,
    edges: Vec<(u32, u32)>,
    adj_row_ptr: Vec<usize>,
    adj_neighbors: Vec<u32>,
    /// Set when the requested k reached N and was clamped to N-1.
    pub k_clamped: bool,
}

impl SemanticGraph {
    fn from_parts(nodes: Vec<GraphNode>, mut edges: Vec<(u32, u32)>, k_clamped: bool) -> Self {
        edges.sort_unstable();
        edges.dedup();
        let (adj_row_ptr, adj_neighbors) = build_csr_adjacency(nodes.len(), &edges);
        Self {
            nodes,
            edges,
            adj_row_ptr,
            adj_neighbors,
            k_clamped,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonical `(i, j)` edge list, sorted, `i < j`.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Neighbor indices of node `i`, ascending.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj_neighbors[self.adj_row_ptr[i]..self.adj_row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj_row_ptr[i + 1] - self.adj_row_ptr[i]
    }

    pub fn has_classes(&self) -> bool {
        self.nodes.iter().all(|n| n.class_id.is_some())
    }

    /// Node features stacked as an n × d matrix.
    pub fn feature_matrix(&self) -> Matrix {
        let d = self.nodes.first().map_or(0, |n| n.feature.len());
        let mut m = Matrix::zeros(self.nodes.len(), d);
        for (i, node) in self.nodes.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&node.feature);
        }
        m
    }
}

fn build_csr_adjacency(n: usize, edges: &[(u32, u32)]) -> (Vec<usize>, Vec<u32>) {
    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(i, j) in edges {
        lists[i as usize].push(j);
        lists[j as usize].push(i);
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::with_capacity(edges.len() * 2);
    row_ptr.push(0);
    for mut list in lists {
        list.sort_unstable();
        neighbors.extend_from_slice(&list);
        row_ptr.push(neighbors.len());
    }
    (row_ptr, neighbors)
}

fn node_features(cloud: &PointCloud) -> Vec<Vec<f64>> {
    let one_hot = cloud.one_hot_width();
    cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut f = vec![p.x, p.y, p.z];
            if let Some(classes) = &cloud.classes {
                let mut hot = vec![0.0; one_hot];
                hot[classes[i] as usize] = 1.0;
                f.extend_from_slice(&hot);
            }
            f
        })
        .collect()
}

fn make_nodes(cloud: &PointCloud) -> Vec<GraphNode> {
    let features = node_features(cloud);
    cloud
        .points
        .iter()
        .enumerate()
        .zip(features)
        .map(|((i, p), feature)| GraphNode {
            point_index: i,
            position: *p,
            feature,
            class_id: cloud.classes.as_ref().map(|c| c[i]),
        })
        .collect()
}

fn knn_edges_for_node(index: &SpatialIndex, cloud: &PointCloud, i: usize, k: usize) -> Vec<(u32, u32)> {
    index
        .knn_query(&cloud.points[i], k + 1)
        .into_iter()
        .filter(|&(j, _)| j != i)
        .take(k)
        .map(|(j, _)| {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            (a as u32, b as u32)
        })
        .collect()
}

fn knn_graph_from_lists(
    cloud: &PointCloud,
    per_node: Vec<Vec<(u32, u32)>>,
    k_clamped: bool,
) -> SemanticGraph {
    let mut edge_set = BTreeSet::new();
    for list in per_node {
        edge_set.extend(list);
    }
    SemanticGraph::from_parts(make_nodes(cloud), edge_set.into_iter().collect(), k_clamped)
}

fn check_knn_args(cloud: &PointCloud, k: usize) -> Result<(usize, bool)> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "kNN graph needs at least 2 points, got {n}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    // k >= N degenerates to the all-pairs graph; flagged, not an error.
    if k >= n {
        Ok((n - 1, true))
    } else {
        Ok((k, false))
    }
}

/// Builds the undirected kNN graph: each node selects its k nearest
/// neighbors (excluding itself) and the directed relation is symmetrized by
/// union. Node features are coordinates plus a one-hot class encoding when
/// the cloud carries semantics.
pub fn build_knn_graph(cloud: &PointCloud, k: usize) -> Result<SemanticGraph> {
    let (k, k_clamped) = check_knn_args(cloud, k)?;
    let index = SpatialIndex::build(cloud)?;
    let per_node: Vec<Vec<(u32, u32)>> = (0..cloud.len())
        .map(|i| knn_edges_for_node(&index, cloud, i, k))
        .collect();
    Ok(knn_graph_from_lists(cloud, per_node, k_clamped))
}

/// Parallel variant of [`build_knn_graph`]; per-node kNN queries fan out
/// across threads and the result is identical to the sequential build.
#[cfg(feature = "parallel")]
pub fn par_build_knn_graph(cloud: &PointCloud, k: usize) -> Result<SemanticGraph> {
    use rayon::prelude::*;

    let (k, k_clamped) = check_knn_args(cloud, k)?;
    let index = SpatialIndex::build(cloud)?;
    let per_node: Vec<Vec<(u32, u32)>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| knn_edges_for_node(&index, cloud, i, k))
        .collect();
    Ok(knn_graph_from_lists(cloud, per_node, k_clamped))
}

/// Semantic-aware pruning: edges whose endpoints share a class are always
/// retained; of the inter-class edges exactly `floor(keep_ratio · m_inter)`
/// survive, selected by a seeded uniform shuffle of the canonically sorted
/// inter-class edge list.
pub fn prune_inter_class(
    graph: &SemanticGraph,
    keep_ratio: f64,
    seed: u64,
) -> Result<SemanticGraph> {
    if !(0.0..=1.0).contains(&keep_ratio) {
        return Err(Error::InvalidConfig(format!(
            "keep_ratio must be in [0, 1], got {keep_ratio}"
        )));
    }
    if !graph.has_classes() {
        return Err(Error::MissingClasses);
    }
    let mut same = Vec::new();
    let mut inter = Vec::new();
    for &(i, j) in &graph.edges {
        let ci = graph.nodes[i as usize].class_id.unwrap();
        let cj = graph.nodes[j as usize].class_id.unwrap();
        if ci == cj {
            same.push((i, j));
        } else {
            inter.push((i, j));
        }
    }
    let keep = (keep_ratio * inter.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    inter.shuffle(&mut rng);
    inter.truncate(keep);
    same.extend(inter);
    Ok(SemanticGraph::from_parts(
        graph.nodes.clone(),
        same,
        graph.k_clamped,
    ))
}

/// Symmetric-normalized adjacency with self-loops:
/// `Â = D̃^{-1/2} (A + I) D̃^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    csr: Arc<CsrMatrix>,
}

impl NormalizedAdjacency {
    /// The n-node edgeless case: self-loops only.
    pub fn identity(n: usize) -> Self {
        Self {
            csr: Arc::new(CsrMatrix::from_triplets(
                n,
                n,
                (0..n).map(|i| (i, i, 1.0)),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.csr.n_rows
    }

    pub fn csr(&self) -> &Arc<CsrMatrix> {
        &self.csr
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }
}

/// Builds `Â` from the graph's undirected edge set. Isolated nodes get a
/// self-loop of weight 1.
pub fn normalize_adjacency(graph: &SemanticGraph) -> Result<NormalizedAdjacency> {
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::EmptyInput("graph has no nodes".into()));
    }
    // Degree in Ã = A + I.
    let deg: Vec<f64> = (0..n).map(|i| graph.degree(i) as f64 + 1.0).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut triplets = Vec::with_capacity(graph.edge_count() * 2 + n);
    for i in 0..n {
        triplets.push((i, i, inv_sqrt[i] * inv_sqrt[i]));
        for &j in graph.neighbors(i) {
            triplets.push((i, j as usize, inv_sqrt[i] * inv_sqrt[j as usize]));
        }
    }
    Ok(NormalizedAdjacency {
        csr: Arc::new(CsrMatrix::from_triplets(n, n, triplets)),
    })
}

/// Summary counts over a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub mean_degree: f64,
    pub same_class_edges: usize,
    pub inter_class_edges: usize,
    /// Edge counts keyed by unordered class pair (low, high).
    pub class_pair_edges: std::collections::BTreeMap<(u16, u16), usize>,
    pub k_clamped: bool,
}

pub fn graph_stats(graph: &SemanticGraph) -> GraphStats {
    let n = graph.node_count();
    let m = graph.edge_count();
    let mut class_pair_edges = std::collections::BTreeMap::new();
    let mut same = 0;
    let mut inter = 0;
    for &(i, j) in &graph.edges {
        if let (Some(ci), Some(cj)) = (
            graph.nodes[i as usize].class_id,
            graph.nodes[j as usize].class_id,
        ) {
            let key = if ci <= cj { (ci, cj) } else { (cj, ci) };
            *class_pair_edges.entry(key).or_insert(0) += 1;
            if ci == cj {
                same += 1;
            } else {
                inter += 1;
            }
        }
    }
    GraphStats {
        node_count: n,
        edge_count: m,
        mean_degree: if n == 0 { 0.0 } else { 2.0 * m as f64 / n as f64 },
        same_class_edges: same,
        inter_class_edges: inter,
        class_pair_edges,
        k_clamped: graph.k_clamped,
    }
}

/// DOT rendering with class ids as node labels, for inspection.
pub fn to_dot(graph: &SemanticGraph) -> String {
    let mut out = String::from("graph pointcloud {\n");
    for (i, node) in graph.nodes.iter().enumerate() {
        match node.class_id {
            Some(c) => {
                let _ = writeln!(out, "  n{i} [label=\"{c}\"];");
            }
            None => {
                let _ = writeln!(out, "  n{i};");
            }
        }
    }
    for &(i, j) in &graph.edges {
        let _ = writeln!(out, "  n{i} -- n{j};");
    }
    out.push_str("}\n");
    out
}

/// CSV edge list `i,j,same_class{0|1}`. Classless graphs report `same_class`
/// as 1 for every edge.
pub fn edges_to_csv(graph: &SemanticGraph) -> String {
    let mut out = String::from("i,j,same_class\n");
    for &(i, j) in &graph.edges {
        let same = match (
            graph.nodes[i as usize].class_id,
            graph.nodes[j as usize].class_id,
        ) {
            (Some(a), Some(b)) => (a == b) as u8,
            _ => 1,
        };
        let _ = writeln!(out, "{i},{j},{same}");
    }
    out
}
