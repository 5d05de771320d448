//! `build-graph`: kNN graph construction and semantic pruning for one frame,
//! with DOT and CSV emission.

use crate::config::RunConfig;
use anyhow::{bail, Context};
use clap::Args;
use std::path::PathBuf;
use steercloud::data::velodyne::parse_velodyne_bin;
use steercloud::graph::{
    build_knn_graph, edges_to_csv, graph_stats, prune_inter_class, to_dot, GraphStats,
    SemanticGraph,
};
use steercloud::pointcloud::{
    attach_semantics, back_project, from_csv, random_downsample, CameraIntrinsics, PointCloud,
};
use steercloud::spdm;

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    /// Frame file: point-cloud CSV (`x,y,z[,class]`) or velodyne `.bin`.
    #[arg(long, conflicts_with = "depth")]
    pub frame: Option<PathBuf>,
    /// Depth map (SPDM) to back-project instead of a frame file.
    #[arg(long, requires = "fx")]
    pub depth: Option<PathBuf>,
    /// Semantic map (SPDM) paired with `--depth`.
    #[arg(long)]
    pub semantic: Option<PathBuf>,
    #[arg(long)]
    pub fx: Option<f64>,
    #[arg(long)]
    pub fy: Option<f64>,
    #[arg(long)]
    pub cx: Option<f64>,
    #[arg(long)]
    pub cy: Option<f64>,
    /// Pixel stride for back-projection.
    #[arg(long, default_value_t = 1)]
    pub stride: u32,
    /// Downsample target before graph construction (0 keeps all points).
    #[arg(long, default_value_t = 0)]
    pub points: usize,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Inter-class keep ratio for semantic pruning.
    #[arg(long, default_value_t = 0.2)]
    pub keep_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn load_frame(args: &BuildGraphArgs) -> anyhow::Result<PointCloud> {
    if let Some(depth_path) = &args.depth {
        let depth = spdm::read_depth_file(depth_path)?;
        let intr = CameraIntrinsics::new(
            args.fx.context("--fx required with --depth")?,
            args.fy.unwrap_or(args.fx.unwrap()),
            args.cx.unwrap_or(depth.width as f64 / 2.0),
            args.cy.unwrap_or(depth.height as f64 / 2.0),
        )?;
        let cloud = back_project(&depth, &intr, args.stride)?;
        return Ok(match &args.semantic {
            Some(sem_path) => {
                let sem = spdm::read_classes_file(sem_path)?;
                attach_semantics(&cloud, &sem, true)?
            }
            None => cloud,
        });
    }
    let path = args
        .frame
        .as_ref()
        .context("either --frame or --depth is required")?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => Ok(parse_velodyne_bin(&std::fs::read(path)?, path)?),
        Some("csv") => Ok(from_csv(&std::fs::read_to_string(path)?)?),
        other => bail!("unsupported frame extension {other:?} (expected .csv or .bin)"),
    }
}

fn stats_row(stage: &str, stats: &GraphStats) -> String {
    format!(
        "{stage},{},{},{},{},{},{}\n",
        stats.node_count,
        stats.edge_count,
        stats.same_class_edges,
        stats.inter_class_edges,
        stats.mean_degree,
        stats.k_clamped
    )
}

pub fn run(args: &BuildGraphArgs) -> anyhow::Result<()> {
    let mut cloud = load_frame(args)?;
    if args.points > 0 {
        cloud = random_downsample(&cloud, args.points, args.seed)?;
    }
    let graph = build_knn_graph(&cloud, args.k)?;
    let pre_stats = graph_stats(&graph);

    let pruned: SemanticGraph = if cloud.has_classes() {
        prune_inter_class(&graph, args.keep_ratio, args.seed)?
    } else {
        eprintln!("frame carries no classes; pruning skipped");
        graph.clone()
    };
    let post_stats = graph_stats(&pruned);

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("graph_pre.dot"), to_dot(&graph))?;
    std::fs::write(args.out.join("graph_post.dot"), to_dot(&pruned))?;
    std::fs::write(args.out.join("edges_pre.csv"), edges_to_csv(&graph))?;
    std::fs::write(args.out.join("edges_post.csv"), edges_to_csv(&pruned))?;
    let mut stats_csv =
        String::from("stage,nodes,edges,same_class_edges,inter_class_edges,mean_degree,k_clamped\n");
    stats_csv.push_str(&stats_row("pre", &pre_stats));
    stats_csv.push_str(&stats_row("post", &post_stats));
    std::fs::write(args.out.join("stats.csv"), &stats_csv)?;

    let cfg = RunConfig::new(&[
        ("k", args.k.to_string()),
        ("keep_ratio", args.keep_ratio.to_string()),
        ("seed", args.seed.to_string()),
        ("points", args.points.to_string()),
        ("stride", args.stride.to_string()),
    ]);
    cfg.write_manifest(&args.out, "build-graph")?;
    eprintln!(
        "graph: {} nodes, {} -> {} edges ({} same-class, {} -> {} inter-class)",
        pre_stats.node_count,
        pre_stats.edge_count,
        post_stats.edge_count,
        pre_stats.same_class_edges,
        pre_stats.inter_class_edges,
        post_stats.inter_class_edges
    );
    Ok(())
}
