//! `path`: trajectory reconstruction from predicted steering, with optional
//! ground-truth resets at waypoints.

use crate::config::RunConfig;
use crate::dataset::load_dataset;
use crate::svg::{line_plot, Series, PALETTE};
use anyhow::{bail, Context};
use clap::Args;
use std::path::PathBuf;
use steercloud::checkpoint;
use steercloud::data::store::StoredSequence;
use steercloud::neural::EncoderSpec;
use steercloud::training::{evaluate, window_sequence, FrameKind, FramePrep};
use steercloud::vehicle::{
    integrate_path_kinematic, integrate_path_paper, EgoState, Trajectory,
};

#[derive(Debug, Args)]
pub struct PathArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Sequence name; defaults to the test split's first sequence.
    #[arg(long)]
    pub sequence: Option<String>,
    /// Comma-separated frame indices where the path resets onto truth.
    #[arg(long)]
    pub waypoints: Option<String>,
    /// Primary integrator for trajectory.csv and the SVG emphasis.
    #[arg(long, default_value = "paper")]
    pub mode: String,
    /// Config file (key = value), overridden by flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 2.7)]
    pub wheelbase: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
}

fn parse_waypoints(text: &Option<String>) -> anyhow::Result<Vec<usize>> {
    match text {
        None => Ok(Vec::new()),
        Some(t) => t
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .with_context(|| format!("bad waypoint index '{s}'"))
            })
            .collect(),
    }
}

/// Integrates angle segments between waypoints, restarting each segment at
/// the ground-truth pose; this is the reset rule of both integrators.
fn integrate_with_resets(
    mode: &str,
    angles: &[f64],
    velocities: &[f64],
    dt: f64,
    truth: &[EgoState],
    waypoints: &[usize],
    wheelbase: f64,
) -> anyhow::Result<Trajectory> {
    let mut boundaries = vec![0usize];
    for &w in waypoints {
        if w >= angles.len() {
            bail!("waypoint {w} beyond the {}-frame sequence", angles.len());
        }
        boundaries.push(w);
    }
    boundaries.sort_unstable();
    boundaries.dedup();
    let mut states: Vec<EgoState> = Vec::new();
    for (i, &start) in boundaries.iter().enumerate() {
        let end = boundaries.get(i + 1).copied().unwrap_or(angles.len());
        let seg = match mode {
            "paper" => integrate_path_paper(
                &angles[start..end],
                &velocities[start..end],
                dt,
                truth[start],
            )?,
            "kinematic" => integrate_path_kinematic(
                &angles[start..end],
                &velocities[start..end],
                dt,
                truth[start],
                wheelbase,
            )?,
            other => bail!("unknown mode '{other}' (expected paper or kinematic)"),
        };
        // Each segment restarts from the truth pose; its first state
        // replaces the previous segment's drifted endpoint.
        if !states.is_empty() {
            states.pop();
        }
        states.extend(seg.states().iter().copied());
    }
    Ok(Trajectory::new(states)?)
}

fn series(label: &str, color: &'static str, traj: &Trajectory) -> Series {
    Series {
        label: label.into(),
        color,
        points: traj.states().iter().map(|s| (s.x, s.y)).collect(),
    }
}

fn predicted_angles(
    ck: &checkpoint::Checkpoint,
    seq: &StoredSequence,
    prep: &FramePrep,
    horizon: usize,
) -> anyhow::Result<Vec<f64>> {
    let truth: Vec<Option<f64>> = seq.truth.iter().map(|&t| Some(t)).collect();
    let windows = window_sequence(&seq.clouds, &truth, horizon);
    if windows.is_empty() {
        bail!("sequence shorter than the horizon");
    }
    let samples = steercloud::training::prepare_samples(&windows, prep)?;
    let report = evaluate(&ck.model, &samples, "path")?;
    // Residuals are pred − truth in window order; windows tile the prefix.
    let truths = samples.iter().flat_map(|s| s.truth.iter().copied());
    Ok(report
        .residuals
        .iter()
        .zip(truths)
        .map(|(r, t)| t + r)
        .collect())
}

pub fn run(args: &PathArgs) -> anyhow::Result<()> {
    let ck = checkpoint::load(&args.checkpoint)?;
    let dataset = load_dataset(&args.data)?;
    let seq_name = match &args.sequence {
        Some(n) => n.clone(),
        None => dataset
            .split
            .test
            .first()
            .context("dataset has no test sequence")?
            .clone(),
    };
    let seq = dataset.sequence(&seq_name)?;
    let waypoints = parse_waypoints(&args.waypoints)?;
    if !["paper", "kinematic"].contains(&args.mode.as_str()) {
        bail!("unknown mode '{}' (expected paper or kinematic)", args.mode);
    }

    let mut cfg = RunConfig::new(&[
        ("sequence", seq_name.clone()),
        ("mode", args.mode.clone()),
        ("wheelbase", args.wheelbase.to_string()),
        ("waypoints", args.waypoints.clone().unwrap_or_default()),
        ("seed", "0".into()),
        ("points_per_frame", ck.preset.points_per_frame.to_string()),
        ("knn_k", "8".into()),
        ("horizon", ck.preset.horizon.to_string()),
    ]);
    if let Some(file) = &args.config {
        cfg.apply_file(file)?;
    }
    cfg.set_opt("seed", &args.seed)?;
    cfg.set_opt("points_per_frame", &args.points)?;
    cfg.set_opt("knn_k", &args.k)?;
    cfg.set_opt("horizon", &args.horizon)?;

    let prep = FramePrep {
        kind: match ck.preset.encoder {
            EncoderSpec::Gcn { .. } => FrameKind::Graph,
            EncoderSpec::PointNet { .. } => FrameKind::Cloud,
        },
        points_per_frame: cfg.get_usize("points_per_frame")?,
        semantic: true,
        knn_k: cfg.get_usize("knn_k")?,
        prune_keep_ratio: None,
        seed: cfg.get_u64("seed")?,
    };

    let horizon = cfg.get_usize("horizon")?;
    let angles = predicted_angles(&ck, seq, &prep, horizon)?;
    let n = angles.len();
    if n < seq.truth.len() {
        eprintln!(
            "note: {} trailing frames do not fill a horizon-{} window and are skipped",
            seq.truth.len() - n,
            horizon
        );
    }
    let velocities = &seq.velocities[..n];
    let truth_states = &seq.poses[..n.min(seq.poses.len())];

    let paper = integrate_with_resets(
        "paper",
        &angles,
        velocities,
        seq.dt,
        truth_states,
        &waypoints,
        args.wheelbase,
    )?;
    let kinematic = integrate_with_resets(
        "kinematic",
        &angles,
        velocities,
        seq.dt,
        truth_states,
        &waypoints,
        args.wheelbase,
    )?;
    let truth_traj = Trajectory::new(truth_states.to_vec())?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("trajectory_paper.csv"), paper.to_csv())?;
    std::fs::write(args.out.join("trajectory_kinematic.csv"), kinematic.to_csv())?;
    std::fs::write(args.out.join("trajectory_truth.csv"), truth_traj.to_csv())?;
    let main = if args.mode == "paper" { &paper } else { &kinematic };
    std::fs::write(args.out.join("trajectory.csv"), main.to_csv())?;
    let svg = line_plot(
        &format!("trajectory: {} ({})", seq_name, ck.model.preset_name),
        "x (m)",
        "y (m)",
        &[
            series("truth", PALETTE[0], &truth_traj),
            series("paper", PALETTE[1], &paper),
            series("kinematic", PALETTE[2], &kinematic),
        ],
    );
    std::fs::write(args.out.join("path.svg"), svg)?;
    cfg.write_manifest(&args.out, "path")?;
    eprintln!(
        "reconstructed {} frames of '{}' (mode {}); wrote {}",
        n,
        seq_name,
        args.mode,
        args.out.display()
    );
    Ok(())
}
