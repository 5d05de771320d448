//! `eval`: run a checkpoint over a dataset split, emitting the residual CSV
//! and an SVG residual plot.

use crate::config::RunConfig;
use crate::dataset::load_dataset;
use crate::svg::{line_plot, Series, PALETTE};
use anyhow::Context;
use clap::Args;
use std::path::PathBuf;
use steercloud::checkpoint;
use steercloud::data::split::SplitKind;
use steercloud::training::{evaluate, mean_predictor_mse, FramePrep, PreparedSample};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Split to evaluate: train, val or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Config file (key = value), overridden by flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
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
    #[arg(long)]
    pub keep_ratio: Option<f64>,
    #[arg(long, default_value_t = false)]
    pub no_semantic: bool,
}

pub fn eval_config(
    args: &EvalArgs,
    preset_points: usize,
    preset_horizon: usize,
) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::new(&[
        ("split", args.split.clone()),
        ("seed", "0".into()),
        ("points_per_frame", preset_points.to_string()),
        ("knn_k", "8".into()),
        ("horizon", preset_horizon.to_string()),
        ("semantic", "true".into()),
        ("prune", "false".into()),
        ("keep_ratio", "0.2".into()),
    ]);
    if let Some(file) = &args.config {
        cfg.apply_file(file)?;
    }
    cfg.set("split", &args.split)?;
    cfg.set_opt("seed", &args.seed)?;
    cfg.set_opt("points_per_frame", &args.points)?;
    cfg.set_opt("knn_k", &args.k)?;
    cfg.set_opt("horizon", &args.horizon)?;
    if args.keep_ratio.is_some() {
        cfg.set("prune", "true")?;
        cfg.set_opt("keep_ratio", &args.keep_ratio)?;
    }
    if args.no_semantic {
        cfg.set("semantic", "false")?;
    }
    Ok(cfg)
}

pub fn run(args: &EvalArgs) -> anyhow::Result<()> {
    let ck = checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let cfg = eval_config(args, ck.preset.points_per_frame, ck.preset.horizon)?;
    let kind = SplitKind::parse(cfg.get("split")?)?;
    let prep = FramePrep {
        kind: match ck.preset.encoder {
            steercloud::neural::EncoderSpec::Gcn { .. } => steercloud::training::FrameKind::Graph,
            steercloud::neural::EncoderSpec::PointNet { .. } => {
                steercloud::training::FrameKind::Cloud
            }
        },
        points_per_frame: cfg.get_usize("points_per_frame")?,
        semantic: cfg.get_bool("semantic")?,
        knn_k: cfg.get_usize("knn_k")?,
        prune_keep_ratio: if cfg.get_bool("prune")? {
            Some(cfg.get_f64("keep_ratio")?)
        } else {
            None
        },
        seed: cfg.get_u64("seed")?,
    };

    let dataset = load_dataset(&args.data)?;
    let samples = dataset.prepare_split(kind, &prep, cfg.get_usize("horizon")?)?;
    let report = evaluate(&ck.model, &samples, kind.as_str())?;
    let baseline = mean_predictor_mse(&samples);

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("eval.csv"), eval_csv(&samples, &report.residuals))?;
    let residual_series = Series {
        label: "residual".into(),
        color: PALETTE[0],
        points: report
            .residuals
            .iter()
            .enumerate()
            .map(|(i, r)| (i as f64, *r))
            .collect(),
    };
    std::fs::write(
        args.out.join("residuals.svg"),
        line_plot(
            &format!("{} residuals ({})", ck.model.preset_name, report.split),
            "frame",
            "radians",
            &[residual_series],
        ),
    )?;
    let summary = format!(
        "split = {}\nframes = {}\nmse = {}\nmean_predictor_mse = {}\nedge_message_ops = {}\n",
        report.split,
        report.residuals.len(),
        report.mse,
        baseline,
        report.edge_message_ops
    );
    std::fs::write(args.out.join("eval_summary.txt"), &summary)?;
    cfg.write_manifest(&args.out, "eval")?;
    eprintln!(
        "{} MSE {:.6e} over {} frames (mean-predictor baseline {:.6e})",
        report.split,
        report.mse,
        report.residuals.len(),
        baseline
    );
    Ok(())
}

fn eval_csv(samples: &[PreparedSample], residuals: &[f64]) -> String {
    let mut out = String::from("frame,truth,pred,residual\n");
    let truths = samples.iter().flat_map(|s| s.truth.iter().copied());
    for (i, (t, r)) in truths.zip(residuals).enumerate() {
        out.push_str(&format!("{},{},{},{}\n", i, t, t + r, r));
    }
    out
}
