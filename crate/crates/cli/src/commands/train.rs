//! `train`: fit a preset on a dataset directory, writing the best
//! checkpoint, a resume checkpoint, and the loss history.

use crate::config::RunConfig;
use crate::dataset::load_dataset;
use anyhow::{bail, Context};
use clap::Args;
use std::path::PathBuf;
use steercloud::checkpoint;
use steercloud::data::split::SplitKind;
use steercloud::neural::{preset, EncoderSpec, SteeringModel};
use steercloud::training::{train_with_optimizer, FrameKind, FramePrep, TrainConfig};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (from `synth` or hand-assembled with a manifest).
    #[arg(long)]
    pub data: PathBuf,
    /// Model preset name.
    #[arg(long)]
    pub preset: Option<String>,
    /// Training config file (key = value), overridden by flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Resume from a `checkpoint_last.bin` written by a previous run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Enable semantic-aware edge pruning at this keep ratio.
    #[arg(long)]
    pub keep_ratio: Option<f64>,
    /// Drop semantic classes entirely (geometry-only features).
    #[arg(long, default_value_t = false)]
    pub no_semantic: bool,
}

/// Resolves preset-dependent defaults, then file, then flags.
pub fn resolve_config(args: &TrainArgs) -> anyhow::Result<(RunConfig, String)> {
    // The preset itself obeys the same precedence, so peek at the file first.
    let mut preset_name = "gnn-ncp".to_string();
    if let Some(file) = &args.config {
        let text = std::fs::read_to_string(file)
            .with_context(|| format!("reading config {}", file.display()))?;
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                if k.trim() == "preset" {
                    preset_name = v.trim().to_string();
                }
            }
        }
    }
    if let Some(p) = &args.preset {
        preset_name = p.clone();
    }
    let preset_cfg = preset(&preset_name)?;

    let mut cfg = RunConfig::new(&[
        ("preset", preset_name.clone()),
        ("seed", "0".into()),
        ("learning_rate", "0.001".into()),
        ("max_epochs", "200".into()),
        ("patience", "20".into()),
        ("horizon", preset_cfg.horizon.to_string()),
        ("weight_alpha", "0".into()),
        ("points_per_frame", preset_cfg.points_per_frame.to_string()),
        ("knn_k", "8".into()),
        ("semantic", "true".into()),
        ("prune", "false".into()),
        ("keep_ratio", "0.2".into()),
        // Inter-class retention is a single global draw over all
        // inter-class edges; a per-class-pair scope is not implemented.
        ("prune_scope", "global".into()),
    ]);
    if let Some(file) = &args.config {
        cfg.apply_file(file)?;
    }
    cfg.set("preset", &preset_name)?;
    cfg.set_opt("seed", &args.seed)?;
    cfg.set_opt("max_epochs", &args.epochs)?;
    cfg.set_opt("learning_rate", &args.lr)?;
    cfg.set_opt("patience", &args.patience)?;
    cfg.set_opt("horizon", &args.horizon)?;
    cfg.set_opt("weight_alpha", &args.alpha)?;
    cfg.set_opt("points_per_frame", &args.points)?;
    cfg.set_opt("knn_k", &args.k)?;
    if args.keep_ratio.is_some() {
        cfg.set("prune", "true")?;
        cfg.set_opt("keep_ratio", &args.keep_ratio)?;
    }
    if args.no_semantic {
        cfg.set("semantic", "false")?;
    }
    if cfg.get("prune_scope")? != "global" {
        anyhow::bail!(
            "prune_scope '{}' is not supported; only 'global' retention is implemented",
            cfg.get("prune_scope")?
        );
    }
    Ok((cfg, preset_name))
}

/// Builds the frame pipeline settings from a resolved config.
pub fn frame_prep(cfg: &RunConfig, preset_name: &str) -> anyhow::Result<FramePrep> {
    let preset_cfg = preset(preset_name)?;
    let kind = match preset_cfg.encoder {
        EncoderSpec::Gcn { .. } => FrameKind::Graph,
        EncoderSpec::PointNet { .. } => FrameKind::Cloud,
    };
    Ok(FramePrep {
        kind,
        points_per_frame: cfg.get_usize("points_per_frame")?,
        semantic: cfg.get_bool("semantic")?,
        knn_k: cfg.get_usize("knn_k")?,
        prune_keep_ratio: if cfg.get_bool("prune")? {
            Some(cfg.get_f64("keep_ratio")?)
        } else {
            None
        },
        seed: cfg.get_u64("seed")?,
    })
}

pub fn run(args: &TrainArgs) -> anyhow::Result<()> {
    let (cfg, preset_name) = resolve_config(args)?;
    let prep = frame_prep(&cfg, &preset_name)?;
    let seed = cfg.get_u64("seed")?;

    let dataset = load_dataset(&args.data)?;
    let horizon = cfg.get_usize("horizon")?;
    eprintln!("preparing dataset under {} ...", args.data.display());
    let train_set = dataset.prepare_split(SplitKind::Train, &prep, horizon)?;
    let val_set = dataset.prepare_split(SplitKind::Val, &prep, horizon)?;
    let input_width = dataset.input_width(&prep)?;

    let tc = TrainConfig {
        learning_rate: cfg.get_f64("learning_rate")?,
        max_epochs: cfg.get_usize("max_epochs")?,
        patience: cfg.get_usize("patience")?,
        horizon,
        weight_alpha: cfg.get_f64("weight_alpha")?,
        seed,
        points_per_frame: cfg.get_usize("points_per_frame")?,
    };

    let (model, optimizer, start_epoch) = match &args.resume {
        Some(path) => {
            let ck = checkpoint::load(path)?;
            if ck.model.preset_name != preset_name {
                bail!(
                    "checkpoint preset '{}' does not match requested '{}'",
                    ck.model.preset_name,
                    preset_name
                );
            }
            eprintln!(
                "resuming from {} at epoch {}",
                path.display(),
                ck.next_epoch
            );
            (ck.model, ck.optimizer, ck.next_epoch as usize)
        }
        None => {
            let preset_cfg = preset(&preset_name)?;
            (
                SteeringModel::from_preset(&preset_cfg, input_width, seed)?,
                None,
                0,
            )
        }
    };

    eprintln!(
        "training '{preset_name}' on {} windows ({} validation) ...",
        train_set.len(),
        val_set.len()
    );
    let outcome = train_with_optimizer(model, optimizer, &train_set, &val_set, &tc, start_epoch)?;

    std::fs::create_dir_all(&args.out)?;
    checkpoint::save(
        &args.out.join("checkpoint.bin"),
        &outcome.best_model,
        seed,
        outcome.next_epoch as u64,
        None,
    )?;
    checkpoint::save(
        &args.out.join("checkpoint_last.bin"),
        &outcome.final_model,
        seed,
        outcome.next_epoch as u64,
        Some(&outcome.optimizer),
    )?;
    std::fs::write(args.out.join("history.csv"), outcome.history.to_csv())?;
    cfg.write_manifest(&args.out, "train")?;
    eprintln!(
        "best validation MSE {:.6e} at epoch {} ({} epochs run); wrote {}",
        outcome.history.best_val_mse,
        outcome.history.best_epoch,
        outcome.history.epochs.len(),
        args.out.display()
    );
    Ok(())
}
