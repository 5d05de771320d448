//! `synth`: generate a seeded synthetic corridor dataset on disk.

use crate::config::RunConfig;
use anyhow::Context;
use clap::Args;
use std::path::PathBuf;
use steercloud::data::split::{default_split, write_manifest};
use steercloud::data::store::save_sequence;
use steercloud::data::synthetic::{
    corridor_curvature_schedule, generate_synthetic_sequence, SyntheticSceneSpec,
};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene spec file (key = value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed for scenes and schedules.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sequences: Option<usize>,
    /// Frames per train/val sequence.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Frames in the test sequence.
    #[arg(long)]
    pub test_frames: Option<usize>,
    /// Points generated per frame (before any downsampling).
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

fn defaults() -> RunConfig {
    RunConfig::new(&[
        ("seed", "0".into()),
        ("sequences", "15".into()),
        ("frames", "24".into()),
        ("test_frames", "64".into()),
        ("points_per_frame", "300".into()),
        ("noise_sigma", "0.15".into()),
        ("corridor_width", "7".into()),
        ("velocity", "8".into()),
        ("dt", "0.1".into()),
        ("wheelbase", "2.7".into()),
    ])
}

pub fn run(args: &SynthArgs) -> anyhow::Result<()> {
    let mut cfg = defaults();
    if let Some(file) = &args.config {
        cfg.apply_file(file)?;
    }
    cfg.set_opt("seed", &args.seed)?;
    cfg.set_opt("sequences", &args.sequences)?;
    cfg.set_opt("frames", &args.frames)?;
    cfg.set_opt("test_frames", &args.test_frames)?;
    cfg.set_opt("points_per_frame", &args.points)?;
    cfg.set_opt("noise_sigma", &args.noise)?;

    let seed = cfg.get_u64("seed")?;
    let n_sequences = cfg.get_usize("sequences")?;
    let frames = cfg.get_usize("frames")?;
    let test_frames = cfg.get_usize("test_frames")?;

    let names: Vec<String> = (0..n_sequences).map(|i| format!("seq_{i:02}")).collect();
    let split = default_split(&names).context("building the 12/2/1-style split")?;

    std::fs::create_dir_all(&args.out)?;
    for (i, name) in names.iter().enumerate() {
        let is_test = split.test.contains(name);
        let seq_seed = seed.wrapping_mul(1000).wrapping_add(i as u64);
        let spec = SyntheticSceneSpec {
            corridor_width: cfg.get_f64("corridor_width")?,
            curvature_schedule: corridor_curvature_schedule(
                seq_seed.wrapping_mul(31).wrapping_add(7),
                if is_test { test_frames } else { frames },
            ),
            frames: if is_test { test_frames } else { frames },
            points_per_frame: cfg.get_usize("points_per_frame")?,
            noise_sigma: cfg.get_f64("noise_sigma")?,
            velocity: cfg.get_f64("velocity")?,
            dt: cfg.get_f64("dt")?,
            wheelbase: cfg.get_f64("wheelbase")?,
            seed: seq_seed,
            ..SyntheticSceneSpec::default()
        };
        let seq = generate_synthetic_sequence(&spec)?;
        save_sequence(&args.out.join(name), &seq)?;
    }
    std::fs::write(args.out.join("manifest.txt"), write_manifest(&split))?;
    cfg.write_manifest(&args.out, "synth")?;
    eprintln!(
        "wrote {} sequences ({} train / {} val / {} test) under {}",
        n_sequences,
        split.train.len(),
        split.val.len(),
        split.test.len(),
        args.out.display()
    );
    Ok(())
}
