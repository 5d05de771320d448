//! On-disk sequence layout used by the synthetic dataset:
//!
//! ```text
//! <seq-dir>/frames/000000.csv    point cloud, x,y,z[,class]
//! <seq-dir>/truth.csv            frame,t,theta,velocity,x,y,heading
//! ```

use super::synthetic::SyntheticSequence;
use crate::error::{Error, Result};
use crate::pointcloud::{self, PointCloud};
use crate::vehicle::EgoState;
use std::path::Path;

/// A sequence loaded back from disk.
#[derive(Debug, Clone)]
pub struct StoredSequence {
    pub name: String,
    pub clouds: Vec<PointCloud>,
    pub truth: Vec<f64>,
    pub velocities: Vec<f64>,
    pub timestamps: Vec<f64>,
    pub poses: Vec<EgoState>,
    pub dt: f64,
}

/// Writes a generated sequence under `dir`.
pub fn save_sequence(dir: &Path, seq: &SyntheticSequence) -> Result<()> {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir)?;
    for (i, cloud) in seq.clouds.iter().enumerate() {
        std::fs::write(
            frames_dir.join(format!("{i:06}.csv")),
            pointcloud::to_csv(cloud),
        )?;
    }
    let mut truth = String::from("frame,t,theta,velocity,x,y,heading\n");
    for i in 0..seq.truth.len() {
        let p = &seq.poses[i];
        truth.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            i, seq.timestamps[i], seq.truth[i], seq.velocities[i], p.x, p.y, p.heading
        ));
    }
    std::fs::write(dir.join("truth.csv"), truth)?;
    Ok(())
}

/// Loads a sequence directory written by [`save_sequence`].
pub fn load_sequence(dir: &Path) -> Result<StoredSequence> {
    let name = dir
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("sequence")
        .to_string();
    let truth_text = std::fs::read_to_string(dir.join("truth.csv"))?;
    let mut lines = truth_text.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != "frame,t,theta,velocity,x,y,heading" {
        return Err(Error::Parse(format!(
            "unexpected truth.csv header '{header}' in {}",
            dir.display()
        )));
    }
    let mut truth = Vec::new();
    let mut velocities = Vec::new();
    let mut timestamps = Vec::new();
    let mut poses = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!(
                "truth.csv line {}: expected 7 fields",
                lineno + 2
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("truth.csv line {}: {e}", lineno + 2)))
        };
        timestamps.push(num(1)?);
        truth.push(num(2)?);
        let v = num(3)?;
        velocities.push(v);
        poses.push(EgoState::new(num(4)?, num(5)?, num(6)?, v, *timestamps.last().unwrap()));
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no frames", dir.display())));
    }

    let mut clouds = Vec::with_capacity(truth.len());
    for i in 0..truth.len() {
        let path = dir.join("frames").join(format!("{i:06}.csv"));
        let text = std::fs::read_to_string(&path).map_err(|_| Error::MissingCompanion {
            index: i,
            detail: format!("missing frame file {}", path.display()),
        })?;
        let mut cloud = pointcloud::from_csv(&text)?;
        cloud.frame_index = i as i64;
        cloud.timestamp = timestamps[i];
        clouds.push(cloud);
    }
    let dt = if timestamps.len() >= 2 {
        timestamps[1] - timestamps[0]
    } else {
        0.1
    };
    Ok(StoredSequence {
        name,
        clouds,
        truth,
        velocities,
        timestamps,
        poses,
        dt,
    })
}
