//! KITTI raw sequence loading: velodyne sweeps joined with oxts records,
//! steering ground truth attached per frame.

use super::oxts::{parse_oxts, OxtsRecord};
use crate::error::{Error, Result};
use crate::vehicle::steering_from_yaw;
use chrono::NaiveDateTime;
use std::path::{Path, PathBuf};

/// One frame of a raw sequence, before any point-cloud processing.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub velodyne_path: PathBuf,
    /// SPDM depth map for the pseudo-cloud path, when present.
    pub depth_path: Option<PathBuf>,
    /// SPDM semantic map paired with the depth map, when present.
    pub semantic_path: Option<PathBuf>,
    /// Seconds; absolute when parsed from KITTI timestamps, else synthetic.
    pub timestamp: f64,
    pub oxts: OxtsRecord,
    /// Bicycle-model ground truth; `None` on low-speed frames.
    pub steering: Option<f64>,
    pub low_speed: bool,
}

/// Parses one timestamp line: either plain seconds or the KITTI datetime
/// format `2011-09-26 13:02:25.594360375`.
pub fn parse_timestamp(line: &str) -> Result<f64> {
    let line = line.trim();
    if let Ok(v) = line.parse::<f64>() {
        return Ok(v);
    }
    let dt = NaiveDateTime::parse_from_str(line, "%Y-%m-%d %H:%M:%S%.f")
        .map_err(|e| Error::Parse(format!("timestamp '{line}': {e}")))?;
    Ok(dt.and_utc().timestamp() as f64 + dt.and_utc().timestamp_subsec_nanos() as f64 * 1e-9)
}

fn read_timestamps(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_timestamp)
        .collect()
}

fn sorted_stems(dir: &Path, extension: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(extension) {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            out.push((stem, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Loads a KITTI-raw-layout sequence directory:
///
/// ```text
/// <dir>/velodyne_points/data/NNNNNNNNNN.bin
/// <dir>/velodyne_points/timestamps.txt
/// <dir>/oxts/data/NNNNNNNNNN.txt
/// <dir>/oxts/timestamps.txt          (used when counts differ)
/// ```
///
/// Frames are joined by file stem when the two streams align one-to-one;
/// otherwise each sweep takes the oxts record nearest in timestamp (oxts
/// runs at 100 Hz against the ~10 Hz sweeps). Ground-truth steering comes
/// from the bicycle model; low-speed frames are flagged, not fabricated.
pub fn load_kitti_sequence(dir: &Path, wheelbase: f64) -> Result<Vec<FrameRecord>> {
    let velo_dir = dir.join("velodyne_points").join("data");
    let oxts_dir = dir.join("oxts").join("data");
    let sweeps = sorted_stems(&velo_dir, "bin")?;
    if sweeps.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no velodyne sweeps under {}",
            velo_dir.display()
        )));
    }
    let oxts_files = sorted_stems(&oxts_dir, "txt")?;

    let velo_times_path = dir.join("velodyne_points").join("timestamps.txt");
    let velo_times = if velo_times_path.exists() {
        read_timestamps(&velo_times_path)?
    } else {
        (0..sweeps.len()).map(|i| i as f64 * 0.1).collect()
    };
    if velo_times.len() < sweeps.len() {
        return Err(Error::Parse(format!(
            "{} sweep timestamps for {} sweeps",
            velo_times.len(),
            sweeps.len()
        )));
    }

    let records: Vec<OxtsRecord> = oxts_files
        .iter()
        .map(|(_, path)| {
            let text = std::fs::read_to_string(path)?;
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .ok_or_else(|| Error::Parse(format!("{} is empty", path.display())))?;
            parse_oxts(line)
        })
        .collect::<Result<_>>()?;

    let aligned = oxts_files.len() == sweeps.len()
        && oxts_files
            .iter()
            .zip(&sweeps)
            .all(|((os, _), (vs, _))| os == vs);

    let oxts_times = if aligned {
        Vec::new()
    } else {
        let path = dir.join("oxts").join("timestamps.txt");
        if !path.exists() {
            // Without timestamps the only join is by stem; report the first
            // sweep lacking a companion.
            for (i, (stem, _)) in sweeps.iter().enumerate() {
                if !oxts_files.iter().any(|(os, _)| os == stem) {
                    return Err(Error::MissingCompanion {
                        index: i,
                        detail: format!("no oxts record for frame stem '{stem}'"),
                    });
                }
            }
            return Err(Error::Parse(
                "oxts and velodyne streams disagree and oxts/timestamps.txt is missing".into(),
            ));
        }
        read_timestamps(&path)?
    };

    let mut frames = Vec::with_capacity(sweeps.len());
    for (i, (stem, path)) in sweeps.iter().enumerate() {
        let oxts = if aligned {
            records[i].clone()
        } else {
            if records.is_empty() {
                return Err(Error::MissingCompanion {
                    index: i,
                    detail: "sequence has no oxts records at all".into(),
                });
            }
            let t = velo_times[i];
            let nearest = oxts_times
                .iter()
                .enumerate()
                .take(records.len())
                .min_by(|(_, a), (_, b)| (*a - t).abs().total_cmp(&(*b - t).abs()))
                .map(|(j, _)| j)
                .ok_or_else(|| Error::MissingCompanion {
                    index: i,
                    detail: format!("no oxts timestamp near frame stem '{stem}'"),
                })?;
            records[nearest].clone()
        };
        let (steering, low_speed) =
            match steering_from_yaw(oxts.forward_velocity(), oxts.yaw_rate(), wheelbase) {
                Ok(theta) => (Some(theta), false),
                Err(Error::LowSpeed { .. }) => (None, true),
                Err(e) => return Err(e),
            };
        let companion = |sub: &str| {
            let p = dir.join(sub).join("data").join(format!("{stem}.spdm"));
            p.exists().then_some(p)
        };
        frames.push(FrameRecord {
            frame_index: i,
            velodyne_path: path.clone(),
            depth_path: companion("depth"),
            semantic_path: companion("semantic"),
            timestamp: velo_times[i],
            oxts,
            steering,
            low_speed,
        });
    }
    Ok(frames)
}
