//! KITTI calibration text: `key: value...` lines with row-major camera
//! matrices, e.g. `K_02: fx 0 cx 0 fy cy 0 0 1`.

use crate::error::{Error, Result};
use crate::pointcloud::CameraIntrinsics;
use std::collections::BTreeMap;

/// Per-camera intrinsics parsed from a calibration file.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibRecord {
    cameras: BTreeMap<String, CameraIntrinsics>,
}

impl CalibRecord {
    /// Intrinsics for a camera key such as `K_02`; the key must be present.
    pub fn intrinsics(&self, key: &str) -> Result<&CameraIntrinsics> {
        self.cameras.get(key).ok_or_else(|| {
            Error::Parse(format!(
                "calibration has no camera '{key}' (found: {})",
                self.cameras.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn camera_keys(&self) -> impl Iterator<Item = &str> {
        self.cameras.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

/// Parses calibration text. `K_*` keys are 3×3 row-major matrices and
/// `P_rect_*`/`P*` keys 3×4 projection matrices; both carry the focal
/// lengths and principal point at the same row-major positions.
pub fn parse_calib(text: &str) -> Result<CalibRecord> {
    let mut cameras = BTreeMap::new();
    for line in text.lines() {
        let Some((key, rest)) = line.split_once(':') else {
            continue;
        };
        let key = key.trim();
        let is_k = key.starts_with("K_") || key.starts_with('K');
        let is_p = key.starts_with("P_rect_") || key.starts_with('P');
        if !is_k && !is_p {
            continue;
        }
        let values: Vec<f64> = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("calibration '{key}': {e}")))
            })
            .collect::<Result<_>>()?;
        let cols = match values.len() {
            9 => 3,
            12 => 4,
            _ => continue,
        };
        let (fx, cx, fy, cy) = (values[0], values[2], values[cols + 1], values[cols + 2]);
        match CameraIntrinsics::new(fx, fy, cx, cy) {
            Ok(intr) => {
                cameras.insert(key.to_string(), intr);
            }
            // Zero-focal entries (e.g. unused cameras) are skipped rather
            // than failing the whole file.
            Err(Error::SingularIntrinsics { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    if cameras.is_empty() {
        return Err(Error::Parse(
            "calibration text holds no parseable camera matrices".into(),
        ));
    }
    Ok(CalibRecord { cameras })
}
