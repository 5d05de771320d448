//! KITTI raw velodyne binary format: packed little-endian f32 quadruples
//! `(x, y, z, reflectance)`.

use crate::error::{Error, Result};
use crate::pointcloud::{Point3, PointCloud};
use std::path::Path;

/// Parses a velodyne sweep. Reflectance is discarded; point order is
/// preserved.
pub fn parse_velodyne_bin(bytes: &[u8], origin: &Path) -> Result<PointCloud> {
    if bytes.len() % 16 != 0 {
        return Err(Error::MalformedFile {
            path: origin.to_path_buf(),
            detail: format!("length {} is not a multiple of 16", bytes.len()),
            offset: (bytes.len() - bytes.len() % 16) as u64,
        });
    }
    if bytes.is_empty() {
        return Err(Error::EmptyCloud(format!(
            "velodyne file {} holds no points",
            origin.display()
        )));
    }
    let points = bytes
        .chunks_exact(16)
        .map(|chunk| {
            let f = |i: usize| f32::from_le_bytes(chunk[i..i + 4].try_into().unwrap()) as f64;
            Point3::new(f(0), f(4), f(8))
        })
        .collect();
    PointCloud::new(points)
}

/// Serializes a cloud back to the velodyne layout. The reflectance channel
/// is written as 0.0 — it is not retained by [`parse_velodyne_bin`], so the
/// roundtrip is lossy in that channel and byte-exact everywhere else.
pub fn serialize_velodyne_bin(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for p in &cloud.points {
        out.extend_from_slice(&(p.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.y as f32).to_le_bytes());
        out.extend_from_slice(&(p.z as f32).to_le_bytes());
        out.extend_from_slice(&0.0f32.to_le_bytes());
    }
    out
}
