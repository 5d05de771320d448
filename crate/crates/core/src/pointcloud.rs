//! 3D point clouds lifted from depth/semantic maps or raw LiDAR sweeps.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A 3D point in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dist2(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(&self, other: &Point3) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// Dense table of semantic classes; the id of a class is its index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassTable {
    labels: Vec<String>,
}

impl ClassTable {
    pub fn new(labels: Vec<String>) -> Self {
        Self { labels }
    }

    /// Table of `n` classes with generated labels `class_0..class_{n-1}`.
    pub fn unnamed(n: usize) -> Self {
        Self {
            labels: (0..n).map(|i| format!("class_{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, id: u16) -> Option<&str> {
        self.labels.get(id as usize).map(|s| s.as_str())
    }
}

/// An ordered set of 3D points with optional per-point semantic classes.
///
/// Clouds produced by [`back_project`] keep the `(u, v)` source pixel of each
/// point so that semantics can be attached later without re-projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// Per-point class ids; `None` when the cloud carries no semantics.
    pub classes: Option<Vec<u16>>,
    /// Class table defining the id space of `classes`.
    pub class_table: Option<ClassTable>,
    pub frame_index: i64,
    /// Frame timestamp in seconds.
    pub timestamp: f64,
    /// Source pixel `(u, v)` per point, present on back-projected clouds.
    pub provenance: Option<Vec<(u32, u32)>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud(String::new()));
        }
        Ok(Self {
            points,
            classes: None,
            class_table: None,
            frame_index: 0,
            timestamp: 0.0,
            provenance: None,
        })
    }

    pub fn with_classes(mut self, classes: Vec<u16>, table: ClassTable) -> Result<Self> {
        if classes.len() != self.points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} classes for {} points",
                classes.len(),
                self.points.len()
            )));
        }
        self.classes = Some(classes);
        self.class_table = Some(table);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_classes(&self) -> bool {
        self.classes.is_some()
    }

    /// Width of the one-hot class encoding, 0 when no semantics are attached.
    pub fn one_hot_width(&self) -> usize {
        self.class_table.as_ref().map_or(0, |t| t.len())
    }
}

/// Pinhole camera intrinsics (pixels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.check_invertible()?;
        Ok(k)
    }

    fn check_invertible(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.cx.is_finite()
            && self.cy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::SingularIntrinsics {
                fx: self.fx,
                fy: self.fy,
            })
        }
    }

    /// Lift pixel `(u, v)` at the given depth into camera coordinates.
    pub fn lift(&self, u: f64, v: f64, depth: f64) -> Point3 {
        Point3::new(
            depth * (u - self.cx) / self.fx,
            depth * (v - self.cy) / self.fy,
            depth,
        )
    }

    /// Perspective projection of a camera-frame point back to pixel coordinates.
    pub fn project(&self, p: &Point3) -> (f64, f64) {
        (
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }
}

/// Row-major depth grid in meters with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    depth: Vec<f32>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a map from raw row-major depths. Non-finite or non-positive
    /// entries are marked invalid rather than clamped.
    pub fn new(width: u32, height: u32, depth: Vec<f32>) -> Result<Self> {
        let expect = width as usize * height as usize;
        if depth.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "depth buffer has {} entries, expected {}x{}={}",
                depth.len(),
                width,
                height,
                expect
            )));
        }
        let valid = depth.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Ok(Self {
            width,
            height,
            depth,
            valid,
        })
    }

    pub fn depth_at(&self, u: u32, v: u32) -> f32 {
        self.depth[v as usize * self.width as usize + u as usize]
    }

    pub fn is_valid(&self, u: u32, v: u32) -> bool {
        self.valid[v as usize * self.width as usize + u as usize]
    }

    /// Marks a pixel invalid (its stored depth is kept).
    pub fn invalidate(&mut self, u: u32, v: u32) {
        self.valid[v as usize * self.width as usize + u as usize] = false;
    }

    pub fn raw_depth(&self) -> &[f32] {
        &self.depth
    }
}

/// Row-major grid of semantic class ids paired with a class table.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub width: u32,
    pub height: u32,
    class_id: Vec<u16>,
    pub table: ClassTable,
}

impl SemanticMap {
    pub fn new(width: u32, height: u32, class_id: Vec<u16>, table: ClassTable) -> Result<Self> {
        let expect = width as usize * height as usize;
        if class_id.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "class grid has {} entries, expected {}x{}={}",
                class_id.len(),
                width,
                height,
                expect
            )));
        }
        if let Some(max) = class_id.iter().max() {
            if (*max as usize) >= table.len() {
                return Err(Error::DimensionMismatch(format!(
                    "class id {} outside table of {} classes",
                    max,
                    table.len()
                )));
            }
        }
        Ok(Self {
            width,
            height,
            class_id,
            table,
        })
    }

    pub fn class_at(&self, u: u32, v: u32) -> u16 {
        self.class_id[v as usize * self.width as usize + u as usize]
    }

    pub fn raw_classes(&self) -> &[u16] {
        &self.class_id
    }
}

fn strided_pixels(depth: &DepthMap, stride: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
    (0..depth.height)
        .step_by(stride as usize)
        .flat_map(move |v| (0..depth.width).step_by(stride as usize).map(move |u| (u, v)))
}

/// Back-projects valid depth pixels into 3D: `(X, Y, Z) = D(u,v) · K⁻¹ · (u, v, 1)`.
///
/// Pixels are visited in row-major scan order with the given stride; invalid
/// pixels emit nothing. The source pixel of each point is retained for
/// [`attach_semantics`].
pub fn back_project(depth: &DepthMap, intr: &CameraIntrinsics, stride: u32) -> Result<PointCloud> {
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    intr.check_invertible()?;
    let mut points = Vec::new();
    let mut provenance = Vec::new();
    for (u, v) in strided_pixels(depth, stride) {
        if let Some(p) = lift_pixel(depth, intr, u, v) {
            points.push(p);
            provenance.push((u, v));
        }
    }
    finish_back_projection(points, provenance)
}

/// Parallel variant of [`back_project`]; rows are processed concurrently and
/// reassembled in scan order, so the result is identical.
#[cfg(feature = "parallel")]
pub fn par_back_project(
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    stride: u32,
) -> Result<PointCloud> {
    use rayon::prelude::*;

    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    intr.check_invertible()?;
    let rows: Vec<u32> = (0..depth.height).step_by(stride as usize).collect();
    let per_row: Vec<(Vec<Point3>, Vec<(u32, u32)>)> = rows
        .par_iter()
        .map(|&v| {
            let mut points = Vec::new();
            let mut prov = Vec::new();
            for u in (0..depth.width).step_by(stride as usize) {
                if let Some(p) = lift_pixel(depth, intr, u, v) {
                    points.push(p);
                    prov.push((u, v));
                }
            }
            (points, prov)
        })
        .collect();
    let mut points = Vec::new();
    let mut provenance = Vec::new();
    for (mut ps, mut pr) in per_row {
        points.append(&mut ps);
        provenance.append(&mut pr);
    }
    finish_back_projection(points, provenance)
}

fn lift_pixel(depth: &DepthMap, intr: &CameraIntrinsics, u: u32, v: u32) -> Option<Point3> {
    if depth.is_valid(u, v) {
        Some(intr.lift(u as f64, v as f64, depth.depth_at(u, v) as f64))
    } else {
        None
    }
}

fn finish_back_projection(points: Vec<Point3>, provenance: Vec<(u32, u32)>) -> Result<PointCloud> {
    if points.is_empty() {
        return Err(Error::EmptyCloud(
            "no valid pixels at the strided locations".into(),
        ));
    }
    let mut cloud = PointCloud::new(points)?;
    cloud.provenance = Some(provenance);
    Ok(cloud)
}

/// Attaches per-point semantic classes from the source pixels recorded during
/// back-projection. With `lambda_flag = false` semantics are absent from the
/// output (the purely geometric case).
pub fn attach_semantics(
    cloud: &PointCloud,
    sem: &SemanticMap,
    lambda_flag: bool,
) -> Result<PointCloud> {
    let mut out = cloud.clone();
    if !lambda_flag {
        out.classes = None;
        out.class_table = None;
        return Ok(out);
    }
    let provenance = cloud.provenance.as_ref().ok_or(Error::MissingProvenance)?;
    let mut classes = Vec::with_capacity(provenance.len());
    for &(u, v) in provenance {
        if u >= sem.width || v >= sem.height {
            return Err(Error::DimensionMismatch(format!(
                "source pixel ({u}, {v}) outside {}x{} semantic map",
                sem.width, sem.height
            )));
        }
        classes.push(sem.class_at(u, v));
    }
    out.classes = Some(classes);
    out.class_table = Some(sem.table.clone());
    Ok(out)
}

/// Uniformly samples `target_n` points without replacement using a seeded
/// permutation. Clouds already at or below the target are returned unchanged.
/// Selected points keep their original relative order, classes and provenance.
pub fn random_downsample(cloud: &PointCloud, target_n: usize, seed: u64) -> Result<PointCloud> {
    if target_n == 0 {
        return Err(Error::InvalidConfig("target_n must be >= 1".into()));
    }
    if cloud.len() <= target_n {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..cloud.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(target_n);
    indices.sort_unstable();

    let points = indices.iter().map(|&i| cloud.points[i]).collect();
    let classes = cloud
        .classes
        .as_ref()
        .map(|c| indices.iter().map(|&i| c[i]).collect());
    let provenance = cloud
        .provenance
        .as_ref()
        .map(|p| indices.iter().map(|&i| p[i]).collect());
    Ok(PointCloud {
        points,
        classes,
        class_table: cloud.class_table.clone(),
        frame_index: cloud.frame_index,
        timestamp: cloud.timestamp,
        provenance,
    })
}

/// Serializes a cloud as CSV, one `x,y,z[,class]` line per point.
pub fn to_csv(cloud: &PointCloud) -> String {
    let mut out = String::new();
    match &cloud.classes {
        Some(classes) => {
            out.push_str("x,y,z,class\n");
            for (p, c) in cloud.points.iter().zip(classes) {
                out.push_str(&format!("{},{},{},{}\n", p.x, p.y, p.z, c));
            }
        }
        None => {
            out.push_str("x,y,z\n");
            for p in &cloud.points {
                out.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
            }
        }
    }
    out
}

/// Parses the CSV emitted by [`to_csv`]. A `class` column, when present,
/// attaches semantics with an unnamed class table sized by the max id.
pub fn from_csv(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let has_class = match header.trim() {
        "x,y,z" => false,
        "x,y,z,class" => true,
        other => {
            return Err(Error::Parse(format!(
                "unexpected point-cloud CSV header '{other}'"
            )))
        }
    };
    let mut points = Vec::new();
    let mut classes = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expect = if has_class { 4 } else { 3 };
        if fields.len() != expect {
            return Err(Error::Parse(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                expect,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
        };
        points.push(Point3::new(
            parse(fields[0])?,
            parse(fields[1])?,
            parse(fields[2])?,
        ));
        if has_class {
            classes.push(
                fields[3]
                    .trim()
                    .parse::<u16>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?,
            );
        }
    }
    let cloud = PointCloud::new(points)?;
    if has_class {
        let n_classes = classes.iter().copied().max().unwrap_or(0) as usize + 1;
        cloud.with_classes(classes, ClassTable::unnamed(n_classes))
    } else {
        Ok(cloud)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn back_project_identity_intrinsics() {
        let depth = DepthMap::new(1, 1, vec![1.0]).unwrap();
        let cloud = back_project(&depth, &identity_intrinsics(), 1).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points[0], Point3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn back_project_matches_hand_computed_pixel() {
        // fx=fy=2, cx=cy=1, pixel (3,5), depth 4.
        let mut data = vec![0.0f32; 36];
        data[5 * 6 + 3] = 4.0;
        let depth = DepthMap::new(6, 6, data).unwrap();
        let intr = CameraIntrinsics::new(2.0, 2.0, 1.0, 1.0).unwrap();
        let cloud = back_project(&depth, &intr, 1).unwrap();
        assert_eq!(cloud.len(), 1);
        let p = cloud.points[0];
        assert_eq!((p.x, p.y, p.z), (4.0, 8.0, 4.0));
        // Cross-check: project the point back through K.
        let (u, v) = intr.project(&p);
        assert!((u - 3.0).abs() < 1e-12 && (v - 5.0).abs() < 1e-12);
    }

    #[test]
    fn back_project_skips_invalid_pixels() {
        let mut depth = DepthMap::new(2, 1, vec![1.0, 2.0]).unwrap();
        depth.invalidate(1, 0);
        let cloud = back_project(&depth, &identity_intrinsics(), 1).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.provenance.as_ref().unwrap()[0], (0, 0));
    }

    #[test]
    fn back_project_rejects_all_invalid() {
        let depth = DepthMap::new(2, 2, vec![0.0, -1.0, f32::NAN, 0.0]).unwrap();
        assert!(matches!(
            back_project(&depth, &identity_intrinsics(), 1),
            Err(Error::EmptyCloud(_))
        ));
    }

    #[test]
    fn back_project_rejects_singular_intrinsics() {
        assert!(matches!(
            CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0),
            Err(Error::SingularIntrinsics { .. })
        ));
    }

    #[test]
    fn back_project_stride_visits_row_major() {
        let depth = DepthMap::new(4, 4, vec![1.0; 16]).unwrap();
        let cloud = back_project(&depth, &identity_intrinsics(), 2).unwrap();
        let prov = cloud.provenance.as_ref().unwrap();
        assert_eq!(prov, &[(0, 0), (2, 0), (0, 2), (2, 2)]);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn par_back_project_matches_sequential() {
        let depth = DepthMap::new(37, 23, (0..37 * 23).map(|i| (i % 7) as f32).collect()).unwrap();
        let intr = CameraIntrinsics::new(3.0, 2.0, 18.0, 11.0).unwrap();
        for stride in [1, 2, 3] {
            let a = back_project(&depth, &intr, stride).unwrap();
            let b = par_back_project(&depth, &intr, stride).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn attach_semantics_lambda_false_strips_classes() {
        let depth = DepthMap::new(2, 2, vec![1.0; 4]).unwrap();
        let cloud = back_project(&depth, &identity_intrinsics(), 1).unwrap();
        let sem = SemanticMap::new(2, 2, vec![3, 3, 3, 3], ClassTable::unnamed(4)).unwrap();
        let out = attach_semantics(&cloud, &sem, false).unwrap();
        assert!(out.classes.is_none());
    }

    #[test]
    fn attach_semantics_uniform_map() {
        let depth = DepthMap::new(2, 2, vec![1.0; 4]).unwrap();
        let cloud = back_project(&depth, &identity_intrinsics(), 1).unwrap();
        let sem = SemanticMap::new(2, 2, vec![3; 4], ClassTable::unnamed(4)).unwrap();
        let out = attach_semantics(&cloud, &sem, true).unwrap();
        assert_eq!(out.classes.as_ref().unwrap(), &vec![3, 3, 3, 3]);
    }

    #[test]
    fn attach_semantics_checkerboard_matches_pixel_parity() {
        let w = 4u32;
        let h = 3u32;
        let depth = DepthMap::new(w, h, vec![2.0; 12]).unwrap();
        let cloud = back_project(&depth, &identity_intrinsics(), 1).unwrap();
        let grid: Vec<u16> = (0..h)
            .flat_map(|v| (0..w).map(move |u| ((u + v) % 2) as u16))
            .collect();
        let sem = SemanticMap::new(w, h, grid, ClassTable::unnamed(2)).unwrap();
        let out = attach_semantics(&cloud, &sem, true).unwrap();
        let classes = out.classes.as_ref().unwrap();
        for (i, &(u, v)) in out.provenance.as_ref().unwrap().iter().enumerate() {
            assert_eq!(classes[i] as u32, (u + v) % 2);
        }
    }

    #[test]
    fn attach_semantics_dimension_mismatch() {
        let depth = DepthMap::new(3, 3, vec![1.0; 9]).unwrap();
        let cloud = back_project(&depth, &identity_intrinsics(), 1).unwrap();
        let sem = SemanticMap::new(2, 2, vec![0; 4], ClassTable::unnamed(1)).unwrap();
        assert!(matches!(
            attach_semantics(&cloud, &sem, true),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn downsample_noop_when_at_target() {
        let cloud = PointCloud::new((0..100).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect())
            .unwrap();
        let out = random_downsample(&cloud, 100, 7).unwrap();
        assert_eq!(out, cloud);
    }

    #[test]
    fn downsample_subset_and_deterministic() {
        let cloud = PointCloud::new((0..100).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect())
            .unwrap();
        let a = random_downsample(&cloud, 40, 42).unwrap();
        let b = random_downsample(&cloud, 40, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        for p in &a.points {
            assert!(cloud.points.contains(p));
        }
        let c = random_downsample(&cloud, 40, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn downsample_carries_classes() {
        let cloud = PointCloud::new((0..50).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect())
            .unwrap()
            .with_classes((0..50u16).map(|i| i % 3).collect(), ClassTable::unnamed(3))
            .unwrap();
        let out = random_downsample(&cloud, 20, 1).unwrap();
        let classes = out.classes.as_ref().unwrap();
        for (p, &c) in out.points.iter().zip(classes) {
            assert_eq!(c, (p.x as u64 % 3) as u16);
        }
    }

    #[test]
    fn csv_roundtrip_with_classes() {
        let cloud = PointCloud::new(vec![
            Point3::new(1.5, -2.25, 3.125),
            Point3::new(0.1, 0.2, 0.3),
        ])
        .unwrap()
        .with_classes(vec![2, 0], ClassTable::unnamed(3))
        .unwrap();
        let text = to_csv(&cloud);
        let back = from_csv(&text).unwrap();
        assert_eq!(back.points, cloud.points);
        assert_eq!(back.classes, cloud.classes);
    }
}
