//! Steering-angle estimation from semantic 3D point clouds.
//!
//! The pipeline: depth/semantic maps (or LiDAR sweeps) become point clouds,
//! clouds become kNN graphs with semantic-aware edge pruning, a GCN or
//! PointNet++ encoder compresses each frame, an LSTM or liquid
//! time-constant cell tracks the sequence, and a dense readout regresses the
//! steering angle. A bicycle model supplies ground truth from inertial data
//! and reconstructs trajectories from predictions.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod neural;
pub mod pointcloud;
pub mod sparse;
pub mod spatial;
pub mod spdm;
pub mod tape;
pub mod training;
pub mod vehicle;

pub use error::{Error, Result};
