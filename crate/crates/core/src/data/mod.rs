//! Sensor-file parsing, synthetic scene generation, and dataset assembly.

pub mod calib;
pub mod kitti;
pub mod oxts;
pub mod split;
pub mod store;
pub mod synthetic;
pub mod velodyne;

pub use calib::{parse_calib, CalibRecord};
pub use kitti::{load_kitti_sequence, FrameRecord};
pub use oxts::{parse_oxts, OxtsRecord};
pub use split::{split_dataset, DatasetSplit, SplitKind};
pub use store::{load_sequence, save_sequence, StoredSequence};
pub use synthetic::{generate_synthetic_sequence, ClassLayout, SyntheticSceneSpec};
pub use velodyne::{parse_velodyne_bin, serialize_velodyne_bin};
