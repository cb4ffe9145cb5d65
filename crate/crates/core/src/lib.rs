//! LiDAR odometry and mapping with degeneracy-aware weighted ICP.
//!
//! The pipeline projects each scan into a spherical range image, estimates
//! per-pixel surface normals, classifies points into ground / roof / wall /
//! edge / unknown, and registers the scan against a labeled voxel map with a
//! weighted multi-metric ICP. Per-point weights come from an eigenvalue
//! analysis of the translational Hessian block, so constraints along poorly
//! observable directions are down-weighted. A scan-context back-end detects
//! loop closures and a pose graph distributes the correction.

pub mod classify;
pub mod config;
pub mod dataset_io;
pub mod degeneracy;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod normals;
pub mod pipeline;
pub mod pose_graph;
pub mod range_image;
pub mod registration;
pub mod scan_context;
pub mod synth;
pub mod voxel_map;

pub use error::{Error, Result};
pub use geometry::{Point3, Pose, Twist};
