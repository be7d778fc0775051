//! Canopy density estimation from globally registered lidar ray clouds.
//!
//! The processing chain runs ground extraction, row segmentation,
//! voxelisation and per-voxel density estimation, then reduces the density
//! fields to images, along-row series and panel summaries. [`leafsim`]
//! holds the Monte Carlo harness used to validate the estimator and
//! [`synth`] generates synthetic vineyards with known leaf area.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod density;
pub mod error;
pub mod geom;
pub mod ground;
pub mod hull;
pub mod leafsim;
pub mod parallel;
pub mod pipeline;
pub mod raycloud;
pub mod report;
pub mod rowseg;
pub mod synth;
pub mod voxelgrid;

pub use config::PipelineConfig;
pub use density::{DensityField, Estimator, GammaPosterior};
pub use error::{Error, Result};
pub use geom::Vec3;
pub use ground::GroundMesh;
pub use raycloud::{RawMeasurement, Ray, RayCloud};
pub use rowseg::{RowSegment, Trajectory};
pub use voxelgrid::{RayTally, StatsGrid, VoxelGrid, VoxelStats, VoxelSums};
