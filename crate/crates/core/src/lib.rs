//! Motion-aware isotropic 4D Gaussian reconstruction: from a calibrated video
//! bundle to a compact space-time Gaussian scene that renders at any pose and
//! timestamp.

pub mod bundle;
pub mod error;
pub mod gaussian;
pub mod geometry;
pub mod image;
pub mod motion_mask;
pub mod pointcloud;
pub mod raster;
pub mod init;
pub mod io;
pub mod memory;
pub mod metrics;
pub mod synth;
pub mod trainer;
