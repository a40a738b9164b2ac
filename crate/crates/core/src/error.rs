use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("depth must be finite and positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("pixel coordinate is not finite")]
    NonFinitePixel,
    #[error("expected {expected:?} (width, height) values, found {found}")]
    DimensionMismatch { expected: (u32, u32), found: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("motion probability map is empty")]
    EmptyMap,
    #[error("motion sequence is empty")]
    EmptySequence,
    #[error("upsampling target {target:?} is smaller than source {from:?}")]
    TargetTooSmall { from: (u32, u32), target: (u32, u32) },
    #[error("motion map {index} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { index: usize, expected: (u32, u32), found: (u32, u32) },
    #[error("histogram needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("motion map value {0} outside [0, 1]")]
    OutOfRange(f32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("no frames to size the voxel grid from")]
    NoDepth,
    #[error("invalid voxel sizing input: {0}")]
    InvalidVoxelInput(String),
    #[error("frame {frame}: {what} is {found:?}, expected {expected:?}")]
    FrameShape { frame: usize, what: &'static str, expected: (u32, u32), found: (u32, u32) },
    #[error("mask count {masks} does not match frame count {frames}")]
    MaskCount { masks: usize, frames: usize },
    #[error("no seeds to initialise the model from")]
    EmptySeeds,
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("temporal variance must be positive, got {0}")]
    DegenerateTemporalSupport(f64),
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("parameter arrays have inconsistent lengths")]
    LengthMismatch,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("model has no Gaussians")]
    EmptyModel,
    #[error("upstream gradient has {found} entries, expected {expected}")]
    GradientShape { expected: usize, found: usize },
    #[error("upstream gradient contains non-finite values")]
    NonFiniteGradient,
    #[error("render context does not match the model ({0})")]
    StaleContext(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("image sizes differ: {a:?} vs {b:?}")]
    SizeMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("image {found:?} is smaller than the {window}x{window} window")]
    TooSmall { found: (u32, u32), window: usize },
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: missing file")]
    Missing { path: PathBuf },
    #[error("{path}: malformed {format} at byte {offset}: {message}")]
    Malformed { path: PathBuf, format: &'static str, offset: u64, message: String },
    #[error("{path}: checkpoint version {found} is not supported (this build reads version {expected})")]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{path}: json: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: image: {source}")]
    Image { path: PathBuf, source: image::ImageError },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("degenerate camera path: {0}")]
    DegenerateCamera(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("dynamic object {index} is inside the frustum for only {fraction:.0}% of frames (need >= 80%)")]
    OffscreenTrajectory { index: usize, fraction: f64 },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss {loss} at iteration {iteration} (frame {frame})")]
    NonFiniteLoss { iteration: usize, frame: usize, loss: f64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Image(#[from] ImageError),
}
