//! In-memory calibrated video bundle: frames with RGB, depth, pose, motion
//! probabilities and timestamps sharing one set of intrinsics.

use serde::{Deserialize, Serialize};

use crate::geometry::{DepthMap, Intrinsics, PoseSE3};
use crate::motion_mask::MotionProbMap;

/// Direction of the 4x4 matrices stored in a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoseConvention {
    #[serde(rename = "c2w")]
    CameraToWorld,
    #[serde(rename = "w2c")]
    WorldToCamera,
}

/// How motion maps encode their values on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MotionEncoding {
    #[default]
    Probability,
    Logit,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub rgb: image::RgbImage,
    /// `None` when the frame has no usable depth; such frames are skipped
    /// during back-projection.
    pub depth: Option<DepthMap>,
    /// Camera-to-world.
    pub pose: PoseSE3,
    pub motion: MotionProbMap,
    pub timestamp: f64,
}

#[derive(Debug, Clone)]
pub struct CalibratedBundle {
    pub fps: f64,
    pub intrinsics: Intrinsics,
    pub frames: Vec<Frame>,
}

impl CalibratedBundle {
    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Clip duration in seconds: `n_frames / fps`, extended if explicit
    /// timestamps run past it.
    pub fn video_length(&self) -> f64 {
        let nominal = self.frames.len() as f64 / self.fps;
        let last = self.frames.last().map_or(0.0, |f| f.timestamp + 1.0 / self.fps);
        nominal.max(last)
    }

    pub fn motion_maps(&self) -> Vec<MotionProbMap> {
        self.frames.iter().map(|f| f.motion.clone()).collect()
    }

    /// Per-frame mean of valid depths; frames without depth are omitted.
    pub fn mean_depths(&self) -> Vec<f64> {
        self.frames.iter().filter_map(|f| f.depth.as_ref().and_then(DepthMap::mean_valid)).collect()
    }

    /// Expected low-resolution motion map shape for this image size.
    pub fn motion_shape(&self) -> (u32, u32) {
        motion_shape(self.width(), self.height())
    }
}

/// `(ceil(W / 8), ceil(H / 8))`.
pub fn motion_shape(width: u32, height: u32) -> (u32, u32) {
    (width.div_ceil(8), height.div_ceil(8))
}
