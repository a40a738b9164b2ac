//! Geometry-recovery stage: motion masks, back-projection, grid pruning and
//! model initialisation from a calibrated bundle.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bundle::CalibratedBundle;
use crate::error::InitError;
use crate::gaussian::{GaussianModel4D, InitMode};
use crate::memory;
use crate::motion_mask::{compute_masks, MaskParams, MaskSet};
use crate::pointcloud::{
    compute_voxel_size, densify_cloud, grid_prune, initialize_model, ModelInitParams, PruneParams, SeedPoint,
    DEFAULT_INITIAL_OPACITY, DEFAULT_MIN_SUPPORT,
};

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub mode: InitMode,
    /// Static voxel factor.
    pub lambda_static: f64,
    /// Dynamic voxel factor (Lite prunes dynamic seeds per frame with it).
    pub lambda_dynamic: f64,
    pub masks: MaskParams,
    /// Back-project every `stride`-th pixel in each axis.
    pub stride: u32,
    pub min_support: usize,
    /// Grow static voxels beyond the median depth.
    pub adaptive: bool,
    pub initial_opacity: f64,
    /// Give every Gaussian this temporal scale instead of the motion-aware one.
    pub uniform_temporal_scale: Option<f64>,
}

impl InitConfig {
    pub fn lite() -> Self {
        Self {
            mode: InitMode::Lite,
            lambda_static: 4.0,
            lambda_dynamic: 4.0,
            masks: MaskParams::default(),
            stride: 1,
            min_support: DEFAULT_MIN_SUPPORT,
            adaptive: true,
            initial_opacity: DEFAULT_INITIAL_OPACITY,
            uniform_temporal_scale: None,
        }
    }

    pub fn full() -> Self {
        Self { mode: InitMode::Full, lambda_static: 1.0, ..Self::lite() }
    }

    pub fn for_mode(mode: InitMode) -> Self {
        match mode {
            InitMode::Lite => Self::lite(),
            InitMode::Full => Self::full(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InitTimings {
    pub motion_masks_s: f64,
    pub back_projection_s: f64,
    pub grid_pruning_s: f64,
    pub model_init_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub mode: InitMode,
    pub frames: usize,
    pub motion_threshold: f64,
    pub raw_points: usize,
    pub raw_static: usize,
    pub raw_dynamic: usize,
    pub static_seeds: usize,
    pub dynamic_seeds: usize,
    /// `1 - static_seeds / raw_static`.
    pub static_reduction: f64,
    pub dynamic_reduction: f64,
    pub total_reduction: f64,
    pub static_voxel: f64,
    pub dynamic_voxel: f64,
    pub gaussians: usize,
    pub timings: InitTimings,
    pub peak_rss_mb: f64,
}

/// Everything the init stage produces.
#[derive(Debug, Clone)]
pub struct InitOutput {
    pub model: GaussianModel4D,
    pub report: InitReport,
    pub masks: MaskSet,
    pub static_seeds: Vec<SeedPoint>,
    pub dynamic_seeds: Vec<SeedPoint>,
}

fn reduction(kept: usize, raw: usize) -> f64 {
    if raw == 0 {
        0.0
    } else {
        1.0 - kept as f64 / raw as f64
    }
}

/// Masks, dense cloud, pruning and one Gaussian per seed.
pub fn initialize(bundle: &CalibratedBundle, config: &InitConfig) -> Result<InitOutput, InitError> {
    if bundle.is_empty() {
        return Err(InitError::NoDepth);
    }
    let mut timings = InitTimings::default();

    let start = Instant::now();
    let masks = compute_masks(&bundle.motion_maps(), bundle.width(), bundle.height(), &config.masks)?;
    timings.motion_masks_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let cloud = densify_cloud(bundle, &masks.masks, config.stride)?;
    let (raw_dynamic, raw_static): (Vec<SeedPoint>, Vec<SeedPoint>) = cloud.into_iter().partition(|p| p.is_dynamic);
    timings.back_projection_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let focal = bundle.intrinsics.mean_focal();
    let depths = bundle.mean_depths();
    let static_voxel = compute_voxel_size(&depths, focal, config.lambda_static)?;
    let dynamic_voxel = compute_voxel_size(&depths, focal, config.lambda_dynamic)?;
    let static_seeds = grid_prune(
        &raw_static,
        &PruneParams {
            min_support: config.min_support,
            adaptive: config.adaptive,
            ..PruneParams::new(static_voxel)
        },
    );
    let dynamic_seeds = match config.mode {
        InitMode::Lite => grid_prune(
            &raw_dynamic,
            &PruneParams { min_support: config.min_support, per_frame: true, ..PruneParams::new(dynamic_voxel) },
        ),
        InitMode::Full => raw_dynamic.clone(),
    };
    timings.grid_pruning_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let params = ModelInitParams {
        mode: config.mode,
        fps: bundle.fps,
        video_length: bundle.video_length(),
        static_voxel,
        dynamic_voxel,
        initial_opacity: config.initial_opacity,
        uniform_temporal_scale: config.uniform_temporal_scale,
    };
    let model = initialize_model(&static_seeds, &dynamic_seeds, &params)?;
    timings.model_init_s = start.elapsed().as_secs_f64();

    let raw_points = raw_static.len() + raw_dynamic.len();
    let report = InitReport {
        mode: config.mode,
        frames: bundle.len(),
        motion_threshold: masks.threshold,
        raw_points,
        raw_static: raw_static.len(),
        raw_dynamic: raw_dynamic.len(),
        static_seeds: static_seeds.len(),
        dynamic_seeds: dynamic_seeds.len(),
        static_reduction: reduction(static_seeds.len(), raw_static.len()),
        dynamic_reduction: reduction(dynamic_seeds.len(), raw_dynamic.len()),
        total_reduction: reduction(model.len(), raw_points),
        static_voxel,
        dynamic_voxel,
        gaussians: model.len(),
        timings,
        peak_rss_mb: memory::peak_rss_mb(),
    };
    Ok(InitOutput { model, report, masks, static_seeds, dynamic_seeds })
}
