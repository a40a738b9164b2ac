//! JSON reports written by `init`, `train` and `eval`, shaped after a
//! per-stage runtime and memory breakdown.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use i4d_core::gaussian::{GaussianModel4D, InitMode};
use i4d_core::init::InitReport;
use i4d_core::trainer::{TrainConfig, TrainSummary};

pub const REPORT_VERSION: u32 = 1;

/// Wall time and, where measured, peak resident memory of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub runtime_s: f64,
    pub memory_mb: Option<f64>,
}

impl Stage {
    fn time(runtime_s: f64) -> Self {
        Self { runtime_s, memory_mb: None }
    }
}

/// Stages before optimisation. Depth estimation, camera tracking and video
/// depth optimisation happen upstream and are `null` here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRecovery {
    pub depth_estimation: Option<Stage>,
    pub camera_tracking: Option<Stage>,
    pub video_depth_optimization: Option<Stage>,
    pub motion_masks: Stage,
    pub back_projection: Stage,
    pub grid_pruning: Stage,
    pub model_init: Stage,
    pub total_s: f64,
    pub peak_memory_mb: f64,
}

impl GeometryRecovery {
    pub fn from_init(r: &InitReport) -> Self {
        let t = r.timings;
        Self {
            depth_estimation: None,
            camera_tracking: None,
            video_depth_optimization: None,
            motion_masks: Stage::time(t.motion_masks_s),
            back_projection: Stage::time(t.back_projection_s),
            grid_pruning: Stage::time(t.grid_pruning_s),
            model_init: Stage::time(t.model_init_s),
            total_s: t.motion_masks_s + t.back_projection_s + t.grid_pruning_s + t.model_init_s,
            peak_memory_mb: r.peak_rss_mb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimization {
    pub iterations: usize,
    pub forward_splatting: Stage,
    pub loss: Stage,
    pub backward: Stage,
    pub optimizer_step: Stage,
    pub total_s: f64,
    pub peak_memory_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    /// Geometry recovery (when known) plus optimisation.
    pub training_time_s: f64,
    pub peak_memory_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub gaussians: usize,
    pub dynamic: usize,
    pub mode: InitMode,
}

impl ModelInfo {
    pub fn of(model: &GaussianModel4D) -> Self {
        Self { gaussians: model.len(), dynamic: model.dynamic_count(), mode: model.mode }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub version: u32,
    pub geometry_recovery: Option<GeometryRecovery>,
    pub optimization: Optimization,
    pub total: Totals,
    pub model: ModelInfo,
    pub final_loss: Option<f64>,
    pub final_loss_avg: Option<f64>,
    pub final_psnr_train: Option<f64>,
    pub config: TrainConfig,
    pub init: Option<InitReport>,
    pub loss_history: Vec<f64>,
    pub psnr_history: Vec<f64>,
}

impl TrainReport {
    pub fn new(summary: &TrainSummary, model: &GaussianModel4D, config: &TrainConfig, init: Option<InitReport>) -> Self {
        let geometry = init.as_ref().map(GeometryRecovery::from_init);
        let peak_backward = summary.peak_rss_mb;
        let optimization = Optimization {
            iterations: summary.iterations,
            forward_splatting: Stage::time(summary.forward_splatting_s),
            loss: Stage::time(summary.loss_s),
            backward: Stage { runtime_s: summary.backward_s, memory_mb: Some(peak_backward) },
            optimizer_step: Stage::time(summary.optimizer_step_s),
            total_s: summary.total_s,
            peak_memory_mb: summary.peak_rss_mb,
        };
        let geometry_s = geometry.as_ref().map_or(0.0, |g| g.total_s);
        let peak = geometry.as_ref().map_or(0.0, |g| g.peak_memory_mb).max(summary.peak_rss_mb);
        Self {
            version: REPORT_VERSION,
            geometry_recovery: geometry,
            optimization,
            total: Totals { training_time_s: geometry_s + summary.total_s, peak_memory_mb: peak },
            model: ModelInfo::of(model),
            final_loss: summary.final_loss,
            final_loss_avg: summary.final_loss_avg,
            final_psnr_train: summary.psnr_history.last().copied(),
            config: config.clone(),
            init,
            loss_history: summary.loss_history.clone(),
            psnr_history: summary.psnr_history.clone(),
        }
    }
}

/// Sidecar path of the init report for a seed checkpoint.
pub fn init_report_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".init.json");
    PathBuf::from(s)
}

/// Default report path for a trained checkpoint.
pub fn train_report_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".report.json");
    PathBuf::from(s)
}
