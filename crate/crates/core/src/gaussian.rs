//! Isotropic 4D Gaussian primitives: storage, temporal conditioning and
//! temporal opacity.
//!
//! Each primitive has a space-time mean, one spatial scale, one temporal
//! scale, an opacity and a plain RGB colour. Its covariance is
//! `diag(s², s², s², s_t²)` with identity orientation, so conditioning on a
//! timestamp leaves the spatial mean and covariance unchanged and time
//! enters only through the opacity falloff.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Stored scalars per primitive: mean (4) + scales (2) + opacity (1) + rgb (3).
pub const PARAMS_PER_GAUSSIAN: usize = 10;

/// Zeroth-order spherical-harmonic basis constant.
pub const SH_C0: f64 = 0.28209479177387814;

/// Default temporal culling threshold (one display quantisation step).
pub const DEFAULT_CULL_EPSILON: f64 = 1.0 / 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Both static and dynamic seeds grid-pruned.
    #[default]
    Lite,
    /// Fine static grid, dynamic seeds kept at full density.
    Full,
}

impl InitMode {
    pub fn code(self) -> u8 {
        match self {
            InitMode::Lite => 0,
            InitMode::Full => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(InitMode::Lite),
            1 => Some(InitMode::Full),
            _ => None,
        }
    }
}

impl std::str::FromStr for InitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lite" => Ok(InitMode::Lite),
            "full" => Ok(InitMode::Full),
            other => Err(format!("unknown mode '{other}' (expected lite or full)")),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Activated view of one primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian4D {
    pub mean: [f64; 4],
    pub scale: f64,
    pub scale_t: f64,
    pub opacity: f64,
    pub rgb: [f64; 3],
    pub is_dynamic: bool,
}

impl Gaussian4D {
    /// Opacity at time `t`.
    #[inline]
    pub fn opacity_at(&self, t: f64) -> f64 {
        temporal_opacity(self.opacity, self.mean[3], self.scale_t, t)
    }

    /// Conditioning fast path: with zero space-time cross covariance the
    /// conditioned mean and covariance are the spatial ones.
    pub fn condition(&self, t: f64) -> ConditionedGaussian3D {
        ConditionedGaussian3D {
            mean: Vector3::new(self.mean[0], self.mean[1], self.mean[2]),
            cov: Matrix3::from_diagonal_element(self.scale * self.scale),
            opacity: self.opacity_at(t),
            rgb: self.rgb,
        }
    }

    pub fn covariance(&self) -> Matrix4<f64> {
        let s2 = self.scale * self.scale;
        Matrix4::from_diagonal(&Vector4::new(s2, s2, s2, self.scale_t * self.scale_t))
    }

    pub fn to_full(&self) -> FullGaussian4D {
        FullGaussian4D {
            mean: Vector4::from(self.mean),
            cov: self.covariance(),
            opacity: self.opacity,
            rgb: self.rgb,
        }
    }
}

/// `o * exp(-(t - mu_t)² / (2 s_t²))`, peaking at `o` when `t = mu_t`.
#[inline]
pub fn temporal_opacity(opacity: f64, mean_t: f64, scale_t: f64, t: f64) -> f64 {
    let dt = (t - mean_t) / scale_t;
    opacity * (-0.5 * dt * dt).exp()
}

/// A 4D Gaussian with an arbitrary SPD covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullGaussian4D {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
    pub opacity: f64,
    pub rgb: [f64; 3],
}

/// A primitive sliced at one timestamp, ready for projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionedGaussian3D {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
    pub opacity: f64,
    pub rgb: [f64; 3],
}

/// Conditions a general 4D Gaussian on time `t` (Schur complement).
pub fn condition_at_time(g: &FullGaussian4D, t: f64) -> Result<ConditionedGaussian3D, ModelError> {
    let var_t = g.cov[(3, 3)];
    if !(var_t > 0.0) {
        return Err(ModelError::DegenerateTemporalSupport(var_t));
    }
    let dt = t - g.mean[3];
    let cross: Vector3<f64> = g.cov.fixed_view::<3, 1>(0, 3).into_owned();
    let spatial: Matrix3<f64> = g.cov.fixed_view::<3, 3>(0, 0).into_owned();
    let mean = g.mean.xyz() + cross * (dt / var_t);
    let cov = spatial - cross * cross.transpose() / var_t;
    let opacity = g.opacity * (-0.5 * dt * dt / var_t).exp();
    Ok(ConditionedGaussian3D { mean, cov, opacity, rgb: g.rgb })
}

/// `clamp(0.5 + C0 * sh0, 0, 1)`.
pub fn rgb_from_sh0(sh0: [f64; 3]) -> [f64; 3] {
    sh0.map(|c| (0.5 + SH_C0 * c).clamp(0.0, 1.0))
}

pub fn sh0_from_rgb(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|c| (c - 0.5) / SH_C0)
}

/// Structure-of-arrays model. Scales are stored as logs and opacity as a
/// logit; colours are stored directly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianModel4D {
    pub means: Vec<[f64; 4]>,
    pub log_scales: Vec<f64>,
    pub log_scales_t: Vec<f64>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
    pub dynamic: Vec<bool>,
    pub video_length: f64,
    pub fps: f64,
    pub mode: InitMode,
}

impl GaussianModel4D {
    pub fn empty(video_length: f64, fps: f64, mode: InitMode) -> Self {
        Self { video_length, fps, mode, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn push(&mut self, g: &Gaussian4D) {
        self.means.push(g.mean);
        self.log_scales.push(g.scale.ln());
        self.log_scales_t.push(g.scale_t.ln());
        self.opacity_logits.push(logit(g.opacity));
        self.colors.push(g.rgb);
        self.dynamic.push(g.is_dynamic);
    }

    pub fn get(&self, i: usize) -> Gaussian4D {
        Gaussian4D {
            mean: self.means[i],
            scale: self.log_scales[i].exp(),
            scale_t: self.log_scales_t[i].exp(),
            opacity: sigmoid(self.opacity_logits[i]),
            rgb: self.colors[i],
            is_dynamic: self.dynamic[i],
        }
    }

    pub fn check_consistent(&self) -> Result<(), ModelError> {
        let n = self.means.len();
        let same = [
            self.log_scales.len(),
            self.log_scales_t.len(),
            self.opacity_logits.len(),
            self.colors.len(),
            self.dynamic.len(),
        ]
        .iter()
        .all(|&l| l == n);
        if same {
            Ok(())
        } else {
            Err(ModelError::LengthMismatch)
        }
    }

    pub fn dynamic_count(&self) -> usize {
        self.dynamic.iter().filter(|d| **d).count()
    }

    /// Opacity of primitive `i` at time `t`.
    #[inline]
    pub fn opacity_at(&self, i: usize, t: f64) -> f64 {
        temporal_opacity(
            sigmoid(self.opacity_logits[i]),
            self.means[i][3],
            self.log_scales_t[i].exp(),
            t,
        )
    }

    /// Reorders every array by `order` (`new[i] = old[order[i]]`).
    pub fn permuted(&self, order: &[usize]) -> Self {
        fn pick<T: Copy>(v: &[T], order: &[usize]) -> Vec<T> {
            order.iter().map(|&i| v[i]).collect()
        }
        Self {
            means: pick(&self.means, order),
            log_scales: pick(&self.log_scales, order),
            log_scales_t: pick(&self.log_scales_t, order),
            opacity_logits: pick(&self.opacity_logits, order),
            colors: pick(&self.colors, order),
            dynamic: pick(&self.dynamic, order),
            ..self.clone()
        }
    }
}

/// Indices of primitives whose opacity at `t` is at least `epsilon`.
pub fn cull_by_time(model: &GaussianModel4D, t: f64, epsilon: f64) -> Vec<usize> {
    (0..model.len()).filter(|&i| model.opacity_at(i, t) >= epsilon).collect()
}
