//! Ray-cast synthetic scenes with exact depth, poses and motion coverage,
//! standing in for SLAM outputs.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{motion_shape, CalibratedBundle, Frame};
use crate::error::SynthError;
use crate::geometry::{project, DepthMap, Intrinsics, PoseSE3};
use crate::image::Image;
use crate::motion_mask::{MotionMask, MotionProbMap};

/// Fraction of frames a dynamic object's centre must project into the image.
pub const MIN_FRUSTUM_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Solid { color: [f64; 3] },
    /// Product of sines blending `base` and `accent`; `frequency` in cycles per unit.
    Smooth { base: [f64; 3], accent: [f64; 3], frequency: f64 },
    Checker { base: [f64; 3], accent: [f64; 3], frequency: f64 },
}

impl Texture {
    fn sample(&self, u: f64, v: f64, w: f64) -> [f64; 3] {
        let mix = |a: [f64; 3], b: [f64; 3], s: f64| [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * s);
        match *self {
            Texture::Solid { color } => color,
            Texture::Smooth { base, accent, frequency } => {
                let tau = std::f64::consts::TAU * frequency;
                let s = 0.5 + 0.5 * (tau * u).sin() * (tau * v).cos() * (0.7 + 0.3 * (tau * w).cos());
                mix(base, accent, s)
            }
            Texture::Checker { base, accent, frequency } => {
                let cell = |x: f64| (x * frequency).floor() as i64;
                if (cell(u) + cell(v) + cell(w)).rem_euclid(2) == 0 {
                    base
                } else {
                    accent
                }
            }
        }
    }
}

/// A rectangle (or infinite plane when `half_extent` is `None`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    /// In-plane direction of the texture's first axis.
    pub tangent: [f64; 3],
    #[serde(default)]
    pub half_extent: Option<[f64; 2]>,
    pub texture: Texture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub center: [f64; 3],
    pub radius: f64,
    pub texture: Texture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    /// Constant velocity from `start` (t = 0) to `end` (t = duration).
    Linear { start: [f64; 3], end: [f64; 3] },
    /// Horizontal circle (world `y` up) at `angular_speed` rad/s.
    Circle { center: [f64; 3], radius: f64, start_angle: f64, angular_speed: f64 },
}

impl Trajectory {
    pub fn position(&self, t: f64, duration: f64) -> Vector3<f64> {
        match *self {
            Trajectory::Linear { start, end } => {
                let s = if duration > 0.0 { t / duration } else { 0.0 };
                Vector3::from(start) + (Vector3::from(end) - Vector3::from(start)) * s
            }
            Trajectory::Circle { center, radius, start_angle, angular_speed } => {
                let a = start_angle + angular_speed * t;
                Vector3::from(center) + Vector3::new(radius * a.cos(), 0.0, radius * a.sin())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicSphere {
    pub radius: f64,
    pub texture: Texture,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CameraPath {
    /// Eye moves linearly while looking at `target`.
    Linear { start: [f64; 3], end: [f64; 3], target: [f64; 3] },
    /// Eye on a horizontal arc around `center` at `height`, looking at `target`.
    Orbit { center: [f64; 3], radius: f64, height: f64, start_angle: f64, end_angle: f64, target: [f64; 3] },
}

impl CameraPath {
    /// Camera-to-world pose at normalised time `s` in `[0, 1]`.
    pub fn pose(&self, s: f64) -> Result<PoseSE3, SynthError> {
        let (eye, target) = match *self {
            CameraPath::Linear { start, end, target } => {
                (Vector3::from(start) + (Vector3::from(end) - Vector3::from(start)) * s, Vector3::from(target))
            }
            CameraPath::Orbit { center, radius, height, start_angle, end_angle, target } => {
                if !(radius > 0.0) {
                    return Err(SynthError::DegenerateCamera(format!("orbit radius {radius} must be positive")));
                }
                let a = start_angle + (end_angle - start_angle) * s;
                let c = Vector3::from(center);
                (Vector3::new(c.x + radius * a.cos(), c.y + height, c.z + radius * a.sin()), Vector3::from(target))
            }
        };
        PoseSE3::look_at(eye, target, Vector3::y())
            .map_err(|e| SynthError::DegenerateCamera(format!("at s = {s:.3}: {e}")))
    }
}

fn default_supersample() -> u32 {
    2
}

fn default_peak() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub n_frames: usize,
    pub fov_y_deg: f64,
    pub camera: CameraPath,
    #[serde(default)]
    pub planes: Vec<PlaneSpec>,
    #[serde(default)]
    pub spheres: Vec<SphereSpec>,
    #[serde(default)]
    pub dynamic: Vec<DynamicSphere>,
    #[serde(default)]
    pub background: [f64; 3],
    /// Relative standard deviation of multiplicative depth noise.
    #[serde(default)]
    pub depth_noise: f64,
    /// Standard deviation of additive motion-probability noise.
    #[serde(default)]
    pub motion_noise: f64,
    /// Motion probability of fully static cells.
    #[serde(default)]
    pub motion_floor: f64,
    /// Motion probability of fully dynamic cells.
    #[serde(default = "default_peak")]
    pub motion_peak: f64,
    /// RGB samples per pixel along each axis (box-filtered).
    #[serde(default = "default_supersample")]
    pub supersample: u32,
}

impl SyntheticSceneSpec {
    pub fn duration(&self) -> f64 {
        self.n_frames as f64 / self.fps
    }

    pub fn intrinsics(&self) -> Result<Intrinsics, SynthError> {
        Intrinsics::from_fov_y(self.fov_y_deg, self.width, self.height)
            .map_err(|e| SynthError::InvalidScene(format!("intrinsics: {e}")))
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScene(m));
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive".into());
        }
        if self.n_frames == 0 {
            return bad("n_frames must be at least 1".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        if !(self.fov_y_deg > 0.0 && self.fov_y_deg < 180.0) {
            return bad(format!("fov_y_deg {} outside (0, 180)", self.fov_y_deg));
        }
        if self.planes.is_empty() && self.spheres.is_empty() && self.dynamic.is_empty() {
            return bad("scene has no geometry".into());
        }
        for p in &self.planes {
            let n = Vector3::from(p.normal);
            let t = Vector3::from(p.tangent);
            if n.norm() < 1e-9 || t.cross(&n).norm() < 1e-9 {
                return bad("plane normal and tangent must be non-zero and not parallel".into());
            }
        }
        let radii = self.spheres.iter().map(|s| s.radius).chain(self.dynamic.iter().map(|d| d.radius));
        if radii.into_iter().any(|r| !(r > 0.0)) {
            return bad("sphere radii must be positive".into());
        }
        if !(self.depth_noise >= 0.0 && self.motion_noise >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if !((0.0..=1.0).contains(&self.motion_floor) && (0.0..=1.0).contains(&self.motion_peak)) {
            return bad("motion floor and peak must lie in [0, 1]".into());
        }
        if self.supersample == 0 {
            return bad("supersample must be at least 1".into());
        }
        Ok(())
    }

    /// Timestamp of frame `i`.
    pub fn frame_time(&self, i: usize) -> f64 {
        i as f64 / self.fps
    }

    /// Camera pose at clip time `t`.
    pub fn pose_at(&self, t: f64) -> Result<PoseSE3, SynthError> {
        let last = (self.n_frames.saturating_sub(1)) as f64 / self.fps;
        let s = if last > 0.0 { (t / last).clamp(0.0, 1.0) } else { 0.0 };
        self.camera.pose(s)
    }
}

/// Closest intersection along a ray.
#[derive(Debug, Clone, Copy)]
struct Hit {
    dist: f64,
    color: [f64; 3],
    dynamic: bool,
}

/// A validated scene ready for ray casting.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SyntheticSceneSpec,
    intrinsics: Intrinsics,
}

/// One ray-cast view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewRender {
    pub rgb: Image,
    /// Camera z-depth of the first hit (`None` for background).
    pub depth: Vec<Option<f64>>,
    /// Pixel centres whose first hit is a dynamic object.
    pub dynamic: Vec<bool>,
}

impl SyntheticScene {
    pub fn new(spec: SyntheticSceneSpec) -> Result<Self, SynthError> {
        spec.validate()?;
        let intrinsics = spec.intrinsics()?;
        let scene = Self { spec, intrinsics };
        scene.check_camera_path()?;
        scene.check_trajectories()?;
        Ok(scene)
    }

    pub fn intrinsics(&self) -> Intrinsics {
        self.intrinsics
    }

    fn check_camera_path(&self) -> Result<(), SynthError> {
        let poses: Vec<PoseSE3> =
            (0..self.spec.n_frames).map(|i| self.spec.pose_at(self.spec.frame_time(i))).collect::<Result<_, _>>()?;
        if let CameraPath::Linear { start, end, .. } = self.spec.camera {
            if self.spec.n_frames > 1 && (Vector3::from(start) - Vector3::from(end)).norm() == 0.0 {
                log::warn!("camera path is stationary");
            }
        }
        if poses.iter().any(|p| !p.center().iter().all(|v| v.is_finite())) {
            return Err(SynthError::DegenerateCamera("non-finite camera centre".into()));
        }
        Ok(())
    }

    fn check_trajectories(&self) -> Result<(), SynthError> {
        let n = self.spec.n_frames;
        for (index, d) in self.spec.dynamic.iter().enumerate() {
            let inside = (0..n)
                .filter(|&i| {
                    let t = self.spec.frame_time(i);
                    let pose = self.spec.pose_at(t).expect("validated path");
                    let c = d.trajectory.position(t, self.spec.duration());
                    project(&c, &pose, &self.intrinsics).is_some_and(|p| {
                        p.pixel.x >= 0.0
                            && p.pixel.y >= 0.0
                            && p.pixel.x < self.intrinsics.width as f64
                            && p.pixel.y < self.intrinsics.height as f64
                    })
                })
                .count();
            let fraction = inside as f64 / n as f64;
            if fraction < MIN_FRUSTUM_FRACTION {
                return Err(SynthError::OffscreenTrajectory { index, fraction: 100.0 * fraction });
            }
        }
        Ok(())
    }

    fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut consider = |dist: f64, color: [f64; 3], dynamic: bool| {
            if dist > 1e-9 && best.is_none_or(|b| dist < b.dist) {
                best = Some(Hit { dist, color, dynamic });
            }
        };
        for p in &self.spec.planes {
            let n = Vector3::from(p.normal).normalize();
            let denom = n.dot(dir);
            if denom.abs() < 1e-12 {
                continue;
            }
            let q = Vector3::from(p.point);
            let dist = n.dot(&(q - origin)) / denom;
            if dist <= 0.0 {
                continue;
            }
            let hit = origin + dir * dist;
            let tu = Vector3::from(p.tangent);
            let u_axis = (tu - n * n.dot(&tu)).normalize();
            let v_axis = n.cross(&u_axis);
            let local = hit - q;
            let (u, v) = (local.dot(&u_axis), local.dot(&v_axis));
            if let Some([hu, hv]) = p.half_extent {
                if u.abs() > hu || v.abs() > hv {
                    continue;
                }
            }
            consider(dist, p.texture.sample(u, v, 0.0), false);
        }
        let mut sphere = |center: Vector3<f64>, radius: f64, tex: &Texture, dynamic: bool| {
            let oc = origin - center;
            let a = dir.norm_squared();
            let b = oc.dot(dir);
            let c = oc.norm_squared() - radius * radius;
            let disc = b * b - a * c;
            if disc < 0.0 {
                return;
            }
            let sq = disc.sqrt();
            let d0 = (-b - sq) / a;
            let dist = if d0 > 1e-9 { d0 } else { (-b + sq) / a };
            if dist <= 1e-9 {
                return;
            }
            let local = origin + dir * dist - center;
            consider(dist, tex.sample(local.x, local.y, local.z), dynamic);
        };
        for s in &self.spec.spheres {
            sphere(Vector3::from(s.center), s.radius, &s.texture, false);
        }
        let duration = self.spec.duration();
        for d in &self.spec.dynamic {
            sphere(d.trajectory.position(t, duration), d.radius, &d.texture, true);
        }
        best
    }

    /// Ray-casts the scene at time `t` from `pose` with intrinsics `k`.
    pub fn render_view(&self, pose: &PoseSE3, k: &Intrinsics, t: f64) -> ViewRender {
        let (w, h) = (k.width, k.height);
        let ss = self.spec.supersample;
        let origin = pose.center();
        let rot = *pose.rotation();
        let bg = self.spec.background;
        let rows: Vec<(Vec<f64>, Vec<Option<f64>>, Vec<bool>)> = (0..h)
            .into_par_iter()
            .map(|row| {
                let mut rgb = Vec::with_capacity(3 * w as usize);
                let mut depth = Vec::with_capacity(w as usize);
                let mut dynamic = Vec::with_capacity(w as usize);
                for col in 0..w {
                    // Camera-frame direction with unit z, so hit distance is z-depth.
                    let ray = |x: f64, y: f64| rot * Vector3::new((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
                    let centre = self.cast(&origin, &ray(col as f64 + 0.5, row as f64 + 0.5), t);
                    depth.push(centre.map(|c| c.dist));
                    dynamic.push(centre.is_some_and(|c| c.dynamic));
                    let mut acc = [0.0; 3];
                    for sy in 0..ss {
                        for sx in 0..ss {
                            let x = col as f64 + (sx as f64 + 0.5) / ss as f64;
                            let y = row as f64 + (sy as f64 + 0.5) / ss as f64;
                            let c = self.cast(&origin, &ray(x, y), t).map_or(bg, |hit| hit.color);
                            for i in 0..3 {
                                acc[i] += c[i];
                            }
                        }
                    }
                    let n = (ss * ss) as f64;
                    rgb.extend(acc.map(|v| (v / n).clamp(0.0, 1.0)));
                }
                (rgb, depth, dynamic)
            })
            .collect();
        let mut out = ViewRender { rgb: Image::new(w, h), depth: Vec::new(), dynamic: Vec::new() };
        out.rgb.data.clear();
        for (rgb, depth, dynamic) in rows {
            out.rgb.data.extend(rgb);
            out.depth.extend(depth);
            out.dynamic.extend(dynamic);
        }
        out
    }

    /// Renders every frame of the clip.
    pub fn generate(&self, seed: u64) -> Result<SyntheticOutput, SynthError> {
        let k = self.intrinsics;
        let (w, h) = (k.width, k.height);
        let (mw, mh) = motion_shape(w, h);
        let spec = &self.spec;
        let frames: Vec<(Frame, MotionMask)> = (0..spec.n_frames)
            .into_par_iter()
            .map(|i| {
                let t = spec.frame_time(i);
                let pose = spec.pose_at(t)?;
                let view = self.render_view(&pose, &k, t);
                // Per-frame streams keep output independent of scheduling.
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let depth_noise = Normal::new(0.0, spec.depth_noise.max(0.0)).expect("finite std");
                let values: Vec<f32> = view
                    .depth
                    .iter()
                    .map(|d| match d {
                        Some(z) if spec.depth_noise > 0.0 => (z * (1.0 + depth_noise.sample(&mut rng)).max(0.05)) as f32,
                        Some(z) => *z as f32,
                        None => 0.0,
                    })
                    .collect();
                let depth = DepthMap::from_values(w, h, values)
                    .map_err(|e| SynthError::InvalidScene(format!("depth map: {e}")))?;

                let motion_noise = Normal::new(0.0, spec.motion_noise.max(0.0)).expect("finite std");
                let mut motion = vec![0f32; (mw * mh) as usize];
                for by in 0..mh {
                    for bx in 0..mw {
                        let (mut hits, mut total) = (0u32, 0u32);
                        for y in by * 8..((by + 1) * 8).min(h) {
                            for x in bx * 8..((bx + 1) * 8).min(w) {
                                hits += view.dynamic[(y * w + x) as usize] as u32;
                                total += 1;
                            }
                        }
                        let coverage = hits as f64 / total as f64;
                        let mut p = spec.motion_floor + (spec.motion_peak - spec.motion_floor) * coverage;
                        if spec.motion_noise > 0.0 {
                            p += motion_noise.sample(&mut rng);
                        }
                        motion[(by * mw + bx) as usize] = p.clamp(0.0, 1.0) as f32;
                    }
                }
                let motion = MotionProbMap::new(mw, mh, motion, i)
                    .map_err(|e| SynthError::InvalidScene(format!("motion map: {e}")))?;
                let truth = MotionMask { width: w, height: h, values: view.dynamic, frame: i };
                let frame = Frame { rgb: view.rgb.to_rgb8(), depth: Some(depth), pose, motion, timestamp: t };
                Ok((frame, truth))
            })
            .collect::<Result<_, SynthError>>()?;
        let (frames, truth): (Vec<Frame>, Vec<MotionMask>) = frames.into_iter().unzip();
        Ok(SyntheticOutput { bundle: CalibratedBundle { fps: spec.fps, intrinsics: k, frames }, dynamic_truth: truth })
    }
}

/// A generated bundle with its exact dynamic coverage.
#[derive(Debug, Clone)]
pub struct SyntheticOutput {
    pub bundle: CalibratedBundle,
    pub dynamic_truth: Vec<MotionMask>,
}

/// Validates `spec` and renders the whole clip.
pub fn generate_synthetic(spec: &SyntheticSceneSpec, seed: u64) -> Result<SyntheticOutput, SynthError> {
    SyntheticScene::new(spec.clone())?.generate(seed)
}

/// The reference scene: a textured room with one static and one slowly
/// moving sphere, filmed by a sideways-drifting camera.
pub fn reference_scene(width: u32, height: u32, n_frames: usize) -> SyntheticSceneSpec {
    let smooth = |base: [f64; 3], accent: [f64; 3], frequency: f64| Texture::Smooth { base, accent, frequency };
    let fps = 30.0;
    SyntheticSceneSpec {
        width,
        height,
        fps,
        n_frames,
        fov_y_deg: 60.0,
        camera: CameraPath::Linear { start: [-0.35, 0.15, -2.4], end: [0.35, 0.25, -2.4], target: [0.0, -0.2, 2.0] },
        planes: vec![
            PlaneSpec {
                point: [0.0, -1.0, 0.0],
                normal: [0.0, 1.0, 0.0],
                tangent: [1.0, 0.0, 0.0],
                half_extent: None,
                texture: smooth([0.55, 0.45, 0.35], [0.75, 0.65, 0.5], 0.35),
            },
            PlaneSpec {
                point: [0.0, 0.0, 4.0],
                normal: [0.0, 0.0, -1.0],
                tangent: [1.0, 0.0, 0.0],
                half_extent: None,
                texture: smooth([0.3, 0.45, 0.6], [0.55, 0.7, 0.8], 0.3),
            },
            PlaneSpec {
                point: [-2.6, 0.0, 0.0],
                normal: [1.0, 0.0, 0.0],
                tangent: [0.0, 0.0, 1.0],
                half_extent: None,
                texture: smooth([0.6, 0.35, 0.35], [0.8, 0.55, 0.5], 0.3),
            },
            PlaneSpec {
                point: [2.6, 0.0, 0.0],
                normal: [-1.0, 0.0, 0.0],
                tangent: [0.0, 0.0, 1.0],
                half_extent: None,
                texture: smooth([0.35, 0.55, 0.35], [0.55, 0.75, 0.5], 0.3),
            },
            PlaneSpec {
                point: [0.0, 1.8, 0.0],
                normal: [0.0, -1.0, 0.0],
                tangent: [1.0, 0.0, 0.0],
                half_extent: None,
                texture: smooth([0.8, 0.8, 0.75], [0.9, 0.9, 0.85], 0.25),
            },
        ],
        spheres: vec![SphereSpec {
            center: [-1.0, -0.55, 2.4],
            radius: 0.45,
            texture: smooth([0.85, 0.7, 0.2], [0.95, 0.85, 0.45], 0.8),
        }],
        dynamic: vec![DynamicSphere {
            radius: 0.3,
            texture: smooth([0.2, 0.3, 0.85], [0.45, 0.55, 0.95], 0.8),
            trajectory: Trajectory::Linear { start: [0.25, -0.5, 1.8], end: [0.85, -0.5, 1.8] },
        }],
        background: [0.0; 3],
        depth_noise: 0.0,
        motion_noise: 0.02,
        motion_floor: 0.03,
        motion_peak: 0.97,
        supersample: 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2, Matrix3, Vector2};

    fn small(n_frames: usize) -> SyntheticSceneSpec {
        reference_scene(64, 48, n_frames)
    }

    #[test]
    fn static_scene_has_zero_motion() {
        let mut spec = small(4);
        spec.dynamic.clear();
        spec.motion_noise = 0.0;
        spec.motion_floor = 0.0;
        let out = generate_synthetic(&spec, 1).unwrap();
        for f in &out.bundle.frames {
            assert!(f.motion.values.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn same_seed_same_bundle() {
        let mut spec = small(3);
        spec.depth_noise = 0.01;
        let a = generate_synthetic(&spec, 7).unwrap().bundle;
        let b = generate_synthetic(&spec, 7).unwrap().bundle;
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.rgb, y.rgb);
            assert_eq!(x.depth, y.depth);
            assert_eq!(x.motion, y.motion);
        }
        let c = generate_synthetic(&spec, 8).unwrap().bundle;
        assert_ne!(a.frames[0].depth, c.frames[0].depth);
    }

    #[test]
    fn depth_is_exact_on_a_plane() {
        let spec = SyntheticSceneSpec {
            camera: CameraPath::Linear { start: [0.0, 0.0, 0.0], end: [0.0, 0.0, 0.0], target: [0.0, 0.0, 1.0] },
            planes: vec![PlaneSpec {
                point: [0.0, 0.0, 3.0],
                normal: [0.0, 0.0, -1.0],
                tangent: [1.0, 0.0, 0.0],
                half_extent: None,
                texture: Texture::Solid { color: [0.5; 3] },
            }],
            spheres: vec![],
            dynamic: vec![],
            ..small(1)
        };
        let out = generate_synthetic(&spec, 0).unwrap();
        let d = out.bundle.frames[0].depth.as_ref().unwrap();
        assert!(d.values.iter().all(|v| (*v - 3.0).abs() < 1e-6));
    }

    /// Area of the perspective image of a sphere (an ellipse), from the
    /// silhouette cone `(p.c)^2 >= (|c|^2 - r^2) |p|^2` on the plane z = 1.
    fn disk_area_px(center_cam: Vector3<f64>, r: f64, k: &Intrinsics) -> f64 {
        let m: Matrix3<f64> = center_cam * center_cam.transpose() - Matrix3::identity() * (center_cam.norm_squared() - r * r);
        let q = -Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let g = -Vector2::new(m[(0, 2)], m[(1, 2)]);
        let hc = -m[(2, 2)];
        let area = std::f64::consts::PI * (g.dot(&(q.try_inverse().unwrap() * g)) - hc) / q.determinant().sqrt();
        area * k.fx * k.fy
    }

    #[test]
    fn dynamic_pixel_count_matches_projected_disk() {
        let mut spec = reference_scene(256, 256, 6);
        spec.spheres.clear();
        let scene = SyntheticScene::new(spec.clone()).unwrap();
        let out = scene.generate(0).unwrap();
        let k = scene.intrinsics();
        for (i, truth) in out.dynamic_truth.iter().enumerate() {
            let t = spec.frame_time(i);
            let pose = spec.pose_at(t).unwrap();
            let c = pose.world_to_camera(&spec.dynamic[0].trajectory.position(t, spec.duration()));
            let expect = disk_area_px(c, spec.dynamic[0].radius, &k);
            let got = truth.dynamic_count() as f64;
            assert!((got - expect).abs() <= 0.02 * expect, "frame {i}: {got} vs {expect}");
        }
    }

    #[test]
    fn offscreen_trajectory_is_rejected() {
        let mut spec = small(10);
        spec.dynamic[0].trajectory = Trajectory::Linear { start: [30.0, 0.0, 2.0], end: [40.0, 0.0, 2.0] };
        assert!(matches!(SyntheticScene::new(spec), Err(SynthError::OffscreenTrajectory { .. })));
    }

    #[test]
    fn degenerate_camera_is_rejected() {
        let mut spec = small(3);
        spec.camera = CameraPath::Linear { start: [0.0, 0.0, 0.0], end: [0.0, 0.0, 1.0], target: [0.0, 0.0, 0.5] };
        assert!(matches!(SyntheticScene::new(spec.clone()), Err(SynthError::DegenerateCamera(_))));
        spec.camera = CameraPath::Linear { start: [0.0, 0.0, 0.0], end: [0.0, 0.0, 0.0], target: [0.0, 3.0, 0.0] };
        assert!(matches!(SyntheticScene::new(spec), Err(SynthError::DegenerateCamera(_))));
    }

    #[test]
    fn motion_maps_follow_coverage() {
        let mut spec = small(2);
        spec.motion_noise = 0.0;
        let out = generate_synthetic(&spec, 3).unwrap();
        let f = &out.bundle.frames[0];
        assert_eq!((f.motion.width, f.motion.height), (8, 6));
        let truth = &out.dynamic_truth[0];
        assert!(truth.dynamic_count() > 0);
        for by in 0..6u32 {
            for bx in 0..8u32 {
                let mut hits = 0;
                for y in by * 8..by * 8 + 8 {
                    for x in bx * 8..bx * 8 + 8 {
                        hits += truth.get(x, y) as u32;
                    }
                }
                let expect = spec.motion_floor + (spec.motion_peak - spec.motion_floor) * hits as f64 / 64.0;
                let got = f.motion.values[(by * 8 + bx) as usize] as f64;
                assert!((got - expect).abs() < 1e-6, "cell ({bx}, {by}): {got} vs {expect}");
            }
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = small(5);
        let s = serde_json::to_string(&spec).unwrap();
        let back: SyntheticSceneSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }
}
