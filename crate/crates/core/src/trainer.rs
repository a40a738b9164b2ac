//! Photometric optimisation of a fixed set of Gaussians with Adam.
//!
//! One frame per step, sampled uniformly with a seeded RNG. No densification
//! and no pruning: the primitive count never changes.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::CalibratedBundle;
use crate::error::{ImageError, TrainError};
use crate::gaussian::{GaussianModel4D, DEFAULT_CULL_EPSILON};
use crate::image::Image;
use crate::memory;
use crate::metrics::{psnr, ssim, ssim_with_grad, FrameMetrics, MetricReport};
use crate::raster::{backward, render, render_with_context, Camera, GradBuffer, RenderSettings};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_iters: usize,
    pub lr_position: f64,
    /// Position LR at the last iteration as a fraction of `lr_position`.
    pub lr_position_final_factor: f64,
    pub lr_opacity: f64,
    pub lr_scale: f64,
    pub lr_rgb: f64,
    /// Used for the temporal mean and log temporal scale when they are trainable.
    pub lr_temporal: f64,
    pub train_temporal: bool,
    /// Weight of the D-SSIM term.
    pub loss_lambda: f64,
    pub cull_epsilon: f64,
    pub background: [f64; 3],
    pub seed: u64,
    /// Progress record interval in iterations (0 disables).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            lr_position: 1e-5,
            lr_position_final_factor: 0.01,
            lr_opacity: 0.05,
            lr_scale: 5e-3,
            lr_rgb: 2.5e-3,
            lr_temporal: 1e-3,
            train_temporal: false,
            loss_lambda: 0.2,
            cull_epsilon: DEFAULT_CULL_EPSILON,
            background: [0.0; 3],
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let lrs = [self.lr_position, self.lr_opacity, self.lr_scale, self.lr_rgb, self.lr_temporal];
        if lrs.iter().any(|lr| !(*lr > 0.0 && lr.is_finite())) {
            return Err(TrainError::Config("learning rates must be positive and finite".into()));
        }
        if !(self.lr_position_final_factor > 0.0) {
            return Err(TrainError::Config("position LR final factor must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.loss_lambda) {
            return Err(TrainError::Config(format!("loss_lambda {} outside [0, 1]", self.loss_lambda)));
        }
        if !(self.cull_epsilon >= 0.0 && self.cull_epsilon < 1.0) {
            return Err(TrainError::Config(format!("cull_epsilon {} outside [0, 1)", self.cull_epsilon)));
        }
        Ok(())
    }

    /// Exponential (log-linear) decay from `lr_position` to
    /// `lr_position * lr_position_final_factor` over `max_iters`.
    pub fn position_lr(&self, iteration: usize) -> f64 {
        if self.max_iters == 0 {
            return self.lr_position;
        }
        let frac = (iteration as f64 / self.max_iters as f64).clamp(0.0, 1.0);
        self.lr_position * self.lr_position_final_factor.powf(frac)
    }

    pub fn render_settings(&self) -> RenderSettings {
        RenderSettings { background: self.background, cull_epsilon: self.cull_epsilon }
    }
}

/// One supervised view.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub frame: usize,
    pub t: f64,
    pub camera: Camera,
    pub target: Image,
}

pub fn views_from_bundle(bundle: &CalibratedBundle) -> Vec<TrainView> {
    bundle
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| TrainView {
            frame: i,
            t: f.timestamp,
            camera: Camera::new(f.pose, bundle.intrinsics),
            target: Image::from_rgb8(&f.rgb),
        })
        .collect()
}

/// PSNR and SSIM of `model` rendered at every view.
pub fn evaluate(model: &GaussianModel4D, views: &[TrainView], settings: &RenderSettings) -> Result<MetricReport, TrainError> {
    let mut frames = Vec::with_capacity(views.len());
    for v in views {
        let img = render(model, &v.camera, v.t, settings)?.rgb;
        frames.push(FrameMetrics { frame: v.frame, t: v.t, psnr: psnr(&img, &v.target)?, ssim: ssim(&img, &v.target)? });
    }
    Ok(MetricReport::from_frames(frames))
}

/// `(1 - λ) L1 + λ (1 - SSIM)` and its gradient with respect to `rendered`.
pub fn photometric_loss(rendered: &Image, target: &Image, lambda: f64) -> Result<(f64, Vec<f64>), ImageError> {
    rendered.check_same_size(target)?;
    let n = rendered.data.len().max(1) as f64;
    let l1 = rendered.data.iter().zip(&target.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let mut grad: Vec<f64> = rendered
        .data
        .iter()
        .zip(&target.data)
        .map(|(a, b)| {
            let sign = match a.partial_cmp(b) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Less) => -1.0,
                _ => 0.0,
            };
            (1.0 - lambda) * sign / n
        })
        .collect();
    let mut loss = (1.0 - lambda) * l1;
    if lambda > 0.0 {
        let (s, ds) = ssim_with_grad(rendered, target)?;
        loss += lambda * (1.0 - s);
        for (g, d) in grad.iter_mut().zip(ds) {
            *g -= lambda * d;
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// Adam on a flat slice; `lr_of(i)` gives the rate of element `i`.
fn adam<F>(params: &mut [f64], grads: &[f64], st: &mut Moments, step: u64, lr_of: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
    params
        .par_iter_mut()
        .zip(st.m.par_iter_mut())
        .zip(st.v.par_iter_mut())
        .zip(grads.par_iter())
        .enumerate()
        .for_each(|(i, (((p, m), v), &g))| {
            let lr = lr_of(i);
            if lr == 0.0 {
                return;
            }
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
        });
}

/// Accumulated wall time of the optimisation stages.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OptimizationTimings {
    pub forward_splatting: Duration,
    pub loss: Duration,
    pub backward: Duration,
    pub optimizer_step: Duration,
}

/// Optimiser state carried across steps.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub iteration: usize,
    means: Moments,
    log_scales: Moments,
    log_scales_t: Moments,
    opacity_logits: Moments,
    colors: Moments,
    rng: ChaCha8Rng,
    pub loss_history: Vec<f64>,
    /// Train-view PSNR of every step.
    pub psnr_history: Vec<f64>,
    pub timings: OptimizationTimings,
}

impl TrainState {
    pub fn new(model: &GaussianModel4D, seed: u64) -> Self {
        let n = model.len();
        Self {
            iteration: 0,
            means: Moments::zeros(4 * n),
            log_scales: Moments::zeros(n),
            log_scales_t: Moments::zeros(n),
            opacity_logits: Moments::zeros(n),
            colors: Moments::zeros(3 * n),
            rng: ChaCha8Rng::seed_from_u64(seed),
            loss_history: Vec::new(),
            psnr_history: Vec::new(),
            timings: OptimizationTimings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetrics {
    pub iteration: usize,
    pub frame: usize,
    pub loss: f64,
    pub psnr: f64,
}

/// Render, loss, backward and one Adam update on `view`.
pub fn train_step(
    model: &mut GaussianModel4D,
    state: &mut TrainState,
    view: &TrainView,
    config: &TrainConfig,
) -> Result<StepMetrics, TrainError> {
    let settings = config.render_settings();

    let start = Instant::now();
    let (frame, ctx) = render_with_context(model, &view.camera, view.t, &settings)?;
    state.timings.forward_splatting += start.elapsed();

    let start = Instant::now();
    let (loss, dl) = photometric_loss(&frame.rgb, &view.target, config.loss_lambda)?;
    let psnr_train = psnr(&frame.rgb, &view.target)?;
    state.timings.loss += start.elapsed();
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss { iteration: state.iteration, frame: view.frame, loss });
    }

    let start = Instant::now();
    let grads = backward(model, &ctx, &settings, &dl)?;
    state.timings.backward += start.elapsed();

    let start = Instant::now();
    apply_adam(model, state, &grads, config);
    state.timings.optimizer_step += start.elapsed();

    let metrics = StepMetrics { iteration: state.iteration, frame: view.frame, loss, psnr: psnr_train };
    state.loss_history.push(loss);
    state.psnr_history.push(psnr_train);
    state.iteration += 1;
    Ok(metrics)
}

fn apply_adam(model: &mut GaussianModel4D, state: &mut TrainState, g: &GradBuffer, config: &TrainConfig) {
    let step = state.iteration as u64 + 1;
    let lr_pos = config.position_lr(state.iteration);
    let lr_t = if config.train_temporal { config.lr_temporal } else { 0.0 };
    adam(model.means.as_flattened_mut(), g.means.as_flattened(), &mut state.means, step, |i| {
        if i % 4 == 3 {
            lr_t
        } else {
            lr_pos
        }
    });
    adam(&mut model.log_scales, &g.log_scales, &mut state.log_scales, step, |_| config.lr_scale);
    adam(&mut model.opacity_logits, &g.opacity_logits, &mut state.opacity_logits, step, |_| config.lr_opacity);
    adam(model.colors.as_flattened_mut(), g.colors.as_flattened(), &mut state.colors, step, |_| config.lr_rgb);
    if config.train_temporal {
        adam(&mut model.log_scales_t, &g.log_scales_t, &mut state.log_scales_t, step, |_| lr_t);
    }
    model.colors.par_iter_mut().flatten().for_each(|c| *c = c.clamp(0.0, 1.0));
}

/// One line of the JSON-lines progress log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressRecord {
    pub iter: usize,
    pub loss: f64,
    pub psnr_train: f64,
    pub elapsed_s: f64,
    pub rss_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub iterations: usize,
    pub gaussians: usize,
    pub final_loss: Option<f64>,
    /// Mean loss over the last 100 steps.
    pub final_loss_avg: Option<f64>,
    pub loss_history: Vec<f64>,
    pub psnr_history: Vec<f64>,
    pub forward_splatting_s: f64,
    pub loss_s: f64,
    pub backward_s: f64,
    pub optimizer_step_s: f64,
    pub total_s: f64,
    pub peak_rss_mb: f64,
}

/// Runs `config.max_iters` steps on views drawn uniformly at random.
pub fn train<F>(
    model: &mut GaussianModel4D,
    views: &[TrainView],
    config: &TrainConfig,
    mut on_progress: F,
) -> Result<TrainSummary, TrainError>
where
    F: FnMut(&ProgressRecord),
{
    config.validate()?;
    model.check_consistent().map_err(|e| TrainError::Config(e.to_string()))?;
    if config.max_iters > 0 && views.is_empty() {
        return Err(TrainError::Config("no training views".into()));
    }
    if config.max_iters > 0 && model.is_empty() {
        return Err(TrainError::Config("model has no Gaussians".into()));
    }
    let n_before = model.len();
    let start = Instant::now();
    let mut state = TrainState::new(model, config.seed);
    for _ in 0..config.max_iters {
        let idx = state.rng.gen_range(0..views.len());
        let m = train_step(model, &mut state, &views[idx], config)?;
        let done = state.iteration;
        if config.log_every > 0 && (done % config.log_every == 0 || done == config.max_iters) {
            on_progress(&ProgressRecord {
                iter: done,
                loss: m.loss,
                psnr_train: m.psnr,
                elapsed_s: start.elapsed().as_secs_f64(),
                rss_mb: memory::rss_mb(),
            });
        }
    }
    debug_assert_eq!(model.len(), n_before);
    let h = &state.loss_history;
    let tail = &h[h.len().saturating_sub(100)..];
    let t = state.timings;
    Ok(TrainSummary {
        iterations: state.iteration,
        gaussians: model.len(),
        final_loss: h.last().copied(),
        final_loss_avg: (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64),
        loss_history: state.loss_history.clone(),
        psnr_history: state.psnr_history.clone(),
        forward_splatting_s: t.forward_splatting.as_secs_f64(),
        loss_s: t.loss.as_secs_f64(),
        backward_s: t.backward.as_secs_f64(),
        optimizer_step_s: t.optimizer_step.as_secs_f64(),
        total_s: start.elapsed().as_secs_f64(),
        peak_rss_mb: memory::peak_rss_mb(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{Gaussian4D, InitMode};
    use crate::geometry::{Intrinsics, PoseSE3};
    use crate::metrics::ssim;
    use crate::raster::render;

    fn camera(w: u32, h: u32) -> Camera {
        Camera::new(PoseSE3::identity(), Intrinsics::new(w as f64, w as f64, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap())
    }

    fn scene(n: usize, seed: u64) -> GaussianModel4D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = GaussianModel4D::empty(1.0, 30.0, InitMode::Lite);
        for _ in 0..n {
            m.push(&Gaussian4D {
                mean: [rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), rng.gen_range(1.5..3.0), 0.5],
                scale: rng.gen_range(0.05..0.2),
                scale_t: 1.0,
                opacity: rng.gen_range(0.2..0.8),
                rgb: [rng.gen(), rng.gen(), rng.gen()],
                is_dynamic: false,
            });
        }
        m
    }

    #[test]
    fn identical_images_give_zero_loss_and_gradient() {
        let img = Image::from_data(12, 12, (0..12 * 12 * 3).map(|i| (i % 7) as f64 / 7.0).collect());
        let (l, g) = photometric_loss(&img, &img, 0.2).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(g.iter().all(|v| *v == 0.0), "{:?}", g.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs())));
        assert!(photometric_loss(&img, &Image::new(3, 3), 0.2).is_err());
    }

    #[test]
    fn offset_image_loss_has_expected_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target = Image::from_data(16, 16, (0..16 * 16 * 3).map(|_| rng.gen_range(0.0..0.8)).collect());
        let shifted = Image::from_data(16, 16, target.data.iter().map(|v| v + 0.1).collect());
        let (l, _) = photometric_loss(&shifted, &target, 0.2).unwrap();
        let d_ssim = 1.0 - ssim(&shifted, &target).unwrap();
        assert!((l - (0.08 + 0.2 * d_ssim)).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Image::from_data(8, 8, (0..8 * 8 * 3).map(|_| rng.gen()).collect());
        let b = Image::from_data(8, 8, (0..8 * 8 * 3).map(|_| rng.gen()).collect());
        let (_, g) = photometric_loss(&a, &b, 0.2).unwrap();
        let h = 1e-7;
        for i in 0..a.data.len() {
            let (mut p, mut q) = (a.clone(), a.clone());
            p.data[i] += h;
            q.data[i] -= h;
            let fd = (photometric_loss(&p, &b, 0.2).unwrap().0 - photometric_loss(&q, &b, 0.2).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-4), "{i}: fd {fd} analytic {}", g[i]);
        }
    }

    #[test]
    fn position_schedule_decays_to_one_percent() {
        let c = TrainConfig { max_iters: 1500, ..Default::default() };
        assert_eq!(c.position_lr(0), 1e-5);
        assert!((c.position_lr(1500) - 1e-7).abs() < 1e-20);
        assert!((c.position_lr(750) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_step_leaves_parameters() {
        let mut m = scene(5, 3);
        let before = m.clone();
        let mut st = TrainState::new(&m, 0);
        apply_adam(&mut m, &mut st, &GradBuffer::zeros(5), &TrainConfig::default());
        assert_eq!(m, before);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut m = scene(4, 4);
        for c in m.colors.iter_mut() {
            *c = [0.5; 3];
        }
        let before = m.clone();
        let mut g = GradBuffer::zeros(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..4 {
            g.means[i] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.3];
            g.log_scales[i] = rng.gen_range(-1.0..1.0);
            g.opacity_logits[i] = rng.gen_range(-1.0..1.0);
            g.colors[i] = [rng.gen_range(-1.0..1.0), 1e-3, -2.0];
        }
        let cfg = TrainConfig::default();
        let mut st = TrainState::new(&m, 0);
        apply_adam(&mut m, &mut st, &g, &cfg);
        let close = |moved: f64, lr: f64, grad: f64| (moved + lr * grad.signum()).abs() < 1e-9 * lr;
        for i in 0..4 {
            for a in 0..3 {
                assert!(close(m.means[i][a] - before.means[i][a], cfg.lr_position, g.means[i][a]));
            }
            // Temporal mean is frozen by default.
            assert_eq!(m.means[i][3], before.means[i][3]);
            assert_eq!(m.log_scales_t[i], before.log_scales_t[i]);
            assert!(close(m.log_scales[i] - before.log_scales[i], cfg.lr_scale, g.log_scales[i]));
            assert!(close(m.opacity_logits[i] - before.opacity_logits[i], cfg.lr_opacity, g.opacity_logits[i]));
            for c in 0..3 {
                assert!(close(m.colors[i][c] - before.colors[i][c], cfg.lr_rgb, g.colors[i][c]));
            }
        }
    }

    #[test]
    fn temporal_parameters_train_when_enabled() {
        let mut m = scene(2, 6);
        let before = m.clone();
        let mut g = GradBuffer::zeros(2);
        g.means[0][3] = 1.0;
        g.log_scales_t[1] = -1.0;
        let cfg = TrainConfig { train_temporal: true, ..Default::default() };
        let mut st = TrainState::new(&m, 0);
        apply_adam(&mut m, &mut st, &g, &cfg);
        assert!((m.means[0][3] - before.means[0][3] + cfg.lr_temporal).abs() < 1e-12);
        assert!((m.log_scales_t[1] - before.log_scales_t[1] - cfg.lr_temporal).abs() < 1e-12);
    }

    #[test]
    fn own_render_is_a_fixed_point() {
        let cam = camera(24, 24);
        let mut m = scene(1, 7);
        m.means[0] = [0.0, 0.0, 2.0, 0.5];
        let target = render(&m, &cam, 0.5, &RenderSettings::default()).unwrap().rgb;
        let views = vec![TrainView { frame: 0, t: 0.5, camera: cam, target }];
        let before = m.clone();
        let cfg = TrainConfig { max_iters: 100, log_every: 0, ..Default::default() };
        let s = train(&mut m, &views, &cfg, |_| {}).unwrap();
        assert!(s.loss_history.iter().all(|l| *l == 0.0));
        assert_eq!(m, before);
    }

    #[test]
    fn zero_iterations_return_initialisation() {
        let mut m = scene(10, 8);
        let before = m.clone();
        let cfg = TrainConfig { max_iters: 0, ..Default::default() };
        let s = train(&mut m, &[], &cfg, |_| {}).unwrap();
        assert_eq!(m, before);
        assert_eq!(s.iterations, 0);
        assert_eq!(s.final_loss, None);
    }

    fn fit_views(seed: u64) -> (GaussianModel4D, Vec<TrainView>) {
        let target_model = scene(30, seed);
        let views: Vec<TrainView> = (0..3)
            .map(|i| {
                let pose = PoseSE3::from_translation(nalgebra::Vector3::new(0.1 * i as f64, 0.0, 0.0));
                let cam = Camera::new(pose, camera(32, 32).intrinsics);
                let target = render(&target_model, &cam, 0.5, &RenderSettings::default()).unwrap().rgb;
                TrainView { frame: i, t: 0.5, camera: cam, target }
            })
            .collect();
        let mut start = target_model.clone();
        for c in start.colors.iter_mut() {
            *c = [0.5; 3];
        }
        (start, views)
    }

    #[test]
    fn training_reduces_loss_and_keeps_count() {
        let (mut m, views) = fit_views(9);
        let n = m.len();
        let cfg = TrainConfig { max_iters: 300, lr_rgb: 0.01, log_every: 50, ..Default::default() };
        let mut records = vec![];
        let s = train(&mut m, &views, &cfg, |r| records.push(*r)).unwrap();
        assert_eq!(m.len(), n);
        assert_eq!(records.len(), 6);
        assert_eq!(records.last().unwrap().iter, 300);
        let first: f64 = s.loss_history[..30].iter().sum();
        let last: f64 = s.loss_history[270..].iter().sum();
        assert!(last < 0.5 * first, "{first} -> {last}");
        assert!(m.colors.iter().flatten().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn training_is_deterministic_across_threads() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                let (mut m, views) = fit_views(10);
                let cfg = TrainConfig { max_iters: 40, seed: 3, log_every: 0, ..Default::default() };
                let s = train(&mut m, &views, &cfg, |_| {}).unwrap();
                (m, s.loss_history)
            })
        };
        let (a, la) = run(1);
        let (b, lb) = run(4);
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut m = scene(1, 0);
        let cfg = TrainConfig { loss_lambda: 2.0, ..Default::default() };
        assert!(matches!(train(&mut m, &[], &cfg, |_| {}), Err(TrainError::Config(_))));
    }
}
