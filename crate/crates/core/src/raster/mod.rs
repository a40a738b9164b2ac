//! Tile-based splatting of a 4D model at one timestamp, with the exact
//! reverse-mode pass for every trainable parameter.
//!
//! Forward: temporal culling, projection, binning into 16x16 tiles, one global
//! sort of `(tile, depth, index)` keys, then front-to-back compositing. Each
//! tile is walked splat by splat over the pixels inside the splat's 3σ box.
//! Backward walks the same lists in reverse, unwinding transmittance from the
//! stored final value instead of keeping per-pixel blending stacks.

mod project;

use std::time::{Duration, Instant};

use log::warn;
use nalgebra::{Matrix2, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::RenderError;
use crate::gaussian::{sigmoid, GaussianModel4D, DEFAULT_CULL_EPSILON};
use crate::geometry::{Intrinsics, PoseSE3};
use crate::image::Image;

pub use project::{cov2d_matrix, project_isotropic, project_splat, projection_jacobian, SplatProjection};

pub const TILE_SIZE: u32 = 16;
/// Added to both diagonal entries of every 2D covariance, px².
pub const COV2D_DILATION: f64 = 0.3;
pub const MAX_ALPHA: f64 = 0.99;
/// Compositing stops before transmittance would drop below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
pub const GUARD_BAND: f64 = 1.3;
pub const NEAR_PLANE: f64 = 0.01;
/// Blending weights below this are skipped.
pub const MIN_ALPHA: f64 = 1.0 / 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    /// Camera-to-world.
    pub pose: PoseSE3,
    pub intrinsics: Intrinsics,
}

impl Camera {
    pub fn new(pose: PoseSE3, intrinsics: Intrinsics) -> Self {
        Self { pose, intrinsics }
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub background: [f64; 3],
    /// Primitives with opacity below this at the query time are skipped.
    pub cull_epsilon: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self { background: [0.0; 3], cull_epsilon: DEFAULT_CULL_EPSILON }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub cull: Duration,
    pub project: Duration,
    pub sort: Duration,
    pub raster: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.cull + self.project + self.sort + self.raster
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RenderStats {
    /// Primitives left after temporal culling.
    pub survivors: usize,
    /// Primitives that also survived frustum culling.
    pub projected: usize,
    pub tile_entries: usize,
    pub timings: StageTimings,
}

/// A rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    pub rgb: Image,
    /// Accumulated coverage `1 - T_final`.
    pub alpha: Vec<f64>,
    /// Expected camera depth (coverage-normalised, 0 where nothing is hit).
    pub depth: Vec<f64>,
    pub pose: PoseSE3,
    pub t: f64,
    pub stats: RenderStats,
}

impl FrameImage {
    pub fn width(&self) -> u32 {
        self.rgb.width
    }

    pub fn height(&self) -> u32 {
        self.rgb.height
    }
}

/// Forward state retained for the backward pass.
#[derive(Debug, Clone)]
pub struct RenderContext {
    pub camera: Camera,
    pub t: f64,
    model_len: usize,
    splats: Vec<SplatProjection>,
    tile_offsets: Vec<usize>,
    entries: Vec<u32>,
    n_contrib: Vec<u32>,
    final_transmittance: Vec<f64>,
    tiles_x: u32,
    tiles_y: u32,
}

impl RenderContext {
    pub fn splats(&self) -> &[SplatProjection] {
        &self.splats
    }

    /// Index into the sorted splat list after the last blended primitive, per pixel.
    pub fn contributors(&self) -> &[u32] {
        &self.n_contrib
    }

    pub fn final_transmittance(&self) -> &[f64] {
        &self.final_transmittance
    }
}

/// Per-primitive gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub means: Vec<[f64; 4]>,
    pub log_scales: Vec<f64>,
    pub log_scales_t: Vec<f64>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
}

impl GradBuffer {
    pub fn zeros(n: usize) -> Self {
        Self {
            means: vec![[0.0; 4]; n],
            log_scales: vec![0.0; n],
            log_scales_t: vec![0.0; n],
            opacity_logits: vec![0.0; n],
            colors: vec![[0.0; 3]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.means.iter().flatten().all(|v| v.is_finite())
            && self.colors.iter().flatten().all(|v| v.is_finite())
            && self
                .log_scales
                .iter()
                .chain(&self.log_scales_t)
                .chain(&self.opacity_logits)
                .all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.means.iter().flatten().all(|v| *v == 0.0)
            && self.colors.iter().flatten().all(|v| *v == 0.0)
            && self
                .log_scales
                .iter()
                .chain(&self.log_scales_t)
                .chain(&self.opacity_logits)
                .all(|v| *v == 0.0)
    }
}

/// Splat data packed for the tile loops.
#[derive(Debug, Clone, Copy)]
struct Packed {
    mx: f64,
    my: f64,
    a: f64,
    b: f64,
    c: f64,
    opacity: f64,
    /// Kernel exponents below this give `alpha < MIN_ALPHA`.
    min_power: f64,
    rgb: [f64; 3],
    depth: f64,
    pixels: [u32; 4],
}

impl Packed {
    fn from(s: &SplatProjection) -> Self {
        Self {
            mx: s.mean2d.x,
            my: s.mean2d.y,
            a: s.conic[0],
            b: s.conic[1],
            c: s.conic[2],
            opacity: s.opacity,
            min_power: (MIN_ALPHA / s.opacity).ln(),
            rgb: s.rgb,
            depth: s.depth,
            pixels: s.pixels,
        }
    }

    #[inline(always)]
    fn power(&self, px: f64, py: f64) -> (f64, f64, f64) {
        let dx = px - self.mx;
        let dy = py - self.my;
        (-0.5 * (self.a * dx * dx + self.c * dy * dy) - self.b * dx * dy, dx, dy)
    }

    /// Tile-local columns `lx0..=lx1` of row `py` that can reach `min_power`,
    /// widened by one pixel on each side; the exact test still runs per pixel.
    #[inline]
    fn row_span(&self, py: f64, x0: u32, lx0: u32, lx1: u32) -> Option<(u32, u32)> {
        let dy = py - self.my;
        let bdy = self.b * dy;
        let disc = bdy * bdy - self.a * (self.c * dy * dy + 2.0 * self.min_power);
        if !(disc >= 0.0) {
            return None;
        }
        let root = disc.sqrt();
        let lo = self.mx + (-bdy - root) / self.a - 0.5 - x0 as f64;
        let hi = self.mx + (-bdy + root) / self.a - 0.5 - x0 as f64;
        let lo = (lo.ceil() - 1.0).max(lx0 as f64);
        let hi = (hi.floor() + 1.0).min(lx1 as f64);
        (lo <= hi).then(|| (lo as u32, hi as u32))
    }

    /// Pixel box of this splat clipped to `rect`, in tile-local coordinates.
    #[inline]
    fn local_box(&self, rect: &TileRect) -> Option<(u32, u32, u32, u32)> {
        let x0 = self.pixels[0].max(rect.x0);
        let y0 = self.pixels[1].max(rect.y0);
        let x1 = self.pixels[2].min(rect.x1 - 1);
        let y1 = self.pixels[3].min(rect.y1 - 1);
        (x0 <= x1 && y0 <= y1).then(|| (x0 - rect.x0, y0 - rect.y0, x1 - rect.x0, y1 - rect.y0))
    }
}

/// Pixel bounds `[x0, x1) x [y0, y1)` of one tile.
#[derive(Debug, Clone, Copy)]
struct TileRect {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

impl TileRect {
    fn new(tile: u32, tiles_x: u32, w: u32, h: u32) -> Self {
        let (x0, y0) = ((tile % tiles_x) * TILE_SIZE, (tile / tiles_x) * TILE_SIZE);
        Self { x0, y0, x1: (x0 + TILE_SIZE).min(w), y1: (y0 + TILE_SIZE).min(h) }
    }

    fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    fn len(&self) -> usize {
        ((self.x1 - self.x0) * (self.y1 - self.y0)) as usize
    }

    /// Image pixel indices in row-major tile order.
    fn pixels(&self, w: u32) -> impl Iterator<Item = u32> + '_ {
        (self.y0..self.y1).flat_map(move |y| (self.x0..self.x1).map(move |x| y * w + x))
    }
}

/// Renders `model` at time `t`.
pub fn render(
    model: &GaussianModel4D,
    camera: &Camera,
    t: f64,
    settings: &RenderSettings,
) -> Result<FrameImage, RenderError> {
    render_with_context(model, camera, t, settings).map(|(img, _)| img)
}

/// Renders and keeps what the backward pass needs.
pub fn render_with_context(
    model: &GaussianModel4D,
    camera: &Camera,
    t: f64,
    settings: &RenderSettings,
) -> Result<(FrameImage, RenderContext), RenderError> {
    if model.is_empty() {
        return Err(RenderError::EmptyModel);
    }
    let mut timings = StageTimings::default();

    let start = Instant::now();
    let survivors: Vec<(usize, f64)> = (0..model.len())
        .into_par_iter()
        .filter_map(|i| {
            let o = model.opacity_at(i, t);
            (o >= settings.cull_epsilon).then_some((i, o))
        })
        .collect();
    timings.cull = start.elapsed();
    if survivors.is_empty() {
        warn!("no primitives survive temporal culling at t = {t}; frame is background only");
    }

    let start = Instant::now();
    let splats: Vec<SplatProjection> = survivors
        .par_iter()
        .filter_map(|&(i, o)| {
            let m = model.means[i];
            project_isotropic(
                &Vector3::new(m[0], m[1], m[2]),
                model.log_scales[i].exp(),
                o,
                model.colors[i],
                camera,
                i as u32,
            )
        })
        .collect();
    timings.project = start.elapsed();

    let start = Instant::now();
    let (w, h) = (camera.width(), camera.height());
    let tiles_x = w.div_ceil(TILE_SIZE);
    let tiles_y = h.div_ceil(TILE_SIZE);
    let (tile_offsets, entries) = bin_and_sort(&splats, tiles_x, tiles_y);
    timings.sort = start.elapsed();

    let start = Instant::now();
    let tile_outputs: Vec<TileForward> = (0..(tiles_x * tiles_y) as usize)
        .into_par_iter()
        .map(|tile| {
            let list = &entries[tile_offsets[tile]..tile_offsets[tile + 1]];
            let packed: Vec<Packed> = list.iter().map(|&s| Packed::from(&splats[s as usize])).collect();
            forward_tile(tile as u32, tiles_x, w, h, &packed)
        })
        .collect();

    let npix = (w * h) as usize;
    let mut rgb = Image::new(w, h);
    let mut alpha = vec![0.0; npix];
    let mut depth = vec![0.0; npix];
    let mut n_contrib = vec![0u32; npix];
    let mut final_t = vec![1.0; npix];
    let bg = settings.background;
    for out in &tile_outputs {
        for (k, &pix) in out.pixels.iter().enumerate() {
            let p = pix as usize;
            let tr = out.transmittance[k];
            for ch in 0..3 {
                rgb.data[3 * p + ch] = out.color[k][ch] + tr * bg[ch];
            }
            alpha[p] = 1.0 - tr;
            depth[p] = if tr < 1.0 { out.depth[k] / (1.0 - tr) } else { 0.0 };
            n_contrib[p] = out.n_contrib[k];
            final_t[p] = tr;
        }
    }
    timings.raster = start.elapsed();

    let stats = RenderStats {
        survivors: survivors.len(),
        projected: splats.len(),
        tile_entries: entries.len(),
        timings,
    };
    let frame = FrameImage { rgb, alpha, depth, pose: camera.pose, t, stats };
    let ctx = RenderContext {
        camera: *camera,
        t,
        model_len: model.len(),
        splats,
        tile_offsets,
        entries,
        n_contrib,
        final_transmittance: final_t,
        tiles_x,
        tiles_y,
    };
    Ok((frame, ctx))
}

/// Duplicates each splat into every tile it touches and sorts by
/// `(tile, depth, primitive index)`.
fn bin_and_sort(splats: &[SplatProjection], tiles_x: u32, tiles_y: u32) -> (Vec<usize>, Vec<u32>) {
    let total: usize = splats.iter().map(SplatProjection::tile_count).sum();
    let mut keys: Vec<(u32, f64, u32, u32)> = Vec::with_capacity(total);
    for (si, s) in splats.iter().enumerate() {
        for ty in s.tiles[1]..=s.tiles[3] {
            for tx in s.tiles[0]..=s.tiles[2] {
                keys.push((ty * tiles_x + tx, s.depth, s.index, si as u32));
            }
        }
    }
    keys.par_sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let n_tiles = (tiles_x * tiles_y) as usize;
    let mut offsets = vec![0usize; n_tiles + 1];
    for k in &keys {
        offsets[k.0 as usize + 1] += 1;
    }
    for i in 0..n_tiles {
        offsets[i + 1] += offsets[i];
    }
    (offsets, keys.into_iter().map(|k| k.3).collect())
}

struct TileForward {
    pixels: Vec<u32>,
    color: Vec<[f64; 3]>,
    depth: Vec<f64>,
    transmittance: Vec<f64>,
    n_contrib: Vec<u32>,
}

fn forward_tile(tile: u32, tiles_x: u32, w: u32, h: u32, packed: &[Packed]) -> TileForward {
    let rect = TileRect::new(tile, tiles_x, w, h);
    let n = rect.len();
    let tw = rect.width();
    let mut tr = vec![1.0; n];
    let mut color = vec![[0.0; 3]; n];
    let mut depth = vec![0.0; n];
    let mut last = vec![0u32; n];
    let mut done = vec![false; n];
    let mut alive = n;
    for (j, g) in packed.iter().enumerate() {
        if alive == 0 {
            break;
        }
        let Some((lx0, ly0, lx1, ly1)) = g.local_box(&rect) else {
            continue;
        };
        for ly in ly0..=ly1 {
            let py = (rect.y0 + ly) as f64 + 0.5;
            let Some((cx0, cx1)) = g.row_span(py, rect.x0, lx0, lx1) else {
                continue;
            };
            for lx in cx0..=cx1 {
                let k = (ly * tw + lx) as usize;
                if done[k] {
                    continue;
                }
                let (power, _, _) = g.power((rect.x0 + lx) as f64 + 0.5, py);
                if power < g.min_power {
                    continue;
                }
                let alpha = (g.opacity * power.exp()).min(MAX_ALPHA);
                let next = tr[k] * (1.0 - alpha);
                if next < MIN_TRANSMITTANCE {
                    done[k] = true;
                    alive -= 1;
                    continue;
                }
                let wgt = alpha * tr[k];
                let c = &mut color[k];
                c[0] += g.rgb[0] * wgt;
                c[1] += g.rgb[1] * wgt;
                c[2] += g.rgb[2] * wgt;
                depth[k] += g.depth * wgt;
                tr[k] = next;
                last[k] = j as u32 + 1;
            }
        }
    }
    TileForward { pixels: rect.pixels(w).collect(), color, depth, transmittance: tr, n_contrib: last }
}

/// Gradients with respect to one splat's screen-space quantities:
/// mean2d (2), conic (3), temporal opacity (1), colour (3).
type SplatGrad = [f64; 9];

/// Recomputes the forward state and returns parameter gradients.
pub fn render_backward(
    model: &GaussianModel4D,
    camera: &Camera,
    t: f64,
    settings: &RenderSettings,
    dl_drgb: &[f64],
) -> Result<GradBuffer, RenderError> {
    let (_, ctx) = render_with_context(model, camera, t, settings)?;
    backward(model, &ctx, settings, dl_drgb)
}

/// Backward pass from retained forward state. `dl_drgb` is the loss gradient
/// with respect to the interleaved RGB output.
pub fn backward(
    model: &GaussianModel4D,
    ctx: &RenderContext,
    settings: &RenderSettings,
    dl_drgb: &[f64],
) -> Result<GradBuffer, RenderError> {
    let (w, h) = (ctx.camera.width(), ctx.camera.height());
    let expected = (w * h * 3) as usize;
    if dl_drgb.len() != expected {
        return Err(RenderError::GradientShape { expected, found: dl_drgb.len() });
    }
    if dl_drgb.iter().any(|v| !v.is_finite()) {
        return Err(RenderError::NonFiniteGradient);
    }
    if model.len() != ctx.model_len {
        return Err(RenderError::StaleContext("primitive count changed"));
    }

    let per_tile: Vec<Vec<SplatGrad>> = (0..(ctx.tiles_x * ctx.tiles_y) as usize)
        .into_par_iter()
        .map(|tile| {
            let list = &ctx.entries[ctx.tile_offsets[tile]..ctx.tile_offsets[tile + 1]];
            let packed: Vec<Packed> = list.iter().map(|&s| Packed::from(&ctx.splats[s as usize])).collect();
            backward_tile(tile as u32, ctx, w, h, &packed, settings.background, dl_drgb)
        })
        .collect();

    // Deterministic merge in tile order.
    let mut splat_grads = vec![[0.0f64; 9]; ctx.splats.len()];
    for (tile, grads) in per_tile.iter().enumerate() {
        let list = &ctx.entries[ctx.tile_offsets[tile]..ctx.tile_offsets[tile + 1]];
        for (&s, g) in list.iter().zip(grads) {
            let acc = &mut splat_grads[s as usize];
            for k in 0..9 {
                acc[k] += g[k];
            }
        }
    }

    let per_splat: Vec<ParamGrad> = ctx
        .splats
        .par_iter()
        .zip(&splat_grads)
        .map(|(s, g)| chain_to_parameters(model, s, g, &ctx.camera, ctx.t))
        .collect();

    let mut out = GradBuffer::zeros(model.len());
    for (s, pg) in ctx.splats.iter().zip(per_splat) {
        let i = s.index as usize;
        out.means[i] = pg.mean;
        out.log_scales[i] = pg.log_scale;
        out.log_scales_t[i] = pg.log_scale_t;
        out.opacity_logits[i] = pg.opacity_logit;
        out.colors[i] = pg.color;
    }
    Ok(out)
}

fn backward_tile(
    tile: u32,
    ctx: &RenderContext,
    w: u32,
    h: u32,
    packed: &[Packed],
    bg: [f64; 3],
    dl_drgb: &[f64],
) -> Vec<SplatGrad> {
    let rect = TileRect::new(tile, ctx.tiles_x, w, h);
    let tw = rect.width();
    let pix: Vec<usize> = rect.pixels(w).map(|p| p as usize).collect();
    let upstream: Vec<[f64; 3]> = pix.iter().map(|&p| [dl_drgb[3 * p], dl_drgb[3 * p + 1], dl_drgb[3 * p + 2]]).collect();
    // Pixels with zero upstream gradient or no contributors take no part.
    let n_contrib: Vec<u32> =
        pix.iter().zip(&upstream).map(|(&p, g)| if *g == [0.0; 3] { 0 } else { ctx.n_contrib[p] }).collect();
    let mut tr: Vec<f64> = pix.iter().map(|&p| ctx.final_transmittance[p]).collect();
    let mut behind = vec![bg; pix.len()];
    let mut grads = vec![[0.0; 9]; packed.len()];
    let max_n = n_contrib.iter().copied().max().unwrap_or(0) as usize;

    for j in (0..max_n).rev() {
        let s = &packed[j];
        let Some((lx0, ly0, lx1, ly1)) = s.local_box(&rect) else {
            continue;
        };
        let acc = &mut grads[j];
        for ly in ly0..=ly1 {
            let py = (rect.y0 + ly) as f64 + 0.5;
            let Some((cx0, cx1)) = s.row_span(py, rect.x0, lx0, lx1) else {
                continue;
            };
            for lx in cx0..=cx1 {
                let k = (ly * tw + lx) as usize;
                if j as u32 >= n_contrib[k] {
                    continue;
                }
                let (power, dx, dy) = s.power((rect.x0 + lx) as f64 + 0.5, py);
                if power < s.min_power {
                    continue;
                }
                let kernel = power.exp();
                let raw = s.opacity * kernel;
                let alpha = raw.min(MAX_ALPHA);
                // Transmittance in front of this splat.
                let t_in = tr[k] / (1.0 - alpha);
                tr[k] = t_in;
                let g = upstream[k];
                let wgt = alpha * t_in;
                acc[6] += g[0] * wgt;
                acc[7] += g[1] * wgt;
                acc[8] += g[2] * wgt;
                let b = &mut behind[k];
                let dl_dalpha =
                    t_in * (g[0] * (s.rgb[0] - b[0]) + g[1] * (s.rgb[1] - b[1]) + g[2] * (s.rgb[2] - b[2]));
                for ch in 0..3 {
                    b[ch] = s.rgb[ch] * alpha + (1.0 - alpha) * b[ch];
                }
                if raw > MAX_ALPHA {
                    continue;
                }
                acc[5] += dl_dalpha * kernel;
                let dl_dpower = dl_dalpha * alpha;
                acc[0] += dl_dpower * (s.a * dx + s.b * dy);
                acc[1] += dl_dpower * (s.b * dx + s.c * dy);
                acc[2] += dl_dpower * (-0.5 * dx * dx);
                acc[3] += dl_dpower * (-dx * dy);
                acc[4] += dl_dpower * (-0.5 * dy * dy);
            }
        }
    }
    grads
}

struct ParamGrad {
    mean: [f64; 4],
    log_scale: f64,
    log_scale_t: f64,
    opacity_logit: f64,
    color: [f64; 3],
}

/// Chains screen-space gradients through projection, isotropic covariance,
/// temporal opacity and the parameter activations.
fn chain_to_parameters(
    model: &GaussianModel4D,
    s: &SplatProjection,
    g: &SplatGrad,
    camera: &Camera,
    t: f64,
) -> ParamGrad {
    let i = s.index as usize;
    let k = &camera.intrinsics;
    let (fx, fy) = (k.fx, k.fy);
    let (x, y, z) = (s.cam.x, s.cam.y, s.cam.z);
    let iz = 1.0 / z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;

    // conic -> covariance: dL/dΣ = -Q G Q with G the symmetric conic gradient.
    let q = Matrix2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
    let gq = Matrix2::new(g[2], 0.5 * g[3], 0.5 * g[3], g[4]);
    let gs = -(q * gq * q);
    let (g_a, g_b, g_c) = (gs[(0, 0)], gs[(0, 1)] + gs[(1, 0)], gs[(1, 1)]);

    let scale = model.log_scales[i].exp();
    let s2 = scale * scale;
    let (j00, j02) = (fx * iz, -fx * x * iz2);
    let (j11, j12) = (fy * iz, -fy * y * iz2);

    let dl_ds2 = g_a * (j00 * j00 + j02 * j02) + g_b * (j02 * j12) + g_c * (j11 * j11 + j12 * j12);
    let dl_dj00 = g_a * s2 * 2.0 * j00;
    let dl_dj02 = g_a * s2 * 2.0 * j02 + g_b * s2 * j12;
    let dl_dj11 = g_c * s2 * 2.0 * j11;
    let dl_dj12 = g_c * s2 * 2.0 * j12 + g_b * s2 * j02;

    let (gu, gv) = (g[0], g[1]);
    let gx = gu * fx * iz + dl_dj02 * (-fx * iz2);
    let gy = gv * fy * iz + dl_dj12 * (-fy * iz2);
    let gz = -gu * fx * x * iz2 - gv * fy * y * iz2
        + dl_dj00 * (-fx * iz2)
        + dl_dj02 * (2.0 * fx * x * iz3)
        + dl_dj11 * (-fy * iz2)
        + dl_dj12 * (2.0 * fy * y * iz3);
    let gw = camera.pose.rotation() * Vector3::new(gx, gy, gz);

    // o_t = sigmoid(logit) * exp(-(t - mu_t)^2 / (2 s_t^2))
    let base = sigmoid(model.opacity_logits[i]);
    let st = model.log_scales_t[i].exp();
    let dt = t - model.means[i][3];
    let falloff = (-0.5 * dt * dt / (st * st)).exp();
    let o_t = base * falloff;
    let g_o = g[5];

    ParamGrad {
        mean: [gw.x, gw.y, gw.z, g_o * o_t * dt / (st * st)],
        log_scale: dl_ds2 * 2.0 * s2,
        log_scale_t: g_o * o_t * dt * dt / (st * st),
        opacity_logit: g_o * falloff * base * (1.0 - base),
        color: [g[6], g[7], g[8]],
    }
}
