//! Dense colored 4D point clouds from a calibrated bundle, voxel-grid pruning
//! into Gaussian seeds, and model initialisation from those seeds.

use std::collections::HashMap;

use log::warn;
use nalgebra::Vector3;
use rayon::prelude::*;

use crate::bundle::CalibratedBundle;
use crate::error::InitError;
use crate::gaussian::{Gaussian4D, GaussianModel4D, InitMode};
use crate::geometry::{back_project, pixel_center};
use crate::motion_mask::{upsample_prob, MotionMask};

/// Default number of points a voxel needs to survive pruning.
pub const DEFAULT_MIN_SUPPORT: usize = 2;
/// Initial opacity of every primitive.
pub const DEFAULT_INITIAL_OPACITY: f64 = 0.1;
/// Neighbour rank used for the initial spatial scale.
pub const SCALE_NEIGHBOR_RANK: usize = 3;

const PRUNE_CHUNK: usize = 1 << 16;

/// One back-projected (or voxel-averaged) sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedPoint {
    pub position: Vector3<f64>,
    pub color: [f64; 3],
    pub timestamp: f64,
    pub motion_prob: f64,
    pub is_dynamic: bool,
    pub temporal_scale: f64,
    /// Source frame; for merged static voxels the earliest contributing frame.
    pub frame: usize,
    /// Camera depth at capture.
    pub depth: f64,
}

/// Temporal scale assigned to seeds: `2 / fps` for dynamic pixels and the
/// full clip length for static ones.
pub fn temporal_scale_for(is_dynamic: bool, fps: f64, video_length: f64) -> f64 {
    if is_dynamic {
        2.0 / fps
    } else {
        video_length
    }
}

/// Voxel edge `lambda * mean_i(mean_depth_i / focal)`.
pub fn compute_voxel_size(mean_depths: &[f64], focal: f64, lambda: f64) -> Result<f64, InitError> {
    if mean_depths.is_empty() {
        return Err(InitError::NoDepth);
    }
    if !(focal > 0.0 && focal.is_finite()) || !(lambda > 0.0 && lambda.is_finite()) {
        return Err(InitError::InvalidVoxelInput(format!("focal {focal} and lambda {lambda} must be positive")));
    }
    if let Some(d) = mean_depths.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(InitError::InvalidVoxelInput(format!("mean depth {d} must be positive")));
    }
    let footprint = mean_depths.iter().map(|d| d / focal).sum::<f64>() / mean_depths.len() as f64;
    Ok(lambda * footprint)
}

/// Back-projects every valid-depth pixel (every `stride`-th in each axis).
pub fn densify_cloud(
    bundle: &CalibratedBundle,
    masks: &[MotionMask],
    stride: u32,
) -> Result<Vec<SeedPoint>, InitError> {
    if masks.len() != bundle.len() {
        return Err(InitError::MaskCount { masks: masks.len(), frames: bundle.len() });
    }
    let k = bundle.intrinsics;
    let (w, h) = (k.width, k.height);
    let stride = stride.max(1);
    let video_length = bundle.video_length();
    let per_frame = bundle
        .frames
        .par_iter()
        .zip(masks)
        .enumerate()
        .map(|(fi, (frame, mask))| {
            let shape_check = |what, found: (u32, u32)| {
                if found == (w, h) {
                    Ok(())
                } else {
                    Err(InitError::FrameShape { frame: fi, what, expected: (w, h), found })
                }
            };
            shape_check("rgb", frame.rgb.dimensions())?;
            shape_check("mask", (mask.width, mask.height))?;
            let Some(depth) = &frame.depth else {
                warn!("frame {fi} has no depth map; skipping");
                return Ok(Vec::new());
            };
            shape_check("depth", (depth.width, depth.height))?;
            let prob = upsample_prob(&frame.motion, w, h)?;
            let mut out = Vec::with_capacity(depth.valid_count() / (stride * stride) as usize + 1);
            for row in (0..h).step_by(stride as usize) {
                for col in (0..w).step_by(stride as usize) {
                    let Some(d) = depth.get(col, row) else { continue };
                    let idx = row as usize * w as usize + col as usize;
                    let position = back_project(&pixel_center(col, row), d, &frame.pose, &k)
                        .expect("valid depth is positive and finite");
                    let px = frame.rgb.get_pixel(col, row).0;
                    let is_dynamic = mask.values[idx];
                    out.push(SeedPoint {
                        position,
                        color: px.map(|c| c as f64 / 255.0),
                        timestamp: frame.timestamp,
                        motion_prob: prob.values[idx],
                        is_dynamic,
                        temporal_scale: temporal_scale_for(is_dynamic, bundle.fps, video_length),
                        frame: fi,
                        depth: d,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, InitError>>()?;
    Ok(per_frame.concat())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneParams {
    pub voxel_size: f64,
    pub min_support: usize,
    /// Grow voxels beyond the median depth: edge = `S_v * max(1, d / median)`,
    /// with the factor floored to an integer so cells can be shared.
    pub adaptive: bool,
    /// Median depth for adaptive sizing; estimated from the input when `None`.
    pub median_depth: Option<f64>,
    /// Keep points from different source frames in separate voxels.
    pub per_frame: bool,
}

impl PruneParams {
    pub fn new(voxel_size: f64) -> Self {
        Self { voxel_size, min_support: DEFAULT_MIN_SUPPORT, adaptive: false, median_depth: None, per_frame: false }
    }
}

/// Integer voxel coordinates plus the grid it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey {
    pub frame: Option<u32>,
    /// Integer edge multiplier (1 unless adaptive sizing grew the cell).
    pub level: u32,
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

impl VoxelKey {
    pub fn edge(&self, base: f64) -> f64 {
        base * self.level as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct VoxelAccumulator {
    count: u64,
    dynamic: u64,
    position: [f64; 3],
    color: [f64; 3],
    timestamp: f64,
    motion_prob: f64,
    temporal_scale: f64,
    depth: f64,
    first_frame: usize,
}

impl VoxelAccumulator {
    fn add(&mut self, p: &SeedPoint) {
        if self.count == 0 {
            self.first_frame = p.frame;
        }
        self.count += 1;
        self.dynamic += p.is_dynamic as u64;
        for a in 0..3 {
            self.position[a] += p.position[a];
            self.color[a] += p.color[a];
        }
        self.timestamp += p.timestamp;
        self.motion_prob += p.motion_prob;
        self.temporal_scale += p.temporal_scale;
        self.depth += p.depth;
        self.first_frame = self.first_frame.min(p.frame);
    }

    fn merge(&mut self, o: &Self) {
        if o.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *o;
            return;
        }
        self.count += o.count;
        self.dynamic += o.dynamic;
        for a in 0..3 {
            self.position[a] += o.position[a];
            self.color[a] += o.color[a];
        }
        self.timestamp += o.timestamp;
        self.motion_prob += o.motion_prob;
        self.temporal_scale += o.temporal_scale;
        self.depth += o.depth;
        self.first_frame = self.first_frame.min(o.first_frame);
    }

    fn centroid(&self) -> SeedPoint {
        let n = self.count as f64;
        SeedPoint {
            position: Vector3::new(self.position[0] / n, self.position[1] / n, self.position[2] / n),
            color: self.color.map(|c| (c / n).clamp(0.0, 1.0)),
            timestamp: self.timestamp / n,
            motion_prob: self.motion_prob / n,
            // Ties go to dynamic.
            is_dynamic: 2 * self.dynamic >= self.count,
            temporal_scale: self.temporal_scale / n,
            frame: self.first_frame,
            depth: self.depth / n,
        }
    }
}

/// Median depth estimated from a log-spaced histogram (bounded memory).
pub fn approximate_median_depth(points: &[SeedPoint]) -> Option<f64> {
    const BINS: usize = 4096;
    let (lo, hi) = points
        .iter()
        .map(|p| p.depth)
        .filter(|d| *d > 0.0 && d.is_finite())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if !lo.is_finite() {
        return None;
    }
    if hi <= lo * (1.0 + 1e-12) {
        return Some(lo);
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let bin = |d: f64| (((d.ln() - llo) / (lhi - llo) * BINS as f64) as usize).min(BINS - 1);
    let mut hist = vec![0u64; BINS];
    let mut n = 0u64;
    for p in points.iter().filter(|p| p.depth > 0.0 && p.depth.is_finite()) {
        hist[bin(p.depth)] += 1;
        n += 1;
    }
    let mut acc = 0;
    for (b, c) in hist.iter().enumerate() {
        acc += c;
        if 2 * acc >= n {
            return Some((llo + (b as f64 + 0.5) / BINS as f64 * (lhi - llo)).exp());
        }
    }
    Some(hi)
}

/// Replaces all points sharing a voxel by their attribute-averaged centroid,
/// dropping voxels with fewer than `min_support` points. Output is sorted by
/// voxel key, so it is independent of input order and thread count.
pub fn grid_prune(points: &[SeedPoint], params: &PruneParams) -> Vec<SeedPoint> {
    assert!(params.voxel_size > 0.0, "voxel size must be positive");
    let min_support = params.min_support.max(1) as u64;
    let median = if params.adaptive {
        params.median_depth.or_else(|| approximate_median_depth(points))
    } else {
        None
    };
    let key_of = |p: &SeedPoint| voxel_key(p, params, median);
    let shards: Vec<HashMap<VoxelKey, VoxelAccumulator>> = points
        .par_chunks(PRUNE_CHUNK)
        .map(|chunk| {
            let mut map: HashMap<VoxelKey, VoxelAccumulator> = HashMap::new();
            for p in chunk {
                map.entry(key_of(p)).or_default().add(p);
            }
            map
        })
        .collect();
    let mut merged: HashMap<VoxelKey, VoxelAccumulator> = HashMap::new();
    for shard in &shards {
        for (k, acc) in shard {
            merged.entry(*k).or_default().merge(acc);
        }
    }
    drop(shards);
    let mut cells: Vec<(VoxelKey, VoxelAccumulator)> =
        merged.into_iter().filter(|(_, a)| a.count >= min_support).collect();
    cells.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    cells.iter().map(|(_, a)| a.centroid()).collect()
}

/// Voxel key of a pruned point for the given parameters (for inspection).
pub fn voxel_key(p: &SeedPoint, params: &PruneParams, median_depth: Option<f64>) -> VoxelKey {
    let level = match median_depth {
        Some(m) if params.adaptive && m > 0.0 => (p.depth / m).max(1.0).floor().min(u32::MAX as f64) as u32,
        _ => 1,
    };
    let edge = params.voxel_size * level as f64;
    VoxelKey {
        frame: params.per_frame.then_some(p.frame as u32),
        level,
        ix: (p.position.x / edge).floor() as i64,
        iy: (p.position.y / edge).floor() as i64,
        iz: (p.position.z / edge).floor() as i64,
    }
}

/// Distance from each point to its `k`-th nearest other point, capped at
/// `max_dist` (returned when fewer than `k` neighbours lie within it).
pub fn kth_neighbor_distances(points: &[Vector3<f64>], k: usize, max_dist: f64) -> Vec<f64> {
    assert!(k >= 1 && max_dist > 0.0);
    let cell = |p: &Vector3<f64>| {
        ((p.x / max_dist).floor() as i64, (p.y / max_dist).floor() as i64, (p.z / max_dist).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i as u32);
    }
    let max2 = max_dist * max_dist;
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (cx, cy, cz) = cell(p);
            // k smallest squared distances, ascending.
            let mut best = vec![f64::INFINITY; k];
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(ids) = grid.get(&(cx + dx, cy + dy, cz + dz)) else { continue };
                        for &j in ids {
                            if j as usize == i {
                                continue;
                            }
                            let d2 = (points[j as usize] - p).norm_squared();
                            if d2 < best[k - 1] {
                                let pos = best.partition_point(|&b| b <= d2);
                                best.insert(pos, d2);
                                best.pop();
                            }
                        }
                    }
                }
            }
            best[k - 1].min(max2).sqrt()
        })
        .collect()
}

/// Everything `initialize_model` needs beyond the seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInitParams {
    pub mode: InitMode,
    pub fps: f64,
    pub video_length: f64,
    /// Voxel edge of the static grid; clamps static initial scales.
    pub static_voxel: f64,
    /// Voxel edge used to clamp dynamic initial scales.
    pub dynamic_voxel: f64,
    pub initial_opacity: f64,
    /// Override every temporal scale (disables motion-aware scaling).
    pub uniform_temporal_scale: Option<f64>,
}

/// One Gaussian per seed, static seeds first.
///
/// The spatial scale is the distance to the third-nearest seed clamped to
/// `[0.5, 4] x voxel`. Static seeds are matched against static seeds, dynamic
/// seeds against dynamic seeds from the same source frame.
pub fn initialize_model(
    static_seeds: &[SeedPoint],
    dynamic_seeds: &[SeedPoint],
    params: &ModelInitParams,
) -> Result<GaussianModel4D, InitError> {
    if static_seeds.is_empty() && dynamic_seeds.is_empty() {
        return Err(InitError::EmptySeeds);
    }
    let scales = |seeds: &[SeedPoint], voxel: f64| -> Vec<f64> {
        let pos: Vec<Vector3<f64>> = seeds.iter().map(|s| s.position).collect();
        kth_neighbor_distances(&pos, SCALE_NEIGHBOR_RANK, 4.0 * voxel)
            .into_iter()
            .map(|d| d.clamp(0.5 * voxel, 4.0 * voxel))
            .collect()
    };
    let static_scales = scales(static_seeds, params.static_voxel);

    // Dynamic neighbours are searched within each source frame.
    let mut dynamic_scales = vec![0.0; dynamic_seeds.len()];
    let mut by_frame: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, s) in dynamic_seeds.iter().enumerate() {
        by_frame.entry(s.frame).or_default().push(i);
    }
    let mut frames: Vec<_> = by_frame.into_iter().collect();
    frames.sort_unstable_by_key(|(f, _)| *f);
    for (_, ids) in &frames {
        let group: Vec<SeedPoint> = ids.iter().map(|&i| dynamic_seeds[i]).collect();
        for (&i, s) in ids.iter().zip(scales(&group, params.dynamic_voxel)) {
            dynamic_scales[i] = s;
        }
    }

    let mut model = GaussianModel4D::empty(params.video_length, params.fps, params.mode);
    let seeds = static_seeds.iter().zip(static_scales).chain(dynamic_seeds.iter().zip(dynamic_scales));
    for (seed, scale) in seeds {
        let scale_t = params.uniform_temporal_scale.unwrap_or(seed.temporal_scale);
        model.push(&Gaussian4D {
            mean: [seed.position.x, seed.position.y, seed.position.z, seed.timestamp],
            scale,
            scale_t,
            opacity: params.initial_opacity,
            rgb: seed.color.map(|c| c.clamp(0.0, 1.0)),
            is_dynamic: seed.is_dynamic,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seed_at(x: f64, y: f64, z: f64) -> SeedPoint {
        SeedPoint {
            position: Vector3::new(x, y, z),
            color: [0.5; 3],
            timestamp: 0.0,
            motion_prob: 0.0,
            is_dynamic: false,
            temporal_scale: 1.0,
            frame: 0,
            depth: z,
        }
    }

    #[test]
    fn voxel_size_examples() {
        let s = compute_voxel_size(&[2.0; 10], 500.0, 4.0).unwrap();
        assert!((s - 0.016).abs() < 1e-15);
        assert_eq!(compute_voxel_size(&[500.0], 500.0, 1.0).unwrap(), 1.0);
        let a = compute_voxel_size(&[1.0, 3.0, 7.5], 321.0, 1.5).unwrap();
        let b = compute_voxel_size(&[1.0, 3.0, 7.5], 321.0, 3.0).unwrap();
        assert_eq!(2.0 * a, b);
        assert_eq!(compute_voxel_size(&[], 500.0, 1.0), Err(InitError::NoDepth));
        assert!(compute_voxel_size(&[1.0, 0.0], 500.0, 1.0).is_err());
        assert!(compute_voxel_size(&[1.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn cube_corners_collapse_to_centroid() {
        let s = 1.0;
        let e = 0.9 * s;
        let base = Vector3::new(0.05, 0.05, 0.05);
        let mut pts = vec![];
        for i in 0..8 {
            let off = Vector3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64) * e;
            pts.push(seed_at(base.x + off.x, base.y + off.y, base.z + off.z));
        }
        let out = grid_prune(&pts, &PruneParams::new(s));
        assert_eq!(out.len(), 1);
        let c = base + Vector3::repeat(e / 2.0);
        assert!((out[0].position - c).norm() < 1e-12);
    }

    #[test]
    fn isolated_points_are_outliers() {
        let pts = vec![seed_at(0.5, 0.5, 0.5), seed_at(5.5, 0.5, 0.5), seed_at(0.5, 9.5, 0.5)];
        let params = PruneParams { min_support: 2, ..PruneParams::new(1.0) };
        assert!(grid_prune(&pts, &params).is_empty());
        let keep_all = PruneParams { min_support: 1, ..PruneParams::new(1.0) };
        assert_eq!(grid_prune(&pts, &keep_all).len(), 3);
        assert!(grid_prune(&[], &params).is_empty());
    }

    #[test]
    fn attributes_are_averaged_and_majority_breaks_ties_dynamic() {
        let mut a = seed_at(0.1, 0.1, 0.1);
        a.color = [0.0, 0.2, 1.0];
        a.timestamp = 0.0;
        a.temporal_scale = 2.0;
        a.motion_prob = 0.0;
        let mut b = seed_at(0.3, 0.3, 0.3);
        b.color = [1.0, 0.4, 0.0];
        b.timestamp = 1.0;
        b.temporal_scale = 0.0;
        b.motion_prob = 1.0;
        b.is_dynamic = true;
        b.frame = 3;
        let out = grid_prune(&[a, b], &PruneParams::new(1.0));
        assert_eq!(out.len(), 1);
        let p = out[0];
        assert_eq!(p.color, [0.5, 0.30000000000000004, 0.5]);
        assert_eq!(p.timestamp, 0.5);
        assert_eq!(p.temporal_scale, 1.0);
        assert_eq!(p.motion_prob, 0.5);
        assert!(p.is_dynamic);
        assert_eq!(p.frame, 0);
    }

    #[test]
    fn per_frame_grids_do_not_merge_frames() {
        let mut a = seed_at(0.1, 0.1, 0.1);
        let mut b = seed_at(0.2, 0.2, 0.2);
        a.frame = 0;
        b.frame = 1;
        let params = PruneParams { min_support: 1, per_frame: true, ..PruneParams::new(1.0) };
        assert_eq!(grid_prune(&[a, b], &params).len(), 2);
        assert_eq!(grid_prune(&[a, b], &PruneParams { per_frame: false, ..params }).len(), 1);
    }

    #[test]
    fn adaptive_cells_grow_with_depth() {
        // Pairs of points 1.5 apart at depth 1 (level 1) and depth 4 (level 4).
        let mut pts = vec![];
        for (z, y) in [(1.0, 0.2), (4.0, 10.2)] {
            for x in [0.2, 1.7] {
                let mut p = seed_at(x, y, 0.2);
                p.depth = z;
                pts.push(p);
            }
        }
        let fixed = PruneParams { min_support: 1, ..PruneParams::new(1.0) };
        assert_eq!(grid_prune(&pts, &fixed).len(), 4);
        let adaptive = PruneParams { adaptive: true, median_depth: Some(1.0), ..fixed };
        // Near pair stays split, far pair shares one 4-unit cell.
        assert_eq!(grid_prune(&pts, &adaptive).len(), 3);
    }

    #[test]
    fn approximate_median() {
        let pts: Vec<_> = (1..=1001).map(|i| {
            let mut p = seed_at(0.0, 0.0, 0.0);
            p.depth = i as f64 * 0.01;
            p
        }).collect();
        let m = approximate_median_depth(&pts).unwrap();
        assert!((m - 5.01).abs() / 5.01 < 2e-3, "{m}");
    }

    #[test]
    fn kth_neighbor_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vector3<f64>> = (0..400).map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let cap = 0.2;
        let fast = kth_neighbor_distances(&pts, 3, cap);
        for (i, p) in pts.iter().enumerate() {
            let mut d: Vec<f64> = pts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| (q - p).norm()).collect();
            d.sort_by(f64::total_cmp);
            assert!((fast[i] - d[2].min(cap)).abs() < 1e-12);
        }
    }

    fn random_cloud(n: usize, seed: u64) -> Vec<SeedPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let mut p = seed_at(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.5..3.0));
                p.color = [rng.gen(), rng.gen(), rng.gen()];
                p.timestamp = rng.gen_range(0.0..2.0);
                p.motion_prob = rng.gen();
                p.is_dynamic = rng.gen_bool(0.3);
                p.temporal_scale = rng.gen_range(0.05..2.0);
                p.frame = i % 7;
                p
            })
            .collect()
    }

    #[test]
    fn pruning_is_permutation_invariant_and_bounded() {
        let pts = random_cloud(200_000, 1);
        let params = PruneParams { min_support: 1, ..PruneParams::new(0.37) };
        let a = grid_prune(&pts, &params);
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
        let b = grid_prune(&shuffled, &params);
        assert_eq!(a.len(), b.len());
        assert!(a.len() <= pts.len());
        // min_support = 1 keeps exactly one point per occupied voxel.
        let occupied: std::collections::HashSet<_> = pts.iter().map(|p| voxel_key(p, &params, None)).collect();
        assert_eq!(a.len(), occupied.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x.position - y.position).norm() < 1e-6);
            assert!((x.timestamp - y.timestamp).abs() < 1e-6);
            assert!((x.temporal_scale - y.temporal_scale).abs() < 1e-6);
            for c in 0..3 {
                assert!((x.color[c] - y.color[c]).abs() < 1e-6);
            }
            assert_eq!(x.is_dynamic, y.is_dynamic);
        }
        // Centroids lie inside their own voxel.
        for p in &a {
            let k = voxel_key(p, &params, None);
            let lo = Vector3::new(k.ix as f64, k.iy as f64, k.iz as f64) * params.voxel_size;
            for ax in 0..3 {
                assert!(p.position[ax] >= lo[ax] - 1e-9 && p.position[ax] <= lo[ax] + params.voxel_size + 1e-9);
            }
        }
    }

    fn init_params() -> ModelInitParams {
        ModelInitParams {
            mode: InitMode::Lite,
            fps: 30.0,
            video_length: 2.0,
            static_voxel: 0.1,
            dynamic_voxel: 0.1,
            initial_opacity: DEFAULT_INITIAL_OPACITY,
            uniform_temporal_scale: None,
        }
    }

    #[test]
    fn single_static_seed() {
        let mut s = seed_at(0.0, 0.0, 1.0);
        s.temporal_scale = 2.0;
        s.color = [0.2, 0.4, 0.6];
        let m = initialize_model(&[s], &[], &init_params()).unwrap();
        assert_eq!(m.len(), 1);
        let g = m.get(0);
        assert!((g.scale_t - 2.0).abs() < 1e-12);
        assert_eq!(g.rgb, [0.2, 0.4, 0.6]);
        assert!((g.opacity - 0.1).abs() < 1e-12);
        // Lone seed: scale clamps to the upper bound.
        assert!((g.scale - 0.4).abs() < 1e-12);
        assert_eq!(initialize_model(&[], &[], &init_params()), Err(InitError::EmptySeeds));
    }

    #[test]
    fn uniform_temporal_scale_override() {
        let seeds = random_cloud(50, 4);
        let params = ModelInitParams { uniform_temporal_scale: Some(1.0 / 15.0), ..init_params() };
        let m = initialize_model(&seeds, &[], &params).unwrap();
        assert!(m.log_scales_t.iter().all(|&l| (l.exp() - 1.0 / 15.0).abs() < 1e-12));
    }

    #[test]
    fn scales_respect_clamp() {
        let seeds = random_cloud(2000, 5);
        let m = initialize_model(&seeds, &[], &init_params()).unwrap();
        for i in 0..m.len() {
            let s = m.get(i).scale;
            assert!(s >= 0.05 - 1e-12 && s <= 0.4 + 1e-12);
        }
    }
}
