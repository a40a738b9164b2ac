//! Static/dynamic segmentation from low-resolution motion probability maps.
//!
//! The sequence is padded with pseudo-frames at both ends, every map is
//! bilinearly upsampled to the frame resolution, one Otsu threshold is chosen
//! over the pooled histogram of the padded sequence, and each real frame is
//! thresholded against it.

use log::warn;
use rayon::prelude::*;

use crate::error::MaskError;

/// Default number of histogram bins for Otsu.
pub const DEFAULT_BINS: usize = 256;
/// Default number of pseudo-frames added at each end.
pub const DEFAULT_PSEUDO_FRAMES: usize = 2;
/// Default number of boundary frames averaged into each pseudo-frame.
pub const DEFAULT_PSEUDO_WINDOW: usize = 5;

/// Low-resolution motion probabilities for one frame.
///
/// `frame` is `None` for pseudo-frames, which never produce a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionProbMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
    pub frame: Option<usize>,
}

impl MotionProbMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>, frame: usize) -> Result<Self, MaskError> {
        if width == 0 || height == 0 || values.is_empty() {
            return Err(MaskError::EmptyMap);
        }
        assert_eq!(values.len(), width as usize * height as usize, "motion map buffer size");
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MaskError::OutOfRange(*v));
        }
        Ok(Self { width, height, values, frame: Some(frame) })
    }

    pub fn shape(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

/// Full-resolution probability field.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbGrid {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

/// Per-pixel dynamic flags (`true` = dynamic) for one real frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionMask {
    pub width: u32,
    pub height: u32,
    pub values: Vec<bool>,
    pub frame: usize,
}

impl MotionMask {
    pub fn all_static(width: u32, height: u32, frame: usize) -> Self {
        Self { width, height, values: vec![false; width as usize * height as usize], frame }
    }

    pub fn dynamic_count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> bool {
        self.values[row as usize * self.width as usize + col as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskParams {
    pub pseudo_frames: usize,
    pub pseudo_window: usize,
    pub bins: usize,
    /// Disk dilation radius applied to each mask, in pixels.
    pub dilate_px: u32,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            pseudo_frames: DEFAULT_PSEUDO_FRAMES,
            pseudo_window: DEFAULT_PSEUDO_WINDOW,
            bins: DEFAULT_BINS,
            dilate_px: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub threshold: f64,
    pub masks: Vec<MotionMask>,
}

/// Align-corners bilinear upsampling of a motion map to `width x height`.
pub fn upsample_prob(map: &MotionProbMap, width: u32, height: u32) -> Result<ProbGrid, MaskError> {
    if map.width == 0 || map.height == 0 || map.values.is_empty() {
        return Err(MaskError::EmptyMap);
    }
    if width < map.width || height < map.height {
        return Err(MaskError::TargetTooSmall { from: map.shape(), target: (width, height) });
    }
    let sw = map.width as usize;
    let xs = axis_weights(map.width, width);
    let ys = axis_weights(map.height, height);
    let mut values = Vec::with_capacity(width as usize * height as usize);
    for &(y0, y1, wy) in &ys {
        let r0 = &map.values[y0 * sw..(y0 + 1) * sw];
        let r1 = &map.values[y1 * sw..(y1 + 1) * sw];
        for &(x0, x1, wx) in &xs {
            let top = r0[x0] as f64 * (1.0 - wx) + r0[x1] as f64 * wx;
            let bottom = r1[x0] as f64 * (1.0 - wx) + r1[x1] as f64 * wx;
            values.push((top * (1.0 - wy) + bottom * wy).clamp(0.0, 1.0));
        }
    }
    Ok(ProbGrid { width, height, values })
}

/// Source taps and blend weight for every destination coordinate.
fn axis_weights(src: u32, dst: u32) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            if src == 1 || dst == 1 {
                return (0, 0, 0.0);
            }
            let x = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
            let x0 = (x.floor() as usize).min(src as usize - 1);
            let x1 = (x0 + 1).min(src as usize - 1);
            (x0, x1, x - x0 as f64)
        })
        .collect()
}

#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

/// Histogram of probabilities over `[0, 1]`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<u64> {
    let mut h = vec![0u64; bins];
    for &v in values {
        h[bin_of(v, bins)] += 1;
    }
    h
}

/// Otsu split on a histogram: the bin index `k` such that bins `< k` form the
/// background class. `None` when every sample falls in a single bin.
///
/// Class means are taken at bin indices; ties resolve to the lowest `k`.
pub fn otsu_split(hist: &[u64]) -> Option<usize> {
    let n: u64 = hist.iter().sum();
    let total: i128 = hist.iter().enumerate().map(|(b, &c)| b as i128 * c as i128).sum();
    let mut best: Option<(usize, f64)> = None;
    let (mut n0, mut s0) = (0u64, 0i128);
    for k in 1..hist.len() {
        n0 += hist[k - 1];
        s0 += (k - 1) as i128 * hist[k - 1] as i128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // n^2 * between-class variance = (n * S0 - n0 * S)^2 / (n0 * n1)
        let d = (n as i128 * s0 - n0 as i128 * total) as f64;
        let score = d * d / (n0 as f64 * n1 as f64);
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| k)
}

/// Otsu threshold over probabilities in `[0, 1]`. A value is dynamic when
/// `value >= threshold`.
///
/// Degenerate input (all samples in one bin) yields a threshold above the
/// maximum, i.e. an all-static mask.
pub fn otsu_threshold(values: &[f64], bins: usize) -> Result<f64, MaskError> {
    if bins < 2 {
        return Err(MaskError::TooFewBins(bins));
    }
    Ok(threshold_from_histogram(&histogram(values, bins), values.iter().copied().fold(0.0, f64::max)))
}

fn threshold_from_histogram(hist: &[u64], max_value: f64) -> f64 {
    match otsu_split(hist) {
        Some(k) => k as f64 / hist.len() as f64,
        None => {
            warn!("motion probabilities are constant; every pixel is treated as static");
            max_value.max(1.0) + 1.0
        }
    }
}

fn mean_map(maps: &[MotionProbMap]) -> MotionProbMap {
    let n = maps.len() as f64;
    let len = maps[0].values.len();
    let values = (0..len)
        .map(|i| (maps.iter().map(|m| m.values[i] as f64).sum::<f64>() / n) as f32)
        .collect();
    MotionProbMap { width: maps[0].width, height: maps[0].height, values, frame: None }
}

/// Adds `k` pseudo-frames at each end. Each is the element-wise mean of the
/// nearest `min(window, N)` real maps at that end.
pub fn pad_pseudo_frames(
    seq: &[MotionProbMap],
    k: usize,
    window: usize,
) -> Result<Vec<MotionProbMap>, MaskError> {
    if seq.is_empty() {
        return Err(MaskError::EmptySequence);
    }
    if k == 0 {
        return Ok(seq.to_vec());
    }
    let w = window.clamp(1, seq.len());
    let head = mean_map(&seq[..w]);
    let tail = mean_map(&seq[seq.len() - w..]);
    let mut out = Vec::with_capacity(seq.len() + 2 * k);
    out.extend(std::iter::repeat(head).take(k));
    out.extend_from_slice(seq);
    out.extend(std::iter::repeat(tail).take(k));
    Ok(out)
}

/// Full mask pipeline for a sequence of motion maps.
pub fn compute_masks(
    seq: &[MotionProbMap],
    width: u32,
    height: u32,
    params: &MaskParams,
) -> Result<MaskSet, MaskError> {
    let first = seq.first().ok_or(MaskError::EmptySequence)?;
    for (index, m) in seq.iter().enumerate() {
        if m.shape() != first.shape() {
            return Err(MaskError::ShapeMismatch { index, expected: first.shape(), found: m.shape() });
        }
    }
    if params.bins < 2 {
        return Err(MaskError::TooFewBins(params.bins));
    }
    let padded = pad_pseudo_frames(seq, params.pseudo_frames, params.pseudo_window)?;

    // Pass 1: pooled histogram over the padded sequence.
    let partial: Vec<(Vec<u64>, f64)> = padded
        .par_iter()
        .map(|m| {
            let grid = upsample_prob(m, width, height)?;
            let max = grid.values.iter().copied().fold(0.0, f64::max);
            Ok((histogram(&grid.values, params.bins), max))
        })
        .collect::<Result<_, MaskError>>()?;
    let mut pooled = vec![0u64; params.bins];
    let mut max_value = 0.0f64;
    for (h, m) in &partial {
        pooled.iter_mut().zip(h).for_each(|(a, b)| *a += b);
        max_value = max_value.max(*m);
    }
    let threshold = threshold_from_histogram(&pooled, max_value);

    // Pass 2: threshold the real frames.
    let masks = seq
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let grid = upsample_prob(m, width, height)?;
            let mut mask = MotionMask {
                width,
                height,
                values: grid.values.iter().map(|&v| v >= threshold).collect(),
                frame: m.frame.unwrap_or(i),
            };
            if params.dilate_px > 0 {
                mask = dilate(&mask, params.dilate_px);
            }
            Ok(mask)
        })
        .collect::<Result<Vec<_>, MaskError>>()?;
    Ok(MaskSet { threshold, masks })
}

/// Disk dilation of a mask.
pub fn dilate(mask: &MotionMask, radius: u32) -> MotionMask {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let r = radius as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let mut out = mask.values.clone();
    for y in 0..h {
        for x in 0..w {
            if !mask.values[(y * w + x) as usize] {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    out[(ny * w + nx) as usize] = true;
                }
            }
        }
    }
    MotionMask { values: out, ..mask.clone() }
}
