//! On-disk bundle layout: `manifest.json` plus per-frame PNG, depth PFM and
//! motion PFM files. See `docs/formats.md`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pfm::{read_pfm, write_pfm};
use super::{read_file, write_file};
use crate::bundle::{CalibratedBundle, Frame, MotionEncoding, PoseConvention};
use crate::error::FormatError;
use crate::gaussian::sigmoid;
use crate::geometry::{DepthMap, Intrinsics, PoseSE3};
use crate::motion_mask::MotionProbMap;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifestIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub rgb: String,
    /// `null` for frames without depth.
    pub depth: Option<String>,
    pub motion: String,
    /// Row-major 4x4 in the manifest's `pose_convention`.
    pub pose: [f64; 16],
    /// Seconds; defaults to `index / fps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub n_frames: usize,
    pub intrinsics: ManifestIntrinsics,
    pub pose_convention: PoseConvention,
    #[serde(default)]
    pub motion_encoding: MotionEncoding,
    pub frames: Vec<ManifestFrame>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let bytes = read_file(path)?;
        serde_json::from_slice(&bytes).map_err(|source| FormatError::Json { path: path.into(), source })
    }

    fn validate(&self, path: &Path) -> Result<(), FormatError> {
        let invalid = |message: String| Err(FormatError::Invalid { path: path.into(), message });
        if self.version != MANIFEST_VERSION {
            return invalid(format!("manifest version {} is not supported (expected {MANIFEST_VERSION})", self.version));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return invalid(format!("fps {} must be positive", self.fps));
        }
        if self.n_frames != self.frames.len() {
            return invalid(format!("n_frames is {} but {} frames are listed", self.n_frames, self.frames.len()));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, f) in self.frames.iter().enumerate() {
            let t = f.t.unwrap_or(i as f64 / self.fps);
            if !t.is_finite() || t <= prev {
                return invalid(format!("timestamps must strictly increase: frame {i} has t = {t} after {prev}"));
            }
            prev = t;
        }
        Ok(())
    }
}

fn image_error(path: &Path) -> impl FnOnce(image::ImageError) -> FormatError + '_ {
    move |source| FormatError::Image { path: path.into(), source }
}

fn load_frame(dir: &Path, m: &Manifest, i: usize) -> Result<Frame, FormatError> {
    let entry = &m.frames[i];
    let (w, h) = (m.width, m.height);
    let mismatch = |path: &Path, what: &str, found: (u32, u32), expected: (u32, u32)| FormatError::Invalid {
        path: path.into(),
        message: format!("frame {i} {what} is {}x{}, expected {}x{}", found.0, found.1, expected.0, expected.1),
    };

    let rgb_path = dir.join(&entry.rgb);
    let bytes = read_file(&rgb_path)?;
    let rgb = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(image_error(&rgb_path))?
        .to_rgb8();
    if rgb.dimensions() != (w, h) {
        return Err(mismatch(&rgb_path, "rgb", rgb.dimensions(), (w, h)));
    }

    let depth = match &entry.depth {
        None => None,
        Some(rel) => {
            let path = dir.join(rel);
            let pfm = read_pfm(&path)?;
            if (pfm.width, pfm.height) != (w, h) {
                return Err(mismatch(&path, "depth", (pfm.width, pfm.height), (w, h)));
            }
            Some(DepthMap::from_values(w, h, pfm.data).map_err(|e| FormatError::Invalid {
                path: path.clone(),
                message: e.to_string(),
            })?)
        }
    };

    let motion_path = dir.join(&entry.motion);
    let pfm = read_pfm(&motion_path)?;
    let shape = crate::bundle::motion_shape(w, h);
    if (pfm.width, pfm.height) != shape {
        return Err(mismatch(&motion_path, "motion map", (pfm.width, pfm.height), shape));
    }
    let values = match m.motion_encoding {
        MotionEncoding::Probability => pfm.data,
        MotionEncoding::Logit => pfm.data.iter().map(|v| sigmoid(*v as f64) as f32).collect(),
    };
    let motion = MotionProbMap::new(shape.0, shape.1, values, i)
        .map_err(|e| FormatError::Invalid { path: motion_path.clone(), message: e.to_string() })?;

    let raw = PoseSE3::from_row_major(&entry.pose).map_err(|e| FormatError::Invalid {
        path: dir.join(MANIFEST_FILE),
        message: format!("frame {i} pose: {e}"),
    })?;
    let pose = match m.pose_convention {
        PoseConvention::CameraToWorld => raw,
        PoseConvention::WorldToCamera => raw.inverse(),
    };
    Ok(Frame { rgb, depth, pose, motion, timestamp: entry.t.unwrap_or(i as f64 / m.fps) })
}

/// Loads and validates the bundle in `dir`. Frames are read in parallel.
pub fn load_bundle(dir: &Path) -> Result<CalibratedBundle, FormatError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let m = Manifest::read(&manifest_path)?;
    m.validate(&manifest_path)?;
    let mi = m.intrinsics;
    let intrinsics = Intrinsics::new(mi.fx, mi.fy, mi.cx, mi.cy, m.width, m.height)
        .map_err(|e| FormatError::Invalid { path: manifest_path.clone(), message: e.to_string() })?;
    // Fail on the first missing file in frame order, before decoding anything.
    for f in &m.frames {
        for rel in [Some(&f.rgb), f.depth.as_ref(), Some(&f.motion)].into_iter().flatten() {
            let p = dir.join(rel);
            if !p.is_file() {
                return Err(FormatError::Missing { path: p });
            }
        }
    }
    let frames = (0..m.frames.len())
        .into_par_iter()
        .map(|i| load_frame(dir, &m, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CalibratedBundle { fps: m.fps, intrinsics, frames })
}

/// Relative file names used by `save_bundle` for frame `i`.
pub fn frame_paths(i: usize) -> (String, String, String) {
    (format!("rgb/{i:05}.png"), format!("depth/{i:05}.pfm"), format!("motion/{i:05}.pfm"))
}

/// PNG bytes of an RGB image (default encoder settings).
pub fn encode_png(img: &image::RgbImage) -> Result<Vec<u8>, image::ImageError> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Writes `bundle` under `dir` with camera-to-world poses and probability-encoded
/// motion maps. Explicit timestamps are always written.
pub fn save_bundle(bundle: &CalibratedBundle, dir: &Path) -> Result<Manifest, FormatError> {
    for sub in ["rgb", "depth", "motion"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|source| FormatError::Io { path: p, source })?;
    }
    let entries = bundle
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let (rgb, depth, motion) = frame_paths(i);
            let rgb_path = dir.join(&rgb);
            write_file(&rgb_path, &encode_png(&f.rgb).map_err(image_error(&rgb_path))?)?;
            let depth = match &f.depth {
                Some(d) => {
                    write_pfm(&dir.join(&depth), d.width, d.height, &d.values)?;
                    Some(depth)
                }
                None => None,
            };
            write_pfm(&dir.join(&motion), f.motion.width, f.motion.height, &f.motion.values)?;
            Ok(ManifestFrame { rgb, depth, motion, pose: f.pose.to_row_major(), t: Some(f.timestamp) })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    let k = bundle.intrinsics;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        fps: bundle.fps,
        width: k.width,
        height: k.height,
        n_frames: entries.len(),
        intrinsics: ManifestIntrinsics { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy },
        pose_convention: PoseConvention::CameraToWorld,
        motion_encoding: MotionEncoding::Probability,
        frames: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|source| FormatError::Json { path: path.clone(), source })?;
    json.push(b'\n');
    write_file(&path, &json)?;
    Ok(manifest)
}

/// Every file a manifest references, relative to its directory.
pub fn referenced_files(m: &Manifest) -> Vec<PathBuf> {
    m.frames
        .iter()
        .flat_map(|f| [Some(&f.rgb), f.depth.as_ref(), Some(&f.motion)].into_iter().flatten().map(PathBuf::from))
        .collect()
}
