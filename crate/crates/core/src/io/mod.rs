//! File formats: bundle manifests, PFM maps, checkpoints, PLY and PNG exports.

pub mod checkpoint;
pub mod manifest;
pub mod pfm;
pub mod ply;

use std::path::Path;

use crate::error::FormatError;
use crate::image::Image;
use crate::motion_mask::MotionMask;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use manifest::{load_bundle, save_bundle, Manifest};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => FormatError::Missing { path: path.into() },
        _ => FormatError::Io { path: path.into(), source },
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    std::fs::write(path, bytes).map_err(|source| FormatError::Io { path: path.into(), source })
}

/// 8-bit PNG of a rendered image.
pub fn save_png(img: &Image, path: &Path) -> Result<(), FormatError> {
    img.to_rgb8().save_with_format(path, image::ImageFormat::Png).map_err(|source| FormatError::Image {
        path: path.into(),
        source,
    })
}

/// Grayscale PNG of a mask, dynamic pixels white.
pub fn save_mask_png(mask: &MotionMask, path: &Path) -> Result<(), FormatError> {
    let buf = mask.values.iter().map(|v| if *v { 255 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(mask.width, mask.height, buf).expect("mask buffer size");
    img.save_with_format(path, image::ImageFormat::Png).map_err(|source| FormatError::Image { path: path.into(), source })
}
