//! Floating-point RGB images.

use crate::error::ImageError;

/// Interleaved RGB image with `f64` channels, row-major, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0.0; width as usize * height as usize * 3] }
    }

    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        let data = (0..width as usize * height as usize).flat_map(|_| rgb).collect();
        Self { width, height, data }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize * 3, "image buffer size");
        Self { width, height, data }
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel(&self, col: u32, row: u32) -> [f64; 3] {
        let i = 3 * (row as usize * self.width as usize + col as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, col: u32, row: u32, rgb: [f64; 3]) {
        let i = 3 * (row as usize * self.width as usize + col as usize);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let data = img.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
        Self { width: img.width(), height: img.height(), data }
    }

    /// Quantises to 8 bits with round-to-nearest after clamping to `[0, 1]`.
    pub fn to_rgb8(&self) -> image::RgbImage {
        let raw = self.data.iter().map(|&v| quantize_u8(v)).collect();
        image::RgbImage::from_raw(self.width, self.height, raw).expect("buffer matches dimensions")
    }

    pub fn check_same_size(&self, other: &Image) -> Result<(), ImageError> {
        if self.size() != other.size() {
            return Err(ImageError::SizeMismatch { a: self.size(), b: other.size() });
        }
        Ok(())
    }

    /// Extracts one channel as a dense row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }
}

#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
