//! Single-channel PFM ("Pf") for depth and motion maps.

use std::path::Path;

use crate::error::FormatError;

/// A decoded grayscale PFM, rows top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

/// Little-endian PFM bytes; rows are stored bottom to top.
pub fn encode_pfm(width: u32, height: u32, data: &[f32]) -> Vec<u8> {
    assert_eq!(data.len(), width as usize * height as usize, "pfm buffer size");
    let header = format!("Pf\n{width} {height}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + 4 * data.len());
    out.extend_from_slice(header.as_bytes());
    for row in (0..height as usize).rev() {
        for v in &data[row * width as usize..(row + 1) * width as usize] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(path: &Path, width: u32, height: u32, data: &[f32]) -> Result<(), FormatError> {
    std::fs::write(path, encode_pfm(width, height, data)).map_err(|source| FormatError::Io { path: path.into(), source })
}

pub fn read_pfm(path: &Path) -> Result<PfmImage, FormatError> {
    let bytes = super::read_file(path)?;
    decode_pfm(&bytes, path)
}

/// Parses PFM bytes; errors carry the byte offset of the problem.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<PfmImage, FormatError> {
    let bad = |offset: usize, message: String| FormatError::Malformed {
        path: path.into(),
        format: "PFM",
        offset: offset as u64,
        message,
    };
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<(usize, String), FormatError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad(start, format!("unexpected end of header, expected {what}")));
        }
        Ok((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()))
    };
    let (at, magic) = token("magic")?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(bad(at, "three-channel PFM where a single channel is expected".into())),
        other => return Err(bad(at, format!("bad magic {other:?}"))),
    }
    let (at, w) = token("width")?;
    let width: u32 = w.parse().map_err(|_| bad(at, format!("bad width {w:?}")))?;
    let (at, h) = token("height")?;
    let height: u32 = h.parse().map_err(|_| bad(at, format!("bad height {h:?}")))?;
    let (at, s) = token("scale")?;
    let scale: f64 = s.parse().map_err(|_| bad(at, format!("bad scale {s:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad(at, format!("scale {scale} must be non-zero")));
    }
    // Exactly one whitespace byte separates the header from the data.
    if pos >= bytes.len() {
        return Err(bad(pos, "missing data section".into()));
    }
    let data_start = pos + 1;
    let n = width as usize * height as usize;
    let expected_end = data_start + 4 * n;
    if bytes.len() < expected_end {
        return Err(bad(
            bytes.len(),
            format!("truncated data: {} of {} bytes", bytes.len().saturating_sub(data_start), 4 * n),
        ));
    }
    if bytes.len() > expected_end {
        return Err(bad(expected_end, format!("{} trailing bytes", bytes.len() - expected_end)));
    }
    let little = scale < 0.0;
    let mut data = vec![0f32; n];
    for (i, chunk) in bytes[data_start..expected_end].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row_from_bottom, col) = (i / width as usize, i % width as usize);
        data[(height as usize - 1 - row_from_bottom) * width as usize + col] = v;
    }
    Ok(PfmImage { width, height, data })
}
