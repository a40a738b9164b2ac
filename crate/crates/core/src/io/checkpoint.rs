//! Binary checkpoint: little-endian, fixed-width records behind the magic
//! "I4D1". Layout is documented in `docs/formats.md`.

use std::path::Path;

use crate::error::FormatError;
use crate::gaussian::{GaussianModel4D, InitMode};

pub const MAGIC: &[u8; 4] = b"I4D1";
pub const VERSION: u32 = 1;
/// magic, version u32, count u64, video length f64, fps f64, mode u8.
pub const HEADER_BYTES: usize = 4 + 4 + 8 + 8 + 8 + 1;
/// mean f64 x4, log scale, log temporal scale, opacity logit, rgb f64 x3, dynamic u8.
pub const RECORD_BYTES: usize = 8 * 4 + 8 + 8 + 8 + 8 * 3 + 1;

pub fn encode_checkpoint(model: &GaussianModel4D) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + RECORD_BYTES * model.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.len() as u64).to_le_bytes());
    out.extend_from_slice(&model.video_length.to_le_bytes());
    out.extend_from_slice(&model.fps.to_le_bytes());
    out.push(model.mode.code());
    for i in 0..model.len() {
        for v in model.means[i] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&model.log_scales[i].to_le_bytes());
        out.extend_from_slice(&model.log_scales_t[i].to_le_bytes());
        out.extend_from_slice(&model.opacity_logits[i].to_le_bytes());
        for v in model.colors[i] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(model.dynamic[i] as u8);
    }
    out
}

pub fn save_checkpoint(model: &GaussianModel4D, path: &Path) -> Result<(), FormatError> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|source| FormatError::Io { path: path.into(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<GaussianModel4D, FormatError> {
    let bytes = super::read_file(path)?;
    decode_checkpoint(&bytes, path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N], FormatError> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(FormatError::Malformed {
                path: self.path.into(),
                format: "checkpoint",
                offset: self.bytes.len() as u64,
                message: format!("file ends while reading {what} at byte {}", self.pos),
            });
        }
        let out = self.bytes[self.pos..end].try_into().expect("length checked");
        self.pos = end;
        Ok(out)
    }

    fn f64(&mut self, what: &str) -> Result<f64, FormatError> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<GaussianModel4D, FormatError> {
    let malformed = |offset: usize, message: String| FormatError::Malformed {
        path: path.into(),
        format: "checkpoint",
        offset: offset as u64,
        message,
    };
    let mut r = Reader { bytes, pos: 0, path };
    let magic = r.take::<4>("magic")?;
    if &magic != MAGIC {
        return Err(malformed(0, format!("bad magic {:?}", String::from_utf8_lossy(&magic))));
    }
    let version = u32::from_le_bytes(r.take::<4>("version")?);
    if version != VERSION {
        return Err(FormatError::Version { path: path.into(), found: version, expected: VERSION });
    }
    let count = u64::from_le_bytes(r.take::<8>("count")?);
    let video_length = r.f64("video length")?;
    let fps = r.f64("fps")?;
    let mode_at = r.pos;
    let [code] = r.take::<1>("mode")?;
    let mode = InitMode::from_code(code).ok_or_else(|| malformed(mode_at, format!("unknown mode code {code}")))?;

    let expected = (count as u128) * RECORD_BYTES as u128 + HEADER_BYTES as u128;
    if bytes.len() as u128 != expected {
        let offset = (bytes.len() as u128).min(expected) as usize;
        return Err(malformed(offset, format!("header declares {count} records ({expected} bytes) but file has {} bytes", bytes.len())));
    }
    let n = count as usize;
    let mut model = GaussianModel4D::empty(video_length, fps, mode);
    model.means.reserve(n);
    for _ in 0..n {
        let mean = [r.f64("mean")?, r.f64("mean")?, r.f64("mean")?, r.f64("mean")?];
        model.means.push(mean);
        model.log_scales.push(r.f64("log scale")?);
        model.log_scales_t.push(r.f64("log temporal scale")?);
        model.opacity_logits.push(r.f64("opacity logit")?);
        model.colors.push([r.f64("rgb")?, r.f64("rgb")?, r.f64("rgb")?]);
        let flag_at = r.pos;
        let [flag] = r.take::<1>("dynamic flag")?;
        model.dynamic.push(match flag {
            0 => false,
            1 => true,
            other => return Err(malformed(flag_at, format!("dynamic flag {other} is not 0 or 1"))),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Gaussian4D;
    use proptest::prelude::*;

    fn model(n: usize) -> GaussianModel4D {
        let mut m = GaussianModel4D::empty(2.0, 30.0, InitMode::Full);
        for i in 0..n {
            let x = i as f64;
            m.push(&Gaussian4D {
                mean: [x * 0.1, -x, 1.0 / (x + 1.0), 0.3],
                scale: 0.01 * (x + 1.0),
                scale_t: if i % 2 == 0 { 2.0 } else { 1.0 / 15.0 },
                opacity: 0.1 + 0.01 * x,
                rgb: [0.2, 0.4, x / (n as f64)],
                is_dynamic: i % 2 == 1,
            });
        }
        m
    }

    fn p() -> &'static Path {
        Path::new("m.i4d")
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let m = model(17);
        let bytes = encode_checkpoint(&m);
        assert_eq!(bytes.len(), HEADER_BYTES + 17 * RECORD_BYTES);
        let back = decode_checkpoint(&bytes, p()).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn empty_model_is_header_only() {
        let m = GaussianModel4D::empty(1.0, 24.0, InitMode::Lite);
        let bytes = encode_checkpoint(&m);
        assert_eq!(bytes.len(), HEADER_BYTES);
        assert_eq!(decode_checkpoint(&bytes, p()).unwrap(), m);
    }

    #[test]
    fn size_is_exact_for_a_large_model() {
        let n = 1_000_000;
        let mut m = GaussianModel4D::empty(1.0, 30.0, InitMode::Lite);
        m.means = vec![[0.0; 4]; n];
        m.log_scales = vec![0.0; n];
        m.log_scales_t = vec![0.0; n];
        m.opacity_logits = vec![0.0; n];
        m.colors = vec![[0.5; 3]; n];
        m.dynamic = vec![false; n];
        assert_eq!(encode_checkpoint(&m).len(), HEADER_BYTES + n * RECORD_BYTES);
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let mut bytes = encode_checkpoint(&model(2));
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        let err = decode_checkpoint(&bytes, p()).unwrap_err();
        assert!(matches!(err, FormatError::Version { found: 7, expected: 1, .. }));
        let msg = err.to_string();
        assert!(msg.contains('7') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn corruption_is_reported() {
        let bytes = encode_checkpoint(&model(3));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1], p()).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra, p()).is_err());
        let mut bad_flag = bytes.clone();
        let last = bad_flag.len() - 1;
        bad_flag[last] = 9;
        assert!(decode_checkpoint(&bad_flag, p()).is_err());
        let mut bad_magic = bytes;
        bad_magic[0] = b'X';
        assert!(decode_checkpoint(&bad_magic, p()).is_err());
    }

    proptest! {
        #[test]
        fn truncation_never_panics(cut in 0usize..(HEADER_BYTES + 2 * RECORD_BYTES)) {
            let bytes = encode_checkpoint(&model(2));
            prop_assert!(decode_checkpoint(&bytes[..cut], p()).is_err());
        }

        #[test]
        fn arbitrary_values_round_trip(vals in proptest::collection::vec(any::<f64>(), 10)) {
            let mut m = model(1);
            m.means[0] = [vals[0], vals[1], vals[2], vals[3]];
            m.log_scales[0] = vals[4];
            m.log_scales_t[0] = vals[5];
            m.opacity_logits[0] = vals[6];
            m.colors[0] = [vals[7], vals[8], vals[9]];
            let back = decode_checkpoint(&encode_checkpoint(&m), p()).unwrap();
            prop_assert_eq!(encode_checkpoint(&back), encode_checkpoint(&m));
        }
    }
}
