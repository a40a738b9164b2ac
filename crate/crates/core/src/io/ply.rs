//! Binary little-endian PLY exports for third-party point-cloud viewers.

use std::path::Path;

use crate::error::FormatError;
use crate::gaussian::{sigmoid, GaussianModel4D};
use crate::image::quantize_u8;
use crate::pointcloud::SeedPoint;

fn header(count: usize, properties: &[(&str, &str)]) -> String {
    let mut h = format!("ply\nformat binary_little_endian 1.0\nelement vertex {count}\n");
    for (ty, name) in properties {
        h.push_str(&format!("property {ty} {name}\n"));
    }
    h.push_str("end_header\n");
    h
}

/// Model view with activated parameters: x, y, z, t, scale, scale_t, opacity
/// (base, before temporal falloff) as float and red, green, blue as uchar.
pub fn encode_model_ply(model: &GaussianModel4D) -> Vec<u8> {
    let props = [
        ("float", "x"),
        ("float", "y"),
        ("float", "z"),
        ("float", "t"),
        ("float", "scale"),
        ("float", "scale_t"),
        ("float", "opacity"),
        ("uchar", "red"),
        ("uchar", "green"),
        ("uchar", "blue"),
    ];
    let mut out = header(model.len(), &props).into_bytes();
    for i in 0..model.len() {
        let m = model.means[i];
        let floats = [
            m[0],
            m[1],
            m[2],
            m[3],
            model.log_scales[i].exp(),
            model.log_scales_t[i].exp(),
            sigmoid(model.opacity_logits[i]),
        ];
        for v in floats {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend(model.colors[i].map(quantize_u8));
    }
    out
}

/// Seed cloud: x, y, z, red, green, blue, t, s_t, motion_prob.
pub fn encode_seed_ply(seeds: &[SeedPoint]) -> Vec<u8> {
    let props = [
        ("float", "x"),
        ("float", "y"),
        ("float", "z"),
        ("uchar", "red"),
        ("uchar", "green"),
        ("uchar", "blue"),
        ("float", "t"),
        ("float", "s_t"),
        ("float", "motion_prob"),
    ];
    let mut out = header(seeds.len(), &props).into_bytes();
    for s in seeds {
        for v in [s.position.x, s.position.y, s.position.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend(s.color.map(quantize_u8));
        for v in [s.timestamp, s.temporal_scale, s.motion_prob] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_model_ply(model: &GaussianModel4D, path: &Path) -> Result<(), FormatError> {
    std::fs::write(path, encode_model_ply(model)).map_err(|source| FormatError::Io { path: path.into(), source })
}

pub fn write_seed_ply(seeds: &[SeedPoint], path: &Path) -> Result<(), FormatError> {
    std::fs::write(path, encode_seed_ply(seeds)).map_err(|source| FormatError::Io { path: path.into(), source })
}
