//! Wire format of the frame-streaming socket.
//!
//! Requests are JSON, either in a text message or in a binary message framed
//! as `u32 LE length` followed by that many bytes of JSON. Responses are a
//! fixed little-endian header followed by a JPEG (or a UTF-8 error text).

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use serde::{Deserialize, Serialize};

use i4d_core::gaussian::GaussianModel4D;
use i4d_core::geometry::{Intrinsics, PoseSE3};
use i4d_core::image::Image;
use i4d_core::raster::{render, Camera, FrameImage, RenderSettings};

pub const PROTOCOL_VERSION: u32 = 1;
pub const RESPONSE_MAGIC: [u8; 4] = *b"I4DF";
pub const HEADER_BYTES: usize = 40;
pub const MAX_PIXELS: u64 = 4_194_304;
pub const DEFAULT_FOV_Y: f64 = 60.0;
pub const DEFAULT_QUALITY: u8 = 85;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub id: u64,
    /// Camera-to-world, row-major.
    pub pose: [f64; 16],
    pub t: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Status {
    Ok = 0,
    /// Unparseable message or invalid field values.
    BadRequest = 1,
    /// `width * height` above [`MAX_PIXELS`].
    TooLarge = 2,
    /// The renderer failed.
    RenderFailed = 3,
}

impl Status {
    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Status::Ok),
            1 => Some(Status::BadRequest),
            2 => Some(Status::TooLarge),
            3 => Some(Status::RenderFailed),
            _ => None,
        }
    }
}

/// A request that could not be served. `id` is 0 when the message was too
/// broken to recover one.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestError {
    pub id: u64,
    pub status: Status,
    pub message: String,
}

impl RequestError {
    fn bad(id: u64, message: impl Into<String>) -> Self {
        Self { id, status: Status::BadRequest, message: message.into() }
    }
}

/// Frames a JSON request as `u32 LE length || json`.
pub fn encode_request(req: &RenderRequest) -> Vec<u8> {
    let json = serde_json::to_vec(req).expect("request serialises");
    let mut out = Vec::with_capacity(4 + json.len());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out
}

/// Strips the length prefix of a binary request.
pub fn unframe(bytes: &[u8]) -> Result<&[u8], RequestError> {
    let Some((len, rest)) = bytes.split_first_chunk::<4>() else {
        return Err(RequestError::bad(0, "binary request shorter than its 4-byte length prefix"));
    };
    let len = u32::from_le_bytes(*len) as usize;
    if rest.len() != len {
        return Err(RequestError::bad(0, format!("length prefix says {len} bytes, message carries {}", rest.len())));
    }
    Ok(rest)
}

/// Parses request JSON, recovering the id for the error frame when possible.
pub fn parse_request(json: &[u8]) -> Result<RenderRequest, RequestError> {
    match serde_json::from_slice::<RenderRequest>(json) {
        Ok(req) => Ok(req),
        Err(e) => {
            let id = serde_json::from_slice::<serde_json::Value>(json)
                .ok()
                .and_then(|v| v.get("id").and_then(|i| i.as_u64()))
                .unwrap_or(0);
            Err(RequestError::bad(id, format!("malformed request: {e}")))
        }
    }
}

/// A request after validation, with `t` clamped into the clip.
#[derive(Debug, Clone, Copy)]
pub struct ResolvedRequest {
    pub id: u64,
    pub camera: Camera,
    pub t: f64,
    pub quality: u8,
}

pub fn resolve(req: &RenderRequest, video_length: f64) -> Result<ResolvedRequest, RequestError> {
    let bad = |m: String| RequestError::bad(req.id, m);
    if req.width == 0 || req.height == 0 {
        return Err(bad(format!("image size {}x{} is empty", req.width, req.height)));
    }
    let pixels = req.width as u64 * req.height as u64;
    if pixels > MAX_PIXELS {
        return Err(RequestError {
            id: req.id,
            status: Status::TooLarge,
            message: format!("{}x{} = {pixels} pixels exceeds the limit of {MAX_PIXELS}", req.width, req.height),
        });
    }
    if !req.t.is_finite() {
        return Err(bad(format!("t = {} is not finite", req.t)));
    }
    let quality = req.quality.unwrap_or(DEFAULT_QUALITY);
    if !(1..=100).contains(&quality) {
        return Err(bad(format!("quality {quality} outside 1..=100")));
    }
    let fov = req.fov_y.unwrap_or(DEFAULT_FOV_Y);
    let intrinsics = Intrinsics::from_fov_y(fov, req.width, req.height).map_err(|e| bad(format!("fov_y: {e}")))?;
    let pose = PoseSE3::from_row_major(&req.pose).map_err(|e| bad(format!("pose: {e}")))?;
    Ok(ResolvedRequest { id: req.id, camera: Camera::new(pose, intrinsics), t: req.t.clamp(0.0, video_length.max(0.0)), quality })
}

/// Renders through the same entry point as the offline `render` command.
pub fn render_resolved(model: &GaussianModel4D, r: &ResolvedRequest) -> Result<FrameImage, RequestError> {
    render(model, &r.camera, r.t, &RenderSettings::default()).map_err(|e| RequestError {
        id: r.id,
        status: Status::RenderFailed,
        message: e.to_string(),
    })
}

pub fn encode_jpeg(img: &Image, quality: u8) -> Vec<u8> {
    let rgb = img.to_rgb8();
    let mut buf = Cursor::new(Vec::new());
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode_image(&rgb)
        .expect("in-memory JPEG encoding cannot fail");
    buf.into_inner()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseHeader {
    pub version: u32,
    pub id: u64,
    pub status: Status,
    pub render_ms: f32,
    pub survivors: u32,
    pub width: u32,
    pub height: u32,
    pub payload_len: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResponse {
    pub header: ResponseHeader,
    pub payload: Vec<u8>,
}

impl FrameResponse {
    pub fn frame(id: u64, render_ms: f32, survivors: u32, width: u32, height: u32, jpeg: Vec<u8>) -> Self {
        let header = ResponseHeader {
            version: PROTOCOL_VERSION,
            id,
            status: Status::Ok,
            render_ms,
            survivors,
            width,
            height,
            payload_len: jpeg.len() as u32,
        };
        Self { header, payload: jpeg }
    }

    pub fn error(e: &RequestError) -> Self {
        let payload = e.message.as_bytes().to_vec();
        let header = ResponseHeader {
            version: PROTOCOL_VERSION,
            id: e.id,
            status: e.status,
            render_ms: 0.0,
            survivors: 0,
            width: 0,
            height: 0,
            payload_len: payload.len() as u32,
        };
        Self { header, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload.len());
        out.extend_from_slice(&RESPONSE_MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.extend_from_slice(&h.id.to_le_bytes());
        out.extend_from_slice(&(h.status as u32).to_le_bytes());
        out.extend_from_slice(&h.render_ms.to_le_bytes());
        out.extend_from_slice(&h.survivors.to_le_bytes());
        out.extend_from_slice(&h.width.to_le_bytes());
        out.extend_from_slice(&h.height.to_le_bytes());
        out.extend_from_slice(&h.payload_len.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < HEADER_BYTES {
            return Err(format!("response has {} bytes, header needs {HEADER_BYTES}", bytes.len()));
        }
        if bytes[..4] != RESPONSE_MAGIC {
            return Err("bad response magic".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let status = Status::from_code(u32_at(16)).ok_or_else(|| format!("unknown status {}", u32_at(16)))?;
        let header = ResponseHeader {
            version: u32_at(4),
            id: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            status,
            render_ms: f32::from_le_bytes(bytes[20..24].try_into().unwrap()),
            survivors: u32_at(24),
            width: u32_at(28),
            height: u32_at(32),
            payload_len: u32_at(36),
        };
        let payload = &bytes[HEADER_BYTES..];
        if payload.len() != header.payload_len as usize {
            return Err(format!("payload is {} bytes, header says {}", payload.len(), header.payload_len));
        }
        Ok(Self { header, payload: payload.to_vec() })
    }

    pub fn error_text(&self) -> Option<String> {
        (self.header.status != Status::Ok).then(|| String::from_utf8_lossy(&self.payload).into_owned())
    }
}

/// Full request handling: validate, render, encode. Blocking.
pub fn respond(model: &GaussianModel4D, req: Result<RenderRequest, RequestError>) -> FrameResponse {
    let result = req.and_then(|r| resolve(&r, model.video_length)).and_then(|r| {
        let start = std::time::Instant::now();
        let frame = render_resolved(model, &r)?;
        let jpeg = encode_jpeg(&frame.rgb, r.quality);
        // Render time is reported strictly positive even on coarse clocks.
        let ms = (start.elapsed().as_secs_f64() * 1e3).max(1e-3) as f32;
        Ok(FrameResponse::frame(r.id, ms, frame.stats.survivors as u32, frame.width(), frame.height(), jpeg))
    });
    match result {
        Ok(resp) => resp,
        Err(e) => FrameResponse::error(&e),
    }
}
