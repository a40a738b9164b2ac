//! HTTP + WebSocket render server.
//!
//! Each connection gets one render task fed through a single-entry slot: a
//! newer request overwrites an unstarted older one, so at most one render per
//! client is in flight and the newest request is always answered.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, Notify};
use tower_http::services::ServeDir;

use i4d_core::gaussian::GaussianModel4D;

use crate::protocol::{self, RenderRequest, RequestError};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub host: String,
    pub port: u16,
    pub viewer_dir: Option<PathBuf>,
}

/// Counters exposed at `/api/stats`.
#[derive(Debug, Default)]
pub struct ServerStats {
    pub received: AtomicU64,
    pub answered: AtomicU64,
    pub superseded: AtomicU64,
    /// Highest number of simultaneous renders seen for any single client.
    pub max_in_flight: AtomicUsize,
}

#[derive(Debug, Serialize, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub received: u64,
    pub answered: u64,
    pub superseded: u64,
    pub max_in_flight: usize,
}

impl ServerStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            received: self.received.load(Ordering::SeqCst),
            answered: self.answered.load(Ordering::SeqCst),
            superseded: self.superseded.load(Ordering::SeqCst),
            max_in_flight: self.max_in_flight.load(Ordering::SeqCst),
        }
    }
}

#[derive(Clone)]
struct AppState {
    model: Arc<GaussianModel4D>,
    stats: Arc<ServerStats>,
}

#[derive(Debug, Serialize)]
struct Info {
    protocol_version: u32,
    gaussians: usize,
    dynamic: usize,
    video_length: f64,
    fps: f64,
    default_fov_y: f64,
    default_quality: u8,
    max_pixels: u64,
}

pub fn router(model: Arc<GaussianModel4D>, stats: Arc<ServerStats>, viewer_dir: Option<PathBuf>) -> Router {
    let app = Router::new()
        .route("/ws", get(ws_handler))
        .route("/api/info", get(info))
        .route("/api/stats", get(stats_handler));
    let app = match viewer_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(FALLBACK_PAGE) })),
    };
    app.with_state(AppState { model, stats })
}

/// Binds and serves in the background; returns the bound address.
pub async fn start(
    model: GaussianModel4D,
    options: ServeOptions,
) -> std::io::Result<(SocketAddr, Arc<ServerStats>, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind((options.host.as_str(), options.port)).await?;
    let addr = listener.local_addr()?;
    let stats = Arc::new(ServerStats::default());
    let app = router(Arc::new(model), stats.clone(), options.viewer_dir);
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok((addr, stats, handle))
}

/// Serves until the process is stopped.
pub async fn serve(model: GaussianModel4D, options: ServeOptions) -> anyhow::Result<()> {
    let n = model.len();
    let (addr, _, handle) = start(model, options).await?;
    log::info!("serving {n} gaussians at http://{addr}/ (socket at ws://{addr}/ws)");
    println!("listening on {addr}");
    handle.await??;
    Ok(())
}

async fn info(State(s): State<AppState>) -> Json<Info> {
    Json(Info {
        protocol_version: protocol::PROTOCOL_VERSION,
        gaussians: s.model.len(),
        dynamic: s.model.dynamic_count(),
        video_length: s.model.video_length,
        fps: s.model.fps,
        default_fov_y: protocol::DEFAULT_FOV_Y,
        default_quality: protocol::DEFAULT_QUALITY,
        max_pixels: protocol::MAX_PIXELS,
    })
}

async fn stats_handler(State(s): State<AppState>) -> Json<StatsSnapshot> {
    Json(s.stats.snapshot())
}

async fn ws_handler(ws: WebSocketUpgrade, State(s): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, s))
}

type Pending = Result<RenderRequest, RequestError>;

/// Latest unstarted request of one client.
#[derive(Default)]
struct Slot {
    pending: Mutex<Option<Pending>>,
    ready: Notify,
}

async fn connection(mut socket: WebSocket, state: AppState) {
    let slot = Arc::new(Slot::default());
    let (out_tx, mut out_rx) = mpsc::channel::<Vec<u8>>(4);
    let worker = tokio::spawn(render_loop(slot.clone(), out_tx, state.clone()));

    loop {
        tokio::select! {
            msg = socket.recv() => {
                let parsed = match msg {
                    Some(Ok(Message::Text(text))) => protocol::parse_request(text.as_bytes()),
                    Some(Ok(Message::Binary(bytes))) => protocol::unframe(&bytes).and_then(protocol::parse_request),
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                state.stats.received.fetch_add(1, Ordering::SeqCst);
                let stale = slot.pending.lock().unwrap().replace(parsed);
                if stale.is_some() {
                    state.stats.superseded.fetch_add(1, Ordering::SeqCst);
                }
                slot.ready.notify_one();
            }
            Some(bytes) = out_rx.recv() => {
                if socket.send(Message::Binary(bytes)).await.is_err() {
                    break;
                }
            }
        }
    }
    worker.abort();
}

async fn render_loop(slot: Arc<Slot>, out: mpsc::Sender<Vec<u8>>, state: AppState) {
    let in_flight = Arc::new(AtomicUsize::new(0));
    loop {
        slot.ready.notified().await;
        let Some(req) = slot.pending.lock().unwrap().take() else { continue };
        let model = state.model.clone();
        let counter = in_flight.clone();
        let now = counter.fetch_add(1, Ordering::SeqCst) + 1;
        state.stats.max_in_flight.fetch_max(now, Ordering::SeqCst);
        let resp = tokio::task::spawn_blocking(move || protocol::respond(&model, req)).await;
        counter.fetch_sub(1, Ordering::SeqCst);
        let Ok(resp) = resp else { break };
        state.stats.answered.fetch_add(1, Ordering::SeqCst);
        if out.send(resp.encode()).await.is_err() {
            break;
        }
    }
}

const FALLBACK_PAGE: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>i4d</title></head>
<body style="margin:0;background:#111;color:#ccc;font:13px monospace">
<canvas id="c" width="640" height="360" style="display:block"></canvas>
<div>t <input id="t" type="range" min="0" max="1" step="0.001" value="0" style="width:400px"> <span id="hud"></span></div>
<script>
const c = document.getElementById('c'), ctx = c.getContext('2d'), hud = document.getElementById('hud');
const slider = document.getElementById('t');
let info = null, id = 0, waiting = false, dirty = true, az = 0, el = 0, radius = 3;
function pose() {
  const eye = [radius*Math.cos(el)*Math.sin(az), -radius*Math.sin(el), -radius*Math.cos(el)*Math.cos(az)];
  const f = eye.map(v => -v / radius);
  let r = [-f[2], 0, f[0]]; const n = Math.hypot(...r) || 1; r = r.map(v => v / n);
  const d = [f[1]*r[2]-f[2]*r[1], f[2]*r[0]-f[0]*r[2], f[0]*r[1]-f[1]*r[0]];
  return [r[0], d[0], f[0], eye[0], r[1], d[1], f[1], eye[1], r[2], d[2], f[2], eye[2], 0, 0, 0, 1];
}
const ws = new WebSocket(`ws://${location.host}/ws`);
ws.binaryType = 'arraybuffer';
function send() {
  if (waiting || !dirty || ws.readyState !== 1) return;
  dirty = false; waiting = true; id += 1;
  ws.send(JSON.stringify({id, pose: pose(), t: slider.value * (info ? info.video_length : 1), width: c.width, height: c.height}));
}
ws.onmessage = async (ev) => {
  const v = new DataView(ev.data), status = v.getUint32(16, true), n = v.getUint32(36, true);
  const body = new Uint8Array(ev.data, 40, n);
  if (status === 0) {
    const bmp = await createImageBitmap(new Blob([body], {type: 'image/jpeg'}));
    ctx.drawImage(bmp, 0, 0);
    hud.textContent = `${v.getFloat32(20, true).toFixed(1)} ms, ${v.getUint32(24, true)} splats`;
  } else hud.textContent = new TextDecoder().decode(body);
  waiting = false; send();
};
ws.onopen = () => send();
fetch('/api/info').then(r => r.json()).then(j => { info = j; dirty = true; send(); });
slider.oninput = () => { dirty = true; send(); };
let drag = null;
c.onmousedown = e => drag = [e.clientX, e.clientY];
window.onmouseup = () => drag = null;
window.onmousemove = e => { if (!drag) return; az += (e.clientX-drag[0])*0.01; el = Math.max(-1.5, Math.min(1.5, el+(e.clientY-drag[1])*0.01)); drag = [e.clientX, e.clientY]; dirty = true; send(); };
c.onwheel = e => { radius *= Math.exp(e.deltaY*0.001); dirty = true; send(); e.preventDefault(); };
</script></body></html>
"#;
