use std::net::SocketAddr;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio_tungstenite::tungstenite::Message;

use i4d_cli::protocol::{encode_request, FrameResponse, RenderRequest, Status};
use i4d_cli::server::{start, ServeOptions};
use i4d_core::gaussian::{Gaussian4D, GaussianModel4D, InitMode};
use i4d_core::geometry::PoseSE3;

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

fn one_gaussian() -> GaussianModel4D {
    let mut m = GaussianModel4D::empty(2.0, 30.0, InitMode::Lite);
    m.push(&Gaussian4D {
        mean: [0.0, 0.0, 0.0, 0.5],
        scale: 0.3,
        scale_t: 0.1,
        opacity: 0.9,
        rgb: [0.9, 0.3, 0.1],
        is_dynamic: true,
    });
    m
}

fn request(id: u64, t: f64, size: u32) -> RenderRequest {
    let pose = PoseSE3::look_at([0.0, 0.0, -2.0].into(), [0.0, 0.0, 0.0].into(), [0.0, 1.0, 0.0].into()).unwrap();
    RenderRequest { id, pose: pose.to_row_major(), t, width: size, height: size, fov_y: None, quality: None }
}

async fn launch() -> (SocketAddr, std::sync::Arc<i4d_cli::server::ServerStats>) {
    let opts = ServeOptions { host: "127.0.0.1".into(), port: 0, viewer_dir: None };
    let (addr, stats, _handle) = start(one_gaussian(), opts).await.unwrap();
    (addr, stats)
}

async fn connect(addr: SocketAddr) -> Socket {
    tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn next_frame(ws: &mut Socket) -> FrameResponse {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(30), ws.next()).await.expect("response timed out");
        match msg.unwrap().unwrap() {
            Message::Binary(b) => return FrameResponse::decode(&b).unwrap(),
            Message::Ping(_) | Message::Pong(_) => continue,
            other => panic!("unexpected message {other:?}"),
        }
    }
}

async fn http_get(addr: SocketAddr, path: &str) -> String {
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").as_bytes()).await.unwrap();
    let mut body = String::new();
    s.read_to_string(&mut body).await.unwrap();
    body
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn single_request_echoes_id_and_survivors() {
    let (addr, _) = launch().await;
    let mut ws = connect(addr).await;
    ws.send(Message::Binary(encode_request(&request(77, 0.5, 64)))).await.unwrap();
    let r = next_frame(&mut ws).await;
    assert_eq!((r.header.id, r.header.status, r.header.survivors), (77, Status::Ok, 1));
    assert_eq!((r.header.width, r.header.height), (64, 64));
    assert!(r.header.render_ms > 0.0);
    let img = image::load_from_memory_with_format(&r.payload, image::ImageFormat::Jpeg).unwrap();
    assert_eq!((img.width(), img.height()), (64, 64));

    // Text messages carry bare JSON.
    ws.send(Message::Text(serde_json::to_string(&request(78, 0.5, 32)).unwrap())).await.unwrap();
    assert_eq!(next_frame(&mut ws).await.header.id, 78);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_requests_get_error_frames() {
    let (addr, _) = launch().await;
    let mut ws = connect(addr).await;
    ws.send(Message::Text(r#"{"id": 5, "pose": "up"}"#.into())).await.unwrap();
    let r = next_frame(&mut ws).await;
    assert_eq!((r.header.id, r.header.status), (5, Status::BadRequest));
    assert!(r.error_text().unwrap().contains("malformed"));

    let mut big = request(6, 0.5, 64);
    big.width = 4097;
    big.height = 1024;
    ws.send(Message::Binary(encode_request(&big))).await.unwrap();
    let r = next_frame(&mut ws).await;
    assert_eq!((r.header.id, r.header.status), (6, Status::TooLarge));

    ws.send(Message::Binary(vec![200, 0, 0, 0, b'{'])).await.unwrap();
    assert_eq!(next_frame(&mut ws).await.header.status, Status::BadRequest);

    // The connection survives errors.
    ws.send(Message::Binary(encode_request(&request(7, 0.5, 16)))).await.unwrap();
    assert_eq!(next_frame(&mut ws).await.header.status, Status::Ok);
}

async fn burst(n: u64) {
    let (addr, stats) = launch().await;
    let mut ws = connect(addr).await;
    for id in 1..=n {
        ws.feed(Message::Binary(encode_request(&request(id, 0.5 + id as f64 * 1e-3, 256)))).await.unwrap();
    }
    ws.flush().await.unwrap();
    let mut ids = Vec::new();
    loop {
        let r = next_frame(&mut ws).await;
        assert_eq!(r.header.status, Status::Ok);
        ids.push(r.header.id);
        if r.header.id == n {
            break;
        }
    }
    assert!(ids.windows(2).all(|w| w[0] < w[1]), "responses out of order: {ids:?}");
    let s = stats.snapshot();
    assert_eq!(s.max_in_flight, 1);
    assert_eq!(s.received, n);
    assert_eq!(s.answered, ids.len() as u64);
    assert_eq!(s.answered + s.superseded, s.received);
    // Nothing else arrives afterwards.
    assert!(tokio::time::timeout(Duration::from_millis(200), ws.next()).await.is_err());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn burst_of_50_newest_wins() {
    burst(50).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn burst_of_100_newest_wins() {
    burst(100).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn clients_are_independent() {
    let (addr, _) = launch().await;
    let (mut a, mut b) = (connect(addr).await, connect(addr).await);
    for round in 0..5u64 {
        a.send(Message::Binary(encode_request(&request(100 + round, 0.5, 48)))).await.unwrap();
        b.send(Message::Binary(encode_request(&request(200 + round, 2.0, 48)))).await.unwrap();
        let (ra, rb) = tokio::join!(next_frame(&mut a), next_frame(&mut b));
        assert_eq!((ra.header.id, ra.header.survivors), (100 + round, 1));
        // At t = 2 the only Gaussian is culled.
        assert_eq!((rb.header.id, rb.header.survivors), (200 + round, 0));
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn http_endpoints() {
    let (addr, _) = launch().await;
    let info = http_get(addr, "/api/info").await;
    assert!(info.starts_with("HTTP/1.1 200"), "{info}");
    let body = info.split("\r\n\r\n").nth(1).unwrap();
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["gaussians"], 1);
    assert_eq!(v["video_length"], 2.0);
    assert_eq!(v["max_pixels"], 4_194_304);
    let page = http_get(addr, "/").await;
    assert!(page.starts_with("HTTP/1.1 200") && page.contains("<canvas"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn viewer_dir_is_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>built viewer</p>").unwrap();
    let opts = ServeOptions { host: "127.0.0.1".into(), port: 0, viewer_dir: Some(dir.path().into()) };
    let (addr, _, _handle) = start(one_gaussian(), opts).await.unwrap();
    assert!(http_get(addr, "/").await.contains("built viewer"));
    assert!(http_get(addr, "/missing.js").await.starts_with("HTTP/1.1 404"));
    assert!(http_get(addr, "/api/info").await.contains("\"gaussians\":1"));
}
