//! Frame server for interactive viewing: one-shot frames over HTTP and a
//! latest-wins WebSocket stream.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;
use tower_http::services::ServeDir;
use vinst_core::geom::{vec3, Vec3};
use vinst_core::image::{encode_ppm, Image};
use vinst_core::render::{render_frame, Camera, ClipPlane, RenderConfig, RenderMode};
use vinst_core::scene::Scene;

pub const PPM_TYPE: &str = "image/x-portable-pixmap";

/// Largest frame edge the server agrees to render.
pub const MAX_EDGE: u32 = 4096;

pub struct AppState {
    pub scene: Scene,
    /// Frames whose rendering has started, across all endpoints.
    pub renders: AtomicU64,
    pub static_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(scene: Scene, static_dir: Option<PathBuf>) -> Arc<AppState> {
        Arc::new(AppState {
            scene,
            renders: AtomicU64::new(0),
            static_dir,
        })
    }
}

/// Camera and visibility state. Missing fields fall back to the scene's
/// defaults; the same shape is used for query strings and stream messages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRequest {
    pub px: Option<f64>,
    pub py: Option<f64>,
    pub pz: Option<f64>,
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub fz: Option<f64>,
    pub ux: Option<f64>,
    pub uy: Option<f64>,
    pub uz: Option<f64>,
    /// Vertical field of view in degrees.
    pub fov: Option<f64>,
    pub w: Option<u32>,
    pub h: Option<u32>,
    pub time: Option<f64>,
    /// `nx,ny,nz,offset`, or `off` to disable the scene's plane.
    pub clip: Option<String>,
    pub mode: Option<RenderMode>,
}

/// Parses `nx,ny,nz,offset` into an enabled clipping plane.
pub fn parse_clip(s: &str) -> Result<ClipPlane, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("clip: expected nx,ny,nz,offset, got {s:?}"))?;
    if v.len() != 4 || v.iter().any(|x| !x.is_finite()) {
        return Err(format!("clip: expected four finite numbers, got {s:?}"));
    }
    let n = vec3(v[0], v[1], v[2]);
    if n.length_squared() == 0.0 {
        return Err("clip: normal must be non-zero".into());
    }
    Ok(ClipPlane::new(n, v[3]))
}

impl FrameRequest {
    pub fn resolve(&self, scene: &Scene) -> Result<(Camera, RenderConfig), String> {
        let base = scene.camera;
        let pick = |a: Option<f64>, b: Option<f64>, c: Option<f64>, d: Vec3| {
            vec3(a.unwrap_or(d.x), b.unwrap_or(d.y), c.unwrap_or(d.z))
        };
        let position = pick(self.px, self.py, self.pz, base.position);
        let forward = pick(self.fx, self.fy, self.fz, base.forward);
        let up = pick(self.ux, self.uy, self.uz, base.up);
        let fov = self.fov.unwrap_or(base.fov_y.to_degrees());
        let (w, h) = (self.w.unwrap_or(base.width), self.h.unwrap_or(base.height));
        if !(fov > 0.0 && fov < 180.0) {
            return Err(format!("fov must be in (0, 180) degrees, got {fov}"));
        }
        if w == 0 || h == 0 || w > MAX_EDGE || h > MAX_EDGE {
            return Err(format!("frame size {w}x{h} outside 1..={MAX_EDGE}"));
        }
        if !(position.is_finite() && forward.is_finite() && up.is_finite()) {
            return Err("camera vectors must be finite".into());
        }
        if forward.length_squared() == 0.0 {
            return Err("forward must be non-zero".into());
        }
        let camera = Camera::new(position, forward, up, fov.to_radians(), w, h);
        if !camera.is_valid() {
            return Err("camera is degenerate".into());
        }
        let mut config = scene.config;
        if let Some(t) = self.time {
            if !t.is_finite() {
                return Err("time must be finite".into());
            }
            config.time = t;
        }
        match self.clip.as_deref() {
            None => {}
            Some("off") => config.clip.enabled = false,
            Some(s) => config.clip = parse_clip(s)?,
        }
        if let Some(m) = self.mode {
            config.mode = m;
        }
        Ok((camera, config))
    }
}

/// Renders one frame as a portable-pixmap payload.
pub fn render_ppm(state: &AppState, camera: &Camera, config: &RenderConfig) -> Vec<u8> {
    state.renders.fetch_add(1, Ordering::SeqCst);
    let fb = render_frame(&state.scene, camera, config);
    encode_ppm(&Image::from_framebuffer(&fb))
}

fn bad_request(msg: String) -> Response {
    (StatusCode::BAD_REQUEST, msg).into_response()
}

async fn frame(State(state): State<Arc<AppState>>, query: Result<Query<FrameRequest>, axum::extract::rejection::QueryRejection>) -> Response {
    let req = match query {
        Ok(Query(r)) => r,
        Err(e) => return bad_request(e.body_text()),
    };
    let (camera, config) = match req.resolve(&state.scene) {
        Ok(v) => v,
        Err(e) => return bad_request(e),
    };
    let job = {
        let state = state.clone();
        tokio::task::spawn_blocking(move || render_ppm(&state, &camera, &config))
    };
    match job.await {
        Ok(bytes) => ([(header::CONTENT_TYPE, PPM_TYPE)], bytes).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, format!("render failed: {e}")).into_response(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MoleculeInfo {
    pub name: String,
    pub color: [f64; 3],
    pub atoms: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SceneInfo {
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    pub molecules: Vec<MoleculeInfo>,
    pub virtual_atoms: u64,
    pub mesh_instances: usize,
    pub camera: CameraInfo,
}

/// Default view, in the units `/frame` accepts.
#[derive(Debug, Serialize, Deserialize)]
pub struct CameraInfo {
    pub position: [f64; 3],
    pub forward: [f64; 3],
    pub up: [f64; 3],
    pub fov: f64,
    pub width: u32,
    pub height: u32,
}

pub fn scene_info(scene: &Scene) -> SceneInfo {
    let c = scene.camera;
    SceneInfo {
        bounds_min: scene.bounds.min.to_array(),
        bounds_max: scene.bounds.max.to_array(),
        molecules: scene
            .molecules
            .iter()
            .map(|m| MoleculeInfo {
                name: m.name.clone(),
                color: m.color,
                atoms: m.atoms.len(),
            })
            .collect(),
        virtual_atoms: scene.virtual_atom_count(),
        mesh_instances: scene.instances.len(),
        camera: CameraInfo {
            position: c.position.to_array(),
            forward: c.forward.to_array(),
            up: c.up.to_array(),
            fov: c.fov_y.to_degrees(),
            width: c.width,
            height: c.height,
        },
    }
}

async fn info(State(state): State<Arc<AppState>>) -> Json<SceneInfo> {
    Json(scene_info(&state.scene))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Stats {
    pub renders: u64,
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<Stats> {
    Json(Stats {
        renders: state.renders.load(Ordering::SeqCst),
    })
}

async fn stream(State(state): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| serve_stream(state, socket))
}

/// Requests go through a watch channel, so a request that arrives while a
/// frame is rendering replaces any request still waiting. Malformed
/// messages get a text reply and are otherwise ignored.
async fn serve_stream(state: Arc<AppState>, socket: WebSocket) {
    use futures_util::{SinkExt, StreamExt};
    let (mut sink, mut source) = socket.split();
    let (tx, mut rx) = watch::channel::<Option<(Camera, RenderConfig)>>(None);
    let (err_tx, mut err_rx) = tokio::sync::mpsc::unbounded_channel::<String>();

    let renderer = {
        let state = state.clone();
        tokio::spawn(async move {
            loop {
                tokio::select! {
                    changed = rx.changed() => {
                        if changed.is_err() {
                            break;
                        }
                        let Some((camera, config)) = *rx.borrow_and_update() else { continue };
                        let state = state.clone();
                        let frame = tokio::task::spawn_blocking(move || render_ppm(&state, &camera, &config)).await;
                        let msg = match frame {
                            Ok(bytes) => Message::Binary(Bytes::from(bytes)),
                            Err(e) => Message::Text(format!("render failed: {e}").into()),
                        };
                        if sink.send(msg).await.is_err() {
                            break;
                        }
                    }
                    Some(text) = err_rx.recv() => {
                        if sink.send(Message::Text(text.into())).await.is_err() {
                            break;
                        }
                    }
                }
            }
        })
    };

    while let Some(Ok(msg)) = source.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let parsed = serde_json::from_str::<FrameRequest>(&text)
            .map_err(|e| e.to_string())
            .and_then(|r| r.resolve(&state.scene));
        match parsed {
            Ok(v) => {
                tx.send_replace(Some(v));
            }
            Err(e) => {
                let _ = err_tx.send(format!("error: {e}"));
            }
        }
    }
    drop(tx);
    let _ = renderer.await;
}

pub fn router(state: Arc<AppState>) -> Router {
    let app = Router::new()
        .route("/frame", get(frame))
        .route("/scene/info", get(info))
        .route("/stats", get(stats))
        .route("/stream", get(stream));
    let app = match &state.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
