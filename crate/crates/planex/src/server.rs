//! HTTP and WebSocket render service.
//!
//! | route                 | reply                                             |
//! |-----------------------|---------------------------------------------------|
//! | `GET /scene`          | bundle manifest JSON, textures as `texture_url`    |
//! | `GET /bundle/{file}`  | one bundle texture PNG                            |
//! | `POST /render`        | PNG, or [`RenderResponse`] JSON with depth        |
//! | `GET /stream` (WS)    | [`StreamFrame`] per processed [`StreamRequest`]   |
//! | `GET /stats`          | [`StatsJson`] of the last frame                   |
//!
//! Errors are JSON `{"error": ..., "field": ...}` with status 400 (bad
//! request, `field` names the offending field), 404 (no bundle loaded) or
//! 413 (image over the pixel cap).

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use futures::{SinkExt, StreamExt};
use planex_core::render::{PinholeCamera, RenderConfig, RenderOutput};
use planex_core::scene::Scene;
use serde_json::json;
use tokio::sync::watch;

use crate::api::{
    FieldError, RenderMode, RenderRequest, RenderResponse, StatsJson, StreamFrame, StreamRequest, DEFAULT_MAX_PIXELS,
};
use crate::bundle::{texture_path, LoadedBundle};
use crate::config::PipelineConfig;
use crate::image_io;
use crate::parallel::WallClock;
use crate::pipeline;

/// Immutable scene data plus the last-frame statistics.
pub struct ServiceState {
    pub scene: Scene,
    pub bundle: Option<LoadedBundle>,
    pub render_config: RenderConfig,
    pub max_pixels: usize,
    clock: WallClock,
    stats: Mutex<StatsJson>,
}

impl ServiceState {
    pub fn new(scene: Scene, bundle: Option<LoadedBundle>, config: &PipelineConfig) -> Self {
        ServiceState {
            render_config: config.render_config_default(scene.background),
            scene,
            bundle,
            max_pixels: DEFAULT_MAX_PIXELS,
            clock: WallClock::new(),
            stats: Mutex::new(StatsJson::default()),
        }
    }

    /// Renders one frame and records its statistics.
    pub fn render(&self, camera: &PinholeCamera, mode: RenderMode) -> Result<RenderOutput, ApiError> {
        let out = match mode {
            RenderMode::Neural => pipeline::render(&self.scene, camera, &self.render_config, &self.clock),
            RenderMode::Baked => {
                let bundle = self.bundle.as_ref().ok_or_else(ApiError::no_bundle)?;
                let cfg = RenderConfig {
                    background: bundle.manifest.background,
                    ..self.render_config
                };
                pipeline::render(&bundle.scene, camera, &cfg, &self.clock)
            }
        }
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None))?;
        let mut stats = self.stats.lock().unwrap_or_else(|p| p.into_inner());
        let frames = stats.frames + 1;
        *stats = StatsJson::from_stats(frames, mode, camera.width, camera.height, &out.stats);
        Ok(out)
    }

    pub fn stats(&self) -> StatsJson {
        self.stats.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

#[derive(Clone, Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>, field: Option<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            field,
        }
    }

    fn no_bundle() -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "no baked bundle is loaded", None)
    }

    fn from_field(e: FieldError) -> Self {
        let status = if e.too_large {
            StatusCode::PAYLOAD_TOO_LARGE
        } else {
            StatusCode::BAD_REQUEST
        };
        ApiError::new(status, e.to_string(), Some(e.field))
    }

    fn from_json(e: serde_json::Error) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, e.to_string(), json_error_field(&e.to_string()))
    }
}

/// Pulls the field name out of serde's "missing field `x`" style messages.
fn json_error_field(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "field": self.field }))).into_response()
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/scene", get(scene))
        .route("/bundle/{file}", get(bundle_file))
        .route("/render", post(render))
        .route("/stream", get(stream))
        .route("/stats", get(stats))
        .with_state(state)
}

pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn scene(State(s): State<Arc<ServiceState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let bundle = s.bundle.as_ref().ok_or_else(ApiError::no_bundle)?;
    let mut v = serde_json::to_value(&bundle.manifest).expect("manifest serializes");
    if let Some(planes) = v.get_mut("planes").and_then(|p| p.as_array_mut()) {
        for p in planes {
            let name = p["texture"].as_str().unwrap_or_default().to_string();
            p["texture_url"] = json!(format!("/bundle/{name}"));
        }
    }
    Ok(Json(v))
}

async fn bundle_file(State(s): State<Arc<ServiceState>>, UrlPath(file): UrlPath<String>) -> Result<Response, ApiError> {
    let bundle = s.bundle.as_ref().ok_or_else(ApiError::no_bundle)?;
    let path = texture_path(bundle, &file)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no texture named {file}"), None))?;
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, e.to_string(), None))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn stats(State(s): State<Arc<ServiceState>>) -> Json<StatsJson> {
    Json(s.stats())
}

/// Parses and validates a render request body.
pub fn parse_request(body: &[u8], max_pixels: usize) -> Result<(RenderRequest, PinholeCamera), ApiError> {
    let req: RenderRequest = serde_json::from_slice(body).map_err(ApiError::from_json)?;
    let camera = req.camera.to_camera(max_pixels).map_err(ApiError::from_field)?;
    Ok((req, camera))
}

async fn render(State(s): State<Arc<ServiceState>>, body: Bytes) -> Result<Response, ApiError> {
    let (req, camera) = parse_request(&body, s.max_pixels)?;
    if req.mode == RenderMode::Baked && s.bundle.is_none() {
        return Err(ApiError::no_bundle());
    }
    let state = s.clone();
    let out = tokio::task::spawn_blocking(move || state.render(&camera, req.mode))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None))??;
    let png = image_io::encode_png(&out.image);
    if !req.include_depth {
        return Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response());
    }
    let (w, h) = (out.image.width, out.image.height);
    let t_far = s.render_config.t_far;
    Ok(Json(RenderResponse {
        width: w,
        height: h,
        image_png: B64.encode(png),
        depth_png: B64.encode(image_io::encode_depth_png(&out.depth, w, h, t_far)),
        depth_raw: B64.encode(image_io::encode_depth_raw(&out.depth, w, h)),
    })
    .into_response())
}

async fn stream(ws: WebSocketUpgrade, State(s): State<Arc<ServiceState>>) -> Response {
    ws.on_upgrade(move |socket| stream_session(socket, s))
}

type Pending = Option<Result<StreamRequest, String>>;

/// Camera updates land in a watch channel; the render loop always takes the
/// newest one, so updates that arrive during a render are dropped.
async fn stream_session(socket: WebSocket, state: Arc<ServiceState>) {
    let (mut sink, mut source) = socket.split();
    let (tx, mut rx) = watch::channel::<Pending>(None);
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = source.next().await {
            let text = match msg {
                Message::Text(t) => t.to_string(),
                Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
                Message::Close(_) => break,
                _ => continue,
            };
            let parsed = serde_json::from_str::<StreamRequest>(&text).map_err(|e| e.to_string());
            tx.send_replace(Some(parsed));
        }
    });
    while rx.changed().await.is_ok() {
        let Some(item) = rx.borrow_and_update().clone() else {
            continue;
        };
        let reply = match item {
            Err(e) => StreamFrame {
                id: 0,
                width: 0,
                height: 0,
                png: None,
                error: Some(e),
            },
            Ok(req) => stream_frame(&state, req).await,
        };
        let text = serde_json::to_string(&reply).expect("frame serializes");
        if sink.send(Message::Text(text.into())).await.is_err() {
            break;
        }
    }
    reader.abort();
}

async fn stream_frame(state: &Arc<ServiceState>, req: StreamRequest) -> StreamFrame {
    let fail = |e: String| StreamFrame {
        id: req.id,
        width: req.camera.width,
        height: req.camera.height,
        png: None,
        error: Some(e),
    };
    let camera = match req.camera.to_camera(state.max_pixels) {
        Ok(c) => c,
        Err(e) => return fail(e.to_string()),
    };
    let s = state.clone();
    let mode = req.mode;
    match tokio::task::spawn_blocking(move || s.render(&camera, mode)).await {
        Ok(Ok(out)) => StreamFrame {
            id: req.id,
            width: out.image.width,
            height: out.image.height,
            png: Some(B64.encode(image_io::encode_png(&out.image))),
            error: None,
        },
        Ok(Err(e)) => fail(e.message),
        Err(e) => fail(e.to_string()),
    }
}
