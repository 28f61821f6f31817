//! HTTP and WebSocket surface. Payload shapes are documented in `docs/api.md`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bendaid::haptic::{HapticMode, ParamKey};
use bendaid::sequencer::{load_midi, make_reference_clip, save_midi, Clip, ClipJson, SequencerError, SmfError};
use bendaid::session::{export_csv, ReferenceVibrato};
use bendaid::sim::GestureProfile;
use futures::{SinkExt, StreamExt};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::DeviceSpec;
use crate::device::DeviceError;
use crate::fanout::Fanout;
use crate::owner::{BridgeError, BridgeHandle};

#[derive(Clone)]
pub struct AppState {
    pub bridge: BridgeHandle,
    pub clip: Arc<Mutex<Clip>>,
}

impl AppState {
    pub fn new(bridge: BridgeHandle) -> Self {
        Self {
            bridge,
            clip: Arc::new(Mutex::new(Clip::default())),
        }
    }
}

/// Error body: `{"error": <code>, "message": <text>}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl ToString) -> Self {
        Self {
            status,
            code,
            message: message.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

impl From<BridgeError> for ApiError {
    fn from(e: BridgeError) -> Self {
        use StatusCode as S;
        let (status, code) = match &e {
            BridgeError::NotConnected => (S::CONFLICT, "not_connected"),
            BridgeError::Device(DeviceError::Open { .. }) => (S::BAD_GATEWAY, "device_open"),
            BridgeError::Device(DeviceError::Unsupported(_)) => (S::UNPROCESSABLE_ENTITY, "unsupported"),
            BridgeError::Device(DeviceError::Gesture(_)) => (S::UNPROCESSABLE_ENTITY, "invalid_gesture"),
            BridgeError::Device(_) => (S::BAD_GATEWAY, "device"),
            BridgeError::Config(_) => (S::UNPROCESSABLE_ENTITY, "invalid_param"),
            BridgeError::AlreadyRecording(_) => (S::CONFLICT, "already_recording"),
            BridgeError::NoActiveRecording => (S::CONFLICT, "no_active_recording"),
            BridgeError::UnknownRecording(_) => (S::NOT_FOUND, "unknown_recording"),
            BridgeError::Save(_) | BridgeError::InvalidConfig(_) => (S::INTERNAL_SERVER_ERROR, "internal"),
            BridgeError::OwnerGone => (S::SERVICE_UNAVAILABLE, "owner_gone"),
        };
        ApiError::new(status, code, e)
    }
}

impl From<SequencerError> for ApiError {
    fn from(e: SequencerError) -> Self {
        match e {
            SequencerError::UnknownNote(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_note", e),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_edit", e),
        }
    }
}

impl From<SmfError> for ApiError {
    fn from(e: SmfError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_midi", e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn body<T>(b: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    Ok(b?.0)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/modes", get(modes))
        .route("/api/state", get(session_state))
        .route("/api/stats", get(stats))
        .route("/api/connect", post(connect))
        .route("/api/disconnect", post(disconnect))
        .route("/api/mode", post(set_mode))
        .route("/api/zero", post(zero))
        .route("/api/param", post(set_param))
        .route("/api/ping", post(ping))
        .route("/api/sim/gesture", post(load_gesture))
        .route("/api/record", get(list_recordings))
        .route("/api/record/start", post(start_recording))
        .route("/api/record/stop", post(stop_recording))
        .route("/api/record/{file}", get(download_recording))
        .route("/api/clip", get(get_clip).post(put_clip))
        .route("/api/clip/clear", post(clear_clip))
        .route("/api/clip/reference", post(reference_clip))
        .route("/api/clip/select", post(select_note))
        .route("/api/clip/notes", post(add_note))
        .route("/api/clip/notes/{id}", axum::routing::delete(delete_note))
        .route("/api/clip/notes/{id}/move", post(move_note))
        .route("/api/clip/notes/{id}/resize", post(resize_note))
        .route("/api/midi", get(get_midi).post(post_midi))
        .route("/api/reference.csv", get(reference_csv))
        .route("/ws/telemetry", get(ws_telemetry))
        .with_state(state)
}

async fn modes() -> Json<serde_json::Value> {
    Json(json!({ "modes": HapticMode::ALL }))
}

async fn session_state(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.bridge.state().await?))
}

async fn stats(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "loop": s.bridge.loop_stats(),
        "clients": s.bridge.client_stats(),
        "downsample": s.bridge.downsample(),
    }))
}

#[derive(Debug, Default, Deserialize)]
struct ConnectBody {
    device: Option<DeviceSpec>,
}

/// Body is optional; without one the configured device is used.
async fn connect(State(s): State<AppState>, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let req: ConnectBody = if raw.iter().all(u8::is_ascii_whitespace) {
        ConnectBody::default()
    } else {
        serde_json::from_slice(&raw).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e))?
    };
    Ok(Json(s.bridge.connect(req.device).await?))
}

async fn disconnect(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.bridge.disconnect().await?))
}

#[derive(Debug, Deserialize)]
struct ModeBody {
    name: String,
}

async fn set_mode(
    State(s): State<AppState>,
    b: Result<Json<ModeBody>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let name = body(b)?.name;
    let mode: HapticMode = name
        .to_ascii_uppercase()
        .parse()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_mode", e))?;
    s.bridge.set_mode(mode).await?;
    Ok(Json(json!({ "mode": mode })))
}

async fn zero(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    s.bridge.zero().await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
struct ParamBody {
    key: String,
    value: f64,
}

async fn set_param(
    State(s): State<AppState>,
    b: Result<Json<ParamBody>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let b = body(b)?;
    let key: ParamKey = b
        .key
        .parse()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_param", e))?;
    s.bridge.set_param(key, b.value).await?;
    Ok(Json(json!({ "key": key.name(), "value": b.value })))
}

#[derive(Debug, Deserialize)]
struct PingBody {
    nonce: u64,
}

async fn ping(State(s): State<AppState>, b: Result<Json<PingBody>, JsonRejection>) -> ApiResult<impl IntoResponse> {
    s.bridge.ping(body(b)?.nonce).await?;
    Ok(StatusCode::ACCEPTED)
}

async fn load_gesture(
    State(s): State<AppState>,
    b: Result<Json<GestureProfile<f64>>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    s.bridge.load_gesture(body(b)?).await?;
    Ok(StatusCode::ACCEPTED)
}

async fn list_recordings(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "recordings": s.bridge.recording_ids() }))
}

async fn start_recording(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    let id = s.bridge.start_recording().await?;
    Ok(Json(json!({ "id": id })))
}

async fn stop_recording(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.bridge.stop_recording().await?))
}

async fn download_recording(State(s): State<AppState>, Path(file): Path<String>) -> ApiResult<Response> {
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, "unknown_recording", format!("no recording `{file}`"));
    let id: u64 = file
        .strip_suffix(".csv")
        .and_then(|id| id.parse().ok())
        .ok_or_else(not_found)?;
    let csv = s.bridge.recording_csv(id)?;
    Ok(csv_response(csv.as_slice().to_vec()))
}

fn csv_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "text/csv")], bytes).into_response()
}

fn clip_json(c: &Clip) -> Json<ClipJson> {
    Json(ClipJson::from(c))
}

async fn get_clip(State(s): State<AppState>) -> Json<ClipJson> {
    clip_json(&s.clip.lock())
}

async fn put_clip(
    State(s): State<AppState>,
    b: Result<Json<ClipJson>, JsonRejection>,
) -> ApiResult<Json<ClipJson>> {
    let clip = Clip::try_from(body(b)?)?;
    let mut c = s.clip.lock();
    *c = clip;
    Ok(clip_json(&c))
}

async fn clear_clip(State(s): State<AppState>) -> Json<ClipJson> {
    let mut c = s.clip.lock();
    c.clear();
    clip_json(&c)
}

async fn reference_clip(State(s): State<AppState>) -> Json<ClipJson> {
    let mut c = s.clip.lock();
    *c = make_reference_clip();
    clip_json(&c)
}

#[derive(Debug, Deserialize)]
struct SelectBody {
    id: u64,
    #[serde(default)]
    extend: bool,
}

async fn select_note(
    State(s): State<AppState>,
    b: Result<Json<SelectBody>, JsonRejection>,
) -> ApiResult<Json<ClipJson>> {
    let b = body(b)?;
    let mut c = s.clip.lock();
    if b.extend {
        c.extend_selection(b.id)?;
    } else {
        c.select(b.id)?;
    }
    Ok(clip_json(&c))
}

#[derive(Debug, Deserialize)]
struct AddNoteBody {
    pitch: i64,
    start_ticks: i64,
    duration_ticks: i64,
    velocity: Option<u8>,
}

#[derive(Serialize)]
struct Added {
    id: u64,
    clip: ClipJson,
}

async fn add_note(
    State(s): State<AppState>,
    b: Result<Json<AddNoteBody>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let b = body(b)?;
    let mut c = s.clip.lock();
    let id = match b.velocity {
        Some(v) => c.add_note_with_velocity(b.pitch, b.start_ticks, b.duration_ticks, v)?,
        None => c.add_note(b.pitch, b.start_ticks, b.duration_ticks)?,
    };
    Ok((StatusCode::CREATED, Json(Added { id, clip: ClipJson::from(&*c) })))
}

async fn delete_note(State(s): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<ClipJson>> {
    let mut c = s.clip.lock();
    c.delete_note(id)?;
    Ok(clip_json(&c))
}

#[derive(Debug, Deserialize)]
struct MoveBody {
    #[serde(default)]
    delta_ticks: i64,
    #[serde(default)]
    delta_pitch: i64,
}

async fn move_note(
    State(s): State<AppState>,
    Path(id): Path<u64>,
    b: Result<Json<MoveBody>, JsonRejection>,
) -> ApiResult<Json<ClipJson>> {
    let b = body(b)?;
    let mut c = s.clip.lock();
    c.move_note(id, b.delta_ticks, b.delta_pitch)?;
    Ok(clip_json(&c))
}

#[derive(Debug, Deserialize)]
struct ResizeBody {
    start_ticks: Option<i64>,
    /// Exclusive.
    end_ticks: Option<i64>,
}

async fn resize_note(
    State(s): State<AppState>,
    Path(id): Path<u64>,
    b: Result<Json<ResizeBody>, JsonRejection>,
) -> ApiResult<Json<ClipJson>> {
    let b = body(b)?;
    let mut c = s.clip.lock();
    c.resize_note(id, b.start_ticks, b.end_ticks)?;
    Ok(clip_json(&c))
}

async fn get_midi(State(s): State<AppState>) -> ApiResult<Response> {
    let bytes = save_midi(&s.clip.lock())?;
    Ok(([(header::CONTENT_TYPE, "audio/midi")], bytes).into_response())
}

async fn post_midi(State(s): State<AppState>, raw: Bytes) -> ApiResult<Json<ClipJson>> {
    let clip = load_midi(&raw)?;
    let mut c = s.clip.lock();
    *c = clip;
    Ok(clip_json(&c))
}

#[derive(Debug, Deserialize)]
struct ReferenceQuery {
    depth_cents: Option<f64>,
    rate_hz: Option<f64>,
}

async fn reference_csv(q: Query<ReferenceQuery>) -> ApiResult<Response> {
    let mut r = ReferenceVibrato::<f64>::default();
    r.depth_cents = q.depth_cents.unwrap_or(r.depth_cents);
    r.rate_hz = q.rate_hz.unwrap_or(r.rate_hz);
    let contour = r
        .contour()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_reference", e))?;
    Ok(csv_response(export_csv(&contour)))
}

async fn ws_telemetry(ws: WebSocketUpgrade, State(s): State<AppState>) -> Response {
    let fanout = s.bridge.fanout().clone();
    ws.on_upgrade(move |socket| stream_telemetry(socket, fanout))
}

async fn stream_telemetry(socket: WebSocket, fanout: Arc<Fanout>) {
    let sub = fanout.subscribe();
    let (mut tx, mut rx) = socket.split();
    loop {
        tokio::select! {
            batch = sub.next_batch() => {
                for f in batch {
                    let text = serde_json::to_string(&f).expect("telemetry serializes");
                    if tx.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
            }
            msg = rx.next() => match msg {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
