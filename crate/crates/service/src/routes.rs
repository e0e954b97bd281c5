use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use skynav::attention::AttentionClick;
use skynav::dynamics::DroneState;
use skynav::episode::{DialogRound, Episode};
use skynav::overview::{render_overview, OverviewStyle};
use skynav::protocol::{shortcut_questions, AgentMessage, Phase, ProtocolError, SessionMode, SimMessage};
use skynav::raster::{encode_png, RasterEnvironment};
use skynav::CameraModel;
use std::sync::Arc;
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::state::{AppState, CreateSession, SessionHandle, SessionSlot};

pub fn router(state: AppState) -> Router {
    let app = Router::new()
        .route("/health", get(health))
        .route("/environments", get(environments))
        .route("/datasets", get(datasets))
        .route("/shortcuts", get(shortcuts))
        .route("/episodes/{id}/overview.png", get(episode_overview))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show).delete(remove))
        .route("/sessions/{id}/messages", post(send))
        .route("/sessions/{id}/commander", post(commander))
        .route("/sessions/{id}/observations/{file}", get(observation))
        .route("/sessions/{id}/overview.png", get(session_overview))
        .route("/sessions/{id}/ws", get(socket));
    let app = match &state.config().static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.with_state(state)
}

/// Runs CPU-bound session work off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Worker(e.to_string()))?
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "sessions": state.session_count(),
    }))
}

async fn environments(State(state): State<AppState>) -> Json<serde_json::Value> {
    let list: Vec<_> = state
        .environments()
        .map(|(id, e)| {
            json!({
                "env_id": id,
                "width_px": e.env.width_px(),
                "height_px": e.env.height_px(),
                "meters_per_pixel": e.env.meters_per_pixel(),
                "objects": e.objects.len(),
            })
        })
        .collect();
    Json(json!({ "environments": list }))
}

async fn datasets(State(state): State<AppState>) -> Json<serde_json::Value> {
    let episodes: Vec<_> = state
        .episodes()
        .map(|e| {
            json!({
                "episode_id": e.episode_id,
                "env_id": e.env_id,
                "split": e.split,
                "rounds": e.round_count(),
                "recorded_successful": e.is_recorded_successful(),
            })
        })
        .collect();
    Json(json!({
        "dataset": state.config().dataset,
        "episodes": episodes,
    }))
}

async fn shortcuts() -> Json<Vec<String>> {
    Json(shortcut_questions(None))
}

#[derive(Debug, Deserialize)]
struct RoundQuery {
    round: Option<usize>,
}

fn overview_png(env: &RasterEnvironment, ep: &Episode, round: Option<usize>, cam: &CameraModel) -> Result<Vec<u8>, ServiceError> {
    let round = round.unwrap_or(ep.round_count());
    let render = render_overview(env, ep, round, cam, &OverviewStyle::default())?;
    Ok(encode_png(&render.image))
}

async fn episode_overview(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RoundQuery>,
) -> Result<Response, ServiceError> {
    let bytes = blocking(move || {
        let ep = state.episode(&id)?;
        overview_png(&state.env(&ep.env_id)?.env, ep, q.round, state.camera())
    })
    .await?;
    Ok(png(bytes))
}

#[derive(Debug, Serialize)]
struct Created {
    #[serde(flatten)]
    handle: SessionHandle,
    messages: Vec<SimMessage>,
}

async fn create(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Created>), ServiceError> {
    let req: CreateSession = if body.is_empty() {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(e.to_string()))?
    };
    let (handle, messages) = blocking(move || state.create_session(&req)).await?;
    Ok((StatusCode::CREATED, Json(Created { handle, messages })))
}

/// Snapshot of a session for (re)connecting clients.
#[derive(Debug, Serialize)]
struct SessionView {
    #[serde(flatten)]
    handle: SessionHandle,
    episode_id: String,
    env_id: String,
    mode: SessionMode,
    phase: Phase,
    step: usize,
    drone: DroneState,
    rounds: Vec<DialogRound>,
    attention_clicks: Vec<AttentionClick>,
    success: Option<bool>,
}

async fn show(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ServiceError> {
    let slot = state.session(&id)?;
    let live = slot.lock();
    let s = &live.session;
    Ok(Json(SessionView {
        handle: slot.handle.clone(),
        episode_id: s.setup().episode_id.clone(),
        env_id: s.setup().env_id.clone(),
        mode: s.setup().config.mode,
        phase: s.phase(),
        step: s.step_count(),
        drone: *s.drone(),
        rounds: s.rounds().to_vec(),
        attention_clicks: s.attention_clicks().to_vec(),
        success: s.success(),
    }))
}

async fn remove(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ServiceError> {
    state.remove_session(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

/// Frames accepted from clients: any agent message, plus commander text
/// for human-commander front ends.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ClientFrame {
    Agent(AgentMessage),
    Commander(CommanderText),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type")]
enum CommanderText {
    Commander { text: String },
}

fn handle_frame(state: &AppState, slot: &SessionSlot, body: &[u8]) -> Result<Vec<SimMessage>, ServiceError> {
    let frame: ClientFrame = serde_json::from_slice(body).map_err(ProtocolError::from)?;
    let mut live = slot.lock();
    let out = match frame {
        ClientFrame::Agent(msg) => live.session.step(msg)?,
        ClientFrame::Commander(CommanderText::Commander { text }) => live.session.deliver_commander(&text)?,
    };
    state.persist_if_done(&mut live)?;
    Ok(out)
}

async fn send(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Vec<SimMessage>>, ServiceError> {
    let slot = state.session(&id)?;
    let out = blocking(move || handle_frame(&state, &slot, &body)).await?;
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct CommanderBody {
    text: String,
}

async fn commander(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<CommanderBody>,
) -> Result<Json<Vec<SimMessage>>, ServiceError> {
    let slot = state.session(&id)?;
    let frame = serde_json::to_vec(&json!({ "type": "Commander", "text": body.text }))
        .map_err(|e| ServiceError::Worker(e.to_string()))?;
    let out = blocking(move || handle_frame(&state, &slot, &frame)).await?;
    Ok(Json(out))
}

async fn observation(
    State(state): State<AppState>,
    Path((id, file)): Path<(String, String)>,
) -> Result<Response, ServiceError> {
    let step: usize = file
        .strip_suffix(".png")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ServiceError::UnknownStep(file.clone()))?;
    let slot = state.session(&id)?;
    let live = slot.lock();
    let bytes = live
        .session
        .observation_png(step)
        .ok_or_else(|| ServiceError::UnknownStep(step.to_string()))?
        .to_vec();
    Ok(png(bytes))
}

async fn session_overview(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RoundQuery>,
) -> Result<Response, ServiceError> {
    let slot = state.session(&id)?;
    let bytes = blocking(move || {
        let live = slot.lock();
        let s = &live.session;
        overview_png(s.env(), &s.to_episode(), q.round, &s.setup().config.camera)
    })
    .await?;
    Ok(png(bytes))
}

async fn socket(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ServiceError> {
    let slot = state.session(&id)?;
    Ok(ws.on_upgrade(move |sock| run_socket(state, slot, sock)))
}

/// One reply frame per simulator message; failures become an error frame
/// and leave the session untouched.
async fn run_socket(state: AppState, slot: Arc<SessionSlot>, mut sock: WebSocket) {
    while let Some(Ok(frame)) = sock.recv().await {
        let body = match frame {
            Message::Text(t) => Bytes::from(t.as_str().to_owned()),
            Message::Binary(b) => b,
            Message::Close(_) => break,
            _ => continue,
        };
        let (st, sl) = (state.clone(), slot.clone());
        let replies = match blocking(move || handle_frame(&st, &sl, &body)).await {
            Ok(msgs) => msgs.iter().map(|m| serde_json::to_string(m).unwrap_or_default()).collect(),
            Err(e) => vec![e.to_json().to_string()],
        };
        for r in replies {
            if sock.send(Message::Text(r.into())).await.is_err() {
                return;
            }
        }
    }
}
