use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::sync::broadcast::error::RecvError;

use armsim_core::api::{self, ApiError, AppliedAck, CommandEnvelope, Health, ServerMessage};
use armsim_core::emit_urdf;
use armsim_core::sim::Ack;

use crate::session::SessionHandle;

type ApiResult<T> = Result<Json<T>, (StatusCode, Json<ApiError>)>;

fn bad_request(e: JsonRejection) -> (StatusCode, Json<ApiError>) {
    (
        StatusCode::BAD_REQUEST,
        Json(ApiError::new("BadRequest", e.body_text())),
    )
}

fn domain(e: ApiError) -> (StatusCode, Json<ApiError>) {
    (StatusCode::UNPROCESSABLE_ENTITY, Json(e))
}

fn stopped() -> (StatusCode, Json<ApiError>) {
    (
        StatusCode::SERVICE_UNAVAILABLE,
        Json(ApiError::new("Stopped", "session loop has stopped")),
    )
}

/// Runs a CPU-bound operation off the async workers.
async fn compute<Req, T>(
    session: SessionHandle,
    body: Result<Json<Req>, JsonRejection>,
    op: fn(&Req, &armsim_core::RobotModel) -> Result<T, ApiError>,
) -> ApiResult<T>
where
    Req: Send + 'static,
    T: Serialize + Send + 'static,
{
    let Json(req) = body.map_err(bad_request)?;
    tokio::task::spawn_blocking(move || op(&req, session.model()))
        .await
        .map_err(|e| domain(ApiError::new("Internal", e.to_string())))?
        .map(Json)
        .map_err(domain)
}

async fn health(State(s): State<SessionHandle>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model: s.model().name().into(),
        tick: s.latest().tick,
        tick_rate: s.tick_rate(),
    })
}

async fn model(State(s): State<SessionHandle>) -> Json<armsim_core::RobotModel> {
    Json(s.model().as_ref().clone())
}

async fn model_urdf(State(s): State<SessionHandle>) -> impl IntoResponse {
    (
        [(header::CONTENT_TYPE, "application/xml")],
        emit_urdf(s.model()),
    )
}

async fn validate(
    State(s): State<SessionHandle>,
    body: Result<Json<api::ValidateRequest>, JsonRejection>,
) -> ApiResult<api::ValidateResponse> {
    compute(s, body, |req, m| Ok(api::validate(req, m))).await
}

async fn fk(
    State(s): State<SessionHandle>,
    body: Result<Json<api::FkRequest>, JsonRejection>,
) -> ApiResult<armsim_core::FkResult> {
    compute(s, body, api::fk).await
}

async fn ik(
    State(s): State<SessionHandle>,
    body: Result<Json<api::IkRequest>, JsonRejection>,
) -> ApiResult<armsim_core::IkResult> {
    compute(s, body, api::ik).await
}

async fn torque(
    State(s): State<SessionHandle>,
    body: Result<Json<api::TorqueRequest>, JsonRejection>,
) -> ApiResult<armsim_core::TorqueReport> {
    compute(s, body, api::torque).await
}

async fn collide(
    State(s): State<SessionHandle>,
    body: Result<Json<api::CollideRequest>, JsonRejection>,
) -> ApiResult<armsim_core::CollisionReport> {
    compute(s, body, api::collide).await
}

async fn state(State(s): State<SessionHandle>) -> Response {
    Json(s.latest().as_ref()).into_response()
}

async fn command(
    State(s): State<SessionHandle>,
    body: Result<Json<CommandEnvelope>, JsonRejection>,
) -> Result<(StatusCode, Json<AppliedAck>), (StatusCode, Json<ApiError>)> {
    match body {
        Ok(Json(env)) => s
            .submit(env)
            .await
            .map(|ack| (StatusCode::OK, Json(ack)))
            .map_err(|_| stopped()),
        Err(e) => Ok((
            StatusCode::BAD_REQUEST,
            Json(AppliedAck {
                tick: s.latest().tick,
                ack: Ack::malformed(e.body_text()),
            }),
        )),
    }
}

async fn ws(State(s): State<SessionHandle>, upgrade: WebSocketUpgrade) -> Response {
    upgrade.on_upgrade(move |socket| socket_session(s, socket))
}

fn to_text(msg: &ServerMessage) -> Message {
    Message::Text(
        serde_json::to_string(msg)
            .expect("server messages serialize")
            .into(),
    )
}

/// Greets with the current snapshot, then interleaves per-tick states with
/// acks for whatever the client sends.
async fn socket_session(session: SessionHandle, socket: WebSocket) {
    let mut states = session.subscribe();
    let (mut tx, mut rx) = socket.split();
    if tx
        .send(to_text(&ServerMessage::State(
            session.latest().as_ref().clone(),
        )))
        .await
        .is_err()
    {
        return;
    }
    let (ack_tx, mut ack_rx) = tokio::sync::mpsc::channel::<ServerMessage>(64);
    let reader = {
        let session = session.clone();
        tokio::spawn(async move {
            while let Some(Ok(msg)) = rx.next().await {
                let text = match msg {
                    Message::Text(t) => t,
                    Message::Close(_) => break,
                    _ => continue,
                };
                let ack = match serde_json::from_str::<CommandEnvelope>(&text) {
                    Ok(env) => match session.submit(env).await {
                        Ok(ack) => ack,
                        Err(_) => break,
                    },
                    Err(e) => AppliedAck {
                        tick: session.latest().tick,
                        ack: Ack::malformed(e.to_string()),
                    },
                };
                if ack_tx.send(ServerMessage::Ack(ack)).await.is_err() {
                    break;
                }
            }
        })
    };
    loop {
        let out = tokio::select! {
            ack = ack_rx.recv() => match ack {
                Some(ack) => to_text(&ack),
                None => break,
            },
            state = states.recv() => match state {
                Ok(line) => Message::Text(line.as_ref().into()),
                // snapshots are self-contained, so a laggard just resumes
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => break,
            },
        };
        if tx.send(out).await.is_err() {
            break;
        }
    }
    reader.abort();
}

pub fn api_router(session: SessionHandle) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/model", get(model))
        .route("/api/model/urdf", get(model_urdf))
        .route("/api/validate", post(validate))
        .route("/api/fk", post(fk))
        .route("/api/ik", post(ik))
        .route("/api/torque", post(torque))
        .route("/api/collide", post(collide))
        .route("/api/state", get(state))
        .route("/api/command", post(command))
        .route("/ws", get(ws))
        .with_state(session)
}
