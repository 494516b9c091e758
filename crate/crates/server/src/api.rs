use std::sync::Arc;

use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;
use tower_http::cors::CorsLayer;
use vpsim_core::adapters::AudioClip;
use vpsim_core::pipeline::{Turn, TurnInput};

use crate::service::{App, CreateSession, ServiceError, SessionView};

pub const PROTOCOL_VERSION: &str = "vpsim.v1";
/// WebSocket close code sent to consumers that fall too far behind.
pub const CLOSE_LAGGED: u16 = 4008;

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/turns", post(post_turn))
        .route("/v1/sessions/{id}/transcript", get(transcript))
        .route("/v1/sessions/{id}/close", post(close))
        .route("/v1/sessions/{id}/report", get(report))
        .route("/v1/sessions/{id}/events", get(events))
        .layer(CorsLayer::permissive())
        .with_state(app)
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        use ServiceError::*;
        match self {
            UnknownSession(_) => StatusCode::NOT_FOUND,
            SessionClosed(_) | SessionActive(_) | TurnInFlight(_) => StatusCode::CONFLICT,
            InvalidInput(_) | InvalidOverrides(_) => StatusCode::UNPROCESSABLE_ENTITY,
            UnsupportedCodec(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            EmptySession(_) => StatusCode::UNPROCESSABLE_ENTITY,
            EmptyKnowledgeBase | Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            Kb(_) | Store(_) | Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        use ServiceError::*;
        match self {
            UnknownSession(_) => "unknown_session",
            SessionClosed(_) => "session_closed",
            SessionActive(_) => "session_active",
            TurnInFlight(_) => "turn_in_flight",
            InvalidInput(_) => "invalid_input",
            UnsupportedCodec(_) => "unsupported_codec",
            InvalidOverrides(_) => "invalid_overrides",
            EmptyKnowledgeBase => "empty_knowledge_base",
            EmptySession(_) => "empty_session",
            Unavailable(_) => "session_unavailable",
            Kb(_) | Store(_) | Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (self.status(), Json(body)).into_response()
    }
}

async fn health(State(app): State<Arc<App>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "protocol": PROTOCOL_VERSION,
        "sessions": app.session_count(),
        "syndromes": app.knowledge_base().len(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub session: SessionView,
}

async fn create_session(
    State(app): State<Arc<App>>,
    body: Option<Json<CreateSession>>,
) -> Result<(StatusCode, Json<CreatedSession>), ServiceError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let view = app.create_session(req).await?;
    Ok((
        StatusCode::CREATED,
        Json(CreatedSession {
            session_id: view.session_id.clone(),
            session: view,
        }),
    ))
}

async fn get_session(State(app): State<Arc<App>>, Path(id): Path<String>) -> Result<Json<SessionView>, ServiceError> {
    Ok(Json(app.session(&id)?.view()))
}

/// Exactly one of `text` or `audio`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRequest {
    pub text: Option<String>,
    pub audio: Option<AudioClip>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TurnResponse {
    pub turn: Turn,
}

async fn post_turn(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    Json(req): Json<TurnRequest>,
) -> Result<Response, ServiceError> {
    let input = match (req.text, req.audio) {
        (Some(t), None) => TurnInput::Text(t),
        (None, Some(a)) => TurnInput::Audio(a),
        _ => return Err(ServiceError::InvalidInput("send exactly one of `text` or `audio`".into())),
    };
    let turn = app.post_turn(&id, input).await?.turn;
    if let Some(failure) = &turn.error {
        let body = json!({
            "error": {
                "code": "turn_failed",
                "stage": failure.stage,
                "kind": failure.kind,
                "message": failure.to_string(),
            },
            "turn": turn,
        });
        return Ok((StatusCode::BAD_GATEWAY, Json(body)).into_response());
    }
    Ok(Json(TurnResponse { turn }).into_response())
}

async fn transcript(State(app): State<Arc<App>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(app.transcript(&id)?).into_response())
}

async fn close(State(app): State<Arc<App>>, Path(id): Path<String>) -> Result<Json<SessionView>, ServiceError> {
    Ok(Json(app.close_session(&id).await?))
}

async fn report(State(app): State<Arc<App>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(app.report(&id)?).into_response())
}

async fn events(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    ws: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Result<Response, ServiceError> {
    let session = app.session(&id)?;
    let ws = match ws {
        Ok(ws) => ws,
        Err(rejection) => return Ok(rejection.into_response()),
    };
    // Subscribe before the handshake so nothing published after this
    // request is missed.
    let rx = session.events().subscribe();
    Ok(ws.on_upgrade(move |socket| forward(socket, rx)))
}

async fn forward(mut socket: WebSocket, mut rx: tokio::sync::broadcast::Receiver<crate::service::ServerEvent>) {
    loop {
        tokio::select! {
            ev = rx.recv() => match ev {
                Ok(ev) => {
                    let text = serde_json::to_string(&ev).expect("event serializes");
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(n)) => {
                    tracing::warn!(skipped = n, "event consumer lagged; disconnecting");
                    let frame = CloseFrame { code: CLOSE_LAGGED, reason: "consumer lagged".into() };
                    let _ = socket.send(Message::Close(Some(frame))).await;
                    return;
                }
                Err(RecvError::Closed) => {
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
