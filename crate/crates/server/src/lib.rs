//! HTTP service over an [`Orchestrator`]:
//!
//! - `POST /requests` with `{text, seed}` returns `{id}` and starts the run
//! - `GET /requests/{id}` returns the workspace snapshot
//! - `GET /requests/{id}/events` streams the event log as server-sent
//!   events; `Last-Event-ID` resumes after a given sequence number
//! - `GET /dsms` lists the registered DSM manifests

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use adn_core::orchestrator::{Orchestrator, OrchestratorError};
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Interval between event-log polls while a stream is open.
const POLL: Duration = Duration::from_millis(25);

#[derive(Clone)]
struct AppState {
    orch: Arc<Orchestrator>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitBody {
    pub text: String,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitReply {
    pub id: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn not_found(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown request `{id}`"))
}

async fn submit(State(s): State<AppState>, Json(body): Json<SubmitBody>) -> Response {
    let id = match s.orch.submit(&body.text, body.seed) {
        Ok(id) => id,
        Err(e @ OrchestratorError::EmptyRequest) => {
            return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
        }
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let orch = s.orch.clone();
    let run_id = id.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = orch.run(&run_id) {
            log::error!("request {run_id} failed: {e}");
        }
    });
    (StatusCode::ACCEPTED, Json(SubmitReply { id })).into_response()
}

async fn snapshot(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    match s.orch.snapshot(&id) {
        Some(ws) => Json(ws).into_response(),
        None => not_found(&id),
    }
}

async fn dsms(State(s): State<AppState>) -> Response {
    let manifests: Vec<_> = s.orch.registry().manifests().into_iter().cloned().collect();
    Json(manifests).into_response()
}

/// First sequence number to send: one past `Last-Event-ID` when present.
fn resume_from(headers: &HeaderMap) -> u64 {
    headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map_or(0, |n| n + 1)
}

fn event_stream(
    orch: Arc<Orchestrator>,
    id: String,
    from: u64,
) -> impl Stream<Item = Result<Event, Infallible>> {
    stream::unfold(from, move |next| {
        let orch = orch.clone();
        let id = id.clone();
        async move {
            loop {
                // Read the status before the events so the terminal event
                // is always part of the last batch.
                let terminal = orch.snapshot(&id).is_some_and(|w| w.status.is_terminal());
                let batch = orch.events_since(&id, next).unwrap_or_default();
                if !batch.is_empty() {
                    let last = batch.last().map_or(next, |e| e.seq + 1);
                    let events: Vec<Result<Event, Infallible>> = batch
                        .iter()
                        .map(|e| {
                            Ok(Event::default()
                                .id(e.seq.to_string())
                                .event("workspace")
                                .json_data(e)
                                .expect("event serializes"))
                        })
                        .collect();
                    return Some((stream::iter(events), last));
                }
                if terminal {
                    return None;
                }
                tokio::time::sleep(POLL).await;
            }
        }
    })
    .flat_map(|s| s)
}

async fn events(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Response {
    if s.orch.snapshot(&id).is_none() {
        return not_found(&id);
    }
    let stream = event_stream(s.orch.clone(), id, resume_from(&headers));
    Sse::new(stream)
        .keep_alive(KeepAlive::default())
        .into_response()
}

pub fn router(orch: Arc<Orchestrator>) -> Router {
    Router::new()
        .route("/requests", post(submit))
        .route("/requests/{id}", get(snapshot))
        .route("/requests/{id}/events", get(events))
        .route("/dsms", get(dsms))
        .with_state(AppState { orch })
}

/// Serves the API on `addr` until the process ends.
pub async fn serve(addr: &str, orch: Arc<Orchestrator>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(orch)).await
}
