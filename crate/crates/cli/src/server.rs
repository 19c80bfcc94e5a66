//! HTTP API and server-sent event stream over live sessions.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cohort_core::events::EventRecord;
use cohort_core::runtime::{Session, SessionConfig, SessionError, SessionHandle};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::watch;

/// Records of one session mirrored out of the turn loop, so readers never
/// wait on a running turn.
struct Feed {
    records: Mutex<Vec<EventRecord>>,
    len: watch::Sender<u64>,
}

struct Live {
    handle: Arc<SessionHandle>,
    feed: Arc<Feed>,
}

pub struct AppState {
    base: SessionConfig,
    sessions: RwLock<BTreeMap<String, Arc<Live>>>,
    counter: AtomicU64,
    log_dir: Option<PathBuf>,
    paced: bool,
}

impl AppState {
    /// `base` is the template every new session starts from. With
    /// `log_dir`, each session writes `<dir>/<session_id>.jsonl`.
    pub fn new(base: SessionConfig, log_dir: Option<PathBuf>, paced: bool) -> Self {
        Self {
            base,
            sessions: RwLock::new(BTreeMap::new()),
            counter: AtomicU64::new(0),
            log_dir,
            paced,
        }
    }

    fn get(&self, id: &str) -> Result<Arc<Live>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id}")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", axum::routing::delete(close_session))
        .route("/api/sessions/{id}/utterance", post(post_utterance))
        .route("/api/sessions/{id}/events", get(events))
        .route("/api/sessions/{id}/world", get(world))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match &e {
            SessionError::Config(c) => Self {
                status: StatusCode::BAD_REQUEST,
                body: json!({ "error": e.to_string(), "field": c.field }),
            },
            SessionError::Closed => Self::new(StatusCode::CONFLICT, e.to_string()),
            SessionError::EmptyText | SessionError::UnknownAddressee(_) | SessionError::Turn(_) => {
                Self::new(StatusCode::BAD_REQUEST, e.to_string())
            }
            SessionError::Log(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Recursively overlays `patch` onto `base`; objects merge, everything else
/// replaces.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Applies JSON overrides to a config, re-validating the result.
pub fn apply_overrides(base: &SessionConfig, overrides: Value) -> Result<SessionConfig, SessionError> {
    let mut v = serde_json::to_value(base).expect("config serializes");
    merge_json(&mut v, overrides);
    let cfg: SessionConfig = serde_json::from_value(v).map_err(|e| {
        SessionError::Config(cohort_core::runtime::ConfigError::new("overrides", e.to_string()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Option<Json<Value>>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let overrides = body.map(|Json(v)| v).unwrap_or(Value::Null);
    if !(overrides.is_object() || overrides.is_null()) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "body must be a JSON object of config overrides"));
    }
    let cfg = if overrides.is_null() {
        state.base.clone()
    } else {
        apply_overrides(&state.base, overrides)?
    };
    let n = state.counter.fetch_add(1, Ordering::SeqCst) + 1;
    let id = format!("s{n}");
    let log_path = state.log_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")));
    let paced = state.paced;
    let sid = id.clone();
    let live = tokio::task::spawn_blocking(move || -> Result<Live, SessionError> {
        let mut session = Session::create(cfg, &sid, log_path.as_deref())?;
        session.set_paced(paced);
        let initial = session.log().records().to_vec();
        let (len, _) = watch::channel(initial.len() as u64);
        let feed = Arc::new(Feed {
            records: Mutex::new(initial),
            len,
        });
        let sink = feed.clone();
        session.log_mut().subscribe(move |r| {
            let mut records = sink.records.lock().unwrap_or_else(|e| e.into_inner());
            records.push(r.clone());
            sink.len.send_replace(records.len() as u64);
        });
        Ok(Live {
            handle: Arc::new(SessionHandle::new(session)),
            feed,
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    state
        .sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id.clone(), Arc::new(live));
    log::info!("created session {id}");
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn close_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let live = state.get(&id)?;
    tokio::task::spawn_blocking(move || live.handle.close())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct UtteranceBody {
    text: String,
    #[serde(default)]
    addressee: Option<String>,
}

async fn post_utterance(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<UtteranceBody>,
) -> Result<Json<Value>, ApiError> {
    let live = state.get(&id)?;
    let record = tokio::task::spawn_blocking(move || live.handle.post_utterance(&body.text, body.addressee.as_deref()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(serde_json::to_value(record).expect("turn records serialize")))
}

async fn world(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let live = state.get(&id)?;
    // Waits for an in-flight turn, so the snapshot is always between turns.
    let world = tokio::task::spawn_blocking(move || live.handle.lock().world().clone())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(serde_json::to_value(world).expect("world serializes")))
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    from_seq: Option<u64>,
}

/// Streams records with `seq >= start` in order, then follows the live
/// feed. Each record is delivered once per connection.
fn follow(feed: Arc<Feed>, start: u64) -> impl Stream<Item = Result<SseEvent, Infallible>> {
    let rx = feed.len.subscribe();
    stream::unfold((feed, rx, start), |(feed, mut rx, cursor)| async move {
        loop {
            let batch: Vec<EventRecord> = {
                let records = feed.records.lock().unwrap_or_else(|e| e.into_inner());
                records.get(cursor as usize..).map(<[EventRecord]>::to_vec).unwrap_or_default()
            };
            if !batch.is_empty() {
                let next = cursor + batch.len() as u64;
                let events: Vec<Result<SseEvent, Infallible>> = batch
                    .iter()
                    .map(|r| {
                        Ok(SseEvent::default()
                            .id(r.seq.to_string())
                            .data(serde_json::to_string(r).expect("records serialize")))
                    })
                    .collect();
                return Some((stream::iter(events), (feed, rx, next)));
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    })
    .flat_map(|s| s)
}

async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let live = state.get(&id)?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(|last| last + 1);
    let start = resume.or(q.from_seq).unwrap_or(0);
    Ok(Sse::new(follow(live.feed.clone(), start)).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_is_recursive() {
        let mut base = json!({"a": 1, "b": {"c": 2, "d": 3}});
        merge_json(&mut base, json!({"b": {"c": 9}, "e": [1]}));
        assert_eq!(base, json!({"a": 1, "b": {"c": 9, "d": 3}, "e": [1]}));
    }
}
