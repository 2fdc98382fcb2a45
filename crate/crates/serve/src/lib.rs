//! HTTP service for per-prefix predictions and analysis exports.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/v1/predict` | prediction after every prefix of the posted events |
//! | GET | `/v1/sessions/{id}/analysis` | exported series record for one session |
//! | GET | `/v1/clusters` | exported cluster records |
//! | GET | `/v1/reports/{feature}` | contrast report records for a grouping feature |
//! | POST | `/v1/tags` | record an expert tag (bearer token required) |
//! | GET | `/v1/tags` | list tags, optionally `?feature=..&value=..` |
//! | GET | `/v1/health` | model and export status |

mod error;
mod state;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clickintent_core::analyze::prefix_predictions;
use clickintent_core::contrast::{aggregate_impacts, render_report, ExpertTag, GroupingKey, ReportFormat, TagAck, Verdict};
use clickintent_core::ingest::{extract_features, sessionize, RawEvent, SchemaFingerprint};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use error::ApiError;
pub use state::{AppState, Exports, LoadedModel};

type Shared = Arc<AppState>;

const NDJSON: &str = "application/x-ndjson";
const DEFAULT_SESSION: &str = "request";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictRequest {
    /// Falls back to the first event's `session_id`, then to `"request"`.
    #[serde(default)]
    pub session_id: Option<String>,
    /// Event records as in the event file; `session_id` may be omitted.
    pub events: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub session_id: String,
    /// Probability after each prefix, in timestamp order.
    pub probabilities: Vec<f64>,
    pub model_id: String,
    pub schema_fingerprint: SchemaFingerprint,
    /// Schema attributes missing from the events and filled with defaults.
    pub defaulted_attributes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagRequest {
    pub author: String,
    pub key: GroupingKey,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
    /// Defaults to the server clock.
    #[serde(default)]
    pub timestamp_ms: Option<i64>,
}

#[derive(Debug, Deserialize)]
struct TagQuery {
    feature: Option<String>,
    value: Option<String>,
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/v1/predict", post(predict))
        .route("/v1/sessions/{id}/analysis", get(session_analysis))
        .route("/v1/clusters", get(clusters))
        .route("/v1/reports/{feature}", get(report))
        .route("/v1/tags", post(post_tag).get(list_tags))
        .route("/v1/health", get(health))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        if e.is_syntax() || e.is_eof() {
            ApiError::new(StatusCode::BAD_REQUEST, "format", format!("malformed JSON: {e}"))
        } else {
            ApiError::invalid(e.to_string())
        }
    })
}

/// Runs the model on one request; shared by the handler and callers that
/// want the same computation offline.
pub fn handle_predict(loaded: &LoadedModel, request: PredictRequest) -> Result<PredictResponse, ApiError> {
    if request.events.is_empty() {
        return Err(ApiError::invalid("event list is empty"));
    }
    let model = &loaded.model;
    if request.events.len() > model.schema.max_events {
        return Err(ApiError::invalid(format!(
            "{} events exceed the model limit of {}",
            request.events.len(),
            model.schema.max_events
        )));
    }
    // without an explicit id the events' own id is used, if they carry one
    let session_id = request
        .session_id
        .or_else(|| request.events[0].get("session_id").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| DEFAULT_SESSION.to_string());
    let mut events = Vec::with_capacity(request.events.len());
    for (i, mut v) in request.events.into_iter().enumerate() {
        if let Value::Object(obj) = &mut v {
            match obj.get("session_id") {
                None => {
                    obj.insert("session_id".into(), Value::String(session_id.clone()));
                }
                Some(Value::String(s)) if *s == session_id => {}
                Some(other) => {
                    return Err(ApiError::invalid(format!("event {i}: session_id {other} differs from {session_id:?}")))
                }
            }
        }
        events.push(RawEvent::from_json(v).map_err(|reason| ApiError::invalid(format!("event {i}: {reason}")))?);
    }
    let session = sessionize(events).pop().expect("one session id");
    let (seq, quality) = extract_features(&session, &model.schema)?;
    let series = prefix_predictions(model, &seq)?;
    Ok(PredictResponse {
        session_id,
        probabilities: series.probabilities,
        model_id: loaded.model_id.clone(),
        schema_fingerprint: model.fingerprint(),
        defaulted_attributes: quality.defaulted.len(),
    })
}

async fn predict(State(state): State<Shared>, body: Bytes) -> Result<Json<PredictResponse>, ApiError> {
    let loaded = state.model().ok_or_else(|| ApiError::unavailable("no model loaded"))?;
    let request: PredictRequest = parse_body(&body)?;
    Ok(Json(handle_predict(&loaded, request)?))
}

fn raw(content_type: &'static str, body: String) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

async fn session_analysis(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let exports = state.exports();
    let line = exports.sessions.get(&id).ok_or_else(|| ApiError::not_found(format!("no analysis for session {id}")))?;
    Ok(raw("application/json", line.clone()))
}

async fn clusters(State(state): State<Shared>) -> Result<Response, ApiError> {
    let exports = state.exports();
    let body = exports.clusters.clone().ok_or_else(|| ApiError::not_found("no cluster export loaded"))?;
    Ok(raw(NDJSON, body))
}

async fn report(State(state): State<Shared>, Path(feature): Path<String>) -> Result<Response, ApiError> {
    let exports = state.exports();
    if let Some(text) = exports.reports.get(&feature) {
        return Ok(raw(NDJSON, text.clone()));
    }
    if exports.impacts.is_empty() {
        return Err(ApiError::not_found(format!("no report for feature {feature}")));
    }
    let report = aggregate_impacts(&exports.impacts, &feature).map_err(|e| ApiError::not_found(e.to_string()))?;
    Ok(raw(NDJSON, render_report(&report, ReportFormat::Records)?))
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::AUTHORIZATION)?.to_str().ok()?.strip_prefix("Bearer ")
}

async fn post_tag(State(state): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    if !bearer(&headers).is_some_and(|t| state.token_matches(t)) {
        return Err(ApiError::unauthorized());
    }
    let req: TagRequest = parse_body(&body)?;
    let timestamp_ms = req.timestamp_ms.unwrap_or_else(|| {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as i64)
    });
    let tag = ExpertTag { author: req.author, key: req.key, verdict: req.verdict, note: req.note, timestamp_ms };
    tag.validate()?;
    let store = state.tags.clone();
    let record = tag.clone();
    let ack: TagAck = tokio::task::spawn_blocking(move || store.record(&record))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()))??;
    Ok((StatusCode::CREATED, Json(json!({"sequence": ack.sequence, "tag": tag}))).into_response())
}

async fn list_tags(State(state): State<Shared>, Query(q): Query<TagQuery>) -> Result<Json<Vec<ExpertTag>>, ApiError> {
    let key = match (q.feature, q.value) {
        (Some(feature), Some(value)) => Some(GroupingKey { feature, value }),
        (None, None) => None,
        _ => return Err(ApiError::invalid("feature and value must be given together")),
    };
    let store = state.tags.clone();
    let tags = tokio::task::spawn_blocking(move || store.list(key.as_ref()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()))??;
    Ok(Json(tags))
}

async fn health(State(state): State<Shared>) -> Json<Value> {
    let model = state.model();
    let exports = state.exports();
    Json(json!({
        "model_loaded": model.is_some(),
        "model_id": model.as_ref().map(|m| m.model_id.clone()),
        "schema_fingerprint": model.as_ref().map(|m| m.model.fingerprint()),
        "sessions": exports.sessions.len(),
        "clusters": exports.clusters.is_some(),
        "reports": exports.reports.len(),
    }))
}
