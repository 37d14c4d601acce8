//! HTTP/JSON API over a [`Live`] state.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::RwLock;

use jambayes_core::alerting::{Alert, AlertError, AlertPolicy, Route};
use jambayes_core::bottleneck::identify;

use crate::live::{Live, API_SCHEMA_VERSION};

pub type Shared = Arc<RwLock<Live>>;

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Conflict(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "schema_version": API_SCHEMA_VERSION, "error": msg }))).into_response()
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        ApiError::Internal(format!("{e:#}"))
    }
}

impl From<AlertError> for ApiError {
    fn from(e: AlertError) -> Self {
        match e {
            AlertError::Duplicate { .. } => ApiError::Conflict(e.to_string()),
            _ => ApiError::BadRequest(e.to_string()),
        }
    }
}

type ApiResult = Result<Response, ApiError>;

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

fn ok(value: serde_json::Value) -> ApiResult {
    Ok(Json(value).into_response())
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/snapshot", get(snapshot))
        .route("/bottlenecks", get(bottlenecks))
        .route("/forecast/:bottleneck", get(forecast))
        .route("/surprises", get(surprises))
        .route("/future-surprises", get(future_surprises))
        .route("/routes", get(list_routes).post(create_route))
        .route("/policies", get(list_policies).post(create_policy))
        .route("/alerts", get(alerts))
        .route("/replay/advance", post(advance))
        .with_state(state)
}

async fn snapshot(State(s): State<Shared>) -> ApiResult {
    let live = s.read().await;
    Ok(Json(live.snapshot()).into_response())
}

#[derive(Deserialize)]
struct ThresholdQuery {
    threshold: Option<String>,
}

async fn bottlenecks(State(s): State<Shared>, Query(q): Query<ThresholdQuery>) -> ApiResult {
    let live = s.read().await;
    let threshold = match q.threshold {
        Some(t) => t
            .parse::<f64>()
            .map_err(|_| ApiError::BadRequest(format!("threshold {t:?} is not a number")))?,
        None => live.bottlenecks.threshold,
    };
    let set = identify(&live.profile, &live.streams.network, threshold).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    ok(json!({
        "schema_version": API_SCHEMA_VERSION,
        "threshold": set.threshold,
        "bottlenecks": set.bottlenecks,
    }))
}

async fn forecast(State(s): State<Shared>, Path(b): Path<String>) -> ApiResult {
    let live = s.read().await;
    let f = b
        .parse::<usize>()
        .ok()
        .and_then(|b| live.frame.forecasts.get(b))
        .ok_or_else(|| ApiError::NotFound(format!("no bottleneck {b:?}")))?;
    ok(json!({
        "schema_version": API_SCHEMA_VERSION,
        "minute": live.frame.minute,
        "timestamp": live.frame.timestamp,
        "bottleneck": f.bottleneck,
        "jammed": f.jammed,
        "forecast": f.forecast,
    }))
}

async fn surprises(State(s): State<Shared>) -> ApiResult {
    let live = s.read().await;
    ok(json!({
        "schema_version": API_SCHEMA_VERSION,
        "minute": live.frame.minute,
        "timestamp": live.frame.timestamp,
        "surprises": live.frame.surprises,
    }))
}

async fn future_surprises(State(s): State<Shared>) -> ApiResult {
    let live = s.read().await;
    ok(json!({
        "schema_version": API_SCHEMA_VERSION,
        "minute": live.frame.minute,
        "timestamp": live.frame.timestamp,
        "lead_minutes": live.future.as_ref().map(|f| f.lead_minutes),
        "future_surprises": live.frame.future_surprises,
    }))
}

async fn list_routes(State(s): State<Shared>) -> ApiResult {
    let live = s.read().await;
    ok(json!({ "schema_version": API_SCHEMA_VERSION, "routes": live.engine.routes() }))
}

async fn create_route(State(s): State<Shared>, bytes: Bytes) -> ApiResult {
    let route: Route = body(&bytes)?;
    let mut live = s.write().await;
    live.engine.add_route(route.clone())?;
    live.dir.save_policies(&live.engine.store())?;
    tracing::info!(route = %route.name, "route created");
    Ok((StatusCode::CREATED, Json(json!({ "schema_version": API_SCHEMA_VERSION, "route": route }))).into_response())
}

async fn list_policies(State(s): State<Shared>) -> ApiResult {
    let live = s.read().await;
    ok(json!({ "schema_version": API_SCHEMA_VERSION, "policies": live.engine.policies() }))
}

async fn create_policy(State(s): State<Shared>, bytes: Bytes) -> ApiResult {
    let policy: AlertPolicy = body(&bytes)?;
    let mut live = s.write().await;
    live.engine.add_policy(policy.clone())?;
    live.dir.save_policies(&live.engine.store())?;
    tracing::info!(policy = %policy.name, "policy created");
    Ok((StatusCode::CREATED, Json(json!({ "schema_version": API_SCHEMA_VERSION, "policy": policy }))).into_response())
}

#[derive(Deserialize)]
struct SinceQuery {
    since: Option<String>,
}

async fn alerts(State(s): State<Shared>, Query(q): Query<SinceQuery>) -> ApiResult {
    let since = match q.since {
        Some(t) => Some(
            DateTime::parse_from_rfc3339(&t)
                .map_err(|_| ApiError::BadRequest(format!("since {t:?} is not an RFC 3339 timestamp")))?
                .with_timezone(&Utc),
        ),
        None => None,
    };
    let live = s.read().await;
    let alerts: Vec<&Alert> = live
        .alerts
        .iter()
        .filter(|a| since.map_or(true, |t| a.timestamp >= t))
        .collect();
    ok(json!({ "schema_version": API_SCHEMA_VERSION, "alerts": alerts }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdvanceRequest {
    pub minutes: u32,
}

async fn advance(State(s): State<Shared>, bytes: Bytes) -> ApiResult {
    let req: AdvanceRequest = if bytes.is_empty() {
        AdvanceRequest { minutes: 1 }
    } else {
        body(&bytes)?
    };
    let mut live = s.write().await;
    let raised = live.advance(req.minutes)?;
    ok(json!({
        "schema_version": API_SCHEMA_VERSION,
        "minute": live.frame.minute,
        "timestamp": live.frame.timestamp,
        "exhausted": live.exhausted(),
        "alerts": raised,
    }))
}

/// Advances the clock by `rate` simulated minutes every wall-clock second.
pub async fn run_replay(state: Shared, rate: u32) {
    let mut tick = tokio::time::interval(Duration::from_secs(1));
    tick.tick().await;
    loop {
        tick.tick().await;
        let mut live = state.write().await;
        if live.exhausted() {
            tracing::info!(minute = live.frame.minute, "replay reached the end of the stream");
            return;
        }
        match live.advance(rate) {
            Ok(raised) => {
                for a in &raised {
                    tracing::info!(policy = %a.policy, trigger = %a.trigger.label(), summary = %a.summary, "alert");
                }
            }
            Err(e) => {
                tracing::error!("replay stopped: {e:#}");
                return;
            }
        }
    }
}

pub async fn serve(live: Live, host: &str, port: u16, rate: u32) -> anyhow::Result<()> {
    let state: Shared = Arc::new(RwLock::new(live));
    if rate > 0 {
        tokio::spawn(run_replay(state.clone(), rate));
    }
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    tracing::info!(addr = %listener.local_addr()?, rate, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
