//! HTTP service over a shared [`Engine`].
//!
//! Reads run concurrently under a read lock. Decisions and model swaps take
//! the write lock; training itself runs under the read lock and only the
//! install step writes, so requests already in flight finish on the old model.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use histrel_core::{ApiError, DecisionRequest, Engine, EntityId, Error, ErrorCode, FeatureSpec, ModelChoice, Result, RunConfig, Unit};

pub struct AppState {
    engine: RwLock<Engine>,
    trains: Mutex<BTreeMap<String, (TrainRequest, Value)>>,
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct HttpError(pub ApiError);

impl From<Error> for HttpError {
    fn from(e: Error) -> Self {
        HttpError(e.into())
    }
}

pub fn status_for(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::NotFound => StatusCode::NOT_FOUND,
        ErrorCode::Conflict => StatusCode::CONFLICT,
        ErrorCode::Schema | ErrorCode::Parameter => StatusCode::BAD_REQUEST,
        ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        (status_for(self.0.code), Json(self.0)).into_response()
    }
}

fn api(code: ErrorCode, message: impl Into<String>) -> HttpError {
    HttpError(ApiError { code, message: message.into(), detail: None })
}

type Reply<T> = std::result::Result<Json<T>, HttpError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub request_id: String,
    pub spec: String,
    #[serde(default = "auto")]
    pub model: String,
    #[serde(default)]
    pub unit: Option<Unit>,
}

fn auto() -> String {
    "auto".into()
}

async fn with_engine<T: Send + 'static>(
    state: &Shared,
    f: impl FnOnce(&Engine) -> Result<T> + Send + 'static,
) -> std::result::Result<T, HttpError> {
    let s = state.clone();
    tokio::task::spawn_blocking(move || f(&s.engine.read().unwrap_or_else(PoisonError::into_inner)))
        .await
        .map_err(|e| api(ErrorCode::Internal, e.to_string()))?
        .map_err(HttpError::from)
}

async fn with_engine_mut<T: Send + 'static>(
    state: &Shared,
    f: impl FnOnce(&mut Engine) -> Result<T> + Send + 'static,
) -> std::result::Result<T, HttpError> {
    let s = state.clone();
    tokio::task::spawn_blocking(move || f(&mut s.engine.write().unwrap_or_else(PoisonError::into_inner)))
        .await
        .map_err(|e| api(ErrorCode::Internal, e.to_string()))?
        .map_err(HttpError::from)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> std::result::Result<T, HttpError> {
    serde_json::from_slice(body).map_err(|e| api(ErrorCode::Schema, format!("bad request body: {e}")))
}

fn to_value(v: impl Serialize) -> std::result::Result<Value, HttpError> {
    serde_json::to_value(v).map_err(|e| api(ErrorCode::Internal, e.to_string()))
}

async fn health(State(state): State<Shared>) -> Reply<Value> {
    let summary = with_engine(&state, |e| Ok(e.summary())).await?;
    Ok(Json(json!({ "status": "ok", "summary": summary })))
}

async fn entity(State(state): State<Shared>, Path(id): Path<String>) -> Reply<Value> {
    let id = EntityId::new(id)?;
    Ok(Json(to_value(with_engine(&state, move |e| e.entity_view(&id)).await?)?))
}

async fn recommendations(State(state): State<Shared>, Query(q): Query<HashMap<String, String>>) -> Reply<Value> {
    let entity = q
        .get("entity")
        .ok_or_else(|| api(ErrorCode::Parameter, "missing query parameter `entity`"))?;
    let id = EntityId::new(entity.as_str())?;
    let limit = match q.get("limit") {
        Some(l) => match l.parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => return Err(api(ErrorCode::Parameter, format!("limit must be a positive integer, got `{l}`"))),
        },
        None => None,
    };
    let recs = with_engine(&state, move |e| e.recommend(&id, limit)).await?;
    Ok(Json(json!({ "entity": entity, "count": recs.len(), "recommendations": recs })))
}

async fn decisions(State(state): State<Shared>, body: Bytes) -> Reply<Value> {
    let req: DecisionRequest = parse_body(&body)?;
    let outcome = with_engine_mut(&state, move |e| e.decide(req)).await?;
    Ok(Json(to_value(outcome)?))
}

async fn eda_report(State(state): State<Shared>) -> Reply<Value> {
    Ok(Json(to_value(with_engine(&state, |e| e.eda_report()).await?)?))
}

async fn grid(State(state): State<Shared>, Query(q): Query<HashMap<String, String>>) -> Reply<Value> {
    let units = match q.get("unit") {
        Some(u) => vec![u.parse::<Unit>()?],
        None => vec![Unit::HistorianPair, Unit::CollectionPair],
    };
    let grids = with_engine(&state, move |e| {
        units
            .into_iter()
            .map(|u| Ok((u.as_str().to_string(), e.grid(u)?)))
            .collect::<Result<BTreeMap<_, _>>>()
    })
    .await?;
    Ok(Json(to_value(grids)?))
}

async fn train(State(state): State<Shared>, body: Bytes) -> Reply<Value> {
    let req: TrainRequest = parse_body(&body)?;
    if req.request_id.trim().is_empty() {
        return Err(api(ErrorCode::Parameter, "request_id must not be empty"));
    }
    let cached = |state: &Shared, req: &TrainRequest| -> std::result::Result<Option<Value>, HttpError> {
        match state.trains.lock().unwrap_or_else(PoisonError::into_inner).get(&req.request_id) {
            Some((prev, resp)) if prev == req => Ok(Some(resp.clone())),
            Some(_) => Err(api(ErrorCode::Conflict, format!("request `{}` already used", req.request_id))),
            None => Ok(None),
        }
    };
    if let Some(resp) = cached(&state, &req)? {
        return Ok(Json(resp));
    }
    let spec = FeatureSpec::parse(&req.spec)?;
    let choice: ModelChoice = req.model.parse()?;
    let unit = req.unit.unwrap_or(Unit::HistorianPair);
    let outcome = with_engine(&state, move |e| e.train(unit, &spec, choice)).await?;

    // a concurrent retry may have finished first
    let resp = {
        let mut trains = state.trains.lock().unwrap_or_else(PoisonError::into_inner);
        if let Some((prev, resp)) = trains.get(&req.request_id) {
            return if prev == &req {
                Ok(Json(resp.clone()))
            } else {
                Err(api(ErrorCode::Conflict, format!("request `{}` already used", req.request_id)))
            };
        }
        let resp = json!({
            "request_id": req.request_id,
            "unit": outcome.model.unit,
            "spec": outcome.model.spec,
            "kind": outcome.model.kind,
            "rows": outcome.rows,
            "cv": outcome.cv,
            "installed": true,
        });
        trains.insert(req.request_id.clone(), (req, resp.clone()));
        resp
    };
    let model = outcome.model;
    with_engine_mut(&state, move |e| {
        e.install(model);
        Ok(())
    })
    .await?;
    Ok(Json(resp))
}

async fn fallback() -> HttpError {
    api(ErrorCode::NotFound, "no such route")
}

pub fn router(engine: Engine) -> Router {
    let state = Arc::new(AppState {
        engine: RwLock::new(engine),
        trains: Mutex::new(BTreeMap::new()),
    });
    Router::new()
        .route("/health", get(health))
        .route("/entities/{id}", get(entity))
        .route("/recommendations", get(recommendations))
        .route("/decisions", post(decisions))
        .route("/eda/report", get(eda_report))
        .route("/models/grid", get(grid))
        .route("/train", post(train))
        .fallback(fallback)
        .with_state(state)
}

pub fn serve(config: RunConfig, host: &str, port: u16) -> Result<()> {
    let engine = Engine::open(config)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::Configuration(format!("runtime: {e}")))?;
    let addr = format!("{host}:{port}");
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Error::Configuration(format!("cannot bind {addr}: {e}")))?;
        tracing::info!(%addr, "listening");
        println!("listening on {addr}");
        axum::serve(listener, router(engine))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                tracing::info!("shutting down");
            })
            .await
            .map_err(|e| Error::Configuration(format!("server: {e}")))
    })
}
