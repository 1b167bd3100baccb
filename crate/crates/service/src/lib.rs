//! HTTP facade over the casecalc engine.
//!
//! Sessions hold an immutable case document plus per-session overrides.
//! Every response is recomputed from (document, overrides, params), so
//! repeated calls give identical bodies.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};

use casecalc_core::document::{self, CaseDocument};
use casecalc_core::evaluate::{evaluate, EvalOptions, Report, SettingsLayer, View};
use casecalc_core::graph::{CaseGraph, NodeId};
use casecalc_core::propagation::{parse_thresholds, Override, RuleRegistry};
use casecalc_core::sentencing::{skeleton, Skeleton};

pub const DEFAULT_IDLE: Duration = Duration::from_secs(60 * 60);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Sessions untouched for this long are dropped.
    pub idle: Duration,
    /// Defaults from the config file.
    pub settings: SettingsLayer,
    /// Origin allowed by CORS, or `*`.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            idle: DEFAULT_IDLE,
            settings: SettingsLayer::default(),
            cors_origin: None,
        }
    }
}

struct Session {
    document: Arc<CaseDocument>,
    /// Readers share; override writes are serialized.
    overrides: RwLock<BTreeMap<NodeId, Override>>,
    created_at: Instant,
    last_used: Mutex<Instant>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    config: ServiceConfig,
    registry: RuleRegistry,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            inner: Arc::new(Inner {
                sessions: RwLock::new(HashMap::new()),
                config,
                registry: RuleRegistry::new(),
            }),
        }
    }

    /// Drops idle sessions; returns how many went.
    pub fn expire_idle(&self) -> usize {
        let idle = self.inner.config.idle;
        let now = Instant::now();
        let mut map = self.inner.sessions.write().unwrap();
        let before = map.len();
        map.retain(|_, s| now.duration_since(*s.last_used.lock().unwrap()) < idle);
        before - map.len()
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.read().unwrap().len()
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.expire_idle();
        let s = self
            .inner
            .sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))?;
        *s.last_used.lock().unwrap() = Instant::now();
        Ok(s)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn not_found(msg: String) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            body: json!({ "error": msg }),
        }
    }

    fn unprocessable(msg: String) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": msg }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Query parameters shared by the read endpoints.
#[derive(Debug, Default, Deserialize)]
pub struct Params {
    pub rule: Option<String>,
    pub thresholds: Option<String>,
    pub view: Option<String>,
    pub snapshot: Option<String>,
}

impl Params {
    fn options(
        &self,
        state: &AppState,
        overrides: BTreeMap<NodeId, Override>,
    ) -> Result<EvalOptions, ApiError> {
        let bad = |e: String| ApiError::unprocessable(e);
        let mut flags = SettingsLayer::default();
        if let Some(r) = &self.rule {
            flags.rule = Some(r.parse().map_err(bad)?);
        }
        if let Some(t) = &self.thresholds {
            flags.thresholds = Some(parse_thresholds(t).map_err(bad)?);
        }
        let view = match &self.view {
            Some(v) => v.parse::<View>().map_err(bad)?,
            None => View::default(),
        };
        Ok(EvalOptions {
            flags,
            config: state.inner.config.settings.clone(),
            view,
            snapshot: self.snapshot.clone(),
            overrides,
            registry: state.inner.registry.clone(),
        })
    }
}

fn run(doc: &CaseDocument, opts: &EvalOptions) -> Result<Report, ApiError> {
    evaluate(doc, opts).map_err(|e| ApiError::unprocessable(e.to_string()))
}

#[derive(Debug, Serialize)]
struct Created {
    session_id: String,
    report: Report,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Response {
    let doc = match document::parse(&body) {
        Ok(d) => d,
        Err(e) => {
            let diagnostics: Vec<Value> = e
                .diagnostics
                .iter()
                .map(|d| serde_json::to_value(d).unwrap_or(Value::Null))
                .collect();
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({ "error": e.to_string(), "diagnostics": diagnostics })),
            )
                .into_response();
        }
    };
    let opts = match Params::default().options(&state, BTreeMap::new()) {
        Ok(o) => o,
        Err(e) => return e.into_response(),
    };
    let report = match run(&doc, &opts) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    let id = uuid::Uuid::new_v4().to_string();
    let now = Instant::now();
    let session = Session {
        document: Arc::new(doc),
        overrides: RwLock::new(BTreeMap::new()),
        created_at: now,
        last_used: Mutex::new(now),
    };
    state.expire_idle();
    state
        .inner
        .sessions
        .write()
        .unwrap()
        .insert(id.clone(), Arc::new(session));
    (
        StatusCode::CREATED,
        Json(Created {
            session_id: id,
            report,
        }),
    )
        .into_response()
}

fn valuation_body(id: &str, report: Report) -> Value {
    json!({
        "session_id": id,
        "view": report.settings.view,
        "rule": report.settings.propagation.rule.to_string(),
        "thresholds": report.settings.propagation.thresholds,
        "top_value": report.summary.top_value,
        "values": report.confidence.values,
        "colors": report.confidence.colors,
        "labels": report.labeling.labels,
        "overrides": report.confidence.overrides,
        "report": report,
    })
}

async fn get_valuation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<Params>,
) -> Result<Json<Value>, ApiError> {
    let session = state.session(&id)?;
    let overrides = session.overrides.read().unwrap().clone();
    let opts = params.options(&state, overrides)?;
    let report = run(&session.document, &opts)?;
    Ok(Json(valuation_body(&id, report)))
}

async fn get_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<Params>,
) -> Result<Json<Report>, ApiError> {
    let session = state.session(&id)?;
    let overrides = session.overrides.read().unwrap().clone();
    let opts = params.options(&state, overrides)?;
    Ok(Json(run(&session.document, &opts)?))
}

/// Same skeleton the CLI prints for this session's report.
async fn get_sentencing(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(params): Query<Params>,
) -> Result<Json<Skeleton>, ApiError> {
    let session = state.session(&id)?;
    let overrides = session.overrides.read().unwrap().clone();
    let opts = params.options(&state, overrides)?;
    let report = serde_json::to_value(run(&session.document, &opts)?).expect("reports serialize");
    skeleton(&report)
        .map(Json)
        .map_err(|e| ApiError::unprocessable(e.to_string()))
}

async fn get_graph(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let session = state.session(&id)?;
    let text = document::serialize(&session.document);
    let mut full: Value = serde_json::from_str(&text).expect("serialized documents parse");
    let age = session.created_at.elapsed().as_secs();
    Ok(Json(json!({
        "session_id": id,
        "age_seconds": age,
        "case": full.get_mut("case").map(Value::take).unwrap_or(Value::Null),
    })))
}

/// The node and everything it logically supports, transitively.
fn ancestors(graph: &CaseGraph, node: &NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([node.clone()]);
    let mut stack = vec![node.clone()];
    while let Some(n) = stack.pop() {
        for t in graph.logical_targets(&n) {
            if seen.insert(t.clone()) {
                stack.push(t.clone());
            }
        }
    }
    seen
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Change {
    pub before: Option<f64>,
    pub after: Option<f64>,
}

fn ancestor_delta(
    graph: &CaseGraph,
    node: &NodeId,
    before: &Report,
    after: &Report,
) -> BTreeMap<NodeId, Change> {
    let value = |r: &Report, id: &NodeId| r.confidence.values.get(id).map(|a| a.value);
    ancestors(graph, node)
        .into_iter()
        .filter(|id| graph.node(id).is_some_and(|n| !n.is_defeater()))
        .map(|id| {
            let c = Change {
                before: value(before, &id),
                after: value(after, &id),
            };
            (id, c)
        })
        .collect()
}

#[derive(Debug, Deserialize)]
pub struct OverrideBody {
    pub value: f64,
    #[serde(default)]
    pub note: String,
}

async fn change_override(
    state: AppState,
    id: String,
    node: String,
    params: Params,
    body: Option<OverrideBody>,
) -> Result<Json<Value>, ApiError> {
    let session = state.session(&id)?;
    let node = NodeId::new(node);
    let doc = &session.document;
    let graph = casecalc_core::evaluate::selected_graph(doc, params.snapshot.as_deref())
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    if !graph.contains(&node) {
        return Err(ApiError::not_found(format!(
            "no node `{node}` in this case"
        )));
    }
    if let Some(b) = &body {
        if !(0.0..=1.0).contains(&b.value) || !b.value.is_finite() {
            return Err(ApiError::unprocessable(format!(
                "override value {} is outside [0, 1]",
                b.value
            )));
        }
    }
    // one writer at a time per session
    let mut guard = session.overrides.write().unwrap();
    let before = run(doc, &params.options(&state, guard.clone())?)?;
    let mut next = guard.clone();
    match body {
        Some(b) => {
            next.insert(
                node.clone(),
                Override {
                    value: b.value,
                    note: b.note,
                },
            );
        }
        None => {
            if next.remove(&node).is_none() {
                return Err(ApiError::not_found(format!("no override on `{node}`")));
            }
        }
    }
    let after = run(doc, &params.options(&state, next.clone())?)?;
    *guard = next;
    drop(guard);
    let delta = ancestor_delta(graph, &node, &before, &after);
    Ok(Json(json!({
        "node": node,
        "delta": delta,
        "valuation": valuation_body(&id, after),
    })))
}

async fn put_override(
    State(state): State<AppState>,
    Path((id, node)): Path<(String, String)>,
    Query(params): Query<Params>,
    Json(body): Json<OverrideBody>,
) -> Result<Json<Value>, ApiError> {
    change_override(state, id, node, params, Some(body)).await
}

async fn delete_override(
    State(state): State<AppState>,
    Path((id, node)): Path<(String, String)>,
    Query(params): Query<Params>,
) -> Result<Json<Value>, ApiError> {
    change_override(state, id, node, params, None).await
}

pub fn router(state: AppState) -> Router {
    let cors = state.inner.config.cors_origin.clone();
    let app = Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/valuation", get(get_valuation))
        .route("/v1/sessions/{id}/report", get(get_report))
        .route("/v1/sessions/{id}/graph", get(get_graph))
        .route("/v1/sessions/{id}/sentencing", get(get_sentencing))
        .route(
            "/v1/sessions/{id}/overrides/{node}",
            put(put_override).delete(delete_override),
        )
        .with_state(state);
    match cors {
        None => app,
        Some(origin) => {
            let layer = CorsLayer::new()
                .allow_methods([Method::GET, Method::POST, Method::PUT, Method::DELETE])
                .allow_headers(Any);
            let layer = if origin == "*" {
                layer.allow_origin(Any)
            } else {
                match HeaderValue::from_str(&origin) {
                    Ok(v) => layer.allow_origin(v),
                    Err(_) => layer,
                }
            };
            app.layer(layer)
        }
    }
}

/// Runs until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(config);
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.expire_idle();
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("casecalc: listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
