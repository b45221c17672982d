use std::collections::HashMap;
use std::convert::Infallible;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::{Body, Bytes};
use axum::extract::rejection::{BytesRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use gloss_core::pipeline::AssemblyState;
use gloss_core::services::{self, load_maps_dir, MapCalibration};
use gloss_core::store::{Store, StoreError};
use gloss_core::transport::{LoopbackGateway, UserId};
use gloss_core::LatLongCoordinate;
use gloss_sim::{RoutingPolicy, SimMessage, SimMetrics, TopologySpec};
use rand::distr::{Alphanumeric, SampleString};
use serde::{Deserialize, Serialize};

use crate::catalog::{catalog, CatalogEntry};
use crate::error::ApiError;
use crate::factory::{AssemblySpecDoc, Factory};
use crate::html;
use crate::managed::{AssemblyView, ManagedAssembly};
use crate::tap::{TapRecord, DEFAULT_TAP_CAPACITY};

pub const ASSEMBLIES_DIR: &str = "assemblies";
pub const MAP_IMAGES_DIR: &str = "maps";
pub const DEFAULT_TTL: u32 = 8;

#[derive(Debug, Clone)]
pub struct Config {
    pub data_dir: PathBuf,
    pub tap_capacity: usize,
}

impl Config {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: data_dir.into(), tap_capacity: DEFAULT_TAP_CAPACITY }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRecord {
    pub id: String,
    pub metrics: SimMetrics,
}

pub struct AppState {
    config: Config,
    store: Arc<Store>,
    maps: RwLock<Arc<Vec<MapCalibration>>>,
    factory: Factory,
    assemblies: RwLock<HashMap<String, Arc<ManagedAssembly>>>,
    simulations: Mutex<HashMap<String, Arc<SimulationRecord>>>,
}

fn token() -> String {
    Alphanumeric.sample_string(&mut rand::rng(), 8).to_ascii_lowercase()
}

impl AppState {
    /// Opens the store and restores persisted assembly specs as CREATED.
    pub fn open(config: Config) -> Result<Arc<Self>, StoreError> {
        let store = Arc::new(Store::open(&config.data_dir)?);
        Self::with_store(config, store)
    }

    pub fn with_store(config: Config, store: Arc<Store>) -> Result<Arc<Self>, StoreError> {
        let maps = load_maps_dir(&config.data_dir)?;
        let factory = Factory::new(&config.data_dir, LoopbackGateway::new());
        let state = Arc::new(Self {
            store,
            maps: RwLock::new(Arc::new(maps)),
            factory,
            assemblies: RwLock::default(),
            simulations: Mutex::default(),
            config,
        });
        state.restore();
        Ok(state)
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn loopback(&self) -> &Arc<LoopbackGateway> {
        self.factory.loopback()
    }

    pub fn maps(&self) -> Arc<Vec<MapCalibration>> {
        self.maps.read().unwrap().clone()
    }

    pub fn reload_maps(&self) -> Result<usize, StoreError> {
        let maps = load_maps_dir(&self.config.data_dir)?;
        let n = maps.len();
        *self.maps.write().unwrap() = Arc::new(maps);
        Ok(n)
    }

    pub fn assembly(&self, id: &str) -> Result<Arc<ManagedAssembly>, ApiError> {
        self.assemblies
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("UnknownAssembly", format!("no assembly '{id}'")))
    }

    fn spec_path(&self, id: &str) -> PathBuf {
        self.config.data_dir.join(ASSEMBLIES_DIR).join(format!("{id}.json"))
    }

    /// Validates and instantiates `spec`, registering it under a fresh id.
    pub fn create_assembly(&self, spec: AssemblySpecDoc) -> Result<String, ApiError> {
        let mut id = token();
        while self.assemblies.read().unwrap().contains_key(&id) {
            id = token();
        }
        let assembly = self.factory.build(&id, &spec)?;
        self.persist(&id, &spec)?;
        let managed = Arc::new(ManagedAssembly::new(spec, assembly, self.config.tap_capacity));
        self.assemblies.write().unwrap().insert(id.clone(), managed);
        Ok(id)
    }

    pub fn delete_assembly(&self, id: &str) -> Result<(), ApiError> {
        let managed = self
            .assemblies
            .write()
            .unwrap()
            .remove(id)
            .ok_or_else(|| ApiError::not_found("UnknownAssembly", format!("no assembly '{id}'")))?;
        if managed.state() == AssemblyState::Running {
            let _ = managed.stop();
        }
        match std::fs::remove_file(self.spec_path(id)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(ApiError::internal(e.to_string())),
        }
    }

    fn persist(&self, id: &str, spec: &AssemblySpecDoc) -> Result<(), ApiError> {
        let path = self.spec_path(id);
        let write = || -> std::io::Result<()> {
            std::fs::create_dir_all(path.parent().expect("spec path has a parent"))?;
            let tmp = path.with_extension("json.tmp");
            std::fs::write(&tmp, serde_json::to_vec_pretty(spec).expect("spec serializes"))?;
            std::fs::rename(&tmp, &path)
        };
        write().map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))
    }

    fn restore(&self) {
        let dir = self.config.data_dir.join(ASSEMBLIES_DIR);
        let Ok(entries) = std::fs::read_dir(&dir) else { return };
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else { continue };
            let spec: AssemblySpecDoc = match std::fs::read(&path)
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
            {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("skipping assembly spec {}: {e}", path.display());
                    continue;
                }
            };
            match self.factory.build(&id, &spec) {
                Ok(a) => {
                    let managed = Arc::new(ManagedAssembly::new(spec, a, self.config.tap_capacity));
                    self.assemblies.write().unwrap().insert(id, managed);
                }
                Err(e) => log::warn!("skipping assembly {id}: {e}"),
            }
        }
    }

    pub fn simulate(&self, req: &SimulationRequest) -> Result<SimulationRecord, ApiError> {
        let metrics = req.run()?;
        let record = Arc::new(SimulationRecord { id: token(), metrics });
        self.simulations.lock().unwrap().insert(record.id.clone(), record.clone());
        Ok((*record).clone())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationRequest {
    pub topology: serde_json::Value,
    pub workload: serde_json::Value,
    pub policy: String,
    #[serde(default)]
    pub ttl: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub horizon_ms: Option<u64>,
}

pub fn parse_policy(name: &str, ttl: Option<u32>) -> Result<RoutingPolicy, gloss_sim::SimError> {
    match name {
        "flood" => RoutingPolicy::flood(ttl.unwrap_or(DEFAULT_TTL)),
        "geo" | "geo_greedy" => Ok(RoutingPolicy::geo_greedy()),
        other => Err(gloss_sim::SimError::ValidationFailure(format!("unknown policy '{other}'"))),
    }
}

impl SimulationRequest {
    pub fn run(&self) -> Result<SimMetrics, gloss_sim::SimError> {
        use gloss_sim::SimError;
        let topology: TopologySpec =
            serde_json::from_value(self.topology.clone()).map_err(|e| SimError::ParseFailure(format!("topology: {e}")))?;
        let workload: Vec<SimMessage> =
            serde_json::from_value(self.workload.clone()).map_err(|e| SimError::ParseFailure(format!("workload: {e}")))?;
        let policy = parse_policy(&self.policy, self.ttl)?;
        gloss_sim::run(&topology, &workload, policy, self.seed, self.horizon_ms)
    }
}

type AppRef = State<Arc<AppState>>;

fn parse_json<T: for<'de> Deserialize<'de>>(body: Result<Bytes, BytesRejection>) -> Result<T, ApiError> {
    let body = body.map_err(|e| ApiError::new(e.status(), "BadRequest", e.body_text()))?;
    serde_json::from_slice(&body).map_err(|e| {
        if e.is_data() {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "SpecInvalid", e.to_string()).with_reason("SchemaViolation")
        } else {
            ApiError::malformed_json(&e)
        }
    })
}

fn path_param(p: Result<Path<String>, PathRejection>) -> Result<String, ApiError> {
    p.map(|Path(s)| s).map_err(|e| ApiError::bad_parameter(e.body_text()))
}

fn user_param(p: Result<Path<String>, PathRejection>) -> Result<UserId, ApiError> {
    let raw = path_param(p)?;
    UserId::new(raw.trim()).map_err(|e| ApiError::bad_parameter(e.to_string()))
}

type QueryMap = Result<Query<HashMap<String, String>>, QueryRejection>;

fn query_map(q: QueryMap) -> Result<HashMap<String, String>, ApiError> {
    q.map(|Query(m)| m).map_err(|e| ApiError::bad_parameter(e.body_text()))
}

fn number(q: &HashMap<String, String>, name: &str) -> Result<Option<f64>, ApiError> {
    q.get(name)
        .map(|v| match v.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(ApiError::bad_parameter(format!("{name}: '{v}' is not a finite number"))),
        })
        .transpose()
}

fn required(q: &HashMap<String, String>, name: &str) -> Result<f64, ApiError> {
    number(q, name)?.ok_or_else(|| ApiError::bad_parameter(format!("missing {name}")))
}

fn time_param(q: &HashMap<String, String>, name: &str) -> Result<Option<DateTime<Utc>>, ApiError> {
    q.get(name)
        .map(|v| {
            DateTime::parse_from_rfc3339(v.trim())
                .map(|t| t.to_utc())
                .map_err(|e| ApiError::bad_parameter(format!("{name}: '{v}': {e}")))
        })
        .transpose()
}

fn negotiate<T: Serialize>(headers: &HeaderMap, value: &T, render: impl FnOnce() -> String) -> Response {
    if html::prefers_html(headers) {
        Html(render()).into_response()
    } else {
        Json(value).into_response()
    }
}

async fn list_components() -> Json<Vec<CatalogEntry>> {
    Json(catalog())
}

#[derive(Serialize)]
struct Created {
    id: String,
}

async fn create_assembly(
    State(app): AppRef,
    body: Result<Bytes, BytesRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let spec: AssemblySpecDoc = parse_json(body)?;
    let id = tokio::task::spawn_blocking(move || app.create_assembly(spec))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(Created { id })))
}

#[derive(Serialize)]
struct AssemblySummary {
    id: String,
    state: AssemblyState,
}

async fn list_assemblies(State(app): AppRef) -> Json<Vec<AssemblySummary>> {
    let mut out: Vec<AssemblySummary> = app
        .assemblies
        .read()
        .unwrap()
        .values()
        .map(|m| AssemblySummary { id: m.id.clone(), state: m.state() })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Json(out)
}

async fn get_assembly(State(app): AppRef, id: Result<Path<String>, PathRejection>) -> Result<Json<AssemblyView>, ApiError> {
    let managed = app.assembly(&path_param(id)?)?;
    Ok(Json(tokio::task::spawn_blocking(move || managed.view()).await.map_err(|e| ApiError::internal(e.to_string()))?))
}

async fn delete_assembly(State(app): AppRef, id: Result<Path<String>, PathRejection>) -> Result<StatusCode, ApiError> {
    let id = path_param(id)?;
    tokio::task::spawn_blocking(move || app.delete_assembly(&id))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Serialize)]
struct StateBody {
    id: String,
    state: AssemblyState,
}

async fn lifecycle(app: Arc<AppState>, id: String, start: bool) -> Result<Json<StateBody>, ApiError> {
    let managed = app.assembly(&id)?;
    tokio::task::spawn_blocking(move || {
        if start {
            managed.start()?;
        } else {
            managed.stop()?;
        }
        Ok(Json(StateBody { id: managed.id.clone(), state: managed.state() }))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn start_assembly(State(app): AppRef, id: Result<Path<String>, PathRejection>) -> Result<Json<StateBody>, ApiError> {
    lifecycle(app, path_param(id)?, true).await
}

async fn stop_assembly(State(app): AppRef, id: Result<Path<String>, PathRejection>) -> Result<Json<StateBody>, ApiError> {
    lifecycle(app, path_param(id)?, false).await
}

#[derive(Serialize)]
struct TapContents {
    id: String,
    capacity: usize,
    observed: u64,
    events: Vec<TapRecord>,
}

async fn assembly_events(State(app): AppRef, id: Result<Path<String>, PathRejection>) -> Result<Json<TapContents>, ApiError> {
    let managed = app.assembly(&path_param(id)?)?;
    let tap = managed.tap();
    Ok(Json(TapContents { id: managed.id.clone(), capacity: tap.capacity(), observed: tap.observed(), events: tap.snapshot() }))
}

async fn assembly_stream(State(app): AppRef, id: Result<Path<String>, PathRejection>) -> Result<Response, ApiError> {
    let managed = app.assembly(&path_param(id)?)?;
    let rx = managed.tap().subscribe();
    // Already stopped: nothing more will arrive.
    let rx = (managed.state() != AssemblyState::Stopped).then_some(rx);
    let stream = futures::stream::unfold(rx, |rx| async move {
        let mut rx = rx?;
        let record = rx.recv().await?;
        let mut line = serde_json::to_vec(&record).expect("tap record serializes");
        line.push(b'\n');
        Some((Ok::<_, Infallible>(Bytes::from(line)), Some(rx)))
    });
    Ok(([(CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response())
}

async fn user_location(
    State(app): AppRef,
    headers: HeaderMap,
    user: Result<Path<String>, PathRejection>,
) -> Result<Response, ApiError> {
    let user = user_param(user)?;
    let located = services::locate_user(&app.store, &app.maps(), &user)
        .ok_or_else(|| ApiError::not_found("NoKnownLocation", format!("no known location for {user}")))?;
    Ok(negotiate(&headers, &located, || html::location(&user, &located)))
}

async fn user_trail(
    State(app): AppRef,
    headers: HeaderMap,
    user: Result<Path<String>, PathRejection>,
    q: QueryMap,
) -> Result<Response, ApiError> {
    let user = user_param(user)?;
    let q = query_map(q)?;
    let (from, to) = (time_param(&q, "from")?, time_param(&q, "to")?);
    if app.store.latest_location(&user).is_none() {
        return Err(ApiError::not_found("NoKnownLocation", format!("no known location for {user}")));
    }
    let view = services::render_trail(&app.store, &app.maps(), &user, from, to)?;
    Ok(negotiate(&headers, &view, || html::trail(&user, &view)))
}

async fn smart_town(State(app): AppRef, headers: HeaderMap, q: QueryMap) -> Result<Response, ApiError> {
    let q = query_map(q)?;
    let (lat, lon, radius) = (required(&q, "lat")?, required(&q, "lon")?, required(&q, "radius")?);
    let position = LatLongCoordinate::new(lat, lon).map_err(|e| ApiError::bad_parameter(e.to_string()))?;
    let category = q.get("category").map(String::as_str).filter(|c| !c.is_empty());
    let result = services::smart_town(&app.store, &position, radius, category)?;
    Ok(negotiate(&headers, &result, || html::smart_town(&result)))
}

async fn user_radar(
    State(app): AppRef,
    headers: HeaderMap,
    user: Result<Path<String>, PathRejection>,
    q: QueryMap,
) -> Result<Response, ApiError> {
    let user = user_param(user)?;
    let q = query_map(q)?;
    let radius = required(&q, "radius")?;
    let entries = services::radar(&app.store, &user, radius)?;
    Ok(negotiate(&headers, &entries, || html::radar(&user, &entries)))
}

async fn user_hearsay(State(app): AppRef, user: Result<Path<String>, PathRejection>) -> Result<Response, ApiError> {
    let user = user_param(user)?;
    Ok(Json(app.store.deliveries_for(&user)).into_response())
}

async fn list_maps(State(app): AppRef) -> Json<Vec<MapCalibration>> {
    Json(app.maps().as_ref().clone())
}

fn image_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("svg") => "image/svg+xml",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn map_image(State(app): AppRef, image_id: Result<Path<String>, PathRejection>) -> Result<Response, ApiError> {
    let image_id = path_param(image_id)?;
    let unknown = || ApiError::not_found("UnknownMap", format!("no map image '{image_id}'"));
    if !app.maps().iter().any(|m| m.image_id == image_id) {
        return Err(unknown());
    }
    let dir = app.config.data_dir.join(MAP_IMAGES_DIR);
    let candidates = std::iter::once(dir.join(&image_id))
        .chain(["png", "jpg", "jpeg", "gif", "svg", "webp"].iter().map(|x| dir.join(format!("{image_id}.{x}"))));
    for path in candidates {
        // Ids come from the calibration table, but stay inside the maps dir regardless.
        if path.parent() != Some(dir.as_path()) {
            continue;
        }
        if let Ok(bytes) = tokio::fs::read(&path).await {
            return Ok(([(CONTENT_TYPE, image_type(&path))], bytes).into_response());
        }
    }
    Err(unknown())
}

#[derive(Serialize)]
struct SimulationCreated {
    id: String,
    metrics: SimMetrics,
}

async fn create_simulation(
    State(app): AppRef,
    body: Result<Bytes, BytesRejection>,
) -> Result<(StatusCode, Json<SimulationCreated>), ApiError> {
    let body = body.map_err(|e| ApiError::new(e.status(), "BadRequest", e.body_text()))?;
    let req: SimulationRequest = serde_json::from_slice(&body).map_err(|e| {
        if e.is_data() {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "ValidationFailure", e.to_string()).with_reason("ParseFailure")
        } else {
            ApiError::malformed_json(&e)
        }
    })?;
    let record = tokio::task::spawn_blocking(move || app.simulate(&req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(SimulationCreated { id: record.id, metrics: record.metrics })))
}

async fn simulation_metrics(
    State(app): AppRef,
    id: Result<Path<String>, PathRejection>,
) -> Result<Json<SimMetrics>, ApiError> {
    let id = path_param(id)?;
    let record = app
        .simulations
        .lock()
        .unwrap()
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("UnknownSimulation", format!("no simulation '{id}'")))?;
    Ok(Json(record.metrics.clone()))
}

async fn not_found() -> ApiError {
    ApiError::not_found("NotFound", "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "MethodNotAllowed", "method not allowed on this endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/components", get(list_components))
        .route("/assemblies", get(list_assemblies).post(create_assembly))
        .route("/assemblies/{id}", get(get_assembly).delete(delete_assembly))
        .route("/assemblies/{id}/start", post(start_assembly))
        .route("/assemblies/{id}/stop", post(stop_assembly))
        .route("/assemblies/{id}/events", get(assembly_events))
        .route("/assemblies/{id}/stream", get(assembly_stream))
        .route("/users/{id}/location", get(user_location))
        .route("/users/{id}/trail", get(user_trail))
        .route("/users/{id}/radar", get(user_radar))
        .route("/users/{id}/hearsay", get(user_hearsay))
        .route("/smarttown", get(smart_town))
        .route("/maps", get(list_maps))
        .route("/maps/{image_id}", get(map_image))
        .route("/simulations", post(create_simulation))
        .route("/simulations/{id}/metrics", get(simulation_metrics))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}
