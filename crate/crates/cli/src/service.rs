//! JSON prediction service backing the interactive UI.

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use stentrom::dataset::{Label, MuB, PredictorKind, PARAM_NAMES};
use stentrom::vessel::{VesselModel, VesselParams};
use stentrom::{Error, Result};

use crate::pipeline::{predict, ModelBundle, PredictOptions, SCHEMA_VERSION};

/// Posterior draws a single request may ask for.
pub const MAX_SAMPLES: usize = 1000;

pub struct AppState {
    pub bundle: ModelBundle,
    pub static_dir: Option<PathBuf>,
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io(_) | Error::State(_) | Error::Format(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self { status, message: e.to_string() }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "schema_version": SCHEMA_VERSION, "error": self.message });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

/// Node arrays go out as f32 unless full precision is asked for.
#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum Numbers {
    Single(Vec<f32>),
    Double(Vec<f64>),
}

impl Numbers {
    fn new(values: Vec<f64>, double: bool) -> Self {
        if double {
            Numbers::Double(values)
        } else {
            Numbers::Single(values.into_iter().map(|v| v as f32).collect())
        }
    }
}

#[derive(Debug, Serialize)]
struct Info {
    schema_version: u32,
    rank: usize,
    n_nodes: usize,
    predictor: &'static str,
    n_cl: Option<usize>,
    gate: String,
    classifiers: Vec<String>,
    parameters: [&'static str; 6],
    ranges: stentrom::dataset::ParamSpace,
    stent: stentrom::stent::StentSpec,
    frame: stentrom::vessel::VesselFrame,
}

fn predictor_name(kind: PredictorKind) -> &'static str {
    match kind {
        PredictorKind::MuB => "mu_B",
        PredictorKind::MuCl { .. } => "mu_cl",
    }
}

async fn info(State(state): State<Arc<AppState>>) -> Json<Info> {
    let index = &state.bundle.index;
    Json(Info {
        schema_version: SCHEMA_VERSION,
        rank: index.rank,
        n_nodes: index.n_nodes,
        predictor: predictor_name(index.predictors),
        n_cl: match index.predictors {
            PredictorKind::MuCl { n_cl } => Some(n_cl),
            PredictorKind::MuB => None,
        },
        gate: index.gate.clone(),
        classifiers: index.classifiers.clone(),
        parameters: PARAM_NAMES,
        ranges: index.space,
        stent: index.stent,
        frame: index.frame,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub mu: Vec<f64>,
    pub predictor: Option<String>,
    #[serde(default)]
    pub samples: usize,
    #[serde(default)]
    pub force: bool,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PrecisionQuery {
    /// `f64` for full precision node arrays.
    pub precision: Option<String>,
}

#[derive(Debug, Serialize)]
struct VesselRef {
    href: &'static str,
    geometry: VesselParams,
}

#[derive(Debug, Serialize)]
struct PredictResponse {
    schema_version: u32,
    label: Label,
    score: f64,
    classifier: String,
    in_range: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    u_p: Option<Numbers>,
    #[serde(skip_serializing_if = "Option::is_none")]
    node_std: Option<Numbers>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<Vec<Numbers>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    vessel: VesselRef,
    latency_ms: f64,
}

fn parse_mu(values: &[f64]) -> std::result::Result<MuB, ApiError> {
    let mu = MuB::from_slice(values)?;
    if mu.0.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::bad_request("parameters must be finite"));
    }
    Ok(mu)
}

fn wants_double(q: &PrecisionQuery) -> std::result::Result<bool, ApiError> {
    match q.precision.as_deref() {
        None | Some("f32") => Ok(false),
        Some("f64") => Ok(true),
        Some(other) => Err(ApiError::bad_request(format!("precision must be f32 or f64, got {other:?}"))),
    }
}

async fn predict_handler(
    State(state): State<Arc<AppState>>,
    Query(query): Query<PrecisionQuery>,
    body: std::result::Result<Json<PredictRequest>, JsonRejection>,
) -> ApiResult<PredictResponse> {
    let Json(req) = body?;
    let double = wants_double(&query)?;
    let expected = predictor_name(state.bundle.index.predictors);
    if let Some(p) = &req.predictor {
        if !p.eq_ignore_ascii_case(expected) {
            return Err(ApiError::bad_request(format!("this model predicts from {expected}, not {p}")));
        }
    }
    if req.samples > MAX_SAMPLES {
        return Err(ApiError::bad_request(format!("at most {MAX_SAMPLES} samples per request")));
    }
    let mu = parse_mu(&req.mu)?;
    let out = predict(&state.bundle, &mu, PredictOptions { force: req.force, samples: req.samples, seed: req.seed })?;
    Ok(Json(PredictResponse {
        schema_version: SCHEMA_VERSION,
        label: out.label,
        score: out.score,
        classifier: out.classifier,
        in_range: out.in_range,
        u_p: out.u_p.map(|v| Numbers::new(v, double)),
        node_std: out.node_std.map(|v| Numbers::new(v, double)),
        samples: out.samples.map(|s| s.into_iter().map(|v| Numbers::new(v, double)).collect()),
        warning: out.warning,
        vessel: VesselRef { href: "/api/vessel", geometry: mu.vessel_params() },
        latency_ms: out.latency_ms,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    pub mu: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct ClassifyResponse {
    schema_version: u32,
    label: Label,
    score: f64,
    classifier: String,
}

async fn classify_handler(
    State(state): State<Arc<AppState>>,
    body: std::result::Result<Json<ClassifyRequest>, JsonRejection>,
) -> ApiResult<ClassifyResponse> {
    let Json(req) = body?;
    let mu = parse_mu(&req.mu)?;
    let gate = state.bundle.gate()?;
    let d = gate.predict(&mu.0)?;
    Ok(Json(ClassifyResponse {
        schema_version: SCHEMA_VERSION,
        label: d.label,
        score: d.score,
        classifier: gate.kind.short_name().into(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselRequest {
    pub y_p1: f64,
    pub z_p1: f64,
    pub d_v: f64,
    pub d_a: f64,
    pub y_ca: f64,
    pub n_around: Option<usize>,
    pub max_edge: Option<f64>,
}

#[derive(Debug, Serialize)]
struct VesselResponse {
    schema_version: u32,
    /// Flattened xyz.
    vertices: Vec<f32>,
    /// Flattened vertex index triples.
    triangles: Vec<u32>,
    /// Flattened xyz of the centerline polyline.
    centerline: Vec<f32>,
    vessel_radius: f64,
    aneurysm_center: [f64; 3],
    aneurysm_radius: f64,
}

fn vessel_surface(state: &AppState, req: &VesselRequest) -> Result<VesselResponse> {
    let n_around = req.n_around.unwrap_or(48);
    let max_edge = req.max_edge.unwrap_or(0.5);
    if !(8..=256).contains(&n_around) || !(max_edge >= 0.05 && max_edge.is_finite()) {
        return Err(Error::Argument("n_around must be in [8, 256] and max_edge at least 0.05 mm".into()));
    }
    let params = VesselParams { y_p1: req.y_p1, z_p1: req.z_p1, d_v: req.d_v, d_a: req.d_a, y_ca: req.y_ca };
    let vessel = VesselModel::from_params(&params, &state.bundle.index.frame)?;
    let mesh = vessel.surface_mesh(n_around, max_edge);
    let flat = |pts: &[nalgebra::Point3<f64>]| pts.iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect();
    Ok(VesselResponse {
        schema_version: SCHEMA_VERSION,
        vertices: flat(&mesh.vertices),
        triangles: mesh.triangles.iter().flatten().copied().collect(),
        centerline: flat(vessel.centerline_points()),
        vessel_radius: vessel.vessel_radius(),
        aneurysm_center: [vessel.c_a.x, vessel.c_a.y, vessel.c_a.z],
        aneurysm_radius: vessel.aneurysm_radius(),
    })
}

async fn vessel_handler(
    State(state): State<Arc<AppState>>,
    body: std::result::Result<Json<VesselRequest>, JsonRejection>,
) -> ApiResult<VesselResponse> {
    let Json(req) = body?;
    Ok(Json(vessel_surface(&state, &req)?))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(state): State<Arc<AppState>>, uri: Uri) -> Response {
    let not_found = || (StatusCode::NOT_FOUND, "not found").into_response();
    let Some(root) = &state.static_dir else { return not_found() };
    let rel = Path::new(uri.path().trim_start_matches('/'));
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return not_found();
    }
    let mut path = root.join(rel);
    if uri.path().ends_with('/') || rel.as_os_str().is_empty() {
        path = path.join("index.html");
    }
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => not_found(),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/info", get(info))
        .route("/api/predict", post(predict_handler))
        .route("/api/classify", post(classify_handler))
        .route("/api/vessel", post(vessel_handler))
        .fallback(static_file)
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, bind: &str, port: u16) -> Result<()> {
    let listener = tokio::net::TcpListener::bind((bind, port))
        .await
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot listen on {bind}:{port}: {e}"))))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
