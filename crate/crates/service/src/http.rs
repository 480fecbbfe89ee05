//! JSON/HTTP API. Measurement endpoints exchange linear data; only the
//! preview PNG is display-encoded.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use grass_sim::ccm::ColorCorrectionMatrix;
use grass_sim::characteristic::{calibrate_8bit, compare, CharacteristicCurve, CurveComparison, CurveMeta, CurveSource};
use grass_sim::config::Quality;
use grass_sim::scene::Viewpoint;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::error::Error;
use crate::jobs::{JobQueue, JobStatus};
use crate::runner::{preview_png, render_view, SweepSpec};
use crate::workspace::Workspace;

#[derive(Clone)]
pub struct AppState {
    pub workspace: Arc<Workspace>,
    pub jobs: Arc<JobQueue>,
}

#[derive(Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
}

impl IntoResponse for Error {
    fn into_response(self) -> Response {
        let status = match self.code() {
            "not_found" => StatusCode::NOT_FOUND,
            "conflict" | "cancelled" => StatusCode::CONFLICT,
            "io_error" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let body = ErrorBody {
            code: self.code(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, Error>;

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v).map_err(|e| Error::Invalid(e.body_text()))
}

fn json<T>(j: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    j.map(|Json(v)| v).map_err(|e| Error::Invalid(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Error::Invalid(format!("worker panicked: {e}")))?
}

/// Routes under `/api`, with `ui_dir` served for everything else.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/scenes", get(scenes))
        .route("/api/preview", get(preview))
        .route("/api/sweep", post(submit_sweep))
        .route("/api/jobs", get(list_jobs))
        .route("/api/jobs/{id}", get(job).delete(cancel_job))
        .route("/api/curves", get(list_curves).post(upload_curve))
        .route("/api/curves/{id}", get(curve))
        .route("/api/compare", post(compare_curves))
        .route("/api/calibrate", post(calibrate))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(state: AppState, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Serialize, Deserialize)]
pub struct SceneInfo {
    pub name: String,
    pub environment: String,
    /// Adjustable grass length range in millimeters.
    pub length_range: [f64; 2],
    pub lengths: Vec<f64>,
    pub viewpoints: Vec<Viewpoint>,
    pub qualities: Vec<Quality>,
}

async fn scenes(State(s): State<AppState>) -> ApiResult<Json<Vec<SceneInfo>>> {
    let mut out = Vec::new();
    for scene in s.workspace.scenes()? {
        let c = scene.config;
        out.push(SceneInfo {
            environment: c.lighting.environment_id(),
            length_range: c.grass.params()?.adjustable_range,
            lengths: c.lengths,
            viewpoints: c.viewpoints,
            qualities: Quality::ALL.to_vec(),
            name: c.name,
        });
    }
    Ok(Json(out))
}

#[derive(Deserialize)]
struct PreviewQuery {
    scene: String,
    h: f64,
    d: f64,
    theta: f64,
    length: f64,
    #[serde(default)]
    quality: Option<Quality>,
    #[serde(default)]
    seed: Option<u64>,
}

/// Header carrying the measured region mean as linear ProPhoto RGB.
pub const REGION_MEAN_HEADER: &str = "x-region-mean-prophoto";

async fn preview(State(s): State<AppState>, q: Result<Query<PreviewQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = query(q)?;
    let scene = s.workspace.scene(&q.scene)?;
    let v = Viewpoint::new(q.h, q.d, q.theta)?;
    let (png, mean) = blocking(move || {
        let m = render_view(&scene, &v, q.length, q.quality.unwrap_or(Quality::Default), q.seed.unwrap_or(1))?;
        Ok((preview_png(&m)?, m.prophoto()?.values))
    })
    .await?;
    let mean = format!("{},{},{}", mean[0], mean[1], mean[2]);
    let mut resp = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
    resp.headers_mut()
        .insert(REGION_MEAN_HEADER, HeaderValue::from_str(&mean).expect("ascii"));
    Ok(resp)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CcmRef {
    Id(String),
    Rows([[f64; 3]; 3]),
}

#[derive(Deserialize)]
struct SweepBody {
    scene: String,
    viewpoint: Viewpoint,
    #[serde(default)]
    lengths: Option<Vec<f64>>,
    #[serde(default)]
    quality: Option<Quality>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    ccm: Option<CcmRef>,
}

async fn submit_sweep(State(s): State<AppState>, body: Result<Json<SweepBody>, JsonRejection>) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let b = json(body)?;
    let scene = s.workspace.scene(&b.scene)?;
    let ccm = match b.ccm {
        None => None,
        Some(CcmRef::Id(id)) => Some(s.workspace.ccm(&id)?),
        Some(CcmRef::Rows(m)) => Some(ColorCorrectionMatrix::from_rows(m)),
    };
    let spec = SweepSpec {
        viewpoint: b.viewpoint,
        lengths: b.lengths.unwrap_or_else(|| scene.config.lengths.clone()),
        quality: b.quality.unwrap_or(Quality::Default),
        seed: b.seed.unwrap_or(1),
        ccm,
    };
    let jobs = s.jobs.clone();
    let status = blocking(move || jobs.submit(scene, spec)).await?;
    Ok((StatusCode::ACCEPTED, Json(status)))
}

async fn list_jobs(State(s): State<AppState>) -> Json<Vec<JobStatus>> {
    Json(s.jobs.list())
}

async fn job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobStatus>> {
    Ok(Json(s.jobs.status(&id)?))
}

async fn cancel_job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let status = s.jobs.cancel(&id)?;
    let code = if status.state.is_terminal() { StatusCode::OK } else { StatusCode::ACCEPTED };
    Ok((code, Json(status)))
}

#[derive(Serialize, Deserialize)]
pub struct CurvePoint {
    pub length_mm: f64,
    pub ogcd: f64,
    pub lab: [f64; 3],
}

#[derive(Serialize, Deserialize)]
pub struct CurveBody {
    pub id: String,
    pub source: CurveSource,
    pub meta: CurveMeta,
    pub samples: Vec<CurvePoint>,
}

impl CurveBody {
    fn new(id: String, c: &CharacteristicCurve) -> Self {
        CurveBody {
            id,
            source: c.source,
            meta: c.meta.clone(),
            samples: c
                .samples()
                .iter()
                .zip(c.labs())
                .map(|(s, l)| CurvePoint {
                    length_mm: s.length_mm,
                    ogcd: s.ogcd,
                    lab: l.values,
                })
                .collect(),
        }
    }
}

async fn list_curves(State(s): State<AppState>) -> ApiResult<Json<Vec<String>>> {
    Ok(Json(s.workspace.curve_ids()?))
}

/// Body is a curve CSV: `length_mm,ogcd,L,a,b` or `length_mm,R,G,B`.
async fn upload_curve(State(s): State<AppState>, body: String) -> ApiResult<(StatusCode, Json<CurveBody>)> {
    let (id, c) = s.workspace.put_real_curve(body.as_bytes())?;
    Ok((StatusCode::CREATED, Json(CurveBody::new(id, &c))))
}

#[derive(Deserialize)]
struct CurveQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn curve(State(s): State<AppState>, Path(id): Path<String>, q: Result<Query<CurveQuery>, QueryRejection>) -> ApiResult<Response> {
    match query(q)?.format.as_deref() {
        None | Some("json") => Ok(Json(CurveBody::new(id.clone(), &s.workspace.curve(&id)?)).into_response()),
        Some("csv") => Ok(([(header::CONTENT_TYPE, "text/csv")], s.workspace.curve_csv(&id)?).into_response()),
        Some(f) => Err(Error::Invalid(format!("unknown format {f:?}; use json or csv"))),
    }
}

/// A stored curve, or a curve CSV given inline (treated as a real
/// measurement).
#[derive(Deserialize)]
#[serde(untagged)]
enum CurveRef {
    Id { id: String },
    Csv { csv: String },
}

impl CurveRef {
    fn load(self, ws: &Workspace) -> ApiResult<(String, CharacteristicCurve)> {
        match self {
            CurveRef::Id { id } => {
                let c = ws.curve(&id)?;
                Ok((id, c))
            }
            CurveRef::Csv { csv } => ws.put_real_curve(csv.as_bytes()),
        }
    }
}

#[derive(Deserialize)]
struct CompareBody {
    a: CurveRef,
    b: CurveRef,
}

async fn compare_curves(State(s): State<AppState>, body: Result<Json<CompareBody>, JsonRejection>) -> ApiResult<Json<CurveComparison>> {
    let b = json(body)?;
    let (_, a) = b.a.load(&s.workspace)?;
    let (_, c) = b.b.load(&s.workspace)?;
    Ok(Json(compare(&a, &c)?))
}

#[derive(Deserialize)]
struct CalibrateBody {
    curve: CurveRef,
}

#[derive(Serialize, Deserialize)]
pub struct CalibrationBody {
    pub id: String,
    pub curve_id: String,
    pub r2_before: f64,
    pub r2_after: f64,
    /// Grass length in millimeters for each 8-bit level.
    pub entries: Vec<f64>,
}

async fn calibrate(State(s): State<AppState>, body: Result<Json<CalibrateBody>, JsonRejection>) -> ApiResult<Json<CalibrationBody>> {
    let b = json(body)?;
    let (curve_id, c) = b.curve.load(&s.workspace)?;
    let table = calibrate_8bit(&c)?;
    let id = s.workspace.put_calibration(&curve_id, &table)?;
    Ok(Json(CalibrationBody {
        id,
        curve_id,
        r2_before: table.r2_before,
        r2_after: table.r2_after,
        entries: table.entries,
    }))
}
