//! HTTP service for interactive correspondence queries over a generated
//! dataset. Coordinates in requests and responses are pixels of the stored
//! images; conversion to model resolution happens here and nowhere else.

use std::sync::{Arc, Mutex};

use angiocorr::corrmodel::{EncodedPair, Models};
use angiocorr::curves::{bezier_sample, nearest_point_on_curve, resample_polyline, CubicBezier};
use angiocorr::geometry::{angle_between_angulations, Point2};
use angiocorr::harness::{Dataset, HarnessError, ViewRecord};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Encoded pairs kept per session.
pub const PAIR_CACHE_CAPACITY: usize = 16;

/// Samples returned along every predicted curve.
pub const CURVE_SAMPLES: usize = 64;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("p2p and c2c models disagree on input size ({0} vs {1})")]
    ModelSizeMismatch(usize, usize),
    #[error("dataset images of {image} px cannot be scaled to the {model} px model input")]
    IncompatibleSize { image: usize, model: usize },
}

/// Least-recently-used cache of encoded pairs.
#[derive(Debug)]
pub struct PairCache {
    capacity: usize,
    entries: Mutex<IndexMap<(usize, usize), Arc<EncodedPair>>>,
}

impl PairCache {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), entries: Mutex::new(IndexMap::new()) }
    }

    pub fn get(&self, key: (usize, usize)) -> Option<Arc<EncodedPair>> {
        let mut m = self.entries.lock().expect("pair cache poisoned");
        let v = m.shift_remove(&key)?;
        m.insert(key, v.clone());
        Some(v)
    }

    pub fn insert(&self, key: (usize, usize), value: Arc<EncodedPair>) {
        let mut m = self.entries.lock().expect("pair cache poisoned");
        m.shift_remove(&key);
        if m.len() >= self.capacity {
            m.shift_remove_index(0);
        }
        m.insert(key, value);
    }

    /// Keys from least to most recently used.
    pub fn keys(&self) -> Vec<(usize, usize)> {
        self.entries.lock().expect("pair cache poisoned").keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("pair cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A dataset and checkpoints, fixed for the life of the server.
pub struct Session {
    dataset: Option<Dataset>,
    models: Models,
    model_size: Option<usize>,
    cache: PairCache,
}

impl Session {
    pub fn new(dataset: Option<Dataset>, models: Models) -> Result<Self, SessionError> {
        let sizes: Vec<usize> = [&models.p2p, &models.c2c].iter().filter_map(|m| m.as_ref()).map(|m| m.config.input_size).collect();
        if let [a, b] = sizes[..] {
            if a != b {
                return Err(SessionError::ModelSizeMismatch(a, b));
            }
        }
        let model_size = sizes.first().copied();
        if let (Some(ds), Some(m)) = (&dataset, model_size) {
            let image = ds.manifest.geometry.image_size;
            if image % m != 0 {
                return Err(SessionError::IncompatibleSize { image, model: m });
            }
        }
        Ok(Self { dataset, models, model_size, cache: PairCache::new(PAIR_CACHE_CAPACITY) })
    }

    pub fn cache(&self) -> &PairCache {
        &self.cache
    }
}

/// Error body `{code, message}` with its status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { code: self.code.into(), message: self.message })).into_response()
    }
}

impl From<HarnessError> for ApiError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::UnknownView(id) => Self::new(StatusCode::NOT_FOUND, "unknown_view", format!("no view {id}")),
            other => Self::internal(other),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ViewEntry {
    pub id: usize,
    pub subject: usize,
    pub side: String,
    pub view: usize,
    pub group: String,
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub tree_id: usize,
}

impl From<&ViewRecord> for ViewEntry {
    fn from(r: &ViewRecord) -> Self {
        Self {
            id: r.id,
            subject: r.subject,
            side: r.side.to_string(),
            view: r.view,
            group: r.group.0.to_string(),
            alpha_deg: r.alpha_deg,
            beta_deg: r.beta_deg,
            tree_id: r.tree,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Info {
    pub dataset_loaded: bool,
    pub views: usize,
    pub image_size: Option<usize>,
    pub model_size: Option<usize>,
    pub p2p: bool,
    pub c2c: bool,
    pub waypoint_n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Point,
    Curve,
    Refined,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorrespondRequest {
    pub ref_id: usize,
    pub tgt_id: usize,
    pub mode: Mode,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CurveBody {
    pub control_points: [[f64; 2]; 4],
    pub samples: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorrespondResponse {
    pub mode: Mode,
    pub ref_id: usize,
    pub tgt_id: usize,
    pub angle_deg: f64,
    /// Point and refined modes: one target point per query point.
    pub points: Vec<[f64; 2]>,
    /// Refined mode: the P2P points before projection.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p2p: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveBody>,
    /// Some returned coordinate fell outside the target image and was
    /// clamped to its border.
    pub clamped: bool,
}

type Shared = Arc<Session>;

pub fn router(session: Shared) -> Router {
    Router::new()
        .route("/api/info", get(info))
        .route("/api/views", get(views))
        .route("/api/views/{id}/image", get(image))
        .route("/api/correspond", post(correspond))
        .with_state(session)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, session: Session) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(session))).await
}

fn dataset(s: &Session) -> Result<&Dataset, ApiError> {
    match &s.dataset {
        Some(d) if !d.records().is_empty() => Ok(d),
        Some(_) => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "dataset_unavailable", "the loaded dataset has no views")),
        None => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "dataset_unavailable", "no dataset loaded")),
    }
}

async fn info(State(s): State<Shared>) -> Json<Info> {
    Json(Info {
        dataset_loaded: s.dataset.is_some(),
        views: s.dataset.as_ref().map_or(0, |d| d.records().len()),
        image_size: s.dataset.as_ref().map(|d| d.manifest.geometry.image_size),
        model_size: s.model_size,
        p2p: s.models.p2p.is_some(),
        c2c: s.models.c2c.is_some(),
        waypoint_n: s.models.waypoint_n().ok(),
    })
}

async fn views(State(s): State<Shared>) -> Result<Json<Vec<ViewEntry>>, ApiError> {
    Ok(Json(dataset(&s)?.records().iter().map(ViewEntry::from).collect()))
}

async fn image(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let ds = dataset(&s)?;
    let id: usize = id.parse().map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "unknown_view", format!("no view {id}")))?;
    let bytes = ds.image_bytes(id)?;
    Ok(([(header::CONTENT_TYPE, "image/x-portable-graymap")], bytes).into_response())
}

async fn correspond(State(s): State<Shared>, body: Bytes) -> Result<Json<CorrespondResponse>, ApiError> {
    let req: CorrespondRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))?;
    let ds = dataset(&s)?;
    let (r, t) = (*ds.record(req.ref_id)?, *ds.record(req.tgt_id)?);
    let missing = |what: &str| ApiError::new(StatusCode::CONFLICT, "checkpoint_missing", format!("no {what} checkpoint loaded"));
    match req.mode {
        Mode::Point if s.models.p2p.is_none() => return Err(missing("p2p")),
        Mode::Curve if s.models.c2c.is_none() => return Err(missing("c2c")),
        Mode::Refined if s.models.p2p.is_none() || s.models.c2c.is_none() => return Err(missing("p2p and c2c")),
        _ => {}
    }
    let size = ds.manifest.geometry.image_size as f64;
    if req.points.iter().any(|p| !(0.0..size).contains(&p[0]) || !(0.0..size).contains(&p[1])) {
        return Err(ApiError::bad_request(format!("query points must lie inside the {size} px reference image")));
    }
    let needed = match req.mode {
        Mode::Point => 1,
        _ => s.models.waypoint_n().map_err(ApiError::internal)?,
    };
    if req.points.len() < needed {
        return Err(ApiError::bad_request(if req.mode == Mode::Point {
            "at least one query point is required".to_string()
        } else {
            format!("insufficient waypoint points: got {}, need {needed}", req.points.len())
        }));
    }
    let session = s.clone();
    tokio::task::spawn_blocking(move || run_query(&session, &req, &r, &t))
        .await
        .map_err(ApiError::internal)?
        .map(Json)
}

fn encoded(s: &Session, ds: &Dataset, r: usize, t: usize, model: usize) -> Result<Arc<EncodedPair>, ApiError> {
    if let Some(e) = s.cache.get((r, t)) {
        return Ok(e);
    }
    let load = |id: usize| -> Result<_, ApiError> {
        let img = ds.image(id)?;
        if img.width == model { Ok(img) } else { img.downsample(img.width / model).map_err(ApiError::internal) }
    };
    let e = Arc::new(s.models.encode(&load(r)?, &load(t)?).map_err(ApiError::internal)?);
    s.cache.insert((r, t), e.clone());
    Ok(e)
}

fn run_query(s: &Session, req: &CorrespondRequest, r: &ViewRecord, t: &ViewRecord) -> Result<CorrespondResponse, ApiError> {
    let ds = s.dataset.as_ref().expect("checked by the handler");
    let model = s.model_size.expect("a model is loaded");
    let size = ds.manifest.geometry.image_size as f64;
    // image pixels -> model pixels and back
    let down = model as f64 / size;
    let up = size / model as f64;
    let enc = encoded(s, ds, r.id, t.id, model)?;
    let queries: Vec<Point2> = req.points.iter().map(|p| Point2::new(p[0] * down, p[1] * down)).collect();

    let mut clamped = false;
    let mut out = |p: Point2| -> [f64; 2] {
        let q = Point2::new(p.x * up, p.y * up);
        let c = [q.x.clamp(0.0, size), q.y.clamp(0.0, size)];
        clamped |= c != [q.x, q.y];
        c
    };
    let curve_for = |pts: &[Point2]| -> Result<CubicBezier, ApiError> {
        let n = s.models.waypoint_n().map_err(ApiError::internal)?;
        let w = resample_polyline(pts, n).map_err(|e| ApiError::bad_request(format!("cannot resample segment: {e}")))?;
        let c = s.models.c2c(&enc, &[w]).map_err(ApiError::internal)?;
        Ok(c[0].curve)
    };
    let curve_body = |b: &CubicBezier, out: &mut dyn FnMut(Point2) -> [f64; 2]| -> CurveBody {
        let up_curve = b.map(|p| Point2::new(p.x * up, p.y * up));
        let samples = bezier_sample(b, CURVE_SAMPLES).expect("sample count above 1");
        CurveBody { control_points: up_curve.control_points.map(<[f64; 2]>::from), samples: samples.into_iter().map(out).collect() }
    };

    let (points, p2p, curve) = match req.mode {
        Mode::Point => {
            let pred = s.models.p2p(&enc, &queries).map_err(ApiError::internal)?;
            (pred.into_iter().map(&mut out).collect(), None, None)
        }
        Mode::Curve => {
            let b = curve_for(&queries)?;
            (vec![], None, Some(curve_body(&b, &mut out)))
        }
        Mode::Refined => {
            let b = curve_for(&queries)?;
            let pred = s.models.p2p(&enc, &queries).map_err(ApiError::internal)?;
            let refined: Vec<[f64; 2]> = pred.iter().map(|&p| out(nearest_point_on_curve(&b, p).1)).collect();
            let raw: Vec<[f64; 2]> = pred.into_iter().map(&mut out).collect();
            (refined, Some(raw), Some(curve_body(&b, &mut out)))
        }
    };
    Ok(CorrespondResponse {
        mode: req.mode,
        ref_id: r.id,
        tgt_id: t.id,
        angle_deg: angle_between_angulations(r.angulation(), t.angulation()),
        points,
        p2p,
        curve,
        clamped,
    })
}
