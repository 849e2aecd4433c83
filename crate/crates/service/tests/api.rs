use std::sync::{Arc, OnceLock};

use angiocorr::corrmodel::{CorrModel, EncodedPair, ModelConfig, Models, Task};
use angiocorr::curves::{nearest_point_on_curve, CubicBezier};
use angiocorr::geometry::{GeometryConfig, Point2};
use angiocorr::harness::{load_dataset, Dataset};
use angiocorr::phantom::{image_path, make_dataset, DatasetConfig, Side};
use angiocorr_service::{
    router, CorrespondResponse, ErrorBody, Info, PairCache, Session, ViewEntry, CURVE_SAMPLES, PAIR_CACHE_CAPACITY,
};
use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const SIZE: f64 = 64.0;

fn tiny(task: Task) -> ModelConfig {
    ModelConfig {
        input_size: 16,
        feature_hw: (2, 2),
        channels: 8,
        encoder_layers: 1,
        decoder_layers: 1,
        heads: 2,
        head_mlp_layers: 3,
        ffn_dim: 8,
        task,
        waypoint_n: if task == Task::C2c { 10 } else { 0 },
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    dataset: Dataset,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            subjects: 1,
            seed: 2,
            geometry: GeometryConfig::default().with_image_size(64),
            ..Default::default()
        };
        make_dataset(dir.path(), &cfg).unwrap();
        let dataset = load_dataset(dir.path()).unwrap();
        Fixture { _dir: dir, dataset }
    })
}

fn models(p2p: bool, c2c: bool) -> Models {
    Models::new(
        p2p.then(|| CorrModel::new(tiny(Task::P2p), 1).unwrap()),
        c2c.then(|| CorrModel::new(tiny(Task::C2c), 2).unwrap()),
    )
    .unwrap()
}

fn app(with_dataset: bool, p2p: bool, c2c: bool) -> Router {
    let ds = with_dataset.then(|| fixture().dataset.clone());
    router(Arc::new(Session::new(ds, models(p2p, c2c)).unwrap()))
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>, axum::http::HeaderMap) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body, headers)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>, axum::http::HeaderMap) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, body: Value) -> (StatusCode, Vec<u8>) {
    let req = Request::post("/api/correspond")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b, _) = send(app, req).await;
    (s, b)
}

fn error(body: &[u8]) -> ErrorBody {
    serde_json::from_slice(body).unwrap()
}

fn segment(n: usize) -> Vec<[f64; 2]> {
    (0..n).map(|i| [20.0 + 2.0 * i as f64, 30.0 + 0.5 * i as f64]).collect()
}

fn inside(p: &[f64; 2]) -> bool {
    (0.0..=SIZE).contains(&p[0]) && (0.0..=SIZE).contains(&p[1])
}

#[tokio::test]
async fn views_need_a_dataset() {
    let app = app(false, true, true);
    let (s, b, _) = get(&app, "/api/views").await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(error(&b).code, "dataset_unavailable");
    assert_eq!(get(&app, "/api/views/0/image").await.0, StatusCode::SERVICE_UNAVAILABLE);
    let (s, b) = post(&app, json!({"ref_id": 0, "tgt_id": 1, "mode": "point", "points": [[1, 1]]})).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE, "{}", String::from_utf8_lossy(&b));
    let info: Info = serde_json::from_slice(&get(&app, "/api/info").await.1).unwrap();
    assert!(!info.dataset_loaded && info.p2p && info.c2c);
    assert_eq!(info.waypoint_n, Some(10));
}

#[tokio::test]
async fn view_index_lists_every_view_in_order() {
    let app = app(true, true, true);
    let (s, b, _) = get(&app, "/api/views").await;
    assert_eq!(s, StatusCode::OK);
    let views: Vec<ViewEntry> = serde_json::from_slice(&b).unwrap();
    assert_eq!(views.len(), 126);
    assert!(views.iter().enumerate().all(|(i, v)| v.id == i && v.tree_id == i / 63));
    let raw: Vec<Value> = serde_json::from_slice(&b).unwrap();
    assert!(raw[0].get("alpha_deg").is_some() && raw[0].get("beta_deg").is_some() && raw[0].get("group").is_some());
    assert_eq!(b, get(&app, "/api/views").await.1);
}

#[tokio::test]
async fn images_pass_through_stored_bytes() {
    let app = app(true, false, false);
    let f = fixture();
    for (id, side, view) in [(0, Side::Lca, 0), (64, Side::Rca, 1)] {
        let (s, b, h) = get(&app, &format!("/api/views/{id}/image")).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(h[header::CONTENT_TYPE], "image/x-portable-graymap");
        let disk = std::fs::read(f.dataset.root.join(image_path(0, side, view))).unwrap();
        assert_eq!(b, disk);
    }
    assert_eq!(get(&app, "/api/views/126/image").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/views/abc/image").await.0, StatusCode::NOT_FOUND);

    let head = Request::builder().method(Method::HEAD).uri("/api/views/0/image").body(Body::empty()).unwrap();
    let (s, b, h) = send(&app, head).await;
    assert_eq!(s, StatusCode::OK);
    assert!(b.is_empty());
    let len: usize = h[header::CONTENT_LENGTH].to_str().unwrap().parse().unwrap();
    assert_eq!(len, f.dataset.image_bytes(0).unwrap().len());
}

#[tokio::test]
async fn point_mode_returns_one_pixel_per_click() {
    let app = app(true, true, false);
    let (s, b) = post(&app, json!({"ref_id": 3, "tgt_id": 40, "mode": "point", "points": [[10, 10], [32.5, 20], [50, 61]]})).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&b));
    let r: CorrespondResponse = serde_json::from_slice(&b).unwrap();
    assert_eq!(r.points.len(), 3);
    assert!(r.points.iter().all(inside));
    assert!(r.curve.is_none() && r.p2p.is_none());
    assert!(r.angle_deg > 0.0);
}

#[tokio::test]
async fn curve_and_refined_modes() {
    let app = app(true, true, true);
    let (s, b) = post(&app, json!({"ref_id": 5, "tgt_id": 9, "mode": "curve", "points": segment(13)})).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&b));
    let r: CorrespondResponse = serde_json::from_slice(&b).unwrap();
    let c = r.curve.unwrap();
    assert_eq!(c.samples.len(), CURVE_SAMPLES);
    assert!(c.samples.iter().all(inside));

    let (s, b) = post(&app, json!({"ref_id": 5, "tgt_id": 9, "mode": "refined", "points": segment(10)})).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&b));
    let r: CorrespondResponse = serde_json::from_slice(&b).unwrap();
    assert_eq!(r.points.len(), 10);
    assert_eq!(r.p2p.as_ref().unwrap().len(), 10);
    let cp = r.curve.unwrap().control_points.map(Point2::from);
    let bez = CubicBezier { control_points: cp };
    for p in &r.points {
        let p = Point2::from(*p);
        let d = nearest_point_on_curve(&bez, p).1.dist(p);
        assert!(r.clamped || d <= 1e-3, "{d}");
    }
}

#[tokio::test]
async fn short_segments_and_bad_bodies_are_rejected() {
    let app = app(true, true, true);
    let (s, b) = post(&app, json!({"ref_id": 0, "tgt_id": 1, "mode": "curve", "points": segment(4)})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(error(&b).message.contains("insufficient waypoint points"));
    let (s, _) = post(&app, json!({"ref_id": 0, "tgt_id": 1, "mode": "refined", "points": segment(9)})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(&app, json!({"ref_id": 0, "tgt_id": 1, "mode": "point", "points": []})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(&app, json!({"ref_id": 0, "tgt_id": 1, "mode": "sideways", "points": [[1, 1]]})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(&app, json!({"ref_id": 0, "mode": "point"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let req = Request::post("/api/correspond").body(Body::from("{not json")).unwrap();
    assert_eq!(send(&app, req).await.0, StatusCode::BAD_REQUEST);
    let (s, _) = post(&app, json!({"ref_id": 0, "tgt_id": 1, "mode": "point", "points": [[70, 1]]})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(&app, json!({"ref_id": 0, "tgt_id": 1, "mode": "curve", "points": vec![[5.0, 5.0]; 12]})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, b) = post(&app, json!({"ref_id": 0, "tgt_id": 999, "mode": "point", "points": [[1, 1]]})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error(&b).code, "unknown_view");
}

#[tokio::test]
async fn missing_checkpoints_conflict() {
    let only_p2p = app(true, true, false);
    let (s, b) = post(&only_p2p, json!({"ref_id": 0, "tgt_id": 1, "mode": "curve", "points": segment(10)})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(error(&b).code, "checkpoint_missing");
    let (s, _) = post(&only_p2p, json!({"ref_id": 0, "tgt_id": 1, "mode": "refined", "points": segment(10)})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let only_c2c = app(true, false, true);
    let (s, _) = post(&only_c2c, json!({"ref_id": 0, "tgt_id": 1, "mode": "point", "points": [[3, 3]]})).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn identical_requests_give_identical_responses() {
    let app = app(true, true, true);
    let body = json!({"ref_id": 7, "tgt_id": 70, "mode": "refined", "points": segment(12)});
    let first = post(&app, body.clone()).await;
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (app, body) = (app.clone(), body.clone());
            tokio::spawn(async move { post(&app, body).await })
        })
        .collect();
    for h in handles {
        assert_eq!(h.await.unwrap(), first);
    }
}

#[test]
fn pair_cache_evicts_least_recently_used() {
    let cache = PairCache::new(PAIR_CACHE_CAPACITY);
    let e = || Arc::new(EncodedPair { p2p: None, c2c: None });
    for i in 0..PAIR_CACHE_CAPACITY {
        cache.insert((i, i + 1), e());
    }
    assert!(cache.get((0, 1)).is_some());
    cache.insert((100, 101), e());
    assert_eq!(cache.len(), PAIR_CACHE_CAPACITY);
    assert!(cache.get((1, 2)).is_none());
    assert!(cache.get((0, 1)).is_some());
    assert_eq!(cache.keys().last(), Some(&(0, 1)));
    cache.insert((0, 1), e());
    assert_eq!(cache.len(), PAIR_CACHE_CAPACITY);
}

#[test]
fn sessions_reject_mismatched_sizes() {
    let big = ModelConfig { input_size: 32, ..tiny(Task::C2c) };
    let m = Models::new(Some(CorrModel::new(tiny(Task::P2p), 1).unwrap()), Some(CorrModel::new(big, 1).unwrap())).unwrap();
    assert!(Session::new(None, m).is_err());
    let odd = ModelConfig { input_size: 24, feature_hw: (2, 2), ..tiny(Task::P2p) };
    let m = Models::new(Some(CorrModel::new(odd, 1).unwrap()), None).unwrap();
    assert!(Session::new(Some(fixture().dataset.clone()), m).is_err());
}
