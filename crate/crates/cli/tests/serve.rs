use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use magnitude::data::gen_blobs;
use magnitude::{ALConfig, ALSession, Strategy};
use magnitude_cli::serve::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn session(budget: Option<usize>) -> (ALSession, Vec<usize>) {
    let data = gen_blobs(&[vec![-3.0, 0.0], vec![3.0, 0.0]], 1.0, 30, 5).unwrap();
    let config = ALConfig { strategy: Strategy::Weighting, budget, seed: 2, ..ALConfig::default() };
    let s = ALSession::new(data.cloud.clone(), data.label_names.clone(), Some(data.clone()), &[], config).unwrap();
    (s, data.labels)
}

async fn call(state: &Arc<AppState>, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req.header("content-type", "application/json").body(Body::from(v.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn raw_post(state: &Arc<AppState>, uri: &str, body: &'static str) -> (StatusCode, Value) {
    let req = Request::builder().method(Method::POST).uri(uri).body(Body::from(body)).unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn query_indices(v: &Value) -> Vec<usize> {
    v["queries"].as_array().unwrap().iter().map(|q| q["index"].as_u64().unwrap() as usize).collect()
}

fn answer(indices: &[usize], truth: &[usize]) -> Value {
    json!({ "labels": indices.iter().map(|&i| json!({ "index": i, "label": truth[i] })).collect::<Vec<_>>() })
}

#[tokio::test]
async fn full_batches_advance_the_session() {
    let (s, truth) = session(None);
    let state = AppState::new(s, None);
    let (status, v) = call(&state, Method::GET, "/v1/session", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["version"], 1);
    assert_eq!(v["iteration"], 0);
    assert_eq!(v["labeled"], 0);
    assert_eq!(v["unlabeled"], 60);
    assert_eq!(v["projection"]["method"], "pca");
    assert_eq!(v["history"].as_array().unwrap().len(), 1);

    for round in 1..=3 {
        let (_, q) = call(&state, Method::GET, "/v1/queries", None).await;
        assert_eq!(q["done"], false);
        let idx = query_indices(&q);
        assert_eq!(idx.len(), 4);
        for p in q["queries"].as_array().unwrap() {
            assert_eq!(p["features"].as_array().unwrap().len(), 2);
            assert_eq!(p["projection"].as_array().unwrap().len(), 2);
        }
        let (status, v) = call(&state, Method::POST, "/v1/labels", Some(answer(&idx, &truth))).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        assert_eq!(v["iteration"], round);
        assert_eq!(v["labeled"], 4 * round);
        assert_eq!(v["history"].as_array().unwrap().len(), round + 1);
    }
    let (_, v) = call(&state, Method::GET, "/v1/session", None).await;
    assert!(v["history"][3]["accuracy"].as_f64().unwrap() > 0.9);
}

#[tokio::test]
async fn stale_and_invalid_batches_leave_the_session_unchanged() {
    let (s, truth) = session(None);
    let state = AppState::new(s, None);
    let (_, q) = call(&state, Method::GET, "/v1/queries", None).await;
    let first = query_indices(&q);
    call(&state, Method::POST, "/v1/labels", Some(answer(&first, &truth))).await;
    let before = state.session().await.to_checkpoint().unwrap();

    let (status, v) = call(&state, Method::POST, "/v1/labels", Some(answer(&first, &truth))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"]["kind"], "not_queried");

    let (_, q) = call(&state, Method::GET, "/v1/queries", None).await;
    let current = query_indices(&q);
    let (status, v) = call(&state, Method::POST, "/v1/labels", Some(answer(&current[..2], &truth))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["kind"], "incomplete");

    let bad = json!({ "labels": current.iter().map(|&i| json!({ "index": i, "label": 7 })).collect::<Vec<_>>() });
    let (status, v) = call(&state, Method::POST, "/v1/labels", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["kind"], "unknown_label");

    let (status, v) = raw_post(&state, "/v1/labels", r#"{"labels":[{"index":0,"label":"x"}]}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["kind"], "malformed");
    assert_eq!(v["error"]["path"], "labels[0].label");

    let (status, _) = raw_post(&state, "/v1/labels", "not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, v) = call(&state, Method::POST, "/v1/labels", Some(json!({ "version": 2, "labels": [] }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["kind"], "version");

    assert_eq!(state.session().await.to_checkpoint().unwrap(), before);
}

#[tokio::test]
async fn budget_exhaustion_reports_done() {
    let (s, truth) = session(Some(6));
    let state = AppState::new(s, None);
    let mut sizes = Vec::new();
    loop {
        let (_, q) = call(&state, Method::GET, "/v1/queries", None).await;
        let idx = query_indices(&q);
        if idx.is_empty() {
            assert_eq!(q["done"], true);
            break;
        }
        sizes.push(idx.len());
        let (status, _) = call(&state, Method::POST, "/v1/labels", Some(answer(&idx, &truth))).await;
        assert_eq!(status, StatusCode::OK);
    }
    assert_eq!(sizes, vec![4, 2]);
    let (status, v) = call(&state, Method::POST, "/v1/labels", Some(json!({ "labels": [] }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"]["kind"], "nothing_pending");
    let (_, v) = call(&state, Method::GET, "/v1/session", None).await;
    assert_eq!(v["done"], true);
    assert_eq!(v["spent"], 6);
    assert_eq!(v["remaining_budget"], 0);
}

#[tokio::test]
async fn points_report_status_and_predictions() {
    let (s, truth) = session(None);
    let state = AppState::new(s, None);
    let (_, v) = call(&state, Method::GET, "/v1/points", None).await;
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 60);
    let count = |pts: &[Value], s: &str| pts.iter().filter(|p| p["status"] == s).count();
    assert_eq!(count(points, "queried"), 4);
    assert!(points.iter().all(|p| p["predicted"].is_null()));

    let (_, q) = call(&state, Method::GET, "/v1/queries", None).await;
    let idx = query_indices(&q);
    call(&state, Method::POST, "/v1/labels", Some(answer(&idx, &truth))).await;
    let (_, v) = call(&state, Method::GET, "/v1/points", None).await;
    let points = v["points"].as_array().unwrap();
    assert_eq!(count(points, "labeled"), 4);
    assert_eq!(count(points, "queried"), 4);
    for &i in &idx {
        assert_eq!(points[i]["label"], truth[i]);
    }
    // Projection coordinates agree between /points and /queries.
    let (_, q) = call(&state, Method::GET, "/v1/queries", None).await;
    for p in q["queries"].as_array().unwrap() {
        assert_eq!(points[p["index"].as_u64().unwrap() as usize]["projection"], p["projection"]);
    }
}

#[tokio::test]
async fn pause_blocks_labels_and_checkpoint_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.json");
    let (s, truth) = session(None);
    let state = AppState::new(s, Some(path.clone()));
    let (_, q) = call(&state, Method::GET, "/v1/queries", None).await;
    call(&state, Method::POST, "/v1/labels", Some(answer(&query_indices(&q), &truth))).await;

    let (status, v) = call(&state, Method::POST, "/v1/control", Some(json!({ "action": "pause" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["paused"], true);
    let (_, q) = call(&state, Method::GET, "/v1/queries", None).await;
    assert_eq!(q["paused"], true);
    let (status, v) = call(&state, Method::POST, "/v1/labels", Some(answer(&query_indices(&q), &truth))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"]["kind"], "paused");

    let (status, v) = call(&state, Method::POST, "/v1/control", Some(json!({ "action": "checkpoint" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["checkpoint"], path.to_str().unwrap());

    let resumed = AppState::new(ALSession::from_checkpoint(&std::fs::read_to_string(&path).unwrap()).unwrap(), None);
    let (_, a) = call(&state, Method::GET, "/v1/session", None).await;
    let (_, b) = call(&resumed, Method::GET, "/v1/session", None).await;
    assert_eq!(a["iteration"], b["iteration"]);
    assert_eq!(a["pending"], b["pending"]);
    assert_eq!(a["history"], b["history"]);
    let (_, qa) = call(&state, Method::GET, "/v1/queries", None).await;
    let (_, qb) = call(&resumed, Method::GET, "/v1/queries", None).await;
    assert_eq!(qa["queries"], qb["queries"]);

    let (status, _) = call(&state, Method::POST, "/v1/control", Some(json!({ "action": "resume" }))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&state, Method::POST, "/v1/labels", Some(answer(&query_indices(&qa), &truth))).await;
    assert_eq!(status, StatusCode::OK);

    let (status, v) = call(&resumed, Method::POST, "/v1/control", Some(json!({ "action": "checkpoint" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"]["kind"], "no_checkpoint_path");
}

#[tokio::test]
async fn concurrent_submissions_apply_once() {
    let (s, truth) = session(None);
    let state = AppState::new(s, None);
    let (_, q) = call(&state, Method::GET, "/v1/queries", None).await;
    let body = answer(&query_indices(&q), &truth);
    let tasks: Vec<_> = (0..4)
        .map(|_| {
            let (state, body) = (state.clone(), body.clone());
            tokio::spawn(async move { call(&state, Method::POST, "/v1/labels", Some(body)).await.0 })
        })
        .collect();
    let mut statuses = Vec::new();
    for t in tasks {
        statuses.push(t.await.unwrap());
    }
    assert_eq!(statuses.iter().filter(|&&s| s == StatusCode::OK).count(), 1);
    assert_eq!(statuses.iter().filter(|&&s| s == StatusCode::CONFLICT).count(), 3);
    assert_eq!(state.session().await.iteration(), 1);
}

#[tokio::test]
async fn unknown_routes_are_json_404() {
    let (s, _) = session(None);
    let state = AppState::new(s, None);
    let (status, v) = call(&state, Method::GET, "/v2/session", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["kind"], "not_found");
}
