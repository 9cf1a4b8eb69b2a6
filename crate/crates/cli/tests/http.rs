use std::sync::Arc;

use autorefine::synthetic::{train_world, PipelineParams, WorldParams};
use autorefine::Config;
use autorefine_cli::server::{router, AppState};
use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use tower::ServiceExt;

fn state(with_rewriter: bool) -> Arc<AppState> {
    let params = PipelineParams {
        world: WorldParams {
            candidates: 300,
            train_jobs: 30,
            eval_jobs: 4,
            ..WorldParams::default()
        },
        ..PipelineParams::default()
    };
    let config = Config::default();
    let tw = train_world(&config, &params).unwrap();
    Arc::new(AppState {
        config,
        evaluator: tw.evaluator,
        rewriter: with_rewriter.then_some((tw.lm, tw.values)),
    })
}

async fn call(
    state: &Arc<AppState>,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

#[tokio::test]
async fn health_and_config() {
    let s = state(false);
    let (status, body) = call(&s, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"status": "ok"}));
    let (status, body) = call(&s, "GET", "/config", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["beta"], 8.0);
    assert_eq!(
        body["attributes"][0]["categories"],
        json!(["female", "male"])
    );
    assert_eq!(body["attributes"][1]["target"][0], 0.55);
}

#[tokio::test]
async fn evaluate_is_deterministic_and_consistent() {
    let s = state(false);
    let req = json!({"description": "acme is hiring a backend engineer . we want someone bold ."});
    let (status, a) = call(&s, "POST", "/evaluate", Some(req.clone())).await;
    let (_, b) = call(&s, "POST", "/evaluate", Some(req)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(a, b);
    let deltas: f64 = a["diversity"]["deltas"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((a["diversity"]["score"].as_f64().unwrap() + 100.0 * deltas).abs() < 1e-9);
    assert_eq!(a["top_candidates"].as_array().unwrap().len(), 10);
    assert!(a["top_candidates"][0].get("text").is_none());
    let selected: u64 = a["selected_histogram"]["gender"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(selected, 10);

    let (status, err) = call(&s, "POST", "/evaluate", Some(json!({"description": " "}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(err["error"].is_string());
    let (status, _) = call(&s, "POST", "/evaluate", Some(json!({"text": "x"}))).await;
    assert!(status.is_client_error());
}

#[tokio::test]
async fn rewrite_contract() {
    let s = state(true);
    let req = json!({"description": "we want someone aggressive .", "beta": 8.0});
    let (status, a) = call(&s, "POST", "/rewrite", Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK, "{a}");
    let (_, b) = call(&s, "POST", "/rewrite", Some(req)).await;
    assert_eq!(a, b);
    assert!(a["rewritten"].as_str().is_some_and(|t| !t.is_empty()));
    let tokens = a["token_advantages"].as_array().unwrap();
    assert!(!tokens.is_empty());
    assert!(tokens
        .iter()
        .all(|t| t["token"].is_string() && t["advantage"].is_number()));
    assert!(a["before"]["diversity"]["score"].is_number());
    assert!(a["after"]["diversity"]["score"].is_number());

    // Without a strength the configured one applies; zero disables guidance.
    let (_, default_beta) = call(
        &s,
        "POST",
        "/rewrite",
        Some(json!({"description": "we want someone aggressive ."})),
    )
    .await;
    assert_eq!(default_beta, a);
    let (_, plain) = call(
        &s,
        "POST",
        "/rewrite",
        Some(json!({"description": "we want someone aggressive .", "beta": 0.0})),
    )
    .await;
    assert!(plain["rewritten"].is_string());

    let (status, _) = call(
        &s,
        "POST",
        "/rewrite",
        Some(json!({"description": "x", "beta": -1.0})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn rewrite_unavailable_without_models() {
    let s = state(false);
    let (status, body) = call(&s, "POST", "/rewrite", Some(json!({"description": "x"}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert!(body["error"].is_string());
}
