mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use kgpolicy_core::compose::compose;
use kgpolicy_core::sim::SimConfig;
use kgpolicy_service::router;
use tower::ServiceExt;

async fn call(method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let app = router(Arc::new(common::engine()));
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn policies_match_direct_composition() {
    let engine = common::engine();
    let start = engine
        .store
        .simulation_at_state("InitialState_Watch_TV_49", None, SimConfig::default())
        .unwrap();
    let (table, _) = compose(&start, &engine.space, &engine.composer).unwrap();

    let (status, body) = call("POST", "/policies", r#"{"stateName":"InitialState_Watch_TV_49"}"#).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, table.to_json());
}

#[tokio::test]
async fn features_identify_the_state() {
    let engine = common::engine();
    let tv = engine.store.model("Watch_TV_49").unwrap();
    let features = serde_json::to_value(tv.default_features()).unwrap();
    let req = serde_json::json!({ "featureValues": features, "activity": "Watch_TV_49" }).to_string();
    let (status, body) = call("POST", "/policies", &req).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (_, by_name) = call(
        "POST",
        "/policies",
        r#"{"stateName":"InitialState_Watch_TV_49","activity":"Watch_TV_49"}"#,
    )
    .await;
    assert_eq!(body, by_name);
}

#[tokio::test]
async fn unknown_state_is_unprocessable() {
    let (status, body) = call("POST", "/policies", r#"{"stateName":"Nowhere"}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body, r#"{"reason":"unknown state"}"#);
    let (status, _) = call("POST", "/policies", r#"{"stateName":"InitialState_Watch_TV_49","activity":"Nope"}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn malformed_requests_are_rejected() {
    for body in [
        "{",
        "[]",
        "{}",
        r#"{"stateName":"a","featureValues":{"x":1}}"#,
        r#"{"stateName":"a","extra":1}"#,
    ] {
        let (status, _) = call("POST", "/policies", body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    }
}

#[tokio::test]
async fn health() {
    assert_eq!(call("GET", "/health", "").await, (StatusCode::OK, "ok".to_string()));
}
