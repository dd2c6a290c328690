mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use qac_cli::server::{router, AppState};
use qac_core::pipeline::{ModelBundle, RunConfig, Suggester};

use common::{fixture, path, qac, stdout};

fn loaded() -> AppState {
    let bundle = ModelBundle::load(&fixture().models).unwrap();
    AppState::loaded(Suggester::new(bundle, RunConfig::default().decode).unwrap())
}

async fn get(state: AppState, uri: &str) -> (StatusCode, Value) {
    let res = router(state)
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn suggest_returns_ranked_candidates() {
    let (status, body) = get(loaded(), "/suggest?prefix=ab&n=2").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["prefix"], "ab");
    assert_eq!(body["model"], "lm");
    let c = body["candidates"].as_array().unwrap();
    assert_eq!(c.len(), 2);
    for (i, row) in c.iter().enumerate() {
        assert_eq!(row["rank"], i + 1);
        assert!(row["query"].as_str().unwrap().starts_with("ab"));
        assert!(row["score"].is_f64());
    }
    assert!(c[0]["score"].as_f64() >= c[1]["score"].as_f64());
    assert!(body["latency_ms"].as_f64().unwrap() >= 0.0);
}

#[tokio::test]
async fn prefix_is_normalized_server_side() {
    let (status, body) = get(loaded(), "/suggest?prefix=%20%20AB&model=mpc").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["prefix"], "  AB");
    assert_eq!(body["normalized_prefix"], "ab");
    assert_eq!(body["model"], "mpc");
}

#[tokio::test]
async fn bad_requests_get_400() {
    let long = "a".repeat(101);
    for uri in [
        "/suggest?prefix=ab&n=31".to_string(),
        "/suggest?prefix=ab&n=0".to_string(),
        "/suggest?prefix=ab&n=two".to_string(),
        "/suggest?prefix=".to_string(),
        "/suggest?prefix=%20%20".to_string(),
        "/suggest".to_string(),
        "/suggest?prefix=ab&model=gpt".to_string(),
        format!("/suggest?prefix={long}"),
    ] {
        let (status, body) = get(loaded(), &uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert!(body["error"].is_string());
    }
}

#[tokio::test]
async fn unloaded_service_answers_503() {
    let (status, _) = get(AppState::empty(), "/suggest?prefix=ab").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let (status, body) = get(AppState::empty(), "/health").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["status"], "loading");
}

#[tokio::test]
async fn health_reports_model_metadata() {
    let (status, body) = get(loaded(), "/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["metadata"]["segmenter"], "bpe");
    assert_eq!(body["metadata"]["seed"], 3);
    assert_eq!(body["metadata"]["lm_order"], 3);
    assert_eq!(body["decode"]["beam_width"], 30);
}

#[tokio::test]
async fn concurrent_identical_requests_agree() {
    let state = loaded();
    let calls = (0..8).map(|_| get(state.clone(), "/suggest?prefix=ca&n=5"));
    let results = futures_join(calls).await;
    let first = &results[0].1["candidates"];
    for (status, body) in &results {
        assert_eq!(*status, StatusCode::OK);
        assert_eq!(&body["candidates"], first);
    }
}

async fn futures_join<F: std::future::Future<Output = T> + Send + 'static, T: Send + 'static>(
    futs: impl Iterator<Item = F>,
) -> Vec<T> {
    let handles: Vec<_> = futs.map(tokio::spawn).collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}

#[tokio::test]
async fn cli_and_http_return_the_same_candidates() {
    let f = fixture();
    for (prefix, model) in [("ab", "lm"), ("fab", "lm"), ("ba", "mpc"), ("east ", "lm")] {
        let o = qac(&[
            "complete",
            "--prefix",
            prefix,
            "--models-dir",
            &path(&f.models),
            "--model",
            model,
            "--n",
            "6",
        ]);
        assert!(o.status.success());
        let cli: Vec<Value> = stdout(&o)
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let uri = format!(
            "/suggest?prefix={}&n=6&model={model}",
            prefix.replace(' ', "%20")
        );
        let (_, body) = get(loaded(), &uri).await;
        let http = body["candidates"].as_array().unwrap();
        assert_eq!(cli.len(), http.len(), "{prefix}");
        for (a, b) in cli.iter().zip(http) {
            assert_eq!(a["query"], b["query"]);
            assert_eq!(a["score"], b["score"]);
            assert_eq!(a["rank"], b["rank"]);
        }
    }
}
