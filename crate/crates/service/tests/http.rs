use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use choicescore_service::auth::{Authenticator, OpenAccess, TokenTable};
use choicescore_service::{serve, AppState, StudyStore};
use reqwest::StatusCode;
use serde_json::{json, Value};

fn small_catalog() -> Value {
    json!({"attributes": [
        {"name": "tenure", "levels": ["new", "established", "long"]},
        {"name": "cross_border", "levels": ["no", "yes"]},
        {"name": "cash_heavy", "levels": ["no", "yes"]},
    ]})
}

struct Server {
    base: String,
    _dir: tempfile::TempDir,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

async fn start(auth: Arc<dyn Authenticator>) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(StudyStore::open(dir.path()).unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let (addr_tx, addr_rx) = tokio::sync::oneshot::channel::<SocketAddr>();
    tokio::spawn(async move {
        serve(
            AppState { store, auth },
            "127.0.0.1:0".parse().unwrap(),
            move |a| addr_tx.send(a).unwrap(),
            async move {
                let _ = rx.await;
            },
        )
        .await
        .unwrap();
    });
    let addr = addr_rx.await.unwrap();
    Server { base: format!("http://{addr}"), _dir: dir, stop: Some(tx) }
}

async fn error_code(resp: reqwest::Response) -> (StatusCode, String) {
    let status = resp.status();
    let body: Value = resp.json().await.unwrap();
    (status, body["error"].as_str().unwrap().to_string())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn small_study_over_http() {
    let server = start(Arc::new(OpenAccess)).await;
    let http = reqwest::Client::new();
    let base = &server.base;

    let resp = http.post(format!("{base}/studies")).json(&json!({"n": 24, "seed": 1})).send().await.unwrap();
    assert_eq!(error_code(resp).await, (StatusCode::UNPROCESSABLE_ENTITY, "plan_infeasible".into()));

    let resp = http
        .post(format!("{base}/studies"))
        .json(&json!({"id": "demo", "n": 20, "seed": 5, "catalog": small_catalog(), "prior": {"kind": "uniform", "low": -1.0, "high": 1.0}}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    let study: Value = resp.json().await.unwrap();
    assert_eq!(study["p"], 5);
    assert_eq!(study["status"], "draft");

    let resp = http.post(format!("{base}/studies/demo/sessions")).json(&json!({"labeler_id": "ann"})).send().await.unwrap();
    assert_eq!(error_code(resp).await, (StatusCode::CONFLICT, "invalid_state".into()));
    http.post(format!("{base}/studies/demo/open")).send().await.unwrap().error_for_status().unwrap();

    let session: Value = http
        .post(format!("{base}/studies/demo/sessions"))
        .json(&json!({"labeler_id": "ann"}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let sid = session["session_id"].as_str().unwrap().to_string();
    assert_eq!(session["questionnaire_index"], 0);

    for k in 0..5 {
        let next: Value = http.get(format!("{base}/sessions/{sid}/next")).send().await.unwrap().json().await.unwrap();
        assert_eq!(next["set_index"], k);
        let ids: Vec<u64> = next["profiles"].as_array().unwrap().iter().map(|p| p["id"].as_u64().unwrap()).collect();
        assert_eq!(ids.len(), 4);
        let resp = http
            .post(format!("{base}/sessions/{sid}/responses"))
            .json(&json!({"set_index": k, "most_id": ids[1], "least_id": ids[1]}))
            .send()
            .await
            .unwrap();
        assert_eq!(error_code(resp).await, (StatusCode::UNPROCESSABLE_ENTITY, "invalid_response".into()));
        let ack: Value = http
            .post(format!("{base}/sessions/{sid}/responses"))
            .json(&json!({"set_index": k, "most_id": ids[1], "least_id": ids[2]}))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(ack["cursor"], k + 1);
    }
    let next: Value = http.get(format!("{base}/sessions/{sid}/next")).send().await.unwrap().json().await.unwrap();
    assert_eq!(next["done"], true);

    let resp = http.get(format!("{base}/studies/demo/scores")).send().await.unwrap();
    assert_eq!(error_code(resp).await, (StatusCode::CONFLICT, "not_ready".into()));
    let manifest: Value = http
        .post(format!("{base}/studies/demo/aggregate"))
        .json(&json!({"minimum_questionnaires": 1}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(manifest["q_used"], 1);
    let scores: Value = http.get(format!("{base}/studies/demo/scores")).send().await.unwrap().json().await.unwrap();
    assert_eq!(scores["entries"].as_array().unwrap().len(), 20);

    let resp = http.get(format!("{base}/studies/nope")).send().await.unwrap();
    assert_eq!(error_code(resp).await, (StatusCode::NOT_FOUND, "not_found".into()));
    let resp = http.get(format!("{base}/sessions/demo.q9/next")).send().await.unwrap();
    assert_eq!(error_code(resp).await, (StatusCode::NOT_FOUND, "not_found".into()));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn token_mode_guards_sessions_and_admin_calls() {
    let tokens = HashMap::from([("tok-a".to_string(), "ann".to_string()), ("tok-b".to_string(), "bo".to_string())]);
    let server = start(Arc::new(TokenTable::new(tokens, "admin-secret"))).await;
    let http = reqwest::Client::new();
    let base = &server.base;

    let resp = http.post(format!("{base}/studies")).json(&json!({"id": "t", "n": 20, "catalog": small_catalog()})).send().await.unwrap();
    assert_eq!(error_code(resp).await, (StatusCode::UNAUTHORIZED, "unauthorized".into()));
    http.post(format!("{base}/studies"))
        .bearer_auth("admin-secret")
        .json(&json!({"id": "t", "n": 20, "catalog": small_catalog()}))
        .send()
        .await
        .unwrap()
        .error_for_status()
        .unwrap();
    http.post(format!("{base}/studies/t/open?token=admin-secret")).send().await.unwrap().error_for_status().unwrap();

    let session: Value = http
        .post(format!("{base}/studies/t/sessions"))
        .bearer_auth("tok-a")
        .json(&json!({}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(session["labeler_id"], "ann");
    let sid = session["session_id"].as_str().unwrap();

    let resp = http.get(format!("{base}/sessions/{sid}/next")).bearer_auth("tok-b").send().await.unwrap();
    assert_eq!(error_code(resp).await, (StatusCode::UNAUTHORIZED, "unauthorized".into()));
    let resp = http.get(format!("{base}/sessions/{sid}/next")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    let resp = http.get(format!("{base}/sessions/{sid}/next?token=tok-a")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}
