use std::path::PathBuf;
use std::time::Duration;

use caas_core::harness::run_stream;
use caas_core::io::instance::BudgetField;
use caas_core::io::load_instance;
use caas_core::PolicyKind;
use caas_service::wire::{
    CreateSessionResponse, ReportResponse, SelectRequest, SelectResponse, WireCandidate, WireOutcome,
};
use caas_service::{router, ServiceConfig};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tokio::net::TcpListener;

struct Server {
    base: String,
    client: Client,
}

impl Server {
    async fn start(config: ServiceConfig) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { axum::serve(listener, router(config)).await.unwrap() });
        Self {
            base: format!("http://{addr}"),
            client: Client::new(),
        }
    }

    async fn create(&self, body: Value) -> (StatusCode, Value) {
        let r = self.client.post(format!("{}/v1/sessions", self.base)).json(&body).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn session(&self, budget: Value, lower: f64, upper: f64) -> String {
        let (status, body) = self
            .create(json!({"budget": budget, "ratio_lower": lower, "ratio_upper": upper, "policy": "ucosa"}))
            .await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["session_id"].as_str().unwrap().to_string()
    }

    async fn select_raw(&self, id: &str, body: &Value) -> (StatusCode, Value) {
        let r = self
            .client
            .post(format!("{}/v1/sessions/{id}/select", self.base))
            .json(body)
            .send()
            .await
            .unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn select(&self, id: &str, req: &SelectRequest) -> SelectResponse {
        let (status, body) = self.select_raw(id, &serde_json::to_value(req).unwrap()).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        serde_json::from_value(body).unwrap()
    }

    async fn report(&self, id: &str) -> (StatusCode, Value) {
        let r = self.client.get(format!("{}/v1/sessions/{id}/report", self.base)).send().await.unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn close(&self, id: &str) -> StatusCode {
        let r = self.client.delete(format!("{}/v1/sessions/{id}", self.base)).send().await.unwrap();
        r.status()
    }
}

fn cand(id: &str, relevance: f64, price: f64) -> WireCandidate {
    WireCandidate {
        chunk_id: id.into(),
        source_id: "s".into(),
        relevance,
        price,
    }
}

fn req(prompt: &str, candidates: Vec<WireCandidate>) -> SelectRequest {
    SelectRequest {
        prompt_id: prompt.into(),
        candidates,
        idempotency_key: None,
    }
}

fn amount(v: &BudgetField) -> f64 {
    match v {
        BudgetField::Amount(a) => *a,
        BudgetField::Text(_) => f64::INFINITY,
    }
}

#[tokio::test]
async fn create_reports_full_budget() {
    let srv = Server::start(ServiceConfig::default()).await;
    let (status, body) = srv
        .create(json!({"budget": 100, "ratio_lower": 1.0, "ratio_upper": std::f64::consts::E}))
        .await;
    assert_eq!(status, StatusCode::OK);
    let created: CreateSessionResponse = serde_json::from_value(body).unwrap();
    assert_eq!(created.remaining, BudgetField::Amount(100.0));
    assert_eq!(created.policy, "ucosa");
}

#[tokio::test]
async fn invalid_parameters_are_rejected() {
    let srv = Server::start(ServiceConfig::default()).await;
    for body in [
        json!({"budget": 100, "ratio_lower": 2.0, "ratio_upper": 1.0}),
        json!({"budget": -1, "ratio_lower": 1.0, "ratio_upper": 2.0}),
        json!({"budget": "lots", "ratio_lower": 1.0, "ratio_upper": 2.0}),
        json!({"budget": 1, "ratio_lower": 1.0, "ratio_upper": 2.0, "policy": "magic"}),
        json!({"budget": 1, "ratio_lower": 1.0, "ratio_upper": 2.0, "policy": "balance"}),
        json!({"budget": 1}),
    ] {
        let (status, err) = srv.create(body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body} -> {err}");
        assert!(err["error"].is_string());
    }
}

#[tokio::test]
async fn worked_example_over_the_wire() {
    let srv = Server::start(ServiceConfig::default()).await;
    let id = srv.session(json!(100.0), 1.0, std::f64::consts::E).await;
    // Spend exactly half the budget at ratio 1, the threshold's value at z = 0.5.
    for i in 0..100 {
        let r = srv.select(&id, &req(&format!("fill{i}"), vec![cand(&format!("f{i}"), 0.5, 0.5)])).await;
        assert_eq!(r.outcome, WireOutcome::Enriched);
    }
    let r = srv
        .select(&id, &req("p", vec![cand("a", 0.9, 1.0), cand("b", 0.5, 0.4), cand("c", 0.8, 0.7)]))
        .await;
    assert_eq!(r.outcome, WireOutcome::Enriched);
    assert_eq!(r.chunk_id.as_deref(), Some("c"));
    assert_eq!(r.relevance, Some(0.8));
    assert_eq!(r.z_before, 0.5);
    assert!((r.psi_before.unwrap() - 1.0).abs() < 1e-12);
    assert!((amount(&r.remaining_after) - 49.3).abs() < 1e-9);
}

#[tokio::test]
async fn empty_candidates_pass_through() {
    let srv = Server::start(ServiceConfig::default()).await;
    let id = srv.session(json!(10.0), 1.0, 2.0).await;
    let r = srv.select(&id, &req("p", vec![])).await;
    assert_eq!(r.outcome, WireOutcome::Passthrough);
    assert_eq!(r.chunk_id, None);
    assert_eq!(r.remaining_after, BudgetField::Amount(10.0));
}

#[tokio::test]
async fn infinite_budget_behaves_as_open() {
    let srv = Server::start(ServiceConfig::default()).await;
    let id = srv.session(json!("inf"), 0.5, 10.0).await;
    for i in 0..5 {
        let r = srv
            .select(&id, &req(&format!("p{i}"), vec![cand("cheap", 0.6, 0.1), cand("dear", 0.9, 0.8)]))
            .await;
        assert_eq!(r.chunk_id.as_deref(), Some("dear"));
        assert_eq!(r.z_before, 0.0);
        assert_eq!(r.remaining_after, BudgetField::Text("inf".into()));
    }
}

#[tokio::test]
async fn idempotent_replay_is_not_charged_twice() {
    let srv = Server::start(ServiceConfig::default()).await;
    let id = srv.session(json!(10.0), 1.0, 10.0).await;
    let mut request = req("p", vec![cand("x", 0.9, 0.5)]);
    request.idempotency_key = Some("k1".into());
    let first = srv.select(&id, &request).await;
    let second = srv.select(&id, &request).await;
    assert_eq!(first, second);
    let (_, report) = srv.report(&id).await;
    let report: ReportResponse = serde_json::from_value(report).unwrap();
    assert_eq!(report.decisions.len(), 1);
    assert_eq!(report.metrics.spent, 0.5);

    request.candidates.push(cand("y", 0.2, 0.1));
    let (status, _) = srv.select_raw(&id, &serde_json::to_value(&request).unwrap()).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn malformed_candidates_leave_state_untouched() {
    let srv = Server::start(ServiceConfig::default()).await;
    let id = srv.session(json!(10.0), 1.0, 10.0).await;
    let bad = [
        json!({"prompt_id": "p", "candidates": [{"chunk_id": "x", "relevance": 1.5, "price": 1.0}]}),
        json!({"prompt_id": "p", "candidates": [{"chunk_id": "x", "relevance": 0.5, "price": 0.0}]}),
        json!({"prompt_id": "p", "candidates": [{"chunk_id": "x", "relevance": 0.5}]}),
        json!({"prompt_id": "p", "candidates": [
            {"chunk_id": "x", "relevance": 0.5, "price": 1.0},
            {"chunk_id": "x", "relevance": 0.6, "price": 1.0}]}),
        json!({"candidates": []}),
    ];
    for body in bad {
        let (status, _) = srv.select_raw(&id, &body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    }
    let (_, report) = srv.report(&id).await;
    assert_eq!(report["metrics"]["nep"], 0);
    assert_eq!(report["metrics"]["spent"], 0.0);
    assert_eq!(report["decisions"].as_array().unwrap().len(), 0);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let srv = Server::start(ServiceConfig::default()).await;
    let (status, _) = srv.report("nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = srv.select_raw("nope", &json!({"prompt_id": "p"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(srv.close("nope").await, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn fresh_report_is_empty() {
    let srv = Server::start(ServiceConfig::default()).await;
    let id = srv.session(json!(5.0), 1.0, 2.0).await;
    let (status, body) = srv.report(&id).await;
    assert_eq!(status, StatusCode::OK);
    let report: ReportResponse = serde_json::from_value(body).unwrap();
    assert_eq!(report.metrics.nep, 0);
    assert_eq!(report.metrics.spent, 0.0);
    assert_eq!(report.metrics.ar, None);
    assert!(!report.closed);
}

#[tokio::test]
async fn closed_session_is_read_only() {
    let srv = Server::start(ServiceConfig::default()).await;
    let id = srv.session(json!(5.0), 1.0, 10.0).await;
    srv.select(&id, &req("p", vec![cand("x", 0.9, 0.5)])).await;
    assert_eq!(srv.close(&id).await, StatusCode::OK);
    let (status, _) = srv.select_raw(&id, &serde_json::to_value(req("q", vec![])).unwrap()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, body) = srv.report(&id).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["closed"], true);
    assert_eq!(body["metrics"]["nep"], 1);
}

#[tokio::test]
async fn idle_sessions_expire() {
    let srv = Server::start(ServiceConfig {
        idle_timeout: Duration::from_millis(50),
    })
    .await;
    let id = srv.session(json!(5.0), 1.0, 2.0).await;
    assert_eq!(srv.report(&id).await.0, StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(150)).await;
    assert_eq!(srv.report(&id).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_selects_respect_the_budget() {
    let srv = std::sync::Arc::new(Server::start(ServiceConfig::default()).await);
    let id = srv.session(json!(10.0), 0.5, 10.0).await;
    let mut tasks = Vec::new();
    for i in 0..200 {
        let srv = srv.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move {
            let price = 0.1 + (i % 7) as f64 * 0.1;
            srv.select(&id, &req(&format!("p{i}"), vec![cand(&format!("c{i}"), 0.7, price)])).await
        }));
    }
    let mut spent_seen = 0.0f64;
    for t in tasks {
        let r = t.await.unwrap();
        spent_seen = spent_seen.max(10.0 - amount(&r.remaining_after));
    }
    let (_, body) = srv.report(&id).await;
    let report: ReportResponse = serde_json::from_value(body).unwrap();
    assert_eq!(report.decisions.len(), 200);
    assert!(report.metrics.spent <= 10.0);
    // The log is a single total order: z never decreases along it.
    assert!(report.decisions.windows(2).all(|w| w[0].z_before <= w[1].z_before));
    assert!((spent_seen - report.metrics.spent).abs() < 1e-9);
}

#[tokio::test]
async fn toy_replay_matches_in_process_run() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy_stream.json");
    let inst = load_instance(path).unwrap();
    let order: Vec<usize> = (0..inst.prompts.len()).collect();
    let local = run_stream(&inst, PolicyKind::Ucosa, &order, 0).unwrap();

    let srv = Server::start(ServiceConfig::default()).await;
    let id = srv.session(json!(2.0), inst.ratio_lower, inst.ratio_upper).await;
    for p in &inst.prompts {
        srv.select(&id, &req(&p.prompt_id, p.candidates.iter().map(WireCandidate::from).collect()))
            .await;
    }
    let (_, body) = srv.report(&id).await;
    let report: ReportResponse = serde_json::from_value(body).unwrap();
    assert_eq!(report.metrics.spent, local.metrics.spent);
    assert_eq!(report.metrics.nep, local.metrics.nep);
}
