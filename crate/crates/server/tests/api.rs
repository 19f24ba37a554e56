use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use whatif_server::{router, AppState, ServerConfig};

const DEAL_SESSION: &str = r#"{"dataset_id": "DS", "kpi": "Deal Closed?", "seed": 7,
    "hyper": {"forest": {"n_trees": 20}}, "shapley_permutations": 4}"#;

fn app_with(config: ServerConfig) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(config).unwrap());
    (router(state.clone()), state)
}

fn app() -> Router {
    app_with(ServerConfig::default()).0
}

async fn call(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value =
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.json"))
}

fn mask(mut v: Value) -> Value {
    if let Some(obj) = v.as_object_mut() {
        if obj.contains_key("created_at") {
            obj.insert("created_at".into(), json!("<timestamp>"));
        }
    }
    v
}

/// Compares against the stored golden file; `UPDATE_GOLDEN=1` rewrites it.
fn golden(name: &str, status: StatusCode, body: Value) {
    let actual = json!({"status": status.as_u16(), "body": mask(body)});
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&actual).unwrap() + "\n").unwrap();
        return;
    }
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing {}; run with UPDATE_GOLDEN=1", path.display()));
    let expected: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(actual, expected, "golden mismatch for {name}");
}

async fn deal_session(app: &Router) -> (String, Value) {
    let (status, ds) = call(
        app,
        "POST",
        "/api/datasets/synthetic",
        r#"{"use_case": "deal_closing", "n_rows": 200, "seed": 1}"#,
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let body = DEAL_SESSION.replace("DS", ds["dataset_id"].as_str().unwrap());
    let (status, session) = call(app, "POST", "/api/sessions", &body).await;
    assert_eq!(status, StatusCode::CREATED, "{session}");
    (session["session_id"].as_str().unwrap().to_string(), session)
}

fn assert_finite(v: &Value) {
    match v {
        Value::Number(n) => assert!(n.as_f64().is_some_and(f64::is_finite)),
        Value::Array(a) => a.iter().for_each(assert_finite),
        Value::Object(o) => o.values().for_each(assert_finite),
        _ => {}
    }
}

#[tokio::test]
async fn upload_minimal_csv() {
    let app = app();
    let req = Request::builder()
        .method("POST")
        .uri("/api/datasets")
        .header("content-type", "text/csv")
        .body(Body::from("x,y\n1,2\n3,4\n"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["schema"].as_array().unwrap().len(), 2);
    assert_eq!(body["row_count"], 2);
    assert_eq!(body["dropped_rows"], 0);
    golden("datasets_upload", status, body.clone());

    let id = body["dataset_id"].as_str().unwrap();
    let (status, got) = call(&app, "GET", &format!("/api/datasets/{id}"), "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(got, body);
    let (status, rows) = call(&app, "GET", &format!("/api/datasets/{id}/rows?offset=1&limit=5"), "").await;
    assert_eq!(status, StatusCode::OK);
    golden("datasets_rows", status, rows);
}

#[tokio::test]
async fn header_only_upload_is_rejected() {
    let (status, body) = call(&app(), "POST", "/api/datasets", "x,y\n").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["message"].as_str().unwrap().contains("no data rows"));
    assert_eq!(body["code"], "no_data_rows");
    assert!(body["details"].is_object());
    golden("datasets_header_only", status, body);

    let (status, body) = call(&app(), "POST", "/api/datasets", "a,b\n1,2\n3\n").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "ragged_row");
}

#[tokio::test]
async fn synthetic_deal_closing_schema() {
    let (status, body) = call(
        &app(),
        "POST",
        "/api/datasets/synthetic",
        r#"{"use_case": "deal_closing", "n_rows": 60, "seed": 1}"#,
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let schema = body["schema"].as_array().unwrap();
    let kind = |name: &str| schema.iter().find(|c| c["name"] == name).unwrap()["kind"].clone();
    assert_eq!(kind("Deal Closed?"), "binary");
    assert_eq!(kind("Account"), "categorical_text");
    golden("datasets_synthetic", status, body);

    let (status, body) = call(
        &app(),
        "POST",
        "/api/datasets/synthetic",
        r#"{"use_case": "churn", "n_rows": 60}"#,
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "malformed_json");
}

#[tokio::test]
async fn session_lifecycle_and_errors() {
    let app = app();
    let (id, session) = deal_session(&app).await;
    assert_eq!(session["kpi_kind"], "discrete");
    assert_eq!(session["model_kind"], "forest");
    let entries = session["importance"]["entries"].as_array().unwrap();
    let values: Vec<f64> = entries.iter().map(|e| e["importance"].as_f64().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] >= w[1]));
    assert!(values.iter().all(|v| (-1.0..=1.0).contains(v)));
    assert!(entries.iter().all(|e| e["driver"] != "Account"));
    assert_finite(&session);
    golden("sessions_create", StatusCode::CREATED, session.clone());

    // same body twice: identical response
    let ds = session["dataset_id"].as_str().unwrap();
    let body = DEAL_SESSION.replace("DS", ds);
    let (status, again) = call(&app, "POST", "/api/sessions", &body).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, session);

    let (status, view) = call(&app, "GET", &format!("/api/sessions/{id}"), "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["baseline_kpi"], session["baseline_kpi"]);
    assert!(view["created_at"].is_string());
    golden("sessions_get", status, view.clone());

    let (status, err) = call(
        &app,
        "POST",
        "/api/sessions",
        &format!(r#"{{"dataset_id": "{ds}", "kpi": "Account"}}"#),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    golden("sessions_categorical_kpi", status, err);

    let (status, err) = call(
        &app,
        "POST",
        "/api/sessions",
        &format!(r#"{{"dataset_id": "{ds}", "kpi": "Deal Closed?", "drivers": ["Account", "Call"]}}"#),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(err["message"].as_str().unwrap().contains("categorical-text driver"));

    let (status, err) = call(
        &app,
        "POST",
        "/api/sessions",
        r#"{"dataset_id": "ds-missing", "kpi": "y"}"#,
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    golden("sessions_unknown_dataset", status, err);

    let (status, err) = call(&app, "GET", "/api/sessions/ss-missing", "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");
}

#[tokio::test]
async fn single_class_kpi_conflicts() {
    let app = app();
    // the only negative row has a missing driver and is dropped
    let mut csv = String::from("x,flag\n");
    for i in 0..20 {
        csv += &format!("{i},1\n");
    }
    csv += ",0\n";
    let (status, ds) = call(&app, "POST", "/api/datasets", &csv).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(ds["dropped_rows"], 1);
    let id = ds["dataset_id"].as_str().unwrap();
    let (status, err) = call(
        &app,
        "POST",
        "/api/sessions",
        &format!(r#"{{"dataset_id": "{id}", "kpi": "flag"}}"#),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT, "{err}");
    golden("sessions_single_class", status, err);
}

#[tokio::test]
async fn analyses_leave_the_session_unchanged() {
    let app = app();
    let (id, session) = deal_session(&app).await;
    let baseline = session["baseline_kpi"].clone();
    let (_, before) = call(&app, "GET", &format!("/api/sessions/{id}"), "").await;

    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/sensitivity"),
        r#"{"items": []}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["uplift"], 0.0);
    assert_eq!(r["rendered"]["uplift"], "0.00");
    golden("sensitivity_empty", status, r);

    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/sensitivity"),
        r#"{"items": [{"driver": "Open Marketing Email", "mode": "percentage", "amount": 40}]}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["baseline_kpi"], baseline);
    golden("sensitivity_pct40", status, r);

    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/sensitivity"),
        r#"{"items": [{"driver": "Nope", "mode": "absolute", "amount": 1}]}"#,
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    golden("sensitivity_unknown_driver", status, r);

    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/comparison"),
        r#"{"mode": "percentage", "lo": -50, "hi": 50, "steps": 11}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let curves = r["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 7);
    for c in curves {
        let pts = c["points"].as_array().unwrap();
        assert_eq!(pts.len(), 11);
        assert_eq!(pts[5]["amount"], 0.0);
        assert_eq!(pts[5]["kpi"], baseline);
    }
    golden("comparison", status, r);

    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/comparison"),
        r#"{"mode": "absolute", "lo": 1, "hi": 1, "steps": 3}"#,
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r["code"], "invalid_sweep");

    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/rows/3/sensitivity"),
        r#"{"items": [{"driver": "Renewal", "mode": "absolute", "amount": 2}]}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["row_index"], 3);
    golden("row_sensitivity", status, r);

    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/rows/200/sensitivity"),
        r#"{"items": []}"#,
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    golden("row_sensitivity_out_of_range", status, r);

    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/goal"),
        r#"{"objective": "maximize", "budget": 14, "n_init": 6, "seed": 2,
            "constraints": [{"driver": "Open Marketing Email", "mode": "percentage", "lo": 40, "hi": 80}]}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{r}");
    assert_eq!(r["trace"].as_array().unwrap().len(), 14);
    assert_eq!(r["baseline_kpi"], baseline);
    assert_eq!(r["confidence"], session["confidence"]);
    golden("goal_maximize", status, r);

    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/goal"),
        r#"{"objective": "target", "budget": 5, "n_init": 5}"#,
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    golden("goal_invalid", status, r);

    let (_, after) = call(&app, "GET", &format!("/api/sessions/{id}"), "").await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn zero_box_goal_returns_baseline() {
    let app = app();
    let (status, ds) = call(
        &app,
        "POST",
        "/api/datasets/synthetic",
        r#"{"use_case": "marketing_mix", "n_rows": 100, "seed": 4}"#,
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let id = ds["dataset_id"].as_str().unwrap();
    let (_, session) = call(
        &app,
        "POST",
        "/api/sessions",
        &format!(r#"{{"dataset_id": "{id}", "kpi": "sales", "shapley_permutations": 4}}"#),
    )
    .await;
    let sid = session["session_id"].as_str().unwrap();
    let constraints: Vec<Value> = ["TV", "Search", "Social", "Radio", "Print"]
        .iter()
        .map(|d| json!({"driver": d, "mode": "absolute", "lo": 0, "hi": 0}))
        .collect();
    let body = json!({"objective": "maximize", "constraints": constraints}).to_string();
    let (status, r) = call(&app, "POST", &format!("/api/sessions/{sid}/goal"), &body).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["best_kpi"], session["baseline_kpi"]);
    assert_eq!(r["uplift"], 0.0);
    golden("goal_zero_box", status, r);
}

#[tokio::test]
async fn goal_timeout_returns_partial_trace() {
    let (app, _) = app_with(ServerConfig {
        goal_timeout: Duration::ZERO,
        ..ServerConfig::default()
    });
    let (id, _) = deal_session(&app).await;
    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/goal"),
        r#"{"objective": "minimize"}"#,
    )
    .await;
    assert_eq!(status, StatusCode::REQUEST_TIMEOUT);
    assert_eq!(r["code"], "timeout");
    let partial = &r["details"]["partial"];
    assert_eq!(partial["completed"], false);
    assert!(!partial["trace"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn goal_budget_is_capped() {
    let (app, _) = app_with(ServerConfig {
        budget_cap: 12,
        ..ServerConfig::default()
    });
    let (id, _) = deal_session(&app).await;
    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/goal"),
        r#"{"objective": "maximize", "budget": 500}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["trace"].as_array().unwrap().len(), 12);
}

#[tokio::test]
async fn concurrent_goal_on_one_session_is_refused() {
    let (app, state) = app_with(ServerConfig::default());
    let (id, _) = deal_session(&app).await;
    let slot = state.store.claim_goal(&id).unwrap();
    let (status, r) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/goal"),
        r#"{"objective": "maximize"}"#,
    )
    .await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    golden("goal_busy", status, r);
    drop(slot);
    let (status, _) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/goal"),
        r#"{"objective": "maximize", "budget": 11}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn snapshots_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServerConfig {
        snapshot_dir: Some(dir.path().to_path_buf()),
        ..ServerConfig::default()
    };
    let (app, _) = app_with(config.clone());
    let (id, _) = deal_session(&app).await;
    let (_, before) = call(&app, "GET", &format!("/api/sessions/{id}"), "").await;
    let sens = r#"{"items": [{"driver": "Call", "mode": "absolute", "amount": 1}]}"#;
    let (_, r1) = call(&app, "POST", &format!("/api/sessions/{id}/sensitivity"), sens).await;
    drop(app);

    let (app, _) = app_with(config);
    let (status, after) = call(&app, "GET", &format!("/api/sessions/{id}"), "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
    let (_, r2) = call(&app, "POST", &format!("/api/sessions/{id}/sensitivity"), sens).await;
    assert_eq!(r1, r2);
}

#[tokio::test]
async fn malformed_bodies_and_health() {
    let app = app();
    let (status, r) = call(&app, "POST", "/api/sessions", "{not json").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r["code"], "malformed_json");
    let (status, r) = call(&app, "GET", "/api/health", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r, json!({"status": "ok"}));
}
