use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use whatif_server::{router, AppState, ServerConfig};

fn whatif(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_whatif")).args(args).output().unwrap()
}

fn whatif_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_whatif"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn ok_json(out: Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workdir {
    _dir: tempfile::TempDir,
    data: PathBuf,
    model: PathBuf,
}

/// Synthesizes a dataset and trains a model on it.
fn prepared(use_case: &str, rows: &str, seed: &str, kpi: &str, train_extra: &[&str]) -> Workdir {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let model = dir.path().join("model.json");
    ok_json(whatif(&[
        "synth",
        "--use-case",
        use_case,
        "--rows",
        rows,
        "--seed",
        seed,
        "--out",
        s(&data),
    ]));
    let mut args = vec!["train", "--data", s(&data), "--kpi", kpi, "--out", s(&model)];
    args.extend_from_slice(train_extra);
    let out = whatif(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Workdir { _dir: dir, data, model }
}

fn deal() -> Workdir {
    prepared(
        "deal_closing",
        "200",
        "1",
        "Deal Closed?",
        &["--seed", "7", "--trees", "20"],
    )
}

#[test]
fn synth_writes_csv_and_truth_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("mm.csv");
    let summary = ok_json(whatif(&[
        "synth",
        "--use-case",
        "marketing_mix",
        "--rows",
        "50",
        "--seed",
        "2",
        "--out",
        s(&data),
    ]));
    assert_eq!(summary["row_count"], 50);
    assert_eq!(summary["ground_truth"]["kpi"], "sales");
    let truth: Value = serde_json::from_slice(&std::fs::read(dir.path().join("mm.truth.json")).unwrap()).unwrap();
    assert_eq!(truth, summary["ground_truth"]);

    let stdout = whatif(&["synth", "--use-case", "marketing_mix", "--rows", "50", "--seed", "2"]);
    assert!(stdout.status.success());
    assert_eq!(stdout.stdout, std::fs::read(&data).unwrap());
}

#[test]
fn schema_reads_stdin() {
    let w = deal();
    let csv = std::fs::read(&w.data).unwrap();
    let from_stdin = ok_json(whatif_stdin(&["schema", "--data", "-"], &csv));
    let from_file = ok_json(whatif(&["schema", "--data", s(&w.data)]));
    assert_eq!(from_stdin, from_file);
    let kinds: Vec<&str> = from_file["schema"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["kind"].as_str().unwrap())
        .collect();
    assert!(kinds.contains(&"binary"));
}

#[test]
fn pipeline_recovers_marketing_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("mm.csv");
    let model = dir.path().join("mm.model.json");
    let summary = ok_json(whatif(&[
        "synth",
        "--use-case",
        "marketing_mix",
        "--rows",
        "2000",
        "--seed",
        "3",
        "--out",
        s(&data),
    ]));
    let out = whatif(&[
        "train",
        "--data",
        s(&data),
        "--kpi",
        "sales",
        "--seed",
        "3",
        "--out",
        s(&model),
    ]);
    assert!(out.status.success());
    let report = ok_json(whatif(&["importance", "--model", s(&model), "--data", s(&data)]));

    let mut truth: Vec<(String, f64)> = summary["ground_truth"]["drivers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| {
            (
                d["driver"].as_str().unwrap().to_string(),
                d["standardized"].as_f64().unwrap().abs(),
            )
        })
        .collect();
    truth.sort_by(|a, b| b.1.total_cmp(&a.1));
    let expected: Vec<String> = truth.into_iter().map(|t| t.0).collect();
    let got: Vec<String> = report["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["driver"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(got, expected);
    assert_eq!(report["agreement"]["flagged"], false);
}

#[test]
fn zero_box_goal_has_zero_uplift() {
    let w = deal();
    let model: Value = serde_json::from_slice(&std::fs::read(&w.model).unwrap()).unwrap();
    let drivers: Vec<String> = model["frame"]["drivers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d.as_str().unwrap().to_string())
        .collect();
    let mut args: Vec<String> = [
        "goal",
        "--model",
        s(&w.model),
        "--data",
        s(&w.data),
        "--objective",
        "max",
    ]
    .iter()
    .map(|a| a.to_string())
    .collect();
    for d in &drivers {
        args.push("--constraint".into());
        args.push(format!("{d}:abs:0:0"));
    }
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let r = ok_json(whatif(&argv));
    assert_eq!(r["uplift"], 0.0);
    assert_eq!(r["best_kpi"], r["baseline_kpi"]);
    assert_eq!(r["rendered"]["uplift"], "0.00");
}

#[test]
fn sensitivity_table_and_trace_csv() {
    let w = deal();
    let out = whatif(&[
        "sensitivity",
        "--model",
        s(&w.model),
        "--data",
        s(&w.data),
        "--perturb",
        "Open Marketing Email:pct:+40",
        "--table",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("baseline") && text.contains("uplift"), "{text}");

    let trace = w.model.with_file_name("trace.csv");
    let r = ok_json(whatif(&[
        "goal",
        "--model",
        s(&w.model),
        "--data",
        s(&w.data),
        "--objective",
        "target",
        "--target",
        "60",
        "--budget",
        "14",
        "--n-init",
        "4",
        "--trace-csv",
        s(&trace),
    ]));
    assert_eq!(r["trace"].as_array().unwrap().len(), 14);
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("evaluation,Chat,"));
    assert_eq!(csv.lines().count(), 15);
}

#[test]
fn exit_codes() {
    let w = deal();
    let (m, d) = (s(&w.model), s(&w.data));
    let code = |args: &[&str]| whatif(args).status.code();

    assert_eq!(code(&["importance", "--model", m, "--data", d, "--bogus"]), Some(2));
    assert_eq!(code(&["nonsense"]), Some(2));
    assert_eq!(code(&["schema", "--data", "/nonexistent/file.csv"]), Some(2));
    assert_eq!(
        code(&["sensitivity", "--model", m, "--data", d, "--perturb", "Call:rel:4"]),
        Some(2)
    );
    assert_eq!(
        code(&["sensitivity", "--model", m, "--data", d, "--perturb", "Nope:pct:4"]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "sensitivity",
            "--model",
            m,
            "--data",
            d,
            "--perturb",
            "Call:abs:1",
            "--row",
            "999"
        ]),
        Some(2)
    );
    assert_eq!(
        code(&["goal", "--model", m, "--data", d, "--objective", "target"]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "goal",
            "--model",
            m,
            "--data",
            d,
            "--objective",
            "max",
            "--constraint",
            "Call:pct:50:-50"
        ]),
        Some(2)
    );
    assert_eq!(code(&["train", "--data", d, "--kpi", "Account"]), Some(2));
    assert_eq!(code(&["sensitivity", "--model", d, "--data", d]), Some(2));
    assert_eq!(
        code(&["sensitivity", "--model", m, "--data", d, "--perturb", "Call:abs:1"]),
        Some(0)
    );

    let out = whatif(&["sensitivity", "--model", m, "--data", d, "--perturb", "Nope:pct:4"]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("unknown_column"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn model_must_match_dataset() {
    let w = deal();
    let other = prepared("deal_closing", "120", "2", "Deal Closed?", &["--trees", "5"]);
    let out = whatif(&["importance", "--model", s(&w.model), "--data", s(&other.data)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame_mismatch"));
}

async fn call(app: &Router, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test(flavor = "multi_thread")]
async fn cli_and_http_agree() {
    let w = deal();
    let (m, d) = (s(&w.model), s(&w.data));
    let app = router(std::sync::Arc::new(AppState::new(ServerConfig::default()).unwrap()));

    let (status, ds) = call(&app, "POST", "/api/datasets", std::fs::read(&w.data).unwrap()).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(ds, ok_json(whatif(&["schema", "--data", d])));

    let request = json!({
        "dataset_id": ds["dataset_id"], "kpi": "Deal Closed?", "seed": 7,
        "hyper": {"forest": {"n_trees": 20}}, "shapley_permutations": 4
    });
    let (status, session) = call(&app, "POST", "/api/sessions", request.to_string().into_bytes()).await;
    assert_eq!(status, StatusCode::CREATED, "{session}");
    let base = format!("/api/sessions/{}", session["session_id"].as_str().unwrap());

    let cli = ok_json(whatif(&[
        "importance",
        "--model",
        m,
        "--data",
        d,
        "--shapley-perms",
        "4",
    ]));
    assert_eq!(cli, session["importance"]);

    let spec = json!({"items": [
        {"driver": "Open Marketing Email", "mode": "percentage", "amount": 40},
        {"driver": "Call", "mode": "absolute", "amount": 1}
    ]});
    let (status, http) = call(
        &app,
        "POST",
        &format!("{base}/sensitivity"),
        spec.to_string().into_bytes(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let cli = ok_json(whatif(&[
        "sensitivity",
        "--model",
        m,
        "--data",
        d,
        "--perturb",
        "Open Marketing Email:pct:40",
        "--perturb",
        "Call:abs:1",
    ]));
    assert_eq!(cli, http);

    let (status, http) = call(
        &app,
        "POST",
        &format!("{base}/rows/5/sensitivity"),
        spec.to_string().into_bytes(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let cli = ok_json(whatif(&[
        "sensitivity",
        "--model",
        m,
        "--data",
        d,
        "--row",
        "5",
        "--perturb",
        "Open Marketing Email:pct:40",
        "--perturb",
        "Call:abs:1",
    ]));
    assert_eq!(cli, http);

    let sweep = json!({"drivers": ["Call", "Renewal"], "mode": "percentage", "lo": -50, "hi": 50, "steps": 5});
    let (status, http) = call(
        &app,
        "POST",
        &format!("{base}/comparison"),
        sweep.to_string().into_bytes(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let cli = ok_json(whatif(&[
        "sweep",
        "--model",
        m,
        "--data",
        d,
        "--drivers",
        "Call,Renewal",
        "--mode",
        "pct",
        "--lo",
        "-50",
        "--hi",
        "50",
        "--steps",
        "5",
    ]));
    assert_eq!(cli, http);

    let goal = json!({
        "objective": "target", "target_value": 55, "budget": 16, "n_init": 5, "seed": 3,
        "constraints": [{"driver": "Call", "mode": "absolute", "lo": 0, "hi": 1}]
    });
    let (status, http) = call(&app, "POST", &format!("{base}/goal"), goal.to_string().into_bytes()).await;
    assert_eq!(status, StatusCode::OK);
    let cli = ok_json(whatif(&[
        "goal",
        "--model",
        m,
        "--data",
        d,
        "--objective",
        "target",
        "--target",
        "55",
        "--budget",
        "16",
        "--n-init",
        "5",
        "--seed",
        "3",
        "--constraint",
        "Call:abs:0:1",
    ]));
    assert_eq!(cli, http);
}
