use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use tempfile::TempDir;

use opeinf_core::fixtures::random;
use opeinf_core::{save_dataset, EstimatorKind};

fn opeinf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opeinf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.path().join(name);
    let mut args = vec!["generate"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", path_str(&out)]);
    let r = opeinf(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    out
}

fn analyze_code(dataset: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["analyze", path_str(dataset), "--out", path_str(out)];
    args.extend_from_slice(extra);
    opeinf(&args).status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn exit_codes_follow_the_diagnosis() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let terminal = generate(&dir, "c.jsonl", &["chain3"]);
    let open = generate(&dir, "o.jsonl", &["chain3", "--open"]);
    let dense = generate(&dir, "d.jsonl", &["chain3", "--copies", "50"]);
    assert_eq!(analyze_code(&terminal, &out, &[]), 2);
    let diagnosis = read_json(&out.join("diagnosis.json"));
    assert_eq!(diagnosis["flagged"], serde_json::json!(["t2", "t3"]));
    assert_eq!(analyze_code(&open, &out, &[]), 3);
    assert_eq!(
        read_json(&out.join("diagnosis.json"))["dead_ends"],
        serde_json::json!(["t3"])
    );
    assert_eq!(analyze_code(&dense, &out, &[]), 0);
}

#[test]
fn errors_exit_with_one_and_name_the_transition() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "c.jsonl", &["chain3"]);
    let out = dir.path().join("out");
    let r = opeinf(&[
        "analyze",
        path_str(&data),
        "--estimator",
        "wis",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("`t1`"), "{err}");

    let r = opeinf(&["analyze", "/nonexistent.jsonl", "--out", path_str(&out)]);
    assert_eq!(r.status.code(), Some(1));
    let r = opeinf(&[
        "analyze",
        path_str(&data),
        "--gamma",
        "2",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let r = opeinf(&[
        "analyze",
        path_str(&data),
        "--policy",
        "bogus",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "t.jsonl", &["tumor", "--case", "influential"]);
    let tumor_flags = [
        "--policy",
        "tumor",
        "--metric-weights",
        "100,1,25,1e4",
        "--radius",
        "0.3",
    ];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let c1 = analyze_code(&data, &a, &tumor_flags);
    let c2 = analyze_code(&data, &b, &tumor_flags);
    assert_eq!(c1, 2);
    assert_eq!(c1, c2);
    for name in ["influence.jsonl", "diagnosis.json", "summary.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let (ma, mb) = (
        read_json(&a.join("manifest.json")),
        read_json(&b.join("manifest.json")),
    );
    let hashes = |m: &Value| -> Vec<Value> {
        m["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| o["sha256"].clone())
            .collect()
    };
    assert_eq!(hashes(&ma), hashes(&mb));
    assert_eq!(ma["dataset"]["fingerprint"], mb["dataset"]["fingerprint"]);
    assert!(ma["config"]["horizon"].as_u64().is_some());
    assert_eq!(ma["outcome"], "NeedsExpertReview");
}

fn validation(dataset: &Path, dir: &TempDir, extra: &[&str]) -> Value {
    let out = dir.path().join("val");
    let mut args = vec!["validate", path_str(dataset), "--out", path_str(&out)];
    args.extend_from_slice(extra);
    let r = opeinf(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stdout).contains("max abs deviation"));
    assert!(fs::read_to_string(out.join("validation.csv"))
        .unwrap()
        .starts_with("id,"));
    read_json(&out.join("validation.json"))
}

#[test]
fn validate_chain3_kernel() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "c.jsonl", &["chain3"]);
    let v = validation(&data, &dir, &[]);
    assert!(v["max_abs_dev"].as_f64().unwrap() <= 1e-9);
    assert_eq!(v["status_mismatches"], 0);
}

#[test]
fn validate_random_importance_and_linear_data() {
    let dir = TempDir::new().unwrap();
    for seed in 0..3 {
        for method in [EstimatorKind::Is, EstimatorKind::Wdr] {
            let p = random::importance_problem(seed, method);
            let path = dir.path().join(format!("is{seed}.jsonl"));
            save_dataset(&p.dataset, &path).unwrap();
            let gamma = p.setup.config.gamma.to_string();
            let v = validation(
                &path,
                &dir,
                &[
                    "--estimator",
                    method.name(),
                    "--policy",
                    "threshold:0:0.5:0:1",
                    "--gamma",
                    &gamma,
                ],
            );
            assert!(
                v["max_abs_dev"].as_f64().unwrap() <= 1e-10,
                "{seed} {method}"
            );
        }
        let p = random::linear_problem(seed);
        let path = dir.path().join(format!("lin{seed}.jsonl"));
        save_dataset(&p.dataset, &path).unwrap();
        let gamma = p.setup.config.gamma.to_string();
        let v = validation(
            &path,
            &dir,
            &[
                "--estimator",
                "linear-fqe",
                "--policy",
                "threshold:0:0:0:1",
                "--gamma",
                &gamma,
            ],
        );
        assert!(v["max_rel_dev"].as_f64().unwrap() <= 1e-8, "linear {seed}");
    }
}

#[test]
fn oracle_budget_gives_a_partial_table() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "c.jsonl", &["chain3", "--copies", "4"]);
    let v = validation(&data, &dir, &["--oracle-budget", "3"]);
    assert_eq!(v["truncated"], true);
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn generate_writes_sidecars() {
    let dir = TempDir::new().unwrap();
    let nav = generate(&dir, "nav.jsonl", &["navigation", "--seed", "3"]);
    let regions = fs::read_to_string(dir.path().join("nav.regions.jsonl")).unwrap();
    assert_eq!(
        regions.lines().count(),
        fs::read_to_string(&nav).unwrap().lines().count()
    );
    generate(&dir, "out.jsonl", &["tumor", "--case", "outliers"]);
    let injected = read_json(&dir.path().join("out.injected.json"));
    assert_eq!(injected.as_array().unwrap().len(), 3);
    // Same seed, same bytes.
    let again = generate(&dir, "nav2.jsonl", &["navigation", "--seed", "3"]);
    assert_eq!(fs::read(&nav).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn reproduce_writes_tables() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    for fig in ["cases", "fig4"] {
        let r = opeinf(&["reproduce", fig, "--out", path_str(out)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let r = opeinf(&["reproduce", "fig2", "--seeds", "5", "--out", path_str(out)]);
    assert!(r.status.success());
    let cases = read_json(&out.join("cases.json"));
    let outcomes: Vec<&str> = cases
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["outcome"].as_str().unwrap())
        .collect();
    assert_eq!(
        outcomes,
        vec![
            "Reliable",
            "Unevaluatable",
            "NeedsExpertReview",
            "NeedsExpertReview"
        ]
    );
    assert_eq!(
        read_json(&out.join("fig4_summary.json"))["top_sets_differ"],
        true
    );
    assert!(
        fs::read_to_string(out.join("fig2_influence.csv"))
            .unwrap()
            .lines()
            .count()
            > 100
    );
    for m in [
        "manifest-fig2.json",
        "manifest-cases.json",
        "manifest-fig4.json",
    ] {
        assert!(out.join(m).exists());
    }
}

struct Service {
    child: std::process::Child,
    base: String,
}

impl Drop for Service {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn spawn_service(args: &[&str]) -> Service {
    let mut child = Command::new(env!("CARGO_BIN_EXE_opeinf"))
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let base = loop {
        let line = lines.next().expect("service prints its address").unwrap();
        if let Some(a) = line.strip_prefix("review service listening on ") {
            break a.to_string();
        }
    };
    Service { child, base }
}

async fn get(base: &str, path: &str) -> reqwest::Response {
    reqwest::get(format!("{base}{path}")).await.unwrap()
}

#[tokio::test]
async fn serve_answers_on_an_ephemeral_port() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "c.jsonl", &["chain3"]);
    let svc = spawn_service(&["serve", path_str(&data), "--port", "0"]);
    let r = get(&svc.base, "/versions").await;
    assert_eq!(r.status(), 200);
    let v: Value = r.json().await.unwrap();
    assert_eq!(v["latest"], 0);
    let flags: Value = get(&svc.base, "/flags").await.json().await.unwrap();
    assert_eq!(flags["outcome"], "NeedsExpertReview");
}

#[tokio::test]
async fn analyze_then_serve() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "c.jsonl", &["chain3"]);
    let out = dir.path().join("out");
    let svc = spawn_service(&[
        "analyze",
        path_str(&data),
        "--out",
        path_str(&out),
        "--serve",
        "0",
    ]);
    assert!(out.join("manifest.json").exists());
    let status: Value = get(&svc.base, "/status").await.json().await.unwrap();
    assert_eq!(status["flagged"], serde_json::json!(["t2", "t3"]));
}

#[tokio::test]
async fn edited_versions_recompute_identically_from_the_export() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "c.jsonl", &["chain3"]);
    let svc = spawn_service(&["serve", path_str(&data), "--port", "0"]);
    let client = reqwest::Client::new();
    let flags: Value = get(&svc.base, "/flags").await.json().await.unwrap();
    let first = flags["entries"][0]["presented"]
        .as_str()
        .unwrap()
        .to_string();
    let r = client
        .post(format!("{}/verdict", svc.base))
        .json(&serde_json::json!({"unit_id": first, "decision": "artefact_remove"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 200, "{}", r.text().await.unwrap());
    let report: Value = get(&svc.base, "/report?version=1")
        .await
        .json()
        .await
        .unwrap();
    let export = get(&svc.base, "/dataset?version=1")
        .await
        .text()
        .await
        .unwrap();
    let edited = dir.path().join("edited.jsonl");
    fs::write(&edited, export).unwrap();
    let out = dir.path().join("out");
    analyze_code(&edited, &out, &["--allow-gaps"]);
    let lines: Vec<Value> = fs::read_to_string(out.join("influence.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines, *report["report"]["units"].as_array().unwrap());
    let diagnosis = read_json(&out.join("diagnosis.json"));
    assert_eq!(diagnosis, report["diagnosis"]);
}
