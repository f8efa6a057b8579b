use std::sync::Arc;

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use opeinf_core::data::parse_dataset;
use opeinf_core::domains::tumor::{self, TumorCase};
use opeinf_core::fixtures::{self, random};
use opeinf_core::policy::ConstantPolicy;
use opeinf_core::{
    AnalysisConfig, Dataset, EstimatorKind, EvaluationSetup, StateActionMetric, StepValidation,
};
use opeinf_review::{replay, AppState, ReviewSession};

struct Service {
    base: String,
    client: Client,
    state: AppState,
}

impl Service {
    async fn start(setup: EvaluationSetup, dataset: Dataset) -> Self {
        let state = AppState::new(ReviewSession::new(setup, dataset).unwrap());
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        tokio::spawn(opeinf_review::serve_on(listener, state.clone()));
        Self {
            base,
            client: Client::new(),
            state,
        }
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self
            .client
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn ok(&self, path: &str) -> Value {
        let (s, v) = self.get(path).await;
        assert_eq!(s, StatusCode::OK, "{path}: {v}");
        v
    }

    async fn verdict(&self, body: Value) -> (StatusCode, Value) {
        let r = self
            .client
            .post(format!("{}/verdict", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        (r.status(), r.json().await.unwrap())
    }
}

fn chain_setup() -> EvaluationSetup {
    EvaluationSetup::new(
        AnalysisConfig::default(),
        Arc::new(ConstantPolicy(0)),
        StateActionMetric::euclidean(1),
    )
}

fn ids(v: &Value) -> Vec<String> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap().to_string())
        .collect()
}

#[tokio::test]
async fn fresh_session_lists_one_version_and_sorted_flags() {
    let svc = Service::start(chain_setup(), fixtures::chain3()).await;
    let versions = svc.ok("/versions").await;
    assert_eq!(versions["latest"], 0);
    assert_eq!(versions["versions"].as_array().unwrap().len(), 1);

    let flags = svc.ok("/flags").await;
    assert_eq!(flags["outcome"], "NeedsExpertReview");
    let entries = flags["entries"].as_array().unwrap();
    // t2 and t3 form one run; the last step is presented.
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0]["presented"], "t3");
    assert_eq!(ids(&entries[0]["covered"]), vec!["t2"]);

    let status = svc.ok("/status?version=0").await;
    assert_eq!(status["history"].as_array().unwrap().len(), 1);
    assert_eq!(status["v_hat"], 1.0);
    assert!(status["annotation"].is_null());
}

#[tokio::test]
async fn context_window_is_truncated_at_trajectory_start() {
    let svc = Service::start(chain_setup(), fixtures::duplicated_chain3(2)).await;
    let view = svc.ok("/transition/c0t1").await;
    assert_eq!(view["transition"]["id"], "c0t1");
    let ctx: Vec<&str> = view["context"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["id"].as_str().unwrap())
        .collect();
    assert_eq!(ctx, vec!["c0t1", "c0t2", "c0t3"]);
    assert!(view["unit"]["influence"].is_null() || view["unit"]["influence"].is_number());
}

#[tokio::test]
async fn entries_are_sorted_by_influence() {
    let case = tumor::tumor_case(TumorCase::Influential).unwrap();
    let svc = Service::start(
        tumor::evaluation_setup(EstimatorKind::KernelFqe),
        case.dataset,
    )
    .await;
    let flags = svc.ok("/flags").await;
    let scores: Vec<f64> = flags["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["normalized_influence"].as_f64().unwrap())
        .collect();
    assert!(!scores.is_empty());
    assert!(scores.windows(2).all(|w| w[0] >= w[1]), "{scores:?}");
    for e in flags["entries"].as_array().unwrap() {
        let ctx = e["context"].as_array().unwrap();
        assert!(ctx.iter().any(|t| t["id"] == e["presented"]));
        assert!(ctx.len() <= 5);
    }
}

#[tokio::test]
async fn reliable_data_has_no_flags() {
    let svc = Service::start(chain_setup(), fixtures::duplicated_chain3(50)).await;
    let flags = svc.ok("/flags").await;
    assert_eq!(flags["outcome"], "Reliable");
    assert!(flags["entries"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn removing_t2_creates_a_version_with_zero_value() {
    let svc = Service::start(chain_setup(), fixtures::chain3()).await;
    let (s, r) = svc
        .verdict(json!({"unit_id": "t2", "decision": "artefact_remove", "note": "sensor glitch"}))
        .await;
    assert_eq!(s, StatusCode::OK, "{r}");
    assert_eq!(r["new_version"], 1);
    assert_eq!(r["v_hat_before"], 1.0);
    assert_eq!(r["v_hat_after"], 0.0);

    let status = svc.ok("/status").await;
    assert_eq!(status["version"], 1);
    assert_eq!(status["v_hat"], 0.0);
    let history = status["history"].as_array().unwrap();
    assert_eq!(history.len(), 2);
    assert_eq!(history[0]["v_hat"], 1.0);
    assert_eq!(history[1]["v_hat"], 0.0);
    assert_eq!(status["audit"][0]["verdict"]["note"], "sensor glitch");
    assert_eq!(status["audit"][0]["new_version"], 1);

    let flags = svc.ok("/flags?version=1").await;
    let presented: Vec<&str> = flags["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["presented"].as_str().unwrap())
        .collect();
    assert!(!presented.contains(&"t3"));
    // The original version is untouched.
    let (s, _) = svc.get("/transition/t2?version=0").await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = svc.get("/transition/t2?version=1").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(svc.ok("/status?version=0").await["v_hat"], 1.0);
}

#[tokio::test]
async fn representative_on_every_flag_marks_the_session_validated() {
    let svc = Service::start(chain_setup(), fixtures::chain3()).await;
    for unit in ["t2", "t3"] {
        let (s, r) = svc
            .verdict(json!({"unit_id": unit, "decision": "representative"}))
            .await;
        assert_eq!(s, StatusCode::OK, "{r}");
        assert!(r["new_version"].is_null());
        let status = svc.ok("/status").await;
        let expect = if unit == "t3" {
            json!("expert-validated")
        } else {
            Value::Null
        };
        assert_eq!(status["annotation"], expect);
    }
    let status = svc.ok("/status").await;
    assert_eq!(status["outcome"], "NeedsExpertReview");
    assert_eq!(ids(&status["validated"]), vec!["t2", "t3"]);
    assert_eq!(status["history"].as_array().unwrap().len(), 1);
    assert_eq!(svc.ok("/versions").await["latest"], 0);
    let flags = svc.ok("/flags").await;
    assert_eq!(flags["entries"][0]["verdict"], "representative");
}

#[tokio::test]
async fn bad_requests_create_no_version() {
    let svc = Service::start(chain_setup(), fixtures::chain3()).await;
    let cases = [
        (
            json!({"unit_id": "t3", "decision": "artefact_correct",
                   "correction": [{"field": "rewardz", "value": 0.0}]}),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            json!({"unit_id": "t3", "decision": "artefact_correct",
                   "correction": [{"field": "state.4", "value": 0.0}]}),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            json!({"unit_id": "t3", "decision": "artefact_correct"}),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            json!({"unit_id": "t3", "decision": "artefact_remove",
                   "correction": [{"field": "reward", "value": 0.0}]}),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            json!({"unit_id": "t1", "decision": "artefact_remove"}),
            StatusCode::CONFLICT,
        ),
        (
            json!({"unit_id": "nope", "decision": "representative"}),
            StatusCode::CONFLICT,
        ),
        (
            json!({"version": 7, "unit_id": "t3", "decision": "representative"}),
            StatusCode::NOT_FOUND,
        ),
    ];
    for (body, expect) in cases {
        let (s, r) = svc.verdict(body.clone()).await;
        assert_eq!(s, expect, "{body}: {r}");
        assert!(r["error"].is_string());
    }
    let (s, _) = svc.get("/flags?version=3").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = svc.get("/transition/zzz").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(svc.ok("/versions").await["latest"], 0);
    assert!(svc.ok("/status").await["audit"]
        .as_array()
        .unwrap()
        .is_empty());
}

#[tokio::test]
async fn correcting_a_reward_spike_clears_its_flag() {
    let clean = tumor::tumor_case(TumorCase::Reliable).unwrap().dataset;
    let id = tumor::spike_target(&clean).unwrap();
    let original = clean.by_id(&id).unwrap().reward;
    let spiked = tumor::inject_reward_spike(&clean, &id, tumor::SPIKE_REWARD).unwrap();
    let svc = Service::start(tumor::evaluation_setup(EstimatorKind::KernelFqe), spiked).await;

    let before = svc.ok("/status").await;
    assert!(ids(&before["flagged"]).contains(&id), "{before}");
    let (s, r) = svc
        .verdict(json!({"unit_id": id, "decision": "artefact_correct",
                        "correction": [{"field": "reward", "value": original}]}))
        .await;
    assert_eq!(s, StatusCode::OK, "{r}");
    let after = svc.ok("/status").await;
    assert_eq!(after["version"], 1);
    assert!(!ids(&after["flagged"]).contains(&id));
    let (b, a) = (
        before["v_hat"].as_f64().unwrap(),
        after["v_hat"].as_f64().unwrap(),
    );
    assert!(a > b, "{b} -> {a}");
    assert_eq!(
        svc.ok(&format!("/transition/{id}")).await["transition"]["reward"],
        original
    );
}

#[tokio::test]
async fn stored_analysis_matches_a_fresh_run_on_the_export() {
    let svc = Service::start(chain_setup(), fixtures::duplicated_chain3(3)).await;
    let mut ts = fixtures::duplicated_chain3(3).into_transitions();
    ts[2].reward = 5.0;
    let svc2 = Service::start(chain_setup(), Dataset::new(ts).unwrap()).await;
    for svc in [&svc, &svc2] {
        let flagged = ids(&svc.ok("/status").await["flagged"]);
        if let Some(unit) = flagged.first() {
            let (s, r) = svc
                .verdict(json!({"unit_id": unit, "decision": "artefact_remove"}))
                .await;
            assert_eq!(s, StatusCode::OK, "{r}");
        }
        let latest = svc.ok("/versions").await["latest"].as_u64().unwrap() as usize;
        for v in 0..=latest {
            let text = svc
                .client
                .get(format!("{}/dataset?version={v}", svc.base))
                .send()
                .await
                .unwrap()
                .text()
                .await
                .unwrap();
            let exported = parse_dataset(&text, StepValidation::AllowGaps).unwrap();
            let fresh = chain_setup().analyze(&exported).unwrap();
            let session = svc.state.session();
            let s = session.read().unwrap();
            let stored = &s.versions()[v];
            assert_eq!(exported.fingerprint(), stored.fingerprint);
            assert_eq!(
                serde_json::to_string(&fresh).unwrap(),
                serde_json::to_string(&stored.analysis).unwrap()
            );
        }
    }
}

#[tokio::test]
async fn audit_replay_rebuilds_every_version() {
    let case = tumor::tumor_case(TumorCase::Outliers).unwrap();
    let original = case.dataset.clone();
    let svc = Service::start(
        tumor::evaluation_setup(EstimatorKind::KernelFqe),
        case.dataset,
    )
    .await;
    let flagged = ids(&svc.ok("/status").await["flagged"]);
    assert!(flagged.len() >= 3);
    svc.verdict(json!({"unit_id": flagged[0], "decision": "artefact_remove"}))
        .await;
    svc.verdict(json!({"version": 0, "unit_id": flagged[1], "decision": "representative"}))
        .await;
    svc.verdict(json!({"version": 0, "unit_id": flagged[2], "decision": "artefact_correct",
                       "correction": [{"field": "reward", "value": 0.5}, {"field": "next_state.0", "value": 0.4}]}))
        .await;
    let session = svc.state.session();
    let s = session.read().unwrap();
    assert_eq!(s.versions().len(), 3);
    assert_eq!(s.audit().len(), 3);
    let rebuilt = replay(&original, opeinf_core::UnitKind::Transition, s.audit()).unwrap();
    assert_eq!(rebuilt.len(), 3);
    for (ds, v) in rebuilt.iter().zip(s.versions()) {
        assert_eq!(ds.fingerprint(), v.fingerprint);
    }
    assert_eq!(s.versions()[2].parent, Some(0));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_verdicts_are_serialized() {
    let case = tumor::tumor_case(TumorCase::Outliers).unwrap();
    let svc = Arc::new(
        Service::start(
            tumor::evaluation_setup(EstimatorKind::KernelFqe),
            case.dataset,
        )
        .await,
    );
    let flagged = ids(&svc.ok("/status").await["flagged"]);
    let mut tasks = Vec::new();
    for unit in flagged.into_iter().take(3) {
        let svc = svc.clone();
        tasks.push(tokio::spawn(async move {
            svc.verdict(json!({"version": 0, "unit_id": unit, "decision": "artefact_remove"}))
                .await
        }));
    }
    let reader = {
        let svc = svc.clone();
        tokio::spawn(async move {
            for _ in 0..20 {
                svc.ok("/versions").await;
            }
        })
    };
    let mut created = Vec::new();
    for t in tasks {
        let (s, r) = t.await.unwrap();
        assert_eq!(s, StatusCode::OK, "{r}");
        created.push(r["new_version"].as_u64().unwrap());
    }
    reader.await.unwrap();
    created.sort();
    assert_eq!(created, vec![1, 2, 3]);
    let status = svc.ok("/status?version=0").await;
    let seqs: Vec<u64> = status["audit"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["seq"].as_u64().unwrap())
        .collect();
    assert_eq!(seqs, vec![0, 1, 2]);
}

#[tokio::test]
async fn trajectory_units_are_removed_whole() {
    let mut p = random::importance_problem(3, EstimatorKind::Wis);
    p.setup.config.influence_threshold = 0.01;
    let svc = Service::start(p.setup.clone(), p.dataset.clone()).await;
    let flags = svc.ok("/flags").await;
    assert_eq!(flags["unit_kind"], "trajectory");
    let entry = &flags["entries"][0];
    let unit = entry["presented"].as_str().unwrap().to_string();
    let steps = p.dataset.trajectory(&unit).unwrap().len();
    assert_eq!(entry["context"].as_array().unwrap().len(), steps);
    let (s, r) = svc
        .verdict(json!({"unit_id": unit, "decision": "artefact_remove"}))
        .await;
    assert_eq!(s, StatusCode::OK, "{r}");
    let v = svc.ok("/versions").await;
    let before = v["versions"][0]["transitions"].as_u64().unwrap() as usize;
    let after = v["versions"][1]["transitions"].as_u64().unwrap() as usize;
    assert_eq!(before - after, steps);
}
