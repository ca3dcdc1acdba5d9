use std::collections::BTreeMap;
use std::sync::{Mutex, Once};
use std::time::Duration;

use styloshift::corpus::{ContinuationStore, DocumentPair, EndpointKind, ModelConfig, SystemPromptId};
use styloshift::generate::mock::{MockReply, MockServer};
use styloshift::generate::*;
use styloshift::Error;

static LOGS: Mutex<Vec<String>> = Mutex::new(Vec::new());

struct Capture;

impl log::Log for Capture {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }
    fn log(&self, record: &log::Record) {
        LOGS.lock().unwrap().push(format!("{} {}", record.level(), record.args()));
    }
    fn flush(&self) {}
}

fn capture_logs() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        log::set_logger(&Capture).unwrap();
        log::set_max_level(log::LevelFilter::Trace);
    });
}

fn prose(n: usize) -> String {
    let base = "The river rose slowly through the night while the town slept and nobody noticed \
        how close the water came to the doors of the houses along the lower street near the mill";
    let words: Vec<&str> = base.split(' ').collect();
    (0..n).map(|i| words[i % words.len()]).collect::<Vec<_>>().join(" ")
}

fn pair(id: &str) -> DocumentPair {
    DocumentPair {
        doc_id: id.into(),
        genre: "fiction".into(),
        language: "en".into(),
        part1_text: format!("Prompt for {id}.\nIt keeps  its spacing."),
        part2_text: "reference".into(),
        word_count_part1: 8,
        valid: true,
    }
}

fn config(id: &str, kind: EndpointKind) -> ModelConfig {
    ModelConfig {
        config_id: id.into(),
        endpoint_kind: kind,
        model_name: "test-model".into(),
        temperature: 0.5,
        system_prompt_id: if kind == EndpointKind::Chat { SystemPromptId::Minimal } else { SystemPromptId::None },
        appended_instruction: None,
        endpoint: "default".into(),
    }
}

fn client(server: &MockServer, style: ApiStyle) -> EndpointClient {
    let mut p = EndpointProfile::new("default", server.base_url(), style);
    p.backoff_ms = 5;
    p.timeout_secs = 2.0;
    EndpointClient::new(p)
}

fn clients(c: EndpointClient) -> BTreeMap<String, EndpointClient> {
    BTreeMap::from([("default".to_string(), c)])
}

#[test]
fn completion_round_trip_keeps_prompt_hash() {
    let text = prose(300);
    let server = MockServer::always(MockReply::text(&text)).unwrap();
    let c = client(&server, ApiStyle::CompletionJson);
    let (p, cfg) = (pair("d1"), config("base", EndpointKind::Completion));
    let cont = run_job(&GenerationJob::new(&p, &cfg), &c, &PromptTexts::default()).unwrap();
    assert_eq!(cont.text, text);
    assert_eq!(cont.provenance.prompt_hash, sha256_hex(p.part1_text.as_bytes()));
    assert_eq!(cont.provenance.retries, 0);

    let req = &server.requests()[0];
    assert_eq!(req.path, "/completions");
    let body = req.json();
    assert_eq!(body["prompt"].as_str(), Some(p.part1_text.as_str()));
    assert_eq!(body["temperature"].as_f64(), Some(0.5));
    assert_eq!(body["model"].as_str(), Some("test-model"));
}

#[test]
fn chat_request_shape() {
    let server = MockServer::always(MockReply::text(&prose(80))).unwrap();
    let c = client(&server, ApiStyle::ChatJson);
    let (p, cfg) = (pair("d1"), config("chat", EndpointKind::Chat));
    run_job(&GenerationJob::new(&p, &cfg), &c, &PromptTexts::default()).unwrap();
    let req = &server.requests()[0];
    assert_eq!(req.path, "/chat/completions");
    let body = req.json();
    assert_eq!(body["messages"][0]["content"].as_str(), Some(MINIMAL_EN));
    assert_eq!(body["messages"][1]["content"].as_str(), Some(p.part1_text.as_str()));
}

#[test]
fn two_429s_then_success() {
    let server = MockServer::scripted(
        vec![MockReply::status(429), MockReply::status(429)],
        MockReply::text(&prose(120)),
    )
    .unwrap();
    let c = client(&server, ApiStyle::ChatJson);
    let (p, cfg) = (pair("d1"), config("chat", EndpointKind::Chat));
    let cont = run_job(&GenerationJob::new(&p, &cfg), &c, &PromptTexts::default()).unwrap();
    assert_eq!(cont.provenance.retries, 2);
    assert_eq!(server.hits(), 3);
}

#[test]
fn rate_limit_exhausts_budget() {
    let server = MockServer::always(MockReply::status(429)).unwrap();
    let c = client(&server, ApiStyle::ChatJson);
    let (p, cfg) = (pair("d1"), config("chat", EndpointKind::Chat));
    let mut job = GenerationJob::new(&p, &cfg);
    job.retry_budget = 2;
    let err = run_job(&job, &c, &PromptTexts::default()).unwrap_err();
    assert!(matches!(err, Error::RateLimited { attempts: 3 }), "{err}");
}

#[test]
fn timeout_beyond_budget_persists_nothing() {
    let server = MockServer::always(MockReply::text(&prose(100)).delayed(Duration::from_millis(600))).unwrap();
    let mut profile = EndpointProfile::new("default", server.base_url(), ApiStyle::ChatJson);
    profile.timeout_secs = 0.15;
    profile.backoff_ms = 1;
    let dir = tempfile::tempdir().unwrap();
    let store = ContinuationStore::new(dir.path());
    let (p, cfg) = (pair("d1"), config("chat", EndpointKind::Chat));
    let mut job = GenerationJob::new(&p, &cfg);
    job.retry_budget = 1;

    let c = EndpointClient::new(profile.clone());
    assert!(matches!(run_job(&job, &c, &PromptTexts::default()), Err(Error::Transport { attempts: 2, .. })));

    let ledger = run_batch(&[job], &clients(EndpointClient::new(profile)), &PromptTexts::default(), &store, BatchOptions::default())
        .unwrap();
    assert_eq!(ledger.count(JobState::Failed), 1);
    assert!(!store.contains("d1", "chat"));
    let leftovers: Vec<_> = walk(dir.path());
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap().flatten() {
        if e.path().is_dir() {
            out.extend(walk(&e.path()));
        } else {
            out.push(e.path());
        }
    }
    out
}

#[test]
fn auth_failure_is_not_retried() {
    let server = MockServer::always(MockReply::status(401)).unwrap();
    let c = client(&server, ApiStyle::ChatJson);
    let (p, cfg) = (pair("d1"), config("chat", EndpointKind::Chat));
    assert!(matches!(
        run_job(&GenerationJob::new(&p, &cfg), &c, &PromptTexts::default()),
        Err(Error::Auth(401))
    ));
    assert_eq!(server.hits(), 1);
}

#[test]
fn rerun_without_force_makes_no_calls() {
    let server = MockServer::always(MockReply::text(&prose(200))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = ContinuationStore::new(dir.path());
    let pairs: Vec<DocumentPair> = (0..4).map(|i| pair(&format!("d{i}"))).collect();
    let cfgs = [config("chat", EndpointKind::Chat), config("chat-hot", EndpointKind::Chat)];
    let jobs: Vec<GenerationJob> = pairs
        .iter()
        .flat_map(|p| cfgs.iter().map(move |c| GenerationJob::new(p, c)))
        .collect();
    let cl = clients(client(&server, ApiStyle::ChatJson));

    let first = run_batch(&jobs, &cl, &PromptTexts::default(), &store, BatchOptions::default()).unwrap();
    assert_eq!(first.count(JobState::Done), 8);
    assert_eq!(server.hits(), 8);

    let second = run_batch(&jobs, &cl, &PromptTexts::default(), &store, BatchOptions { serial: true, ..Default::default() })
        .unwrap();
    assert_eq!(second.count(JobState::Cached), 8);
    assert_eq!(server.hits(), 8);

    let forced = run_batch(&jobs[..1], &cl, &PromptTexts::default(), &store, BatchOptions { force: true, ..Default::default() })
        .unwrap();
    assert_eq!(forced.count(JobState::Done), 1);
    assert_eq!(server.hits(), 9);
}

#[test]
fn secrets_never_leak() {
    capture_logs();
    const SECRET: &str = "sk-test-9f8e7d6c5b4a";
    std::env::set_var("STYLOSHIFT_TEST_KEY", SECRET);
    let server = MockServer::scripted(vec![MockReply::status(503)], MockReply::text(&prose(150))).unwrap();
    let mut profile = EndpointProfile::new("default", server.base_url(), ApiStyle::ChatJson);
    profile.auth_env = Some("STYLOSHIFT_TEST_KEY".into());
    profile.backoff_ms = 1;
    let dir = tempfile::tempdir().unwrap();
    let store = ContinuationStore::new(dir.path());
    let (p, cfg) = (pair("d1"), config("chat", EndpointKind::Chat));
    let ledger = run_batch(
        &[GenerationJob::new(&p, &cfg)],
        &clients(EndpointClient::new(profile.clone())),
        &PromptTexts::default(),
        &store,
        BatchOptions::default(),
    )
    .unwrap();
    assert_eq!(ledger.count(JobState::Done), 1);
    ledger.write(&dir.path().join("ledger.json")).unwrap();

    // The key did travel on the wire...
    let auth = server.requests()[0].header("Authorization").unwrap().to_string();
    assert_eq!(auth, format!("Bearer {SECRET}"));
    // ...but nowhere else.
    let mut haystack = LOGS.lock().unwrap().join("\n");
    assert!(haystack.contains("attempt"), "logger captured nothing");
    haystack.push_str(&serde_json::to_string(&profile).unwrap());
    haystack.push_str(&format!("{profile:?}"));
    for f in walk(dir.path()) {
        haystack.push_str(&std::fs::read_to_string(f).unwrap());
    }
    assert!(!haystack.contains(SECRET));
}

#[test]
fn unknown_endpoint_and_duplicate_jobs_rejected() {
    let server = MockServer::always(MockReply::text("x")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = ContinuationStore::new(dir.path());
    let p = pair("d1");
    let mut cfg = config("chat", EndpointKind::Chat);
    let cl = clients(client(&server, ApiStyle::ChatJson));
    let dup = [GenerationJob::new(&p, &cfg), GenerationJob::new(&p, &cfg)];
    assert!(matches!(
        run_batch(&dup, &cl, &PromptTexts::default(), &store, BatchOptions::default()),
        Err(Error::Precondition(_))
    ));
    cfg.endpoint = "elsewhere".into();
    assert!(matches!(
        run_batch(&[GenerationJob::new(&p, &cfg)], &cl, &PromptTexts::default(), &store, BatchOptions::default()),
        Err(Error::Config(_))
    ));
    assert_eq!(server.hits(), 0);
}

#[test]
fn pacing_spaces_requests() {
    let server = MockServer::always(MockReply::text(&prose(60))).unwrap();
    let mut profile = EndpointProfile::new("default", server.base_url(), ApiStyle::ChatJson);
    profile.rate_limit = 600; // one request per 100 ms
    let c = EndpointClient::new(profile);
    let (p, cfg) = (pair("d1"), config("chat", EndpointKind::Chat));
    let start = std::time::Instant::now();
    for _ in 0..3 {
        run_job(&GenerationJob::new(&p, &cfg), &c, &PromptTexts::default()).unwrap();
    }
    assert!(start.elapsed() >= Duration::from_millis(200));
}

#[test]
fn degenerate_output_is_flagged_and_stored() {
    let server = MockServer::always(MockReply::text(&"I am happy to continue the text for you. ".repeat(40))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = ContinuationStore::new(dir.path());
    let (p, cfg) = (pair("d1"), config("chat", EndpointKind::Chat));
    let cl = clients(client(&server, ApiStyle::ChatJson));
    let ledger = run_batch(&[GenerationJob::new(&p, &cfg)], &cl, &PromptTexts::default(), &store, BatchOptions::default())
        .unwrap();
    assert!(ledger.jobs[0].degenerate);
    let stored = store.load("d1", "chat").unwrap().unwrap();
    assert!(stored.degenerate);
    assert_eq!(stored.degenerate_reason.as_deref(), Some("repetition"));
}
