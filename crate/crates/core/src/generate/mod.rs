//! Continuation harness: prompts, HTTP endpoints, degenerate-output checks
//! and batch runs with a persistent ledger.

mod client;
mod degenerate;
pub mod mock;
mod prompt;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use client::{ApiStyle, Completion, EndpointClient, EndpointProfile, SamplingParams};
pub use degenerate::{
    detect_degenerate, stopword_density, trailing_duplication, DegenerateReason, Verdict, MAX_DUPLICATION,
    MAX_REPEATS, MIN_REPEAT_SENTENCE_WORDS,
};
pub use prompt::{build_prompt, prompt_hash, sha256_hex, Message, PromptPayload, PromptTexts, MINIMAL_CS, MINIMAL_EN};

use crate::corpus::{write_atomic, Continuation, ContinuationStore, DocumentPair, ModelConfig, Provenance};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_OUTPUT_WORDS: usize = 1500;
pub const DEFAULT_RETRY_BUDGET: u32 = 4;
/// Output tokens requested per word of desired output.
pub const TOKENS_PER_WORD: usize = 2;
pub const LEDGER_FORMAT: &str = "styloshift-ledger/1";

#[derive(Debug, Clone)]
pub struct GenerationJob<'a> {
    pub pair: &'a DocumentPair,
    pub config: &'a ModelConfig,
    pub max_output_words: usize,
    pub retry_budget: u32,
}

impl<'a> GenerationJob<'a> {
    pub fn new(pair: &'a DocumentPair, config: &'a ModelConfig) -> Self {
        GenerationJob {
            pair,
            config,
            max_output_words: DEFAULT_MAX_OUTPUT_WORDS,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.pair.doc_id, &self.config.config_id)
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Generate one continuation. Nothing is persisted here.
pub fn run_job(job: &GenerationJob, client: &EndpointClient, texts: &PromptTexts) -> Result<Continuation> {
    let payload = build_prompt(job.pair, job.config, texts)?;
    let params = SamplingParams {
        model: &job.config.model_name,
        temperature: job.config.temperature,
        max_tokens: job.max_output_words * TOKENS_PER_WORD,
    };
    let out = client.complete(&payload, &params, job.retry_budget)?;
    let verdict = detect_degenerate(&out.text, &job.pair.language);
    Ok(Continuation {
        doc_id: job.pair.doc_id.clone(),
        model_config_id: job.config.config_id.clone(),
        text: out.text,
        degenerate: verdict.degenerate,
        degenerate_reason: verdict.reason.map(|r| r.as_str().to_string()),
        provenance: Provenance {
            model_name: job.config.model_name.clone(),
            temperature: job.config.temperature,
            timestamp: now_secs(),
            prompt_hash: prompt_hash(&payload),
            retries: out.retries,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Done,
    Cached,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub doc_id: String,
    pub config_id: String,
    pub state: JobState,
    pub retries: u32,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degenerate_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub format: String,
    pub started: u64,
    pub finished: u64,
    pub jobs: Vec<JobRecord>,
}

impl RunLedger {
    pub fn count(&self, state: JobState) -> usize {
        self.jobs.iter().filter(|j| j.state == state).count()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("ledger serializes");
        write_atomic(path, json.as_bytes())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchOptions {
    pub force: bool,
    /// Run jobs one at a time in key order.
    pub serial: bool,
    pub concurrency: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            force: false,
            serial: false,
            concurrency: 4,
        }
    }
}

/// Run every job whose continuation is not stored yet (all of them with
/// `force`). Failures are recorded in the ledger rather than aborting the run.
pub fn run_batch(
    jobs: &[GenerationJob],
    clients: &BTreeMap<String, EndpointClient>,
    texts: &PromptTexts,
    store: &ContinuationStore,
    opts: BatchOptions,
) -> Result<RunLedger> {
    let mut seen = BTreeSet::new();
    for job in jobs {
        if !seen.insert(job.key()) {
            return Err(Error::Precondition(format!(
                "job ({}, {}) scheduled twice",
                job.pair.doc_id, job.config.config_id
            )));
        }
        if !clients.contains_key(&job.config.endpoint) {
            return Err(Error::Config(format!(
                "config {} uses unknown endpoint {}",
                job.config.config_id, job.config.endpoint
            )));
        }
    }
    let started = now_secs();
    let mut order: Vec<&GenerationJob> = jobs.iter().collect();
    order.sort_by(|a, b| a.key().cmp(&b.key()));

    let mut records = Vec::with_capacity(jobs.len());
    let mut pending = VecDeque::new();
    for job in order {
        if !opts.force && store.contains(&job.pair.doc_id, &job.config.config_id) {
            let cached = store.load(&job.pair.doc_id, &job.config.config_id)?;
            let (degenerate, reason) = cached.map(|c| (c.degenerate, c.degenerate_reason)).unwrap_or_default();
            records.push(JobRecord {
                doc_id: job.pair.doc_id.clone(),
                config_id: job.config.config_id.clone(),
                state: JobState::Cached,
                retries: 0,
                degenerate,
                degenerate_reason: reason,
                error: None,
            });
        } else {
            pending.push_back(job);
        }
    }

    let queue = Mutex::new(pending);
    let done = Mutex::new(Vec::new());
    // The store is written from one thread at a time.
    let writer = Mutex::new(());
    let workers = if opts.serial { 1 } else { opts.concurrency.max(1) };
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let Some(job) = queue.lock().unwrap().pop_front() else { break };
                let client = &clients[&job.config.endpoint];
                let result = run_job(job, client, texts).and_then(|c| {
                    let _w = writer.lock().unwrap();
                    store.save(&c, opts.force).map(|_| c)
                });
                let record = match result {
                    Ok(c) => JobRecord {
                        doc_id: c.doc_id,
                        config_id: c.model_config_id,
                        state: JobState::Done,
                        retries: c.provenance.retries,
                        degenerate: c.degenerate,
                        degenerate_reason: c.degenerate_reason,
                        error: None,
                    },
                    Err(e) => {
                        log::error!("job ({}, {}) failed: {e}", job.pair.doc_id, job.config.config_id);
                        JobRecord {
                            doc_id: job.pair.doc_id.clone(),
                            config_id: job.config.config_id.clone(),
                            state: JobState::Failed,
                            retries: 0,
                            degenerate: false,
                            degenerate_reason: None,
                            error: Some(e.to_string()),
                        }
                    }
                };
                done.lock().unwrap().push(record);
            });
        }
    });
    records.extend(done.into_inner().unwrap());
    records.sort_by(|a, b| (&a.doc_id, &a.config_id).cmp(&(&b.doc_id, &b.config_id)));
    Ok(RunLedger {
        format: LEDGER_FORMAT.to_string(),
        started,
        finished: now_secs(),
        jobs: records,
    })
}
