use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::PromptPayload;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    ChatJson,
    CompletionJson,
}

/// Where a model is served. `auth_env` names the environment variable that
/// holds the key; the key itself is never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointProfile {
    pub name: String,
    pub base_url: String,
    pub api_style: ApiStyle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    /// Requests per minute; 0 disables pacing.
    #[serde(default)]
    pub rate_limit: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_timeout() -> f64 {
    120.0
}
fn default_in_flight() -> usize {
    4
}
fn default_backoff() -> u64 {
    1000
}

impl EndpointProfile {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>, api_style: ApiStyle) -> Self {
        EndpointProfile {
            name: name.into(),
            base_url: base_url.into(),
            api_style,
            auth_env: None,
            rate_limit: 0,
            timeout_secs: default_timeout(),
            max_in_flight: default_in_flight(),
            backoff_ms: default_backoff(),
        }
    }
}

/// Spaces request starts at least `60 / rate_limit` seconds apart.
#[derive(Debug)]
struct Pacer {
    interval: Duration,
    next: Mutex<Instant>,
}

impl Pacer {
    fn new(per_minute: u32) -> Self {
        let interval = if per_minute == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / per_minute as f64)
        };
        Pacer {
            interval,
            next: Mutex::new(Instant::now()),
        }
    }

    fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let slot = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

#[derive(Debug)]
struct Gate {
    limit: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut busy = self.busy.lock().unwrap();
        while *busy >= self.limit {
            busy = self.freed.wait(busy).unwrap();
        }
        *busy += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.busy.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub retries: u32,
}

#[derive(Debug, Clone)]
pub struct SamplingParams<'a> {
    pub model: &'a str,
    pub temperature: f64,
    pub max_tokens: usize,
}

enum Attempt {
    Done(String),
    Retry { rate_limited: bool, message: String },
}

/// One client per endpoint; it owns the pacing and in-flight limits.
#[derive(Debug)]
pub struct EndpointClient {
    profile: EndpointProfile,
    agent: ureq::Agent,
    pacer: Pacer,
    gate: Gate,
}

impl EndpointClient {
    pub fn new(profile: EndpointProfile) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(profile.timeout_secs.max(0.001))))
            .http_status_as_error(false)
            .build();
        EndpointClient {
            agent: config.into(),
            pacer: Pacer::new(profile.rate_limit),
            gate: Gate {
                limit: profile.max_in_flight.max(1),
                busy: Mutex::new(0),
                freed: Condvar::new(),
            },
            profile,
        }
    }

    pub fn profile(&self) -> &EndpointProfile {
        &self.profile
    }

    fn url(&self) -> String {
        let base = self.profile.base_url.trim_end_matches('/');
        match self.profile.api_style {
            ApiStyle::ChatJson => format!("{base}/chat/completions"),
            ApiStyle::CompletionJson => format!("{base}/completions"),
        }
    }

    fn body(&self, payload: &PromptPayload, params: &SamplingParams) -> Result<Value> {
        let mut body = match (self.profile.api_style, payload) {
            (ApiStyle::ChatJson, PromptPayload::Chat { messages }) => json!({ "messages": messages }),
            (ApiStyle::CompletionJson, PromptPayload::Completion { prompt }) => json!({ "prompt": prompt }),
            _ => {
                return Err(Error::Config(format!(
                    "endpoint {} cannot serve this prompt style",
                    self.profile.name
                )))
            }
        };
        body["model"] = json!(params.model);
        body["temperature"] = json!(params.temperature);
        body["max_tokens"] = json!(params.max_tokens);
        Ok(body)
    }

    /// Send one generation request, retrying transport failures, timeouts,
    /// 429 and 5xx responses up to `retry_budget` times.
    pub fn complete(&self, payload: &PromptPayload, params: &SamplingParams, retry_budget: u32) -> Result<Completion> {
        let body = self.body(payload, params)?;
        let key = match &self.profile.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable {var} for endpoint {} is not set", self.profile.name))
            })?),
            None => None,
        };
        let url = self.url();
        let mut attempt = 0u32;
        loop {
            let outcome = {
                let _slot = self.gate.enter();
                self.pacer.wait();
                log::debug!("POST {url} model={} attempt={}", params.model, attempt + 1);
                self.send(&url, &body, key.as_deref())?
            };
            match outcome {
                Attempt::Done(text) => {
                    return Ok(Completion {
                        text,
                        retries: attempt,
                    })
                }
                Attempt::Retry { rate_limited, message } => {
                    log::warn!("{}: attempt {} failed: {message}", self.profile.name, attempt + 1);
                    if attempt >= retry_budget {
                        let attempts = attempt + 1;
                        return Err(if rate_limited {
                            Error::RateLimited { attempts }
                        } else {
                            Error::Transport { attempts, message }
                        });
                    }
                    let wait = self.profile.backoff_ms.saturating_mul(1u64 << attempt.min(16));
                    thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
            }
        }
    }

    fn send(&self, url: &str, body: &Value, key: Option<&str>) -> Result<Attempt> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Ok(Attempt::Retry {
                    rate_limited: false,
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(Error::Auth(status)),
            429 => {
                return Ok(Attempt::Retry {
                    rate_limited: true,
                    message: "HTTP 429".into(),
                })
            }
            500..=599 => {
                return Ok(Attempt::Retry {
                    rate_limited: false,
                    message: format!("HTTP {status}"),
                })
            }
            _ => {
                return Err(Error::Transport {
                    attempts: 1,
                    message: format!("HTTP {status}"),
                })
            }
        }
        let value: Value = match resp.body_mut().read_json() {
            Ok(v) => v,
            Err(e) => {
                return Ok(Attempt::Retry {
                    rate_limited: false,
                    message: e.to_string(),
                })
            }
        };
        let choice = &value["choices"][0];
        let text = match self.profile.api_style {
            ApiStyle::ChatJson => choice["message"]["content"].as_str(),
            ApiStyle::CompletionJson => choice["text"].as_str(),
        };
        text.map(|t| Attempt::Done(t.to_string()))
            .ok_or_else(|| Error::parse(url.to_string(), "response has no generated text"))
    }
}
