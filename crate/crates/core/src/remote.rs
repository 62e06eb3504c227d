//! Blocking client for a text-completion endpoint.
//!
//! Wire protocol: `POST <endpoint>` with body `{"prompt": "..."}` and an optional
//! `Authorization: Bearer <token>` header; the reply body is `{"completion": "..."}`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENV_ENDPOINT: &str = "PABU_ENDPOINT";
pub const ENV_TOKEN: &str = "PABU_TOKEN";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub token: Option<String>,
    /// Per-request timeout covering connect, send and receive.
    pub timeout: Duration,
    /// Extra attempts after a failed request.
    pub retries: usize,
    /// Delay before the first retry; doubles on every further retry.
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            token: None,
            timeout: Duration::from_secs(30),
            retries: 2,
            backoff: Duration::from_millis(200),
            max_in_flight: 4,
        }
    }

    /// Replaces endpoint and token with `PABU_ENDPOINT` / `PABU_TOKEN` when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(e) = std::env::var(ENV_ENDPOINT) {
            if !e.trim().is_empty() {
                self.endpoint = e.trim().to_string();
            }
        }
        if let Ok(t) = std::env::var(ENV_TOKEN) {
            if !t.trim().is_empty() {
                self.token = Some(t.trim().to_string());
            }
        }
        self
    }
}

/// Counters for one decision's worth of remote calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallStats {
    pub retries: usize,
    pub reprompts: usize,
}

#[derive(Serialize)]
struct PromptBody<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionBody {
    completion: String,
}

/// Counting gate bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteClient {
    config: RemoteConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl std::fmt::Debug for RemoteClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClient")
            .field("endpoint", &self.config.endpoint)
            .finish()
    }
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.endpoint.trim().is_empty() {
            return Err(Error::invalid("remote endpoint is not configured"));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteClient {
            gate: Gate::new(config.max_in_flight),
            config,
            agent,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// Sends one prompt and returns the completion text, retrying transport failures and
    /// server errors with exponential backoff. Every retry is counted in `stats`.
    pub fn complete(&self, prompt: &str, stats: &mut CallStats) -> Result<String> {
        let mut delay = self.config.backoff;
        let mut attempt = 0;
        loop {
            let outcome = {
                let _permit = self.gate.acquire();
                self.attempt(prompt)
            };
            match outcome {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(msg)) => {
                    if attempt >= self.config.retries {
                        return Err(Error::Transport(format!(
                            "{} failed after {} attempts: {msg}",
                            self.config.endpoint,
                            attempt + 1
                        )));
                    }
                    log::warn!("request to {} failed ({msg}); retrying", self.config.endpoint);
                    attempt += 1;
                    stats.retries += 1;
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
    }

    fn attempt(&self, prompt: &str) -> std::result::Result<String, Attempt> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.config.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(&PromptBody { prompt })
            .map_err(|e| Attempt::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(Attempt::Retryable(format!("server status {status}")));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(Error::Transport(format!(
                "{} rejected the request with status {status}",
                self.config.endpoint
            ))));
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retryable(e.to_string()))?;
        let body: CompletionBody = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(Error::Transport(format!("malformed reply envelope: {e}"))))?;
        Ok(body.completion)
    }
}

enum Attempt {
    Retryable(String),
    Fatal(Error),
}
