//! Error taxonomy and retry policy shared by the embedding and chat backends.

use std::thread;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("backend returned an empty completion")]
    Empty,
    #[error("backend returned a zero vector")]
    ZeroVector,
    #[error("no cached completion for request {0} and no live backend configured")]
    NotCached(String),
    #[error("{0}")]
    Unconfigured(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<BackendError> },
}

impl BackendError {
    fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => matches!(status, 408 | 500 | 502 | 503 | 504),
            _ => false,
        }
    }
}

/// Bounded exponential backoff. Transient failures (transport errors, 408 and 5xx) get
/// `attempts` tries in total; HTTP 429 backs off separately and does not consume them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub max_rate_limit_waits: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
            max_backoff: Duration::from_secs(60),
            max_rate_limit_waits: 10,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff.saturating_mul(1u32 << retry.min(16)).min(self.max_backoff)
    }

    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let attempts = self.attempts.max(1);
        let mut failures = 0;
        let mut waits = 0;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(BackendError::RateLimited { retry_after }) if waits < self.max_rate_limit_waits => {
                    let delay = retry_after.unwrap_or_else(|| self.backoff(waits)).min(self.max_backoff);
                    tracing::warn!(?delay, "rate limited, backing off");
                    waits += 1;
                    thread::sleep(delay);
                }
                Err(e) if e.is_transient() => {
                    failures += 1;
                    if failures >= attempts {
                        return Err(BackendError::Exhausted { attempts: failures, last: Box::new(e) });
                    }
                    let delay = self.backoff(failures - 1);
                    tracing::warn!(error = %e, ?delay, attempt = failures, "transient backend failure, retrying");
                    thread::sleep(delay);
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Maps a finished HTTP exchange onto the error taxonomy.
pub(crate) fn check_status(response: reqwest::blocking::Response) -> Result<reqwest::blocking::Response, BackendError> {
    let status = response.status();
    if status.is_success() {
        return Ok(response);
    }
    if status.as_u16() == 429 {
        let retry_after = response
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        return Err(BackendError::RateLimited { retry_after });
    }
    let body = response.text().unwrap_or_default();
    let body: String = body.chars().take(500).collect();
    Err(BackendError::Status { status: status.as_u16(), body })
}

pub(crate) fn transport(e: reqwest::Error) -> BackendError {
    BackendError::Transport(e.to_string())
}

pub(crate) fn token_from_env(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|t| !t.trim().is_empty())
}
