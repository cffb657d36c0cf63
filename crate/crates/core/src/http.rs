//! Blocking JSON-over-HTTP plumbing shared by the remote embedding and
//! chat-completion clients: timeouts, bounded concurrency, a minimum
//! interval between requests and exponential backoff on 429/5xx.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            base_delay_ms: 250,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_delay_ms);
        Duration::from_millis(ms)
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().expect("semaphore lock");
        while *p == 0 {
            p = self.cv.wait(p).expect("semaphore lock");
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

pub(crate) struct JsonClient {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    min_interval: Duration,
    last_request: Mutex<Option<Instant>>,
    in_flight: Semaphore,
}

impl JsonClient {
    pub fn new(
        endpoint: String,
        api_key: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
        min_interval: Duration,
        max_in_flight: usize,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        JsonClient {
            agent,
            endpoint,
            api_key,
            retry,
            min_interval,
            last_request: Mutex::new(None),
            in_flight: Semaphore::new(max_in_flight),
        }
    }

    fn pace(&self) {
        let mut last = self.last_request.lock().expect("rate lock");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn transport(&self, message: impl Into<String>) -> Error {
        Error::Transport {
            endpoint: self.endpoint.clone(),
            message: message.into(),
        }
    }

    pub fn malformed(&self, message: impl Into<String>) -> Error {
        Error::MalformedResponse {
            endpoint: self.endpoint.clone(),
            message: message.into(),
        }
    }

    /// POSTs `body` and returns the parsed JSON response.
    pub fn post(&self, body: &Value) -> Result<Value> {
        let _permit = self.in_flight.acquire();
        let mut attempt = 0;
        loop {
            self.pace();
            let mut req = self.agent.post(&self.endpoint);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let outcome = req.send_json(body);
            let retryable = match outcome {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 429 || (500..600).contains(&status) {
                        format!("HTTP {status}")
                    } else {
                        let text = resp
                            .body_mut()
                            .read_to_string()
                            .map_err(|e| self.transport(format!("reading body: {e}")))?;
                        if !(200..300).contains(&status) {
                            return Err(self.transport(format!("HTTP {status}: {text}")));
                        }
                        return serde_json::from_str(&text)
                            .map_err(|e| self.malformed(format!("invalid JSON: {e}")));
                    }
                }
                Err(e) => match e {
                    ureq::Error::Timeout(_)
                    | ureq::Error::Io(_)
                    | ureq::Error::ConnectionFailed => e.to_string(),
                    other => return Err(self.transport(other.to_string())),
                },
            };
            if attempt >= self.retry.max_retries {
                return Err(self.transport(format!(
                    "giving up after {} attempts: {retryable}",
                    attempt + 1
                )));
            }
            std::thread::sleep(self.retry.delay(attempt));
            attempt += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_retries: 5,
            base_delay_ms: 100,
            max_delay_ms: 500,
        };
        let d: Vec<u64> = (0..5).map(|a| p.delay(a).as_millis() as u64).collect();
        assert_eq!(d, [100, 200, 400, 500, 500]);
    }

    #[test]
    fn semaphore_releases_on_drop() {
        let s = Semaphore::new(1);
        {
            let _a = s.acquire();
            assert_eq!(*s.permits.lock().unwrap(), 0);
        }
        assert_eq!(*s.permits.lock().unwrap(), 1);
    }
}
