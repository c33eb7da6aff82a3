//! HTTP client for a remote editor/describer service.

use std::time::Duration;

use reqwest::blocking::{Client, RequestBuilder};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;

use super::wire::{
    self, DescribeBody, DescribeReply, EditBody, EditReply, ErrorReply, HealthReply,
};
use super::{DescribeResponse, EditRequest, EditResponse, EditorBackend, GatewayError, ImageGray};

/// Exponential backoff over a bounded number of attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub initial_backoff: Duration,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2,
        }
    }
}

impl RetryPolicy {
    /// Sleep before attempt `attempt + 1` (attempts are 1-based).
    pub fn backoff_after(&self, attempt: usize) -> Duration {
        self.initial_backoff * self.multiplier.pow(attempt.saturating_sub(1) as u32)
    }
}

enum Failure {
    Transient(String),
    Fatal(GatewayError),
}

pub struct RemoteEditor {
    base_url: String,
    client: Client,
    retry: RetryPolicy,
}

impl RemoteEditor {
    pub fn new(base_url: impl Into<String>) -> Result<Self, GatewayError> {
        Self::with_options(base_url, RetryPolicy::default(), Duration::from_secs(300))
    }

    pub fn with_options(
        base_url: impl Into<String>,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        if retry.max_attempts == 0 {
            return Err(GatewayError::InvalidRequest(
                "retry policy needs ≥ 1 attempt".into(),
            ));
        }
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
            retry,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }

    fn attempt<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, Failure> {
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Err(Failure::Transient(e.to_string()))
            }
            Err(e) => return Err(Failure::Fatal(GatewayError::BackendRejected(e.to_string()))),
        };
        let status = resp.status();
        if status.is_success() {
            return resp.json::<T>().map_err(|e| {
                Failure::Fatal(GatewayError::BackendRejected(format!(
                    "malformed response body: {e}"
                )))
            });
        }
        let text = resp.text().unwrap_or_default();
        let parsed: Option<ErrorReply> = serde_json::from_str(&text).ok();
        let retryable = matches!(
            status,
            StatusCode::BAD_GATEWAY | StatusCode::SERVICE_UNAVAILABLE | StatusCode::GATEWAY_TIMEOUT
        ) || parsed.as_ref().is_some_and(|p| p.retryable);
        let message = match parsed {
            Some(p) => format!("{status}: {}", p.error),
            None => format!("{status}: {text}"),
        };
        if retryable {
            Err(Failure::Transient(message))
        } else {
            Err(Failure::Fatal(GatewayError::BackendRejected(message)))
        }
    }

    /// Sends the request built by `make` until it succeeds, fails fatally,
    /// or the retry budget is exhausted. The same idempotency key is sent on
    /// every attempt.
    fn with_retry<T, F>(&self, key: &str, make: F) -> Result<T, GatewayError>
    where
        T: DeserializeOwned,
        F: Fn() -> RequestBuilder,
    {
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            match self.attempt(make().header("Idempotency-Key", key)) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) => {
                    log::warn!(
                        "attempt {attempt}/{} for `{key}` failed: {msg}",
                        self.retry.max_attempts
                    );
                    last = msg;
                    if attempt < self.retry.max_attempts {
                        std::thread::sleep(self.retry.backoff_after(attempt));
                    }
                }
            }
        }
        Err(GatewayError::BackendUnavailable {
            attempts: self.retry.max_attempts,
            message: last,
        })
    }
}

impl EditorBackend for RemoteEditor {
    fn edit(&self, req: &EditRequest) -> Result<EditResponse, GatewayError> {
        let body = EditBody {
            request_id: req.request_id().to_string(),
            prompt: req.prompt().to_string(),
            image_png_b64: wire::encode_image(req.image())?,
        };
        let url = self.url("/edit");
        let reply: EditReply =
            self.with_retry(req.request_id(), || self.client.post(&url).json(&body))?;
        Ok(EditResponse {
            request_id: reply.request_id,
            edited: wire::decode_image(&reply.image_png_b64)?,
            backend_info: reply.backend_info,
        })
    }

    fn describe(
        &self,
        request_id: &str,
        image: &ImageGray,
    ) -> Result<DescribeResponse, GatewayError> {
        let body = DescribeBody {
            request_id: request_id.to_string(),
            image_png_b64: wire::encode_image(image)?,
        };
        let url = self.url("/describe");
        let reply: DescribeReply =
            self.with_retry(request_id, || self.client.post(&url).json(&body))?;
        Ok(DescribeResponse {
            request_id: reply.request_id,
            description: reply.description,
        })
    }

    fn health(&self) -> Result<(), GatewayError> {
        let url = self.url("/health");
        let reply: HealthReply = self.with_retry("health", || self.client.get(&url))?;
        if reply.status == "ok" {
            Ok(())
        } else {
            Err(GatewayError::BackendUnavailable {
                attempts: 1,
                message: format!("health status `{}`", reply.status),
            })
        }
    }

    fn name(&self) -> String {
        format!("remote:{}", self.base_url)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_policy() {
        let p = RetryPolicy::default();
        assert_eq!(p.max_attempts, 3);
        assert_eq!(p.backoff_after(1), Duration::from_millis(500));
        assert_eq!(p.backoff_after(2), Duration::from_millis(1000));
    }

    #[test]
    fn unreachable_backend_exhausts_retries() {
        // port 9 (discard) on localhost is not listening in the test sandbox
        let policy = RetryPolicy {
            max_attempts: 2,
            initial_backoff: Duration::from_millis(1),
            multiplier: 2,
        };
        let remote =
            RemoteEditor::with_options("http://127.0.0.1:9", policy, Duration::from_secs(2))
                .unwrap();
        let req = EditRequest::new("r", ImageGray::filled(4, 4, 0), "pleural effusion").unwrap();
        match remote.edit(&req) {
            Err(GatewayError::BackendUnavailable { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("expected BackendUnavailable, got {other:?}"),
        }
    }
}
