use std::time::Duration;

use super::{ClientError, CompletionBackend, CompletionRequest, CompletionResponse};

/// Environment variable whose value is sent as `Authorization: Bearer <token>`.
pub const BEARER_TOKEN_ENV: &str = "DOMAINSYNTH_API_TOKEN";

const COMPLETE_PATH: &str = "/v1/complete";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): doubles each time.
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(retry.saturating_sub(1))
    }
}

/// Client for the `/v1/complete` protocol. Cheap to clone and share.
#[derive(Debug, Clone)]
pub struct HttpClient {
    client: reqwest::Client,
    url: String,
    bearer: Option<String>,
    retry: RetryPolicy,
}

impl HttpClient {
    /// `endpoint` is either a base URL or the full `/v1/complete` URL.
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, ClientError> {
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with(COMPLETE_PATH) {
            base.to_string()
        } else {
            format!("{base}{COMPLETE_PATH}")
        };
        reqwest::Url::parse(&url).map_err(|e| ClientError::InvalidRequest(format!("endpoint {endpoint:?}: {e}")))?;
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .connect_timeout(timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url,
            bearer: None,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_bearer(mut self, token: Option<String>) -> Self {
        self.bearer = token.filter(|t| !t.is_empty());
        self
    }

    /// Picks up the bearer token from [`BEARER_TOKEN_ENV`] if set.
    pub fn with_env_bearer(self) -> Self {
        self.with_bearer(std::env::var(BEARER_TOKEN_ENV).ok())
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Exactly one HTTP round trip.
    pub async fn complete_once(&self, req: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        let mut builder = self.client.post(&self.url).json(req);
        if let Some(token) = &self.bearer {
            builder = builder.bearer_auth(token);
        }
        let resp = builder.send().await.map_err(classify)?;
        let status = resp.status();
        let body = resp.text().await.map_err(classify)?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body,
            });
        }
        serde_json::from_str(&body).map_err(|e| ClientError::Protocol(format!("{e}: {body}")))
    }

    /// [`Self::complete_once`] with retries on retryable errors. The request,
    /// seed included, is resent unchanged.
    pub async fn complete_with_retry(&self, req: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        let mut retry = 0;
        loop {
            match self.complete_once(req).await {
                Err(e) if e.is_retryable() && retry + 1 < self.retry.attempts => {
                    retry += 1;
                    let wait = self.retry.backoff(retry);
                    tracing::debug!(error = %e, ?wait, "retrying completion request");
                    tokio::time::sleep(wait).await;
                }
                other => return other,
            }
        }
    }
}

fn classify(e: reqwest::Error) -> ClientError {
    if e.is_timeout() {
        ClientError::Timeout
    } else if e.is_decode() {
        ClientError::Protocol(e.to_string())
    } else {
        ClientError::Transport(e.to_string())
    }
}

impl CompletionBackend for HttpClient {
    async fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        self.complete_with_retry(req).await
    }
}
