//! The live HTTP chat client.
//!
//! One client per endpoint: requests are JSON POSTs carrying an idempotency
//! key derived from the request body, so a retried request is recognizably
//! the same request. Retries are reserved for server errors (5xx, 429),
//! timeouts, and connection failures — a 4xx means the request itself is
//! wrong and is surfaced immediately. Concurrency per endpoint is bounded by
//! a semaphore. The bearer token is read from the configured environment
//! variable at request time and lives only in the Authorization header.

use crate::{ChatBackend, ChatRequest, ChatResponse, EndpointConfig, GatewayError};
use async_trait::async_trait;
use std::sync::Arc;
use std::time::Duration;
use tokio::sync::Semaphore;

pub struct HttpChatClient {
    config: EndpointConfig,
    http: reqwest::Client,
    permits: Arc<Semaphore>,
}

impl HttpChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, GatewayError> {
        if !(config.url.starts_with("http://") || config.url.starts_with("https://")) {
            return Err(GatewayError::InvalidEndpoint(config.url.clone()));
        }
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms.max(1)))
            .build()
            .map_err(|e| GatewayError::InvalidEndpoint(e.to_string()))?;
        let permits = Arc::new(Semaphore::new(config.parallelism.max(1)));
        Ok(Self {
            config,
            http,
            permits,
        })
    }

    fn auth_token(&self) -> Result<Option<String>, GatewayError> {
        match &self.config.auth_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(token) if !token.is_empty() => Ok(Some(token)),
                _ => Err(GatewayError::MissingAuth(var.clone())),
            },
        }
    }
}

#[async_trait]
impl ChatBackend for HttpChatClient {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let body = serde_json::to_string(request)?;
        let idempotency_key = &request.digest()?[..32];
        let token = self.auth_token()?;
        let _permit = self
            .permits
            .acquire()
            .await
            .expect("endpoint semaphore is never closed");

        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let mut req = self
                .http
                .post(&self.config.url)
                .header("content-type", "application/json")
                .header("idempotency-key", idempotency_key)
                .body(body.clone());
            if let Some(token) = &token {
                req = req.bearer_auth(token);
            }
            match req.send().await {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let value: serde_json::Value = resp
                            .json()
                            .await
                            .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
                        let content = value
                            .pointer("/choices/0/message/content")
                            .and_then(|v| v.as_str())
                            .ok_or_else(|| {
                                GatewayError::MalformedResponse(
                                    "missing choices[0].message.content".into(),
                                )
                            })?
                            .to_string();
                        return Ok(ChatResponse { content, raw: value });
                    }
                    let retryable = status.is_server_error() || status.as_u16() == 429;
                    if retryable && attempt <= self.config.max_retries {
                        backoff(attempt).await;
                        continue;
                    }
                    let message = excerpt(&resp.text().await.unwrap_or_default());
                    return Err(GatewayError::Endpoint {
                        status: status.as_u16(),
                        message,
                    });
                }
                Err(e) if e.is_timeout() => {
                    if attempt <= self.config.max_retries {
                        backoff(attempt).await;
                        continue;
                    }
                    return Err(GatewayError::Timeout { attempts: attempt });
                }
                Err(e) if e.is_connect() => {
                    if attempt <= self.config.max_retries {
                        backoff(attempt).await;
                        continue;
                    }
                    return Err(GatewayError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    });
                }
                Err(e) => {
                    return Err(GatewayError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    });
                }
            }
        }
    }
}

/// Exponential backoff, capped at two seconds.
async fn backoff(attempt: u32) {
    let ms = 100u64.saturating_mul(1u64 << attempt.min(4));
    tokio::time::sleep(Duration::from_millis(ms.min(2_000))).await;
}

fn excerpt(text: &str) -> String {
    const LIMIT: usize = 300;
    if text.len() <= LIMIT {
        return text.to_string();
    }
    let mut cut = LIMIT;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}…", &text[..cut])
}
