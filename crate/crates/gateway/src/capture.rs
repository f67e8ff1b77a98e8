//! Capture and replay of endpoint traffic.
//!
//! `CaptureBackend` wraps any backend and records every request/response
//! pair; `ReplayBackend` serves a saved capture file back, keyed by the
//! canonical digest of each request. Because the digest is computed over the
//! canonicalized JSON value (object keys sorted), a replayed run matches the
//! captured one even if field order in the serialized request drifts.

use crate::{ChatBackend, ChatRequest, ChatResponse, GatewayError};
use aigve_core::hash::sha256_hex;
use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

/// One recorded exchange. Exactly one of `response`/`error` is set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub request: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn canonical_digest(request: &serde_json::Value) -> String {
    sha256_hex(request.to_string().as_bytes())
}

/// Records all traffic through an inner backend.
pub struct CaptureBackend {
    inner: Arc<dyn ChatBackend>,
    records: Mutex<Vec<CaptureRecord>>,
}

impl CaptureBackend {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        Self {
            inner,
            records: Mutex::new(Vec::new()),
        }
    }

    pub fn records(&self) -> Vec<CaptureRecord> {
        self.records.lock().unwrap().clone()
    }

    /// Writes the capture as JSON lines, one exchange per line.
    pub fn save_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let records = self.records.lock().unwrap();
        let mut file = std::fs::File::create(path)?;
        for record in records.iter() {
            let line = serde_json::to_string(record)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            writeln!(file, "{line}")?;
        }
        Ok(())
    }
}

#[async_trait]
impl ChatBackend for CaptureBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let request_value = serde_json::to_value(request)?;
        let result = self.inner.complete(request).await;
        let record = match &result {
            Ok(response) => CaptureRecord {
                request: request_value,
                response: Some(response.content.clone()),
                error: None,
            },
            Err(err) => CaptureRecord {
                request: request_value,
                response: None,
                error: Some(err.to_string()),
            },
        };
        self.records.lock().unwrap().push(record);
        result
    }
}

/// Serves previously captured responses; any request not in the capture is
/// an error, so replays cannot silently fall through to a live endpoint.
pub struct ReplayBackend {
    by_digest: HashMap<String, CaptureRecord>,
}

impl ReplayBackend {
    pub fn from_capture_file(path: &Path) -> Result<Self, GatewayError> {
        let file = std::fs::File::open(path).map_err(|e| {
            GatewayError::InvalidEndpoint(format!("capture file {}: {e}", path.display()))
        })?;
        let mut by_digest = HashMap::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| {
                GatewayError::MalformedResponse(format!(
                    "capture file {} line {}: {e}",
                    path.display(),
                    idx + 1
                ))
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CaptureRecord = serde_json::from_str(&line).map_err(|e| {
                GatewayError::MalformedResponse(format!(
                    "capture file {} line {}: {e}",
                    path.display(),
                    idx + 1
                ))
            })?;
            by_digest.insert(canonical_digest(&record.request), record);
        }
        Ok(Self { by_digest })
    }

    pub fn len(&self) -> usize {
        self.by_digest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_digest.is_empty()
    }
}

#[async_trait]
impl ChatBackend for ReplayBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let digest = request.digest()?;
        match self.by_digest.get(&digest) {
            Some(CaptureRecord {
                response: Some(content),
                ..
            }) => Ok(ChatResponse {
                content: content.clone(),
                raw: serde_json::json!({ "replayed": true }),
            }),
            Some(CaptureRecord {
                error: Some(message),
                ..
            }) => Err(GatewayError::Endpoint {
                status: 0,
                message: format!("captured error: {message}"),
            }),
            Some(_) => Err(GatewayError::MalformedResponse(
                "capture record has neither response nor error".into(),
            )),
            None => Err(GatewayError::MalformedResponse(format!(
                "no captured response for request digest {digest}"
            ))),
        }
    }
}
