//! Deterministic in-process backends.
//!
//! `mock:<role>` endpoint URLs resolve here. Every mock derives its reply
//! purely from the request content (via content hashing), so offline runs
//! are byte-for-byte reproducible and tests can drive the full pipeline
//! without a network. Parameters ride in the URL query string:
//!
//! - `mock:evaluator?base=2.0&step=1.0` — overall score starts at `base` and
//!   rises by `step` for every `Refined:` marker the instruction carries (the
//!   marker the mock instruction revisor appends), so refinement loops see
//!   scores improve deterministically. `fenced=1` wraps the report in a code
//!   fence to exercise the repair path.
//! - `mock:generator` — returns a stable `mock://video/<digest>` reference.
//! - `mock:instruction_revisor` — appends a `Refined:` line to the
//!   instruction.
//! - `mock:comment_revisor?hallucinate=1` — rewrites the comment; with
//!   `hallucinate=1` it injects the literal `UNGROUNDED`, which the mock
//!   validator rejects.
//! - `mock:validator` — fails any revision containing `UNGROUNDED`.
//! - `mock:judge?score=4` — fixed score, or a content-derived score in 1..=5
//!   when the parameter is absent. `style=prose` buries the number in a
//!   sentence to exercise the fallback parser.
//!
//! All mocks accept `log=<path>` and append one JSON line per call, which
//! tests use to count endpoint traffic (for example, proving a resumed run
//! does not re-call completed work), and `fail_at=<n>`, which turns the n-th
//! call into a 503 so interrupted runs can be staged from the command line.

use crate::prompts::extract_tag;
use crate::{ChatBackend, ChatRequest, ChatResponse, GatewayError};
use aigve_core::hash::{sha256_hex, sha256_hex_short};
use aigve_core::schema::{
    format_score, serialize_report, Aspect, AspectEntry, AspectReport, ScoreBounds,
};
use async_trait::async_trait;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockRole {
    Evaluator,
    Generator,
    InstructionRevisor,
    CommentRevisor,
    Validator,
    Judge,
}

impl MockRole {
    fn name(self) -> &'static str {
        match self {
            MockRole::Evaluator => "evaluator",
            MockRole::Generator => "generator",
            MockRole::InstructionRevisor => "instruction_revisor",
            MockRole::CommentRevisor => "comment_revisor",
            MockRole::Validator => "validator",
            MockRole::Judge => "judge",
        }
    }
}

/// Deterministic stand-in for one agent's endpoint.
pub struct MockBackend {
    role: MockRole,
    params: BTreeMap<String, String>,
    calls: AtomicUsize,
}

impl MockBackend {
    /// Parses `mock:<role>?key=value&...`.
    pub fn from_url(url: &str) -> Result<Self, GatewayError> {
        let rest = url
            .strip_prefix("mock:")
            .ok_or_else(|| GatewayError::InvalidEndpoint(url.to_string()))?;
        let (role_name, query) = rest.split_once('?').unwrap_or((rest, ""));
        let role = match role_name {
            "evaluator" => MockRole::Evaluator,
            "generator" => MockRole::Generator,
            "instruction_revisor" | "revisor" => MockRole::InstructionRevisor,
            "comment_revisor" => MockRole::CommentRevisor,
            "validator" => MockRole::Validator,
            "judge" => MockRole::Judge,
            other => {
                return Err(GatewayError::InvalidEndpoint(format!(
                    "unknown mock role '{other}'"
                )))
            }
        };
        let mut params = BTreeMap::new();
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (key, value) = pair.split_once('=').unwrap_or((pair, ""));
            params.insert(key.to_string(), value.to_string());
        }
        Ok(Self {
            role,
            params,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn role(&self) -> MockRole {
        self.role
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn param_f64(&self, key: &str, default: f64) -> f64 {
        self.params
            .get(key)
            .and_then(|v| v.parse().ok())
            .unwrap_or(default)
    }

    fn param_flag(&self, key: &str) -> bool {
        self.params.get(key).map(|v| v == "1").unwrap_or(false)
    }

    fn log_call(&self, call: usize, request: &ChatRequest) {
        if let Some(path) = self.params.get("log") {
            let digest = request.digest().unwrap_or_default();
            let line = serde_json::json!({
                "role": self.role.name(),
                "call": call,
                "request_sha": digest,
            });
            if let Ok(mut file) = std::fs::OpenOptions::new().create(true).append(true).open(path)
            {
                use std::io::Write;
                let _ = writeln!(file, "{line}");
            }
        }
    }

    fn evaluate(&self, request: &ChatRequest) -> String {
        let text = request.last_user_text();
        let instruction = extract_tag(&text, "instruction").unwrap_or(&text).to_string();
        let rounds = instruction.matches("Refined:").count();
        let base = self.param_f64("base", 2.0);
        let step = self.param_f64("step", 1.0);
        let overall = (base + step * rounds as f64).clamp(0.0, 5.0);
        let digest = Sha256::digest(instruction.as_bytes());

        let entries: BTreeMap<Aspect, AspectEntry> = Aspect::ALL
            .into_iter()
            .enumerate()
            .map(|(i, aspect)| {
                let score = if aspect == Aspect::Overall {
                    overall
                } else {
                    let jitter = (digest[i] % 3) as f64 * 0.25 - 0.25;
                    (overall + jitter).clamp(0.0, 5.0)
                };
                let comment = format!(
                    "The sampled frames show {} at a level of {} for this clip after {} refinement pass(es); strengths and weaknesses balance out accordingly.",
                    aspect.key(),
                    format_score(score),
                    rounds,
                );
                (aspect, AspectEntry { comment, score })
            })
            .collect();
        let report = AspectReport::new(entries, &ScoreBounds::default())
            .expect("mock scores are always in bounds");
        let body = serialize_report(&report);
        if self.param_flag("fenced") {
            format!("Here is the evaluation:\n```json\n{body}\n```\n")
        } else {
            body
        }
    }

    fn generate(&self, request: &ChatRequest) -> String {
        let instruction = request.last_user_text();
        format!("mock://video/{}", sha256_hex_short(instruction.as_bytes()))
    }

    fn revise_instruction(&self, request: &ChatRequest) -> String {
        let text = request.last_user_text();
        let instruction = extract_tag(&text, "instruction").unwrap_or(&text);
        let pass = instruction.matches("Refined:").count() + 1;
        format!(
            "{instruction}\nRefined: name the required objects and actions explicitly (pass {pass})."
        )
    }

    fn revise_comment(&self, request: &ChatRequest) -> String {
        let text = request.last_user_text();
        let original = extract_tag(&text, "original").unwrap_or(&text);
        let mut revised = format!(
            "{original} Strengths and weaknesses are stated in a consistent register."
        );
        if self.param_flag("hallucinate") {
            revised.push_str(" UNGROUNDED detail added for effect.");
        }
        revised
    }

    fn validate(&self, request: &ChatRequest) -> String {
        let text = request.last_user_text();
        let revised = extract_tag(&text, "revised").unwrap_or("");
        let verdict = if revised.contains("UNGROUNDED") {
            serde_json::json!({
                "pass": false,
                "issues": ["'UNGROUNDED detail': appears in neither the original comment nor the instruction"],
            })
        } else {
            serde_json::json!({ "pass": true, "issues": [] })
        };
        if self.param_flag("fenced") {
            format!("```json\n{verdict}\n```")
        } else {
            verdict.to_string()
        }
    }

    fn judge(&self, request: &ChatRequest) -> String {
        let text = request.last_user_text();
        let score = match self.params.get("score") {
            Some(fixed) => fixed.clone(),
            None => {
                let candidate = extract_tag(&text, "candidate").unwrap_or("");
                let reference = extract_tag(&text, "reference").unwrap_or("");
                let digest = sha256_hex(format!("{candidate}\u{0}{reference}").as_bytes());
                let byte = u8::from_str_radix(&digest[..2], 16).unwrap_or(0);
                format!("{}", 1 + byte % 5)
            }
        };
        if self.params.get("style").map(String::as_str) == Some("prose") {
            format!("Weighing coverage and accuracy, I would rate this candidate a {score} out of 5.")
        } else {
            format!("Score: {score}")
        }
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        self.log_call(call, request);
        let fail_at = self.params.get("fail_at").and_then(|v| v.parse::<usize>().ok());
        if fail_at == Some(call) {
            return Err(GatewayError::Endpoint {
                status: 503,
                message: format!("scripted failure at call {call}"),
            });
        }
        let content = match self.role {
            MockRole::Evaluator => self.evaluate(request),
            MockRole::Generator => self.generate(request),
            MockRole::InstructionRevisor => self.revise_instruction(request),
            MockRole::CommentRevisor => self.revise_comment(request),
            MockRole::Validator => self.validate(request),
            MockRole::Judge => self.judge(request),
        };
        Ok(ChatResponse {
            raw: serde_json::json!({ "mock": self.role.name(), "call": call }),
            content,
        })
    }
}

/// Scripted replies for tests: pops the next reply per call and logs every
/// request it sees.
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<ScriptedReply>>,
    requests: Mutex<Vec<String>>,
}

#[derive(Debug, Clone)]
pub enum ScriptedReply {
    Content(String),
    Error(u16, String),
}

impl ScriptedBackend {
    pub fn new(replies: Vec<ScriptedReply>) -> Self {
        Self {
            replies: Mutex::new(replies.into()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Serialized JSON of every request received, in order.
    pub fn requests(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().unwrap().len()
    }
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.requests
            .lock()
            .unwrap()
            .push(serde_json::to_string(request)?);
        let next = self.replies.lock().unwrap().pop_front();
        match next {
            Some(ScriptedReply::Content(content)) => Ok(ChatResponse {
                content,
                raw: serde_json::json!({ "scripted": true }),
            }),
            Some(ScriptedReply::Error(status, message)) => {
                Err(GatewayError::Endpoint { status, message })
            }
            None => Err(GatewayError::Endpoint {
                status: 599,
                message: "script exhausted".into(),
            }),
        }
    }
}
