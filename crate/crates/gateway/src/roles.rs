//! The agents that sit on top of the chat gateway.
//!
//! Each agent owns one prompt template, one endpoint, and the parsing of its
//! replies. They are thin by design: all retry/backoff behavior lives in the
//! backend, and all report parsing lives in the core schema module. What is
//! here is the role-specific glue — request assembly, reply validation, and
//! the one-shot format reminder the evaluator issues when a completion fails
//! to parse.

use crate::prompts::{
    wrap_tag, COMMENT_REVISOR, COMMENT_VALIDATOR, EVALUATOR_SYSTEM, INSTRUCTION_REVISOR,
    JUDGE_RUBRIC,
};
use crate::{
    backend_for, png_data_url, ChatBackend, ChatMessage, ChatRequest, ContentPart, EndpointConfig,
    GatewayError, ImageUrl,
};
use aigve_core::schema::{
    format_score, parse_report, Aspect, AspectReport, ParseWarning, ScoreBounds, SpanMap,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Scores a video (as sampled frames) against its instruction and returns
/// the parsed nine-aspect report.
pub struct EvaluatorAgent {
    backend: Arc<dyn ChatBackend>,
    model: String,
    bounds: ScoreBounds,
    temperature: f64,
    max_frames: usize,
}

/// A parsed evaluation plus everything needed to audit it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: AspectReport,
    pub spans: SpanMap,
    pub warnings: Vec<ParseWarning>,
    /// The raw completion the report was parsed from.
    pub completion: String,
    /// True when the first completion failed to parse and a format reminder
    /// was needed.
    pub reprompted: bool,
}

impl EvaluatorAgent {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            bounds: ScoreBounds::default(),
            temperature: 0.0,
            max_frames: 16,
        }
    }

    pub fn from_config(config: &EndpointConfig) -> Result<Self, GatewayError> {
        Ok(Self::new(backend_for(config)?, config.model.clone()))
    }

    pub fn with_bounds(mut self, bounds: ScoreBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_max_frames(mut self, max_frames: usize) -> Self {
        self.max_frames = max_frames;
        self
    }

    /// Sends the instruction and PNG-encoded frames for scoring. If the
    /// completion fails to parse, re-prompts once with the previous reply and
    /// a reminder of the required shape; a second failure is an error
    /// carrying the unparseable completion for offline inspection.
    pub async fn evaluate(
        &self,
        instruction: &str,
        frames_png: &[Vec<u8>],
    ) -> Result<Evaluation, GatewayError> {
        if frames_png.is_empty() {
            return Err(GatewayError::InvalidInput(
                "evaluation needs at least one frame".into(),
            ));
        }
        if frames_png.len() > self.max_frames {
            return Err(GatewayError::InvalidInput(format!(
                "{} frames exceed the budget of {}",
                frames_png.len(),
                self.max_frames
            )));
        }

        let mut parts = vec![ContentPart::Text {
            text: wrap_tag("instruction", instruction),
        }];
        parts.extend(frames_png.iter().map(|png| ContentPart::ImageUrl {
            image_url: ImageUrl {
                url: png_data_url(png),
            },
        }));
        let system = ChatMessage::system(EVALUATOR_SYSTEM.body);
        let user = ChatMessage::user_parts(parts);

        let request = ChatRequest::new(
            &self.model,
            vec![system.clone(), user.clone()],
            self.temperature,
        );
        let first = self.backend.complete(&request).await?;
        let first_error = match parse_report(&first.content, &self.bounds) {
            Ok(parsed) => {
                return Ok(Evaluation {
                    report: parsed.report,
                    spans: parsed.spans,
                    warnings: parsed.warnings,
                    completion: first.content,
                    reprompted: false,
                })
            }
            Err(e) => e,
        };

        let reminder = ChatMessage::user(format!(
            "Your previous reply could not be parsed: {first_error}. Reply again with \
             only the JSON object — all nine aspect keys, each holding a \"comment\" \
             string followed by a \"score\" number."
        ));
        let retry_request = ChatRequest::new(
            &self.model,
            vec![
                system,
                user,
                ChatMessage::assistant(first.content),
                reminder,
            ],
            self.temperature,
        );
        let second = self.backend.complete(&retry_request).await?;
        match parse_report(&second.content, &self.bounds) {
            Ok(parsed) => Ok(Evaluation {
                report: parsed.report,
                spans: parsed.spans,
                warnings: parsed.warnings,
                completion: second.content,
                reprompted: true,
            }),
            Err(e) => Err(GatewayError::ParseFailedTwice {
                last_error: e.to_string(),
                completion: second.content,
            }),
        }
    }
}

/// Turns an instruction into a video, returning a reference to the result.
pub struct GeneratorAgent {
    backend: Arc<dyn ChatBackend>,
    model: String,
    temperature: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratedVideo {
    /// URL, path, or opaque handle the generation endpoint returned.
    pub video_ref: String,
    /// Any extra fields the endpoint sent alongside the reference.
    pub metadata: serde_json::Value,
}

impl GeneratorAgent {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            temperature: 0.0,
        }
    }

    pub fn from_config(config: &EndpointConfig) -> Result<Self, GatewayError> {
        Ok(Self::new(backend_for(config)?, config.model.clone()))
    }

    /// The instruction is passed through verbatim — generation endpoints
    /// define their own conditioning, so no template is applied.
    pub async fn generate(&self, instruction: &str) -> Result<GeneratedVideo, GatewayError> {
        if instruction.trim().is_empty() {
            return Err(GatewayError::InvalidInput(
                "generation instruction is blank".into(),
            ));
        }
        let request = ChatRequest::new(
            &self.model,
            vec![ChatMessage::user(instruction)],
            self.temperature,
        );
        let response = match self.backend.complete(&request).await {
            Ok(response) => response,
            Err(GatewayError::Timeout { .. }) => return Err(GatewayError::GenerationTimeout),
            Err(e) => return Err(e),
        };
        let content = response.content.trim();
        if content.is_empty() {
            return Err(GatewayError::MalformedResponse(
                "generation endpoint returned empty content".into(),
            ));
        }
        if content.starts_with('{') {
            let value: serde_json::Value = serde_json::from_str(content).map_err(|e| {
                GatewayError::MalformedResponse(format!("generation reply is not valid JSON: {e}"))
            })?;
            let video_ref = ["video", "url", "path"]
                .iter()
                .find_map(|key| value.get(key).and_then(|v| v.as_str()))
                .ok_or_else(|| {
                    GatewayError::MalformedResponse(
                        "generation reply carries no video/url/path field".into(),
                    )
                })?
                .to_string();
            return Ok(GeneratedVideo {
                video_ref,
                metadata: value,
            });
        }
        Ok(GeneratedVideo {
            video_ref: content.to_string(),
            metadata: serde_json::Value::Null,
        })
    }
}

/// Rewrites a generation instruction using the evaluator's feedback.
pub struct InstructionRevisorAgent {
    backend: Arc<dyn ChatBackend>,
    model: String,
    temperature: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RevisedInstruction {
    pub text: String,
    /// True when the endpoint returned the instruction verbatim, which
    /// callers may treat as a refinement fixed point.
    pub unchanged: bool,
}

impl InstructionRevisorAgent {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            temperature: 0.7,
        }
    }

    pub fn from_config(config: &EndpointConfig) -> Result<Self, GatewayError> {
        Ok(Self::new(backend_for(config)?, config.model.clone()))
    }

    /// Feedback is passed complete: all nine comments verbatim, each tagged
    /// with its aspect and score, so the endpoint sees exactly what the
    /// evaluator said.
    pub async fn revise(
        &self,
        instruction: &str,
        report: &AspectReport,
    ) -> Result<RevisedInstruction, GatewayError> {
        let feedback = Aspect::ALL
            .iter()
            .map(|&aspect| {
                let entry = report.entry(aspect);
                format!(
                    "<aspect name=\"{}\" score=\"{}\">\n{}\n</aspect>",
                    aspect.key(),
                    format_score(entry.score),
                    entry.comment,
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        let user = format!(
            "{}\n{}",
            wrap_tag("instruction", instruction),
            wrap_tag("feedback", &feedback)
        );
        let request = ChatRequest::new(
            &self.model,
            vec![
                ChatMessage::system(INSTRUCTION_REVISOR.body),
                ChatMessage::user(user),
            ],
            self.temperature,
        );
        let response = self.backend.complete(&request).await?;
        let text = response.content.trim().to_string();
        if text.is_empty() {
            return Err(GatewayError::EmptyRevision);
        }
        let unchanged = text == instruction.trim();
        Ok(RevisedInstruction { text, unchanged })
    }
}

/// Rewrites one aspect comment for tone and clarity without changing what it
/// claims about the video.
pub struct CommentRevisorAgent {
    backend: Arc<dyn ChatBackend>,
    model: String,
    temperature: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RevisedComment {
    pub original: String,
    pub revised: String,
}

impl CommentRevisorAgent {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            temperature: 0.7,
        }
    }

    pub fn from_config(config: &EndpointConfig) -> Result<Self, GatewayError> {
        Ok(Self::new(backend_for(config)?, config.model.clone()))
    }

    pub async fn revise(
        &self,
        instruction: &str,
        aspect: Aspect,
        scores: &BTreeMap<Aspect, f64>,
        original: &str,
    ) -> Result<RevisedComment, GatewayError> {
        if original.trim().is_empty() {
            return Err(GatewayError::InvalidInput(
                "comment to revise is blank".into(),
            ));
        }
        let user = [
            wrap_tag("instruction", instruction),
            wrap_tag("aspect", aspect.key()),
            wrap_tag("scores", &serde_json::to_string(scores)?),
            wrap_tag("original", original),
        ]
        .join("\n");
        let request = ChatRequest::new(
            &self.model,
            vec![
                ChatMessage::system(COMMENT_REVISOR.body),
                ChatMessage::user(user),
            ],
            self.temperature,
        );
        let response = self.backend.complete(&request).await?;
        let revised = response.content.trim().to_string();
        if revised.is_empty() {
            return Err(GatewayError::EmptyRevision);
        }
        Ok(RevisedComment {
            original: original.to_string(),
            revised,
        })
    }
}

/// Checks that a revised comment stays grounded in the original.
pub struct CommentValidatorAgent {
    backend: Arc<dyn ChatBackend>,
    model: String,
    temperature: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CommentVerdict {
    pub pass: bool,
    pub issues: Vec<String>,
    /// True when the revision was byte-identical to the original and the
    /// endpoint was never consulted.
    pub identical: bool,
}

#[derive(Deserialize)]
struct VerdictJson {
    pass: bool,
    #[serde(default)]
    issues: Vec<String>,
}

impl CommentValidatorAgent {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            temperature: 0.0,
        }
    }

    pub fn from_config(config: &EndpointConfig) -> Result<Self, GatewayError> {
        Ok(Self::new(backend_for(config)?, config.model.clone()))
    }

    pub async fn validate(
        &self,
        instruction: &str,
        original: &str,
        revised: &str,
    ) -> Result<CommentVerdict, GatewayError> {
        if revised.trim() == original.trim() {
            return Ok(CommentVerdict {
                pass: true,
                issues: Vec::new(),
                identical: true,
            });
        }
        let user = [
            wrap_tag("instruction", instruction),
            wrap_tag("original", original),
            wrap_tag("revised", revised),
        ]
        .join("\n");
        let request = ChatRequest::new(
            &self.model,
            vec![
                ChatMessage::system(COMMENT_VALIDATOR.body),
                ChatMessage::user(user),
            ],
            self.temperature,
        );
        let response = self.backend.complete(&request).await?;
        let content = &response.content;
        let object = match (content.find('{'), content.rfind('}')) {
            (Some(open), Some(close)) if open < close => &content[open..=close],
            _ => return Err(GatewayError::UnparseableVerdict(content.clone())),
        };
        let verdict: VerdictJson = serde_json::from_str(object)
            .map_err(|_| GatewayError::UnparseableVerdict(content.clone()))?;
        Ok(CommentVerdict {
            pass: verdict.pass,
            issues: verdict.issues,
            identical: false,
        })
    }
}

/// Scores a candidate comment against a reference on a 1-5 rubric.
pub struct JudgeAgent {
    backend: Arc<dyn ChatBackend>,
    model: String,
    temperature: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JudgeScore {
    pub score: f64,
    /// The completion the score was read from.
    pub raw: String,
    /// True when the first completion carried no readable score and the
    /// request was reissued.
    pub retried: bool,
}

impl JudgeAgent {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            temperature: 0.0,
        }
    }

    pub fn from_config(config: &EndpointConfig) -> Result<Self, GatewayError> {
        Ok(Self::new(backend_for(config)?, config.model.clone()))
    }

    pub async fn judge(
        &self,
        instruction: &str,
        reference: &str,
        candidate: &str,
    ) -> Result<JudgeScore, GatewayError> {
        let user = [
            wrap_tag("instruction", instruction),
            wrap_tag("reference", reference),
            wrap_tag("candidate", candidate),
        ]
        .join("\n");
        let request = ChatRequest::new(
            &self.model,
            vec![
                ChatMessage::system(JUDGE_RUBRIC.body),
                ChatMessage::user(user),
            ],
            self.temperature,
        );
        let first = self.backend.complete(&request).await?;
        if let Some(score) = parse_judge_score(&first.content) {
            return Ok(JudgeScore {
                score,
                raw: first.content,
                retried: false,
            });
        }
        let second = self.backend.complete(&request).await?;
        match parse_judge_score(&second.content) {
            Some(score) => Ok(JudgeScore {
                score,
                raw: second.content,
                retried: true,
            }),
            None => Err(GatewayError::UnparseableVerdict(second.content)),
        }
    }
}

/// Reads a 1-5 score out of a judge completion. Accepts the rubric's
/// `Score: N` shape first, then `N out of 5` / `N/5` phrasings, then a lone
/// number anywhere in the text. Anything outside 1..=5 — or genuinely
/// ambiguous text — is rejected rather than guessed at.
pub fn parse_judge_score(text: &str) -> Option<f64> {
    let numbers = extract_numbers(text);
    if numbers.is_empty() {
        return None;
    }
    let in_range = |value: f64| (1.0..=5.0).contains(&value).then_some(value);

    if let Some(keyword) = find_ascii_ci(text, "score") {
        let after = keyword + "score".len();
        if let Some(&(value, _, _)) = numbers.iter().find(|&&(_, start, _)| start >= after) {
            return in_range(value);
        }
    }
    for &(value, _, end) in &numbers {
        let tail = text[end..].trim_start();
        if tail.starts_with('/') || starts_with_ascii_ci(tail, "out of") {
            return in_range(value);
        }
    }
    if let [(value, _, _)] = numbers[..] {
        return in_range(value);
    }
    None
}

/// Decimal numbers in the text as `(value, start, end)` byte ranges.
fn extract_numbers(text: &str) -> Vec<(f64, usize, usize)> {
    let bytes = text.as_bytes();
    let mut numbers = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if let Ok(value) = text[start..i].parse() {
                numbers.push((value, start, i));
            }
        } else {
            i += 1;
        }
    }
    numbers
}

fn find_ascii_ci(haystack: &str, needle: &str) -> Option<usize> {
    let haystack = haystack.as_bytes();
    let needle = needle.as_bytes();
    if needle.is_empty() || haystack.len() < needle.len() {
        return None;
    }
    haystack
        .windows(needle.len())
        .position(|window| window.eq_ignore_ascii_case(needle))
}

fn starts_with_ascii_ci(text: &str, prefix: &str) -> bool {
    text.len() >= prefix.len() && text.as_bytes()[..prefix.len()].eq_ignore_ascii_case(prefix.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::{ScriptedBackend, ScriptedReply};
    use aigve_core::schema::{serialize_report, AspectEntry};
    use async_trait::async_trait;

    fn sample_report() -> AspectReport {
        let entries: BTreeMap<Aspect, AspectEntry> = Aspect::ALL
            .into_iter()
            .enumerate()
            .map(|(i, aspect)| {
                (
                    aspect,
                    AspectEntry {
                        comment: format!("Observation about {} in the clip.", aspect.key()),
                        score: (i % 5) as f64 + 0.5,
                    },
                )
            })
            .collect();
        AspectReport::new(entries, &ScoreBounds::default()).unwrap()
    }

    #[test]
    fn judge_score_parsing_covers_the_reply_shapes() {
        assert_eq!(parse_judge_score("Score: 4"), Some(4.0));
        assert_eq!(parse_judge_score("score = 3.5"), Some(3.5));
        assert_eq!(parse_judge_score("SCORE\n2"), Some(2.0));
        assert_eq!(
            parse_judge_score("I would rate this candidate a 4 out of 5."),
            Some(4.0)
        );
        assert_eq!(parse_judge_score("Verdict: 3/5, solid coverage."), Some(3.0));
        assert_eq!(parse_judge_score("The comment deserves a 5."), Some(5.0));
        assert_eq!(parse_judge_score("Score: 9"), None);
        assert_eq!(parse_judge_score("no digits here"), None);
        assert_eq!(parse_judge_score("maybe 2, maybe 4"), None);
    }

    #[tokio::test]
    async fn evaluator_reprompts_once_then_succeeds() {
        let valid = serialize_report(&sample_report());
        let scripted = Arc::new(ScriptedBackend::new(vec![
            ScriptedReply::Content("I cannot rate this video.".into()),
            ScriptedReply::Content(valid),
        ]));
        let agent = EvaluatorAgent::new(scripted.clone(), "eval-model");
        let evaluation = agent
            .evaluate("a dog runs", &[vec![1, 2, 3]])
            .await
            .unwrap();
        assert!(evaluation.reprompted);
        assert_eq!(evaluation.report, sample_report());

        let requests = scripted.requests();
        assert_eq!(requests.len(), 2);
        let retry: serde_json::Value = serde_json::from_str(&requests[1]).unwrap();
        let messages = retry["messages"].as_array().unwrap();
        assert_eq!(messages.len(), 4);
        assert_eq!(messages[2]["role"], "assistant");
        assert!(messages[3]["content"]
            .as_str()
            .unwrap()
            .contains("could not be parsed"));
    }

    #[tokio::test]
    async fn evaluator_gives_up_after_second_parse_failure() {
        let scripted = Arc::new(ScriptedBackend::new(vec![
            ScriptedReply::Content("nope".into()),
            ScriptedReply::Content("still nope".into()),
        ]));
        let agent = EvaluatorAgent::new(scripted, "eval-model");
        let err = agent
            .evaluate("a dog runs", &[vec![0]])
            .await
            .unwrap_err();
        match err {
            GatewayError::ParseFailedTwice { completion, .. } => {
                assert_eq!(completion, "still nope")
            }
            other => panic!("expected ParseFailedTwice, got {other:?}"),
        }
    }

    #[tokio::test]
    async fn evaluator_enforces_the_frame_budget() {
        let scripted = Arc::new(ScriptedBackend::new(vec![]));
        let agent = EvaluatorAgent::new(scripted.clone(), "m").with_max_frames(4);
        assert!(matches!(
            agent.evaluate("x", &[]).await.unwrap_err(),
            GatewayError::InvalidInput(_)
        ));
        let too_many = vec![vec![0u8]; 5];
        assert!(matches!(
            agent.evaluate("x", &too_many).await.unwrap_err(),
            GatewayError::InvalidInput(_)
        ));
        assert!(scripted.requests().is_empty());
    }

    #[tokio::test]
    async fn generator_handles_text_json_and_empty_replies() {
        let scripted = Arc::new(ScriptedBackend::new(vec![
            ScriptedReply::Content("  https://cdn/video.mp4  ".into()),
            ScriptedReply::Content(r#"{"video": "out/v1.mp4", "duration_s": 4}"#.into()),
            ScriptedReply::Content("   ".into()),
        ]));
        let agent = GeneratorAgent::new(scripted, "gen-model");
        assert_eq!(
            agent.generate("a dog").await.unwrap().video_ref,
            "https://cdn/video.mp4"
        );
        let from_json = agent.generate("a dog").await.unwrap();
        assert_eq!(from_json.video_ref, "out/v1.mp4");
        assert_eq!(from_json.metadata["duration_s"], 4);
        assert!(matches!(
            agent.generate("a dog").await.unwrap_err(),
            GatewayError::MalformedResponse(_)
        ));
        assert!(matches!(
            agent.generate("   ").await.unwrap_err(),
            GatewayError::InvalidInput(_)
        ));
    }

    struct AlwaysTimesOut;

    #[async_trait]
    impl ChatBackend for AlwaysTimesOut {
        async fn complete(&self, _request: &ChatRequest) -> Result<crate::ChatResponse, GatewayError> {
            Err(GatewayError::Timeout { attempts: 3 })
        }
    }

    #[tokio::test]
    async fn generator_maps_timeouts_to_generation_timeout() {
        let agent = GeneratorAgent::new(Arc::new(AlwaysTimesOut), "gen-model");
        assert!(matches!(
            agent.generate("a dog").await.unwrap_err(),
            GatewayError::GenerationTimeout
        ));
    }

    #[tokio::test]
    async fn instruction_revisor_sends_every_comment_verbatim() {
        let report = sample_report();
        let scripted = Arc::new(ScriptedBackend::new(vec![ScriptedReply::Content(
            "A dog runs across a field, fur visibly ruffled by wind.".into(),
        )]));
        let agent = InstructionRevisorAgent::new(scripted.clone(), "rev-model");
        let revised = agent.revise("a dog runs", &report).await.unwrap();
        assert!(!revised.unchanged);

        let request = scripted.requests().remove(0);
        for aspect in Aspect::ALL {
            let entry = report.entry(aspect);
            assert!(
                request.contains(&entry.comment),
                "comment for {} missing from the request",
                aspect.key()
            );
        }
        let overall = report.entry(Aspect::Overall).score;
        let expected_attr = format!("name=\\\"overall\\\" score=\\\"{}\\\"", format_score(overall));
        assert!(request.contains(&expected_attr));
    }

    #[tokio::test]
    async fn instruction_revisor_flags_fixed_points_and_empty_replies() {
        let report = sample_report();
        let scripted = Arc::new(ScriptedBackend::new(vec![
            ScriptedReply::Content("a dog runs".into()),
            ScriptedReply::Content("\n  \n".into()),
        ]));
        let agent = InstructionRevisorAgent::new(scripted, "rev-model");
        assert!(agent.revise("a dog runs", &report).await.unwrap().unchanged);
        assert!(matches!(
            agent.revise("a dog runs", &report).await.unwrap_err(),
            GatewayError::EmptyRevision
        ));
    }

    #[tokio::test]
    async fn validator_short_circuits_identical_revisions() {
        let scripted = Arc::new(ScriptedBackend::new(vec![]));
        let agent = CommentValidatorAgent::new(scripted.clone(), "val-model");
        let verdict = agent
            .validate("instr", "same comment", "  same comment ")
            .await
            .unwrap();
        assert!(verdict.pass && verdict.identical);
        assert!(scripted.requests().is_empty());
    }

    #[tokio::test]
    async fn validator_reads_fenced_and_bare_verdicts() {
        let scripted = Arc::new(ScriptedBackend::new(vec![
            ScriptedReply::Content("```json\n{\"pass\": false, \"issues\": [\"made up a bird\"]}\n```".into()),
            ScriptedReply::Content("{\"pass\": true}".into()),
            ScriptedReply::Content("definitely fine".into()),
        ]));
        let agent = CommentValidatorAgent::new(scripted, "val-model");
        let verdict = agent.validate("i", "orig", "rev one").await.unwrap();
        assert!(!verdict.pass);
        assert_eq!(verdict.issues, vec!["made up a bird"]);
        let verdict = agent.validate("i", "orig", "rev two").await.unwrap();
        assert!(verdict.pass && verdict.issues.is_empty() && !verdict.identical);
        assert!(matches!(
            agent.validate("i", "orig", "rev three").await.unwrap_err(),
            GatewayError::UnparseableVerdict(_)
        ));
    }

    #[tokio::test]
    async fn judge_retries_once_on_unreadable_scores() {
        let scripted = Arc::new(ScriptedBackend::new(vec![
            ScriptedReply::Content("I find this comment adequate.".into()),
            ScriptedReply::Content("Score: 4".into()),
        ]));
        let agent = JudgeAgent::new(scripted.clone(), "judge-model");
        let result = agent.judge("i", "ref", "cand").await.unwrap();
        assert_eq!(result.score, 4.0);
        assert!(result.retried);
        let requests = scripted.requests();
        assert_eq!(requests.len(), 2);
        assert_eq!(requests[0], requests[1]);

        let scripted = Arc::new(ScriptedBackend::new(vec![
            ScriptedReply::Content("hmm".into()),
            ScriptedReply::Content("still hmm".into()),
        ]));
        let agent = JudgeAgent::new(scripted, "judge-model");
        assert!(matches!(
            agent.judge("i", "ref", "cand").await.unwrap_err(),
            GatewayError::UnparseableVerdict(_)
        ));
    }
}
