//! Nine-aspect evaluation reports.
//!
//! A report scores a generated video on nine fixed aspects; every aspect
//! carries a free-text justification comment and a numeric score. Reports are
//! exchanged as JSON objects keyed by the aspect names in a fixed canonical
//! order, with the comment serialized before the score inside each aspect so
//! that an autoregressive model must justify before it rates.
//!
//! Parsing ([`parse_report`]) is strict about the object shape but tolerant
//! of the usual chat-completion wrappers (a code fence, prose before or after
//! the object). It also reports the byte span of every comment and score in
//! the raw completion via [`SpanMap`], which is what the weight-mask builder
//! consumes.

mod parse;

pub use parse::{parse_report, Parsed};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// The nine evaluation aspects, in canonical report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Aspect {
    /// Resolution, color fidelity, absence of noise and codec artifacts.
    TechnicalQuality,
    /// Amount and significance of motion or environmental change.
    Dynamics,
    /// Stability of object identity and appearance over time.
    Consistency,
    /// Plausibility of motion, contact, lighting and other physical behavior.
    Physics,
    /// Whether the objects requested by the instruction appear at all.
    ElementPresence,
    /// Realism and detail of the objects that do appear.
    ElementQuality,
    /// Whether the requested actions or interactions appear at all.
    ActionPresence,
    /// Naturalness and smoothness of the actions that do appear.
    ActionQuality,
    /// Holistic quality of the video.
    Overall,
}

impl Aspect {
    /// All aspects in canonical serialization order.
    pub const ALL: [Aspect; 9] = [
        Aspect::TechnicalQuality,
        Aspect::Dynamics,
        Aspect::Consistency,
        Aspect::Physics,
        Aspect::ElementPresence,
        Aspect::ElementQuality,
        Aspect::ActionPresence,
        Aspect::ActionQuality,
        Aspect::Overall,
    ];

    /// The JSON object key for this aspect.
    pub fn key(self) -> &'static str {
        match self {
            Aspect::TechnicalQuality => "technical_quality",
            Aspect::Dynamics => "dynamics",
            Aspect::Consistency => "consistency",
            Aspect::Physics => "physics",
            Aspect::ElementPresence => "element_presence",
            Aspect::ElementQuality => "element_quality",
            Aspect::ActionPresence => "action_presence",
            Aspect::ActionQuality => "action_quality",
            Aspect::Overall => "overall",
        }
    }

    /// Human-readable name for tables and report headers.
    pub fn display_name(self) -> &'static str {
        match self {
            Aspect::TechnicalQuality => "Technical Quality",
            Aspect::Dynamics => "Dynamics",
            Aspect::Consistency => "Consistency",
            Aspect::Physics => "Physics",
            Aspect::ElementPresence => "Element Presence",
            Aspect::ElementQuality => "Element Quality",
            Aspect::ActionPresence => "Action Presence",
            Aspect::ActionQuality => "Action Quality",
            Aspect::Overall => "Overall",
        }
    }

    /// Inverse of [`Aspect::key`].
    pub fn from_key(key: &str) -> Option<Aspect> {
        Aspect::ALL.into_iter().find(|a| a.key() == key)
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl Serialize for Aspect {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for Aspect {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let key = String::deserialize(deserializer)?;
        Aspect::from_key(&key)
            .ok_or_else(|| D::Error::custom(format!("unknown aspect key '{key}'")))
    }
}

/// Inclusive score range accepted by parsing and validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for ScoreBounds {
    fn default() -> Self {
        Self { min: 0.0, max: 5.0 }
    }
}

impl ScoreBounds {
    pub fn new(min: f64, max: f64) -> Result<Self, BuildError> {
        if !min.is_finite() || !max.is_finite() || min >= max {
            return Err(BuildError::InvalidBounds { min, max });
        }
        Ok(Self { min, max })
    }

    /// True when `score` is finite and inside the inclusive range.
    pub fn contains(&self, score: f64) -> bool {
        score.is_finite() && score >= self.min && score <= self.max
    }
}

/// One aspect's comment and score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectEntry {
    pub comment: String,
    pub score: f64,
}

/// A complete nine-aspect report.
///
/// Construction guarantees that all nine aspects are present, every score is
/// finite and within bounds, and no comment is blank. `raw_text` preserves
/// the exact text the report was parsed from (or the canonical serialization
/// when built programmatically); it is provenance only and does not take part
/// in equality.
#[derive(Debug, Clone)]
pub struct AspectReport {
    entries: BTreeMap<Aspect, AspectEntry>,
    raw_text: String,
}

impl PartialEq for AspectReport {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl AspectReport {
    /// Builds a report from entries, validating completeness and bounds.
    pub fn new(
        entries: BTreeMap<Aspect, AspectEntry>,
        bounds: &ScoreBounds,
    ) -> Result<Self, BuildError> {
        for aspect in Aspect::ALL {
            let entry = entries
                .get(&aspect)
                .ok_or(BuildError::MissingAspect(aspect))?;
            if !bounds.contains(entry.score) {
                return Err(BuildError::ScoreOutOfRange {
                    aspect,
                    value: entry.score,
                });
            }
            if entry.comment.trim().is_empty() {
                return Err(BuildError::EmptyComment(aspect));
            }
        }
        let raw_text = render_entries(&entries);
        Ok(Self { entries, raw_text })
    }

    /// Used by the parser, which has already validated the entries and keeps
    /// the original completion text as provenance.
    pub(crate) fn from_parsed(entries: BTreeMap<Aspect, AspectEntry>, raw_text: String) -> Self {
        Self { entries, raw_text }
    }

    /// The entry for `aspect`. Completeness is a construction invariant, so
    /// this never fails.
    pub fn entry(&self, aspect: Aspect) -> &AspectEntry {
        self.entries
            .get(&aspect)
            .expect("reports always carry all nine aspects")
    }

    pub fn entries(&self) -> &BTreeMap<Aspect, AspectEntry> {
        &self.entries
    }

    /// Just the scores, keyed by aspect.
    pub fn scores(&self) -> BTreeMap<Aspect, f64> {
        self.entries
            .iter()
            .map(|(aspect, entry)| (*aspect, entry.score))
            .collect()
    }

    /// Just the comments, keyed by aspect.
    pub fn comments(&self) -> BTreeMap<Aspect, String> {
        self.entries
            .iter()
            .map(|(aspect, entry)| (*aspect, entry.comment.clone()))
            .collect()
    }

    pub fn overall_score(&self) -> f64 {
        self.entry(Aspect::Overall).score
    }

    /// The text this report was parsed from, verbatim.
    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }
}

impl Serialize for AspectReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.entries.serialize(serializer)
    }
}

/// Renders a score the way reports are expected to carry it: integral values
/// keep one decimal place (`4.0`), everything else uses the shortest exact
/// decimal form.
pub fn format_score(score: f64) -> String {
    if score.fract() == 0.0 {
        format!("{score:.1}")
    } else {
        format!("{score}")
    }
}

/// Canonical serialization: aspects in [`Aspect::ALL`] order, comment before
/// score, two-space indentation. `parse_report` of the output round-trips to
/// an equal report.
pub fn serialize_report(report: &AspectReport) -> String {
    render_entries(report.entries())
}

fn render_entries(entries: &BTreeMap<Aspect, AspectEntry>) -> String {
    let mut out = String::from("{\n");
    for (i, aspect) in Aspect::ALL.iter().enumerate() {
        let entry = entries
            .get(aspect)
            .expect("render_entries requires complete entries");
        let comment =
            serde_json::to_string(&entry.comment).expect("string serialization cannot fail");
        out.push_str("  \"");
        out.push_str(aspect.key());
        out.push_str("\": {\n    \"comment\": ");
        out.push_str(&comment);
        out.push_str(",\n    \"score\": ");
        out.push_str(&format_score(entry.score));
        out.push_str("\n  }");
        if i + 1 < Aspect::ALL.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push('}');
    out
}

/// Errors from building a report programmatically.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error("missing aspect '{0}'")]
    MissingAspect(Aspect),
    #[error("score {value} out of range for aspect '{aspect}'")]
    ScoreOutOfRange { aspect: Aspect, value: f64 },
    #[error("empty comment for aspect '{0}'")]
    EmptyComment(Aspect),
    #[error("invalid score bounds [{min}, {max}]")]
    InvalidBounds { min: f64, max: f64 },
}

/// Errors from parsing a model completion into a report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    /// The object parsed but a required aspect key never appeared.
    #[error("missing aspect '{0}'")]
    MissingAspect(String),
    /// A score parsed as a number but violates the configured bounds.
    #[error("score {value} for aspect '{aspect}' at byte {offset} is outside [{min}, {max}]")]
    ScoreOutOfRange {
        aspect: Aspect,
        value: f64,
        min: f64,
        max: f64,
        offset: usize,
    },
    /// Anything structurally wrong: bad JSON, unknown keys, empty comments.
    #[error("malformed report at byte {offset}: {message}")]
    MalformedStructure { offset: usize, message: String },
}

/// Recoverable oddities noticed while parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum ParseWarning {
    /// The same aspect appeared more than once; the last occurrence wins.
    DuplicateAspect { aspect: Aspect, offset: usize },
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseWarning::DuplicateAspect { aspect, offset } => {
                write!(f, "duplicate aspect '{aspect}' at byte {offset}; keeping the last")
            }
        }
    }
}

/// What a byte range of the raw completion contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanLabel {
    /// Inside the comment string literal for this aspect (between the quotes).
    Comment(Aspect),
    /// The score number literal for this aspect.
    Score(Aspect),
    /// Everything else: braces, keys, quotes, whitespace, fences, prose.
    Structure,
}

/// A half-open byte range `[start, end)` with its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: SpanLabel,
}

/// Exhaustive, non-overlapping labeling of a raw completion.
///
/// Spans are sorted by start offset and cover every byte of the text exactly
/// once, so downstream consumers can map any byte range onto labels without
/// gaps or ambiguity.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanMap {
    spans: Vec<Span>,
    text_len: usize,
}

impl SpanMap {
    /// Sorts the labeled spans and fills every gap with `Structure`.
    pub(crate) fn from_labeled(mut labeled: Vec<Span>, text_len: usize) -> Self {
        labeled.sort_by_key(|span| span.start);
        let mut spans = Vec::with_capacity(labeled.len() * 2 + 1);
        let mut cursor = 0;
        for span in labeled {
            debug_assert!(span.start >= cursor, "labeled spans must not overlap");
            debug_assert!(span.end <= text_len);
            if span.start > cursor {
                spans.push(Span {
                    start: cursor,
                    end: span.start,
                    label: SpanLabel::Structure,
                });
            }
            cursor = span.end;
            spans.push(span);
        }
        if cursor < text_len {
            spans.push(Span {
                start: cursor,
                end: text_len,
                label: SpanLabel::Structure,
            });
        }
        Self { spans, text_len }
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    /// Length of the text this map labels.
    pub fn text_len(&self) -> usize {
        self.text_len
    }

    /// The comment span for `aspect`, if the text contains one.
    pub fn comment_span(&self, aspect: Aspect) -> Option<Span> {
        self.spans
            .iter()
            .copied()
            .find(|span| span.label == SpanLabel::Comment(aspect))
    }

    /// The score span for `aspect`, if the text contains one.
    pub fn score_span(&self, aspect: Aspect) -> Option<Span> {
        self.spans
            .iter()
            .copied()
            .find(|span| span.label == SpanLabel::Score(aspect))
    }

    /// All spans intersecting the half-open byte range `[start, end)`.
    pub fn spans_overlapping(&self, start: usize, end: usize) -> &[Span] {
        if start >= end || start >= self.text_len {
            return &[];
        }
        let lo = self.spans.partition_point(|span| span.end <= start);
        let hi = self.spans.partition_point(|span| span.start < end);
        &self.spans[lo.min(hi)..hi]
    }

    /// True when the spans are sorted, non-overlapping, non-empty, and cover
    /// `[0, text_len)` exactly. Exposed for tests.
    pub fn is_exact_cover(&self) -> bool {
        let mut cursor = 0;
        for span in &self.spans {
            if span.start != cursor || span.end <= span.start {
                return false;
            }
            cursor = span.end;
        }
        cursor == self.text_len
    }
}

/// One labeled dataset row: a video, the instruction it was generated from,
/// and human scores and comments for all nine aspects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub video_id: String,
    pub instruction: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub generator_model: String,
    pub scores: BTreeMap<Aspect, f64>,
    pub comments: BTreeMap<Aspect, String>,
    /// Optional path to the source video, relative to a dataset root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_path: Option<String>,
}

/// A model's predicted report for one video, aligned to [`EvalRecord`] by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub scores: BTreeMap<Aspect, f64>,
    #[serde(default)]
    pub comments: BTreeMap<Aspect, String>,
}

impl PredictionRecord {
    pub fn from_report(video_id: impl Into<String>, report: &AspectReport) -> Self {
        Self {
            video_id: video_id.into(),
            scores: report.scores(),
            comments: report
                .entries()
                .iter()
                .map(|(aspect, entry)| (*aspect, entry.comment.clone()))
                .collect(),
        }
    }
}

/// A single problem found by [`validate_record`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    EmptyVideoId,
    EmptyInstruction,
    MissingScore { aspect: Aspect },
    ScoreOutOfRange { aspect: Aspect, value: f64 },
    MissingComment { aspect: Aspect },
    EmptyComment { aspect: Aspect },
    UnresolvedVideo { path: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyVideoId => write!(f, "empty video_id"),
            Violation::EmptyInstruction => write!(f, "empty instruction"),
            Violation::MissingScore { aspect } => write!(f, "missing score for '{aspect}'"),
            Violation::ScoreOutOfRange { aspect, value } => {
                write!(f, "score {value} for '{aspect}' is out of range")
            }
            Violation::MissingComment { aspect } => write!(f, "missing comment for '{aspect}'"),
            Violation::EmptyComment { aspect } => write!(f, "empty comment for '{aspect}'"),
            Violation::UnresolvedVideo { path } => {
                write!(f, "video reference '{path}' does not resolve")
            }
        }
    }
}

/// Checks one dataset row for completeness: all nine scores within bounds,
/// all nine comments non-blank, non-empty id and instruction. When
/// `video_root` is given and the record carries a `video_path`, the path must
/// exist under the root. Returns every violation found, empty when clean.
pub fn validate_record(
    record: &EvalRecord,
    bounds: &ScoreBounds,
    video_root: Option<&Path>,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    if record.video_id.trim().is_empty() {
        violations.push(Violation::EmptyVideoId);
    }
    if record.instruction.trim().is_empty() {
        violations.push(Violation::EmptyInstruction);
    }
    for aspect in Aspect::ALL {
        match record.scores.get(&aspect) {
            None => violations.push(Violation::MissingScore { aspect }),
            Some(&value) if !bounds.contains(value) => {
                violations.push(Violation::ScoreOutOfRange { aspect, value });
            }
            Some(_) => {}
        }
        match record.comments.get(&aspect) {
            None => violations.push(Violation::MissingComment { aspect }),
            Some(comment) if comment.trim().is_empty() => {
                violations.push(Violation::EmptyComment { aspect });
            }
            Some(_) => {}
        }
    }
    if let (Some(root), Some(path)) = (video_root, record.video_path.as_deref()) {
        if !root.join(path).exists() {
            violations.push(Violation::UnresolvedVideo {
                path: path.to_string(),
            });
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_entries() -> BTreeMap<Aspect, AspectEntry> {
        Aspect::ALL
            .into_iter()
            .enumerate()
            .map(|(i, aspect)| {
                (
                    aspect,
                    AspectEntry {
                        comment: format!("The {} held up well in most frames.", aspect.key()),
                        score: 3.0 + (i as f64) * 0.25,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn aspect_keys_round_trip() {
        for aspect in Aspect::ALL {
            assert_eq!(Aspect::from_key(aspect.key()), Some(aspect));
        }
        assert_eq!(Aspect::from_key("colour"), None);
    }

    #[test]
    fn canonical_order_is_stable() {
        let keys: Vec<&str> = Aspect::ALL.iter().map(|a| a.key()).collect();
        assert_eq!(
            keys,
            [
                "technical_quality",
                "dynamics",
                "consistency",
                "physics",
                "element_presence",
                "element_quality",
                "action_presence",
                "action_quality",
                "overall",
            ]
        );
    }

    #[test]
    fn format_score_keeps_integral_decimals() {
        assert_eq!(format_score(4.0), "4.0");
        assert_eq!(format_score(0.0), "0.0");
        assert_eq!(format_score(3.25), "3.25");
        assert_eq!(format_score(2.5), "2.5");
    }

    #[test]
    fn new_rejects_missing_aspect() {
        let mut entries = sample_entries();
        entries.remove(&Aspect::Physics);
        let err = AspectReport::new(entries, &ScoreBounds::default()).unwrap_err();
        assert_eq!(err, BuildError::MissingAspect(Aspect::Physics));
    }

    #[test]
    fn new_rejects_out_of_range_score() {
        let mut entries = sample_entries();
        entries.get_mut(&Aspect::Overall).unwrap().score = 5.5;
        let err = AspectReport::new(entries, &ScoreBounds::default()).unwrap_err();
        assert!(matches!(err, BuildError::ScoreOutOfRange { aspect: Aspect::Overall, .. }));
    }

    #[test]
    fn new_rejects_blank_comment() {
        let mut entries = sample_entries();
        entries.get_mut(&Aspect::Dynamics).unwrap().comment = "   ".into();
        let err = AspectReport::new(entries, &ScoreBounds::default()).unwrap_err();
        assert_eq!(err, BuildError::EmptyComment(Aspect::Dynamics));
    }

    #[test]
    fn serialization_orders_aspects_and_puts_comment_first() {
        let report = AspectReport::new(sample_entries(), &ScoreBounds::default()).unwrap();
        let text = serialize_report(&report);
        let mut last = 0;
        for aspect in Aspect::ALL {
            let pos = text.find(&format!("\"{}\"", aspect.key())).unwrap();
            assert!(pos > last || aspect == Aspect::TechnicalQuality);
            last = pos;
        }
        // Within each aspect object the comment key precedes the score key.
        for window in text.split("\"comment\"").skip(1) {
            assert!(window.find("\"score\"").is_some());
        }
        let comment_pos = text.find("\"comment\"").unwrap();
        let score_pos = text.find("\"score\"").unwrap();
        assert!(comment_pos < score_pos);
    }

    #[test]
    fn validate_record_flags_problems() {
        let mut scores: BTreeMap<Aspect, f64> =
            Aspect::ALL.into_iter().map(|a| (a, 4.0)).collect();
        scores.insert(Aspect::Physics, 9.0);
        let mut comments: BTreeMap<Aspect, String> = Aspect::ALL
            .into_iter()
            .map(|a| (a, "fine".to_string()))
            .collect();
        comments.remove(&Aspect::Overall);
        let record = EvalRecord {
            video_id: "v1".into(),
            instruction: "A dog runs.".into(),
            category: "animal".into(),
            generator_model: "gen".into(),
            scores,
            comments,
            video_path: None,
        };
        let violations = validate_record(&record, &ScoreBounds::default(), None);
        assert!(violations
            .contains(&Violation::ScoreOutOfRange { aspect: Aspect::Physics, value: 9.0 }));
        assert!(violations.contains(&Violation::MissingComment { aspect: Aspect::Overall }));
        assert_eq!(violations.len(), 2);
    }

    #[test]
    fn eval_record_json_round_trips() {
        let record = EvalRecord {
            video_id: "vid-7".into(),
            instruction: "A red kite over the sea.".into(),
            category: "scenery".into(),
            generator_model: "modelA".into(),
            scores: Aspect::ALL.into_iter().map(|a| (a, 2.5)).collect(),
            comments: Aspect::ALL
                .into_iter()
                .map(|a| (a, format!("{a} ok")))
                .collect(),
            video_path: Some("videos/vid-7.mp4".into()),
        };
        let json = serde_json::to_string(&record).unwrap();
        let back: EvalRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, record);
    }
}
