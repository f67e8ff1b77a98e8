//! Token-wise loss weighting for evaluator training.
//!
//! Training a model to emit nine-aspect reports means most target tokens are
//! boilerplate: braces, keys, quotes. The weighter up-weights the tokens that
//! actually carry judgment — comment text and score literals — so the loss
//! concentrates where the content is. Every target token gets weight 1 except
//! those overlapping a comment or score span, which get `alpha` (50 by
//! default); the training loss is the weighted sum of negative log
//! probabilities over the target region.
//!
//! Tokenizers differ, so tokens arrive as byte offsets and classification is
//! by span overlap: one shared byte with a comment or score span claims the
//! token for that category (comment wins when a token straddles both).

use crate::schema::{SpanLabel, SpanMap};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Default up-weight for comment and score tokens.
pub const DEFAULT_ALPHA: f64 = 50.0;

/// What a token is part of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenCategory {
    /// Tokens of the system prompt region.
    SystemPrompt,
    /// Tokens standing in for visual (frame) input.
    Visual,
    /// JSON scaffolding, keys, quotes, whitespace, wrapper prose.
    Structure,
    /// Inside an aspect comment.
    Comment,
    /// Part of an aspect score literal.
    Score,
}

impl TokenCategory {
    pub const ALL: [TokenCategory; 5] = [
        TokenCategory::SystemPrompt,
        TokenCategory::Visual,
        TokenCategory::Structure,
        TokenCategory::Comment,
        TokenCategory::Score,
    ];
}

/// One tokenizer token as half-open byte offsets into the full input text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenOffset {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

/// A non-target region of the input (prompt prefix).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub start: usize,
    pub end: usize,
    pub category: TokenCategory,
}

/// Byte layout of one training example: optional prefix regions (system
/// prompt, visual placeholders) followed by the target report text.
#[derive(Debug, Clone, PartialEq)]
pub struct InputLayout {
    regions: Vec<Region>,
    target_start: usize,
    target_len: usize,
}

impl InputLayout {
    /// A layout that is nothing but the target text.
    pub fn target_only(target_len: usize) -> Self {
        Self {
            regions: Vec::new(),
            target_start: 0,
            target_len,
        }
    }

    /// Prefix regions followed by the target. Regions must be sorted,
    /// non-overlapping, and end at or before `target_start`; gaps between
    /// them classify as structure.
    pub fn with_prefix(
        regions: Vec<Region>,
        target_start: usize,
        target_len: usize,
    ) -> Result<Self, WeightError> {
        let mut cursor = 0;
        for region in &regions {
            if region.start < cursor || region.end < region.start || region.end > target_start {
                return Err(WeightError::InvalidLayout {
                    message: format!(
                        "region [{}, {}) is out of order or overlaps the target at {}",
                        region.start, region.end, target_start
                    ),
                });
            }
            cursor = region.end;
        }
        Ok(Self {
            regions,
            target_start,
            target_len,
        })
    }

    pub fn target_start(&self) -> usize {
        self.target_start
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    /// Total byte length of the laid-out input.
    pub fn total_len(&self) -> usize {
        self.target_start + self.target_len
    }

    fn prefix_category(&self, byte: usize) -> TokenCategory {
        for region in &self.regions {
            if byte >= region.start && byte < region.end {
                return region.category;
            }
        }
        TokenCategory::Structure
    }
}

/// A token with its resolved category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedToken {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub category: TokenCategory,
}

/// Loss over the target region of one example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedLoss {
    /// Weighted sum of negative log probabilities.
    pub sum: f64,
    /// Number of target tokens that contributed.
    pub target_tokens: usize,
    /// Sum of the weights that were applied.
    pub weight_mass: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("token {index} spans [{start}, {end}) which leaves the {total}-byte input")]
    OffsetOutOfBounds {
        index: usize,
        start: usize,
        end: usize,
        total: usize,
    },
    #[error("token {index} starts before the end of the previous token")]
    UnorderedTokens { index: usize },
    #[error("invalid input layout: {message}")]
    InvalidLayout { message: String },
    #[error("{what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("log probability at position {position} is {value}, expected a finite value <= 0")]
    PositiveLogProb { position: usize, value: f64 },
}

/// Assigns a category to every token.
///
/// `spans` labels the *target* text; token offsets are relative to the full
/// laid-out input described by `layout`. A token overlapping a comment or
/// score span by at least one byte takes that category (comment wins over
/// score); otherwise the token is classified by the region its first byte
/// falls in. Zero-width tokens (specials) are always structure.
pub fn classify_tokens(
    tokens: &[TokenOffset],
    spans: &SpanMap,
    layout: &InputLayout,
) -> Result<Vec<ClassifiedToken>, WeightError> {
    if spans.text_len() != layout.target_len() {
        return Err(WeightError::InvalidLayout {
            message: format!(
                "span map covers {} bytes but the layout target is {} bytes",
                spans.text_len(),
                layout.target_len()
            ),
        });
    }
    let total = layout.total_len();
    let mut out = Vec::with_capacity(tokens.len());
    let mut prev_end = 0usize;
    for token in tokens {
        if token.end < token.start || token.end > total || token.start > total {
            return Err(WeightError::OffsetOutOfBounds {
                index: token.index,
                start: token.start,
                end: token.end,
                total,
            });
        }
        if token.start < prev_end {
            return Err(WeightError::UnorderedTokens { index: token.index });
        }
        prev_end = token.end;

        let category = if token.start == token.end {
            TokenCategory::Structure
        } else {
            classify_one(token, spans, layout)
        };
        out.push(ClassifiedToken {
            index: token.index,
            start: token.start,
            end: token.end,
            category,
        });
    }
    Ok(out)
}

fn classify_one(token: &TokenOffset, spans: &SpanMap, layout: &InputLayout) -> TokenCategory {
    let target_start = layout.target_start();
    let target_end = layout.total_len();
    // Overlap with the target region, in target-relative coordinates.
    if token.end > target_start && token.start < target_end {
        let rel_start = token.start.saturating_sub(target_start);
        let rel_end = (token.end - target_start).min(layout.target_len());
        let mut saw_score = false;
        for span in spans.spans_overlapping(rel_start, rel_end) {
            match span.label {
                SpanLabel::Comment(_) => return TokenCategory::Comment,
                SpanLabel::Score(_) => saw_score = true,
                SpanLabel::Structure => {}
            }
        }
        if saw_score {
            return TokenCategory::Score;
        }
    }
    if token.start < target_start {
        layout.prefix_category(token.start)
    } else {
        TokenCategory::Structure
    }
}

/// Weight per token: `alpha` for comment and score tokens, 1 otherwise.
pub fn build_mask(tokens: &[ClassifiedToken], alpha: f64) -> Vec<f64> {
    tokens
        .iter()
        .map(|t| match t.category {
            TokenCategory::Comment | TokenCategory::Score => alpha,
            _ => 1.0,
        })
        .collect()
}

/// Weighted negative log likelihood over the target tokens.
///
/// `logp[i]` is the log probability the model assigned to token `i`;
/// `target[i]` marks tokens inside the target region (prompt tokens do not
/// contribute). All three slices run over the same token sequence.
pub fn weighted_loss(
    logp: &[f64],
    weights: &[f64],
    target: &[bool],
) -> Result<WeightedLoss, WeightError> {
    if weights.len() != logp.len() {
        return Err(WeightError::LengthMismatch {
            what: "weights",
            expected: logp.len(),
            got: weights.len(),
        });
    }
    if target.len() != logp.len() {
        return Err(WeightError::LengthMismatch {
            what: "target flags",
            expected: logp.len(),
            got: target.len(),
        });
    }
    let mut sum = 0.0;
    let mut target_tokens = 0;
    let mut weight_mass = 0.0;
    for (position, ((&lp, &w), &is_target)) in
        logp.iter().zip(weights).zip(target).enumerate()
    {
        if !is_target {
            continue;
        }
        if !lp.is_finite() || lp > 0.0 {
            return Err(WeightError::PositiveLogProb {
                position,
                value: lp,
            });
        }
        sum -= w * lp;
        target_tokens += 1;
        weight_mass += w;
    }
    Ok(WeightedLoss {
        sum,
        target_tokens,
        weight_mass,
    })
}

/// Fraction of tokens per category; all five categories are always present.
pub fn category_ratios(tokens: &[ClassifiedToken]) -> BTreeMap<TokenCategory, f64> {
    let mut counts: BTreeMap<TokenCategory, usize> =
        TokenCategory::ALL.into_iter().map(|c| (c, 0)).collect();
    for token in tokens {
        *counts.get_mut(&token.category).expect("all categories present") += 1;
    }
    let total = tokens.len().max(1) as f64;
    counts
        .into_iter()
        .map(|(category, count)| (category, count as f64 / total))
        .collect()
}

/// Macro-average of per-example category ratios (each example counts equally
/// regardless of its token count).
pub fn mean_category_ratios(
    per_example: &[BTreeMap<TokenCategory, f64>],
) -> BTreeMap<TokenCategory, f64> {
    let n = per_example.len().max(1) as f64;
    TokenCategory::ALL
        .into_iter()
        .map(|category| {
            let sum: f64 = per_example
                .iter()
                .map(|ratios| ratios.get(&category).copied().unwrap_or(0.0))
                .sum();
            (category, sum / n)
        })
        .collect()
}

/// Reference tokenizer for tests and offline mask export: maximal runs of
/// alphanumeric characters, plus every other non-whitespace character as its
/// own token. Offsets are byte-based.
pub fn simple_tokenize(text: &str) -> Vec<TokenOffset> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;
    let push = |start: usize, end: usize, tokens: &mut Vec<TokenOffset>| {
        tokens.push(TokenOffset {
            index: tokens.len(),
            start,
            end,
        });
    };
    for (pos, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if run_start.is_none() {
                run_start = Some(pos);
            }
        } else {
            if let Some(start) = run_start.take() {
                push(start, pos, &mut tokens);
            }
            if !c.is_whitespace() {
                push(pos, pos + c.len_utf8(), &mut tokens);
            }
        }
    }
    if let Some(start) = run_start {
        push(start, text.len(), &mut tokens);
    }
    tokens
}

/// One line of the mask export: the example id, the alpha in force, and every
/// token as `[start, end, category, weight]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub example_id: String,
    pub alpha: f64,
    pub tokens: Vec<MaskToken>,
}

/// `[start, end, category, weight]` in the export format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskToken(pub usize, pub usize, pub TokenCategory, pub f64);

impl MaskRecord {
    pub fn new(example_id: impl Into<String>, tokens: &[ClassifiedToken], alpha: f64) -> Self {
        let weights = build_mask(tokens, alpha);
        Self {
            example_id: example_id.into(),
            alpha,
            tokens: tokens
                .iter()
                .zip(weights)
                .map(|(t, w)| MaskToken(t.start, t.end, t.category, w))
                .collect(),
        }
    }
}
