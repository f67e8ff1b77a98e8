//! Alignment metrics between predicted and human evaluations.
//!
//! Score alignment is measured with Spearman rank correlation per aspect
//! (reported in percent, as correlation tables conventionally are) plus the
//! nine-aspect average. Pairwise preference accuracy covers benchmarks that
//! label which of two videos humans preferred. Comment quality is measured
//! with ROUGE against reference comments (see [`rouge`]) and, where an
//! endpoint is available, an LLM judge in the gateway crate.

pub mod rouge;

pub use rouge::{rouge_1, rouge_l, rouge_tokens, Rouge};

use crate::schema::{Aspect, EvalRecord, PredictionRecord};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least two samples, got {got}")]
    TooFewSamples { got: usize },
    #[error("non-finite value at position {position}")]
    NonFiniteInput { position: usize },
    #[error("rank correlation is undefined when one side is constant")]
    DegenerateInput,
    #[error("no counterpart for video '{video_id}'")]
    AlignmentError { video_id: String },
    #[error("duplicate video id '{video_id}'")]
    DuplicateVideoId { video_id: String },
    #[error("record '{video_id}' is missing a score for '{aspect}'")]
    IncompleteRecord { video_id: String, aspect: Aspect },
    #[error("empty input")]
    EmptyInput,
    #[error("pair '{pair_id}' has no scores on one side")]
    EmptyScores { pair_id: String },
    #[error("{side} text has no tokens")]
    EmptyAfterTokenization { side: &'static str },
}

/// Average ranks (1-based) with ties sharing the mean of the positions they
/// occupy. `[10, 20, 20, 30]` ranks as `[1, 2.5, 2.5, 4]`.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("ranking requires finite values")
    });
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the mean of ranks i+1..=j+1.
        let shared = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation over tie-averaged ranks.
///
/// Returns a value in [-1, 1]. Fails when the slices differ in length, hold
/// fewer than two samples, contain non-finite values, or either side is
/// constant (ranks have zero variance).
pub fn spearman(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.len() < 2 {
        return Err(MetricsError::TooFewSamples { got: pred.len() });
    }
    for (position, value) in pred.iter().chain(truth.iter()).enumerate() {
        if !value.is_finite() {
            return Err(MetricsError::NonFiniteInput {
                position: position % pred.len(),
            });
        }
    }
    let rp = average_ranks(pred);
    let rt = average_ranks(truth);
    pearson(&rp, &rt).ok_or(MetricsError::DegenerateInput)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let da = a - mx;
        let db = b - my;
        cov += da * db;
        vx += da * da;
        vy += db * db;
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    // (vx·vy).sqrt() rather than vx.sqrt()·vy.sqrt(): when the two rank
    // vectors are equal (or exact mirrors), cov == ±vx == ±vy and IEEE
    // round-to-nearest guarantees sqrt(fl(v²)) == v, so the result is
    // exactly ±1 instead of off by an ulp.
    Some(cov / (vx * vy).sqrt())
}

/// Per-aspect Spearman correlations between predictions and ground truth,
/// in percent, plus their average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Percent correlation per aspect; `None` when that aspect was constant
    /// on one side and had to be excluded.
    pub per_aspect_pct: BTreeMap<Aspect, Option<f64>>,
    /// Mean over the included aspects, in percent.
    pub average_pct: Option<f64>,
    /// Number of aligned videos.
    pub samples: usize,
    /// Aspects excluded as degenerate.
    pub excluded: Vec<Aspect>,
}

/// Aligns predictions to ground truth by `video_id` and computes the
/// nine-aspect correlation table. Every prediction must have a counterpart
/// and vice versa; duplicates are rejected.
pub fn aspect_correlations(
    predictions: &[PredictionRecord],
    truths: &[EvalRecord],
) -> Result<CorrelationReport, MetricsError> {
    let mut truth_by_id: BTreeMap<&str, &EvalRecord> = BTreeMap::new();
    for truth in truths {
        if truth_by_id.insert(&truth.video_id, truth).is_some() {
            return Err(MetricsError::DuplicateVideoId {
                video_id: truth.video_id.clone(),
            });
        }
    }
    let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
    let mut aligned: Vec<(&PredictionRecord, &EvalRecord)> = Vec::with_capacity(predictions.len());
    for pred in predictions {
        if seen.insert(&pred.video_id, ()).is_some() {
            return Err(MetricsError::DuplicateVideoId {
                video_id: pred.video_id.clone(),
            });
        }
        let truth = truth_by_id
            .get(pred.video_id.as_str())
            .ok_or_else(|| MetricsError::AlignmentError {
                video_id: pred.video_id.clone(),
            })?;
        aligned.push((pred, truth));
    }
    for truth in truths {
        if !seen.contains_key(truth.video_id.as_str()) {
            return Err(MetricsError::AlignmentError {
                video_id: truth.video_id.clone(),
            });
        }
    }
    if aligned.len() < 2 {
        return Err(MetricsError::TooFewSamples { got: aligned.len() });
    }

    let mut per_aspect_pct = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut included = Vec::new();
    for aspect in Aspect::ALL {
        let mut pred_scores = Vec::with_capacity(aligned.len());
        let mut truth_scores = Vec::with_capacity(aligned.len());
        for (pred, truth) in &aligned {
            let p = pred
                .scores
                .get(&aspect)
                .ok_or_else(|| MetricsError::IncompleteRecord {
                    video_id: pred.video_id.clone(),
                    aspect,
                })?;
            let t = truth
                .scores
                .get(&aspect)
                .ok_or_else(|| MetricsError::IncompleteRecord {
                    video_id: truth.video_id.clone(),
                    aspect,
                })?;
            pred_scores.push(*p);
            truth_scores.push(*t);
        }
        match spearman(&pred_scores, &truth_scores) {
            Ok(rho) => {
                let pct = rho * 100.0;
                per_aspect_pct.insert(aspect, Some(pct));
                included.push(pct);
            }
            Err(MetricsError::DegenerateInput) => {
                per_aspect_pct.insert(aspect, None);
                excluded.push(aspect);
            }
            Err(other) => return Err(other),
        }
    }
    let average_pct = if included.is_empty() {
        None
    } else {
        Some(included.iter().sum::<f64>() / included.len() as f64)
    };
    Ok(CorrelationReport {
        per_aspect_pct,
        average_pct,
        samples: aligned.len(),
        excluded,
    })
}

/// Mean of a row of per-aspect values (used to reproduce published table
/// averages). `None` on an empty row.
pub fn aggregate_row(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Which side of a pair was preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceLabel {
    A,
    B,
    Tie,
}

/// Two videos' predicted scores plus the human preference label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub pair_id: String,
    pub scores_a: BTreeMap<Aspect, f64>,
    pub scores_b: BTreeMap<Aspect, f64>,
    pub label: PreferenceLabel,
}

/// Per-pair outcome of the preference comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceOutcome {
    pub pair_id: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub predicted: PreferenceLabel,
    pub credit: f64,
}

/// Preference accuracy summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub accuracy: f64,
    pub outcomes: Vec<PreferenceOutcome>,
}

/// Scores each pair by comparing mean predicted scores: the strictly greater
/// mean wins; an exact tie predicts `Tie`. Full credit for matching the
/// label; a predicted tie against a decisive label earns half credit.
pub fn pairwise_accuracy(pairs: &[PreferencePair]) -> Result<PairwiseReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut outcomes = Vec::with_capacity(pairs.len());
    let mut total = 0.0;
    for pair in pairs {
        let mean_a = mean_scores(&pair.scores_a).ok_or_else(|| MetricsError::EmptyScores {
            pair_id: pair.pair_id.clone(),
        })?;
        let mean_b = mean_scores(&pair.scores_b).ok_or_else(|| MetricsError::EmptyScores {
            pair_id: pair.pair_id.clone(),
        })?;
        let predicted = if mean_a > mean_b {
            PreferenceLabel::A
        } else if mean_b > mean_a {
            PreferenceLabel::B
        } else {
            PreferenceLabel::Tie
        };
        let credit = if predicted == pair.label {
            1.0
        } else if predicted == PreferenceLabel::Tie {
            // The comparison refused to choose; count it half right.
            0.5
        } else {
            0.0
        };
        total += credit;
        outcomes.push(PreferenceOutcome {
            pair_id: pair.pair_id.clone(),
            mean_a,
            mean_b,
            predicted,
            credit,
        });
    }
    Ok(PairwiseReport {
        accuracy: total / pairs.len() as f64,
        outcomes,
    })
}

fn mean_scores(scores: &BTreeMap<Aspect, f64>) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    Some(scores.values().sum::<f64>() / scores.len() as f64)
}

/// One histogram bin over `[lo, hi)` word counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
}

/// Corpus statistics over comment lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentLengthStats {
    /// Mean words per comment, over all non-empty comments.
    pub mean_words: f64,
    /// Number of comments counted.
    pub comments_counted: usize,
    /// Comments that tokenized to nothing and were excluded.
    pub empty_excluded: usize,
    /// Mean total words per record (all nine comments combined).
    pub per_record_mean_words: f64,
    pub bin_width: usize,
    pub bins: Vec<HistogramBin>,
}

/// Word-count statistics over every aspect comment in `records`, using the
/// ROUGE tokenizer so "word" means the same thing in both places.
pub fn comment_length_stats(records: &[EvalRecord], bin_width: usize) -> CommentLengthStats {
    let bin_width = bin_width.max(1);
    let mut lengths = Vec::new();
    let mut empty_excluded = 0;
    let mut per_record_totals = Vec::with_capacity(records.len());
    for record in records {
        let mut record_total = 0;
        for comment in record.comments.values() {
            let words = rouge_tokens(comment).len();
            if words == 0 {
                empty_excluded += 1;
            } else {
                lengths.push(words);
                record_total += words;
            }
        }
        per_record_totals.push(record_total);
    }
    let comments_counted = lengths.len();
    let mean_words = if comments_counted == 0 {
        0.0
    } else {
        lengths.iter().sum::<usize>() as f64 / comments_counted as f64
    };
    let per_record_mean_words = if per_record_totals.is_empty() {
        0.0
    } else {
        per_record_totals.iter().sum::<usize>() as f64 / per_record_totals.len() as f64
    };
    let max_len = lengths.iter().copied().max().unwrap_or(0);
    let bin_count = max_len / bin_width + 1;
    let mut bins: Vec<HistogramBin> = (0..bin_count)
        .map(|i| HistogramBin {
            lo: i * bin_width,
            hi: (i + 1) * bin_width,
            count: 0,
        })
        .collect();
    for len in lengths {
        bins[len / bin_width].count += 1;
    }
    CommentLengthStats {
        mean_words,
        comments_counted,
        empty_excluded,
        per_record_mean_words,
        bin_width,
        bins,
    }
}
