//! ROUGE overlap scores for comment quality.
//!
//! ROUGE-1 measures clipped unigram overlap; ROUGE-L measures the longest
//! common subsequence. Both report precision against the candidate, recall
//! against the reference, and their harmonic-mean F1. Text is lowercased and
//! split into maximal alphanumeric runs first, so punctuation and casing
//! never count as overlap.

use super::MetricsError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Precision / recall / F1 triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rouge {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Rouge {
    fn from_counts(matched: f64, candidate_len: f64, reference_len: f64) -> Self {
        let precision = if candidate_len == 0.0 { 0.0 } else { matched / candidate_len };
        let recall = if reference_len == 0.0 { 0.0 } else { matched / reference_len };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

/// Lowercased word tokens: maximal runs of alphanumeric characters.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_lowercase())
        .collect()
}

/// Unigram overlap with clipped counts: each reference occurrence can be
/// matched at most once.
pub fn rouge_1(candidate: &str, reference: &str) -> Result<Rouge, MetricsError> {
    let cand = rouge_tokens(candidate);
    let refr = rouge_tokens(reference);
    if cand.is_empty() {
        return Err(MetricsError::EmptyAfterTokenization { side: "candidate" });
    }
    if refr.is_empty() {
        return Err(MetricsError::EmptyAfterTokenization { side: "reference" });
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for token in &refr {
        *ref_counts.entry(token).or_insert(0) += 1;
    }
    let mut matched = 0usize;
    for token in &cand {
        if let Some(count) = ref_counts.get_mut(token.as_str()) {
            if *count > 0 {
                *count -= 1;
                matched += 1;
            }
        }
    }
    Ok(Rouge::from_counts(
        matched as f64,
        cand.len() as f64,
        refr.len() as f64,
    ))
}

/// Longest-common-subsequence overlap.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<Rouge, MetricsError> {
    let cand = rouge_tokens(candidate);
    let refr = rouge_tokens(reference);
    if cand.is_empty() {
        return Err(MetricsError::EmptyAfterTokenization { side: "candidate" });
    }
    if refr.is_empty() {
        return Err(MetricsError::EmptyAfterTokenization { side: "reference" });
    }
    let lcs = lcs_len(&cand, &refr);
    Ok(Rouge::from_counts(
        lcs as f64,
        cand.len() as f64,
        refr.len() as f64,
    ))
}

/// Classic two-row LCS dynamic program.
fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            curr[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}
