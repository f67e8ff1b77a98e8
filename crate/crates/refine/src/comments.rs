//! Dataset-wide comment revision with grounding checks.
//!
//! Every aspect comment is rewritten by the revisor, then the validator
//! checks the rewrite claims nothing the original did not. Passing rewrites
//! enter the output dataset; everything else — failed validation, agent
//! errors — keeps its original text and is parked in a review queue for a
//! human. The queue is a JSONL file a reviewer edits by hand; re-importing
//! it merges the reviewed text back with per-aspect provenance.

use crate::RefineError;
use aigve_core::dataset::{read_jsonl, write_jsonl};
use aigve_core::schema::{Aspect, EvalRecord};
use aigve_gateway::roles::{CommentRevisorAgent, CommentValidatorAgent};
use aigve_gateway::{EndpointConfig, GatewayError};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub struct CommentAgents {
    pub revisor: CommentRevisorAgent,
    pub validator: CommentValidatorAgent,
}

impl CommentAgents {
    pub fn new(revisor: CommentRevisorAgent, validator: CommentValidatorAgent) -> Self {
        Self { revisor, validator }
    }

    pub fn from_configs(
        revisor: &EndpointConfig,
        validator: &EndpointConfig,
    ) -> Result<Self, GatewayError> {
        Ok(Self {
            revisor: CommentRevisorAgent::from_config(revisor)?,
            validator: CommentValidatorAgent::from_config(validator)?,
        })
    }
}

/// Where one comment's text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommentProvenance {
    /// Untouched: kept as written (or the revision came back identical).
    Original,
    /// The validated rewrite.
    Revised,
    /// Parked in the review queue; the original stands in until a human
    /// resolves it.
    PendingReview,
    /// A human supplied the text via queue re-import.
    HumanReviewed,
}

/// One dataset row after the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedRecord {
    pub video_id: String,
    pub instruction: String,
    pub scores: BTreeMap<Aspect, f64>,
    pub comments: BTreeMap<Aspect, String>,
    pub provenance: BTreeMap<Aspect, CommentProvenance>,
    /// True once any comment on this row came through human review.
    pub human_reviewed: bool,
}

/// One review-queue row. A reviewer edits `revised` in place (empty or
/// missing means "keep the original").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub record_id: String,
    pub aspect: Aspect,
    pub original: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised: Option<String>,
    #[serde(default)]
    pub issues: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CommentPipelineOutcome {
    pub dataset: Vec<ProcessedRecord>,
    pub queue: Vec<QueueItem>,
    /// Aspect comments replaced by a validated rewrite.
    pub revised: usize,
    /// Aspect comments kept as-is (identical rewrite, or blank original).
    pub kept: usize,
    /// Aspect comments parked for review.
    pub queued: usize,
}

/// Revises and validates every comment in the dataset. Records are
/// processed concurrently up to `concurrency`; output order matches input
/// order regardless.
pub async fn comment_pipeline(
    records: &[EvalRecord],
    agents: &CommentAgents,
    concurrency: usize,
) -> CommentPipelineOutcome {
    let processed: Vec<(ProcessedRecord, Vec<QueueItem>, usize, usize)> =
        stream::iter(records.iter().map(|record| process_record(record, agents)))
            .buffered(concurrency.max(1))
            .collect()
            .await;

    let mut outcome = CommentPipelineOutcome {
        dataset: Vec::with_capacity(processed.len()),
        queue: Vec::new(),
        revised: 0,
        kept: 0,
        queued: 0,
    };
    for (row, items, revised, kept) in processed {
        outcome.queued += items.len();
        outcome.revised += revised;
        outcome.kept += kept;
        outcome.queue.extend(items);
        outcome.dataset.push(row);
    }
    outcome
}

async fn process_record(
    record: &EvalRecord,
    agents: &CommentAgents,
) -> (ProcessedRecord, Vec<QueueItem>, usize, usize) {
    let mut comments = BTreeMap::new();
    let mut provenance = BTreeMap::new();
    let mut queue = Vec::new();
    let mut revised_count = 0;
    let mut kept = 0;

    for (&aspect, original) in &record.comments {
        if original.trim().is_empty() {
            comments.insert(aspect, original.clone());
            provenance.insert(aspect, CommentProvenance::Original);
            kept += 1;
            continue;
        }
        let park = |revised: Option<String>, issues: Vec<String>| QueueItem {
            record_id: record.video_id.clone(),
            aspect,
            original: original.clone(),
            revised,
            issues,
        };
        let resolution = match agents
            .revisor
            .revise(&record.instruction, aspect, &record.scores, original)
            .await
        {
            Err(e) => Err(park(None, vec![format!("revisor: {e}")])),
            Ok(rewrite) => {
                match agents
                    .validator
                    .validate(&record.instruction, original, &rewrite.revised)
                    .await
                {
                    Err(e) => Err(park(
                        Some(rewrite.revised),
                        vec![format!("validator: {e}")],
                    )),
                    Ok(verdict) if verdict.pass => Ok((rewrite.revised, verdict.identical)),
                    Ok(verdict) => Err(park(Some(rewrite.revised), verdict.issues)),
                }
            }
        };
        match resolution {
            Ok((text, identical)) => {
                if identical {
                    comments.insert(aspect, original.clone());
                    provenance.insert(aspect, CommentProvenance::Original);
                    kept += 1;
                } else {
                    comments.insert(aspect, text);
                    provenance.insert(aspect, CommentProvenance::Revised);
                    revised_count += 1;
                }
            }
            Err(item) => {
                comments.insert(aspect, original.clone());
                provenance.insert(aspect, CommentProvenance::PendingReview);
                queue.push(item);
            }
        }
    }

    let row = ProcessedRecord {
        video_id: record.video_id.clone(),
        instruction: record.instruction.clone(),
        scores: record.scores.clone(),
        comments,
        provenance,
        human_reviewed: false,
    };
    (row, queue, revised_count, kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReimportSummary {
    /// Queue items whose reviewed text replaced the original.
    pub applied: usize,
    /// Queue items the reviewer resolved by keeping the original.
    pub rejected: usize,
    /// Queue items naming a record or aspect that is not pending review.
    pub unmatched: usize,
}

/// Merges a human-edited queue back into the processed dataset. Only
/// aspects still pending review are touched; a non-empty `revised` text is
/// applied as human-reviewed, an empty one resolves to the original.
pub fn reimport_queue(dataset: &mut [ProcessedRecord], reviewed: &[QueueItem]) -> ReimportSummary {
    let mut summary = ReimportSummary {
        applied: 0,
        rejected: 0,
        unmatched: 0,
    };
    for item in reviewed {
        let Some(row) = dataset.iter_mut().find(|r| r.video_id == item.record_id) else {
            summary.unmatched += 1;
            continue;
        };
        if row.provenance.get(&item.aspect) != Some(&CommentProvenance::PendingReview) {
            summary.unmatched += 1;
            continue;
        }
        match item.revised.as_deref().map(str::trim) {
            Some(text) if !text.is_empty() => {
                row.comments.insert(item.aspect, text.to_string());
                row.provenance
                    .insert(item.aspect, CommentProvenance::HumanReviewed);
                row.human_reviewed = true;
                summary.applied += 1;
            }
            _ => {
                row.provenance
                    .insert(item.aspect, CommentProvenance::Original);
                row.human_reviewed = true;
                summary.rejected += 1;
            }
        }
    }
    summary
}

pub fn write_queue(path: &Path, items: &[QueueItem]) -> Result<(), RefineError> {
    write_jsonl(path, items).map_err(|e| RefineError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

pub fn read_queue(path: &Path) -> Result<Vec<QueueItem>, RefineError> {
    read_jsonl(path).map_err(|e| RefineError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

pub fn write_dataset(path: &Path, rows: &[ProcessedRecord]) -> Result<(), RefineError> {
    write_jsonl(path, rows).map_err(|e| RefineError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

pub fn read_dataset(path: &Path) -> Result<Vec<ProcessedRecord>, RefineError> {
    read_jsonl(path).map_err(|e| RefineError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}
