//! Iterative refinement of generated videos.
//!
//! The loop is generate → sample frames → evaluate → revise instruction,
//! repeated until the overall score clears a threshold or an iteration cap
//! is hit. Every step is journaled to an append-only trace file as soon as
//! it completes, so a crash loses at most the step in flight and a resumed
//! run picks up exactly where the journal ends — completed traces are never
//! re-run, and in particular the generator is never re-invoked for work the
//! journal already records.
//!
//! The crate also sequences the comment-revision pipeline (revise →
//! validate → human review queue) over whole datasets, and computes
//! improvement statistics across finished traces.

pub mod comments;
pub mod frames;
pub mod orchestrator;
pub mod stats;
pub mod trace;

pub use comments::{
    comment_pipeline, reimport_queue, CommentAgents, CommentPipelineOutcome, CommentProvenance,
    ProcessedRecord, QueueItem, ReimportSummary,
};
pub use frames::{
    sample_and_encode, CommandFrameSource, FrameSource, MockFrameSource, PgmDirSource,
};
pub use orchestrator::{refine_batch, refine_one, Agents, BatchSummary, RefineRequest, RunDir};
pub use stats::{improvement_stats, AspectImprovement, CurvePoint, ImprovementReport};
pub use trace::{
    fold_trace, sanitize_id, verify_instruction_chain, FinalRecord, IterationRecord, StartRecord,
    StopReason, TraceLine, TraceState, TraceStore,
};

use aigve_core::sampler::{SamplerConfig, SamplerError};
use aigve_core::schema::ScoreBounds;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    TraceDecode {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace for '{record_id}' is corrupt: {message}")]
    CorruptTrace { record_id: String, message: String },
    #[error(
        "trace for '{record_id}' was started with config digest {expected}, \
         but the current config digests to {found}; resume with the original \
         config or start a new run directory"
    )]
    ConfigMismatch {
        record_id: String,
        expected: String,
        found: String,
    },
    #[error("instruction chain broken at iteration {iteration} of '{record_id}': {message}")]
    ChainBroken {
        record_id: String,
        iteration: usize,
        message: String,
    },
    #[error("frame source failed for '{video_ref}': {message}")]
    FrameSource { video_ref: String, message: String },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("invalid refinement config: {0}")]
    InvalidConfig(String),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Endpoints for the three agents the loop needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineEndpoints {
    pub generator: aigve_gateway::EndpointConfig,
    pub evaluator: aigve_gateway::EndpointConfig,
    pub revisor: aigve_gateway::EndpointConfig,
}

/// Loop parameters. The defaults: up to 4 iterations, stop once the overall
/// score strictly exceeds 4, and refine only records whose initial overall
/// score sits strictly below 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub max_iterations: usize,
    /// Stop once overall > this (strict).
    pub stop_threshold: f64,
    /// Batch entry filter: refine records with initial overall < this.
    pub selection_threshold: f64,
    /// Concurrent traces in a batch. One trace is always sequential.
    pub concurrency: usize,
    pub sampler: SamplerConfig,
    pub bounds: ScoreBounds,
    pub endpoints: RefineEndpoints,
}

impl RefineConfig {
    pub fn new(endpoints: RefineEndpoints) -> Self {
        Self {
            max_iterations: 4,
            stop_threshold: 4.0,
            selection_threshold: 3.0,
            concurrency: 1,
            sampler: SamplerConfig::default(),
            bounds: ScoreBounds::default(),
            endpoints,
        }
    }

    pub fn validate(&self) -> Result<(), RefineError> {
        if self.max_iterations == 0 {
            return Err(RefineError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.concurrency == 0 {
            return Err(RefineError::InvalidConfig(
                "concurrency must be at least 1".into(),
            ));
        }
        if !self.stop_threshold.is_finite()
            || self.stop_threshold < self.bounds.min
            || self.stop_threshold > self.bounds.max
        {
            return Err(RefineError::InvalidConfig(format!(
                "stop_threshold {} is outside the score bounds [{}, {}]",
                self.stop_threshold, self.bounds.min, self.bounds.max
            )));
        }
        if !self.selection_threshold.is_finite() {
            return Err(RefineError::InvalidConfig(
                "selection_threshold must be finite".into(),
            ));
        }
        self.sampler
            .validate()
            .map_err(|e| RefineError::InvalidConfig(e.to_string()))
    }

    /// Digest of the parameters that define a trace's semantics; frozen into
    /// each trace's start record so a resume with different loop parameters
    /// is caught instead of silently mixing trajectories. Endpoints and
    /// concurrency are deliberately left out: swapping in a fallback
    /// endpoint or changing throughput is exactly what a resume after an
    /// outage needs, and neither changes what the trace means.
    pub fn digest(&self) -> Result<String, RefineError> {
        let value = serde_json::json!({
            "max_iterations": self.max_iterations,
            "stop_threshold": self.stop_threshold,
            "selection_threshold": self.selection_threshold,
            "sampler": serde_json::to_value(&self.sampler)?,
            "bounds": serde_json::to_value(self.bounds)?,
        });
        Ok(aigve_core::hash::sha256_hex(value.to_string().as_bytes()))
    }
}
