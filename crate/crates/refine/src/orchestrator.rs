//! The generate → sample → evaluate → revise loop, journaled and resumable.

use crate::frames::{sample_and_encode, FrameSource};
use crate::stats::{improvement_stats, ImprovementReport};
use crate::trace::{
    sanitize_id, verify_instruction_chain, FinalRecord, IterationRecord, StartRecord, StopReason,
    TraceLine, TraceState, TraceStore,
};
use crate::{RefineConfig, RefineError};
use aigve_core::clock::Clock;
use aigve_core::hash::sha256_hex;
use aigve_core::schema::{Aspect, AspectReport, EvalRecord};
use aigve_gateway::roles::{EvaluatorAgent, GeneratorAgent, InstructionRevisorAgent};
use aigve_gateway::GatewayError;
use futures::stream::{self, StreamExt};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// One run's on-disk layout: `traces/` journals, `artifacts/` (PNG frames
/// plus completions stored under their content hash), and `reports/` for
/// aggregate statistics. The caller owns `manifest.json` at the root.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Opens (creating as needed) a run directory. Safe to call on an
    /// existing run — resuming reuses the layout in place.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, RefineError> {
        let root = root.into();
        for sub in [
            PathBuf::from("traces"),
            PathBuf::from("artifacts").join("completions"),
            PathBuf::from("artifacts").join("frames"),
            PathBuf::from("reports"),
        ] {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir)
                .map_err(|source| RefineError::Io { path: dir, source })?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn traces(&self) -> Result<TraceStore, RefineError> {
        TraceStore::new(self.root.join("traces"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn completions_dir(&self) -> PathBuf {
        self.root.join("artifacts").join("completions")
    }

    pub fn frames_dir(&self, record_id: &str, k: usize) -> PathBuf {
        self.root
            .join("artifacts")
            .join("frames")
            .join(sanitize_id(record_id))
            .join(format!("iter_{k:02}"))
    }

    /// Stores a raw completion under its content hash and returns the hash;
    /// existing files are left alone, so identical completions dedupe.
    pub fn store_completion(&self, completion: &str) -> Result<String, RefineError> {
        let digest = sha256_hex(completion.as_bytes());
        let path = self.completions_dir().join(format!("{digest}.txt"));
        if !path.exists() {
            std::fs::write(&path, completion)
                .map_err(|source| RefineError::Io { path, source })?;
        }
        Ok(digest)
    }

    /// Writes the PNG frames one iteration actually scored.
    pub fn store_frames(
        &self,
        record_id: &str,
        k: usize,
        pngs: &[Vec<u8>],
        indices: &[usize],
    ) -> Result<(), RefineError> {
        let dir = self.frames_dir(record_id, k);
        std::fs::create_dir_all(&dir).map_err(|source| RefineError::Io {
            path: dir.clone(),
            source,
        })?;
        for (png, &index) in pngs.iter().zip(indices) {
            let path = dir.join(format!("frame_{index:06}.png"));
            std::fs::write(&path, png).map_err(|source| RefineError::Io { path, source })?;
        }
        Ok(())
    }
}

/// The three agents the loop drives.
pub struct Agents {
    pub generator: GeneratorAgent,
    pub evaluator: EvaluatorAgent,
    pub revisor: InstructionRevisorAgent,
}

impl Agents {
    pub fn new(
        generator: GeneratorAgent,
        evaluator: EvaluatorAgent,
        revisor: InstructionRevisorAgent,
    ) -> Self {
        Self {
            generator,
            evaluator,
            revisor,
        }
    }

    /// Builds all three agents from the config's endpoints; the evaluator
    /// inherits the config's score bounds and frame budget.
    pub fn from_config(config: &RefineConfig) -> Result<Self, GatewayError> {
        Ok(Self {
            generator: GeneratorAgent::from_config(&config.endpoints.generator)?,
            evaluator: EvaluatorAgent::from_config(&config.endpoints.evaluator)?
                .with_bounds(config.bounds)
                .with_max_frames(config.sampler.target_n),
            revisor: InstructionRevisorAgent::from_config(&config.endpoints.revisor)?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RefineRequest<'a> {
    pub record_id: &'a str,
    pub instruction: &'a str,
}

/// Runs (or resumes) the refinement loop for one record.
///
/// Every completed step is journaled before the next begins. Agent failures
/// do not bubble up as errors: they are recorded as the trace's terminal
/// stop reason and the folded trace is returned, so a batch keeps going and
/// a later resume retries from the exact step that failed. The `Err` path is
/// reserved for the journal itself (I/O, corruption, config drift).
pub async fn refine_one(
    request: RefineRequest<'_>,
    agents: &Agents,
    frame_source: &dyn FrameSource,
    run: &RunDir,
    config: &RefineConfig,
    clock: &dyn Clock,
) -> Result<TraceState, RefineError> {
    config.validate()?;
    let store = run.traces()?;
    let config_digest = config.digest()?;
    let record_id = request.record_id;

    let mut state = match store.state(record_id)? {
        Some(state) => {
            if state.start.config_digest != config_digest {
                return Err(RefineError::ConfigMismatch {
                    record_id: record_id.to_string(),
                    expected: state.start.config_digest.clone(),
                    found: config_digest,
                });
            }
            if state.start.initial_instruction != request.instruction {
                return Err(RefineError::CorruptTrace {
                    record_id: record_id.to_string(),
                    message: "journal was started with a different initial instruction".into(),
                });
            }
            verify_instruction_chain(record_id, &state)?;
            if state.is_complete() {
                // Finished earlier — nothing to re-run, no agent is invoked.
                return Ok(state);
            }
            state
        }
        None => {
            let start = StartRecord {
                record_id: record_id.to_string(),
                initial_instruction: request.instruction.to_string(),
                instruction_sha256: sha256_hex(request.instruction.as_bytes()),
                config_digest,
                started_ms: clock.now_ms(),
            };
            store.append(record_id, &TraceLine::Start(start.clone()))?;
            TraceState {
                start,
                iterations: Vec::new(),
                final_record: None,
            }
        }
    };

    loop {
        // Terminal checks come first so a resumed journal that already
        // crossed a boundary is closed out without touching any endpoint.
        // Threshold wins over the iteration cap when both hold at once.
        if let Some(last) = state.iterations.last() {
            if last.overall > config.stop_threshold {
                return finish(&store, record_id, state, StopReason::ThresholdMet, clock);
            }
            if state.iterations.len() >= config.max_iterations {
                return finish(&store, record_id, state, StopReason::IterationLimit, clock);
            }
            if last.revised_instruction.is_none() {
                // The journal stopped after an evaluation but before its
                // revision: re-run only the revisor and amend the record.
                let report = AspectReport::new(last.report.clone(), &config.bounds).map_err(
                    |e| RefineError::CorruptTrace {
                        record_id: record_id.to_string(),
                        message: format!("journaled report no longer validates: {e}"),
                    },
                )?;
                match agents.revisor.revise(&last.instruction, &report).await {
                    Ok(revised) => {
                        let mut amended = last.clone();
                        amended.revised_sha256 = Some(sha256_hex(revised.text.as_bytes()));
                        amended.revised_instruction = Some(revised.text);
                        store.append(record_id, &TraceLine::Iteration(amended.clone()))?;
                        *state.iterations.last_mut().expect("nonempty") = amended;
                        state.final_record = None;
                        continue;
                    }
                    Err(e) => {
                        let stop = StopReason::Error {
                            role: "instruction_revisor".into(),
                            iteration: last.k,
                            message: e.to_string(),
                        };
                        return finish(&store, record_id, state, stop, clock);
                    }
                }
            }
        }

        let k = state.iterations.len() + 1;
        let instruction = state
            .iterations
            .last()
            .and_then(|it| it.revised_instruction.clone())
            .unwrap_or_else(|| state.start.initial_instruction.clone());
        let fail = |role: &str, message: String| StopReason::Error {
            role: role.to_string(),
            iteration: k,
            message,
        };

        let video = match agents.generator.generate(&instruction).await {
            Ok(video) => video,
            Err(e) => {
                return finish(&store, record_id, state, fail("generator", e.to_string()), clock)
            }
        };
        let frames = match frame_source.frames_for(&video.video_ref).await {
            Ok(frames) => frames,
            Err(e) => {
                return finish(
                    &store,
                    record_id,
                    state,
                    fail("frame_source", e.to_string()),
                    clock,
                )
            }
        };
        let (sampled, pngs) = match sample_and_encode(&frames, &config.sampler) {
            Ok(pair) => pair,
            Err(e) => {
                return finish(&store, record_id, state, fail("sampler", e.to_string()), clock)
            }
        };
        let evaluation = match agents.evaluator.evaluate(&instruction, &pngs).await {
            Ok(evaluation) => evaluation,
            Err(e) => {
                return finish(&store, record_id, state, fail("evaluator", e.to_string()), clock)
            }
        };

        run.store_frames(record_id, k, &pngs, &sampled.indices)?;
        let completion_sha256 = run.store_completion(&evaluation.completion)?;
        let overall = evaluation.report.overall_score();
        let stop_now = overall > config.stop_threshold;
        let at_limit = k >= config.max_iterations;

        let mut record = IterationRecord {
            k,
            instruction_sha256: sha256_hex(instruction.as_bytes()),
            instruction,
            video_ref: video.video_ref,
            frame_indices: sampled.indices,
            sample_mode: sampled.mode,
            report: evaluation.report.entries().clone(),
            overall,
            completion_sha256,
            reprompted: evaluation.reprompted,
            at_ms: clock.now_ms(),
            revised_instruction: None,
            revised_sha256: None,
        };

        if !(stop_now || at_limit) {
            match agents.revisor.revise(&record.instruction, &evaluation.report).await {
                Ok(revised) => {
                    record.revised_sha256 = Some(sha256_hex(revised.text.as_bytes()));
                    record.revised_instruction = Some(revised.text);
                }
                Err(e) => {
                    // Journal the evaluation first so a resume retries only
                    // the revisor, then record the failure.
                    store.append(record_id, &TraceLine::Iteration(record.clone()))?;
                    state.iterations.push(record);
                    state.final_record = None;
                    let stop = StopReason::Error {
                        role: "instruction_revisor".into(),
                        iteration: k,
                        message: e.to_string(),
                    };
                    return finish(&store, record_id, state, stop, clock);
                }
            }
        }

        store.append(record_id, &TraceLine::Iteration(record.clone()))?;
        state.iterations.push(record);
        state.final_record = None;
    }
}

fn finish(
    store: &TraceStore,
    record_id: &str,
    mut state: TraceState,
    stop: StopReason,
    clock: &dyn Clock,
) -> Result<TraceState, RefineError> {
    let final_record = FinalRecord {
        stop,
        iterations: state.iterations.len(),
        final_overall: state.iterations.last().map(|it| it.overall),
        finished_ms: clock.now_ms(),
    };
    store.append(record_id, &TraceLine::Final(final_record.clone()))?;
    state.final_record = Some(final_record);
    Ok(state)
}

/// What a batch did, record by record.
#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    /// Ids refined (or resumed) this run, in input order.
    pub selected: Vec<String>,
    /// Ids whose initial overall score already met the selection threshold.
    pub skipped: Vec<String>,
    /// Ids refined despite carrying no initial overall score; listed so the
    /// caller can see the selection filter had nothing to test.
    pub missing_initial: Vec<String>,
    /// Ids whose trace ended in an agent error.
    pub errored: Vec<String>,
    #[serde(skip)]
    pub traces: Vec<TraceState>,
    pub stats: ImprovementReport,
}

/// Refines every record whose initial overall score sits below the selection
/// threshold. Traces run concurrently up to `config.concurrency`; each trace
/// is sequential internally. Agent failures land in the summary's `errored`
/// list without stopping the rest of the batch.
pub async fn refine_batch(
    records: &[EvalRecord],
    agents: &Agents,
    frame_source: &dyn FrameSource,
    run: &RunDir,
    config: &RefineConfig,
    clock: &dyn Clock,
) -> Result<BatchSummary, RefineError> {
    config.validate()?;
    let mut selected_records = Vec::new();
    let mut skipped = Vec::new();
    let mut missing_initial = Vec::new();
    for record in records {
        match record.scores.get(&Aspect::Overall) {
            Some(&overall) if overall < config.selection_threshold => {
                selected_records.push(record)
            }
            Some(_) => skipped.push(record.video_id.clone()),
            None => {
                missing_initial.push(record.video_id.clone());
                selected_records.push(record);
            }
        }
    }

    let results: Vec<Result<TraceState, RefineError>> =
        stream::iter(selected_records.iter().map(|record| {
            refine_one(
                RefineRequest {
                    record_id: &record.video_id,
                    instruction: &record.instruction,
                },
                agents,
                frame_source,
                run,
                config,
                clock,
            )
        }))
        .buffered(config.concurrency.max(1))
        .collect()
        .await;

    let mut traces = Vec::with_capacity(results.len());
    for result in results {
        traces.push(result?);
    }
    let errored = traces
        .iter()
        .filter(|t| t.stop().map(StopReason::is_error).unwrap_or(false))
        .map(|t| t.start.record_id.clone())
        .collect();
    let stats = improvement_stats(&traces);
    write_reports(run, &stats)?;

    Ok(BatchSummary {
        selected: selected_records
            .iter()
            .map(|r| r.video_id.clone())
            .collect(),
        skipped,
        missing_initial,
        errored,
        traces,
        stats,
    })
}

/// Writes `reports/stats.json`, `reports/stats.csv`, and `reports/curves.json`.
fn write_reports(run: &RunDir, stats: &ImprovementReport) -> Result<(), RefineError> {
    let dir = run.reports_dir();
    let write = |path: PathBuf, contents: String| -> Result<(), RefineError> {
        std::fs::write(&path, contents).map_err(|source| RefineError::Io { path, source })
    };
    write(
        dir.join("stats.json"),
        serde_json::to_string_pretty(stats)? + "\n",
    )?;
    write(
        dir.join("curves.json"),
        serde_json::to_string_pretty(&stats.curves)? + "\n",
    )?;

    let fmt = |value: Option<f64>| value.map(|v| v.to_string()).unwrap_or_default();
    let mut csv = String::from("aspect,records,zero_initial,mean_relative_pct,mean_absolute_delta\n");
    for aspect in Aspect::ALL {
        let row = &stats.per_aspect[&aspect];
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            aspect.key(),
            row.records,
            row.zero_initial,
            fmt(row.mean_relative_pct),
            fmt(row.mean_absolute_delta),
        ));
    }
    write(dir.join("stats.csv"), csv)
}
