//! Append-only refinement journals.
//!
//! One trace file per record, one JSON object per line, flushed as each step
//! completes. The file is a journal, not a snapshot: a retried error leaves
//! its terminal line in place and later lines supersede it. `fold_trace`
//! collapses a journal into the current `TraceState` — the folded view has
//! at most one authoritative terminal record, and an iteration re-appended
//! with an existing index (used when a failed revision is retried) replaces
//! the earlier attempt.

use crate::RefineError;
use aigve_core::hash::sha256_hex;
use aigve_core::sampler::SampleMode;
use aigve_core::schema::{Aspect, AspectEntry};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Start(StartRecord),
    Iteration(IterationRecord),
    Final(FinalRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub record_id: String,
    pub initial_instruction: String,
    pub instruction_sha256: String,
    pub config_digest: String,
    pub started_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub k: usize,
    pub instruction: String,
    pub instruction_sha256: String,
    pub video_ref: String,
    pub frame_indices: Vec<usize>,
    pub sample_mode: SampleMode,
    pub report: BTreeMap<Aspect, AspectEntry>,
    pub overall: f64,
    /// Digest of the raw evaluator completion; the text itself lives under
    /// the run directory's content-addressed completion store.
    pub completion_sha256: String,
    pub reprompted: bool,
    pub at_ms: u64,
    /// The revisor's output, present unless this iteration ended the loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_instruction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub stop: StopReason,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_overall: Option<f64>,
    pub finished_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    /// The overall score strictly exceeded the stop threshold.
    ThresholdMet,
    IterationLimit,
    /// An agent failed; `iteration` is the index that was being attempted.
    Error {
        role: String,
        iteration: usize,
        message: String,
    },
}

impl StopReason {
    pub fn is_error(&self) -> bool {
        matches!(self, StopReason::Error { .. })
    }
}

/// A journal folded to its current state.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    pub start: StartRecord,
    pub iterations: Vec<IterationRecord>,
    pub final_record: Option<FinalRecord>,
}

impl TraceState {
    pub fn is_complete(&self) -> bool {
        self.final_record
            .as_ref()
            .map(|f| !f.stop.is_error())
            .unwrap_or(false)
    }

    pub fn stop(&self) -> Option<&StopReason> {
        self.final_record.as_ref().map(|f| &f.stop)
    }

    pub fn initial_report(&self) -> Option<&BTreeMap<Aspect, AspectEntry>> {
        self.iterations.first().map(|it| &it.report)
    }

    pub fn final_report(&self) -> Option<&BTreeMap<Aspect, AspectEntry>> {
        self.iterations.last().map(|it| &it.report)
    }

    pub fn overall_curve(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.overall).collect()
    }
}

/// Maps a record id to a safe file stem: anything outside `[A-Za-z0-9._-]`
/// becomes `_`, and names that would be empty or all dots are padded.
pub fn sanitize_id(record_id: &str) -> String {
    let mut stem: String = record_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if stem.is_empty() || stem.chars().all(|c| c == '.') {
        stem = format!("record_{}", &sha256_hex(record_id.as_bytes())[..12]);
    }
    stem
}

/// One directory of trace journals, one file per record.
pub struct TraceStore {
    dir: PathBuf,
}

impl TraceStore {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, RefineError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|source| RefineError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir })
    }

    pub fn path_for(&self, record_id: &str) -> PathBuf {
        self.dir.join(format!("{}.jsonl", sanitize_id(record_id)))
    }

    /// Appends one line and flushes it before returning, so the journal
    /// never lags behind completed work.
    pub fn append(&self, record_id: &str, line: &TraceLine) -> Result<(), RefineError> {
        let path = self.path_for(record_id);
        let io_err = |source| RefineError::Io {
            path: path.clone(),
            source,
        };
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        writeln!(file, "{}", serde_json::to_string(line)?).map_err(io_err)?;
        file.flush().map_err(io_err)
    }

    /// Reads a journal verbatim; a missing file is an empty journal.
    pub fn load(&self, record_id: &str) -> Result<Vec<TraceLine>, RefineError> {
        let path = self.path_for(record_id);
        let file = match std::fs::File::open(&path) {
            Ok(file) => file,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(RefineError::Io { path, source }),
        };
        let mut lines = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| RefineError::Io {
                path: path.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            lines.push(
                serde_json::from_str(&line).map_err(|source| RefineError::TraceDecode {
                    path: path.clone(),
                    line: idx + 1,
                    source,
                })?,
            );
        }
        Ok(lines)
    }

    /// Folded state for a record, or None when no journal exists yet.
    pub fn state(&self, record_id: &str) -> Result<Option<TraceState>, RefineError> {
        let lines = self.load(record_id)?;
        if lines.is_empty() {
            return Ok(None);
        }
        fold_trace(record_id, lines).map(Some)
    }

    /// Record ids with a journal on disk, sorted by file stem.
    pub fn list(&self) -> Result<Vec<String>, RefineError> {
        let mut stems = Vec::new();
        let entries = std::fs::read_dir(&self.dir).map_err(|source| RefineError::Io {
            path: self.dir.clone(),
            source,
        })?;
        for entry in entries {
            let entry = entry.map_err(|source| RefineError::Io {
                path: self.dir.clone(),
                source,
            })?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(stem) = name.strip_suffix(".jsonl") {
                stems.push(stem.to_string());
            }
        }
        stems.sort();
        Ok(stems)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Collapses a journal into its current state. Rules: the first line must be
/// the start record; iteration indices must arrive in order, except that a
/// line re-using an existing index replaces that attempt (and anything after
/// it); a terminal line is authoritative only until further lines follow it.
pub fn fold_trace(record_id: &str, lines: Vec<TraceLine>) -> Result<TraceState, RefineError> {
    let corrupt = |message: String| RefineError::CorruptTrace {
        record_id: record_id.to_string(),
        message,
    };
    let mut lines = lines.into_iter();
    let start = match lines.next() {
        Some(TraceLine::Start(start)) => start,
        Some(_) => return Err(corrupt("first line must be the start record".into())),
        None => return Err(corrupt("journal is empty".into())),
    };
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut final_record = None;
    for line in lines {
        match line {
            TraceLine::Start(_) => {
                return Err(corrupt("journal holds a second start record".into()))
            }
            TraceLine::Iteration(it) => {
                final_record = None;
                if let Some(pos) = iterations.iter().position(|p| p.k == it.k) {
                    iterations.truncate(pos);
                }
                if it.k != iterations.len() + 1 {
                    return Err(corrupt(format!(
                        "iteration {} follows iteration {}",
                        it.k,
                        iterations.len()
                    )));
                }
                iterations.push(it);
            }
            TraceLine::Final(f) => final_record = Some(f),
        }
    }
    Ok(TraceState {
        start,
        iterations,
        final_record,
    })
}

/// Checks the instruction lineage: the first iteration runs the initial
/// instruction, every later iteration runs exactly the revision recorded by
/// its predecessor, and every stored digest matches its text.
pub fn verify_instruction_chain(record_id: &str, state: &TraceState) -> Result<(), RefineError> {
    let broken = |iteration: usize, message: String| RefineError::ChainBroken {
        record_id: record_id.to_string(),
        iteration,
        message,
    };
    if state.start.instruction_sha256 != sha256_hex(state.start.initial_instruction.as_bytes()) {
        return Err(broken(
            0,
            "start record digest does not match the initial instruction".into(),
        ));
    }
    let mut expected = state.start.instruction_sha256.clone();
    for it in &state.iterations {
        if it.instruction_sha256 != sha256_hex(it.instruction.as_bytes()) {
            return Err(broken(
                it.k,
                "stored digest does not match the stored instruction".into(),
            ));
        }
        if it.instruction_sha256 != expected {
            return Err(broken(
                it.k,
                "instruction does not derive from the previous revision".into(),
            ));
        }
        match (&it.revised_instruction, &it.revised_sha256) {
            (Some(revised), Some(digest)) => {
                if *digest != sha256_hex(revised.as_bytes()) {
                    return Err(broken(
                        it.k,
                        "revision digest does not match the revision text".into(),
                    ));
                }
                expected = digest.clone();
            }
            (None, None) => {}
            _ => {
                return Err(broken(
                    it.k,
                    "revision text and digest must be present together".into(),
                ))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start(instruction: &str) -> StartRecord {
        StartRecord {
            record_id: "r1".into(),
            initial_instruction: instruction.into(),
            instruction_sha256: sha256_hex(instruction.as_bytes()),
            config_digest: "cfg".into(),
            started_ms: 0,
        }
    }

    fn iteration(k: usize, instruction: &str, revised: Option<&str>) -> IterationRecord {
        IterationRecord {
            k,
            instruction: instruction.into(),
            instruction_sha256: sha256_hex(instruction.as_bytes()),
            video_ref: format!("mock://video/{k}"),
            frame_indices: vec![0],
            sample_mode: SampleMode::UniformFallback,
            report: BTreeMap::new(),
            overall: 2.0,
            completion_sha256: "c".into(),
            reprompted: false,
            at_ms: k as u64,
            revised_instruction: revised.map(String::from),
            revised_sha256: revised.map(|r| sha256_hex(r.as_bytes())),
        }
    }

    fn final_line(stop: StopReason) -> FinalRecord {
        FinalRecord {
            stop,
            iterations: 1,
            final_overall: Some(2.0),
            finished_ms: 9,
        }
    }

    #[test]
    fn fold_accepts_an_interrupted_journal() {
        let lines = vec![
            TraceLine::Start(start("a")),
            TraceLine::Iteration(iteration(1, "a", Some("b"))),
        ];
        let state = fold_trace("r1", lines).unwrap();
        assert_eq!(state.iterations.len(), 1);
        assert!(state.final_record.is_none());
        assert!(!state.is_complete());
    }

    #[test]
    fn later_lines_supersede_an_error_terminal() {
        let lines = vec![
            TraceLine::Start(start("a")),
            TraceLine::Iteration(iteration(1, "a", Some("b"))),
            TraceLine::Final(final_line(StopReason::Error {
                role: "generator".into(),
                iteration: 2,
                message: "boom".into(),
            })),
            TraceLine::Iteration(iteration(2, "b", None)),
            TraceLine::Final(final_line(StopReason::IterationLimit)),
        ];
        let state = fold_trace("r1", lines).unwrap();
        assert_eq!(state.iterations.len(), 2);
        assert_eq!(
            state.final_record.unwrap().stop,
            StopReason::IterationLimit
        );
    }

    #[test]
    fn reappended_iteration_replaces_the_earlier_attempt() {
        let amended = {
            let mut it = iteration(1, "a", Some("b"));
            it.reprompted = true;
            it
        };
        let lines = vec![
            TraceLine::Start(start("a")),
            TraceLine::Iteration(iteration(1, "a", None)),
            TraceLine::Iteration(amended.clone()),
        ];
        let state = fold_trace("r1", lines).unwrap();
        assert_eq!(state.iterations, vec![amended]);
    }

    #[test]
    fn fold_rejects_gaps_and_misplaced_lines() {
        let gap = vec![
            TraceLine::Start(start("a")),
            TraceLine::Iteration(iteration(2, "b", None)),
        ];
        assert!(matches!(
            fold_trace("r1", gap).unwrap_err(),
            RefineError::CorruptTrace { .. }
        ));
        let headless = vec![TraceLine::Iteration(iteration(1, "a", None))];
        assert!(fold_trace("r1", headless).is_err());
        assert!(fold_trace("r1", vec![]).is_err());
    }

    #[test]
    fn chain_verification_accepts_linked_and_rejects_tampered_traces() {
        let mut state = fold_trace(
            "r1",
            vec![
                TraceLine::Start(start("a")),
                TraceLine::Iteration(iteration(1, "a", Some("b"))),
                TraceLine::Iteration(iteration(2, "b", None)),
            ],
        )
        .unwrap();
        verify_instruction_chain("r1", &state).unwrap();

        state.iterations[1].instruction = "tampered".into();
        state.iterations[1].instruction_sha256 = sha256_hex(b"tampered");
        let err = verify_instruction_chain("r1", &state).unwrap_err();
        assert!(matches!(
            err,
            RefineError::ChainBroken { iteration: 2, .. }
        ));
    }

    #[test]
    fn store_appends_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let store = TraceStore::new(dir.path().join("traces")).unwrap();
        assert!(store.state("video 7/a").unwrap().is_none());

        store
            .append("video 7/a", &TraceLine::Start(start("a")))
            .unwrap();
        store
            .append(
                "video 7/a",
                &TraceLine::Iteration(iteration(1, "a", Some("b"))),
            )
            .unwrap();
        let state = store.state("video 7/a").unwrap().unwrap();
        assert_eq!(state.iterations.len(), 1);
        assert_eq!(store.list().unwrap(), vec!["video_7_a".to_string()]);
    }

    #[test]
    fn sanitize_maps_path_separators_and_empty_names() {
        assert_eq!(sanitize_id("video 7/a"), "video_7_a");
        assert_eq!(sanitize_id("ok-name_1.2"), "ok-name_1.2");
        assert!(sanitize_id("..").starts_with("record_"));
        assert!(sanitize_id("").starts_with("record_"));
    }
}
