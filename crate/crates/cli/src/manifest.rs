//! The run manifest.
//!
//! Every subcommand writes `manifest.json` into its output directory before
//! contacting any endpoint, and rewrites it with the end timestamp once the
//! command completes. The manifest carries the tool version, the fully
//! resolved configuration, prompt template checksums, input digests, and the
//! seed — enough to reproduce the run or explain a stale artifact.
//!
//! Input digests are keyed by *role* (`records`, `frames`, `truth`, ...)
//! rather than by path, so two runs over identical bytes in different
//! locations produce identical manifests.

use crate::config::Settings;
use crate::error::CliError;
use aigve_core::clock::Clock;
use aigve_core::hash::sha256_hex;
use aigve_gateway::prompts;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub started_ms: u64,
    pub finished_ms: Option<u64>,
    /// Prompt template ids mapped to content digests.
    pub prompt_checksums: BTreeMap<String, String>,
    /// Input digests keyed by role, not path.
    pub input_digests: BTreeMap<String, String>,
    pub config: Settings,
}

impl RunManifest {
    pub fn new(command: &str, settings: &Settings, clock: &dyn Clock) -> Self {
        let prompt_checksums = [
            prompts::EVALUATOR_SYSTEM,
            prompts::INSTRUCTION_REVISOR,
            prompts::COMMENT_REVISOR,
            prompts::COMMENT_VALIDATOR,
            prompts::JUDGE_RUBRIC,
        ]
        .iter()
        .map(|template| (template.id(), template.checksum()))
        .collect();
        Self {
            tool: "aigve",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: settings.seed,
            started_ms: clock.now_ms(),
            finished_ms: None,
            prompt_checksums,
            input_digests: BTreeMap::new(),
            config: settings.clone(),
        }
    }

    pub fn add_input(&mut self, role: &str, digest: String) {
        self.input_digests.insert(role.to_string(), digest);
    }

    /// Writes `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Input(format!("manifest serialization failed: {e}")))?;
        fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))
    }

    /// Stamps the end time and rewrites the manifest.
    pub fn finish(&mut self, dir: &Path, clock: &dyn Clock) -> Result<(), CliError> {
        self.finished_ms = Some(clock.now_ms());
        self.write(dir)
    }
}

/// Digest of one file's bytes.
pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Digest of an input that never touched disk (inline flags).
pub fn digest_text(text: &str) -> String {
    sha256_hex(text.as_bytes())
}

/// Digest of a directory tree: each file's relative path and content hash,
/// folded in sorted order so the result is independent of listing order.
pub fn digest_dir(root: &Path) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    fold_dir(root, Path::new(""), &mut hasher)?;
    let digest = hasher.finalize();
    Ok(digest.iter().map(|byte| format!("{byte:02x}")).collect())
}

fn fold_dir(dir: &Path, rel: &Path, hasher: &mut Sha256) -> Result<(), CliError> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(dir, e))?;
    entries.sort_by_key(|entry| entry.file_name());
    for entry in entries {
        let path = entry.path();
        let rel_path = rel.join(entry.file_name());
        if path.is_dir() {
            fold_dir(&path, &rel_path, hasher)?;
        } else {
            hasher.update(rel_path.to_string_lossy().as_bytes());
            hasher.update([0]);
            hasher.update(digest_file(&path)?.as_bytes());
            hasher.update([0]);
        }
    }
    Ok(())
}
