//! Turning a generated video reference into evaluator-ready frames.
//!
//! Generation endpoints return opaque references (URLs, paths, handles), so
//! the loop needs a pluggable way to get decoded frames for one. Three
//! sources cover the practical cases: synthetic frames for offline runs,
//! a directory of already-decoded images, and an external decoder command
//! for real video files.

use crate::RefineError;
use aigve_core::sampler::io::{encode_png, load_frames_dir};
use aigve_core::sampler::{select_frames, Frame, SampledFrames, SamplerConfig};
use async_trait::async_trait;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[async_trait]
pub trait FrameSource: Send + Sync {
    /// Decoded frames for one video reference, in display order.
    async fn frames_for(&self, video_ref: &str) -> Result<Vec<Frame>, RefineError>;
}

/// Runs the sampler over a decoded stream and PNG-encodes the keepers, in
/// selection order — exactly what the evaluator consumes.
pub fn sample_and_encode(
    frames: &[Frame],
    config: &SamplerConfig,
) -> Result<(SampledFrames, Vec<Vec<u8>>), RefineError> {
    let sampled = select_frames(frames, config)?;
    let pngs = sampled
        .indices
        .iter()
        .map(|&index| encode_png(&frames[index]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((sampled, pngs))
}

/// Synthetic frames derived from the video reference, for offline runs.
/// Each reference yields a stable clip whose scene changes land at
/// hash-determined points, so dynamic selection has something to find.
#[derive(Debug, Clone)]
pub struct MockFrameSource {
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
}

impl Default for MockFrameSource {
    fn default() -> Self {
        Self {
            frame_count: 24,
            width: 8,
            height: 8,
        }
    }
}

#[async_trait]
impl FrameSource for MockFrameSource {
    async fn frames_for(&self, video_ref: &str) -> Result<Vec<Frame>, RefineError> {
        let digest = Sha256::digest(video_ref.as_bytes());
        let pixel_count = (self.width * self.height) as usize;
        (0..self.frame_count)
            .map(|t| {
                // A scene holds for a few frames, then cuts to the next
                // digest byte; pixels vary mildly within a frame.
                let base = digest[(t / 3) % digest.len()];
                let pixels = (0..pixel_count)
                    .map(|i| base.wrapping_add((i % 5) as u8 * 3))
                    .collect();
                Frame::new(t, self.width, self.height, pixels).map_err(RefineError::from)
            })
            .collect()
    }
}

/// Frames already decoded to image files in a directory. The reference is
/// the directory path, `file://` URLs accepted; other schemes are refused so
/// a remote reference cannot be mistaken for a local one.
#[derive(Debug, Clone)]
pub struct PgmDirSource {
    root: PathBuf,
}

impl PgmDirSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn resolve(&self, video_ref: &str) -> Result<PathBuf, RefineError> {
        let path = if let Some(rest) = video_ref.strip_prefix("file://") {
            PathBuf::from(rest)
        } else if video_ref.contains("://") {
            return Err(RefineError::FrameSource {
                video_ref: video_ref.to_string(),
                message: "only local paths and file:// references are supported".into(),
            });
        } else {
            PathBuf::from(video_ref)
        };
        Ok(if path.is_absolute() {
            path
        } else {
            self.root.join(path)
        })
    }
}

#[async_trait]
impl FrameSource for PgmDirSource {
    async fn frames_for(&self, video_ref: &str) -> Result<Vec<Frame>, RefineError> {
        let dir = self.resolve(video_ref)?;
        load_frames_dir(&dir).map_err(|e| RefineError::FrameSource {
            video_ref: video_ref.to_string(),
            message: e.to_string(),
        })
    }
}

/// Decodes via an external command (ffmpeg-style). The template is an argv
/// whose `{video}` and `{out}` placeholders are substituted per call; the
/// command must leave PGM/PPM frames in the output directory.
pub struct CommandFrameSource {
    argv: Vec<String>,
    workdir: PathBuf,
}

impl CommandFrameSource {
    pub fn new(argv: Vec<String>, workdir: impl Into<PathBuf>) -> Result<Self, RefineError> {
        if argv.is_empty() {
            return Err(RefineError::InvalidConfig(
                "decoder command is empty".into(),
            ));
        }
        if !argv.iter().any(|a| a.contains("{video}")) {
            return Err(RefineError::InvalidConfig(
                "decoder command has no {video} placeholder".into(),
            ));
        }
        if !argv.iter().any(|a| a.contains("{out}")) {
            return Err(RefineError::InvalidConfig(
                "decoder command has no {out} placeholder".into(),
            ));
        }
        Ok(Self {
            argv,
            workdir: workdir.into(),
        })
    }
}

#[async_trait]
impl FrameSource for CommandFrameSource {
    async fn frames_for(&self, video_ref: &str) -> Result<Vec<Frame>, RefineError> {
        let source_err = |message: String| RefineError::FrameSource {
            video_ref: video_ref.to_string(),
            message,
        };
        std::fs::create_dir_all(&self.workdir).map_err(|source| RefineError::Io {
            path: self.workdir.clone(),
            source,
        })?;
        let out = tempfile::tempdir_in(&self.workdir).map_err(|source| RefineError::Io {
            path: self.workdir.clone(),
            source,
        })?;
        let out_str = out.path().to_string_lossy().to_string();
        let argv: Vec<String> = self
            .argv
            .iter()
            .map(|a| a.replace("{video}", video_ref).replace("{out}", &out_str))
            .collect();

        let status = tokio::process::Command::new(&argv[0])
            .args(&argv[1..])
            .status()
            .await
            .map_err(|e| source_err(format!("failed to run decoder '{}': {e}", argv[0])))?;
        if !status.success() {
            return Err(source_err(format!("decoder exited with {status}")));
        }
        load_frames_dir(out.path()).map_err(|e| source_err(e.to_string()))
    }
}

/// Where decoded frames for a command source live while being sampled.
pub fn decoder_workdir(run_root: &Path) -> PathBuf {
    run_root.join("artifacts").join("decode")
}
