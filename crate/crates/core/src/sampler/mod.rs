//! Dynamic frame sampling.
//!
//! Evaluating a video with a vision-language model means choosing which
//! frames to show it. Uniform sampling wastes the budget on static stretches
//! and can skip over short bursts of motion, so selection is driven by
//! inter-frame change instead: a frame is kept when enough of its pixels
//! differ from the previous frame (threshold `theta`) and it is not too close
//! to the last kept frame (minimum gap `gamma`). Frame 0 always anchors the
//! selection. If more than `target_n` frames qualify the set is thinned
//! evenly; if none qualify beyond the anchor the sampler falls back to plain
//! uniform coverage so the evaluator still sees the whole clip.

pub mod io;

use serde::{Deserialize, Serialize};
use std::io::Error as IoError;
use std::path::PathBuf;
use thiserror::Error;

/// One 8-bit grayscale frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// Position in the source stream.
    pub index: usize,
    pub width: u32,
    pub height: u32,
    pixels: Vec<u8>,
}

impl Frame {
    /// Wraps a row-major grayscale buffer; the length must be `width * height`.
    pub fn new(index: usize, width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, SamplerError> {
        let expected = width as usize * height as usize;
        if expected == 0 || pixels.len() != expected {
            return Err(SamplerError::PixelCountMismatch {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self {
            index,
            width,
            height,
            pixels,
        })
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

/// Sampler parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Change threshold: a frame qualifies when the changed-pixel fraction
    /// against its predecessor strictly exceeds this.
    pub theta: f64,
    /// Minimum index gap between kept frames.
    pub gamma: usize,
    /// Maximum number of frames to keep.
    pub target_n: usize,
    /// Per-pixel tolerance: a pixel counts as changed when the absolute
    /// intensity difference strictly exceeds this. Zero means any change.
    pub delta: u8,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            theta: 0.05,
            gamma: 5,
            target_n: 16,
            delta: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !self.theta.is_finite() || !(0.0..=1.0).contains(&self.theta) {
            return Err(SamplerError::InvalidConfig(format!(
                "theta must be within [0, 1], got {}",
                self.theta
            )));
        }
        if self.gamma == 0 {
            return Err(SamplerError::InvalidConfig("gamma must be at least 1".into()));
        }
        if self.target_n == 0 {
            return Err(SamplerError::InvalidConfig(
                "target_n must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// How the final index set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Change-driven selection fit within the budget.
    Dynamic,
    /// Change-driven selection exceeded the budget and was thinned evenly.
    DynamicSubsampled,
    /// No frame beyond the anchor qualified; even coverage instead.
    UniformFallback,
}

/// Result of sampling one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFrames {
    /// Selected frame indices, strictly increasing, starting at 0.
    pub indices: Vec<usize>,
    pub mode: SampleMode,
    /// Changed-pixel fraction per frame against its predecessor;
    /// `diffs[0]` is 0 by convention (the anchor has no predecessor).
    pub diffs: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("frame stream is empty")]
    EmptyStream,
    #[error("frame {index} is {got:?} but the stream started as {expected:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        got: (u32, u32),
        index: usize,
    },
    #[error("pixel buffer holds {got} bytes, expected {expected}")]
    PixelCountMismatch { expected: usize, got: usize },
    #[error("RGB buffer holds {got} bytes, expected {expected}")]
    RgbBufferMismatch { expected: usize, got: usize },
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("raw stream holds {got} bytes, not a multiple of the {frame_bytes}-byte frame size")]
    TruncatedStream { frame_bytes: usize, got: usize },
    #[error("no frame files found in {dir}")]
    NoFramesFound { dir: PathBuf },
    #[error("{path}: only 8-bit grayscale or RGB frames are supported")]
    UnsupportedPixelFormat { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: IoError,
    },
    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("PNG encoding failed: {0}")]
    Encode(String),
    #[error("invalid downscale factor: {0}")]
    InvalidDownscale(String),
}

/// Fraction of pixels whose absolute intensity change against the previous
/// frame strictly exceeds `delta`.
pub fn frame_diff(current: &Frame, previous: &Frame, delta: u8) -> Result<f64, SamplerError> {
    if (current.width, current.height) != (previous.width, previous.height) {
        return Err(SamplerError::DimensionMismatch {
            expected: (previous.width, previous.height),
            got: (current.width, current.height),
            index: current.index,
        });
    }
    let changed = current
        .pixels
        .iter()
        .zip(&previous.pixels)
        .filter(|(a, b)| a.abs_diff(**b) > delta)
        .count();
    Ok(changed as f64 / current.pixels.len() as f64)
}

/// Samples a stream of frames: computes the change sequence, then selects.
pub fn select_frames(stream: &[Frame], config: &SamplerConfig) -> Result<SampledFrames, SamplerError> {
    config.validate()?;
    if stream.is_empty() {
        return Err(SamplerError::EmptyStream);
    }
    let mut diffs = vec![0.0; stream.len()];
    for t in 1..stream.len() {
        diffs[t] = frame_diff(&stream[t], &stream[t - 1], config.delta)?;
    }
    Ok(select_from_diffs(&diffs, config))
}

/// Selection on a precomputed change sequence. `diffs[t]` is the change of
/// frame `t` against frame `t - 1`; `diffs[0]` is ignored. `diffs.len()` is
/// the stream length and must be at least 1.
pub fn select_from_diffs(diffs: &[f64], config: &SamplerConfig) -> SampledFrames {
    let len = diffs.len();
    let mut selected = vec![0usize];
    let mut last_kept = 0usize;
    for (t, &diff) in diffs.iter().enumerate().skip(1) {
        if diff > config.theta && t - last_kept >= config.gamma {
            selected.push(t);
            last_kept = t;
        }
    }

    if selected.len() == 1 {
        return SampledFrames {
            indices: uniform_indices(len, config.target_n),
            mode: SampleMode::UniformFallback,
            diffs: diffs.to_vec(),
        };
    }

    if selected.len() > config.target_n {
        let positions = uniform_indices(selected.len(), config.target_n);
        let indices = positions.into_iter().map(|p| selected[p]).collect();
        return SampledFrames {
            indices,
            mode: SampleMode::DynamicSubsampled,
            diffs: diffs.to_vec(),
        };
    }

    SampledFrames {
        indices: selected,
        mode: SampleMode::Dynamic,
        diffs: diffs.to_vec(),
    }
}

/// Up to `n` evenly spaced indices into a sequence of length `len`, always
/// including both endpoints, deduplicated when `len < n` makes the rounded
/// positions collide. Positions are `round(k * (len-1) / (n-1))`.
pub fn uniform_indices(len: usize, n: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    if n == 1 || len == 1 {
        return vec![0];
    }
    let mut out = Vec::with_capacity(n.min(len));
    for k in 0..n {
        let pos = (k as f64 * (len - 1) as f64 / (n - 1) as f64).round() as usize;
        if out.last() != Some(&pos) {
            out.push(pos);
        }
    }
    out
}

/// Converts a packed 8-bit RGB buffer to grayscale with the BT.601 weights
/// (0.299 R + 0.587 G + 0.114 B), rounding half away from zero.
pub fn to_grayscale(rgb: &[u8], width: u32, height: u32, index: usize) -> Result<Frame, SamplerError> {
    let expected = width as usize * height as usize * 3;
    if rgb.len() != expected {
        return Err(SamplerError::RgbBufferMismatch {
            expected,
            got: rgb.len(),
        });
    }
    let pixels = rgb
        .chunks_exact(3)
        .map(|px| {
            let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Frame::new(index, width, height, pixels)
}

/// Box-mean downscale by an integer factor; ragged edges are truncated.
pub fn downscale(frame: &Frame, factor: u32) -> Result<Frame, SamplerError> {
    if factor == 0 {
        return Err(SamplerError::InvalidDownscale("factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(frame.clone());
    }
    let new_w = frame.width / factor;
    let new_h = frame.height / factor;
    if new_w == 0 || new_h == 0 {
        return Err(SamplerError::InvalidDownscale(format!(
            "factor {factor} collapses a {}x{} frame",
            frame.width, frame.height
        )));
    }
    let mut pixels = Vec::with_capacity(new_w as usize * new_h as usize);
    let block = (factor * factor) as f64;
    for by in 0..new_h {
        for bx in 0..new_w {
            let mut sum = 0u32;
            for dy in 0..factor {
                for dx in 0..factor {
                    let x = bx * factor + dx;
                    let y = by * factor + dy;
                    sum += frame.pixels[(y * frame.width + x) as usize] as u32;
                }
            }
            pixels.push((sum as f64 / block).round() as u8);
        }
    }
    Frame::new(frame.index, new_w, new_h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn constant_frame(index: usize, value: u8) -> Frame {
        Frame::new(index, 4, 4, vec![value; 16]).unwrap()
    }

    #[test]
    fn frame_diff_counts_changed_fraction() {
        let a = Frame::new(0, 2, 2, vec![10, 10, 10, 10]).unwrap();
        let b = Frame::new(1, 2, 2, vec![10, 50, 10, 50]).unwrap();
        assert_eq!(frame_diff(&b, &a, 0).unwrap(), 0.5);
        // With a tolerance larger than the change nothing counts.
        assert_eq!(frame_diff(&b, &a, 40).unwrap(), 0.0);
        // Strictly-greater: a change of exactly delta does not count.
        let c = Frame::new(2, 2, 2, vec![10, 10, 10, 11]).unwrap();
        assert_eq!(frame_diff(&c, &a, 1).unwrap(), 0.0);
        assert_eq!(frame_diff(&c, &a, 0).unwrap(), 0.25);
    }

    #[test]
    fn frame_diff_is_symmetric() {
        let a = Frame::new(0, 2, 2, vec![0, 100, 200, 30]).unwrap();
        let b = Frame::new(1, 2, 2, vec![255, 90, 200, 31]).unwrap();
        assert_eq!(frame_diff(&a, &b, 5).unwrap(), frame_diff(&b, &a, 5).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = constant_frame(0, 0);
        let b = Frame::new(1, 2, 8, vec![0; 16]).unwrap();
        assert!(matches!(
            frame_diff(&b, &a, 0),
            Err(SamplerError::DimensionMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn anchor_is_always_first() {
        let diffs = vec![0.0, 0.9, 0.9, 0.9];
        let cfg = SamplerConfig { theta: 0.5, gamma: 1, target_n: 16, delta: 0 };
        let sampled = select_from_diffs(&diffs, &cfg);
        assert_eq!(sampled.indices[0], 0);
        assert_eq!(sampled.indices, vec![0, 1, 2, 3]);
        assert_eq!(sampled.mode, SampleMode::Dynamic);
    }

    #[test]
    fn gap_rule_suppresses_nearby_qualifiers() {
        // Changes at every frame, but the gap keeps only every gamma-th.
        let diffs = vec![0.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9];
        let cfg = SamplerConfig { theta: 0.5, gamma: 3, target_n: 16, delta: 0 };
        let sampled = select_from_diffs(&diffs, &cfg);
        assert_eq!(sampled.indices, vec![0, 3, 6]);
    }

    #[test]
    fn worked_example_matches_hand_derivation() {
        // d = [_, 0.5, 0.0, 0.5, 0.5], theta = 0.3, gamma = 2:
        // t=1 qualifies on change but 1-0 < 2; t=3 passes both; t=4 is too
        // close to 3. Anchor plus frame 3.
        let diffs = vec![0.0, 0.5, 0.0, 0.5, 0.5];
        let cfg = SamplerConfig { theta: 0.3, gamma: 2, target_n: 8, delta: 0 };
        let sampled = select_from_diffs(&diffs, &cfg);
        assert_eq!(sampled.indices, vec![0, 3]);
        assert_eq!(sampled.mode, SampleMode::Dynamic);
    }

    #[test]
    fn static_stream_falls_back_to_uniform() {
        let diffs = vec![0.0; 100];
        let cfg = SamplerConfig { theta: 0.05, gamma: 5, target_n: 8, delta: 0 };
        let sampled = select_from_diffs(&diffs, &cfg);
        assert_eq!(sampled.mode, SampleMode::UniformFallback);
        assert_eq!(sampled.indices, vec![0, 14, 28, 42, 57, 71, 85, 99]);
    }

    #[test]
    fn sparse_changes_are_all_kept() {
        let mut diffs = vec![0.0; 100];
        diffs[10] = 0.5;
        diffs[60] = 0.5;
        let cfg = SamplerConfig { theta: 0.1, gamma: 5, target_n: 16, delta: 0 };
        let sampled = select_from_diffs(&diffs, &cfg);
        assert_eq!(sampled.indices, vec![0, 10, 60]);
        assert_eq!(sampled.mode, SampleMode::Dynamic);
    }

    #[test]
    fn busy_stream_is_thinned_to_budget() {
        let diffs = vec![0.9; 200];
        let cfg = SamplerConfig { theta: 0.1, gamma: 1, target_n: 8, delta: 0 };
        let sampled = select_from_diffs(&diffs, &cfg);
        assert_eq!(sampled.mode, SampleMode::DynamicSubsampled);
        assert_eq!(sampled.indices.len(), 8);
        assert_eq!(*sampled.indices.first().unwrap(), 0);
        assert_eq!(*sampled.indices.last().unwrap(), 199);
        assert!(sampled.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_frame_stream() {
        let frames = vec![constant_frame(0, 7)];
        let sampled = select_frames(&frames, &SamplerConfig::default()).unwrap();
        assert_eq!(sampled.indices, vec![0]);
        assert_eq!(sampled.mode, SampleMode::UniformFallback);
    }

    #[test]
    fn short_stream_fallback_returns_all_frames() {
        // Five static frames under a budget of eight: uniform positions
        // dedupe to every frame.
        let diffs = vec![0.0; 5];
        let cfg = SamplerConfig { theta: 0.05, gamma: 5, target_n: 8, delta: 0 };
        let sampled = select_from_diffs(&diffs, &cfg);
        assert_eq!(sampled.indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(sampled.mode, SampleMode::UniformFallback);
    }

    #[test]
    fn uniform_indices_cover_endpoints() {
        assert_eq!(uniform_indices(100, 8), vec![0, 14, 28, 42, 57, 71, 85, 99]);
        assert_eq!(uniform_indices(3, 8), vec![0, 1, 2]);
        assert_eq!(uniform_indices(1, 8), vec![0]);
        assert_eq!(uniform_indices(10, 1), vec![0]);
        assert_eq!(uniform_indices(2, 2), vec![0, 1]);
    }

    #[test]
    fn grayscale_uses_bt601_weights() {
        let rgb = vec![255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255];
        let frame = to_grayscale(&rgb, 4, 1, 0).unwrap();
        assert_eq!(frame.pixels(), &[76, 150, 29, 255]);
    }

    #[test]
    fn grayscale_rejects_wrong_length() {
        assert!(matches!(
            to_grayscale(&[0, 0], 2, 1, 0),
            Err(SamplerError::RgbBufferMismatch { expected: 6, got: 2 })
        ));
    }

    #[test]
    fn downscale_box_means() {
        let frame = Frame::new(0, 4, 2, vec![0, 4, 10, 10, 0, 0, 10, 14]).unwrap();
        let small = downscale(&frame, 2).unwrap();
        assert_eq!((small.width, small.height), (2, 1));
        assert_eq!(small.pixels(), &[1, 11]);
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        assert!(SamplerConfig { theta: -0.1, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { theta: 1.5, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { gamma: 0, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { target_n: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(
            select_frames(&[], &SamplerConfig::default()),
            Err(SamplerError::EmptyStream)
        ));
    }
}
