//! Frame ingestion and emission.
//!
//! Input formats: a directory of 8-bit PGM/PPM files consumed in
//! lexicographic filename order, or a headerless stream of concatenated
//! grayscale frames with externally supplied dimensions. RGB inputs are
//! converted with the same BT.601 weights the sampler documents, so the
//! change fractions do not depend on which container the frames arrived in.
//! Selected frames are emitted as PNG plus a JSON sidecar describing the
//! selection.

use super::{to_grayscale, Frame, SampleMode, SamplerConfig, SamplerError};
use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

/// Loads every `.pgm`/`.ppm` file in `dir`, sorted by filename.
pub fn load_frames_dir(dir: &Path) -> Result<Vec<Frame>, SamplerError> {
    let entries = fs::read_dir(dir).map_err(|source| SamplerError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| SamplerError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let is_frame = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("ppm"))
            .unwrap_or(false);
        if path.is_file() && is_frame {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(SamplerError::NoFramesFound {
            dir: dir.to_path_buf(),
        });
    }
    paths.sort();

    let mut frames = Vec::with_capacity(paths.len());
    for (index, path) in paths.iter().enumerate() {
        frames.push(load_frame_file(path, index)?);
    }
    check_dimensions(&frames)?;
    Ok(frames)
}

/// Loads one PGM/PPM file as a grayscale frame.
pub fn load_frame_file(path: &Path, index: usize) -> Result<Frame, SamplerError> {
    let img = image::open(path).map_err(|e| SamplerError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    match img {
        DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            Frame::new(index, w, h, gray.into_raw())
        }
        DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = rgb.dimensions();
            to_grayscale(rgb.as_raw(), w, h, index)
        }
        _ => Err(SamplerError::UnsupportedPixelFormat {
            path: path.to_path_buf(),
        }),
    }
}

/// Loads a headerless stream of concatenated 8-bit grayscale frames.
pub fn load_raw_stream(path: &Path, width: u32, height: u32) -> Result<Vec<Frame>, SamplerError> {
    let bytes = fs::read(path).map_err(|source| SamplerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    frames_from_raw(&bytes, width, height, path)
}

fn frames_from_raw(
    bytes: &[u8],
    width: u32,
    height: u32,
    path: &Path,
) -> Result<Vec<Frame>, SamplerError> {
    let frame_bytes = width as usize * height as usize;
    if frame_bytes == 0 {
        return Err(SamplerError::InvalidConfig(
            "raw stream dimensions must be non-zero".into(),
        ));
    }
    if bytes.is_empty() {
        return Err(SamplerError::NoFramesFound {
            dir: path.to_path_buf(),
        });
    }
    if bytes.len() % frame_bytes != 0 {
        return Err(SamplerError::TruncatedStream {
            frame_bytes,
            got: bytes.len(),
        });
    }
    bytes
        .chunks_exact(frame_bytes)
        .enumerate()
        .map(|(index, chunk)| Frame::new(index, width, height, chunk.to_vec()))
        .collect()
}

fn check_dimensions(frames: &[Frame]) -> Result<(), SamplerError> {
    let expected = (frames[0].width, frames[0].height);
    for frame in frames {
        if (frame.width, frame.height) != expected {
            return Err(SamplerError::DimensionMismatch {
                expected,
                got: (frame.width, frame.height),
                index: frame.index,
            });
        }
    }
    Ok(())
}

/// Encodes a frame as a grayscale PNG.
pub fn encode_png(frame: &Frame) -> Result<Vec<u8>, SamplerError> {
    let buffer: image::GrayImage =
        image::ImageBuffer::from_raw(frame.width, frame.height, frame.pixels().to_vec())
            .ok_or_else(|| SamplerError::Encode("pixel buffer does not match dimensions".into()))?;
    let mut out = Cursor::new(Vec::new());
    buffer
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| SamplerError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

/// Writes a frame as `frame_<index, zero-padded>.png` under `dir` and
/// returns the filename.
pub fn write_png(frame: &Frame, dir: &Path) -> Result<String, SamplerError> {
    let name = format!("frame_{:06}.png", frame.index);
    let bytes = encode_png(frame)?;
    fs::write(dir.join(&name), bytes).map_err(|source| SamplerError::Io {
        path: dir.join(&name),
        source,
    })?;
    Ok(name)
}

/// Selection summary written next to emitted frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub indices: Vec<usize>,
    pub mode: SampleMode,
    pub diffs: Vec<f64>,
    pub config: SamplerConfig,
    /// Emitted PNG filenames, parallel to `indices`.
    pub frame_files: Vec<String>,
}

impl SampleSidecar {
    pub fn write(&self, path: &Path) -> Result<(), SamplerError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| SamplerError::Encode(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|source| SamplerError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, SamplerError> {
        let text = fs::read_to_string(path).map_err(|source| SamplerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| SamplerError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}
