//! `aigve sample` — pick the frames worth scoring from a decoded stream.
//!
//! Reads a directory of PGM/PPM frames (or a raw stream of concatenated
//! 8-bit grayscale frames with explicit dimensions), runs change-driven
//! selection, and writes the kept frames as PNGs plus a `sample.json`
//! sidecar recording the chosen indices, the per-frame change fractions, and
//! the selection mode. The sidecar lets `score --frames-from` reuse the
//! sample without decoding anything again.

use crate::config::{SamplerArgs, Settings};
use crate::error::CliError;
use crate::manifest::{digest_dir, digest_file, RunManifest};
use aigve_core::sampler::io::{load_frames_dir, load_raw_stream, write_png, SampleSidecar};
use aigve_core::sampler::select_frames;
use std::fs;
use std::path::PathBuf;

pub const SIDECAR_FILE: &str = "sample.json";

#[derive(Debug, clap::Args)]
pub struct SampleArgs {
    /// Directory of PGM/PPM frames to sample.
    #[arg(
        long,
        value_name = "DIR",
        required_unless_present = "raw",
        conflicts_with = "raw"
    )]
    pub frames: Option<PathBuf>,

    /// Raw stream of concatenated 8-bit grayscale frames.
    #[arg(long, value_name = "FILE", requires = "width", requires = "height")]
    pub raw: Option<PathBuf>,

    /// Frame width in pixels (raw streams only).
    #[arg(long, value_name = "PIXELS")]
    pub width: Option<u32>,

    /// Frame height in pixels (raw streams only).
    #[arg(long, value_name = "PIXELS")]
    pub height: Option<u32>,

    /// Output directory for the kept frames and sidecar.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    #[command(flatten)]
    pub sampler: SamplerArgs,
}

pub fn run(args: &SampleArgs, mut settings: Settings) -> Result<(), CliError> {
    settings.override_sampler(&args.sampler)?;
    let clock = settings.clock();

    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut manifest = RunManifest::new("sample", &settings, clock.as_ref());

    let frames = if let Some(dir) = &args.frames {
        manifest.add_input("frames", digest_dir(dir)?);
        load_frames_dir(dir)?
    } else {
        let raw = args.raw.as_ref().expect("clap enforces a frame source");
        let (width, height) = (
            args.width.expect("clap ties --width to --raw"),
            args.height.expect("clap ties --height to --raw"),
        );
        manifest.add_input("frames", digest_file(raw)?);
        load_raw_stream(raw, width, height)?
    };
    manifest.write(&args.out)?;

    let sampled = select_frames(&frames, &settings.sampler)?;
    let mut frame_files = Vec::with_capacity(sampled.indices.len());
    for &index in &sampled.indices {
        frame_files.push(write_png(&frames[index], &args.out)?);
    }
    let sidecar = SampleSidecar {
        indices: sampled.indices,
        mode: sampled.mode,
        diffs: sampled.diffs,
        config: settings.sampler,
        frame_files,
    };
    sidecar.write(&args.out.join(SIDECAR_FILE))?;

    manifest.finish(&args.out, clock.as_ref())?;
    println!(
        "kept {} of {} frames ({:?}) -> {}",
        sidecar.indices.len(),
        frames.len(),
        sidecar.mode,
        args.out.display()
    );
    Ok(())
}
