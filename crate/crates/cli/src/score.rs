//! `aigve score` — score one video's frames against its instruction.
//!
//! Sends the instruction and PNG frames to the evaluator endpoint and writes
//! the parsed nine-aspect report (`report.json`) plus the raw completion
//! (`completion.txt`) for audit. Frames come either from a directory that is
//! sampled on the spot (`--frames`) or from a prior `aigve sample` output
//! directory whose kept frames are sent exactly as stored (`--frames-from`).
//!
//! The manifest is written before the endpoint is contacted, so even a
//! failed run records what was attempted.

use crate::config::{EndpointOverrides, SamplerArgs, Settings};
use crate::error::CliError;
use crate::manifest::{digest_dir, digest_text, RunManifest};
use crate::sample::SIDECAR_FILE;
use aigve_core::sampler::io::{encode_png, load_frames_dir, SampleSidecar};
use aigve_core::sampler::select_frames;
use aigve_core::schema::{format_score, serialize_report, Aspect};
use aigve_gateway::roles::EvaluatorAgent;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct ScoreArgs {
    /// Generation instruction the video was made from.
    #[arg(long, required_unless_present = "instruction_file")]
    pub instruction: Option<String>,

    /// File holding the instruction text.
    #[arg(long, value_name = "FILE", conflicts_with = "instruction")]
    pub instruction_file: Option<PathBuf>,

    /// Directory of PGM/PPM frames to sample and score.
    #[arg(
        long,
        value_name = "DIR",
        required_unless_present = "frames_from",
        conflicts_with = "frames_from"
    )]
    pub frames: Option<PathBuf>,

    /// Prior `aigve sample` output directory; its kept frames are sent as-is,
    /// with no resampling.
    #[arg(long, value_name = "DIR")]
    pub frames_from: Option<PathBuf>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Evaluator endpoint URL (overrides config and environment).
    #[arg(long, value_name = "URL")]
    pub evaluator_url: Option<String>,

    /// Evaluator model name.
    #[arg(long, value_name = "NAME")]
    pub evaluator_model: Option<String>,

    /// Environment variable naming the evaluator bearer token.
    #[arg(long, value_name = "VAR")]
    pub evaluator_auth_env: Option<String>,

    #[command(flatten)]
    pub sampler: SamplerArgs,
}

/// What `report.json` holds: the parsed scores and comments, the canonical
/// serialization they round-trip through, and parse provenance.
#[derive(Debug, Serialize)]
struct ScoreArtifact {
    overall: f64,
    scores: BTreeMap<Aspect, f64>,
    comments: BTreeMap<Aspect, String>,
    report_text: String,
    reprompted: bool,
    warnings: Vec<String>,
}

pub async fn run(args: &ScoreArgs, mut settings: Settings) -> Result<(), CliError> {
    settings.override_sampler(&args.sampler)?;
    let endpoint = settings.endpoint(
        "evaluator",
        EndpointOverrides {
            url: args.evaluator_url.clone(),
            model: args.evaluator_model.clone(),
            auth_env: args.evaluator_auth_env.clone(),
        },
    )?;
    let clock = settings.clock();

    let instruction = match (&args.instruction, &args.instruction_file) {
        (Some(text), _) => text.clone(),
        (None, Some(path)) => fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
        (None, None) => unreachable!("clap enforces an instruction source"),
    };
    let instruction = instruction.trim().to_string();
    if instruction.is_empty() {
        return Err(CliError::Input("the instruction is empty".into()));
    }

    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut manifest = RunManifest::new("score", &settings, clock.as_ref());
    manifest.add_input("instruction", digest_text(&instruction));

    let pngs: Vec<Vec<u8>> = if let Some(dir) = &args.frames {
        manifest.add_input("frames", digest_dir(dir)?);
        manifest.write(&args.out)?;
        let frames = load_frames_dir(dir)?;
        let sampled = select_frames(&frames, &settings.sampler)?;
        sampled
            .indices
            .iter()
            .map(|&index| encode_png(&frames[index]))
            .collect::<Result<_, _>>()?
    } else {
        let dir = args.frames_from.as_ref().expect("clap enforces a frame source");
        manifest.add_input("frames", digest_dir(dir)?);
        manifest.write(&args.out)?;
        let sidecar = SampleSidecar::read(&dir.join(SIDECAR_FILE))?;
        let mut pngs = Vec::with_capacity(sidecar.frame_files.len());
        for name in &sidecar.frame_files {
            let path = dir.join(name);
            pngs.push(fs::read(&path).map_err(|e| CliError::io(&path, e))?);
        }
        pngs
    };

    let agent = EvaluatorAgent::from_config(&endpoint)?.with_max_frames(pngs.len().max(1));
    let evaluation = agent.evaluate(&instruction, &pngs).await?;

    let completion_path = args.out.join("completion.txt");
    fs::write(&completion_path, &evaluation.completion)
        .map_err(|e| CliError::io(&completion_path, e))?;

    let artifact = ScoreArtifact {
        overall: evaluation.report.overall_score(),
        scores: evaluation.report.scores(),
        comments: evaluation.report.comments(),
        report_text: serialize_report(&evaluation.report),
        reprompted: evaluation.reprompted,
        warnings: evaluation
            .warnings
            .iter()
            .map(|warning| warning.to_string())
            .collect(),
    };
    let report_path = args.out.join("report.json");
    let json = serde_json::to_string_pretty(&artifact)
        .map_err(|e| CliError::Input(format!("report serialization failed: {e}")))?;
    fs::write(&report_path, json + "\n").map_err(|e| CliError::io(&report_path, e))?;

    manifest.finish(&args.out, clock.as_ref())?;
    println!(
        "overall {} ({} frames) -> {}",
        format_score(artifact.overall),
        pngs.len(),
        report_path.display()
    );
    Ok(())
}
