//! `aigve refine` — iteratively regenerate and rescore low-scoring records.
//!
//! Runs the generate → sample → evaluate → revise loop over every record in
//! the input whose initial overall score sits below the selection threshold,
//! journaling each trace under the run directory as it goes. A finished run
//! leaves `summary.json` at the root plus per-aspect statistics under
//! `reports/`.
//!
//! A run directory that already holds a run is refused unless `--resume` is
//! passed; resuming replays the journals and only re-contacts agents for
//! work that never finished, so an interrupted batch never repeats a
//! generation it already paid for.

use crate::config::{EndpointOverrides, Settings};
use crate::error::CliError;
use crate::manifest::{digest_file, RunManifest, MANIFEST_FILE};
use aigve_core::dataset::load_eval_records;
use aigve_refine::frames::{CommandFrameSource, FrameSource, MockFrameSource, PgmDirSource};
use aigve_refine::{refine_batch, Agents, RefineConfig, RefineEndpoints};
use std::fs;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct RefineArgs {
    /// Records to consider (JSONL with instructions and prior scores).
    #[arg(long, value_name = "FILE")]
    pub records: PathBuf,

    /// Run directory for journals, artifacts, and reports.
    #[arg(long, value_name = "DIR")]
    pub run_dir: PathBuf,

    /// Continue an interrupted run in place instead of refusing the
    /// directory.
    #[arg(long)]
    pub resume: bool,

    /// Iteration cap per record.
    #[arg(long)]
    pub max_iterations: Option<usize>,

    /// Stop a record once its overall score strictly exceeds this.
    #[arg(long)]
    pub stop_threshold: Option<f64>,

    /// Refine only records whose initial overall score sits below this.
    #[arg(long)]
    pub selection_threshold: Option<f64>,

    /// Root directory holding decoded PGM/PPM frames per video reference.
    #[arg(long, value_name = "DIR", conflicts_with = "decode_cmd")]
    pub frames_root: Option<PathBuf>,

    /// Decoder command with {video} and {out} placeholders, e.g.
    /// "ffmpeg -i {video} {out}/frame_%06d.pgm".
    #[arg(long, value_name = "CMD")]
    pub decode_cmd: Option<String>,

    /// Generator endpoint URL (overrides config and environment).
    #[arg(long, value_name = "URL")]
    pub generator_url: Option<String>,

    /// Evaluator endpoint URL.
    #[arg(long, value_name = "URL")]
    pub evaluator_url: Option<String>,

    /// Instruction-revisor endpoint URL.
    #[arg(long, value_name = "URL")]
    pub revisor_url: Option<String>,
}

pub async fn run(args: &RefineArgs, mut settings: Settings) -> Result<(), CliError> {
    if let Some(v) = args.max_iterations {
        settings.max_iterations = v;
    }
    if let Some(v) = args.stop_threshold {
        settings.stop_threshold = v;
    }
    if let Some(v) = args.selection_threshold {
        settings.selection_threshold = v;
    }

    let generator = settings.endpoint(
        "generator",
        EndpointOverrides {
            url: args.generator_url.clone(),
            ..Default::default()
        },
    )?;
    let evaluator = settings.endpoint(
        "evaluator",
        EndpointOverrides {
            url: args.evaluator_url.clone(),
            ..Default::default()
        },
    )?;
    let revisor = settings.endpoint(
        "revisor",
        EndpointOverrides {
            url: args.revisor_url.clone(),
            ..Default::default()
        },
    )?;
    let clock = settings.clock();

    let mut config = RefineConfig::new(RefineEndpoints {
        generator,
        evaluator,
        revisor,
    });
    config.max_iterations = settings.max_iterations;
    config.stop_threshold = settings.stop_threshold;
    config.selection_threshold = settings.selection_threshold;
    config.concurrency = settings.parallel;
    config.sampler = settings.sampler;
    config.validate()?;

    let records = load_eval_records(&args.records)?;

    if args.run_dir.join(MANIFEST_FILE).exists() && !args.resume {
        return Err(CliError::Input(format!(
            "{} already holds a run; pass --resume to continue it",
            args.run_dir.display()
        )));
    }
    let run = aigve_refine::RunDir::create(&args.run_dir)?;
    let mut manifest = RunManifest::new("refine", &settings, clock.as_ref());
    manifest.add_input("records", digest_file(&args.records)?);
    manifest.write(&args.run_dir)?;

    let frame_source: Box<dyn FrameSource> = if let Some(template) = &args.decode_cmd {
        let argv: Vec<String> = template.split_whitespace().map(str::to_string).collect();
        Box::new(CommandFrameSource::new(argv, args.run_dir.join("decode"))?)
    } else if let Some(root) = &args.frames_root {
        Box::new(PgmDirSource::new(root))
    } else if config.endpoints.generator.url.starts_with("mock:") {
        Box::new(MockFrameSource::default())
    } else {
        return Err(CliError::Input(
            "no frame source: pass --frames-root or --decode-cmd \
             (only mock generators can synthesize frames)"
                .into(),
        ));
    };

    let agents = Agents::from_config(&config)?;
    let summary = refine_batch(
        &records,
        &agents,
        frame_source.as_ref(),
        &run,
        &config,
        clock.as_ref(),
    )
    .await?;

    let summary_path = args.run_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Input(format!("summary serialization failed: {e}")))?;
    fs::write(&summary_path, json + "\n").map_err(|e| CliError::io(&summary_path, e))?;
    manifest.finish(&args.run_dir, clock.as_ref())?;

    if summary.selected.is_empty() {
        println!(
            "nothing to refine: all {} records meet the selection threshold {}",
            records.len(),
            settings.selection_threshold
        );
        return Ok(());
    }
    println!(
        "refined {} of {} records ({} skipped, {} without an initial overall score) -> {}",
        summary.selected.len(),
        records.len(),
        summary.skipped.len(),
        summary.missing_initial.len(),
        args.run_dir.display()
    );
    if !summary.errored.is_empty() {
        return Err(CliError::Partial(format!(
            "{} of {} traces ended in agent errors: {}",
            summary.errored.len(),
            summary.selected.len(),
            summary.errored.join(", ")
        )));
    }
    Ok(())
}
