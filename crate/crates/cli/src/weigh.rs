//! `aigve weigh` — export token-level loss-weight masks.
//!
//! For each record, the nine comments and scores are laid out as the
//! canonical report text, every token is classified by the span it falls in
//! (structure, comment, or score), and the per-token weights (alpha on
//! comment and score tokens, 1 elsewhere) are written as one `masks.jsonl`
//! row per record. `ratios.json` reports the mean fraction of tokens per
//! category across the dataset.
//!
//! Tokens come from `--offsets` (a JSONL of byte offsets produced by the
//! training tokenizer) or, absent that, from the bundled whitespace-and-
//! punctuation tokenizer. Offsets that disagree with the laid-out text are
//! an input error, not something to paper over.

use crate::config::Settings;
use crate::error::CliError;
use crate::manifest::{digest_file, RunManifest};
use aigve_core::dataset::{load_eval_records, read_jsonl, write_jsonl};
use aigve_core::schema::{parse_report, serialize_report, Aspect, AspectEntry, AspectReport, ScoreBounds};
use aigve_core::weighter::{
    category_ratios, classify_tokens, mean_category_ratios, simple_tokenize, InputLayout,
    MaskRecord, TokenCategory, TokenOffset,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

#[derive(Debug, clap::Args)]
pub struct WeighArgs {
    /// Records whose comments and scores form the target text (JSONL).
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Weight for comment and score tokens (structure tokens get 1).
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Tokenizer offsets JSONL: {"video_id", "tokens": [[index,start,end], ..]}.
    #[arg(long, value_name = "FILE")]
    pub offsets: Option<PathBuf>,
}

/// One row of the `--offsets` file.
#[derive(Debug, Deserialize)]
struct OffsetRow {
    video_id: String,
    tokens: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Serialize)]
struct RatioReport {
    records: usize,
    alpha: f64,
    /// Mean fraction of tokens per category; sums to 1.
    mean_ratios: BTreeMap<TokenCategory, f64>,
}

pub fn run(args: &WeighArgs, mut settings: Settings) -> Result<(), CliError> {
    if let Some(alpha) = args.alpha {
        settings.alpha = alpha;
    }
    if !settings.alpha.is_finite() || settings.alpha <= 0.0 {
        return Err(CliError::Input(format!(
            "alpha must be a positive number, got {}",
            settings.alpha
        )));
    }
    let clock = settings.clock();

    let records = load_eval_records(&args.dataset)?;
    if records.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no records",
            args.dataset.display()
        )));
    }
    let offsets_by_id: Option<BTreeMap<String, Vec<TokenOffset>>> = match &args.offsets {
        None => None,
        Some(path) => {
            let rows: Vec<OffsetRow> = read_jsonl(path)?;
            Some(
                rows.into_iter()
                    .map(|row| {
                        let tokens = row
                            .tokens
                            .into_iter()
                            .map(|(index, start, end)| TokenOffset { index, start, end })
                            .collect();
                        (row.video_id, tokens)
                    })
                    .collect(),
            )
        }
    };

    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut manifest = RunManifest::new("weigh", &settings, clock.as_ref());
    manifest.add_input("dataset", digest_file(&args.dataset)?);
    if let Some(path) = &args.offsets {
        manifest.add_input("offsets", digest_file(path)?);
    }
    manifest.write(&args.out)?;

    let bounds = ScoreBounds::default();
    let mut masks = Vec::with_capacity(records.len());
    let mut ratios_per_record = Vec::with_capacity(records.len());
    for record in &records {
        let mut entries = BTreeMap::new();
        for aspect in Aspect::ALL {
            let score = record.scores.get(&aspect).copied().ok_or_else(|| {
                CliError::Input(format!(
                    "record '{}': no score for '{}'",
                    record.video_id,
                    aspect.key()
                ))
            })?;
            let comment = record
                .comments
                .get(&aspect)
                .filter(|comment| !comment.trim().is_empty())
                .cloned()
                .ok_or_else(|| {
                    CliError::Input(format!(
                        "record '{}': no comment for '{}'",
                        record.video_id,
                        aspect.key()
                    ))
                })?;
            entries.insert(aspect, AspectEntry { comment, score });
        }
        let report = AspectReport::new(entries, &bounds)
            .map_err(|e| CliError::Input(format!("record '{}': {e}", record.video_id)))?;
        let text = serialize_report(&report);
        let parsed = parse_report(&text, &bounds).map_err(|e| {
            CliError::Input(format!(
                "record '{}': laid-out report failed to parse back: {e}",
                record.video_id
            ))
        })?;

        let tokens = match &offsets_by_id {
            Some(map) => map.get(&record.video_id).cloned().ok_or_else(|| {
                CliError::Input(format!(
                    "offsets file has no entry for record '{}'",
                    record.video_id
                ))
            })?,
            None => simple_tokenize(&text),
        };
        let layout = InputLayout::target_only(text.len());
        let classified = classify_tokens(&tokens, &parsed.spans, &layout)
            .map_err(|e| CliError::Input(format!("record '{}': {e}", record.video_id)))?;
        ratios_per_record.push(category_ratios(&classified));
        masks.push(MaskRecord::new(&record.video_id, &classified, settings.alpha));
    }

    write_jsonl(&args.out.join("masks.jsonl"), &masks)?;
    let report = RatioReport {
        records: records.len(),
        alpha: settings.alpha,
        mean_ratios: mean_category_ratios(&ratios_per_record),
    };
    let ratios_path = args.out.join("ratios.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Input(format!("ratio serialization failed: {e}")))?;
    fs::write(&ratios_path, json + "\n").map_err(|e| CliError::io(&ratios_path, e))?;

    manifest.finish(&args.out, clock.as_ref())?;
    println!(
        "masked {} records (alpha {}) -> {}",
        records.len(),
        settings.alpha,
        args.out.display()
    );
    Ok(())
}
