//! `aigve eval` — compare predicted reports against ground truth.
//!
//! The main mode loads a predictions JSONL and a truth JSONL, checks that
//! the two align by video id (listing every missing id on failure), and
//! writes rank-correlation and ROUGE tables as both JSON and CSV. With
//! `--judge`, each prediction comment is additionally scored against the
//! truth comment by the judge endpoint.
//!
//! `--aggregate-only` skips all of that and averages a per-system CSV of
//! nine correlation values into a tenth column.
//!
//! Records are sorted by video id before anything is computed, so shuffled
//! inputs produce byte-identical outputs.

use crate::config::{EndpointOverrides, Settings};
use crate::error::CliError;
use crate::manifest::{digest_file, RunManifest};
use aigve_core::dataset::{load_eval_records, load_predictions, write_jsonl};
use aigve_core::metrics::{aggregate_row, aspect_correlations, rouge_1, rouge_l, Rouge};
use aigve_core::schema::{Aspect, EvalRecord, PredictionRecord};
use aigve_gateway::roles::JudgeAgent;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Predicted reports (JSONL), aligned to the truth by video id.
    #[arg(
        long,
        value_name = "FILE",
        required_unless_present = "aggregate_only",
        conflicts_with = "aggregate_only"
    )]
    pub predictions: Option<PathBuf>,

    /// Ground-truth records (JSONL).
    #[arg(
        long,
        value_name = "FILE",
        required_unless_present = "aggregate_only",
        conflicts_with = "aggregate_only"
    )]
    pub truth: Option<PathBuf>,

    /// CSV of per-system rows (name plus nine correlation values) to average
    /// instead of scoring datasets.
    #[arg(long, value_name = "FILE")]
    pub aggregate_only: Option<PathBuf>,

    /// Also score prediction comments against truth comments with the judge
    /// endpoint.
    #[arg(long)]
    pub judge: bool,

    /// Judge endpoint URL (overrides config and environment).
    #[arg(long, value_name = "URL", requires = "judge")]
    pub judge_url: Option<String>,

    /// Judge model name.
    #[arg(long, value_name = "NAME", requires = "judge")]
    pub judge_model: Option<String>,

    /// Environment variable naming the judge bearer token.
    #[arg(long, value_name = "VAR", requires = "judge")]
    pub judge_auth_env: Option<String>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub async fn run(args: &EvalArgs, mut settings: Settings) -> Result<(), CliError> {
    if let Some(table) = &args.aggregate_only {
        return aggregate_only(args, table, &settings);
    }

    let judge_endpoint = if args.judge {
        Some(settings.endpoint(
            "judge",
            EndpointOverrides {
                url: args.judge_url.clone(),
                model: args.judge_model.clone(),
                auth_env: args.judge_auth_env.clone(),
            },
        )?)
    } else {
        None
    };
    let clock = settings.clock();

    let predictions_path = args.predictions.as_ref().expect("clap enforces --predictions");
    let truth_path = args.truth.as_ref().expect("clap enforces --truth");
    let mut predictions = load_predictions(predictions_path)?;
    let mut truth = load_eval_records(truth_path)?;
    predictions.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    truth.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    check_alignment(&predictions, &truth)?;

    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut manifest = RunManifest::new("eval", &settings, clock.as_ref());
    manifest.add_input("predictions", digest_file(predictions_path)?);
    manifest.add_input("truth", digest_file(truth_path)?);
    manifest.write(&args.out)?;

    let correlations = aspect_correlations(&predictions, &truth)?;
    write_json(&args.out.join("correlations.json"), &correlations)?;
    let mut csv = String::from("aspect,spearman_pct\n");
    for aspect in Aspect::ALL {
        csv.push_str(&format!(
            "{},{}\n",
            aspect.key(),
            fmt_opt(correlations.per_aspect_pct[&aspect])
        ));
    }
    csv.push_str(&format!("average,{}\n", fmt_opt(correlations.average_pct)));
    let csv_path = args.out.join("correlations.csv");
    fs::write(&csv_path, csv).map_err(|e| CliError::io(&csv_path, e))?;

    let rouge = rouge_by_aspect(&predictions, &truth);
    write_json(&args.out.join("rouge.json"), &rouge)?;
    let mut csv = String::from("aspect,records,rouge1_f1,rougel_f1\n");
    for aspect in Aspect::ALL {
        let row = &rouge[&aspect];
        csv.push_str(&format!(
            "{},{},{},{}\n",
            aspect.key(),
            row.records,
            fmt_opt(row.rouge_1.map(|r| r.f1)),
            fmt_opt(row.rouge_l.map(|r| r.f1)),
        ));
    }
    let csv_path = args.out.join("rouge.csv");
    fs::write(&csv_path, csv).map_err(|e| CliError::io(&csv_path, e))?;

    if let Some(endpoint) = judge_endpoint {
        let judge = JudgeAgent::from_config(&endpoint)?;
        run_judge(&judge, &predictions, &truth, &args.out).await?;
    }

    manifest.finish(&args.out, clock.as_ref())?;
    println!(
        "evaluated {} aligned records (mean correlation {}) -> {}",
        correlations.samples,
        fmt_opt(correlations.average_pct),
        args.out.display()
    );
    Ok(())
}

/// Rejects misaligned datasets up front, listing every unmatched id in both
/// directions rather than stopping at the first.
fn check_alignment(
    predictions: &[PredictionRecord],
    truth: &[EvalRecord],
) -> Result<(), CliError> {
    let mut pred_ids = BTreeSet::new();
    for record in predictions {
        if !pred_ids.insert(record.video_id.as_str()) {
            return Err(CliError::Input(format!(
                "duplicate video id '{}' in predictions",
                record.video_id
            )));
        }
    }
    let mut truth_ids = BTreeSet::new();
    for record in truth {
        if !truth_ids.insert(record.video_id.as_str()) {
            return Err(CliError::Input(format!(
                "duplicate video id '{}' in truth",
                record.video_id
            )));
        }
    }
    let missing_truth: Vec<&str> = pred_ids.difference(&truth_ids).copied().collect();
    let missing_predictions: Vec<&str> = truth_ids.difference(&pred_ids).copied().collect();
    if missing_truth.is_empty() && missing_predictions.is_empty() {
        return Ok(());
    }
    let mut parts = Vec::new();
    if !missing_truth.is_empty() {
        parts.push(format!(
            "predicted but missing from truth: {}",
            missing_truth.join(", ")
        ));
    }
    if !missing_predictions.is_empty() {
        parts.push(format!(
            "in truth but never predicted: {}",
            missing_predictions.join(", ")
        ));
    }
    Err(CliError::Input(format!(
        "datasets are misaligned — {}",
        parts.join("; ")
    )))
}

/// Mean overlap per aspect, over aligned pairs where both sides wrote a
/// comment. Pairs whose comments tokenize to nothing are skipped, not fatal.
#[derive(Debug, Serialize)]
struct RougeRow {
    records: usize,
    rouge_1: Option<Rouge>,
    rouge_l: Option<Rouge>,
}

fn rouge_by_aspect(
    predictions: &[PredictionRecord],
    truth: &[EvalRecord],
) -> BTreeMap<Aspect, RougeRow> {
    let mut rows = BTreeMap::new();
    for aspect in Aspect::ALL {
        let mut unigram = Vec::new();
        let mut subsequence = Vec::new();
        for (prediction, record) in predictions.iter().zip(truth) {
            let (Some(candidate), Some(reference)) = (
                prediction.comments.get(&aspect),
                record.comments.get(&aspect),
            ) else {
                continue;
            };
            match (rouge_1(candidate, reference), rouge_l(candidate, reference)) {
                (Ok(r1), Ok(rl)) => {
                    unigram.push(r1);
                    subsequence.push(rl);
                }
                // Blank or punctuation-only comments have no tokens to match.
                _ => continue,
            }
        }
        rows.insert(
            aspect,
            RougeRow {
                records: unigram.len(),
                rouge_1: mean_rouge(&unigram),
                rouge_l: mean_rouge(&subsequence),
            },
        );
    }
    rows
}

fn mean_rouge(scores: &[Rouge]) -> Option<Rouge> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    Some(Rouge {
        precision: scores.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: scores.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: scores.iter().map(|r| r.f1).sum::<f64>() / n,
    })
}

#[derive(Debug, Serialize)]
struct JudgeRow {
    video_id: String,
    aspect: Aspect,
    score: f64,
}

#[derive(Debug, Serialize)]
struct JudgeSummary {
    records: usize,
    mean_score: f64,
}

/// Scores every aligned comment pair with the judge, sequentially so row
/// order (and therefore output bytes) is stable.
async fn run_judge(
    judge: &JudgeAgent,
    predictions: &[PredictionRecord],
    truth: &[EvalRecord],
    out: &Path,
) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut per_aspect: BTreeMap<Aspect, Vec<f64>> = BTreeMap::new();
    for (prediction, record) in predictions.iter().zip(truth) {
        for aspect in Aspect::ALL {
            let (Some(candidate), Some(reference)) = (
                prediction.comments.get(&aspect),
                record.comments.get(&aspect),
            ) else {
                continue;
            };
            if candidate.trim().is_empty() || reference.trim().is_empty() {
                continue;
            }
            let verdict = judge.judge(&record.instruction, reference, candidate).await?;
            per_aspect.entry(aspect).or_default().push(verdict.score);
            rows.push(JudgeRow {
                video_id: record.video_id.clone(),
                aspect,
                score: verdict.score,
            });
        }
    }
    write_jsonl(&out.join("judge.jsonl"), &rows)?;
    let summary: BTreeMap<&str, JudgeSummary> = per_aspect
        .iter()
        .map(|(aspect, scores)| {
            (
                aspect.key(),
                JudgeSummary {
                    records: scores.len(),
                    mean_score: scores.iter().sum::<f64>() / scores.len() as f64,
                },
            )
        })
        .collect();
    write_json(&out.join("judge.json"), &summary)
}

#[derive(Debug, Serialize)]
struct AggregateEntry {
    name: String,
    values: Vec<f64>,
    avg: f64,
}

/// Averages a per-system CSV: `name` plus nine values per row, with an
/// optional header line. Writes the full-precision JSON and a two-column CSV
/// rounded to hundredths.
fn aggregate_only(args: &EvalArgs, table: &Path, settings: &Settings) -> Result<(), CliError> {
    let clock = settings.clock();
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut manifest = RunManifest::new("eval", settings, clock.as_ref());
    manifest.add_input("table", digest_file(table)?);
    manifest.write(&args.out)?;

    let text = fs::read_to_string(table).map_err(|e| CliError::io(table, e))?;
    let mut entries: Vec<AggregateEntry> = Vec::new();
    let mut first_content = true;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let looks_numeric = fields.len() > 1 && fields[1..].iter().all(|f| f.parse::<f64>().is_ok());
        if first_content && !looks_numeric {
            first_content = false;
            continue; // header line
        }
        first_content = false;
        if fields.len() != 10 {
            return Err(CliError::Input(format!(
                "{}:{}: expected a name plus nine values, got {} fields",
                table.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let mut values = Vec::with_capacity(9);
        for field in &fields[1..] {
            values.push(field.parse::<f64>().map_err(|e| {
                CliError::Input(format!(
                    "{}:{}: '{field}': {e}",
                    table.display(),
                    lineno + 1
                ))
            })?);
        }
        let avg = aggregate_row(&values).expect("nine values always average");
        entries.push(AggregateEntry {
            name: fields[0].to_string(),
            values,
            avg,
        });
    }
    if entries.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no data rows",
            table.display()
        )));
    }

    write_json(&args.out.join("aggregates.json"), &entries)?;
    let mut csv = String::from("name,avg\n");
    for entry in &entries {
        csv.push_str(&format!("{},{:.2}\n", entry.name, entry.avg));
    }
    let csv_path = args.out.join("aggregates.csv");
    fs::write(&csv_path, csv).map_err(|e| CliError::io(&csv_path, e))?;

    manifest.finish(&args.out, clock.as_ref())?;
    println!(
        "aggregated {} rows -> {}",
        entries.len(),
        args.out.display()
    );
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Input(format!("{}: serialization failed: {e}", path.display())))?;
    fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}
