//! Batch refinement: the selection filter, error isolation, and the report
//! files a run leaves behind.

mod common;

use aigve_core::clock::LogicalClock;
use aigve_core::schema::{Aspect, EvalRecord};
use aigve_gateway::mock::{MockBackend, ScriptedBackend, ScriptedReply};
use aigve_gateway::roles::{EvaluatorAgent, GeneratorAgent, InstructionRevisorAgent};
use aigve_refine::{refine_batch, Agents, MockFrameSource, RunDir};
use common::{flat_report_text, mock_config};
use std::collections::BTreeMap;
use std::sync::Arc;

fn record(video_id: &str, overall: Option<f64>) -> EvalRecord {
    let mut scores = BTreeMap::new();
    if let Some(value) = overall {
        scores.insert(Aspect::Overall, value);
    }
    EvalRecord {
        video_id: video_id.to_string(),
        instruction: format!("A time-lapse of clouds over a valley, take {video_id}."),
        category: String::new(),
        generator_model: String::new(),
        scores,
        comments: BTreeMap::new(),
        video_path: None,
    }
}

#[tokio::test]
async fn selection_filter_refines_only_low_scoring_records() {
    let records = vec![
        record("low_1", Some(2.0)),
        record("high_1", Some(4.5)),
        record("edge_3", Some(3.0)), // at the threshold: not strictly below it
        record("no_score", None),
    ];
    let config = mock_config("mock:evaluator?base=4.5");
    let agents = Agents::from_config(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path()).unwrap();

    let summary = refine_batch(
        &records,
        &agents,
        &MockFrameSource::default(),
        &run,
        &config,
        &LogicalClock::default(),
    )
    .await
    .unwrap();

    assert_eq!(summary.selected, vec!["low_1", "no_score"]);
    assert_eq!(summary.skipped, vec!["high_1", "edge_3"]);
    // Records with no initial overall score are refined but called out.
    assert_eq!(summary.missing_initial, vec!["no_score"]);
    assert!(summary.errored.is_empty());
    assert_eq!(summary.traces.len(), 2);
    assert!(summary.traces.iter().all(|t| t.is_complete()));
    assert_eq!(summary.stats.traces, 2);

    // Only the selected records grew trace journals.
    let store = run.traces().unwrap();
    assert_eq!(store.list().unwrap(), vec!["low_1", "no_score"]);
}

#[tokio::test]
async fn zero_qualifying_records_still_produce_reports() {
    let records = vec![record("high_1", Some(4.0)), record("high_2", Some(3.5))];
    let config = mock_config("mock:evaluator?base=4.5");
    let agents = Agents::from_config(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path()).unwrap();

    let summary = refine_batch(
        &records,
        &agents,
        &MockFrameSource::default(),
        &run,
        &config,
        &LogicalClock::default(),
    )
    .await
    .unwrap();

    assert!(summary.selected.is_empty());
    assert_eq!(summary.skipped, vec!["high_1", "high_2"]);
    assert!(summary.traces.is_empty());
    assert_eq!(summary.stats.traces, 0);
    assert!(summary.stats.mean_iterations.is_none());
    assert!(summary.stats.per_aspect[&Aspect::Overall]
        .mean_relative_pct
        .is_none());

    // The report files exist even for an empty run, so downstream tooling
    // never has to special-case it.
    let reports = run.reports_dir();
    for name in ["stats.json", "stats.csv", "curves.json"] {
        assert!(reports.join(name).is_file(), "{name} written");
    }
}

#[tokio::test]
async fn agent_failures_are_isolated_per_record() {
    let records = vec![record("rec_a", Some(1.0)), record("rec_b", Some(2.0))];
    let config = mock_config("mock:evaluator");
    // Sequential batch (concurrency 1): rec_a's first evaluation fails,
    // rec_b's succeeds above the threshold.
    let scripted = Arc::new(ScriptedBackend::new(vec![
        ScriptedReply::Error(500, "evaluator down".to_string()),
        ScriptedReply::Content(flat_report_text(4.5)),
    ]));
    let agents = Agents::new(
        GeneratorAgent::new(
            Arc::new(MockBackend::from_url("mock:generator").unwrap()),
            "offline-mock",
        ),
        EvaluatorAgent::new(scripted, "offline-mock"),
        InstructionRevisorAgent::new(
            Arc::new(MockBackend::from_url("mock:revisor").unwrap()),
            "offline-mock",
        ),
    );
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path()).unwrap();

    let summary = refine_batch(
        &records,
        &agents,
        &MockFrameSource::default(),
        &run,
        &config,
        &LogicalClock::default(),
    )
    .await
    .unwrap();

    assert_eq!(summary.selected, vec!["rec_a", "rec_b"]);
    assert_eq!(summary.errored, vec!["rec_a"]);
    assert!(summary.traces[1].is_complete());
    // The failed trace never finished an iteration, so the stats count it
    // as empty rather than polluting the improvement numbers.
    assert_eq!(summary.stats.traces, 1);
    assert_eq!(summary.stats.empty_traces, 1);
}

#[tokio::test]
async fn report_files_carry_the_batch_statistics() {
    let records = vec![record("low_1", Some(2.0)), record("low_2", Some(2.5))];
    // Two iterations each: 2.0 then 3.0, capped by max_iterations.
    let mut config = mock_config("mock:evaluator?base=2.0&step=1.0");
    config.max_iterations = 2;
    let agents = Agents::from_config(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path()).unwrap();

    let summary = refine_batch(
        &records,
        &agents,
        &MockFrameSource::default(),
        &run,
        &config,
        &LogicalClock::default(),
    )
    .await
    .unwrap();
    assert_eq!(summary.stats.traces, 2);

    // stats.json round-trips to the same numbers the summary carries.
    let stats_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.reports_dir().join("stats.json")).unwrap())
            .unwrap();
    assert_eq!(stats_json["traces"], 2);
    let overall = &stats_json["per_aspect"]["overall"];
    assert_eq!(overall["records"], 2);
    assert_eq!(
        overall["mean_relative_pct"].as_f64().unwrap(),
        summary.stats.per_aspect[&Aspect::Overall]
            .mean_relative_pct
            .unwrap()
    );

    // curves.json holds one point per iteration with the record count.
    let curves: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.reports_dir().join("curves.json")).unwrap())
            .unwrap();
    let overall_curve = curves["overall"].as_array().unwrap();
    assert_eq!(overall_curve.len(), 2);
    assert_eq!(overall_curve[0]["records"], 2);
    assert_eq!(overall_curve[0]["mean_score"], 2.0);
    assert_eq!(overall_curve[1]["mean_score"], 3.0);

    // stats.csv lists all nine aspects under a fixed header.
    let csv = std::fs::read_to_string(run.reports_dir().join("stats.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "aspect,records,zero_initial,mean_relative_pct,mean_absolute_delta"
    );
    assert_eq!(lines.len(), 10);
    assert!(lines[9].starts_with("overall,2,0,50,1"));
}
