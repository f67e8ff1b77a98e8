//! Tests for the refine subcommand: selection, loop behavior, crash
//! recovery, and exit codes, all against scripted mock endpoints.

mod common;

use common::*;
use std::fs;
use std::path::Path;

fn refine_args(records: &Path, run_dir: &Path) -> Vec<String> {
    [
        "refine",
        "--records",
        records.to_str().unwrap(),
        "--run-dir",
        run_dir.to_str().unwrap(),
        "--generator-url",
        "mock:generator",
        "--revisor-url",
        "mock:revisor",
    ]
    .map(String::from)
    .to_vec()
}

#[test]
fn refine_selects_low_scorers_and_improves_them() {
    let tmp = tempfile::tempdir().unwrap();
    let records = tmp.path().join("records.jsonl");
    write_jsonl(
        &records,
        &[
            eval_record("vid_low", 2.0),
            eval_record("vid_high", 4.5),
            eval_record("vid_borderline", 3.0),
        ],
    );

    let run_dir = tmp.path().join("run");
    let res = run(aigve()
        .args(refine_args(&records, &run_dir))
        .args(["--evaluator-url", "mock:evaluator?base=2.0&step=1.0"]));
    assert_exit(&res, 0, "refine run");
    let line = stdout(&res);
    assert!(line.contains("refined 1 of 3"), "selection summary: {line}");

    let summary = read_json(&run_dir.join("summary.json"));
    assert_eq!(summary["selected"], serde_json::json!(["vid_low"]));
    // 3.0 is not strictly below the selection threshold, so it is skipped
    // alongside the high scorer.
    assert_eq!(
        summary["skipped"],
        serde_json::json!(["vid_high", "vid_borderline"])
    );
    assert_eq!(summary["errored"], serde_json::json!([]));

    // The scripted evaluator walks 2 → 3 → 4 → 5; the loop stops at the
    // first overall strictly above 4, which lands on the fourth iteration.
    let overall = &summary["stats"]["per_aspect"]["overall"];
    assert_eq!(overall["records"], 1);
    assert_eq!(overall["mean_absolute_delta"], 3.0);
    assert_eq!(overall["mean_relative_pct"], 150.0);
    let curve: Vec<f64> = summary["stats"]["curves"]["overall"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["mean_score"].as_f64().unwrap())
        .collect();
    assert_eq!(curve, vec![2.0, 3.0, 4.0, 5.0]);

    // Trace journal, reports, and completions all landed in the run dir.
    assert!(run_dir.join("traces").join("vid_low.jsonl").is_file());
    assert!(run_dir.join("manifest.json").is_file());
}

#[test]
fn refine_iteration_cap_is_enforced() {
    let tmp = tempfile::tempdir().unwrap();
    let records = tmp.path().join("records.jsonl");
    write_jsonl(&records, &[eval_record("vid_stuck", 1.0)]);

    let run_dir = tmp.path().join("run");
    // A flat evaluator never clears the threshold; the cap must cut the
    // loop at exactly one iteration here.
    let res = run(aigve()
        .args(refine_args(&records, &run_dir))
        .args(["--evaluator-url", "mock:evaluator?base=2.0&step=0.0"])
        .args(["--max-iterations", "1"]));
    assert_exit(&res, 0, "capped refine run");

    let trace = read_trace(&run_dir, "vid_stuck");
    let iterations: Vec<&serde_json::Value> =
        trace.iter().filter(|l| l["type"] == "iteration").collect();
    assert_eq!(iterations.len(), 1, "cap of one iteration");
    let final_line = trace.iter().find(|l| l["type"] == "final").expect("final line");
    assert_eq!(final_line["stop"]["reason"], "iteration_limit");
}

#[test]
fn refine_resume_skips_journaled_iterations() {
    let tmp = tempfile::tempdir().unwrap();
    let records = tmp.path().join("records.jsonl");
    write_jsonl(&records, &[eval_record("vid_low", 2.0)]);
    let gen_log = tmp.path().join("generator.jsonl");
    let run_dir = tmp.path().join("run");

    // First run: the evaluator dies on its second call, i.e. while scoring
    // iteration two. Iteration one is already journaled by then.
    let res = run(aigve()
        .arg("refine")
        .arg("--records")
        .arg(&records)
        .arg("--run-dir")
        .arg(&run_dir)
        .args([
            "--generator-url",
            &format!("mock:generator?log={}", gen_log.display()),
            "--revisor-url",
            "mock:revisor",
            "--evaluator-url",
            "mock:evaluator?base=2.0&step=1.0&fail_at=2",
        ]));
    assert_exit(&res, 5, "agent failure surfaces as a partial batch");
    assert!(stderr(&res).contains("vid_low"), "names the failed trace");
    assert_eq!(read_jsonl(&gen_log).len(), 2, "generated twice before dying");

    // Rerunning into the same directory must be an explicit decision.
    let res = run(aigve()
        .args(refine_args(&records, &run_dir))
        .args(["--evaluator-url", "mock:evaluator?base=2.0&step=1.0"]));
    assert_exit(&res, 2, "an existing run dir is refused without --resume");
    assert!(stderr(&res).contains("--resume"), "hint: {}", stderr(&res));

    // Resume with a healthy evaluator. Iteration one is never regenerated:
    // the journal replays it, and generation starts again at iteration two.
    let res = run(aigve()
        .args(refine_args(&records, &run_dir))
        .args(["--evaluator-url", "mock:evaluator?base=2.0&step=1.0"])
        .arg("--resume"));
    // The healthy generator has no log parameter here, so the call count in
    // the first log stays at 2 — now check the journal instead.
    assert_exit(&res, 0, "resumed run completes");

    let trace = read_trace(&run_dir, "vid_low");
    let iterations: Vec<&serde_json::Value> =
        trace.iter().filter(|l| l["type"] == "iteration").collect();
    assert_eq!(iterations.len(), 4, "2 → 3 → 4 → 5 then stop");
    // Exactly one start line and one successful final line: the resumed run
    // appended to the same journal rather than starting over.
    assert_eq!(trace.iter().filter(|l| l["type"] == "start").count(), 1);
    let finals: Vec<&serde_json::Value> =
        trace.iter().filter(|l| l["type"] == "final").collect();
    assert_eq!(finals.last().unwrap()["stop"]["reason"], "threshold_met");
    assert_eq!(finals.last().unwrap()["final_overall"], 5.0);

    let summary = read_json(&run_dir.join("summary.json"));
    assert_eq!(summary["errored"], serde_json::json!([]));
}

#[test]
fn refine_reports_nothing_to_do_when_all_records_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let records = tmp.path().join("records.jsonl");
    write_jsonl(
        &records,
        &[eval_record("vid_a", 4.0), eval_record("vid_b", 3.5)],
    );

    let run_dir = tmp.path().join("run");
    let res = run(aigve()
        .args(refine_args(&records, &run_dir))
        .args(["--evaluator-url", "mock:evaluator"]));
    assert_exit(&res, 0, "no-op refine run");
    assert!(
        stdout(&res).contains("nothing to refine"),
        "notice: {}",
        stdout(&res)
    );
    let summary = read_json(&run_dir.join("summary.json"));
    assert_eq!(summary["selected"], serde_json::json!([]));
}

#[test]
fn refine_without_a_frame_source_fails_for_real_generators() {
    let tmp = tempfile::tempdir().unwrap();
    let records = tmp.path().join("records.jsonl");
    write_jsonl(&records, &[eval_record("vid_low", 2.0)]);

    // A non-mock generator URL needs --frames-root or --decode-cmd; there
    // is no way to conjure pixels for it.
    let res = run(aigve()
        .arg("refine")
        .arg("--records")
        .arg(&records)
        .arg("--run-dir")
        .arg(tmp.path().join("run"))
        .args([
            "--generator-url",
            "http://127.0.0.1:1/v1/chat/completions",
            "--revisor-url",
            "mock:revisor",
            "--evaluator-url",
            "mock:evaluator",
        ]));
    assert_exit(&res, 2, "missing frame source is a config error");
    assert!(
        stderr(&res).contains("--frames-root"),
        "hint lists the options: {}",
        stderr(&res)
    );
}

fn read_trace(run_dir: &Path, id: &str) -> Vec<serde_json::Value> {
    let path = run_dir.join("traces").join(format!("{id}.jsonl"));
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}
