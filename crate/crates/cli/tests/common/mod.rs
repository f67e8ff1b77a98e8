//! Shared fixtures for the CLI integration tests: a hermetic command
//! builder, synthetic frame streams, and dataset rows in the JSONL formats
//! the subcommands consume.

#![allow(dead_code)] // each test binary uses its own subset

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

/// Command for the compiled binary with every `AIGVE_*` variable scrubbed,
/// so a developer's shell configuration cannot leak into the tests.
pub fn aigve() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_aigve"));
    for (key, _) in std::env::vars_os() {
        if key.to_string_lossy().starts_with("AIGVE_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn assert_exit(out: &Output, code: i32, context: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{context}\nstdout: {}\nstderr: {}",
        stdout(out),
        stderr(out)
    );
}

/// Binary PGM (P5), the grayscale format the frame loader reads.
pub fn write_pgm(path: &Path, width: u32, height: u32, pixels: &[u8]) {
    assert_eq!(pixels.len(), (width * height) as usize);
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes).expect("write pgm");
}

/// A directory of `width`x`height` frames with a bright 4x4 block stepping
/// right by `stride` pixels every frame — steady motion, so the sampler's
/// dynamic path engages.
pub fn moving_block_frames(dir: &Path, count: usize, width: u32, height: u32, stride: usize) {
    fs::create_dir_all(dir).expect("frames dir");
    for t in 0..count {
        let mut pixels = vec![16u8; (width * height) as usize];
        let x0 = (t * stride) % (width as usize - 4);
        for dy in 0..4 {
            for dx in 0..4 {
                pixels[(2 + dy) * width as usize + x0 + dx] = 240;
            }
        }
        write_pgm(&dir.join(format!("frame_{t:04}.pgm")), width, height, &pixels);
    }
}

/// Raw concatenated grayscale frames (the `--raw` input): `count` frames of
/// constant `value`, i.e. a fully static stream.
pub fn static_raw_stream(path: &Path, count: usize, width: u32, height: u32, value: u8) {
    let frame = vec![value; (width * height) as usize];
    let mut bytes = Vec::with_capacity(frame.len() * count);
    for _ in 0..count {
        bytes.extend_from_slice(&frame);
    }
    fs::write(path, bytes).expect("write raw stream");
}

pub const ASPECT_KEYS: [&str; 9] = [
    "technical_quality",
    "dynamics",
    "consistency",
    "physics",
    "element_presence",
    "element_quality",
    "action_presence",
    "action_quality",
    "overall",
];

/// One labeled dataset row with all nine scores set to `overall` and
/// distinguishable comments.
pub fn eval_record(video_id: &str, overall: f64) -> serde_json::Value {
    let mut scores = serde_json::Map::new();
    let mut comments = serde_json::Map::new();
    for key in ASPECT_KEYS {
        scores.insert(key.into(), overall.into());
        comments.insert(
            key.into(),
            format!("the {key} of {video_id} sits near {overall}").into(),
        );
    }
    serde_json::json!({
        "video_id": video_id,
        "instruction": format!("A drone shot of {video_id} gliding over water"),
        "scores": scores,
        "comments": comments,
    })
}

/// Like [`eval_record`] but with per-aspect scores supplied in canonical
/// aspect order.
pub fn eval_record_with_scores(video_id: &str, scores9: [f64; 9]) -> serde_json::Value {
    let mut record = eval_record(video_id, 0.0);
    let scores = record["scores"].as_object_mut().expect("scores map");
    for (key, value) in ASPECT_KEYS.iter().zip(scores9) {
        scores.insert((*key).into(), value.into());
    }
    record
}

pub fn write_jsonl(path: &Path, rows: &[serde_json::Value]) {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row).expect("serialize row"));
        text.push('\n');
    }
    fs::write(path, text).expect("write jsonl");
}

pub fn read_json(path: &Path) -> serde_json::Value {
    let bytes = fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("parse {}: {e}", path.display()))
}

pub fn read_jsonl(path: &Path) -> Vec<serde_json::Value> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("parse {}: {e}", path.display())))
        .collect()
}

/// Every file under `root`, as (relative path, bytes), sorted by path.
pub fn snapshot_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files);
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    for entry in fs::read_dir(dir).expect("read dir") {
        let entry = entry.expect("dir entry");
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("under root")
                .to_string_lossy()
                .replace('\\', "/");
            out.push((rel, fs::read(&path).expect("read file")));
        }
    }
}

/// Asserts two directory trees hold the same relative paths with the same
/// bytes, naming the first divergence.
pub fn assert_trees_identical(a: &Path, b: &Path) {
    let ta = snapshot_tree(a);
    let tb = snapshot_tree(b);
    let paths_a: Vec<&String> = ta.iter().map(|(p, _)| p).collect();
    let paths_b: Vec<&String> = tb.iter().map(|(p, _)| p).collect();
    assert_eq!(paths_a, paths_b, "file sets differ between runs");
    for ((path, bytes_a), (_, bytes_b)) in ta.iter().zip(&tb) {
        assert_eq!(bytes_a, bytes_b, "bytes differ at {path}");
    }
}
