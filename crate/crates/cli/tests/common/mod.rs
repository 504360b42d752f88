#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use perfedit::dataset::{ProgramPair, Provenance, Split};
use perfedit::perf::{PerfMeasurement, Unit};
use serde_json::{json, Value};
use tempfile::TempDir;

pub const DOUBLE: &str = "#!/bin/sh\nread x\necho $((x * 2))\n";
pub const WRONG: &str = "#!/bin/sh\necho 0\n";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus() -> PathBuf {
    fixtures().join("corpus")
}

pub fn perfedit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perfedit"))
        .args(args)
        .output()
        .expect("spawn perfedit")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn read_jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_json_file(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
}

/// Config for shell-script programs measured by `manifest.json` next to it.
pub fn write_script_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    write_json_file(
        &path,
        &json!({
            "version": 1,
            "compile": {
                "compiler_command": "cp {src} {out} && chmod +x {out}",
                "source_file": "main.sh",
                "timeout_s": 10
            },
            "limits": {"wall_timeout_s": 10},
            "backend": {"kind": "manifest", "path": "manifest.json"}
        }),
    );
    path
}

/// One offline candidate: example id, sample index, code, and the two
/// per-test costs it is measured at.
pub struct Cand<'a>(pub &'a str, pub usize, pub &'a str, pub [f64; 2]);

/// Evaluation fixture: problem `m` (double the input, two tests), test-split
/// pairs `ids` each with source runtime 100, plus the given candidates.
pub fn eval_fixture(ids: &[&str], cands: &[Cand]) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_script_config(root);

    let tests = root.join("tests/m");
    fs::create_dir_all(&tests).unwrap();
    for (k, (i, o)) in [("2", "4"), ("5", "10")].iter().enumerate() {
        fs::write(tests.join(format!("input.{k}.txt")), format!("{i}\n")).unwrap();
        fs::write(tests.join(format!("output.{k}.txt")), format!("{o}\n")).unwrap();
    }

    let rt = |v| PerfMeasurement::new(v, Unit::CostUnits).unwrap();
    let pairs: Vec<ProgramPair> = ids
        .iter()
        .map(|id| ProgramPair {
            pair_id: id.to_string(),
            problem_id: "m".into(),
            user_id: None,
            src_id: format!("{id}-src"),
            tgt_id: format!("{id}-tgt"),
            src: DOUBLE.into(),
            tgt: DOUBLE.into(),
            src_runtime: rt(100.0),
            tgt_runtime: rt(50.0),
            relative_improvement: 0.5,
            split: Split::Test,
            provenance: Provenance::Human,
            class_id: None,
        })
        .collect();
    perfedit::util::write_jsonl(&root.join("pairs.jsonl"), &pairs).unwrap();

    let mut manifest = serde_json::Map::new();
    let mut lines = String::new();
    for Cand(ex, idx, src, costs) in cands {
        lines.push_str(&json!({"example_id": ex, "sample_index": idx, "code": src}).to_string());
        lines.push('\n');
        manifest.insert(format!("{ex}.{idx}"), json!({"0": costs[0], "1": costs[1]}));
    }
    fs::write(root.join("candidates.jsonl"), lines).unwrap();
    write_json_file(&root.join("manifest.json"), &Value::Object(manifest));
    dir
}

/// Runs `eval --offline` on an [`eval_fixture`] and returns the summary.
pub fn run_eval(fixture: &Path, k: usize, out: &Path) -> Value {
    let o = perfedit(&[
        "--config",
        s(&fixture.join("config.json")),
        "eval",
        "--pairs",
        s(&fixture.join("pairs.jsonl")),
        "--split",
        "test",
        "--style",
        "instruction",
        "--k",
        &k.to_string(),
        "--candidates",
        s(&fixture.join("candidates.jsonl")),
        "--tests",
        s(&fixture.join("tests")),
        "--out",
        s(out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    read_json(&out.join("summary.json"))
}

/// Runs `dataset build` on the fixture corpus with seed 7 and ratios 0.5,0,0.5.
pub fn build_corpus(out: &Path) -> Output {
    let c = corpus();
    perfedit(&[
        "--config",
        s(&c.join("config.json")),
        "dataset",
        "build",
        "--submissions",
        s(&c.join("submissions.jsonl")),
        "--tests",
        s(&c.join("tests")),
        "--out",
        s(out),
        "--seed",
        "7",
        "--ratios",
        "0.5,0,0.5",
    ])
}
