//! End-to-end runs of the `lexborrow` binary on the desk-scale synthetic corpus.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new() -> Self {
        Run { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_lexborrow"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.exec(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_slice(&std::fs::read(self.path(name)).unwrap()).unwrap()
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

/// synth, classify, candidates, features, cluster, metrics, baseline, sample.
fn prepare(run: &Run) {
    run.ok(&["synth", "--small", "--seed", "7", "--out", "syn"]);
    run.ok(&["classify", "--corpus", "syn/corpus.jsonl", "--out", "classes.tsv", "--histogram", "hist.json"]);
    run.ok(&[
        "candidates", "--corpus", "syn/corpus.jsonl", "--classes", "classes.tsv", "--stopwords", "syn/stopwords.txt",
        "--top-n", "40", "--out", "candidates.tsv",
    ]);
    run.ok(&["features", "--corpus", "syn/corpus.jsonl", "--classes", "classes.tsv", "--words", "syn/targets.txt", "--out", "features.tsv"]);
    run.ok(&["cluster", "--features", "features.tsv", "--seed", "1", "--out", "model.json"]);
    run.ok(&["metrics", "--corpus", "syn/corpus.jsonl", "--classes", "classes.tsv", "--words", "syn/targets.txt", "--out", "social.tsv"]);
    run.ok(&["baseline", "--words", "syn/targets.txt", "--map", "syn/translit.tsv", "--freq", "syn/freq.tsv", "--out", "baseline.tsv"]);
    run.ok(&["sample", "--model", "model.json", "--scores", "baseline.tsv", "--mws-count", "10", "--seed", "3", "--out", "plan.json"]);
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let run = Run::new();
    run.ok(&["synth", "--small", "--seed", "7", "--out", "a"]);
    run.ok(&["synth", "--small", "--seed", "7", "--out", "b"]);
    run.ok(&["synth", "--small", "--seed", "8", "--out", "c"]);
    for name in ["corpus.jsonl", "survey.jsonl", "freq.tsv", "translit.tsv", "survey_items.tsv", "truth.tsv"] {
        assert_eq!(read(&run.path("a").join(name)), read(&run.path("b").join(name)), "{name}");
    }
    assert_ne!(read(&run.path("a/corpus.jsonl")), read(&run.path("c/corpus.jsonl")));
    let tweets = String::from_utf8(read(&run.path("a/corpus.jsonl"))).unwrap().lines().count();
    assert!((400..=650).contains(&tweets), "{tweets}");
}

#[test]
fn golden_pipeline_report() {
    let run = Run::new();
    prepare(&run);
    let hist = run.json("hist.json");
    assert_eq!(hist["unclassifiable"], 0);
    assert_eq!(run.json("model.json")["k"].as_u64().map(|k| (2..15).contains(&k)), Some(true));

    let eval = |out: &str| {
        run.ok(&[
            "evaluate", "--survey", "syn/survey.jsonl", "--scores", "social.tsv", "--scores", "baseline.tsv",
            "--corpus", "syn/corpus.jsonl", "--classes", "classes.tsv", "--out", out,
        ])
    };
    eval("report.json");
    eval("again.json");
    assert_eq!(read(&run.path("report.json")), read(&run.path("again.json")));

    let report = run.json("report.json");
    assert_eq!(report["words"], 57);
    assert_eq!(report["config"]["classifier"]["mono_threshold"], 0.9);
    for key in ["survey:survey.jsonl", "scores0:social.tsv", "scores1:baseline.tsv", "corpus:corpus.jsonl"] {
        assert_eq!(report["input_digests"][key].as_str().map(str::len), Some(64), "{key}");
    }
    let full = &report["correlations"]["full"];
    for m in ["uur", "utr", "upr", "baseline"] {
        assert!(full[m]["rho"].is_f64(), "{m}");
        assert_eq!(full[m]["n"], 57);
    }
    assert!(full["uur"]["rho"].as_f64().unwrap() > full["baseline"]["rho"].as_f64().unwrap());
    let buckets = &report["buckets"]["uur"];
    assert_eq!(buckets["per_bucket"].as_array().unwrap().len(), 5);
    assert!(buckets["micro_precision"].is_f64() && buckets["macro_recall"].is_f64());
    for cohort in ["young", "elder"] {
        assert!(report["age_cohorts"][cohort]["uur"]["correlation"]["rho"].is_f64(), "{cohort}");
    }
    assert!(report["mixing_extent"].as_object().is_some_and(|m| !m.is_empty()));

    run.ok(&[
        "evaluate", "--survey", "syn/survey.jsonl", "--scores", "social.tsv", "--scores", "baseline.tsv",
        "--plan", "plan.json", "--out", "planned.json",
    ]);
    let planned = run.json("planned.json");
    let plan = run.json("plan.json");
    assert_eq!(planned["words"].as_u64(), Some(plan["full"].as_array().unwrap().len() as u64));
    assert_eq!(planned["correlations"].as_object().unwrap().len(), 3);
}

#[test]
fn config_file_overrides_flags() {
    let run = Run::new();
    prepare(&run);
    std::fs::write(run.path("cfg.json"), r#"{"age_cut": 45, "seed": 9}"#).unwrap();
    run.ok(&[
        "cohorts", "--survey", "syn/survey.jsonl", "--scores", "social.tsv", "--age-cut", "20", "--config", "cfg.json",
        "--out", "cohorts.json",
    ]);
    let c = run.json("cohorts.json");
    assert_eq!(c["config"]["age_cut"], 45);
    assert_eq!(c["config"]["seed"], 9);
    assert!(c["input_digests"]["survey:survey.jsonl"].is_string());
}

#[test]
fn reannotation_round_trip() {
    let run = Run::new();
    prepare(&run);
    run.ok(&[
        "reannotate-prep", "--corpus", "syn/corpus.jsonl", "--scores", "social.tsv", "--per-stratum", "4", "--seed", "2",
        "--out", "tasks.jsonl", "--shortfall", "short.json",
    ]);
    let tasks: Vec<Value> = String::from_utf8(read(&run.path("tasks.jsonl")))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let short = run.json("short.json");
    let missing = short["H_all"].as_array().unwrap().len() + short["H_most"].as_array().unwrap().len();
    assert_eq!(tasks.len() + missing, 4 * 3 * 2);

    // two annotators: one flips every task, one keeps every tag
    let mut export = String::new();
    for (annotator, tag, flipped) in [("x", "L1", true), ("y", "L2", false)] {
        for t in &tasks {
            let rec = serde_json::json!({
                "annotator_id": annotator, "task_id": t["task_id"], "word": t["word"], "stratum": t["stratum"],
                "context": t["context_mode"], "final_tag": tag, "flipped": flipped, "received_at": 0,
            });
            export.push_str(&rec.to_string());
            export.push('\n');
        }
    }
    std::fs::write(run.path("reannotation.jsonl"), export).unwrap();
    run.ok(&["reannotate-stats", "--export", "reannotation.jsonl", "--out", "stats.json"]);
    let stats = run.json("stats.json");
    for row in stats.as_array().unwrap() {
        assert_eq!(row["mu"], 0.5);
        assert_eq!(row["sigma"], 0.0);
    }
    run.ok(&[
        "evaluate", "--survey", "syn/survey.jsonl", "--scores", "social.tsv", "--reannotation", "reannotation.jsonl",
        "--out", "report.json",
    ]);
    assert_eq!(run.json("report.json")["reannotation"], stats);
}

#[test]
fn rank_outputs() {
    let run = Run::new();
    prepare(&run);
    let out = run.ok(&["rank", "--scores", "social.tsv", "--metric", "upr"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 57);
    let ranks: Vec<f64> = text.lines().map(|l| l.split('\t').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ranks.iter().sum::<f64>(), 57.0 * 58.0 / 2.0);
    let truth = run.ok(&["rank", "--survey", "syn/survey.jsonl"]);
    assert_eq!(String::from_utf8(truth.stdout).unwrap().lines().count(), 57);
}

#[test]
fn exit_codes() {
    let run = Run::new();
    prepare(&run);
    let partial: String = String::from_utf8(read(&run.path("social.tsv"))).unwrap().lines().take(30).map(|l| format!("{l}\n")).collect();
    std::fs::write(run.path("partial.tsv"), partial).unwrap();
    let out = run.exec(&["evaluate", "--survey", "syn/survey.jsonl", "--scores", "partial.tsv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("eval:") && err.contains("word sets differ"), "{err}");
    let words = String::from_utf8(read(&run.path("syn/targets.txt"))).unwrap();
    let partial = String::from_utf8(read(&run.path("partial.tsv"))).unwrap();
    let scored: std::collections::BTreeSet<&str> = partial.lines().map(|l| l.split('\t').next().unwrap()).collect();
    for w in words.lines().filter(|w| !scored.contains(w)) {
        assert!(err.contains(w), "{w} missing from {err}");
    }

    let out = run.exec(&["classify", "--corpus", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("nope.jsonl"));

    assert_eq!(run.exec(&["metrics", "--corpus", "syn/corpus.jsonl"]).status.code(), Some(1));
    assert_eq!(run.exec(&["frobnicate"]).status.code(), Some(1));

    std::fs::write(run.path("bad.jsonl"), "{\"id\": 1}\n").unwrap();
    let out = run.exec(&["classify", "--corpus", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("corpus:"));
}
