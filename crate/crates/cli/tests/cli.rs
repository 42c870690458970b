use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use surgskill::cache::Cache;
use surgskill::corpus::{load_corpus, synth_corpus};
use surgskill::extract::extract_video;
use surgskill::{MethodName, ResultsManifest};
use surgskill_core::media::Skill;
use surgskill_core::stip::StipConfig;

fn surgskill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surgskill")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn unknown_method_exits_with_config_code_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let body = format!(
        "seed = 1\nout = {:?}\nmethods = [\"bogus\"]\n[corpus]\nkind = \"synthetic\"\ncount = 10\n",
        out.to_str().unwrap()
    );
    let cfg = write_config(dir.path(), &body);
    let r = surgskill(&["crossval", "--config", &cfg]);
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(!out.exists());

    let r = surgskill(&["crossval", "--config", &cfg, "--method", "nope"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn missing_corpus_directory_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "seed = 1\nout = {:?}\nmethods = [\"bow\"]\n[corpus]\nkind = \"directory\"\npath = {:?}\n",
        dir.path().join("run").to_str().unwrap(),
        dir.path().join("absent").to_str().unwrap()
    );
    let cfg = write_config(dir.path(), &body);
    let r = surgskill(&["extract", "--config", &cfg]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn synth_splits_by_fraction_and_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for p in [&a, &b] {
        let r = surgskill(&["synth", "--count", "10", "--expert-fraction", "0.5", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    assert_eq!(read_tree(&a), read_tree(&b));

    let corpus = load_corpus(&a).unwrap();
    let experts = corpus.entries().iter().filter(|e| e.skill == Skill::Expert).count();
    assert_eq!((corpus.len(), experts), (10, 5));
    for (i, e) in corpus.entries().iter().enumerate() {
        let clip = corpus.load_video(i).unwrap();
        assert_eq!(e.frames, clip.len());
        assert!((e.duration_s - clip.duration_s()).abs() < 1e-12);
    }

    let r = surgskill(&["synth", "--count", "4", "--seed", "7", "--out", dir.path().join("c").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn extraction_cache_key_follows_every_stip_field() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(5, 0.4, 3, &dir.path().join("corpus")).unwrap();
    // a novice video, so detections are non-empty
    let v = corpus.entries().iter().position(|e| e.skill == Skill::Novice).unwrap();
    let cache = Cache::new(dir.path().join("cache"));
    let base = StipConfig::default();
    let first = extract_video(&corpus, v, &base, &cache).unwrap();
    assert!(!first.points.is_empty());
    assert_eq!((cache.hits(), cache.misses()), (0, 1));
    let again = extract_video(&corpus, v, &base, &cache).unwrap();
    assert_eq!((cache.hits(), cache.misses()), (1, 1));
    assert_eq!(again.descriptors, first.descriptors);
    assert_eq!(again.points, first.points);

    let perturbed = StipConfig {
        top_k: base.top_k - 1,
        ..base.clone()
    };
    extract_video(&corpus, v, &perturbed, &cache).unwrap();
    assert_eq!(cache.misses(), 2);
}

fn augbow_config(dir: &Path, out: &Path) -> String {
    let body = format!(
        r#"seed = 5
out = {:?}
methods = ["augbow"]

[corpus]
kind = "synthetic"
count = 20

[grid]
k = [25]
distance = ["euclidean"]
c = [1.0]
ngram_n = [3]
encoding = ["interspersed"]
"#,
        out.to_str().unwrap()
    );
    write_config(dir, &body)
}

#[test]
fn crossval_rerun_hits_cache_and_reports_match_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = augbow_config(dir.path(), &out);
    let r = surgskill(&["crossval", "--config", &cfg]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let first = ResultsManifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(first.methods.len(), 1);
    let auc = first.method(MethodName::Augbow).unwrap().outcome.report.auc;
    assert!((0.0..=1.0).contains(&auc));
    assert!(first.provenance.run.cache_misses > 0);
    assert!(out.join("methods/augbow/report.json").exists());
    assert!(out.join("methods/augbow/predictions.csv").exists());

    let r = surgskill(&["crossval", "--config", &cfg]);
    assert!(r.status.success());
    let second = ResultsManifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(second.provenance.run.cache_misses, 0);
    assert!(second.provenance.run.cache_hits > 0);
    assert_eq!(first.reproducible_json(), second.reproducible_json());

    // one manifest: one row
    let tables = dir.path().join("tables");
    let r = surgskill(&["report", out.to_str().unwrap(), "--out", tables.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let summary = fs::read_to_string(tables.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    let col = header.iter().position(|h| *h == "auc").unwrap();
    assert_eq!(row[col].parse::<f64>().unwrap(), auc);
    assert_eq!(row[header.iter().position(|h| *h == "config_hash").unwrap()], first.config_hash);
    let roc = fs::read_to_string(tables.join("roc_augbow.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr,threshold\n"));

    // two manifests of one task: two rows under one header
    let copy = dir.path().join("copy.json");
    fs::copy(out.join("manifest.json"), &copy).unwrap();
    let both = dir.path().join("both");
    let r = surgskill(&["report", out.to_str().unwrap(), copy.to_str().unwrap(), "--out", both.to_str().unwrap()]);
    assert!(r.status.success());
    let summary = fs::read_to_string(both.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert_eq!(summary.lines().filter(|l| l.starts_with("config_hash")).count(), 1);

    // a 3-class manifest cannot share a table with a binary one
    let mut other: serde_json::Value = serde_json::from_str(&fs::read_to_string(&copy).unwrap()).unwrap();
    other["task"] = serde_json::json!("CF-3class");
    let mixed = dir.path().join("mixed.json");
    fs::write(&mixed, serde_json::to_string(&other).unwrap()).unwrap();
    let r = surgskill(&[
        "report",
        out.to_str().unwrap(),
        mixed.to_str().unwrap(),
        "--out",
        dir.path().join("mixed").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(3));
}
