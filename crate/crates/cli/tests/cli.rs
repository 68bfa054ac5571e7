use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use er_bounds::bounds::wilson_interval;
use er_bounds::ValidationStats;
use serde_json::Value;
use tempfile::TempDir;

fn erb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erb")).args(args).output().expect("run erb")
}

fn ok(args: &[&str]) -> String {
    let out = erb(args);
    assert!(
        out.status.success(),
        "erb {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    erb(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, extra: &[&str]) -> String {
    let mut args = vec!["generate", "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(&args)
}

fn train(data: &Path, run: &Path, extra: &[&str]) -> String {
    let records = data.join("records.csv");
    let schema = data.join("schema.json");
    let gold = data.join("gold.csv");
    let mut args = vec![
        "train",
        "--records",
        s(&records),
        "--schema",
        s(&schema),
        "--gold",
        s(&gold),
        "--out",
        s(run),
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

/// One default generate + train, shared by the read-only tests.
fn shared_run() -> &'static (TempDir, PathBuf, PathBuf) {
    static RUN: OnceLock<(TempDir, PathBuf, PathBuf)> = OnceLock::new();
    RUN.get_or_init(|| {
        let tmp = TempDir::new().unwrap();
        let data = tmp.path().join("data");
        let run = tmp.path().join("run");
        generate(&data, &[]);
        train(&data, &run, &[]);
        (tmp, data, run)
    })
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn generate_default_sizes_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    let stdout = generate(&a, &[]);
    assert!(stdout.contains("1000 records, 4500 truth pairs"), "{stdout}");
    generate(&b, &[]);
    generate(&c, &["--seed", "1"]);
    for f in ["records.csv", "gold.csv", "schema.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("records.csv")).unwrap(), fs::read(c.join("records.csv")).unwrap());

    let gold = fs::read_to_string(a.join("gold.csv")).unwrap();
    let mut sizes: BTreeMap<String, usize> = BTreeMap::new();
    for row in csv_rows(&gold).into_iter().skip(1) {
        *sizes.entry(row[1].clone()).or_default() += 1;
    }
    assert_eq!(sizes.len(), 100);
    assert!(sizes.values().all(|&n| n == 10));
    let config = fs::read_to_string(a.join("effective_config.txt")).unwrap();
    assert!(config.contains("noise_sigma = 0.03\n"), "{config}");
}

#[test]
fn generate_single_record() {
    let tmp = TempDir::new().unwrap();
    let stdout = generate(tmp.path(), &["--entities", "1", "--per-entity", "1"]);
    assert!(stdout.contains("1 records, 0 truth pairs"), "{stdout}");
    assert_eq!(fs::read_to_string(tmp.path().join("records.csv")).unwrap().lines().count(), 2);
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("gen.cfg");
    let out = tmp.path().join("out");
    fs::write(&cfg, format!("# small\nout = {}\nentities = 3\nper-entity = 2\nseed = 5\n", s(&out))).unwrap();
    let stdout = ok(&["generate", "--config", s(&cfg), "--seed", "6"]);
    assert!(stdout.contains("6 records, 3 truth pairs"), "{stdout}");
    let effective = fs::read_to_string(out.join("effective_config.txt")).unwrap();
    assert!(effective.contains("seed = 6\n") && effective.contains("entities = 3\n"), "{effective}");

    fs::write(&cfg, "entities = 3\nbogus = 1\n").unwrap();
    assert_eq!(code(&["generate", "--config", s(&cfg), "--out", s(&out)]), 2);
    fs::write(&cfg, "entities three\n").unwrap();
    assert_eq!(code(&["generate", "--config", s(&cfg), "--out", s(&out)]), 2);
}

#[test]
fn usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&["generate"]), 2);
    assert_eq!(code(&["sweep"]), 2);
    assert_eq!(code(&["sweep", "--run", s(tmp.path())]), 2);
    assert_eq!(code(&["resolve", "--run", s(tmp.path()), "--threshold", "0.5"]), 2);

    let (_, _, run) = shared_run();
    assert_eq!(code(&["resolve", "--run", s(run)]), 2);
    assert_eq!(code(&["resolve", "--run", s(run), "--threshold", "1.5"]), 2);
    assert_eq!(code(&["resolve", "--run", s(run), "--threshold", "0.5", "--gate", "precision>0.5"]), 2);
    let out = tmp.path().join("sweep.csv");
    assert_eq!(code(&["sweep", "--run", s(run), "--grid-start", "0.9", "--grid-stop", "0.1", "--out", s(&out)]), 2);
    assert_eq!(code(&["sweep", "--run", s(run), "--class-balance", "2", "--out", s(&out)]), 2);
}

#[test]
fn missing_input_file_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let (_, data, _) = shared_run();
    let missing = tmp.path().join("nope.csv");
    let schema = data.join("schema.json");
    let gold = data.join("gold.csv");
    let args = [
        "train",
        "--records",
        s(&missing),
        "--schema",
        s(&schema),
        "--gold",
        s(&gold),
        "--out",
        s(tmp.path()),
    ];
    assert_eq!(code(&args), 3);
}

#[test]
fn train_writes_a_complete_run() {
    let (_, _, run) = shared_run();
    for f in [
        "model.json",
        "schema.json",
        "labeled_records.csv",
        "train_pairs.csv",
        "validation_pairs.csv",
        "test_records.csv",
        "test_gold.csv",
        "validation_stats.json",
        "effective_config.txt",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let stats = read_json(&run.join("validation_stats.json"));
    assert!(stats["precision_v"].as_f64().unwrap() > 0.9, "{stats}");
    assert!(stats["recall_v"].as_f64().unwrap() > 0.9, "{stats}");
    assert_eq!(stats["stats"]["n_pairs"], 100);
    assert_eq!(stats["stats"]["n_positive"], 50);
    assert_eq!(stats["c_v"], 0.5);

    let text = fs::read_to_string(run.join("validation_stats.json")).unwrap();
    assert!(text.ends_with('\n'));
    let counts: ValidationStats = serde_json::from_value(stats["stats"].clone()).unwrap();
    assert_eq!(serde_json::to_value(counts).unwrap(), stats["stats"]);
    assert_eq!(counts.precision(), stats["precision_v"].as_f64());
    assert_eq!(counts.recall(), stats["recall_v"].as_f64().unwrap());
    let low = stats["recall_interval"]["low"].as_f64().unwrap();
    let expected = wilson_interval(counts.n_true_match, counts.n_positive, 0.95).unwrap();
    assert_eq!(low, expected.low);

    let pairs = fs::read_to_string(run.join("train_pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 101);
    let labeled: BTreeSet<String> = csv_rows(&fs::read_to_string(run.join("labeled_records.csv")).unwrap())
        .into_iter()
        .skip(1)
        .map(|r| r[0].clone())
        .collect();
    let test: BTreeSet<String> = csv_rows(&fs::read_to_string(run.join("test_records.csv")).unwrap())
        .into_iter()
        .skip(1)
        .map(|r| r[0].clone())
        .collect();
    assert!(labeled.is_disjoint(&test));
    assert!(labeled.len() + test.len() <= 1000);
}

#[test]
fn train_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (_, data, run) = shared_run();
    let again = tmp.path().join("again");
    train(data, &again, &[]);
    for f in ["model.json", "validation_stats.json", "train_pairs.csv", "test_records.csv", "test_gold.csv"] {
        assert_eq!(fs::read(run.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn undefined_validation_precision_is_flagged() {
    let tmp = TempDir::new().unwrap();
    let (_, data, _) = shared_run();
    let run = tmp.path().join("run");
    let stdout = train(data, &run, &["--threshold", "0.999999999"]);
    assert!(stdout.contains("precision undefined"), "{stdout}");
    let stats = read_json(&run.join("validation_stats.json"));
    assert!(stats["precision_v"].is_null());
    assert_eq!(stats["stats"]["n_predicted_match"], 0);

    let out = erb(&["resolve", "--run", s(&run), "--threshold", "0.999999999", "--gate", "recall_lb>=0.1"]);
    assert_eq!(out.status.code(), Some(4));
    let report = read_json(&run.join("bound_report.json"));
    assert!(report["report"].is_null());
    assert!(report["bound_error"].as_str().unwrap().contains("undefined"));
}

#[test]
fn sweep_is_monotone_and_reports_an_optimum() {
    let (_, _, run) = shared_run();
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sweep.csv");
    let stdout = ok(&["sweep", "--run", s(run), "--out", s(&out)]);
    assert!(stdout.contains("optimal f1_lb"), "{stdout}");
    let text = fs::read_to_string(&out).unwrap();
    let (table, tail) = text.split_once("\n\n").expect("blank line before final block");
    let rows = csv_rows(table);
    assert_eq!(rows[0][0], "threshold");
    assert_eq!(rows[0].len(), 16);
    let body = &rows[1..];
    assert_eq!(body.len(), 19);
    let num = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
    for w in body.windows(2) {
        assert!(num(&w[0], 0) < num(&w[1], 0));
        assert!(num(&w[0], 1) >= num(&w[1], 1), "r_pairs increased");
        assert!(num(&w[0], 2) >= num(&w[1], 2), "tm_pairs increased");
    }
    for r in body {
        assert!(num(r, 2) <= num(r, 1));
        assert!(!r[15].is_empty(), "true metrics expected with default gold");
    }
    let tail = csv_rows(tail.trim_end());
    assert_eq!(tail[0], ["optimal_metric", "optimal_threshold", "optimal_value"]);
    assert_eq!(tail[1][0], "f1_lb");
    let best = num(&tail[1], 1);
    let max_f1 = body.iter().filter(|r| !r[10].is_empty()).map(|r| num(r, 10)).fold(f64::MIN, f64::max);
    assert_eq!(num(&tail[1], 2), max_f1);
    assert!(body.iter().any(|r| num(r, 0) == best));

    let summary = read_json(&tmp.path().join("sweep_summary.json"));
    assert_eq!(summary["rows"].as_array().unwrap().len(), 19);

    let out2 = tmp.path().join("again.csv");
    ok(&["sweep", "--run", s(run), "--out", s(&out2)]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&out2).unwrap());
}

#[test]
fn sweep_without_gold_leaves_truth_columns_empty() {
    let (_, _, run) = shared_run();
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sweep.csv");
    let test = run.join("test_records.csv");
    ok(&[
        "sweep",
        "--run",
        s(run),
        "--test-records",
        s(&test),
        "--grid-start",
        "0.5",
        "--grid-stop",
        "0.9",
        "--grid-steps",
        "3",
        "--select",
        "precision_lb@recall_lb>=0.5",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let (table, tail) = text.split_once("\n\n").unwrap();
    let rows = csv_rows(table);
    assert_eq!(rows.len(), 4);
    assert!(rows[1..].iter().all(|r| r[13].is_empty() && r[14].is_empty() && r[15].is_empty()));
    assert!(tail.contains("precision_lb@recall_lb>=0.5"));
}

fn cluster_map(path: &Path) -> Vec<(String, String)> {
    csv_rows(&fs::read_to_string(path).unwrap())
        .into_iter()
        .skip(1)
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect()
}

#[test]
fn resolve_gates_and_canonical_clusters() {
    let (_, _, run) = shared_run();
    let tmp = TempDir::new().unwrap();
    let good = tmp.path().join("good");
    let out = erb(&[
        "resolve",
        "--run",
        s(run),
        "--threshold",
        "0.95",
        "--gate",
        "precision_lb>=0.9",
        "--gate",
        "recall_lb>=0.9",
        "--out",
        s(&good),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&good.join("bound_report.json"));
    assert!(report["gates"].as_array().unwrap().iter().all(|g| g["passed"] == true));
    assert!(report["report"]["precision_lb"].as_f64().unwrap() >= 0.9);

    // the collapsed regime has a near-zero precision bound
    let bad = tmp.path().join("bad");
    let out = erb(&["resolve", "--run", s(run), "--threshold", "0.5", "--gate", "precision_lb>=0.9", "--out", s(&bad)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(bad.join("clustering.csv").exists() && bad.join("bound_report.json").exists());

    let test_ids: Vec<String> = csv_rows(&fs::read_to_string(run.join("test_records.csv")).unwrap())
        .into_iter()
        .skip(1)
        .map(|r| r[0].clone())
        .collect();
    for dir in [&good, &bad] {
        let rows = cluster_map(&dir.join("clustering.csv"));
        assert_eq!(rows.iter().map(|r| r.0.clone()).collect::<Vec<_>>(), test_ids);
        let mut members: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (id, c) in &rows {
            members.entry(c).or_default().push(id);
        }
        for (c, ids) in &members {
            assert_eq!(ids.iter().min().unwrap(), c);
        }
        let report = read_json(&dir.join("bound_report.json"));
        assert_eq!(report["clusters"].as_u64().unwrap() as usize, members.len());
    }

    let again = tmp.path().join("again");
    ok(&["resolve", "--run", s(run), "--threshold", "0.95", "--out", s(&again)]);
    assert_eq!(fs::read(good.join("clustering.csv")).unwrap(), fs::read(again.join("clustering.csv")).unwrap());
}

#[test]
fn sweep_writes_clusterings_on_request() {
    let tmp = TempDir::new().unwrap();
    let (_, data, _) = shared_run();
    let run = tmp.path().join("run");
    train(data, &run, &[]);
    ok(&["sweep", "--run", s(&run), "--grid-start", "0.3", "--grid-stop", "0.9", "--grid-steps", "2", "--write-clusterings"]);
    let dir = run.join("clusterings");
    assert!(dir.join("threshold_0.3.csv").exists());
    assert!(dir.join("threshold_0.9.csv").exists());
    let resolved = tmp.path().join("resolved");
    ok(&["resolve", "--run", s(&run), "--threshold", "0.9", "--out", s(&resolved)]);
    assert_eq!(
        fs::read(dir.join("threshold_0.9.csv")).unwrap(),
        fs::read(resolved.join("clustering.csv")).unwrap()
    );
}
