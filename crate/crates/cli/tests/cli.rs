//! Drives the `confalign` binary end to end.

use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

use confalign::confidence::{read_records, write_records, ConfidenceRecord, RecordStatus};
use confalign::data::{synthetic_questions, write_dataset};
use confalign::preference::read_preferences;
use tempfile::TempDir;

fn confalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confalign"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dataset(dir: &Path, n: usize) -> std::path::PathBuf {
    let p = dir.join("ds.jsonl");
    write_dataset(&synthetic_questions(n, 4, 4, 1), &p).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_mock_writes_one_record_per_question() {
    let dir = TempDir::new().unwrap();
    let ds = dataset(dir.path(), 200);
    let out = dir.path().join("out");
    let o = confalign(&["generate", "--dataset", path(&ds), "--name", "toy", "--out-dir", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records = read_records(out.join("toy.records.jsonl")).unwrap();
    assert_eq!(records.len(), 200);
    assert!(out.join("toy.responses.jsonl").is_file());
}

#[test]
fn per_subject_sampling_from_cli() {
    let dir = TempDir::new().unwrap();
    let ds = dataset(dir.path(), 200);
    let out = dir.path().join("out");
    let o = confalign(&[
        "generate", "--dataset", path(&ds), "--per-subject", "5", "--seed", "3", "--out-dir", path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_records(out.join("ds.records.jsonl")).unwrap().len(), 20);

    let o = confalign(&["generate", "--dataset", path(&ds), "--per-subject", "51", "--out-dir", path(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unreachable_endpoint_exits_2_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let ds = dataset(dir.path(), 10);
    let out = dir.path().join("out");
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = Command::new(env!("CARGO_BIN_EXE_confalign"))
        .args(["generate", "--backend", "chat-completions", "--dataset", path(&ds), "--out-dir", path(&out)])
        .env("CONFALIGN_ENDPOINT", format!("http://127.0.0.1:{port}"))
        .env("CONFALIGN_MAX_ATTEMPTS", "1")
        .env("CONFALIGN_TIMEOUT_SECS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("backend"));
    let leftovers: Vec<_> = fs::read_dir(&out).map(|d| d.collect()).unwrap_or_default();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn failure_rate_above_threshold_warns_but_succeeds() {
    let dir = TempDir::new().unwrap();
    let ds = dataset(dir.path(), 1000);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        r#"
        failure_threshold = 0.05
        [mock]
        accuracy = 0.7
        verbal_mode = "vanilla"
        internal_dist = { family = "beta", alpha = 5.0, beta = 2.0 }
        malformed_rate = 0.07
        "#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = confalign(&["generate", "--config", path(&cfg), "--dataset", path(&ds), "--out-dir", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("exceeds threshold 5.00%"), "{err}");
    let records = read_records(out.join("ds.records.jsonl")).unwrap();
    let failed = records.iter().filter(|r| !r.is_ok()).count() as f64 / 1000.0;
    assert!(failed > 0.05 && failed < 0.09, "{failed}");

    // Same run under a looser threshold is quiet.
    let o = confalign(&[
        "generate", "--config", path(&cfg), "--dataset", path(&ds), "--out-dir", path(&out),
        "--failure-threshold", "0.2",
    ]);
    assert!(o.status.success());
    assert!(!stderr(&o).contains("exceeds"));
}

#[test]
fn config_file_lists_datasets() {
    let dir = TempDir::new().unwrap();
    dataset(dir.path(), 40);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        r#"
        output_dir = "unused"
        [[datasets]]
        name = "first"
        path = "ds.jsonl"
        [[datasets]]
        name = "second"
        path = "ds.jsonl"
        sampling = { per_subject = 2, seed = 0 }
        "#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = confalign(&["generate", "--config", path(&cfg), "--out-dir", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_records(out.join("first.records.jsonl")).unwrap().len(), 40);
    assert_eq!(read_records(out.join("second.records.jsonl")).unwrap().len(), 8);
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let ds = dataset(dir.path(), 5);
    assert_eq!(confalign(&["nonsense"]).status.code(), Some(1));
    assert_eq!(confalign(&["evaluate"]).status.code(), Some(1));
    assert_eq!(confalign(&["generate"]).status.code(), Some(1));
    assert_eq!(confalign(&["--help"]).status.code(), Some(0));
    let o = confalign(&["generate", "--dataset", path(&ds), "--backend", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown backend"));
    let o = confalign(&["generate", "--dataset", path(&ds), "--extractor", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "backend = 3").unwrap();
    assert_eq!(confalign(&["generate", "--config", path(&bad)]).status.code(), Some(1));
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(
        confalign(&["generate", "--dataset", path(&missing)]).status.code(),
        Some(1),
        "missing dataset is a config error"
    );
}

#[test]
fn malformed_dataset_exits_3() {
    let dir = TempDir::new().unwrap();
    let ds = dir.path().join("bad.jsonl");
    fs::write(&ds, "{\"id\":\"x\"}\n").unwrap();
    let o = confalign(&["generate", "--dataset", path(&ds), "--out-dir", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

fn ok(id: &str, c_v: f64, c_i: f64) -> ConfidenceRecord {
    ConfidenceRecord {
        question_id: id.into(),
        predicted_label: Some('A'),
        c_v: Some(c_v),
        c_i: Some(c_i),
        correct: Some(true),
        status: RecordStatus::Ok,
    }
}

#[test]
fn build_prefs_with_no_ok_records_writes_empty_file() {
    let dir = TempDir::new().unwrap();
    let ds = dataset(dir.path(), 30);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        r#"
        [mock]
        accuracy = 0.7
        verbal_mode = "vanilla"
        internal_dist = { family = "uniform", low = 0.2, high = 0.9 }
        malformed_rate = 1.0
        "#,
    )
    .unwrap();
    let out = dir.path().join("out");
    assert!(confalign(&["generate", "--config", path(&cfg), "--dataset", path(&ds), "--out-dir", path(&out)])
        .status
        .success());
    let prefs = dir.path().join("prefs.jsonl");
    let o = confalign(&[
        "build-prefs",
        "--records", path(&out.join("ds.records.jsonl")),
        "--responses", path(&out.join("ds.responses.jsonl")),
        "--out", path(&prefs),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "pairs written: 0, skipped extraction_failed: 30");
    assert_eq!(fs::read_to_string(&prefs).unwrap(), "");
}

#[test]
fn build_prefs_merges_datasets_and_filters_incorrect() {
    let dir = TempDir::new().unwrap();
    let ds = dataset(dir.path(), 100);
    let out = dir.path().join("out");
    for name in ["a", "b"] {
        let o = confalign(&["generate", "--dataset", path(&ds), "--name", name, "--out-dir", path(&out)]);
        assert!(o.status.success());
    }
    let prefs = dir.path().join("prefs.jsonl");
    let args = |extra: &[&str]| {
        let mut v = vec![
            "build-prefs".to_string(),
            "--out".into(),
            path(&prefs).into(),
        ];
        for name in ["a", "b"] {
            v.push("--records".into());
            v.push(path(&out.join(format!("{name}.records.jsonl"))).into());
            v.push("--responses".into());
            v.push(path(&out.join(format!("{name}.responses.jsonl"))).into());
        }
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let all = args(&[]);
    let o = confalign(&all.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", stderr(&o));
    let n_all = read_preferences(&prefs).unwrap().len();
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(stdout.starts_with(&format!("pairs written: {n_all}")), "{stdout}");

    let filtered = args(&["--correct-only"]);
    let o = confalign(&filtered.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success());
    let n_correct = read_preferences(&prefs).unwrap().len();
    assert!(n_correct < n_all);
    assert!(String::from_utf8_lossy(&o.stdout).contains("skipped incorrect:"));
}

#[test]
fn build_prefs_join_mismatch_exits_3() {
    let dir = TempDir::new().unwrap();
    let records = dir.path().join("r.jsonl");
    let responses = dir.path().join("s.jsonl");
    write_records(&records, &[ok("q1", 50.0, 60.0)]).unwrap();
    fs::write(&responses, "{\"question_id\":\"other\",\"prompt\":\"p\",\"response\":\"Guess: A\\nProbability: 50%\"}\n")
        .unwrap();
    let o = confalign(&[
        "build-prefs", "--records", path(&records), "--responses", path(&responses),
        "--out", path(&dir.path().join("p.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn evaluate_grid_with_one_empty_cell() {
    let dir = TempDir::new().unwrap();
    let mut cells = Vec::new();
    for model in ["m1", "m2"] {
        for ds in ["d1", "d2"] {
            let p = dir.path().join(format!("{model}-{ds}.jsonl"));
            let recs: Vec<_> = (0..10)
                .map(|i| ok(&format!("q{i}"), (i * 7 % 10) as f64 * 10.0, i as f64 * 9.0))
                .collect();
            write_records(&p, &recs).unwrap();
            cells.push(format!("{model}:{ds}:{}", path(&p)));
        }
    }
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    cells.push(format!("m3:d1:{}", path(&empty)));

    let out = dir.path().join("report");
    let mut args = vec!["evaluate", "--out-dir", path(&out)];
    for c in &cells {
        args.push("--cell");
        args.push(c);
    }
    let o = confalign(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("m3 / d1"));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    // Header, four cells, one mean row per model.
    assert_eq!(csv.lines().count(), 1 + 4 + 2);
    assert_eq!(csv.lines().filter(|l| l.contains(",Mean,")).count(), 2);
    let md = fs::read_to_string(out.join("report.md")).unwrap();
    assert_eq!(md.lines().filter(|l| l.contains("| Mean |")).count(), 2);
    assert!(md.contains("Cells without metrics"));
    assert!(out.join("plots/m1__d2/epsilon_hist.csv").is_file());

    // Only the empty cell: nothing to report.
    let o = confalign(&["evaluate", "--out-dir", path(&out), "--cell", &cells[4]]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_lays_out_every_artifact() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    let o = confalign(&["simulate", "--out-dir", path(&out), "--questions", "300", "--p-value", "permutation", "--shuffles", "200"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "dataset.jsonl",
        "vanilla/synthetic.records.jsonl",
        "aligned/synthetic.responses.jsonl",
        "preferences.jsonl",
        "report/report.md",
        "report/plots/mock-aligned__synthetic/scatter.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let o = confalign(&["simulate", "--out-dir", path(&out), "--backend", "chat-completions"]);
    assert_eq!(o.status.code(), Some(1));
}
