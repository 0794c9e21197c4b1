use std::path::Path;
use std::process::{Command, Output};

use pump_anomaly::data::load_dataset;
use pump_anomaly::evaluation::RESULTS_HEADER;
use pump_anomaly::nn::{count_macs, Mode, Model, ModelConfig};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pump-anomaly"))
        .current_dir(dir)
        .env_remove("PUMP_ANOMALY_SEED")
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> Output {
    let mut args = vec!["generate", "--pumps", "3", "--samples", "12", "--out", name];
    args.extend_from_slice(extra);
    run(dir, &args)
}

#[test]
fn generate_reports_counts_and_validates_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let ok = generate(dir.path(), "a.ndjson", &["--abnormal-fraction", "0"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("(36 normal, 0 abnormal)"), "{}", stdout(&ok));

    let bad = generate(dir.path(), "b.ndjson", &["--abnormal-fraction", "1.5"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("abnormal fraction"));
    assert!(!dir.path().join("b.ndjson").exists());
}

#[test]
fn seed_comes_from_flag_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "flag.ndjson", &["--seed", "11"]);
    let env = Command::new(env!("CARGO_BIN_EXE_pump-anomaly"))
        .current_dir(dir.path())
        .env("PUMP_ANOMALY_SEED", "11")
        .args(["generate", "--pumps", "3", "--samples", "12", "--out", "env.ndjson"])
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(0));
    generate(dir.path(), "zero.ndjson", &[]);
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert!(read("flag.ndjson") == read("env.ndjson"));
    assert!(read("flag.ndjson") != read("zero.ndjson"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "# synthetic set\npumps = 2\nsamples = 9\nseed = 4\n",
    )
    .unwrap();
    let o = run(dir.path(), &["--config", "run.cfg", "generate", "--out", "c.ndjson", "--pumps", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = load_dataset(&dir.path().join("c.ndjson")).unwrap();
    assert_eq!(ds.pump_count(), 3);
    assert_eq!(ds.len(), 27);
    generate(dir.path(), "d.ndjson", &["--seed", "4", "--samples", "9"]);
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert!(read("c.ndjson") == read("d.ndjson"));

    std::fs::write(dir.path().join("broken.cfg"), "pumps 2\n").unwrap();
    let o = run(dir.path(), &["--config", "broken.cfg", "generate", "--out", "e.ndjson"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_prints_mac_count_and_rejects_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "d.ndjson", &[]);
    let args = [
        "train", "--dataset", "d.ndjson", "--algo", "cnn", "--depth", "2", "--kernel", "3",
        "--channels", "2", "--epochs", "1", "--batch-size", "8", "--out", "m.json",
    ];
    let o = run(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let macs = count_macs(&ModelConfig::cnn(2, 3, 2));
    assert!(stdout(&o).contains(&format!("mac count {macs}")));
    let model = Model::<f32>::load(&dir.path().join("m.json")).unwrap();
    assert_eq!(model.mode(), Mode::Inference);

    let missing = run(dir.path(), &["train", "--dataset", "nope.ndjson", "--out", "x.json"]);
    assert_eq!(missing.status.code(), Some(2));
    let combined = run(dir.path(), &["train", "--dataset", "d.ndjson", "--algo", "combined", "--out", "x.json"]);
    assert_eq!(combined.status.code(), Some(2));
}

#[test]
fn malformed_dataset_is_a_runtime_error_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.ndjson"), "{\"pump_id\": \"p\"\n").unwrap();
    let o = run(dir.path(), &["train", "--dataset", "bad.ndjson", "--out", "m.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.ndjson:1"));
}

#[test]
fn crossval_writes_one_aggregate_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "d.ndjson", &[]);
    let o = run(
        dir.path(),
        &[
            "crossval", "--dataset", "d.ndjson", "--algo", "threshold,combined", "--policy",
            "optimal,fpr", "--depth", "2", "--kernel", "3", "--channels", "2", "--epochs", "1",
            "--batch-size", "8", "--out", "r.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(RESULTS_HEADER));
    let aggregates: Vec<&str> = csv.lines().filter(|l| l.starts_with("aggregate,")).collect();
    assert_eq!(aggregates.len(), 3);
    assert_eq!(aggregates.iter().filter(|l| l.starts_with("aggregate,combined,fpr,")).count(), 1);
    assert!(stdout(&o).contains("combined-fpr: accuracy"));

    let unknown = run(dir.path(), &["crossval", "--dataset", "d.ndjson", "--algo", "svm", "--out", "r.csv"]);
    assert_eq!(unknown.status.code(), Some(2));
    let combined_opt = run(
        dir.path(),
        &["crossval", "--dataset", "d.ndjson", "--algo", "combined", "--policy", "optimal", "--out", "r.csv"],
    );
    assert_eq!(combined_opt.status.code(), Some(2));
}

#[test]
fn dse_writes_results_and_pareto_subset() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "d.ndjson", &[]);
    let o = run(
        dir.path(),
        &[
            "dse", "--dataset", "d.ndjson", "--depths", "2,4", "--kernels", "3,11", "--channels", "5",
            "--epochs", "1", "--batch-size", "8", "--out", "all.csv", "--pareto-out", "front.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let all = std::fs::read_to_string(dir.path().join("all.csv")).unwrap();
    let front = std::fs::read_to_string(dir.path().join("front.csv")).unwrap();
    assert_eq!(all.lines().count(), 5);
    for row in front.lines() {
        assert!(all.lines().any(|r| r == row));
    }
    let row = all.lines().find(|l| l.contains(",4,11,5,")).unwrap();
    assert_eq!(row.split(',').nth(6), Some("616000"));

    let empty = run(dir.path(), &["dse", "--dataset", "d.ndjson", "--depths=", "--out", "a.csv", "--pareto-out", "b.csv"]);
    assert_eq!(empty.status.code(), Some(2));
}

#[test]
fn adapt_reports_selection_and_falls_back_to_threshold() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "d.ndjson", &[]);
    let mut always_abnormal = Model::<f32>::zeros(ModelConfig::ecnn(2, 1, 1)).unwrap().with_mode(Mode::Inference);
    always_abnormal.convs_mut()[1].bias[0] = 1.0;
    always_abnormal.save(&dir.path().join("m.json")).unwrap();

    let o = run(
        dir.path(),
        &["adapt", "--dataset", "d.ndjson", "--model", "m.json", "--pump", "pump-001", "--out", "p.json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("threshold"), "{text}");
    let fpr: f64 = text.split("adaptation fpr ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(fpr < 0.1);
    let profile = std::fs::read_to_string(dir.path().join("p.json")).unwrap();
    assert!(profile.contains("\"chosen_detector\": \"threshold\""), "{profile}");

    let unknown = run(dir.path(), &["adapt", "--dataset", "d.ndjson", "--model", "m.json", "--pump", "pump-999"]);
    assert_eq!(unknown.status.code(), Some(2));
    let no_model = run(dir.path(), &["adapt", "--dataset", "d.ndjson", "--pump", "pump-001", "--algo", "ecnn"]);
    assert_eq!(no_model.status.code(), Some(2));
    let threshold = run(dir.path(), &["adapt", "--dataset", "d.ndjson", "--pump", "pump-001", "--algo", "threshold"]);
    assert_eq!(threshold.status.code(), Some(0));
    assert!(stdout(&threshold).contains("\"pump_id\": \"pump-001\""));
}
