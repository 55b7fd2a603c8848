use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("SPT_SEED")
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fixture(dir: &Path) -> String {
    let corpus = dir.join("corpus");
    ok(spt(&["fixture", "--out", corpus.to_str().unwrap()]));
    corpus.join("manifest.json").to_str().unwrap().to_string()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn extract_writes_one_csv_per_utterance_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = fixture(tmp.path());
    let out = tmp.path().join("out");
    let args = ["extract", "--manifest", &manifest, "--out", out.to_str().unwrap()];
    ok(spt(&args));
    let csv = out.join("features/female/female_001.csv");
    let first = fs::read_to_string(&csv).unwrap();
    let mut lines = first.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 18);
    assert_eq!(header[..3], ["frame_index", "center_time_s", "log_energy"]);
    assert_eq!(header[16..], ["f0_hz", "voicing"]);
    assert_eq!(lines.count(), 99);
    assert_eq!(files(&out.join("features/male")), ["male_001.csv", "male_002.csv"]);

    ok(spt(&args));
    assert_eq!(fs::read_to_string(&csv).unwrap(), first);
}

#[test]
fn filtering_selects_a_single_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = fixture(tmp.path());
    let out = tmp.path().join("out");
    let stdout = ok(spt(&[
        "test", "--manifest", &manifest, "--out", out.to_str().unwrap(), "--trials", "200",
        "--components", "8", "--feature", "voicing", "--speaker", "female",
    ]));
    assert_eq!(files(&out.join("reports")), ["female_voicing.json", "female_voicing_hist.csv"]);
    assert_eq!(stdout.lines().count(), 2, "{stdout}");
    assert!(stdout.contains("female"));
}

#[test]
fn all_pairs_give_six_reports_and_report_renders() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = fixture(tmp.path());
    let out = tmp.path().join("out");
    ok(spt(&[
        "test", "--manifest", &manifest, "--out", out.to_str().unwrap(), "--trials", "200",
        "--components", "8", "--threads", "2",
    ]));
    let reports: Vec<String> = files(&out.join("reports"))
        .into_iter()
        .filter(|n| !n.ends_with("_hist.csv"))
        .collect();
    assert_eq!(reports.len(), 6, "{reports:?}");
    assert_eq!(files(&out.join("models")), ["female.gmm.json", "male.gmm.json"]);

    let report = out.join("reports/male_f0.json");
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["D"], 200);
    assert_eq!(json["config"]["components"], 8);
    let rendered = ok(spt(&["report", report.to_str().unwrap()]));
    assert!(rendered.contains("male"), "{rendered}");
}

#[test]
fn env_seed_overrides_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = fixture(tmp.path());
    let run = |dir: &str, flag: &str, env: Option<&str>| {
        let out = tmp.path().join(dir);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_spt"));
        cmd.args([
            "test", "--manifest", &manifest, "--out", out.to_str().unwrap(), "--trials", "50",
            "--components", "4", "--feature", "energy", "--speaker", "male", "--seed", flag,
        ])
        .env("RUST_LOG", "warn")
        .env_remove("SPT_SEED");
        if let Some(seed) = env {
            cmd.env("SPT_SEED", seed);
        }
        ok(cmd.output().unwrap());
        let json: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join("reports/male_energy.json")).unwrap()).unwrap();
        json["config"]["seed"].as_u64().unwrap()
    };
    assert_eq!(run("a", "5", None), 5);
    assert_eq!(run("b", "5", Some("11")), 11);
}

#[test]
fn invalid_input_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = spt(&["extract", "--manifest", missing.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));

    let manifest = fixture(tmp.path());
    fs::remove_file(tmp.path().join("corpus/male/male_002.f0")).unwrap();
    let out = spt(&["extract", "--manifest", &manifest, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("male_002"));
    // the healthy utterances are still written
    assert!(tmp.path().join("o/features/male/male_001.csv").is_file());

    let bad = spt(&["test", "--manifest", &manifest, "--feature", "pitch"]);
    assert!(!bad.status.success());
}
