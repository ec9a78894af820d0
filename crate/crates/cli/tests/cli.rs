use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_filterlens"));
    c.env_remove("FILTERLENS_OUT");
    c
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn pipeline(dir: &Path, filters: &str, extra_analyze: &[&str]) {
    let d = dir.to_str().unwrap();
    run_ok(&["synth", "--out", d, "--layer", "1,2", "--seed", "5", "--filters", filters, "--cluster-size", "3"]);
    run_ok(&["probe", "--out", d, "--epochs", "40"]);
    let mut a = vec!["analyze", "--out", d];
    a.extend_from_slice(extra_analyze);
    run_ok(&a);
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn planted_clusters_are_recovered_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    pipeline(tmp.path(), "12", &[]);

    let sr = read_csv(&tmp.path().join("sr_table.csv"));
    assert_eq!(sr.len(), 2, "one row per layer");
    for row in &sr {
        assert_eq!(row[6].parse::<f64>().unwrap(), 1.0, "test SR for layer {}", row[0]);
    }

    for layer in [1, 2] {
        let planted: Value = serde_json::from_str(
            &std::fs::read_to_string(tmp.path().join(format!("layer{layer}_planted.json"))).unwrap(),
        )
        .unwrap();
        let planted = planted["clusters"].as_array().unwrap();
        let reports: Value = serde_json::from_str(
            &std::fs::read_to_string(tmp.path().join(format!("layer{layer}_filters.json"))).unwrap(),
        )
        .unwrap();
        let reports = reports.as_array().unwrap();
        assert_eq!(reports.len(), planted.len());
        for (r, p) in reports.iter().zip(planted) {
            let cs = &r["clusters"];
            assert_eq!(cs["noise_count"], 0);
            let mut found: Vec<u64> = cs["clusters"][0]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_u64().unwrap())
                .collect();
            found.sort();
            let want: Vec<u64> = p.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
            assert_eq!(cs["clusters"].as_array().unwrap().len(), 1);
            assert_eq!(found, want, "filter {}", r["filter_id"]);
        }
    }
    let stats = read_csv(&tmp.path().join("layer_stats.csv"));
    assert_eq!(stats.len(), 2);
}

#[test]
fn occurrences_match_expected_count() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    run_ok(&["synth", "--out", d, "--layer", "1", "--filters", "64", "--cluster-size", "3"]);
    run_ok(&["probe", "--out", d, "--epochs", "40"]);
    run_ok(&["analyze", "--out", d, "--format", "csv"]);
    let occ = read_csv(&tmp.path().join("layer1_occurrences.csv"));
    assert_eq!(occ.len(), 10);
    for row in occ {
        let count: f64 = row[1].parse().unwrap();
        let expected: f64 = row[2].parse().unwrap();
        assert!((expected - 19.2).abs() < 1e-9);
        assert!((count - expected).abs() <= 0.2 * expected, "label {} count {count}", row[0]);
    }
}

#[test]
fn unknown_flag_exits_with_usage_error() {
    let out = bin().args(["probe", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let out = bin().args(["probe", "--out", d, "--layer", "7"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("layer7_train.fla"), "stderr: {err}");
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "8", &[]);
    pipeline(b.path(), "8", &[]);
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 10);
    for n in names {
        let x = std::fs::read(a.path().join(&n)).unwrap();
        let y = std::fs::read(b.path().join(&n)).unwrap();
        assert!(x == y, "{n:?} differs between runs");
    }
}

// A max-normalized matrix keeps its maximal entry under any threshold below 1,
// so a near-1 threshold leaves only that entry (plus exact ties) and every
// surviving one is accounted for as cluster area or noise.
#[test]
fn near_unit_threshold_keeps_only_the_maximum() {
    let tmp = tempfile::tempdir().unwrap();
    pipeline(tmp.path(), "8", &["--theta", "0.99"]);
    for layer in [1, 2] {
        let reports: Value = serde_json::from_str(
            &std::fs::read_to_string(tmp.path().join(format!("layer{layer}_filters.json"))).unwrap(),
        )
        .unwrap();
        for r in reports.as_array().unwrap() {
            let ones = r["clip"]
                .as_array()
                .unwrap()
                .iter()
                .flat_map(|row| row.as_array().unwrap())
                .filter(|v| v.as_bool().unwrap_or_else(|| v.as_u64().unwrap() == 1))
                .count() as u64;
            assert!(ones >= 1, "the maximal entry always survives");
            for cs in [&r["clusters"], &r["clusters_reverse"]] {
                let area: u64 = cs["clusters"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|c| (c.as_array().unwrap().len() as u64).pow(2))
                    .sum();
                assert_eq!(cs["noise_count"].as_u64().unwrap() + area, ones);
            }
        }
    }
    for row in read_csv(&tmp.path().join("layer_stats.csv")) {
        assert!(row[4].parse::<f64>().unwrap() <= 1.0, "clusters per filter");
    }
}

#[test]
fn env_var_overrides_out_flag() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("FILTERLENS_OUT", env_dir.path())
        .args(["snr", "--out", flag_dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_dir.path().join("snr_idealized.json").is_file());
    assert!(!flag_dir.path().join("snr_idealized.json").exists());
}

#[test]
fn idealized_snr_values() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(&["snr", "--out", tmp.path().to_str().unwrap(), "--nu", "-0.029"]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("snr_idealized.json")).unwrap()).unwrap();
    assert_eq!(v["report"]["signal"].as_f64().unwrap(), 153.6);
    assert!(v["report"]["ratio"].as_f64().unwrap() > 5.0);
}

#[test]
fn config_file_supplies_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "filters = 128\ncluster_size = 2\n").unwrap();
    run_ok(&["snr", "--out", tmp.path().to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("snr_idealized.json")).unwrap()).unwrap();
    assert_eq!(v["report"]["signal"].as_f64().unwrap(), 128.0 * 2.0 / 10.0);
}
