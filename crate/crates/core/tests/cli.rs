use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn pcbounds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcbounds"))
        .args(args)
        .env_remove("PCBOUNDS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn bounds_for_aspirin_chances() {
    let v = json(&pcbounds(&["bounds", "--p1", "0.30", "--p0", "0.12"]));
    assert_eq!(v["lower"], 0.6);
    assert_eq!(v["upper"], 1.0);
    assert_eq!(v["rr"], 2.5);
    assert_eq!(v["exceeds_half"], true);
    assert!(v["version"].is_string());
}

#[test]
fn bounds_from_risk_ratio_cannot_conclude() {
    let v = json(&pcbounds(&["bounds", "--rr", "1.5"]));
    assert!((v["lower"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(v["exceeds_half"], false);
    assert!(v["note"].as_str().unwrap().contains("cannot be sure"));
}

#[test]
fn bounds_validation_failures_exit_2() {
    let out = pcbounds(&["bounds", "--p1", "0", "--p0", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p1"));
    assert_eq!(
        pcbounds(&["bounds", "--p1", "1.5", "--p0", "0.1"]).status.code(),
        Some(2)
    );
    assert_eq!(pcbounds(&["bounds", "--p1", "0.3"]).status.code(), Some(2));
}

#[test]
fn pcstar_individual_interval() {
    let v = json(&pcbounds(&["pcstar", "--phi", "0.043", "--theta", "0.5"]));
    assert_eq!((v["lower"].as_f64(), v["upper"].as_f64()), (Some(0.0), Some(0.043)));
    let v = json(&pcbounds(&[
        "pcstar",
        "--phi",
        "0.5",
        "--pc-lower",
        "0.6",
        "--pc-upper",
        "1",
    ]));
    assert_eq!((v["lower"].as_f64(), v["upper"].as_f64()), (Some(0.3), Some(0.5)));
}

#[test]
fn study_on_bundled_table() {
    let path = data("benfluorex_case_control.json");
    let v = json(&pcbounds(&["study", path.to_str().unwrap()]));
    let rec = &v["records"][0];
    assert_eq!(rec["odds_ratio"], 969.0 / 24.0);
    assert_eq!(rec["risk_ratio"], Value::Null);
    assert!(v.to_string().contains("RR: not estimable (retrospective design)"));

    let out = pcbounds(&["study", path.to_str().unwrap(), "--format", "csv"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().any(|l| l.ends_with("case_control,40.375,NA,NA")), "{csv}");
}

#[test]
fn study_randomized_reports_both_measures() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trial.json");
    fs::write(
        &path,
        r#"{"source": "trial", "design": "randomized",
            "table": {"exposed_cases": 30, "exposed_controls": 70, "unexposed_cases": 12, "unexposed_controls": 88}}"#,
    )
    .unwrap();
    let v = json(&pcbounds(&["study", path.to_str().unwrap()]));
    let rec = &v["records"][0];
    assert_eq!(rec["risk_ratio"], 2.5);
    // 30 * 88 / (70 * 12)
    assert!((rec["odds_ratio"].as_f64().unwrap() - 2640.0 / 840.0).abs() < 1e-12);
}

#[test]
fn study_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    fs::write(&empty, "").unwrap();
    assert_eq!(pcbounds(&["study", empty.to_str().unwrap()]).status.code(), Some(2));
    let negative = dir.path().join("negative.json");
    fs::write(
        &negative,
        r#"{"source": "x", "design": "cohort",
            "table": {"exposed_cases": -1, "exposed_controls": 1, "unexposed_cases": 1, "unexposed_controls": 1}}"#,
    )
    .unwrap();
    let out = pcbounds(&["study", negative.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exposed_cases"));
    let missing = dir.path().join("missing.json");
    assert_eq!(pcbounds(&["study", missing.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn posterior_writes_artifacts_for_both_priors() {
    for spec in ["prior1_direct.json", "prior2_direct.json", "aspirin_generative.json"] {
        let dir = tempfile::tempdir().unwrap();
        let out = pcbounds(&[
            "posterior",
            data(spec).to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
            "--n",
            "20000",
        ]);
        let v = json(&out);
        assert!(v["prob_lower_zero"].is_number());
        for file in [
            "draws.csv",
            "summary.json",
            "coverage.csv",
            "subsample.csv",
            "upper_hist.csv",
        ] {
            let body = fs::read_to_string(dir.path().join(file)).unwrap();
            assert!(body.contains("seed"), "{file} lacks seed");
            assert!(body.contains("spec_hash"), "{file} lacks spec hash");
        }
        let summary: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert!(summary["summary"]["prob_lower_zero"].is_number());
        assert!(summary["version"].is_string());
        let individual = &summary["individual_focused"];
        assert!(individual["lower"].as_f64().unwrap() <= individual["upper"].as_f64().unwrap());
    }
}

#[test]
fn posterior_is_byte_reproducible() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = pcbounds(&[
            "posterior",
            data("prior2_direct.json").to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
            "--n",
            "10000",
            "--seed",
            seed,
        ]);
        assert!(out.status.success());
        read_dir_sorted(dir.path())
    };
    let a = run("5");
    assert_eq!(a.len(), 8);
    assert_eq!(a, run("5"));
    assert_ne!(a, run("6"));
}

#[test]
fn posterior_without_seed_reports_the_one_it_used() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"mode": "direct", "theta_prior": {"alpha": 1, "beta": 9}, "phi_prior": {"alpha": 2, "beta": 8}, "n": 100}"#,
    )
    .unwrap();
    let out = pcbounds(&[
        "posterior",
        spec.to_str().unwrap(),
        "--out-dir",
        dir.path().join("o").to_str().unwrap(),
    ]);
    let v = json(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&format!("generated seed {}", v["seed"])), "{stderr}");
}

#[test]
fn posterior_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let spec = data("prior1_direct.json");
    let args = |n: &str| {
        pcbounds(&[
            "posterior",
            spec.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--n",
            n,
        ])
    };
    assert_eq!(args("0").status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(
        pcbounds(&["posterior", missing.to_str().unwrap()]).status.code(),
        Some(3)
    );
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"mode": "direct", "theta_prior": {"alpha": -1, "beta": 1}, "phi_prior": {"alpha": 1, "beta": 1}}"#,
    )
    .unwrap();
    assert_eq!(pcbounds(&["posterior", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn coverage_and_report_read_saved_draws() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("post");
    json(&pcbounds(&[
        "posterior",
        data("prior1_direct.json").to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--n",
        "5000",
    ]));
    let draws = out_dir.join("draws.csv");
    let out = pcbounds(&["coverage", "--draws", draws.to_str().unwrap(), "--grid", "0,0.25,0.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0], "p,coverage");

    // Coverage at 0 equals the fraction of zero lower bounds.
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let c0: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(c0, summary["summary"]["prob_lower_zero"].as_f64().unwrap());

    let report_dir = dir.path().join("report");
    let v = json(&pcbounds(&[
        "report",
        "--draws",
        draws.to_str().unwrap(),
        "--out-dir",
        report_dir.to_str().unwrap(),
    ]));
    assert_eq!(v["summary"], summary["summary"]);
    assert_eq!(
        fs::read(report_dir.join("coverage.csv")).unwrap(),
        fs::read(out_dir.join("coverage.csv")).unwrap()
    );

    let bad_grid = pcbounds(&["coverage", "--draws", draws.to_str().unwrap(), "--grid", "0.5,0.2"]);
    assert_eq!(bad_grid.status.code(), Some(2));
}

#[test]
fn simulate_confounded_and_exogenized() {
    let spec = data("confounded_population.json");
    let v = json(&pcbounds(&["simulate", spec.to_str().unwrap()]));
    assert_eq!(v["contained"], false);
    assert_eq!(v["seed"], 54);
    let v = json(&pcbounds(&["simulate", spec.to_str().unwrap(), "--exogenize"]));
    assert_eq!(v["contained"], true);

    let csv = |seed: &str| pcbounds(&["simulate", spec.to_str().unwrap(), "--format", "csv", "--seed", seed]).stdout;
    let a = csv("3");
    assert_eq!(a, csv("3"));
    assert_ne!(a, csv("4"));
    assert!(String::from_utf8(a).unwrap().contains("e,r0,r1,count"));
}
