use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn flda(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flda"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn flda")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = flda(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn icosphere_level_three_has_642_vertices() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["icosphere", "--level", "3", "-o", "s.off"], dir.path());
    let text = fs::read_to_string(dir.path().join("s.off")).unwrap();
    let counts: Vec<usize> = text.lines().nth(1).unwrap().split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert_eq!(counts[..2], [642, 1280]);
    let manifest = json(dir.path().join("s.off.manifest.json"));
    assert_eq!(manifest["command"], "icosphere");
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let info = ok(&["mesh-info", "s.off"], dir.path());
    let report: serde_json::Value = serde_json::from_slice(&info.stdout).unwrap();
    assert_eq!(report["vertices"], 642);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = flda(&["icosphere", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["simulate", "--help"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[default: 40]"));
    assert!(text.contains("[default: 0.2]"));
}

#[test]
fn single_class_fit_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("label,c1,c2,c3\n");
    for i in 0..4 {
        csv.push_str(&format!("1,{i},0.5,0.25\n"));
    }
    fs::write(dir.path().join("one.csv"), csv).unwrap();
    fs::write(
        dir.path().join("tri.off"),
        "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n",
    )
    .unwrap();
    let out = flda(&["fit", "--data", "one.csv", "--mesh", "tri.off", "--lambda2", "1", "-o", "m.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("SingleClassError"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn fit_then_predict_reproduces_training_scores() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--level", "2", "--basis-size", "12", "--mean-index", "4", "--alpha", "0.5", "-n", "20", "--seed", "3", "-o", "train.csv"], d);
    for (method, extra) in [("flda", vec!["--lambda2-factor", "0.1"]), ("fpca-lda", vec!["-k", "5"])] {
        let mut args = vec!["fit", "--data", "train.csv", "--level", "2", "--method", method, "-o", "model.json"];
        args.extend(extra);
        ok(&args, d);
        ok(&["predict", "--model", "model.json", "--data", "train.csv", "--level", "2", "-o", "pred.csv"], d);
        let model = json(d.join("model.json"));
        let train: Vec<f64> = model["training_scores"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let pred = fs::read_to_string(d.join("pred.csv")).unwrap();
        let scores: Vec<f64> = pred.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
        assert_eq!(scores.len(), 40);
        for (a, b) in train.iter().zip(&scores) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{method}: {a} vs {b}");
        }
        let thr = ok(&["threshold", "--scores", "pred.csv"], d);
        let report: serde_json::Value = serde_json::from_slice(&thr.stdout).unwrap();
        assert!(report["threshold"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn simulate_is_reproducible_from_its_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = |out: &'static str| vec!["simulate", "--level", "1", "--basis-size", "8", "--mean-index", "2", "-n", "5", "--seed", "9", "-o", out];
    ok(&args("a.csv"), d);
    ok(&args("b.csv"), d);
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("b.csv")).unwrap());
    let side = json(d.join("a.json"));
    assert_eq!(side["samples"], 10);
}

#[test]
fn bivariate_model_drives_deform() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["icosphere", "--level", "2", "-o", "t.off"], d);
    ok(
        &["simulate", "--mesh", "t.off", "--basis-size", "10", "--mean-index", "3", "-n", "12", "--control-points", "12", "--shift-norm", "0.2", "-o", "g.csv"],
        d,
    );
    assert!(d.join("g.geometry.json").exists());
    ok(&["fit", "--data", "g.csv", "--mesh", "t.off", "--lambda2-factor", "1", "--lambda1", "1", "-o", "bm.json"], d);
    let model = json(d.join("bm.json"));
    assert!(model["model"]["c_G"].is_array());
    ok(&["deform", "--model", "bm.json", "--mesh", "t.off", "--c1", "-2", "-o", "moved.off"], d);
    let moved = fs::read_to_string(d.join("moved.off")).unwrap();
    assert!(moved.lines().nth(1).unwrap().starts_with("162 320"));

    ok(&["fit", "--data", "g.csv", "--mesh", "t.off", "--lambda2-factor", "1", "-o", "um.json"], d);
    let out = flda(&["deform", "--model", "um.json", "--mesh", "t.off", "-o", "x.off"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn register_recovers_a_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["icosphere", "--level", "1", "-o", "a.off"], d);
    ok(&["icosphere", "--level", "1", "--radius", "1.05", "-o", "b.off"], d);
    ok(&["register", "--template", "a.off", "--target", "b.off", "--lambda", "0", "--subsample", "42", "-o", "v.json"], d);
    let field = json(d.join("v.json"));
    assert_eq!(field["momenta"].as_array().unwrap().len(), 42);
    let missing = flda(&["register", "--template", "a.off", "--target", "b.off", "-o", "w.json"], d);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn singular_registration_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["icosphere", "--level", "1", "-o", "a.off"], d);
    ok(&["icosphere", "--level", "1", "--radius", "1.1", "-o", "b.off"], d);
    let out = flda(
        &["register", "--template", "a.off", "--target", "b.off", "--lambda", "0", "--kernel-sigma", "1e9", "--subsample", "10", "-o", "v.json"],
        d,
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn small_experiment_writes_tables_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "experiment", "--alphas", "0.5", "--sizes", "10", "--replicates", "2", "--test-size", "60", "--level", "1",
            "--basis-size", "8", "--mean-index", "3", "--lambda2-points", "2", "--k", "2,4", "--jobs", "2", "--plot",
            "--out-dir", "run",
        ],
        d,
    );
    let csv = fs::read_to_string(d.join("run/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(fs::read_to_string(d.join("run/boxplot.svg")).unwrap().starts_with("<svg"));
    assert!(d.join("run/summary.json").exists());
    assert!(d.join("run/manifest.json").exists());
    ok(&["plot", "--results", "run/results.csv", "-o", "again.svg"], d);
    assert_eq!(
        fs::read(d.join("again.svg")).unwrap(),
        fs::read(d.join("run/boxplot.svg")).unwrap()
    );
}
