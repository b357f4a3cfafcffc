use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rs_sfm_core::bench::{sample_planted_curves, sample_rng};
use rs_sfm_core::io::{curves_to_file, read_json, write_json, RansacFile, SolutionsFile};
use rs_sfm_core::solvers::{lookup, Motion};
use rs_sfm_core::BenchConfig;
use tempfile::TempDir;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rs-sfm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn data_rows(path: &Path) -> usize {
    let text = fs::read_to_string(path).unwrap();
    // metadata comment line, header, then one row per sample
    text.lines().filter(|l| !l.starts_with('#')).count() - 1
}

#[test]
fn catalog_lists_problems() {
    let dir = TempDir::new().unwrap();
    let out = run(&["catalog"], dir.path());
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("δ1(3³)") && text.contains("54"));
    assert_eq!(code(&run(&["catalog", "--out", "cat.json"], dir.path())), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cat.json")).unwrap()).unwrap();
    assert!(v.as_array().unwrap().len() > 13);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["stability", "--spec", "nonsense", "--out", "a.csv"], d)), 2);
    assert_eq!(code(&run(&["frobnicate"], d)), 2);
    fs::write(d.join("bad.json"), "{ not json").unwrap();
    let out = run(&["solve", "bad.json", "--out", "s.json"], d);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json:1:"));
    let unimplemented = rs_sfm_core::solvers::catalog().into_iter().find(|s| !s.implemented).unwrap();
    let out = run(&["stability", "--spec", &unimplemented.label, "--samples", "2", "--out", "u.csv"], d);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains(&format!("degree {}", unimplemented.degree)));
    // coincident images leave the linear solver without a unique kernel
    fs::write(
        d.join("degenerate.json"),
        r#"{"metadata":{"seed":0,"config":null,"version":"0"},"spec":"d1[2×2]",
            "observations":{"points":[[{"x":0.1,"y":0.1},{"x":0.1,"y":0.1}],[{"x":0.1,"y":0.1},{"x":0.1,"y":0.1}]]}}"#,
    )
    .unwrap();
    assert_eq!(code(&run(&["solve", "degenerate.json", "--out", "s.json"], d)), 4);
}

#[test]
fn stability_and_zero_noise_agree() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = run(&["--seed", "3", "stability", "--spec", "δ1(3³)", "--samples", "12", "--out", "st.csv"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(data_rows(&d.join("st.csv")), 12);
    assert!(d.join("st.hist.csv").exists() && d.join("st.recall.csv").exists());
    let out = run(
        &["--seed", "3", "noise", "--spec", "δ1(3³)", "--sigma", "0", "--samples", "12", "--out", "nz.csv"],
        d,
    );
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(d.join("st.csv")).unwrap(), fs::read(d.join("nz.csv")).unwrap());
    let out = run(&["--seed", "3", "stability", "--spec", "δ1(3³)", "--samples", "12", "--out", "again.csv"], d);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(d.join("st.csv")).unwrap(), fs::read(d.join("again.csv")).unwrap());
}

#[test]
fn simulate_then_solve_finds_truth() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let scene = serde_json::json!({
        "spec": "δ1(5)",
        "camera": { "rotation": [[0.0, 0.0, 0.0], [0.12, -0.07, 0.2]] },
        "lines": [{ "direction": [2.0, 0.5, 0.0], "moment": [-2.0, 8.0, 0.1], "samples": 5 }]
    });
    fs::write(d.join("scene.json"), scene.to_string()).unwrap();
    let out = run(&["--seed", "5", "simulate", "scene.json", "--out", "obs.json"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("obs.truth.json").exists());
    let out = run(&["solve", "obs.json", "--out", "sol.json"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sol: SolutionsFile = read_json(&d.join("sol.json")).unwrap();
    let truth = [0.12, -0.07, 0.2];
    assert!(sol.solutions.real_candidates().any(|c| match c.motion {
        Motion::Rotation { a1 } => a1.iter().zip(truth).all(|(a, t)| (a - t).abs() < 1e-6),
        _ => false,
    }));
    assert_eq!(sol.metadata.version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn ransac_recovers_planted_inliers() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let spec = lookup("δ1(5)").unwrap();
    let cfg = BenchConfig::default();
    let planted = sample_planted_curves(&cfg, &spec, 7, 3, 10, &mut sample_rng(77, 0)).unwrap();
    write_json(&d.join("curves.json"), &curves_to_file(&planted.curves)).unwrap();
    let out = run(
        &["ransac", "curves.json", "--spec", "δ1(5)", "--iterations", "300", "--out", "r.json"],
        d,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r: RansacFile = read_json(&d.join("r.json")).unwrap();
    assert_eq!(r.result.inliers, planted.inliers);
    assert_eq!(r.result.n_inliers, 7);
    let out = run(
        &["ransac", "curves.json", "--spec", "δ1(5)", "--iterations", "300", "--out", "r2.json"],
        d,
    );
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(d.join("r.json")).unwrap(), fs::read(d.join("r2.json")).unwrap());
}
