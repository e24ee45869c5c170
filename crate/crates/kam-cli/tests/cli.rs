use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_kam"));
    c.env_remove("KAM_THREADS");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Copies a shipped config into a fresh directory, applying `edit` to its JSON.
fn staged(name: &str, edit: impl FnOnce(&mut Value)) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let mut v: Value = serde_json::from_str(&fs::read_to_string(configs().join(name)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.path().join(name);
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    (dir, path)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn line_with<'a>(text: &'a str, prefix: &str) -> &'a str {
    text.lines().find(|l| l.starts_with(prefix)).unwrap_or_else(|| panic!("no line {:?} in\n{}", prefix, text))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn out_dir(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join("out").join(name)
}

#[test]
fn flagship_run_exits_zero_and_verify_reproduces_the_residual() {
    let (dir, cfg) = staged("flagship.json", |_| {});
    let o = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = out_dir(&dir, "flagship");
    let torus = json(&out.join("torus.json"));
    assert!(torus["residual"].as_f64().unwrap() <= 1e-8);
    assert!(torus["phi0"][0].as_f64().unwrap().abs() <= 1e-6);
    let run_line = line_with(&stdout(&o), "invariance residual").to_string();

    let torus_path = out.join("torus.json");
    for problem in [out.join("reduced.json"), cfg.clone()] {
        let v = run(&["verify", "--torus", torus_path.to_str().unwrap(), "--problem", problem.to_str().unwrap(), "--grid", "32"]);
        assert_eq!(v.status.code(), Some(0), "{}", stderr(&v));
        assert_eq!(line_with(&stdout(&v), "invariance residual"), run_line);
    }
}

#[test]
fn angle_dependent_run_verifies_with_the_same_residual() {
    let (dir, cfg) = staged("planar_mixed.json", |_| {});
    let o = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = out_dir(&dir, "planar_mixed");
    let torus = json(&out.join("torus.json"));
    let residual = torus["residual"].as_f64().unwrap();
    assert!(residual > 0.0 && residual <= 1e-12);
    assert!(torus["distance_to_trivial"].as_f64().unwrap() > 0.0);
    let v = run(&[
        "verify",
        "--torus",
        out.join("torus.json").to_str().unwrap(),
        "--problem",
        out.join("reduced.json").to_str().unwrap(),
        "--grid",
        "32",
    ]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(line_with(&stdout(&v), "invariance residual"), line_with(&stdout(&o), "invariance residual"));
}

#[test]
fn zero_amplitude_gives_the_trivial_torus() {
    let (dir, cfg) = staged("flagship.json", |v| v["problem"]["amplitude"] = 0.0.into());
    let o = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = out_dir(&dir, "flagship");
    let torus = json(&out.join("torus.json"));
    assert_eq!(torus["residual"].as_f64().unwrap(), 0.0);
    assert_eq!(torus["distance_to_trivial"].as_f64().unwrap(), 0.0);
    let history = json(&out.join("history.json"));
    assert_eq!(history["converged"], Value::Bool(true));
    assert_eq!(history["steps"].as_array().unwrap().len(), 0);
}

#[test]
fn large_amplitude_fails_and_keeps_the_history() {
    let (dir, cfg) = staged("flagship.json", |v| v["problem"]["amplitude"] = 0.5.into());
    let o = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no admissible step"), "{}", stderr(&o));
    let out = out_dir(&dir, "flagship");
    let history = json(&out.join("history.json"));
    assert_eq!(history["converged"], Value::Bool(false));
    assert!(history["failure"].as_str().unwrap().contains("not below 1"));
    assert!(!out.join("torus.json").exists());
}

#[test]
fn history_records_carry_the_step_fields() {
    let (dir, cfg) = staged("triple.json", |_| {});
    let o = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
    let history = json(&out_dir(&dir, "triple").join("history.json"));
    let steps = history["steps"].as_array().unwrap();
    assert!(!steps.is_empty());
    for s in steps {
        for key in ["n", "r", "s", "eps_measured", "alpha_norm", "f_norm", "conjugacy_residual"] {
            assert!(s.get(key).is_some(), "missing {}", key);
        }
    }
    let f: Vec<f64> = steps.iter().map(|s| s["f_norm"].as_f64().unwrap()).collect();
    assert!(f.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn pass_through_reduction_keeps_the_model() {
    let (dir, cfg) = staged("flagship.json", |_| {});
    let o = run(&["reduce", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&out_dir(&dir, "flagship").join("reduced.json"));
    assert_eq!(r["m0"], serde_json::json!([[-1.0]]));
    assert_eq!(r["q0"], serde_json::json!([[1.0]]));
    assert_eq!(r["t"], serde_json::json!([[1.0]]));
    assert!(r["reduction"].is_null());
    assert!(r["conditions"].as_array().unwrap().iter().all(|c| c["passed"] == Value::Bool(true)));
}

#[test]
fn three_degree_reduction_has_one_resonant_direction() {
    let (dir, cfg) = staged("triple.json", |_| {});
    let o = run(&["reduce", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&out_dir(&dir, "triple").join("reduced.json"));
    assert_eq!(r["grading"]["d"], 2);
    assert_eq!(r["grading"]["l"], 1);
    let kw = r["reduction"]["k_omega0"].as_array().unwrap();
    assert_eq!(kw.len(), 3);
    // (1, 1, −1)·(1, g, 1 + g) vanishes.
    assert!(kw[2].as_f64().unwrap().abs() <= 1e-15);
    assert_eq!(r["reduction"]["lattice"][2], serde_json::json!([1, 1, -1]));
    assert!(r["conditions"].as_array().unwrap().iter().all(|c| c["passed"] == Value::Bool(true)));
}

#[test]
fn positive_c_is_a_precondition_failure_with_eigenvalues() {
    let (_dir, cfg) = staged("triple.json", |v| {
        v["problem"]["hessian"] = serde_json::json!([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 3.0]]);
    });
    let o = run(&["reduce", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("definiteness") && e.contains("eig(C) = [1.0]"), "{}", e);
}

#[test]
fn wrong_resonance_and_bad_inputs_are_rejected() {
    let (_d, cfg) = staged("triple.json", |v| v["problem"]["resonances"] = serde_json::json!([[1, 1, 1]]));
    assert_eq!(run(&["reduce", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let (_d, cfg) = staged("flagship.json", |v| v["problem"]["amplitude"] = (-1.0).into());
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let (_d, cfg) = staged("flagship.json", |v| v["problem"]["omega"] = serde_json::json!([1.0, 2.0]));
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let (_d, cfg) = staged("flagship.json", |v| v["unexpected"] = 1.into());
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(4));
    assert_eq!(run(&["run", "--config", "/nonexistent/config.json"]).status.code(), Some(4));
}

#[test]
fn corrupted_torus_files_exit_with_io_failure() {
    let (dir, cfg) = staged("flagship.json", |_| {});
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
    let out = out_dir(&dir, "flagship");
    let text = fs::read_to_string(out.join("torus.json")).unwrap();
    let cut = dir.path().join("cut.json");
    fs::write(&cut, &text[..text.len() / 2]).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["x"][0]["terms"] = serde_json::json!([{ "j": [0], "k": [1], "alpha": [1], "re": 1.0, "im": 0.0 }]);
    let shape = dir.path().join("shape.json");
    fs::write(&shape, serde_json::to_string(&v).unwrap()).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["format"] = "something-else".into();
    let format = dir.path().join("format.json");
    fs::write(&format, serde_json::to_string(&v).unwrap()).unwrap();
    for bad in [&cut, &shape, &format] {
        let o = run(&["verify", "--torus", bad.to_str().unwrap(), "--problem", cfg.to_str().unwrap(), "--grid", "8"]);
        assert_eq!(o.status.code(), Some(4), "{}: {}", bad.display(), stderr(&o));
    }
}

#[test]
fn zeta_csv_has_the_documented_columns() {
    let (dir, cfg) = staged("flagship.json", |_| {});
    let csv = dir.path().join("profile.csv");
    let o = run(&["zeta", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "phi_1,zeta,alpha_norm,nu_max_beta");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 65);
    for (i, cell) in text.lines().nth(2).unwrap().split(',').enumerate() {
        let mantissa = cell.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 17, "column {}: {}", i, cell);
    }
    // ζ = ε cos φ on the flagship, largest at φ = 0.
    for r in &rows {
        assert!((r[1] - 1e-4 * r[0].cos()).abs() <= 1e-12, "{:?}", r);
    }
}

#[test]
fn artifacts_are_byte_identical_across_runs_and_thread_counts() {
    let mut seen: Option<Vec<Vec<u8>>> = None;
    for threads in [None, Some("1"), Some("3")] {
        let (dir, cfg) = staged("planar_mixed.json", |_| {});
        let mut c = bin();
        c.args(["run", "--config", cfg.to_str().unwrap()]);
        if let Some(t) = threads {
            c.env("KAM_THREADS", t);
        }
        assert_eq!(c.output().unwrap().status.code(), Some(0));
        let out = out_dir(&dir, "planar_mixed");
        let files: Vec<Vec<u8>> = ["history.json", "zeta.csv", "torus.json", "reduced.json"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        match &seen {
            None => seen = Some(files),
            Some(prev) => assert!(prev == &files, "artifacts differ with KAM_THREADS = {:?}", threads),
        }
    }
}

#[test]
fn invalid_thread_count_is_rejected() {
    let (_d, cfg) = staged("flagship.json", |_| {});
    let o = bin().env("KAM_THREADS", "zero").args(["run", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
