use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn gaussgp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaussgp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .env_remove("GAUSSGP_OUT")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, system: &str) -> PathBuf {
    let cfg = json!({
        "schema_version": 1,
        "system": {"name": system},
        "families": ["se", "gp2_fixed_parametric"],
        "n_train": 20,
        "runs": 2,
        "seed": 3,
        "baseline_restarts": 2,
        "gp2_restarts": 1,
        "max_iters": 15,
        "grid_points": 100,
        "trajectory": {"initial_states": 2, "horizon": 1.0, "points": 11, "run": 0},
        "transfer": {"n_source": 30, "grid_points": 50},
        "infer_abar": {"n_train": 20, "points_per_dim": 5}
    });
    let p = dir.join(format!("{system}.json"));
    fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(j).unwrap().to_string()).collect()
}

#[test]
fn generate_is_deterministic_one_file_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "surface_particle");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = gaussgp(&["generate", "--config", cfg.to_str().unwrap()], d);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csvs: Vec<PathBuf> = files_under(&a.join("data")).into_iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).collect();
    assert_eq!(csvs.len(), 2);
    for p in files_under(&a) {
        let q = b.join(p.strip_prefix(&a).unwrap());
        assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap(), "{}", p.display());
    }
    // regenerating in place leaves the bytes unchanged
    let before = fs::read(&csvs[0]).unwrap();
    assert_eq!(code(&gaussgp(&["generate", "--config", cfg.to_str().unwrap()], &a)), 0);
    assert_eq!(fs::read(&csvs[0]).unwrap(), before);
    // a different seed gives different data
    let c = tmp.path().join("c");
    assert_eq!(code(&gaussgp(&["generate", "--config", cfg.to_str().unwrap(), "--seed", "4"], &c)), 0);
    assert_ne!(fs::read(c.join("data/run_000.csv")).unwrap(), before);
}

#[test]
fn fit_report_pipeline_with_gap_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "surface_particle");
    let out = tmp.path().join("run");
    let c = cfg.to_str().unwrap();
    let o = gaussgp(&["fit", "--config", c], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for fam in ["se", "gp2_fixed_parametric"] {
        for run in 0..2 {
            let p = out.join(format!("models/{fam}/run_{run:03}.json"));
            let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
            let expected = if fam == "se" { 2 } else { 1 };
            assert_eq!(v["restarts"], expected);
            // traces improve monotonically within each restart
            let trace = fs::read_to_string(out.join(format!("models/{fam}/run_{run:03}.trace.csv"))).unwrap();
            let mut last: Option<(String, f64)> = None;
            for line in trace.lines().filter(|l| !l.starts_with('#')).skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                let (r, v) = (f[0].to_string(), f[2].parse::<f64>().unwrap());
                if let Some((lr, lv)) = &last {
                    if *lr == r {
                        assert!(v >= *lv - 1e-9, "{fam} run {run}: {v} < {lv}");
                    }
                }
                last = Some((r, v));
            }
        }
    }
    let o = gaussgp(&["report", "--config", c], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = out.join("report/summary.csv");
    let fams = csv_column(&summary, "family");
    assert_eq!(fams, ["analytic", "se", "gp2_fixed_parametric"]);
    let ce: Vec<f64> = csv_column(&summary, "constraint_max").iter().map(|s| s.parse().unwrap()).collect();
    assert!(ce[0] <= 1e-10 && ce[2] <= 1e-6, "{ce:?}");

    fs::remove_file(out.join("models/se/run_001.json")).unwrap();
    let o = gaussgp(&["report", "--config", c], &out);
    assert_eq!(code(&o), 4);
    let table = fs::read_to_string(out.join("report/table.txt")).unwrap();
    assert!(table.contains("1/2"), "{table}");
    assert_eq!(csv_column(&summary, "missing"), ["0", "1", "0"]);

    fs::remove_file(out.join("models/se/run_000.json")).unwrap();
    assert_eq!(code(&gaussgp(&["report", "--config", c], &out)), 4);
    let table = fs::read_to_string(out.join("report/table.txt")).unwrap();
    assert!(table.contains("-- missing --"), "{table}");
    assert_eq!(csv_column(&summary, "rmse_mean")[1], "NA");
}

#[test]
fn fits_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "duffing");
    let mut params = Vec::new();
    for d in ["a", "b"] {
        let out = tmp.path().join(d);
        let o = gaussgp(&["fit", "--config", cfg.to_str().unwrap(), "--runs", "1", "--families", "se,gp2_fixed_zero"], &out);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let mut v: Vec<Value> = Vec::new();
        for fam in ["se", "gp2_fixed_zero"] {
            let mut m: Value = serde_json::from_str(&fs::read_to_string(out.join(format!("models/{fam}/run_000.json"))).unwrap()).unwrap();
            m.as_object_mut().unwrap().remove("fit_seconds");
            v.push(m);
        }
        params.push(v);
    }
    assert_eq!(params[0], params[1]);
}

#[test]
fn every_output_carries_the_header() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "surface_particle");
    let out = tmp.path().join("run");
    let c = cfg.to_str().unwrap();
    for cmd in ["fit", "report", "trajectory", "transfer", "infer-abar"] {
        let o = gaussgp(&[cmd, "--config", c, "--runs", "1"], &out);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let config: Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    let hash = config["header"]["config_sha256"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    let version = env!("CARGO_PKG_VERSION");
    let files = files_under(&out);
    assert!(files.len() > 15);
    for p in files {
        let text = fs::read_to_string(&p).unwrap();
        if p.extension().is_some_and(|e| e == "json") {
            let v: Value = serde_json::from_str(&text).unwrap();
            let h = if p.to_str().unwrap().ends_with(".meta.json") {
                v["header"].as_str().unwrap().to_string()
            } else {
                assert_eq!(v["header"]["version"], version);
                v["header"]["config_sha256"].as_str().unwrap().to_string()
            };
            assert!(h.contains(&hash), "{}", p.display());
        } else {
            let first = text.lines().next().unwrap();
            assert_eq!(first, format!("# gaussgp {version} config sha256:{hash}"), "{}", p.display());
        }
    }
}

#[test]
fn trajectory_and_transfer_outputs_respect_constraints() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "surface_particle");
    let out = tmp.path().join("run");
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&gaussgp(&["fit", "--config", c, "--runs", "1"], &out)), 0);
    let o = gaussgp(&["trajectory", "--config", c], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for model in ["analytic", "gp2_fixed_parametric"] {
        for s in 0..2 {
            let p = out.join(format!("trajectory/{model}/state_{s}.csv"));
            let worst = csv_column(&p, "constraint_residual").iter().map(|v| v.parse::<f64>().unwrap()).fold(0.0, f64::max);
            assert!(worst < 1e-6, "{model} state {s}: {worst}");
            assert_eq!(csv_column(&p, "time").len(), 11);
        }
    }
    let o = gaussgp(&["transfer", "--config", c], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_str(&fs::read_to_string(out.join("transfer/summary.json")).unwrap()).unwrap();
    assert!(s["max_constraint_error"].as_f64().unwrap() <= 1e-6);
    assert!(s["rmse"].as_f64().unwrap() < s["prior_rmse"].as_f64().unwrap(), "{s}");

    let o = gaussgp(&["infer-abar", "--config", c], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let post = out.join("infer_abar/posterior.csv");
    assert_eq!(csv_column(&post, "abar3_mean").len(), 25);
}

#[test]
fn trajectory_without_models_writes_partial_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "unicycle");
    let out = tmp.path().join("run");
    let o = gaussgp(&["trajectory", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 4);
    assert!(out.join("trajectory/analytic/state_0.csv").exists());
    assert!(out.join("trajectory/summary.csv").exists());
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(code(&gaussgp(&["generate", "--system", "pendulum"], &out)), 2);
    assert_eq!(code(&gaussgp(&["generate", "--runs", "0"], &out)), 2);
    assert_eq!(code(&gaussgp(&["fit", "--families", "se,gp3"], &out)), 2);
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"schema_version": 7}"#).unwrap();
    assert_eq!(code(&gaussgp(&["generate", "--config", bad.to_str().unwrap()], &out)), 2);
    fs::write(&bad, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(code(&gaussgp(&["generate", "--config", bad.to_str().unwrap()], &out)), 2);
    // transfer is only defined for the surface benchmark
    let cfg = small_config(tmp.path(), "duffing");
    assert_eq!(code(&gaussgp(&["transfer", "--config", cfg.to_str().unwrap()], &out)), 2);
    assert!(!out.join("data").exists());
}

#[test]
fn output_root_defaults_to_environment_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_gaussgp"))
        .args(["generate", "--system", "duffing", "--runs", "1", "--n-train", "5", "--quiet"])
        .env("GAUSSGP_OUT", &root)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("data/run_000.csv").exists());
}

#[test]
fn unwritable_output_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = gaussgp(&["generate", "--runs", "1"], &blocker.join("sub"));
    assert_eq!(code(&o), 2);
}
