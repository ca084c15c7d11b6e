use std::path::{Path, PathBuf};
use std::process::Command;

use qtraj_core::evaluation::ErrorReport;
use qtraj_core::io::{read_json, read_pulse_csv};
use qtraj_core::noise::{synthetic_t1_knots, T1Interpolant};
use serde_json::{json, Value};

fn qtraj() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qtraj"));
    c.env_remove("QTRAJ_OUTPUT_ROOT");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

#[test]
fn missing_gate_time_is_a_config_error_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", &json!({"schema_version": 1, "problem": {"gate": "Z/2"}}));
    let out = tmp.path().join("out");
    let res = qtraj().args(["--output", out.to_str().unwrap(), "optimize", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("gate_time") && stderr.contains("line"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn evaluate_without_seed_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"schema_version": 1, "problem": {"gate": "Z/2", "gate_time": 18.0}, "evaluation": {"n_states": 10}}),
    );
    let out = tmp.path().join("out");
    let res = qtraj()
        .args(["--output", out.to_str().unwrap(), "evaluate", cfg.to_str().unwrap(), "--analytic"])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unreadable_pulse_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("evaluate/z_half_detuning.json");
    let pulse = tmp.path().join("p.csv");
    std::fs::write(&pulse, "t_ns,a_GHz\n0,0\n").unwrap();
    let out = tmp.path().join("out");
    let res = qtraj()
        .args(["--output", out.to_str().unwrap(), "evaluate", cfg.to_str().unwrap(), "--pulse", pulse.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn idle_z_half_optimizes_to_zero_flux() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("idle");
    let cfg = configs().join("optimize/z_half_idle.json");
    let res = qtraj().args(["--output", out.to_str().unwrap(), "optimize", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let pulse = read_pulse_csv(&out.join("pulse.csv")).unwrap();
    assert!(pulse.a.iter().chain(&pulse.da).chain(&pulse.d2a).all(|v| v.abs() < 1e-12));
    let diag: Value = read_json(&out.join("diagnostics.json")).unwrap();
    assert!(diag["solver"]["max_violation"].as_f64().unwrap() <= 1e-8);
    assert!(diag["solver"]["wall_time"]["alm_seconds"].is_number());
    assert!(out.join("trajectory.json").exists());
    let echo: Value = read_json(&out.join("config.json")).unwrap();
    assert_eq!(echo["solver"]["tolerance"], 1e-8);
    assert_eq!(echo["problem"]["dt"], 0.1);
}

#[test]
fn optimized_pulse_round_trips_through_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "x.json",
        &json!({
            "schema_version": 1,
            "problem": {"gate": "X/2", "gate_time": 20.0},
            "solver": {"tolerance": 1e-3, "skip_projection": true, "max_outer_iterations": 2, "max_ilqr_iterations": 20},
            "evaluation": {"perturbation": {"kind": "none"}, "n_states": 300, "seed": 5}
        }),
    );
    let opt_dir = tmp.path().join("opt");
    let res = qtraj().args(["--output", opt_dir.to_str().unwrap(), "optimize", cfg.to_str().unwrap()]).output().unwrap();
    assert!(matches!(res.status.code(), Some(0) | Some(3)));
    let diag: Value = read_json(&opt_dir.join("diagnostics.json")).unwrap();
    let internal = diag["closed_system_error"].as_f64().unwrap();

    let eval_dir = tmp.path().join("eval");
    let pulse = opt_dir.join("pulse.csv");
    let res = qtraj()
        .args(["--output", eval_dir.to_str().unwrap(), "evaluate", cfg.to_str().unwrap(), "--pulse", pulse.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report: ErrorReport = read_json(&eval_dir.join("report.json")).unwrap();
    assert!((report.mean - internal).abs() <= 1e-10, "{} vs {internal}", report.mean);
    let csv = std::fs::read_to_string(eval_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("count,cumulative_error\n1,"));
}

#[test]
fn unconverged_solves_exit_with_solver_code_and_keep_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "x.json",
        &json!({
            "schema_version": 1,
            "problem": {"gate": "X/2", "gate_time": 10.0},
            "solver": {"max_outer_iterations": 1, "max_ilqr_iterations": 2, "skip_projection": true}
        }),
    );
    let out = tmp.path().join("o");
    let res = qtraj().args(["--output", out.to_str().unwrap(), "optimize", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(res.status.code(), Some(3));
    let diag: Value = read_json(&out.join("diagnostics.json")).unwrap();
    assert_eq!(diag["solver"]["converged"], false);
    assert!(diag["solver"]["failure"].is_string());
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let res = qtraj()
        .env("QTRAJ_OUTPUT_ROOT", tmp.path())
        .args(["audit", configs().join("optimize/z_half_derivative_72ns.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0));
    let dir = tmp.path().join("z_half_derivative_72ns-audit");
    let text = std::fs::read_to_string(dir.join("audit.txt")).unwrap();
    assert!(text.contains("constraints:") && text.contains("costs:"));
    assert!(dir.join("audit.json").exists() && dir.join("config.json").exists());
}

#[test]
fn noise_gen_writes_the_scaled_sequence() {
    let tmp = tempfile::tempdir().unwrap();
    let res = qtraj()
        .args(["--output", tmp.path().to_str().unwrap(), "noise-gen", configs().join("noise_gen.json").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0));
    let mut r = csv::Reader::from_path(tmp.path().join("noise.csv")).unwrap();
    let v: Vec<f64> = r.records().map(|rec| rec.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(v.len(), 1 << 16);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
    assert!((sd - 2.5e-5).abs() < 1e-12);
}

#[test]
fn detuning_sweep_is_keyed_by_value() {
    let tmp = tempfile::tempdir().unwrap();
    let res = qtraj()
        .args([
            "--output",
            tmp.path().to_str().unwrap(),
            "sweep",
            configs().join("evaluate/z_half_detuning.json").to_str().unwrap(),
            "--param",
            "evaluation.perturbation.relative",
            "--values",
            "0.005,0.01,0.02",
            "--analytic",
        ])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let mut means = vec![];
    for v in ["0.005", "0.01", "0.02"] {
        let r: ErrorReport =
            read_json(&tmp.path().join(format!("evaluation.perturbation.relative={v}/report.json"))).unwrap();
        means.push(r.mean);
    }
    assert!(means[0] < means[1] && means[1] < means[2]);
    let table = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn bad_sweep_value_fails_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let res = qtraj()
        .args([
            "--output",
            out.to_str().unwrap(),
            "sweep",
            configs().join("optimize/x_half_72ns.json").to_str().unwrap(),
            "--param",
            "problem.gate_time",
            "--values",
            "36,-1",
        ])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn shipped_t1_curve_is_the_synthetic_curve() {
    let shipped = T1Interpolant::from_csv(&configs().join("t1_synthetic.csv")).unwrap();
    assert_eq!(shipped.knots(), synthetic_t1_knots());
    assert_eq!(shipped, T1Interpolant::synthetic());
}

#[test]
fn shipped_configs_parse() {
    let mut n = 0;
    for sub in ["", "optimize", "evaluate"] {
        for entry in std::fs::read_dir(configs().join(sub)).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().and_then(|e| e.to_str()) == Some("json") {
                qtraj_cli::config::load(&p).unwrap_or_else(|e| panic!("{}: {}", p.display(), e.message));
                n += 1;
            }
        }
    }
    assert!(n >= 8);
}
