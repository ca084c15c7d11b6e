use std::path::{Path, PathBuf};

use qtraj_core::evaluation::{
    analytic_pulse, cumulative_error, d1_metric, unitary_gate_error, ErrorReport, EvalContext, EvalSpec, Perturbation,
    Pulse,
};
use qtraj_core::io::{
    fmt_f64, pulse_from_trajectory, read_pulse_csv, trajectory_unitary, write_json, write_pulse_csv, write_report_csv,
    TrajectoryRecord,
};
use qtraj_core::noise::{PinkNoiseGenerator, T1Interpolant};
use qtraj_core::problems::{build_gate_problem, GateProblem};
use qtraj_core::solver::{solve, Diagnostics};
use qtraj_core::GateTarget;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{self, require_seed, set_path, RunConfig};
use crate::{CliError, EXIT_OK, EXIT_SOLVER};

/// Where outputs go when neither the command line nor the config names a
/// directory.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Explicit output directory; wins over everything else.
    pub output: Option<PathBuf>,
    /// Root under which `<config stem>-<command>` is created.
    pub output_root: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum PulseSource {
    File(PathBuf),
    /// The textbook pulse for the configured gate.
    Analytic,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: u8,
    pub output_dir: PathBuf,
    pub summary: String,
}

/// Contents of `diagnostics.json`.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizeDiagnostics {
    pub gate: qtraj_core::GateKind,
    pub gate_time: f64,
    pub duration_ns: Option<f64>,
    pub n_knots: usize,
    /// Mean closed-system gate error of the optimizer's own rollout, over
    /// the evaluation states.
    pub closed_system_error: Option<f64>,
    pub closed_system_states: usize,
    pub closed_system_seed: u64,
    pub solver: Diagnostics,
}

fn resolve_output(cfg: &RunConfig, cfg_path: &Path, command: &str, opts: &RunOptions) -> PathBuf {
    if let Some(o) = &opts.output {
        return o.clone();
    }
    if let Some(o) = &cfg.output_dir {
        return o.clone();
    }
    let stem = cfg_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let root = opts.output_root.clone().unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{stem}-{command}"))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))
}

fn write_echo(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let mut echo = cfg.clone();
    echo.output_dir = Some(dir.to_path_buf());
    write_json(&dir.join("config.json"), &echo).map_err(CliError::io)
}

fn eval_context(cfg: &RunConfig) -> Result<EvalContext, CliError> {
    cfg.params.validate().map_err(CliError::config)?;
    let t1 = match &cfg.evaluation_t1_csv {
        Some(p) => T1Interpolant::from_csv(p).map_err(CliError::config)?,
        None => T1Interpolant::synthetic(),
    };
    Ok(EvalContext { params: cfg.params, t1 })
}

// ---- optimize ----

struct PreparedOptimize {
    gp: GateProblem,
    closed_spec: EvalSpec,
}

fn prepare_optimize(cfg: &RunConfig) -> Result<PreparedOptimize, CliError> {
    let problem = cfg.problem()?;
    problem.validate().map_err(CliError::config)?;
    cfg.solver.validate().map_err(CliError::config)?;
    let base = cfg.evaluation.clone().unwrap_or_default();
    base.validate().map_err(CliError::config)?;
    let gp = build_gate_problem(problem, &cfg.params).map_err(CliError::config)?;
    let closed_spec = EvalSpec { perturbation: Perturbation::None, gate_count: 1, ..base };
    Ok(PreparedOptimize { gp, closed_spec })
}

struct OptimizeResult {
    pulse: Option<Pulse>,
    diagnostics: OptimizeDiagnostics,
    code: u8,
}

fn execute_optimize(cfg: &RunConfig, prep: &PreparedOptimize, dir: &Path) -> Result<OptimizeResult, CliError> {
    create_dir(dir)?;
    write_echo(dir, cfg)?;
    let gp = &prep.gp;
    let mut diagnostics = OptimizeDiagnostics {
        gate: gp.config.gate,
        gate_time: gp.config.gate_time,
        duration_ns: None,
        n_knots: gp.problem.n_knots,
        closed_system_error: None,
        closed_system_states: prep.closed_spec.n_states,
        closed_system_seed: prep.closed_spec.seed,
        solver: Diagnostics::default(),
    };
    let solved = gp.initial_guess().and_then(|init| solve(&gp.problem, &init, &cfg.solver));
    let traj = match solved {
        Ok(t) => t,
        Err(e) => {
            diagnostics.solver.failure = Some(e.to_string());
            write_json(&dir.join("diagnostics.json"), &diagnostics).map_err(CliError::io)?;
            return Ok(OptimizeResult { pulse: None, diagnostics, code: EXIT_SOLVER });
        }
    };
    diagnostics.solver = traj.diagnostics.clone();
    let pulse = pulse_from_trajectory(gp, &traj).map_err(CliError::solver)?;
    diagnostics.duration_ns = Some(pulse.duration());
    let u = trajectory_unitary(gp, &traj).map_err(CliError::solver)?;
    diagnostics.closed_system_error =
        Some(unitary_gate_error(&u, &gp.target, &prep.closed_spec).map_err(CliError::evaluation)?);

    write_pulse_csv(&dir.join("pulse.csv"), &pulse).map_err(CliError::io)?;
    if cfg.formats.trajectory_json {
        let rec = TrajectoryRecord::new(gp, &traj).map_err(CliError::io)?;
        write_json(&dir.join("trajectory.json"), &rec).map_err(CliError::io)?;
    }
    write_json(&dir.join("diagnostics.json"), &diagnostics).map_err(CliError::io)?;
    let code = if traj.diagnostics.converged { EXIT_OK } else { EXIT_SOLVER };
    Ok(OptimizeResult { pulse: Some(pulse), diagnostics, code })
}

pub fn optimize(cfg_path: &Path, opts: &RunOptions) -> Result<Outcome, CliError> {
    let (cfg, _) = config::load(cfg_path)?;
    let prep = prepare_optimize(&cfg)?;
    let dir = resolve_output(&cfg, cfg_path, "optimize", opts);
    let res = execute_optimize(&cfg, &prep, &dir)?;
    let d = &res.diagnostics.solver;
    let summary = format!(
        "max violation {:.3e}, cost {:.6e}, {} iLQR / {} outer iterations, {:.2} s{}",
        d.max_violation,
        d.cost,
        d.ilqr_iterations,
        d.outer_iterations,
        d.wall_time.total_seconds,
        d.failure.as_ref().map(|f| format!("; failure: {f}")).unwrap_or_default()
    );
    Ok(Outcome { code: res.code, output_dir: dir, summary })
}

// ---- evaluate ----

struct PreparedEvaluate {
    pulse: Pulse,
    target: GateTarget,
    spec: EvalSpec,
    ctx: EvalContext,
}

fn load_pulse(cfg: &RunConfig, source: &PulseSource) -> Result<Pulse, CliError> {
    match source {
        PulseSource::File(p) => read_pulse_csv(p).map_err(CliError::config),
        PulseSource::Analytic => {
            let problem = cfg.problem()?;
            analytic_pulse(problem.gate, &cfg.params, problem.dt).map_err(CliError::config)
        }
    }
}

fn prepare_evaluate(cfg: &RunConfig, raw: &Value, pulse: Pulse) -> Result<PreparedEvaluate, CliError> {
    require_seed(raw, "evaluation")?;
    let spec = cfg.evaluation()?.clone();
    spec.validate().map_err(CliError::config)?;
    let target = GateTarget::new(cfg.problem()?.gate).map_err(CliError::config)?;
    let ctx = eval_context(cfg)?;
    Ok(PreparedEvaluate { pulse, target, spec, ctx })
}

fn execute_evaluate(cfg: &RunConfig, prep: &PreparedEvaluate, dir: &Path) -> Result<ErrorReport, CliError> {
    create_dir(dir)?;
    write_echo(dir, cfg)?;
    let report = cumulative_error(&prep.pulse, &prep.target, &prep.spec, &prep.ctx).map_err(CliError::evaluation)?;
    write_json(&dir.join("report.json"), &report).map_err(CliError::io)?;
    if cfg.formats.report_csv {
        write_report_csv(&dir.join("report.csv"), &report).map_err(CliError::io)?;
    }
    Ok(report)
}

pub fn evaluate(cfg_path: &Path, source: &PulseSource, opts: &RunOptions) -> Result<Outcome, CliError> {
    let (cfg, raw) = config::load(cfg_path)?;
    let pulse = load_pulse(&cfg, source)?;
    let prep = prepare_evaluate(&cfg, &raw, pulse)?;
    let dir = resolve_output(&cfg, cfg_path, "evaluate", opts);
    let report = execute_evaluate(&cfg, &prep, &dir)?;
    let d1 = d1_metric(&prep.pulse, &prep.ctx.t1).map_err(CliError::evaluation)?;
    let summary = format!(
        "mean gate error {:.6e} over {} states, error after {} gates {:.6e}, D1 {:.6e}",
        report.mean,
        report.n_states,
        report.cumulative.len(),
        report.cumulative.last().copied().unwrap_or(f64::NAN),
        d1
    );
    Ok(Outcome { code: EXIT_OK, output_dir: dir, summary })
}

// ---- sweep ----

enum PreparedRun {
    Optimize(PreparedOptimize, Option<(RunConfig, Value)>),
    Evaluate(PreparedEvaluate),
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub mean_error: Option<f64>,
    pub max_violation: Option<f64>,
    pub exit_code: u8,
}

fn dir_key(param: &str, value: &str) -> String {
    let clean: String = value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "+-._".contains(c) { c } else { '_' })
        .collect();
    format!("{param}={clean}")
}

pub fn sweep(
    cfg_path: &Path,
    param: &str,
    values: &[String],
    source: Option<&PulseSource>,
    opts: &RunOptions,
) -> Result<Outcome, CliError> {
    if values.is_empty() {
        return Err(CliError::config("--values is empty"));
    }
    let (base_cfg, raw) = config::load(cfg_path)?;
    let base_dir = cfg_path.parent().unwrap_or(Path::new("."));
    let pulse = source.map(|s| load_pulse(&base_cfg, s)).transpose()?;

    // everything is validated before the first directory exists
    let mut runs = Vec::with_capacity(values.len());
    for v in values {
        let parsed: Value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.clone()));
        let mut variant = raw.clone();
        set_path(&mut variant, param, parsed)?;
        let (cfg, vraw) = config::parse(&variant.to_string(), base_dir)
            .map_err(|e| CliError::config(format!("{param}={v}: {}", e.message)))?;
        let prep = match &pulse {
            Some(p) => PreparedRun::Evaluate(prepare_evaluate(&cfg, &vraw, p.clone())?),
            None => {
                if cfg.evaluation.is_some() {
                    require_seed(&vraw, "evaluation")?;
                }
                let eval = cfg.evaluation.is_some().then(|| (cfg.clone(), vraw.clone()));
                PreparedRun::Optimize(prepare_optimize(&cfg)?, eval)
            }
        };
        runs.push((v.clone(), cfg, prep));
    }

    let dir = resolve_output(&base_cfg, cfg_path, "sweep", opts);
    create_dir(&dir)?;
    write_echo(&dir, &base_cfg)?;
    let rows: Vec<Result<SweepRow, CliError>> = runs
        .par_iter()
        .map(|(value, cfg, prep)| {
            let sub = dir.join(dir_key(param, value));
            match prep {
                PreparedRun::Evaluate(p) => {
                    let r = execute_evaluate(cfg, p, &sub)?;
                    Ok(SweepRow { value: value.clone(), mean_error: Some(r.mean), max_violation: None, exit_code: EXIT_OK })
                }
                PreparedRun::Optimize(p, eval) => {
                    let res = execute_optimize(cfg, p, &sub)?;
                    let mut row = SweepRow {
                        value: value.clone(),
                        mean_error: None,
                        max_violation: Some(res.diagnostics.solver.max_violation),
                        exit_code: res.code,
                    };
                    if let (Some(pulse), Some((ecfg, eraw))) = (res.pulse, eval) {
                        let ep = prepare_evaluate(ecfg, eraw, pulse)?;
                        row.mean_error = Some(execute_evaluate(ecfg, &ep, &sub)?.mean);
                    }
                    Ok(row)
                }
            }
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut w = csv::Writer::from_path(dir.join("sweep.csv")).map_err(CliError::io)?;
    w.write_record(["value", "mean_error", "max_violation", "exit_code"]).map_err(CliError::io)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in &rows {
        w.write_record([r.value.clone(), opt(r.mean_error), opt(r.max_violation), r.exit_code.to_string()])
            .map_err(CliError::io)?;
    }
    w.flush().map_err(CliError::io)?;

    let code = rows.iter().map(|r| r.exit_code).max().unwrap_or(EXIT_OK);
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "{param}={}: error {} violation {}",
                r.value,
                r.mean_error.map(|e| format!("{e:.4e}")).unwrap_or_else(|| "-".into()),
                r.max_violation.map(|e| format!("{e:.2e}")).unwrap_or_else(|| "-".into())
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome { code, output_dir: dir, summary })
}

// ---- noise-gen ----

pub fn noise_gen(cfg_path: &Path, opts: &RunOptions) -> Result<Outcome, CliError> {
    let (cfg, raw) = config::load(cfg_path)?;
    let spec = cfg.noise.clone().ok_or_else(|| CliError::config("config has no `noise` section"))?;
    require_seed(&raw, "noise")?;
    let gen = PinkNoiseGenerator::new(&spec).map_err(CliError::config)?;
    let dir = resolve_output(&cfg, cfg_path, "noise-gen", opts);
    create_dir(&dir)?;
    write_echo(&dir, &cfg)?;
    let seq = gen.generate(&mut ChaCha8Rng::seed_from_u64(spec.seed)).map_err(CliError::evaluation)?;
    let mut w = csv::Writer::from_path(dir.join("noise.csv")).map_err(CliError::io)?;
    w.write_record(["t_ns", "delta_a_GHz"]).map_err(CliError::io)?;
    for (k, v) in seq.iter().enumerate() {
        w.write_record([fmt_f64(k as f64 * spec.dt_ns), fmt_f64(*v)]).map_err(CliError::io)?;
    }
    w.flush().map_err(CliError::io)?;
    let summary = format!("{} samples, dt {} ns, sigma {:.3e} GHz", seq.len(), spec.dt_ns, spec.sigma);
    Ok(Outcome { code: EXIT_OK, output_dir: dir, summary })
}

// ---- audit ----

pub fn audit(cfg_path: &Path, opts: &RunOptions) -> Result<Outcome, CliError> {
    let (cfg, _) = config::load(cfg_path)?;
    let problem = cfg.problem()?;
    problem.validate().map_err(CliError::config)?;
    let gp = build_gate_problem(problem, &cfg.params).map_err(CliError::config)?;
    let audit = gp.audit();
    let text = audit.to_text();
    let dir = resolve_output(&cfg, cfg_path, "audit", opts);
    create_dir(&dir)?;
    write_echo(&dir, &cfg)?;
    std::fs::write(dir.join("audit.txt"), &text).map_err(CliError::io)?;
    write_json(&dir.join("audit.json"), &audit).map_err(CliError::io)?;
    Ok(Outcome { code: EXIT_OK, output_dir: dir, summary: text })
}
