//! File formats: pulse CSV, trajectory and diagnostics JSON, error reports.

use std::path::Path;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FLUX, FLUX_DERIV};
use crate::error::{Error, Result};
use crate::evaluation::{ErrorReport, Pulse};
use crate::problems::GateProblem;
use crate::quantum::C64;
use crate::solver::Trajectory;

pub const PULSE_HEADER: [&str; 5] = ["t_ns", "a_GHz", "da", "d2a", "dt"];

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_pulse_csv(path: &Path, pulse: &Pulse) -> Result<()> {
    pulse.validate()?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PULSE_HEADER)?;
    for k in 0..pulse.n_knots() {
        w.write_record([pulse.t[k], pulse.a[k], pulse.da[k], pulse.d2a[k], pulse.dt[k]].map(fmt_f64))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pulse_csv(path: &Path) -> Result<Pulse> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != PULSE_HEADER {
        return Err(Error::Config(format!(
            "{}: expected header {}, found {}",
            path.display(),
            PULSE_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut p = Pulse { t: vec![], a: vec![], da: vec![], d2a: vec![], dt: vec![] };
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("{} line {}: {e}", path.display(), line + 2)))?;
        if vals.len() != 5 {
            return Err(Error::Config(format!("{} line {}: expected 5 columns", path.display(), line + 2)));
        }
        p.t.push(vals[0]);
        p.a.push(vals[1]);
        p.da.push(vals[2]);
        p.d2a.push(vals[3]);
        p.dt.push(vals[4]);
    }
    p.validate()?;
    Ok(p)
}

/// Flux, its derivatives and step durations along an optimized trajectory.
pub fn pulse_from_trajectory(gp: &GateProblem, traj: &Trajectory) -> Result<Pulse> {
    let n = traj.x.len();
    if n != gp.problem.n_knots || traj.u.len() + 1 != n {
        return Err(Error::InvalidInput("trajectory does not match the gate problem".into()));
    }
    let fo = gp.layout().flux;
    let mut dt = gp.durations(&traj.u);
    dt.push(0.0);
    let mut t = Vec::with_capacity(n);
    let mut acc = 0.0;
    for h in &dt {
        t.push(acc);
        acc += h;
    }
    let mut d2a: Vec<f64> = traj.u.iter().map(|u| u[0]).collect();
    d2a.push(0.0);
    let p = Pulse {
        t,
        a: traj.x.iter().map(|x| x[fo + FLUX]).collect(),
        da: traj.x.iter().map(|x| x[fo + FLUX_DERIV]).collect(),
        d2a,
        dt,
    };
    p.validate()?;
    Ok(p)
}

/// Gate unitary realized by the optimizer's rollout, read off the final
/// images of |0⟩ and |1⟩ (the first two nominal states in every layout).
pub fn trajectory_unitary(gp: &GateProblem, traj: &Trajectory) -> Result<Matrix2<C64>> {
    let layout = gp.layout();
    if layout.n_states < 2 {
        return Err(Error::InvalidInput("need the |0⟩ and |1⟩ trajectories".into()));
    }
    let last = traj.x.last().ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
    let col = |i: usize| {
        let o = layout.state(i);
        (C64::new(last[o], last[o + 2]), C64::new(last[o + 1], last[o + 3]))
    };
    let (a, b) = col(0);
    let (c, d) = col(1);
    Ok(Matrix2::new(a, c, b, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn new(gp: &GateProblem, traj: &Trajectory) -> Result<Self> {
        let pulse = pulse_from_trajectory(gp, traj)?;
        Ok(Self {
            times: pulse.t,
            states: traj.x.iter().map(|x| x.iter().copied().collect()).collect(),
            controls: traj.u.iter().map(|u| u.iter().copied().collect()).collect(),
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&s)?)
}

/// `count,cumulative_error` rows.
pub fn write_report_csv(path: &Path, report: &ErrorReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["count", "cumulative_error"])?;
    for (k, e) in report.cumulative.iter().enumerate() {
        w.write_record([(k + 1).to_string(), fmt_f64(*e)])?;
    }
    w.flush()?;
    Ok(())
}
