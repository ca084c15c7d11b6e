use nalgebra::DVector;
use rayon::prelude::*;

use super::banded::BandedCholesky;
use super::problem::{ConstraintKind, TrajectoryProblem};
use super::{SolverOptions, Trajectory};
use crate::error::{Error, Result};

/// One linearized constraint row over a contiguous window of the stacked
/// variables [u_0, x_1, u_1, x_2, …, u_{N-2}, x_{N-1}].
struct Row {
    lo: usize,
    coef: Vec<f64>,
    residual: f64,
}

impl Row {
    fn end(&self) -> usize {
        self.lo + self.coef.len()
    }
}

struct Layout {
    nx: usize,
    nu: usize,
    n: usize,
}

impl Layout {
    fn off_u(&self, k: usize) -> usize {
        k * (self.nu + self.nx)
    }

    fn off_x(&self, k: usize) -> usize {
        debug_assert!(k >= 1);
        (k - 1) * (self.nu + self.nx) + self.nu
    }

    fn n_vars(&self) -> usize {
        (self.n - 1) * (self.nu + self.nx)
    }
}

/// Max of the dynamics defects and constraint violations at a point whose
/// states need not be a rollout of its controls.
fn merit(prob: &TrajectoryProblem, xs: &[DVector<f64>], us: &[DVector<f64>]) -> Result<f64> {
    let defects = (0..us.len())
        .into_par_iter()
        .map(|k| Ok((prob.dynamics.step(k, &xs[k], &us[k])? - &xs[k + 1]).amax()))
        .collect::<Result<Vec<f64>>>()?;
    let d = defects.into_iter().fold(0.0, f64::max);
    Ok(d.max(prob.max_violation(xs, us)))
}

fn build_rows(
    prob: &TrajectoryProblem,
    lay: &Layout,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
    active_tol: f64,
) -> Result<Vec<Row>> {
    let n = lay.n;
    let per_stage = (0..n)
        .into_par_iter()
        .map(|k| -> Result<Vec<Row>> {
            let mut rows = Vec::new();
            let uk = if k + 1 < n { Some(&us[k]) } else { None };
            for con in &prob.constraints {
                if !con.stages().contains(k, n) || (con.control_only() && uk.is_none()) {
                    continue;
                }
                let c = con.eval(&xs[k], uk);
                let (cx, cu) = con.jacobian(&xs[k], uk);
                for i in 0..c.len() {
                    if con.kind() == ConstraintKind::Inequality && c[i] < -active_tol {
                        continue;
                    }
                    let (lo, coef): (usize, Vec<f64>) = if k == 0 {
                        (0, cu.row(i).iter().copied().collect())
                    } else if uk.is_some() {
                        (lay.off_x(k), cx.row(i).iter().chain(cu.row(i).iter()).copied().collect())
                    } else {
                        (lay.off_x(k), cx.row(i).iter().copied().collect())
                    };
                    if coef.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    rows.push(Row { lo, coef, residual: c[i] });
                }
            }
            if let Some(u) = uk {
                let (a, b) = prob.dynamics.jacobians(k, &xs[k], u)?;
                let next = prob.dynamics.step(k, &xs[k], u)?;
                for i in 0..lay.nx {
                    let mut coef = Vec::with_capacity(2 * lay.nx + lay.nu);
                    let lo = if k == 0 {
                        0
                    } else {
                        coef.extend(a.row(i).iter());
                        lay.off_x(k)
                    };
                    coef.extend(b.row(i).iter());
                    coef.extend((0..lay.nx).map(|j| if j == i { -1.0 } else { 0.0 }));
                    rows.push(Row { lo, coef, residual: next[i] - xs[k + 1][i] });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_stage.into_iter().flatten().collect())
}

fn dot_overlap(a: &Row, b: &Row) -> f64 {
    let lo = a.lo.max(b.lo);
    let hi = a.end().min(b.end());
    (lo..hi).map(|v| a.coef[v - a.lo] * b.coef[v - b.lo]).sum()
}

/// Minimum-norm Gauss-Newton step δ = −Dᵀ(DDᵀ + εI)⁻¹r.
fn min_norm_step(rows: &[Row], n_vars: usize) -> Result<Vec<f64>> {
    let m = rows.len();
    let mut bw = 0;
    for (i, r) in rows.iter().enumerate() {
        let end = r.end();
        let last = rows.partition_point(|q| q.lo < end);
        bw = bw.max(last.saturating_sub(1).saturating_sub(i));
    }
    let rhs: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let mut eps = 1e-12;
    let chol = loop {
        let f = BandedCholesky::factor(m, bw, |i, j| {
            let v = if i - j <= bw { dot_overlap(&rows[i], &rows[j]) } else { 0.0 };
            if i == j {
                v + eps
            } else {
                v
            }
        });
        match f {
            Ok(f) => break f,
            Err(_) if eps < 1e-4 => eps *= 100.0,
            Err(e) => return Err(e),
        }
    };
    let y = chol.solve(&rhs);
    let mut step = vec![0.0; n_vars];
    for (r, yi) in rows.iter().zip(y) {
        for (j, c) in r.coef.iter().enumerate() {
            step[r.lo + j] -= c * yi;
        }
    }
    Ok(step)
}

fn apply_step(
    lay: &Layout,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
    step: &[f64],
    alpha: f64,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut x2 = xs.to_vec();
    let mut u2 = us.to_vec();
    for k in 0..lay.n - 1 {
        let o = lay.off_u(k);
        for i in 0..lay.nu {
            u2[k][i] += alpha * step[o + i];
        }
        let o = lay.off_x(k + 1);
        for i in 0..lay.nx {
            x2[k + 1][i] += alpha * step[o + i];
        }
    }
    (x2, u2)
}

/// Projects a near-feasible trajectory onto the constraint manifold with
/// the dynamics as equality constraints over all states and controls. The
/// returned states are a fresh rollout of the projected controls, so the
/// reported violation is that of the re-integrated trajectory.
pub fn projected_newton(prob: &TrajectoryProblem, traj: &Trajectory, opts: &SolverOptions) -> Result<Trajectory> {
    prob.validate()?;
    let mut cur = Trajectory::from_controls(prob, traj.u.clone())?;
    let mut diagnostics = traj.diagnostics.clone();
    let cost_before = cur.diagnostics.cost;
    diagnostics.projection_iterations = 0;
    if cur.diagnostics.max_violation <= opts.tolerance {
        diagnostics.cost = cur.diagnostics.cost;
        diagnostics.max_violation = cur.diagnostics.max_violation;
        diagnostics.projection_cost_change = 0.0;
        cur.diagnostics = diagnostics;
        return Ok(cur);
    }
    let lay = Layout { nx: prob.state_dim(), nu: prob.control_dim(), n: prob.n_knots };
    let inner_target = 1e-3 * opts.tolerance;
    let mut iterations = 0;
    let mut xs = cur.x.clone();
    let mut us = cur.u.clone();
    let mut best = cur.clone();
    'outer: while iterations < opts.max_projection_iterations {
        let mut m0 = merit(prob, &xs, &us)?;
        while m0 > inner_target && iterations < opts.max_projection_iterations {
            iterations += 1;
            let rows = build_rows(prob, &lay, &xs, &us, opts.tolerance)?;
            if rows.is_empty() {
                break;
            }
            let step = min_norm_step(&rows, lay.n_vars())?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let (x2, u2) = apply_step(&lay, &xs, &us, &step, alpha);
                if let Ok(m1) = merit(prob, &x2, &u2) {
                    if m1 < m0 {
                        xs = x2;
                        us = u2;
                        m0 = m1;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let candidate = Trajectory::from_controls(prob, us.clone())?;
        if candidate.diagnostics.max_violation < best.diagnostics.max_violation {
            best = candidate.clone();
        }
        if candidate.diagnostics.max_violation <= opts.tolerance {
            break 'outer;
        }
        if xs == candidate.x {
            // rolled-out point did not move: stalled
            break;
        }
        xs = candidate.x;
        us = candidate.u;
    }
    diagnostics.projection_iterations = iterations;
    diagnostics.cost = best.diagnostics.cost;
    diagnostics.max_violation = best.diagnostics.max_violation;
    diagnostics.projection_cost_change = best.diagnostics.cost - cost_before;
    if best.diagnostics.max_violation > opts.tolerance {
        diagnostics.failure = Some(format!(
            "projection reached violation {:.3e}, above tolerance {:.1e}",
            best.diagnostics.max_violation, opts.tolerance
        ));
    }
    best.diagnostics = diagnostics;
    if !best.x.iter().all(|v| v.iter().all(|e| e.is_finite())) {
        return Err(Error::Numeric("projection produced non-finite states".into()));
    }
    Ok(best)
}
