use nalgebra::DVector;

use super::ilqr::ilqr_inner;
use super::problem::{ConstraintKind, CostExpansion, TrajectoryProblem};
use super::{SolverOptions, Trajectory};
use crate::error::Result;

/// Lagrange multiplier estimates per constraint and knot, plus the penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    /// `lambda[c][k]` is empty where constraint `c` does not apply.
    pub lambda: Vec<Vec<DVector<f64>>>,
    pub penalty: f64,
}

impl Multipliers {
    pub fn new(prob: &TrajectoryProblem, penalty: f64) -> Self {
        let n = prob.n_knots;
        let lambda = prob
            .constraints
            .iter()
            .map(|c| {
                (0..n)
                    .map(|k| if applies(prob, c.as_ref(), k) { DVector::zeros(c.dim()) } else { DVector::zeros(0) })
                    .collect()
            })
            .collect();
        Self { lambda, penalty }
    }

    fn active(kind: ConstraintKind, c: f64, lambda: f64) -> bool {
        kind == ConstraintKind::Equality || c > 0.0 || lambda > 0.0
    }

    /// Σ λᵀc + ½ρ Σ_active c².
    pub fn penalty_value(&self, prob: &TrajectoryProblem, x: &[DVector<f64>], u: &[DVector<f64>]) -> f64 {
        let n = prob.n_knots;
        let mut total = 0.0;
        for (ci, con) in prob.constraints.iter().enumerate() {
            for k in 0..n {
                let lam = &self.lambda[ci][k];
                if lam.is_empty() {
                    continue;
                }
                let uk = if k + 1 < n { Some(&u[k]) } else { None };
                let c = con.eval(&x[k], uk);
                for i in 0..c.len() {
                    total += lam[i] * c[i];
                    if Self::active(con.kind(), c[i], lam[i]) {
                        total += 0.5 * self.penalty * c[i] * c[i];
                    }
                }
            }
        }
        total
    }

    /// Adds the gradient and Gauss-Newton Hessian of the penalty terms at
    /// knot `k` to `e`.
    pub fn expand(
        &self,
        prob: &TrajectoryProblem,
        k: usize,
        x: &DVector<f64>,
        u: Option<&DVector<f64>>,
        e: &mut CostExpansion,
    ) {
        for (ci, con) in prob.constraints.iter().enumerate() {
            let lam = &self.lambda[ci][k];
            if lam.is_empty() {
                continue;
            }
            let c = con.eval(x, u);
            let (cx, cu) = con.jacobian(x, u);
            let mut weight = DVector::zeros(c.len());
            for i in 0..c.len() {
                if Self::active(con.kind(), c[i], lam[i]) {
                    weight[i] = self.penalty;
                }
            }
            let mu = lam + weight.component_mul(&c);
            let cxw = cx.transpose() * nalgebra::DMatrix::from_diagonal(&weight);
            e.lx += cx.transpose() * &mu;
            e.lxx += &cxw * &cx;
            if u.is_some() {
                let cuw = cu.transpose() * nalgebra::DMatrix::from_diagonal(&weight);
                e.lu += cu.transpose() * &mu;
                e.luu += &cuw * &cu;
                e.lux += cuw * cx;
            }
        }
    }

    /// λ ← λ + ρh for equalities, λ ← max(0, λ + ρg) for inequalities.
    pub fn update(&mut self, prob: &TrajectoryProblem, traj: &Trajectory) {
        let n = prob.n_knots;
        for (ci, con) in prob.constraints.iter().enumerate() {
            for k in 0..n {
                let lam = &mut self.lambda[ci][k];
                if lam.is_empty() {
                    continue;
                }
                let uk = if k + 1 < n { Some(&traj.u[k]) } else { None };
                let c = con.eval(&traj.x[k], uk);
                for i in 0..c.len() {
                    let v = lam[i] + self.penalty * c[i];
                    lam[i] = match con.kind() {
                        ConstraintKind::Equality => v,
                        ConstraintKind::Inequality => v.max(0.0),
                    };
                }
            }
        }
    }
}

fn applies(prob: &TrajectoryProblem, c: &dyn super::problem::Constraint, k: usize) -> bool {
    let n = prob.n_knots;
    c.stages().contains(k, n) && !(c.control_only() && k + 1 == n)
}

/// Augmented-Lagrangian outer loop around iLQR. Stops once the violation
/// is below the intermediate tolerance; scales the penalty whenever the
/// violation fails to drop fourfold.
pub fn alm_solve(prob: &TrajectoryProblem, init: &Trajectory, opts: &SolverOptions) -> Result<Trajectory> {
    alm_solve_with_multipliers(prob, init, opts).map(|(t, _)| t)
}

pub(crate) fn alm_solve_with_multipliers(
    prob: &TrajectoryProblem,
    init: &Trajectory,
    opts: &SolverOptions,
) -> Result<(Trajectory, Multipliers)> {
    prob.validate()?;
    let mut mults = Multipliers::new(prob, opts.initial_penalty);
    let mut traj = Trajectory::from_controls(prob, init.u.clone())?;
    let mut prev = traj.diagnostics.max_violation;
    let mut ilqr_iterations = 0;
    let mut outer = 0;
    let mut failure = None;
    while outer < opts.max_outer_iterations.max(1) {
        outer += 1;
        let out = ilqr_inner(prob, &traj, Some(&mults), opts)?;
        ilqr_iterations += out.iterations;
        traj = out.traj;
        let v = traj.diagnostics.max_violation;
        if prob.constraints.is_empty() {
            failure = out.failure;
            break;
        }
        if v <= opts.intermediate_tolerance {
            break;
        }
        mults.update(prob, &traj);
        if v > prev / 4.0 {
            mults.penalty *= opts.penalty_scaling;
            if mults.penalty > opts.max_penalty {
                failure = Some(format!("penalty exceeded {:.1e} with violation {v:.3e}", opts.max_penalty));
                break;
            }
        }
        prev = v;
    }
    if failure.is_none() && traj.diagnostics.max_violation > opts.intermediate_tolerance && !prob.constraints.is_empty() {
        failure = Some(format!(
            "outer iterations exhausted with violation {:.3e}",
            traj.diagnostics.max_violation
        ));
    }
    traj.refresh(prob);
    traj.diagnostics.ilqr_iterations = ilqr_iterations;
    traj.diagnostics.outer_iterations = outer;
    traj.diagnostics.failure = failure;
    Ok((traj, mults))
}
