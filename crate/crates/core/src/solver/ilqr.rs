use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use super::alm::Multipliers;
use super::problem::{CostExpansion, TrajectoryProblem};
use super::{SolverOptions, Trajectory};
use crate::error::{Error, Result};

/// Local linear-quadratic model of one stage.
#[derive(Debug, Clone)]
pub struct StageModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub cost: CostExpansion,
}

#[derive(Debug, Clone, Default)]
pub struct Gains {
    /// Feedback K_k.
    pub feedback: Vec<DMatrix<f64>>,
    /// Feedforward d_k.
    pub feedforward: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub gains: Gains,
    /// Σ dᵀQ_u and ½Σ dᵀQ_uu d; the predicted decrease at step α is
    /// −(α·dv[0] + α²·dv[1]).
    pub dv: [f64; 2],
}

impl BackwardResult {
    pub fn expected_decrease(&self, alpha: f64) -> f64 {
        -(alpha * self.dv[0] + alpha * alpha * self.dv[1])
    }
}

/// Riccati-like recursion with value-Hessian regularization `reg`.
/// Fails if a regularized Q_uu is not positive definite.
pub fn backward_pass(stages: &[StageModel], terminal: &CostExpansion, reg: f64) -> Result<BackwardResult> {
    let n = stages.len();
    let mut vx = terminal.lx.clone();
    let mut vxx = terminal.lxx.clone();
    let mut feedback = vec![DMatrix::zeros(0, 0); n];
    let mut feedforward = vec![DVector::zeros(0); n];
    let mut dv = [0.0, 0.0];
    for k in (0..n).rev() {
        let StageModel { a, b, cost } = &stages[k];
        let nx = a.nrows();
        let vxx_reg = if reg > 0.0 { &vxx + DMatrix::identity(nx, nx) * reg } else { vxx.clone() };
        let qx = &cost.lx + a.transpose() * &vx;
        let qu = &cost.lu + b.transpose() * &vx;
        let bt_v = b.transpose() * &vxx_reg;
        let qxx = &cost.lxx + a.transpose() * &vxx * a;
        let quu = &cost.luu + &bt_v * b;
        let qux = &cost.lux + &bt_v * a;
        let quu = (&quu + quu.transpose()) * 0.5;
        let chol = Cholesky::new(quu.clone())
            .ok_or_else(|| Error::SolverFailure(format!("Q_uu not positive definite at stage {k}")))?;
        let kk = -chol.solve(&qux);
        let d = -chol.solve(&qu);
        dv[0] += d.dot(&qu);
        dv[1] += 0.5 * d.dot(&(&quu * &d));
        let kt = kk.transpose();
        vx = &qx + &kt * &quu * &d + &kt * &qu + qux.transpose() * &d;
        let v = &qxx + &kt * &quu * &kk + &kt * &qux + qux.transpose() * &kk;
        vxx = (&v + v.transpose()) * 0.5;
        feedback[k] = kk;
        feedforward[k] = d;
        if !vx.iter().chain(vxx.iter()).all(|v| v.is_finite()) {
            return Err(Error::SolverFailure(format!("non-finite value function at stage {k}")));
        }
    }
    Ok(BackwardResult { gains: Gains { feedback, feedforward }, dv })
}

/// Objective plus augmented-Lagrangian terms.
pub(crate) fn total_cost(prob: &TrajectoryProblem, al: Option<&Multipliers>, x: &[DVector<f64>], u: &[DVector<f64>]) -> f64 {
    let base = prob.objective(x, u);
    match al {
        Some(m) => base + m.penalty_value(prob, x, u),
        None => base,
    }
}

pub(crate) fn linearize(
    prob: &TrajectoryProblem,
    al: Option<&Multipliers>,
    x: &[DVector<f64>],
    u: &[DVector<f64>],
) -> Result<(Vec<StageModel>, CostExpansion)> {
    let n = prob.n_knots;
    let stages = (0..n - 1)
        .into_par_iter()
        .map(|k| {
            let (a, b) = prob.dynamics.jacobians(k, &x[k], &u[k])?;
            let mut cost = prob.cost.expand(&x[k], Some(&u[k]));
            if let Some(m) = al {
                m.expand(prob, k, &x[k], Some(&u[k]), &mut cost);
            }
            Ok(StageModel { a, b, cost })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut terminal = prob.cost.expand(&x[n - 1], None);
    if let Some(m) = al {
        m.expand(prob, n - 1, &x[n - 1], None, &mut terminal);
    }
    Ok((stages, terminal))
}

/// Local models of the objective (no constraint terms) along `traj`.
pub fn linearize_problem(prob: &TrajectoryProblem, traj: &Trajectory) -> Result<(Vec<StageModel>, CostExpansion)> {
    linearize(prob, None, &traj.x, &traj.u)
}

/// Closed-loop rollout at step size α; `None` if the dynamics fail.
fn rollout_with_gains(
    prob: &TrajectoryProblem,
    gains: &Gains,
    current: &Trajectory,
    alpha: f64,
) -> Option<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let n = prob.n_knots;
    let mut xs = Vec::with_capacity(n);
    let mut us = Vec::with_capacity(n - 1);
    xs.push(prob.x0.clone());
    for k in 0..n - 1 {
        let dx = &xs[k] - &current.x[k];
        let uk = &current.u[k] + &gains.feedforward[k] * alpha + &gains.feedback[k] * dx;
        let next = prob.dynamics.step(k, &xs[k], &uk).ok()?;
        if !next.iter().all(|v| v.is_finite()) {
            return None;
        }
        xs.push(next);
        us.push(uk);
    }
    Some((xs, us))
}

/// Line search over α ∈ {1, ½, ¼, …}; returns the first iterate whose
/// actual/expected decrease ratio lies in the acceptance interval.
pub fn forward_pass(
    prob: &TrajectoryProblem,
    backward: &BackwardResult,
    current: &Trajectory,
    opts: &SolverOptions,
) -> Option<Trajectory> {
    forward_pass_al(prob, None, backward, current, opts)
}

pub(crate) fn forward_pass_al(
    prob: &TrajectoryProblem,
    al: Option<&Multipliers>,
    backward: &BackwardResult,
    current: &Trajectory,
    opts: &SolverOptions,
) -> Option<Trajectory> {
    let j0 = total_cost(prob, al, &current.x, &current.u);
    let mut alpha = 1.0;
    for _ in 0..=opts.max_backtracks {
        if let Some((xs, us)) = rollout_with_gains(prob, &backward.gains, current, alpha) {
            let j = total_cost(prob, al, &xs, &us);
            let expected = backward.expected_decrease(alpha);
            let actual = j0 - j;
            let accept = if expected > 1e-14 * j0.abs().max(1.0) {
                let z = actual / expected;
                z >= opts.line_search_lower && z <= opts.line_search_upper
            } else {
                j.is_finite() && j <= j0
            };
            if accept {
                let mut t = Trajectory { x: xs, u: us, diagnostics: current.diagnostics.clone() };
                t.diagnostics.cost = prob.objective(&t.x, &t.u);
                return Some(t);
            }
        }
        alpha *= 0.5;
    }
    None
}

#[derive(Debug, Clone)]
pub(crate) struct IlqrOutcome {
    pub traj: Trajectory,
    pub iterations: usize,
    pub failure: Option<String>,
}

pub(crate) fn ilqr_inner(
    prob: &TrajectoryProblem,
    init: &Trajectory,
    al: Option<&Multipliers>,
    opts: &SolverOptions,
) -> Result<IlqrOutcome> {
    let mut traj = init.clone();
    let mut reg = 0.0;
    let mut failure = None;
    let mut iterations = 0;
    while iterations < opts.max_ilqr_iterations {
        iterations += 1;
        let (stages, terminal) = linearize(prob, al, &traj.x, &traj.u)?;
        let backward = loop {
            match backward_pass(&stages, &terminal, reg) {
                Ok(b) => break Some(b),
                Err(_) => {
                    reg = (reg * opts.regularization_factor).max(opts.regularization_min);
                    if reg > opts.regularization_max {
                        break None;
                    }
                }
            }
        };
        let Some(backward) = backward else {
            failure = Some("regularization exceeded its upper bound in the backward pass".to_string());
            break;
        };

        let j0 = total_cost(prob, al, &traj.x, &traj.u);
        let grad = backward
            .gains
            .feedforward
            .iter()
            .zip(&traj.u)
            .map(|(d, u)| d.iter().zip(u.iter()).map(|(di, ui)| di.abs() / (ui.abs() + 1.0)).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if backward.expected_decrease(1.0) <= opts.cost_tolerance * j0.abs().max(1e-12)
            || grad < opts.gradient_tolerance
        {
            break;
        }

        match forward_pass_al(prob, al, &backward, &traj, opts) {
            Some(next) => {
                let j1 = total_cost(prob, al, &next.x, &next.u);
                traj = next;
                reg /= opts.regularization_factor;
                if reg < opts.regularization_min {
                    reg = 0.0;
                }
                if (j0 - j1).abs() <= opts.cost_tolerance * j0.abs().max(1e-12) {
                    break;
                }
            }
            None => {
                reg = (reg * opts.regularization_factor).max(opts.regularization_min);
                if reg > opts.regularization_max {
                    failure = Some("line search failed at maximum regularization".to_string());
                    break;
                }
            }
        }
    }
    traj.refresh(prob);
    Ok(IlqrOutcome { traj, iterations, failure })
}

/// Unconstrained iLQR on the objective alone; constraints are ignored apart
/// from being reported in the diagnostics.
pub fn ilqr_solve(prob: &TrajectoryProblem, init: &Trajectory, opts: &SolverOptions) -> Result<Trajectory> {
    prob.validate()?;
    opts.validate()?;
    let start = Trajectory::from_controls(prob, init.u.clone())?;
    let out = ilqr_inner(prob, &start, None, opts)?;
    let mut traj = out.traj;
    traj.diagnostics.ilqr_iterations = out.iterations;
    traj.diagnostics.failure = out.failure;
    traj.diagnostics.converged = traj.diagnostics.failure.is_none();
    Ok(traj)
}
