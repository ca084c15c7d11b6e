//! Two-stage constrained trajectory optimization: an augmented-Lagrangian
//! outer loop around iLQR, followed by projected-Newton polishing.

mod alm;
mod banded;
mod ilqr;
mod problem;
mod projection;

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use alm::{alm_solve, Multipliers};
pub use banded::BandedCholesky;
pub use ilqr::{backward_pass, forward_pass, ilqr_solve, linearize_problem, BackwardResult, Gains, StageModel};
pub use problem::{
    max_violation, violation, Constraint, ConstraintKind, ControlEquality, CostExpansion, CostFunction,
    DiscreteDynamics, NormConstraint, QuadForm, SquaredControlBound, StageCost, StageSet, StateBound,
    StateEquality, TrajectoryProblem,
};
pub use projection::projected_newton;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Final max-violation target of the projection stage.
    pub tolerance: f64,
    /// ALM stops once violation falls below this.
    pub intermediate_tolerance: f64,
    /// Relative cost decrease below which iLQR stops.
    pub cost_tolerance: f64,
    /// Max |d_k| relative to |u_k| + 1 below which iLQR stops.
    pub gradient_tolerance: f64,
    pub max_ilqr_iterations: usize,
    pub max_outer_iterations: usize,
    pub max_projection_iterations: usize,
    pub initial_penalty: f64,
    pub penalty_scaling: f64,
    pub max_penalty: f64,
    pub line_search_lower: f64,
    pub line_search_upper: f64,
    pub max_backtracks: usize,
    pub regularization_min: f64,
    pub regularization_max: f64,
    pub regularization_factor: f64,
    /// Skip the projection stage.
    pub skip_projection: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            intermediate_tolerance: 1e-6,
            cost_tolerance: 1e-9,
            gradient_tolerance: 1e-7,
            max_ilqr_iterations: 300,
            max_outer_iterations: 30,
            max_projection_iterations: 50,
            initial_penalty: 1.0,
            penalty_scaling: 10.0,
            max_penalty: 1e12,
            line_search_lower: 1e-4,
            line_search_upper: 10.0,
            max_backtracks: 20,
            regularization_min: 1e-8,
            regularization_max: 1e8,
            regularization_factor: 10.0,
            skip_projection: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.intermediate_tolerance > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if !(self.penalty_scaling > 1.0) || !(self.initial_penalty > 0.0) {
            return Err(Error::Config("penalty must be positive and scale by a factor > 1".into()));
        }
        if !(self.regularization_min > 0.0 && self.regularization_max > self.regularization_min) {
            return Err(Error::Config("invalid regularization bounds".into()));
        }
        if !(self.regularization_factor > 1.0) {
            return Err(Error::Config("regularization factor must exceed 1".into()));
        }
        if !(0.0 < self.line_search_lower && self.line_search_lower < self.line_search_upper) {
            return Err(Error::Config("invalid line-search acceptance interval".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub alm_seconds: f64,
    pub projection_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub cost: f64,
    pub max_violation: f64,
    pub ilqr_iterations: usize,
    pub outer_iterations: usize,
    pub projection_iterations: usize,
    /// Objective change introduced by the projection stage.
    pub projection_cost_change: f64,
    pub wall_time: StageTimes,
    pub converged: bool,
    pub failure: Option<String>,
}

/// Knot states, controls, and how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    /// Rolls out `u` from the problem's initial state.
    pub fn from_controls(prob: &TrajectoryProblem, u: Vec<DVector<f64>>) -> Result<Self> {
        if u.len() + 1 != prob.n_knots || u.iter().any(|v| v.len() != prob.control_dim()) {
            return Err(Error::InvalidInput("control sequence does not match the horizon".into()));
        }
        let x = prob.rollout(&u)?;
        let mut t = Self { x, u, diagnostics: Diagnostics::default() };
        t.refresh(prob);
        Ok(t)
    }

    pub fn refresh(&mut self, prob: &TrajectoryProblem) {
        self.diagnostics.cost = prob.objective(&self.x, &self.u);
        self.diagnostics.max_violation = prob.max_violation(&self.x, &self.u);
    }

    pub fn n_knots(&self) -> usize {
        self.x.len()
    }
}

/// ALM followed by projection; diagnostics record per-stage wall time.
pub fn solve(prob: &TrajectoryProblem, init: &Trajectory, opts: &SolverOptions) -> Result<Trajectory> {
    prob.validate()?;
    opts.validate()?;
    let start = Instant::now();
    let mut traj = alm_solve(prob, init, opts)?;
    let alm_seconds = start.elapsed().as_secs_f64();
    let alm_failure = traj.diagnostics.failure.take();

    let proj_start = Instant::now();
    if !opts.skip_projection {
        traj = projected_newton(prob, &traj, opts)?;
    }
    let projection_seconds = proj_start.elapsed().as_secs_f64();

    let d = &mut traj.diagnostics;
    d.wall_time = StageTimes { alm_seconds, projection_seconds, total_seconds: start.elapsed().as_secs_f64() };
    d.converged = d.max_violation <= opts.tolerance;
    if !d.converged && d.failure.is_none() {
        d.failure = Some(alm_failure.unwrap_or_else(|| {
            format!("max violation {:.3e} above tolerance {:.1e}", d.max_violation, opts.tolerance)
        }));
    }
    Ok(traj)
}
