//! Fixtures shared by the benchmarks in benches/.

use nalgebra::DVector;
use qtraj_core::problems::{build_gate_problem, GateProblem, GateProblemConfig, Robustness};
use qtraj_core::solver::Trajectory;
use qtraj_core::{FluxoniumParams, GateKind};

/// X/2 over `gate_time` ns with first-order derivative robustness.
pub fn robust_x_half(gate_time: f64) -> GateProblem {
    let mut cfg = GateProblemConfig::new(GateKind::XHalf, gate_time);
    cfg.robustness = Robustness::Derivative { order: 1 };
    build_gate_problem(&cfg, &FluxoniumParams::default()).expect("valid config")
}

/// Deterministic, non-trivial trajectory to linearize around.
pub fn wiggle(gp: &GateProblem) -> Trajectory {
    let n = gp.problem.n_knots - 1;
    let u = (0..n).map(|k| DVector::from_element(1, 2e-3 * (k as f64 * 0.07).sin())).collect();
    Trajectory::from_controls(&gp.problem, u).expect("rollout")
}
