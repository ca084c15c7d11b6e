//! Sensitivity states against finite differences of the evaluation-side
//! propagator, which shares no code with the optimizer's dynamics.

use nalgebra::{DVector, Vector2};
use qtraj_core::evaluation::Pulse;
use qtraj_core::io::pulse_from_trajectory;
use qtraj_core::dynamics::UncertainTarget;
use qtraj_core::problems::{build_gate_problem, GateProblemConfig, Robustness};
use qtraj_core::quantum::C64;
use qtraj_core::solver::Trajectory;
use qtraj_core::{FluxoniumParams, GateKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rollout(target: UncertainTarget, dt: f64) -> (Vector2<C64>, Vector2<C64>, Pulse, FluxoniumParams) {
    let mut cfg = GateProblemConfig::new(GateKind::XHalf, 24.0);
    cfg.dt = dt;
    cfg.robustness = Robustness::Derivative { order: 1 };
    cfg.uncertainty.target = target;
    let params = FluxoniumParams::default();
    let gp = build_gate_problem(&cfg, &params).unwrap();
    // smooth bang-bang-ish acceleration profile, same in continuous time for every dt
    let n = gp.problem.n_knots - 1;
    let h = cfg.gate_time / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let coef: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0) * 4e-3).collect();
    let u: Vec<DVector<f64>> = (0..n)
        .map(|k| {
            let t = (k as f64 + 0.5) * h / cfg.gate_time;
            let v: f64 = coef.iter().enumerate().map(|(j, c)| c * (std::f64::consts::TAU * (j + 1) as f64 * t).sin()).sum();
            DVector::from_element(1, v)
        })
        .collect();
    let traj = Trajectory::from_controls(&gp.problem, u).unwrap();
    let layout = gp.layout();
    let last = traj.x.last().unwrap();
    let c = |o: usize| Vector2::new(C64::new(last[o], last[o + 2]), C64::new(last[o + 1], last[o + 3]));
    let deriv = c(layout.derivs[0].offset);
    let psi0 = Vector2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    let pulse = pulse_from_trajectory(&gp, &traj).unwrap();
    assert!(pulse.a.iter().any(|a| a.abs() > 0.05), "pulse should be non-trivial");
    (deriv, psi0, pulse, params)
}

fn fd_frequency(pulse: &Pulse, psi0: &Vector2<C64>, f: f64) -> Vector2<C64> {
    let eps = 1e-6;
    (pulse.unitary(f + eps) * psi0 - pulse.unitary(f - eps) * psi0) / C64::from(2.0 * eps)
}

fn fd_flux_offset(pulse: &Pulse, psi0: &Vector2<C64>, f: f64) -> Vector2<C64> {
    let eps = 1e-7;
    let shifted = |s: f64| {
        let mut p = pulse.clone();
        p.a.iter_mut().for_each(|a| *a += s);
        p.unitary(f) * psi0
    };
    (shifted(eps) - shifted(-eps)) / C64::from(2.0 * eps)
}

#[test]
fn frequency_sensitivity_matches_finite_difference_at_first_order() {
    let err = |dt: f64| {
        let (d, psi0, pulse, p) = rollout(UncertainTarget::QubitFrequency, dt);
        let fd = fd_frequency(&pulse, &psi0, p.f_q);
        (d - fd).norm() / fd.norm()
    };
    let (coarse, fine) = (err(0.1), err(0.05));
    assert!(fine < 2e-2, "relative error {fine}");
    assert!((coarse / fine - 2.0).abs() < 0.2, "{coarse} / {fine}");
}

#[test]
fn flux_sensitivity_matches_finite_difference_at_first_order() {
    let err = |dt: f64| {
        let (d, psi0, pulse, p) = rollout(UncertainTarget::FluxAdditive, dt);
        let fd = fd_flux_offset(&pulse, &psi0, p.f_q);
        (d - fd).norm() / fd.norm()
    };
    let (coarse, fine) = (err(0.1), err(0.05));
    assert!(fine < 2e-2, "relative error {fine}");
    assert!((coarse / fine - 2.0).abs() < 0.2, "{coarse} / {fine}");
}

#[test]
fn rollout_states_match_evaluation_propagator() {
    let (_, psi0, pulse, p) = rollout(UncertainTarget::QubitFrequency, 0.1);
    let mut cfg = GateProblemConfig::new(GateKind::XHalf, 24.0);
    cfg.robustness = Robustness::Derivative { order: 1 };
    // same rollout, compare the nominal |0⟩ column
    let gp = build_gate_problem(&cfg, &p).unwrap();
    let u: Vec<DVector<f64>> = pulse.d2a[..pulse.n_steps()].iter().map(|v| DVector::from_element(1, *v)).collect();
    let traj = Trajectory::from_controls(&gp.problem, u).unwrap();
    let last = traj.x.last().unwrap();
    let o = gp.layout().state(0);
    let psi = Vector2::new(C64::new(last[o], last[o + 2]), C64::new(last[o + 1], last[o + 3]));
    let expect = pulse.unitary(p.f_q) * psi0;
    assert!((psi - expect).norm() < 1e-12);
}
