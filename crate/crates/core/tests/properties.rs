use nalgebra::Matrix2;
use proptest::prelude::*;
use qtraj_core::evaluation::{
    analytic_pulse, gate_error, lindblad_step, random_state, DensityMatrix, EvalContext, EvalSpec, LindbladModel,
    Perturbation, Pulse, StateDistribution,
};
use qtraj_core::noise::{pink_noise, PinkNoiseSpec, T1Interpolant};
use qtraj_core::quantum::C64;
use qtraj_core::{FluxoniumParams, GateKind, GateTarget};

fn distribution() -> impl Strategy<Value = StateDistribution> {
    prop_oneof![Just(StateDistribution::Haar), Just(StateDistribution::UniformBox)]
}

fn sample_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pulse_unitaries_are_unitary(steps in prop::collection::vec((-0.5f64..0.5, 0.01f64..5.0), 1..40)) {
        let (a, dt): (Vec<f64>, Vec<f64>) = steps.into_iter().unzip();
        let u = Pulse::from_steps(&a, &dt).unwrap().unitary(0.0139);
        prop_assert!((u.adjoint() * u - Matrix2::<C64>::identity()).camax() < 1e-12);
    }

    #[test]
    fn lindblad_steps_stay_physical(
        seed in 0u64..1000,
        a in -0.5f64..0.5,
        dt in 0.01f64..500.0,
        t1_us in 1e-3f64..1e3,
    ) {
        let model = LindbladModel { f_q: 0.0139, t1: Some(T1Interpolant::flat(t1_us).unwrap()) };
        let rho = DensityMatrix::pure(&random_state(seed, 0, StateDistribution::Haar)).unwrap();
        let out = lindblad_step(&rho, a, dt, &model).unwrap();
        prop_assert!((out.trace() - C64::from(1.0)).norm() < 1e-12);
        prop_assert!(out.hermiticity_error() < 1e-12);
        prop_assert!(out.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn random_states_are_normalized(seed: u64, index: u64, dist in distribution()) {
        let psi = random_state(seed, index, dist);
        prop_assert!((psi.norm_squared() - 1.0).abs() < 1e-14);
        prop_assert_eq!(psi, random_state(seed, index, dist));
    }

    #[test]
    fn pink_noise_hits_the_requested_std(seed: u64, sigma in 1e-7f64..1e-2, length in 64usize..4096) {
        let x = pink_noise(&PinkNoiseSpec { sigma, length, seed, ..Default::default() }).unwrap();
        prop_assert_eq!(x.len(), length);
        prop_assert!((sample_std(&x) / sigma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_gates_have_no_closed_system_error(seed: u64, dist in distribution()) {
        let p = FluxoniumParams::default();
        for kind in [GateKind::XHalf, GateKind::YHalf, GateKind::ZHalf] {
            let pulse = analytic_pulse(kind, &p, 0.1).unwrap();
            let spec = EvalSpec { n_states: 20, seed, distribution: dist, ..Default::default() };
            let r = gate_error(&pulse, &GateTarget::new(kind).unwrap(), &spec, &EvalContext::default()).unwrap();
            prop_assert!(r.mean < 1e-12);
        }
    }

    #[test]
    fn detuning_error_is_even_in_the_shift(seed in 0u64..100, rel in 1e-4f64..5e-2) {
        let p = FluxoniumParams::default();
        let pulse = analytic_pulse(GateKind::XHalf, &p, 0.1).unwrap();
        let target = GateTarget::new(GateKind::XHalf).unwrap();
        let ctx = EvalContext::default();
        let run = |r: f64| {
            let spec = EvalSpec { perturbation: Perturbation::Detuning { relative: r }, n_states: 16, seed, ..Default::default() };
            gate_error(&pulse, &target, &spec, &ctx).unwrap().mean
        };
        prop_assert_eq!(run(rel), run(-rel));
    }
}
