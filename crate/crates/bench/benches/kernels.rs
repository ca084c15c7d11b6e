use criterion::{black_box, criterion_group, criterion_main, Criterion};
use qtraj_bench::{robust_x_half, wiggle};
use qtraj_core::evaluation::{analytic_pulse, cumulative_error, EvalContext, EvalSpec, LindbladModel, Perturbation};
use qtraj_core::noise::{pink_noise, PinkNoiseSpec, T1Interpolant};
use qtraj_core::quantum::qubit_propagator;
use qtraj_core::solver::{backward_pass, linearize_problem};
use qtraj_core::{FluxoniumParams, GateKind, GateTarget};

fn propagators(c: &mut Criterion) {
    c.bench_function("qubit_propagator", |b| b.iter(|| qubit_propagator(black_box(0.21), 0.0139, 0.1)));
    let model = LindbladModel { f_q: 0.0139, t1: Some(T1Interpolant::synthetic()) };
    c.bench_function("lindblad_step_map", |b| b.iter(|| model.step_map(black_box(0.21), 0.1).unwrap()));
}

fn solver_kernels(c: &mut Criterion) {
    let gp = robust_x_half(24.0);
    let traj = wiggle(&gp);
    let mut g = c.benchmark_group("robust_x_half_24ns");
    g.sample_size(10);
    g.bench_function("rollout", |b| b.iter(|| gp.problem.rollout(black_box(&traj.u)).unwrap()));
    g.bench_function("linearize", |b| b.iter(|| linearize_problem(&gp.problem, black_box(&traj)).unwrap()));
    let (stages, terminal) = linearize_problem(&gp.problem, &traj).unwrap();
    g.bench_function("backward_pass", |b| b.iter(|| backward_pass(black_box(&stages), &terminal, 1e-6).unwrap()));
    g.finish();
}

fn noise_and_evaluation(c: &mut Criterion) {
    let mut g = c.benchmark_group("evaluation");
    g.sample_size(10);
    let spec = PinkNoiseSpec { length: 1 << 16, ..Default::default() };
    g.bench_function("pink_noise_65536", |b| b.iter(|| pink_noise(black_box(&spec)).unwrap()));
    let pulse = analytic_pulse(GateKind::XHalf, &FluxoniumParams::default(), 0.1).unwrap();
    let target = GateTarget::new(GateKind::XHalf).unwrap();
    let ctx = EvalContext::default();
    for (name, perturbation) in [
        ("depolarization_100_states", Perturbation::Depolarization),
        ("pink_noise_100_states_10_gates", Perturbation::PinkNoise { sigma: 2.5e-5, dt_ns: 0.1, filter_taps: None }),
    ] {
        let spec = EvalSpec { perturbation, n_states: 100, gate_count: 10, seed: 1, ..Default::default() };
        g.bench_function(name, |b| b.iter(|| cumulative_error(&pulse, &target, black_box(&spec), &ctx).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, propagators, solver_kernels, noise_and_evaluation);
criterion_main!(benches);
