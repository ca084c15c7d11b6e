//! Independent scoring of pulses.
//!
//! Everything here steps pulses with the quantum-core propagator only; none
//! of the optimizer's dynamics code is reused, so agreement between the two
//! is a meaningful check.

mod lindblad;
mod pulse;

use nalgebra::{Matrix2, Matrix4, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{PinkNoiseGenerator, PinkNoiseSpec, T1Interpolant};
use crate::quantum::{qubit_propagator, FluxoniumParams, GateTarget, QuantumState, C64};

pub use lindblad::{lindblad_step, DensityMatrix, LindbladModel};
pub use pulse::{analytic_pulse, constant_pulse, Pulse};

/// How random initial states are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateDistribution {
    /// Normalized complex Gaussian amplitudes.
    #[default]
    Haar,
    /// Real-isomorphic components uniform in [−1, 1], then normalized.
    UniformBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    None,
    /// f_q → f_q(1 ± relative), averaged over both signs.
    Detuning { relative: f64 },
    /// Additive 1/f flux noise, sampled on its own time grid and held over
    /// each pulse step.
    PinkNoise {
        #[serde(default = "default_noise_sigma")]
        sigma: f64,
        #[serde(default = "default_noise_dt")]
        dt_ns: f64,
        #[serde(default)]
        filter_taps: Option<usize>,
    },
    /// Lindblad relaxation with the context's T1 curve.
    Depolarization,
}

fn default_noise_sigma() -> f64 {
    2.5e-5
}

fn default_noise_dt() -> f64 {
    0.1
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub perturbation: Perturbation,
    pub n_states: usize,
    pub gate_count: usize,
    pub seed: u64,
    pub distribution: StateDistribution,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            perturbation: Perturbation::None,
            n_states: 1000,
            gate_count: 1,
            seed: 0,
            distribution: StateDistribution::Haar,
        }
    }
}

impl EvalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::Config("n_states must be at least 1".into()));
        }
        if self.gate_count == 0 {
            return Err(Error::Config("gate_count must be at least 1".into()));
        }
        match self.perturbation {
            Perturbation::Detuning { relative } if !relative.is_finite() => {
                Err(Error::Config("detuning must be finite".into()))
            }
            Perturbation::PinkNoise { sigma, dt_ns, .. } if !(sigma >= 0.0 && dt_ns > 0.0) => {
                Err(Error::Config("noise sigma must be non-negative and dt_ns positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Physical parameters the evaluation runs against.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext {
    pub params: FluxoniumParams,
    pub t1: T1Interpolant,
}

impl Default for EvalContext {
    fn default() -> Self {
        Self { params: FluxoniumParams::default(), t1: T1Interpolant::synthetic() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Mean single-application error.
    pub mean: f64,
    /// Mean error after 1, 2, …, gate_count applications.
    pub cumulative: Vec<f64>,
    pub n_states: usize,
    pub seed: u64,
    pub spec: EvalSpec,
    pub duration_ns: f64,
}

/// The `index`-th random state of the stream selected by `seed`.
pub fn random_state(seed: u64, index: u64, dist: StateDistribution) -> QuantumState {
    draw_state(&mut state_rng(seed, index), dist)
}

fn state_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw_state<R: Rng>(rng: &mut R, dist: StateDistribution) -> QuantumState {
    let mut v = [0.0; 4];
    for x in &mut v {
        *x = match dist {
            StateDistribution::Haar => rng.sample(StandardNormal),
            StateDistribution::UniformBox => rng.gen_range(-1.0..1.0),
        };
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= n;
    }
    QuantumState::from_slice(&v).expect("even length")
}

fn to_vec2(psi: &QuantumState) -> Vector2<C64> {
    let c = psi.to_complex();
    Vector2::new(c[0], c[1])
}

fn infidelity(target: &Vector2<C64>, psi: &Vector2<C64>) -> f64 {
    (1.0 - target.dotc(psi).norm_sqr()).max(0.0)
}

/// Integrated depolarization rate Σ dt_k / T1(a_k), with flux held at the
/// step start.
pub fn d1_metric(pulse: &Pulse, t1: &T1Interpolant) -> Result<f64> {
    pulse.validate()?;
    let mut d1 = 0.0;
    for k in 0..pulse.n_steps() {
        let t = t1.t1_ns(pulse.a[k]);
        if !(t > 0.0) {
            return Err(Error::Model(format!("non-positive T1 at flux {}", pulse.a[k])));
        }
        d1 += pulse.dt[k] / t;
    }
    Ok(d1)
}

/// Mean single-application error over `spec.n_states` random states.
pub fn gate_error(pulse: &Pulse, target: &GateTarget, spec: &EvalSpec, ctx: &EvalContext) -> Result<ErrorReport> {
    cumulative_error(pulse, target, &EvalSpec { gate_count: 1, ..spec.clone() }, ctx)
}

/// Gate-error per application count when the pulse is repeated
/// `spec.gate_count` times.
pub fn cumulative_error(
    pulse: &Pulse,
    target: &GateTarget,
    spec: &EvalSpec,
    ctx: &EvalContext,
) -> Result<ErrorReport> {
    pulse.validate()?;
    spec.validate()?;
    ctx.params.validate()?;
    if target.matrix().levels() != 2 {
        return Err(Error::Config("evaluation supports qubit targets only".into()));
    }
    let count = spec.gate_count;
    let ut = target.qubit_matrix();
    let f_q = ctx.params.f_q;

    let evolve: Box<dyn Fn(&mut ChaCha8Rng, &Vector2<C64>) -> Result<Vec<f64>> + Sync> = match &spec.perturbation {
        Perturbation::None => {
            let u = pulse.unitary(f_q);
            Box::new(move |_, psi| Ok(coherent_errors(&u, &ut, psi, count)))
        }
        Perturbation::Detuning { relative } => {
            let up = pulse.unitary(f_q * (1.0 + relative));
            let um = pulse.unitary(f_q * (1.0 - relative));
            Box::new(move |_, psi| {
                let ep = coherent_errors(&up, &ut, psi, count);
                let em = coherent_errors(&um, &ut, psi, count);
                Ok(ep.iter().zip(&em).map(|(a, b)| 0.5 * (a + b)).collect())
            })
        }
        Perturbation::PinkNoise { sigma, dt_ns, filter_taps } => {
            let total = pulse.duration() * count as f64;
            let length = (total / dt_ns).ceil() as usize + 1;
            let gen = PinkNoiseGenerator::new(&PinkNoiseSpec {
                sigma: *sigma,
                dt_ns: *dt_ns,
                length,
                seed: 0,
                filter_taps: *filter_taps,
            })?;
            let dt_noise = *dt_ns;
            let pulse = pulse.clone();
            Box::new(move |rng, psi| {
                let noise = gen.generate(rng)?;
                Ok(noisy_errors(&pulse, f_q, &ut, psi, count, &noise, dt_noise))
            })
        }
        Perturbation::Depolarization => {
            let model = LindbladModel { f_q, t1: Some(ctx.t1.clone()) };
            let mut s = Matrix4::<C64>::identity();
            for k in 0..pulse.n_steps() {
                s = model.step_map(pulse.a[k], pulse.dt[k])? * s;
            }
            Box::new(move |_, psi| Ok(dissipative_errors(&s, &ut, psi, count)))
        }
    };

    let per_state: Vec<Vec<f64>> = (0..spec.n_states)
        .into_par_iter()
        .map(|i| {
            let mut rng = state_rng(spec.seed, i as u64);
            let psi = to_vec2(&draw_state(&mut rng, spec.distribution));
            evolve(&mut rng, &psi)
        })
        .collect::<Result<_>>()?;

    // ordered reduction keeps results independent of the thread count
    let mut cumulative = vec![0.0; count];
    for errs in &per_state {
        for (c, e) in cumulative.iter_mut().zip(errs) {
            *c += e;
        }
    }
    for c in &mut cumulative {
        *c /= spec.n_states as f64;
    }
    Ok(ErrorReport {
        mean: cumulative[0],
        cumulative,
        n_states: spec.n_states,
        seed: spec.seed,
        spec: spec.clone(),
        duration_ns: pulse.duration(),
    })
}

/// Mean single-application error of a known gate unitary over the same
/// random states `cumulative_error` would draw for `spec`.
pub fn unitary_gate_error(u: &Matrix2<C64>, target: &GateTarget, spec: &EvalSpec) -> Result<f64> {
    spec.validate()?;
    let ut = target.qubit_matrix();
    let errs: Vec<f64> = (0..spec.n_states)
        .into_par_iter()
        .map(|i| {
            let psi = to_vec2(&draw_state(&mut state_rng(spec.seed, i as u64), spec.distribution));
            coherent_errors(u, &ut, &psi, 1)[0]
        })
        .collect();
    Ok(errs.iter().sum::<f64>() / spec.n_states as f64)
}

fn coherent_errors(u: &Matrix2<C64>, ut: &Matrix2<C64>, psi0: &Vector2<C64>, count: usize) -> Vec<f64> {
    let mut psi = *psi0;
    let mut tgt = *psi0;
    (0..count)
        .map(|_| {
            psi = u * psi;
            tgt = ut * tgt;
            infidelity(&tgt, &psi)
        })
        .collect()
}

fn noisy_errors(
    pulse: &Pulse,
    f_q: f64,
    ut: &Matrix2<C64>,
    psi0: &Vector2<C64>,
    count: usize,
    noise: &[f64],
    dt_noise: f64,
) -> Vec<f64> {
    let period = pulse.duration();
    let last = noise.len() - 1;
    let mut psi = *psi0;
    let mut tgt = *psi0;
    (0..count)
        .map(|g| {
            let t0 = g as f64 * period;
            for k in 0..pulse.n_steps() {
                let idx = (((t0 + pulse.t[k]) / dt_noise + 1e-9).floor() as usize).min(last);
                psi = qubit_propagator(pulse.a[k] + noise[idx], f_q, pulse.dt[k]) * psi;
            }
            tgt = ut * tgt;
            infidelity(&tgt, &psi)
        })
        .collect()
}

fn dissipative_errors(s: &Matrix4<C64>, ut: &Matrix2<C64>, psi0: &Vector2<C64>, count: usize) -> Vec<f64> {
    let mut rho = DensityMatrix(psi0 * psi0.adjoint()).vec();
    let mut tgt = *psi0;
    (0..count)
        .map(|_| {
            rho = s * rho;
            tgt = ut * tgt;
            let r = DensityMatrix::from_vec(&rho).0;
            (1.0 - (tgt.adjoint() * r * tgt)[(0, 0)].re).clamp(0.0, 1.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub relative_detuning: f64,
    pub mean: f64,
}

/// Single-gate error at each relative detuning, in input order.
pub fn detuning_sweep(
    pulse: &Pulse,
    target: &GateTarget,
    detunings: &[f64],
    spec: &EvalSpec,
    ctx: &EvalContext,
) -> Result<Vec<SweepPoint>> {
    detunings
        .iter()
        .map(|&d| {
            let s = EvalSpec { perturbation: Perturbation::Detuning { relative: d }, gate_count: 1, ..spec.clone() };
            Ok(SweepPoint { relative_detuning: d, mean: gate_error(pulse, target, &s, ctx)?.mean })
        })
        .collect()
}
