//! Assembly of the single-qubit gate problem and its robustness,
//! depolarization and free-time variants.

pub mod unscented;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    AugmentedState, GateDynamics, StateLayout, StepMode, UncertainTarget, FLUX, FLUX_DERIV, FLUX_INT,
};
use crate::error::{Error, Result};
use crate::noise::T1Interpolant;
use crate::quantum::{operator_basis, FluxoniumParams, GateKind, GateTarget, QuantumState};
use crate::solver::{
    Constraint, ConstraintKind, CostFunction, NormConstraint, QuadForm, SquaredControlBound, StageSet, StateBound,
    StateEquality, Trajectory, TrajectoryProblem,
};

pub use unscented::{
    initial_sigma_states, sample_mean_cov, sigma_signs, unscented_propagate, unscented_resample, SigmaPoints,
    UnscentedConfig, UnscentedStep,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialStates {
    /// |0⟩ and |1⟩.
    Pair,
    /// Four states whose outer products span the operator space.
    OperatorBasis,
}

impl InitialStates {
    pub fn states(self) -> Vec<QuantumState> {
        match self {
            Self::Pair => vec![QuantumState::basis(2, 0), QuantumState::basis(2, 1)],
            Self::OperatorBasis => operator_basis().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Robustness {
    None,
    /// Extra states evolved at the parameter shifted by ±σ, penalized by
    /// their infidelity to the target.
    Sampling,
    /// Sigma points whose spread around the nominal state is penalized.
    Unscented {
        #[serde(default)]
        config: UnscentedConfig,
    },
    /// Sensitivities of orders 1..=order, penalized by their norms.
    Derivative { order: usize },
}

impl Default for Robustness {
    fn default() -> Self {
        Self::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Uncertainty {
    pub target: UncertainTarget,
    /// Spread of the uncertain parameter in GHz; defaults to 1% of f_q for
    /// the qubit frequency.
    pub sigma: Option<f64>,
}

impl Default for Uncertainty {
    fn default() -> Self {
        Self { target: UncertainTarget::QubitFrequency, sigma: None }
    }
}

impl Uncertainty {
    pub fn resolved_sigma(&self, p: &FluxoniumParams) -> f64 {
        self.sigma.unwrap_or(match self.target {
            UncertainTarget::QubitFrequency => 0.01 * p.f_q,
            UncertainTarget::FluxAdditive => 2.5e-5,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    /// Running and terminal weight on the nominal quantum states.
    pub state: f64,
    /// Weights on (∫a, a, da/dt).
    pub flux: [f64; 3],
    /// Weight on d²a/dt².
    pub control: f64,
    /// Weight on √Δt in free-time mode (a linear cost on duration).
    pub duration: f64,
    pub sampling: f64,
    pub unscented: f64,
    pub derivative: f64,
    pub depolarization: f64,
    /// Knot-N overrides of the per-knot weights above.
    pub terminal: TerminalWeights,
}

/// Weights applied at the final knot only; `None` keeps the running value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminalWeights {
    pub state: Option<f64>,
    pub sampling: Option<f64>,
    pub unscented: Option<f64>,
    pub derivative: Option<f64>,
    pub depolarization: Option<f64>,
}

impl Weights {
    fn at_terminal(&self) -> Weights {
        let t = &self.terminal;
        Weights {
            state: t.state.unwrap_or(self.state),
            sampling: t.sampling.unwrap_or(self.sampling),
            unscented: t.unscented.unwrap_or(self.unscented),
            derivative: t.derivative.unwrap_or(self.derivative),
            depolarization: t.depolarization.unwrap_or(self.depolarization),
            ..self.clone()
        }
    }
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            state: 1.0,
            flux: [1e-1, 1e-1, 1e-2],
            control: 1e-2,
            duration: 1e-2,
            sampling: 1.0,
            unscented: 1.0,
            derivative: 1.0,
            depolarization: 1.0,
            terminal: TerminalWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Depolarization {
    pub enabled: bool,
    /// `flux_GHz,T1_us` knot file; the built-in synthetic curve if absent.
    pub t1_csv: Option<std::path::PathBuf>,
}

impl Default for Depolarization {
    fn default() -> Self {
        Self { enabled: false, t1_csv: None }
    }
}

impl Depolarization {
    pub fn t1(&self) -> Result<T1Interpolant> {
        match &self.t1_csv {
            Some(p) => T1Interpolant::from_csv(p),
            None => Ok(T1Interpolant::synthetic()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeOptimal {
    pub enabled: bool,
    /// Bounds on each step duration as multiples of the nominal dt.
    pub min_factor: f64,
    pub max_factor: f64,
}

impl Default for TimeOptimal {
    fn default() -> Self {
        Self { enabled: false, min_factor: 0.25, max_factor: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateProblemConfig {
    pub gate: GateKind,
    /// Gate duration in ns (the initial duration in free-time mode).
    pub gate_time: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_initial_states")]
    pub initial_states: InitialStates,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub robustness: Robustness,
    #[serde(default)]
    pub uncertainty: Uncertainty,
    #[serde(default)]
    pub depolarization: Depolarization,
    #[serde(default)]
    pub time_optimal: TimeOptimal,
    /// Seed of the initial control guess.
    #[serde(default)]
    pub seed: u64,
    /// Amplitude of the uniform noise in the initial guess, GHz/ns².
    #[serde(default = "default_init_noise")]
    pub init_noise: f64,
}

fn default_dt() -> f64 {
    0.1
}

fn default_initial_states() -> InitialStates {
    InitialStates::Pair
}

fn default_init_noise() -> f64 {
    1e-4
}

impl GateProblemConfig {
    pub fn new(gate: GateKind, gate_time: f64) -> Self {
        Self {
            gate,
            gate_time,
            dt: default_dt(),
            initial_states: default_initial_states(),
            weights: Weights::default(),
            robustness: Robustness::None,
            uncertainty: Uncertainty::default(),
            depolarization: Depolarization::default(),
            time_optimal: TimeOptimal::default(),
            seed: 0,
            init_noise: default_init_noise(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gate_time > 0.0 && self.gate_time.is_finite()) {
            return Err(Error::Config("gate_time must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt <= self.gate_time) {
            return Err(Error::Config("dt must be positive and no larger than gate_time".into()));
        }
        if self.gate == GateKind::Custom {
            return Err(Error::Config("custom gates are supported through the library API only".into()));
        }
        let w = &self.weights;
        let t = w.at_terminal();
        let all = [
            w.state,
            w.flux[0],
            w.flux[1],
            w.flux[2],
            w.sampling,
            w.unscented,
            w.derivative,
            w.depolarization,
            t.state,
            t.sampling,
            t.unscented,
            t.derivative,
            t.depolarization,
        ];
        if all.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("weights must be finite and non-negative".into()));
        }
        if !(w.control > 0.0) || (self.time_optimal.enabled && !(w.duration > 0.0)) {
            return Err(Error::Config("control weights must be positive".into()));
        }
        match &self.robustness {
            Robustness::Derivative { order } if !(1..=2).contains(order) => {
                return Err(Error::Config(format!("derivative order must be 1 or 2, got {order}")));
            }
            Robustness::Unscented { config } => config.validate()?,
            Robustness::Sampling if self.initial_states != InitialStates::OperatorBasis => {
                return Err(Error::Config("sampling requires the operator-basis initial states".into()));
            }
            _ => {}
        }
        if let Some(s) = self.uncertainty.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config("uncertainty sigma must be non-negative".into()));
            }
        }
        let to = &self.time_optimal;
        if to.enabled && !(0.0 < to.min_factor && to.min_factor <= 1.0 && to.max_factor >= 1.0) {
            return Err(Error::Config("free-time bounds must bracket the nominal dt".into()));
        }
        if !(self.init_noise >= 0.0) {
            return Err(Error::Config("init_noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Knot count and the step that divides gate_time evenly.
    pub fn grid(&self) -> (usize, f64) {
        let steps = (self.gate_time / self.dt).round().max(1.0) as usize;
        (steps + 1, self.gate_time / steps as f64)
    }
}

/// One registered constraint as listed by [`GateProblem::audit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub name: String,
    pub kind: String,
    pub stages: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCost {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub n_knots: usize,
    pub dt: f64,
    pub state_dim: usize,
    pub control_dim: usize,
    pub constraints: Vec<AuditEntry>,
    pub costs: Vec<AuditCost>,
}

impl Audit {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "knots: {}\ndt: {} ns\nstate dim: {}\ncontrol dim: {}\nconstraints:\n",
            self.n_knots, self.dt, self.state_dim, self.control_dim
        );
        for c in &self.constraints {
            s.push_str(&format!("  {:<16} {:<10} {:<12} dim {}\n", c.name, c.kind, c.stages, c.dim));
        }
        s.push_str("costs:\n");
        for c in &self.costs {
            s.push_str(&format!("  {:<16} weight {}\n", c.name, c.weight));
        }
        s
    }
}

/// A built gate problem together with the pieces needed to interpret its
/// trajectories.
#[derive(Debug, Clone)]
pub struct GateProblem {
    pub config: GateProblemConfig,
    pub params: FluxoniumParams,
    pub target: GateTarget,
    pub dynamics: Arc<GateDynamics>,
    pub problem: TrajectoryProblem,
    pub initial_states: Vec<QuantumState>,
    pub target_states: Vec<QuantumState>,
    /// Nominal step duration.
    pub dt: f64,
}

/// Constraint names; the dynamics are enforced by construction and listed
/// separately in the audit.
pub mod names {
    pub const DYNAMICS: &str = "dynamics";
    pub const INITIAL_STATES: &str = "initial_states";
    pub const INITIAL_FLUX: &str = "initial_flux";
    pub const TARGET_STATES: &str = "target_states";
    pub const TERMINAL_FLUX: &str = "terminal_flux";
    pub const NORMALIZATION: &str = "normalization";
    pub const FLUX_BOUND: &str = "flux_bound";
    pub const DURATION_BOUNDS: &str = "duration_bounds";
}

/// Real-isomorphic vectors a, b with 1 − |⟨ψ_T|ψ⟩|² = ψᵀ(I − aaᵀ − bbᵀ)ψ
/// for unit ψ.
fn infidelity_form(target: &QuantumState) -> DMatrix<f64> {
    let t = target.data();
    let n = t.len() / 2;
    let a = t.clone();
    let mut b = DVector::zeros(2 * n);
    for k in 0..n {
        b[k] = -t[n + k];
        b[n + k] = t[k];
    }
    DMatrix::identity(2 * n, 2 * n) - &a * a.transpose() - &b * b.transpose()
}

/// Σ_j ‖ψ_j − ψ‖² over [ψ; ψ_1 … ψ_J] as a block matrix.
fn spread_form(n_samples: usize) -> DMatrix<f64> {
    let q = 4;
    let dim = q * (n_samples + 1);
    let mut m = DMatrix::zeros(dim, dim);
    let eye = DMatrix::<f64>::identity(q, q);
    m.view_mut((0, 0), (q, q)).copy_from(&(&eye * n_samples as f64));
    for j in 1..=n_samples {
        m.view_mut((0, q * j), (q, q)).copy_from(&(-&eye));
        m.view_mut((q * j, 0), (q, q)).copy_from(&(-&eye));
        m.view_mut((q * j, q * j), (q, q)).copy_from(&eye);
    }
    m
}

fn stage_label(s: &StageSet) -> &'static str {
    match s {
        StageSet::First => "first",
        StageSet::Last => "last",
        StageSet::All => "all",
        StageSet::Running => "running",
        StageSet::AfterFirst => "after_first",
    }
}

/// Diagonal state weights and robustness quadratic forms of one knot.
fn stage_weights(layout: &StateLayout, w: &Weights, target_states: &[QuantumState]) -> (DVector<f64>, Vec<QuadForm>) {
    let mut q = DVector::zeros(layout.dim);
    q.rows_mut(0, 4 * layout.n_states).fill(w.state);
    for (j, wf) in w.flux.iter().enumerate() {
        q[layout.flux + j] = *wf;
    }
    if let Some(o) = layout.d1 {
        q[o] = w.depolarization;
    }
    for b in &layout.derivs {
        q.rows_mut(b.offset, 4).fill(w.derivative);
    }
    let mut quad = Vec::new();
    for b in &layout.samples {
        quad.push(QuadForm {
            name: format!("sampling_{}", b.source),
            indices: (b.offset..b.offset + 4).collect(),
            matrix: infidelity_form(&target_states[b.source]),
            weight: 2.0 * w.sampling,
        });
    }
    if let Some(ub) = &layout.unscented {
        let c0 = layout.state(ub.carrier);
        let indices = (c0..c0 + 4).chain(ub.offset..ub.offset + 4 * ub.n_samples).collect();
        quad.push(QuadForm {
            name: "unscented_spread".into(),
            indices,
            matrix: spread_form(ub.n_samples),
            weight: 2.0 * w.unscented,
        });
    }
    (q, quad)
}

/// Builds the trajectory problem for `cfg`.
pub fn build_gate_problem(cfg: &GateProblemConfig, params: &FluxoniumParams) -> Result<GateProblem> {
    cfg.validate()?;
    params.validate()?;
    let target = GateTarget::new(cfg.gate)?;
    let (n_knots, dt) = cfg.grid();
    let initial_states = cfg.initial_states.states();
    let target_states = initial_states.iter().map(|s| target.target_state(s)).collect::<Result<Vec<_>>>()?;
    let n_states = initial_states.len();
    let sigma = cfg.uncertainty.resolved_sigma(params);

    let mut layout = StateLayout::new(n_states);
    if cfg.depolarization.enabled {
        layout = layout.with_d1();
    }
    match &cfg.robustness {
        Robustness::None => {}
        Robustness::Sampling => layout = layout.with_samples(&[-sigma, sigma]),
        Robustness::Unscented { config } => {
            if !(sigma > 0.0) {
                return Err(Error::Config("unscented sampling needs a positive parameter spread".into()));
            }
            layout = layout.with_unscented(0, config.beta, sigma)
        }
        Robustness::Derivative { order } => layout = layout.with_derivs(&[0], *order),
    }

    let mode = if cfg.time_optimal.enabled { StepMode::TimeOptimal } else { StepMode::Fixed { dt } };
    let mut dynamics = GateDynamics::new(*params, layout.clone(), mode);
    dynamics.deriv_target = cfg.uncertainty.target;
    dynamics.sample_target = cfg.uncertainty.target;
    if cfg.depolarization.enabled {
        dynamics.t1 = Some(cfg.depolarization.t1()?);
    }
    let nx = layout.dim;
    let nu = dynamics.control_dim();

    // initial augmented state
    let mut sample_states: Vec<QuantumState> =
        layout.samples.iter().map(|b| initial_states[b.source].clone()).collect();
    if let (Some(ub), Robustness::Unscented { config }) = (&layout.unscented, &cfg.robustness) {
        let p1 = DMatrix::identity(4, 4) * config.initial_std.powi(2);
        let pts = initial_sigma_states(initial_states[ub.carrier].data(), &p1, 1, config.beta)?;
        debug_assert_eq!(pts.len(), ub.n_samples);
        sample_states.extend(pts.into_iter().map(QuantumState::from_real_iso).collect::<Result<Vec<_>>>()?);
    }
    let x0 = layout.pack(&AugmentedState {
        states: initial_states.clone(),
        flux_int: 0.0,
        flux: 0.0,
        flux_deriv: 0.0,
        d1: 0.0,
        deriv_states: vec![DVector::zeros(4); layout.derivs.len()],
        sample_states,
    })?;

    // costs
    let mut cost = CostFunction::new(nx, nu);
    for (i, t) in target_states.iter().enumerate() {
        cost.x_target.rows_mut(layout.state(i), 4).copy_from(t.data());
    }
    let (q, quad) = stage_weights(&layout, &cfg.weights, &target_states);
    let (qn, quadn) = stage_weights(&layout, &cfg.weights.at_terminal(), &target_states);
    cost.running.q = q;
    cost.running.quad = quad;
    cost.terminal.q = qn;
    cost.terminal.quad = quadn;
    cost.running.r[0] = cfg.weights.control;
    if nu == 2 {
        cost.running.r[1] = cfg.weights.duration;
    }

    // constraints
    let state_idx: Vec<usize> = (0..4 * n_states).collect();
    let initial_values: Vec<f64> = initial_states.iter().flat_map(|s| s.as_slice().to_vec()).collect();
    let target_values: Vec<f64> = target_states.iter().flat_map(|s| s.as_slice().to_vec()).collect();
    let fo = layout.flux;
    let mut constraints: Vec<Arc<dyn Constraint>> = vec![
        Arc::new(StateEquality {
            name: names::INITIAL_STATES.into(),
            indices: state_idx.clone(),
            values: initial_values,
            stages: StageSet::First,
        }),
        Arc::new(StateEquality {
            name: names::INITIAL_FLUX.into(),
            indices: vec![fo + FLUX_INT, fo + FLUX, fo + FLUX_DERIV],
            values: vec![0.0; 3],
            stages: StageSet::First,
        }),
        Arc::new(StateEquality {
            name: names::TARGET_STATES.into(),
            indices: state_idx,
            values: target_values,
            stages: StageSet::Last,
        }),
        Arc::new(StateEquality {
            name: names::TERMINAL_FLUX.into(),
            indices: vec![fo + FLUX_INT, fo + FLUX],
            values: vec![0.0; 2],
            stages: StageSet::Last,
        }),
        Arc::new(NormConstraint {
            name: names::NORMALIZATION.into(),
            offsets: (0..n_states).map(|i| layout.state(i)).collect(),
            block_len: 4,
            stages: StageSet::AfterFirst,
        }),
        Arc::new(StateBound {
            name: names::FLUX_BOUND.into(),
            indices: vec![fo + FLUX],
            lower: -params.a_max,
            upper: params.a_max,
            stages: StageSet::All,
        }),
    ];
    if cfg.time_optimal.enabled {
        constraints.push(Arc::new(SquaredControlBound {
            name: names::DURATION_BOUNDS.into(),
            index: 1,
            lower: cfg.time_optimal.min_factor * dt,
            upper: cfg.time_optimal.max_factor * dt,
        }));
    }

    let dynamics = Arc::new(dynamics);
    let problem = TrajectoryProblem { dynamics: dynamics.clone(), n_knots, x0, cost, constraints };
    problem.validate()?;
    Ok(GateProblem {
        config: cfg.clone(),
        params: *params,
        target,
        dynamics,
        problem,
        initial_states,
        target_states,
        dt,
    })
}

impl GateProblem {
    /// Zero controls plus seeded uniform noise; √dt₀ in free-time mode.
    pub fn initial_controls(&self) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let nu = self.problem.control_dim();
        let amp = self.config.init_noise;
        (0..self.problem.n_knots - 1)
            .map(|_| {
                let mut u = DVector::zeros(nu);
                if amp > 0.0 {
                    u[0] = rng.gen_range(-amp..=amp);
                }
                if nu == 2 {
                    u[1] = self.dt.sqrt();
                }
                u
            })
            .collect()
    }

    pub fn initial_guess(&self) -> Result<Trajectory> {
        Trajectory::from_controls(&self.problem, self.initial_controls())
    }

    /// Step durations of a trajectory's controls.
    pub fn durations(&self, u: &[DVector<f64>]) -> Vec<f64> {
        match self.dynamics.mode {
            StepMode::Fixed { dt } => vec![dt; u.len()],
            StepMode::TimeOptimal => u.iter().map(|v| v[1] * v[1]).collect(),
        }
    }

    pub fn layout(&self) -> &StateLayout {
        &self.dynamics.layout
    }

    pub fn audit(&self) -> Audit {
        let mut constraints = vec![AuditEntry {
            name: names::DYNAMICS.into(),
            kind: "equality".into(),
            stages: "running".into(),
            dim: self.problem.state_dim(),
        }];
        for c in &self.problem.constraints {
            constraints.push(AuditEntry {
                name: c.name().to_string(),
                kind: match c.kind() {
                    ConstraintKind::Equality => "equality".into(),
                    ConstraintKind::Inequality => "inequality".into(),
                },
                stages: stage_label(&c.stages()).into(),
                dim: c.dim(),
            });
        }
        let w = &self.config.weights;
        let mut costs = vec![
            AuditCost { name: "state".into(), weight: w.state },
            AuditCost { name: "flux_int".into(), weight: w.flux[0] },
            AuditCost { name: "flux".into(), weight: w.flux[1] },
            AuditCost { name: "flux_deriv".into(), weight: w.flux[2] },
            AuditCost { name: "control".into(), weight: w.control },
        ];
        if self.config.time_optimal.enabled {
            costs.push(AuditCost { name: "duration".into(), weight: w.duration });
        }
        if self.config.depolarization.enabled {
            costs.push(AuditCost { name: "depolarization".into(), weight: w.depolarization });
        }
        match &self.config.robustness {
            Robustness::None => {}
            Robustness::Sampling => costs.push(AuditCost { name: "sampling".into(), weight: w.sampling }),
            Robustness::Unscented { .. } => costs.push(AuditCost { name: "unscented".into(), weight: w.unscented }),
            Robustness::Derivative { .. } => costs.push(AuditCost { name: "derivative".into(), weight: w.derivative }),
        }
        Audit {
            n_knots: self.problem.n_knots,
            dt: self.dt,
            state_dim: self.problem.state_dim(),
            control_dim: self.problem.control_dim(),
            constraints,
            costs,
        }
    }

    fn rebuild(&self, cfg: GateProblemConfig) -> Result<GateProblem> {
        build_gate_problem(&cfg, &self.params)
    }
}

/// Adds ±σ sampling states for every initial state, penalized by their
/// infidelity with weight `weight` at every knot.
pub fn add_sampling(prob: &GateProblem, sigma: f64, weight: f64) -> Result<GateProblem> {
    let mut cfg = prob.config.clone();
    cfg.robustness = Robustness::Sampling;
    cfg.uncertainty.sigma = Some(sigma);
    cfg.weights.sampling = weight;
    prob.rebuild(cfg)
}

/// Adds sigma-point states carried by the first initial state, penalized
/// by their squared deviation from it.
pub fn add_unscented(prob: &GateProblem, config: UnscentedConfig, sigma: f64, weight: f64) -> Result<GateProblem> {
    let mut cfg = prob.config.clone();
    cfg.robustness = Robustness::Unscented { config };
    cfg.uncertainty.sigma = Some(sigma);
    cfg.weights.unscented = weight;
    prob.rebuild(cfg)
}

/// Adds sensitivities of orders 1..=order of the first initial state with
/// respect to `target`, penalized by their norms.
pub fn add_derivative(prob: &GateProblem, target: UncertainTarget, order: usize, weight: f64) -> Result<GateProblem> {
    let mut cfg = prob.config.clone();
    cfg.robustness = Robustness::Derivative { order };
    cfg.uncertainty.target = target;
    cfg.weights.derivative = weight;
    prob.rebuild(cfg)
}

/// Accumulates the integrated depolarization rate and penalizes it.
pub fn add_depolarization(prob: &GateProblem, t1_csv: Option<std::path::PathBuf>, weight: f64) -> Result<GateProblem> {
    let mut cfg = prob.config.clone();
    cfg.depolarization = Depolarization { enabled: true, t1_csv };
    cfg.weights.depolarization = weight;
    prob.rebuild(cfg)
}

/// Makes each step duration a decision variable (as its square root)
/// within [min_factor, max_factor]·dt.
pub fn add_time_optimal(prob: &GateProblem, min_factor: f64, max_factor: f64, weight: f64) -> Result<GateProblem> {
    let mut cfg = prob.config.clone();
    cfg.time_optimal = TimeOptimal { enabled: true, min_factor, max_factor };
    cfg.weights.duration = weight;
    prob.rebuild(cfg)
}
