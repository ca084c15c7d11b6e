use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// x_{k+1} = f(x_k, u_k) with analytic Jacobians.
pub trait DiscreteDynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn step(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;
    /// (∂f/∂x, ∂f/∂u)
    fn jacobians(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// h(x, u) = 0
    Equality,
    /// g(x, u) ≤ 0
    Inequality,
}

/// Knots a constraint applies to, for a horizon of `n` knots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageSet {
    First,
    Last,
    All,
    /// Every knot that carries a control (0..n-1).
    Running,
    /// 1..n
    AfterFirst,
}

impl StageSet {
    pub fn contains(&self, k: usize, n: usize) -> bool {
        match self {
            Self::First => k == 0,
            Self::Last => k + 1 == n,
            Self::All => k < n,
            Self::Running => k + 1 < n,
            Self::AfterFirst => k >= 1 && k < n,
        }
    }
}

/// A constraint on (x_k, u_k) at a single knot.
pub trait Constraint: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn kind(&self) -> ConstraintKind;
    fn stages(&self) -> StageSet;
    fn dim(&self) -> usize;
    /// `u` is `None` at the terminal knot.
    fn eval(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> DVector<f64>;
    /// (∂c/∂x, ∂c/∂u); the control block is empty when `u` is `None`.
    fn jacobian(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> (DMatrix<f64>, DMatrix<f64>);
    /// True if the constraint only reads controls.
    fn control_only(&self) -> bool {
        false
    }
}

/// Deviation magnitude: |h| for equalities, max(g, 0) for inequalities.
pub fn violation(kind: ConstraintKind, c: &DVector<f64>) -> f64 {
    match kind {
        ConstraintKind::Equality => c.amax(),
        ConstraintKind::Inequality => c.iter().fold(0.0, |m, &v| m.max(v)),
    }
}

/// ½·w·zᵀMz over a subset of state indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadForm {
    pub name: String,
    pub indices: Vec<usize>,
    pub matrix: DMatrix<f64>,
    pub weight: f64,
}

impl QuadForm {
    fn gather(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| x[i]))
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let z = self.gather(x);
        0.5 * self.weight * z.dot(&(&self.matrix * &z))
    }

    fn accumulate(&self, x: &DVector<f64>, grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
        let z = self.gather(x);
        let g = &self.matrix * z * self.weight;
        for (a, &i) in self.indices.iter().enumerate() {
            grad[i] += g[a];
            for (b, &j) in self.indices.iter().enumerate() {
                hess[(i, j)] += self.weight * self.matrix[(a, b)];
            }
        }
    }
}

/// ½(x − x_T)ᵀQ(x − x_T) + ½uᵀRu + quadratic forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    pub q: DVector<f64>,
    pub r: DVector<f64>,
    pub quad: Vec<QuadForm>,
}

impl StageCost {
    pub fn new(nx: usize, nu: usize) -> Self {
        Self { q: DVector::zeros(nx), r: DVector::zeros(nu), quad: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFunction {
    pub x_target: DVector<f64>,
    pub running: StageCost,
    pub terminal: StageCost,
}

/// Gradient and Hessian of a stage cost.
#[derive(Debug, Clone)]
pub struct CostExpansion {
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub luu: DMatrix<f64>,
    pub lux: DMatrix<f64>,
}

impl CostFunction {
    pub fn new(nx: usize, nu: usize) -> Self {
        Self { x_target: DVector::zeros(nx), running: StageCost::new(nx, nu), terminal: StageCost::new(nx, nu) }
    }

    pub fn validate(&self, nx: usize, nu: usize) -> Result<()> {
        let sizes_ok = self.x_target.len() == nx
            && self.running.q.len() == nx
            && self.terminal.q.len() == nx
            && self.running.r.len() == nu;
        if !sizes_ok {
            return Err(Error::Config("cost dimensions do not match the dynamics".into()));
        }
        if self.running.q.iter().chain(self.terminal.q.iter()).any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Config("state weights must be finite and non-negative".into()));
        }
        if self.running.r.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::Config("control weights must be positive".into()));
        }
        for f in self.running.quad.iter().chain(&self.terminal.quad) {
            if f.indices.iter().any(|&i| i >= nx) || f.matrix.nrows() != f.indices.len() || f.weight < 0.0 {
                return Err(Error::Config(format!("malformed quadratic cost term '{}'", f.name)));
            }
        }
        Ok(())
    }

    fn stage(&self, terminal: bool) -> &StageCost {
        if terminal {
            &self.terminal
        } else {
            &self.running
        }
    }

    pub fn stage_value(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> f64 {
        let st = self.stage(u.is_none());
        let dx = x - &self.x_target;
        let mut v = 0.5 * dx.component_mul(&dx).dot(&st.q);
        if let Some(u) = u {
            v += 0.5 * u.component_mul(u).dot(&st.r);
        }
        v + st.quad.iter().map(|f| f.value(x)).sum::<f64>()
    }

    pub fn expand(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> CostExpansion {
        let st = self.stage(u.is_none());
        let nx = x.len();
        let nu = u.map_or(0, |u| u.len());
        let dx = x - &self.x_target;
        let mut lx = dx.component_mul(&st.q);
        let mut lxx = DMatrix::from_diagonal(&st.q);
        for f in &st.quad {
            f.accumulate(x, &mut lx, &mut lxx);
        }
        let (lu, luu) = match u {
            Some(u) => (u.component_mul(&st.r), DMatrix::from_diagonal(&st.r)),
            None => (DVector::zeros(0), DMatrix::zeros(0, 0)),
        };
        CostExpansion { lx, lu, lxx, luu, lux: DMatrix::zeros(nu, nx) }
    }
}

/// min Σ ℓ_k(x_k, u_k) + ℓ_N(x_N) subject to dynamics and constraints, with
/// x_0 fixed.
#[derive(Clone)]
pub struct TrajectoryProblem {
    pub dynamics: Arc<dyn DiscreteDynamics>,
    /// Number of knots; there are `n_knots - 1` controls.
    pub n_knots: usize,
    pub x0: DVector<f64>,
    pub cost: CostFunction,
    pub constraints: Vec<Arc<dyn Constraint>>,
}

impl Debug for TrajectoryProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrajectoryProblem")
            .field("n_knots", &self.n_knots)
            .field("state_dim", &self.dynamics.state_dim())
            .field("control_dim", &self.dynamics.control_dim())
            .field("constraints", &self.constraints.iter().map(|c| c.name().to_string()).collect::<Vec<_>>())
            .finish()
    }
}

impl TrajectoryProblem {
    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_knots < 2 {
            return Err(Error::Config("horizon needs at least two knots".into()));
        }
        if self.x0.len() != self.state_dim() {
            return Err(Error::Config("initial state has the wrong dimension".into()));
        }
        self.cost.validate(self.state_dim(), self.control_dim())
    }

    /// Objective value of a trajectory (no constraint terms).
    pub fn objective(&self, x: &[DVector<f64>], u: &[DVector<f64>]) -> f64 {
        let n = self.n_knots;
        let mut j: f64 = (0..n - 1).map(|k| self.cost.stage_value(&x[k], Some(&u[k]))).sum();
        j += self.cost.stage_value(&x[n - 1], None);
        j
    }

    pub fn rollout(&self, u: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let mut xs = Vec::with_capacity(self.n_knots);
        xs.push(self.x0.clone());
        for (k, uk) in u.iter().enumerate() {
            let next = self.dynamics.step(k, &xs[k], uk)?;
            xs.push(next);
        }
        Ok(xs)
    }

    /// Max over constraints, knots and components of the deviation.
    pub fn max_violation(&self, x: &[DVector<f64>], u: &[DVector<f64>]) -> f64 {
        max_violation(&self.constraints, x, u)
    }
}

/// Max over constraints, knots and components of |h| and max(g, 0).
pub fn max_violation(constraints: &[Arc<dyn Constraint>], x: &[DVector<f64>], u: &[DVector<f64>]) -> f64 {
    let n = x.len();
    let mut worst: f64 = 0.0;
    for c in constraints {
        for (k, xk) in x.iter().enumerate() {
            if !c.stages().contains(k, n) {
                continue;
            }
            let uk = u.get(k).filter(|_| k + 1 < n);
            if c.control_only() && uk.is_none() {
                continue;
            }
            worst = worst.max(violation(c.kind(), &c.eval(xk, uk)));
        }
    }
    worst
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

fn selector(nx: usize, indices: &[usize]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(indices.len(), nx);
    for (r, &i) in indices.iter().enumerate() {
        m.set_row(r, &unit(nx, i).transpose());
    }
    m
}

/// x[indices] = values.
#[derive(Debug, Clone)]
pub struct StateEquality {
    pub name: String,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub stages: StageSet,
}

impl Constraint for StateEquality {
    fn name(&self) -> &str {
        &self.name
    }
    fn kind(&self) -> ConstraintKind {
        ConstraintKind::Equality
    }
    fn stages(&self) -> StageSet {
        self.stages.clone()
    }
    fn dim(&self) -> usize {
        self.indices.len()
    }
    fn eval(&self, x: &DVector<f64>, _u: Option<&DVector<f64>>) -> DVector<f64> {
        DVector::from_iterator(self.indices.len(), self.indices.iter().zip(&self.values).map(|(&i, &v)| x[i] - v))
    }
    fn jacobian(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> (DMatrix<f64>, DMatrix<f64>) {
        (selector(x.len(), &self.indices), DMatrix::zeros(self.dim(), u.map_or(0, |u| u.len())))
    }
}

/// lower ≤ x[i] ≤ upper for each listed index, as [x − upper; lower − x].
#[derive(Debug, Clone)]
pub struct StateBound {
    pub name: String,
    pub indices: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
    pub stages: StageSet,
}

impl Constraint for StateBound {
    fn name(&self) -> &str {
        &self.name
    }
    fn kind(&self) -> ConstraintKind {
        ConstraintKind::Inequality
    }
    fn stages(&self) -> StageSet {
        self.stages.clone()
    }
    fn dim(&self) -> usize {
        2 * self.indices.len()
    }
    fn eval(&self, x: &DVector<f64>, _u: Option<&DVector<f64>>) -> DVector<f64> {
        let upper = self.indices.iter().map(|&i| x[i] - self.upper);
        let lower = self.indices.iter().map(|&i| self.lower - x[i]);
        DVector::from_iterator(self.dim(), upper.chain(lower))
    }
    fn jacobian(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> (DMatrix<f64>, DMatrix<f64>) {
        let s = selector(x.len(), &self.indices);
        let mut j = DMatrix::zeros(self.dim(), x.len());
        j.rows_mut(0, self.indices.len()).copy_from(&s);
        j.rows_mut(self.indices.len(), self.indices.len()).copy_from(&(-s));
        (j, DMatrix::zeros(self.dim(), u.map_or(0, |u| u.len())))
    }
}

/// ‖x[o..o+len]‖² = 1 for each listed block.
#[derive(Debug, Clone)]
pub struct NormConstraint {
    pub name: String,
    pub offsets: Vec<usize>,
    pub block_len: usize,
    pub stages: StageSet,
}

impl Constraint for NormConstraint {
    fn name(&self) -> &str {
        &self.name
    }
    fn kind(&self) -> ConstraintKind {
        ConstraintKind::Equality
    }
    fn stages(&self) -> StageSet {
        self.stages.clone()
    }
    fn dim(&self) -> usize {
        self.offsets.len()
    }
    fn eval(&self, x: &DVector<f64>, _u: Option<&DVector<f64>>) -> DVector<f64> {
        DVector::from_iterator(
            self.offsets.len(),
            self.offsets.iter().map(|&o| x.rows(o, self.block_len).norm_squared() - 1.0),
        )
    }
    fn jacobian(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut j = DMatrix::zeros(self.offsets.len(), x.len());
        for (r, &o) in self.offsets.iter().enumerate() {
            for i in o..o + self.block_len {
                j[(r, i)] = 2.0 * x[i];
            }
        }
        (j, DMatrix::zeros(self.dim(), u.map_or(0, |u| u.len())))
    }
}

/// Bounds on a squared control: lower ≤ u[i]² ≤ upper.
#[derive(Debug, Clone)]
pub struct SquaredControlBound {
    pub name: String,
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Constraint for SquaredControlBound {
    fn name(&self) -> &str {
        &self.name
    }
    fn kind(&self) -> ConstraintKind {
        ConstraintKind::Inequality
    }
    fn stages(&self) -> StageSet {
        StageSet::Running
    }
    fn dim(&self) -> usize {
        2
    }
    fn control_only(&self) -> bool {
        true
    }
    fn eval(&self, _x: &DVector<f64>, u: Option<&DVector<f64>>) -> DVector<f64> {
        let s = u.expect("running constraint")[self.index];
        DVector::from_vec(vec![self.lower - s * s, s * s - self.upper])
    }
    fn jacobian(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> (DMatrix<f64>, DMatrix<f64>) {
        let u = u.expect("running constraint");
        let s = u[self.index];
        let mut ju = DMatrix::zeros(2, u.len());
        ju[(0, self.index)] = -2.0 * s;
        ju[(1, self.index)] = 2.0 * s;
        (DMatrix::zeros(2, x.len()), ju)
    }
}

/// u[i] = value.
#[derive(Debug, Clone)]
pub struct ControlEquality {
    pub name: String,
    pub index: usize,
    pub value: f64,
}

impl Constraint for ControlEquality {
    fn name(&self) -> &str {
        &self.name
    }
    fn kind(&self) -> ConstraintKind {
        ConstraintKind::Equality
    }
    fn stages(&self) -> StageSet {
        StageSet::Running
    }
    fn dim(&self) -> usize {
        1
    }
    fn control_only(&self) -> bool {
        true
    }
    fn eval(&self, _x: &DVector<f64>, u: Option<&DVector<f64>>) -> DVector<f64> {
        DVector::from_element(1, u.expect("running constraint")[self.index] - self.value)
    }
    fn jacobian(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> (DMatrix<f64>, DMatrix<f64>) {
        let u = u.expect("running constraint");
        (DMatrix::zeros(1, x.len()), selector(u.len(), &[self.index]))
    }
}
