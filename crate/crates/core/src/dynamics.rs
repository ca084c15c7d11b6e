//! Discrete dynamics of the augmented state and its Jacobians.
//!
//! One step advances, with the flux second derivative held constant:
//!
//! - the flux chain (∫a, a, da/dt) by exact polynomial integration,
//! - every quantum state by the exact propagator of the step-start flux,
//! - parameter sensitivities by the Lawson-Euler exponential integrator,
//! - sampling states under shifted parameters,
//! - unscented sigma points by resample / normalize / propagate,
//! - the integrated depolarization rate by a left-endpoint rule.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::T1Interpolant;
use crate::problems::unscented::{sample_mean_cov, sigma_signs};
use crate::quantum::{
    apply_qubit, iso4, qubit_propagator, qubit_propagator_derivs, sigma_x, sigma_z, FluxoniumParams,
    PropagatorDerivs, QuantumState, RealIsoMatrix, C64,
};
use crate::solver::DiscreteDynamics;

/// Offsets of the flux chain inside its block.
pub const FLUX_INT: usize = 0;
pub const FLUX: usize = 1;
pub const FLUX_DERIV: usize = 2;

/// Which Hamiltonian parameter an uncertainty acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertainTarget {
    /// f_q → f_q + δ
    QubitFrequency,
    /// a → a + δ
    FluxAdditive,
}

impl UncertainTarget {
    /// (a, f_q) after applying the offset.
    pub fn shift(self, a: f64, f_q: f64, delta: f64) -> (f64, f64) {
        match self {
            Self::QubitFrequency => (a, f_q + delta),
            Self::FluxAdditive => (a + delta, f_q),
        }
    }

    /// ∂H/∂λ (2π-scaled).
    pub fn generator(self) -> Matrix2<C64> {
        let s = match self {
            Self::QubitFrequency => sigma_z(),
            Self::FluxAdditive => sigma_x(),
        };
        s * C64::from(std::f64::consts::PI)
    }
}

/// A realized parameter offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertainParam {
    pub target: UncertainTarget,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivBlock {
    /// Index of the nominal state being differentiated.
    pub carrier: usize,
    /// Derivative order (1 or 2).
    pub order: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBlock {
    /// Nominal state this sample shadows.
    pub source: usize,
    /// Signed parameter offset the sample evolves under.
    pub shift: f64,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnscentedBlock {
    pub carrier: usize,
    pub offset: usize,
    pub n_samples: usize,
    pub beta: f64,
    /// Cholesky factor of the parameter covariance (d = 1: a scalar σ).
    pub param_sigma: f64,
}

/// Where each piece of the augmented state lives in the flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLayout {
    pub n_states: usize,
    pub flux: usize,
    pub d1: Option<usize>,
    pub derivs: Vec<DerivBlock>,
    pub samples: Vec<SampleBlock>,
    pub unscented: Option<UnscentedBlock>,
    pub dim: usize,
}

impl StateLayout {
    /// Nominal states followed by the flux chain.
    pub fn new(n_states: usize) -> Self {
        let flux = 4 * n_states;
        Self {
            n_states,
            flux,
            d1: None,
            derivs: Vec::new(),
            samples: Vec::new(),
            unscented: None,
            dim: flux + 3,
        }
    }

    pub fn state(&self, i: usize) -> usize {
        4 * i
    }

    pub fn with_d1(mut self) -> Self {
        if self.d1.is_none() {
            self.d1 = Some(self.dim);
            self.dim += 1;
        }
        self
    }

    pub fn with_derivs(mut self, carriers: &[usize], order: usize) -> Self {
        for &c in carriers {
            for o in 1..=order {
                self.derivs.push(DerivBlock { carrier: c, order: o, offset: self.dim });
                self.dim += 4;
            }
        }
        self
    }

    pub fn with_samples(mut self, shifts: &[f64]) -> Self {
        for i in 0..self.n_states {
            for &s in shifts {
                self.samples.push(SampleBlock { source: i, shift: s, offset: self.dim });
                self.dim += 4;
            }
        }
        self
    }

    pub fn with_unscented(mut self, carrier: usize, beta: f64, param_sigma: f64) -> Self {
        // 2(2n + d) sigma points with 2n = 4, d = 1
        let n_samples = 2 * (4 + 1);
        self.unscented = Some(UnscentedBlock { carrier, offset: self.dim, n_samples, beta, param_sigma });
        self.dim += 4 * n_samples;
        self
    }

    pub fn deriv_offset(&self, carrier: usize, order: usize) -> Option<usize> {
        self.derivs.iter().find(|b| b.carrier == carrier && b.order == order).map(|b| b.offset)
    }

    pub fn pack(&self, s: &AugmentedState) -> Result<DVector<f64>> {
        let n_samples = self.samples.len() + self.unscented.as_ref().map_or(0, |u| u.n_samples);
        if s.states.len() != self.n_states
            || s.deriv_states.len() != self.derivs.len()
            || s.sample_states.len() != n_samples
        {
            return Err(Error::InvalidInput("augmented state does not match layout".into()));
        }
        let mut x = DVector::zeros(self.dim);
        for (i, psi) in s.states.iter().enumerate() {
            x.rows_mut(self.state(i), 4).copy_from(psi.data());
        }
        x[self.flux + FLUX_INT] = s.flux_int;
        x[self.flux + FLUX] = s.flux;
        x[self.flux + FLUX_DERIV] = s.flux_deriv;
        if let Some(o) = self.d1 {
            x[o] = s.d1;
        }
        for (b, v) in self.derivs.iter().zip(&s.deriv_states) {
            x.rows_mut(b.offset, 4).copy_from(v);
        }
        let mut it = s.sample_states.iter();
        for b in &self.samples {
            x.rows_mut(b.offset, 4).copy_from(it.next().expect("counted").data());
        }
        if let Some(u) = &self.unscented {
            for j in 0..u.n_samples {
                x.rows_mut(u.offset + 4 * j, 4).copy_from(it.next().expect("counted").data());
            }
        }
        Ok(x)
    }

    pub fn unpack(&self, x: &DVector<f64>) -> AugmentedState {
        let get = |o: usize| QuantumState::from_slice(&x.as_slice()[o..o + 4]).expect("length 4");
        let mut sample_states: Vec<QuantumState> = self.samples.iter().map(|b| get(b.offset)).collect();
        if let Some(u) = &self.unscented {
            sample_states.extend((0..u.n_samples).map(|j| get(u.offset + 4 * j)));
        }
        AugmentedState {
            states: (0..self.n_states).map(|i| get(self.state(i))).collect(),
            flux_int: x[self.flux + FLUX_INT],
            flux: x[self.flux + FLUX],
            flux_deriv: x[self.flux + FLUX_DERIV],
            d1: self.d1.map_or(0.0, |o| x[o]),
            deriv_states: self.derivs.iter().map(|b| x.rows(b.offset, 4).into_owned()).collect(),
            sample_states,
        }
    }
}

/// Per-step optimizer state in structured form.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub states: Vec<QuantumState>,
    /// ∫a dt, GHz·ns
    pub flux_int: f64,
    /// a, GHz
    pub flux: f64,
    /// da/dt, GHz/ns
    pub flux_deriv: f64,
    /// Integrated depolarization rate (dimensionless).
    pub d1: f64,
    /// Sensitivities ∂^l ψ in layout order; no norm constraint applies.
    pub deriv_states: Vec<DVector<f64>>,
    /// Sampling states followed by unscented sigma points.
    pub sample_states: Vec<QuantumState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedControl {
    /// d²a/dt², GHz/ns²
    pub flux_accel: f64,
    /// √Δt in √ns; present only in time-optimal mode.
    pub sqrt_dt: Option<f64>,
}

impl AugmentedControl {
    pub fn to_vector(&self) -> DVector<f64> {
        match self.sqrt_dt {
            Some(s) => DVector::from_vec(vec![self.flux_accel, s]),
            None => DVector::from_vec(vec![self.flux_accel]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepMode {
    Fixed { dt: f64 },
    /// Duration is the square of the second control.
    TimeOptimal,
}

/// The discrete dynamics f(x, u) of a gate problem.
#[derive(Debug, Clone)]
pub struct GateDynamics {
    pub params: FluxoniumParams,
    pub layout: StateLayout,
    pub mode: StepMode,
    /// Parameter the sensitivity blocks differentiate with respect to.
    pub deriv_target: UncertainTarget,
    /// Parameter shifted in sampling and unscented states.
    pub sample_target: UncertainTarget,
    pub t1: Option<T1Interpolant>,
}

impl GateDynamics {
    pub fn new(params: FluxoniumParams, layout: StateLayout, mode: StepMode) -> Self {
        Self {
            params,
            layout,
            mode,
            deriv_target: UncertainTarget::QubitFrequency,
            sample_target: UncertainTarget::QubitFrequency,
            t1: None,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self.mode {
            StepMode::Fixed { .. } => 1,
            StepMode::TimeOptimal => 2,
        }
    }

    fn dt(&self, u: &[f64]) -> f64 {
        match self.mode {
            StepMode::Fixed { dt } => dt,
            StepMode::TimeOptimal => u[1] * u[1],
        }
    }

    /// Structured wrapper around [`GateDynamics::step_vec`].
    pub fn step(&self, x: &AugmentedState, u: &AugmentedControl) -> Result<AugmentedState> {
        let xv = self.layout.pack(x)?;
        if matches!(self.mode, StepMode::TimeOptimal) != u.sqrt_dt.is_some() {
            return Err(Error::InvalidInput("sqrt_dt must be present exactly in time-optimal mode".into()));
        }
        let out = self.step_vec(&xv, &u.to_vector())?;
        Ok(self.layout.unpack(&out))
    }

    pub fn step_vec(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_finite(x, u)?;
        let lay = &self.layout;
        let xs = x.as_slice();
        let dt = self.dt(u.as_slice());
        if !(dt > 0.0) {
            return Err(Error::Numeric(format!("step duration must be positive, got {dt}")));
        }
        let c = u[0];
        let f_q = self.params.f_q;
        let mut out = DVector::zeros(lay.dim);

        let fo = lay.flux;
        let (ia, a, da) = (xs[fo + FLUX_INT], xs[fo + FLUX], xs[fo + FLUX_DERIV]);
        let (ia2, a2, da2) = flux_chain(ia, a, da, c, dt);
        out[fo + FLUX_INT] = ia2;
        out[fo + FLUX] = a2;
        out[fo + FLUX_DERIV] = da2;

        let u_nom = qubit_propagator(a, f_q, dt);
        for i in 0..lay.n_states {
            let o = lay.state(i);
            out.fixed_rows_mut::<4>(o).copy_from(&apply_qubit(&u_nom, &xs[o..o + 4]));
        }

        let gen = self.deriv_target.generator() * C64::new(0.0, -1.0);
        for b in &lay.derivs {
            let src = self.deriv_source(b);
            let lower = &xs[src..src + 4];
            let cur = Vector4::from_column_slice(&xs[b.offset..b.offset + 4]);
            let v = cur + apply_qubit(&gen, lower) * (dt * b.order as f64);
            out.fixed_rows_mut::<4>(b.offset).copy_from(&apply_qubit(&u_nom, v.as_slice()));
        }

        for b in &lay.samples {
            let (sa, sf) = self.sample_target.shift(a, f_q, b.shift);
            let us = qubit_propagator(sa, sf, dt);
            let src = &xs[b.offset..b.offset + 4];
            out.fixed_rows_mut::<4>(b.offset).copy_from(&apply_qubit(&us, src));
        }

        if let Some(ub) = &lay.unscented {
            let st = self.unscented_step(ub, xs, a, dt, false)?;
            out.rows_mut(ub.offset, 4 * ub.n_samples).copy_from(&st.out);
        }

        if let Some(o) = lay.d1 {
            let t1 = self.t1.as_ref().ok_or_else(|| Error::Model("d1 block without a T1 source".into()))?;
            out[o] = xs[o] + step_d1(a, dt, t1)?;
        }
        Ok(out)
    }

    /// Offset of the lower-order vector feeding a sensitivity block: the
    /// carrier state itself for order 1, the order-1 sensitivity for order 2.
    fn deriv_source(&self, b: &DerivBlock) -> usize {
        if b.order == 1 {
            self.layout.state(b.carrier)
        } else {
            self.layout.deriv_offset(b.carrier, b.order - 1).expect("lower orders precede higher ones")
        }
    }

    pub fn jacobians_vec(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        check_finite(x, u)?;
        let lay = &self.layout;
        let n = lay.dim;
        let m = self.control_dim();
        let xs = x.as_slice();
        let dt = self.dt(u.as_slice());
        let timed = matches!(self.mode, StepMode::TimeOptimal);
        // d(dt)/d(sqrt_dt)
        let ddt_ds = if timed { 2.0 * u[1] } else { 0.0 };
        let c = u[0];
        let f_q = self.params.f_q;
        let mut ja = DMatrix::zeros(n, n);
        let mut jb = DMatrix::zeros(n, m);

        let fo = lay.flux;
        let ia = fo + FLUX_INT;
        let ai = fo + FLUX;
        let di = fo + FLUX_DERIV;
        let (a, da) = (xs[ai], xs[di]);
        ja[(ia, ia)] = 1.0;
        ja[(ia, ai)] = dt;
        ja[(ia, di)] = dt * dt / 2.0;
        ja[(ai, ai)] = 1.0;
        ja[(ai, di)] = dt;
        ja[(di, di)] = 1.0;
        jb[(ia, 0)] = dt * dt * dt / 6.0;
        jb[(ai, 0)] = dt * dt / 2.0;
        jb[(di, 0)] = dt;
        if timed {
            jb[(ia, 1)] = ddt_ds * (a + da * dt + c * dt * dt / 2.0);
            jb[(ai, 1)] = ddt_ds * (da + c * dt);
            jb[(di, 1)] = ddt_ds * c;
        }

        let pd = qubit_propagator_derivs(a, f_q, dt);
        let u4 = iso4(&pd.u);
        for i in 0..lay.n_states {
            let o = lay.state(i);
            let psi = &xs[o..o + 4];
            set_block(&mut ja, o, o, &u4);
            set_col(&mut ja, o, ai, &apply_qubit(&pd.du_da, psi));
            if timed {
                set_col(&mut jb, o, 1, &(apply_qubit(&pd.du_ddt, psi) * ddt_ds));
            }
        }

        let gen = self.deriv_target.generator() * C64::new(0.0, -1.0);
        let ug4 = iso4(&(pd.u * gen));
        for b in &lay.derivs {
            let src = self.deriv_source(b);
            let lower = &xs[src..src + 4];
            let k = b.order as f64;
            let cur = Vector4::from_column_slice(&xs[b.offset..b.offset + 4]);
            let v = cur + apply_qubit(&gen, lower) * (dt * k);
            set_block(&mut ja, b.offset, b.offset, &u4);
            add_block(&mut ja, b.offset, src, &(ug4 * (dt * k)));
            set_col(&mut ja, b.offset, ai, &apply_qubit(&pd.du_da, v.as_slice()));
            if timed {
                let col = apply_qubit(&pd.du_ddt, v.as_slice()) + ug4 * Vector4::from_column_slice(lower) * k;
                set_col(&mut jb, b.offset, 1, &(col * ddt_ds));
            }
        }

        for b in &lay.samples {
            let (sa, sf) = self.sample_target.shift(a, f_q, b.shift);
            let ps = qubit_propagator_derivs(sa, sf, dt);
            let src = &xs[b.offset..b.offset + 4];
            set_block(&mut ja, b.offset, b.offset, &iso4(&ps.u));
            set_col(&mut ja, b.offset, ai, &apply_qubit(&ps.du_da, src));
            if timed {
                set_col(&mut jb, b.offset, 1, &(apply_qubit(&ps.du_ddt, src) * ddt_ds));
            }
        }

        if let Some(ub) = &lay.unscented {
            let st = self.unscented_step(ub, xs, a, dt, true)?;
            let len = 4 * ub.n_samples;
            ja.view_mut((ub.offset, ub.offset), (len, len)).copy_from(&st.d_samples.expect("requested"));
            ja.view_mut((ub.offset, ai), (len, 1)).copy_from(&st.d_flux.expect("requested"));
            if timed {
                let col = st.d_dt.expect("requested") * ddt_ds;
                jb.view_mut((ub.offset, 1), (len, 1)).copy_from(&col);
            }
        }

        if let Some(o) = lay.d1 {
            let t1 = self.t1.as_ref().ok_or_else(|| Error::Model("d1 block without a T1 source".into()))?;
            let t = t1.t1_ns(a);
            ja[(o, o)] = 1.0;
            ja[(o, ai)] = -dt * t1.dt1_ns(a) / (t * t);
            if timed {
                jb[(o, 1)] = ddt_ds / t;
            }
        }
        Ok((ja, jb))
    }

    /// Resample the stored sigma points around their mean and covariance,
    /// renormalize, and propagate each under its parameter offset.
    fn unscented_step(
        &self,
        ub: &UnscentedBlock,
        xs: &[f64],
        a: f64,
        dt: f64,
        with_jacobian: bool,
    ) -> Result<UnscentedStep> {
        let q = 4;
        let ns = ub.n_samples;
        let nd = ns / 2 - q;
        let samples: Vec<DVector<f64>> =
            (0..ns).map(|j| DVector::from_column_slice(&xs[ub.offset + q * j..ub.offset + q * (j + 1)])).collect();
        let (mean, cov) = sample_mean_cov(&samples, ub.beta);
        let chol = robust_cholesky(&cov)?;
        let lc = chol.l();
        let f_q = self.params.f_q;
        let signs = sigma_signs(q, nd);

        let mut out = DVector::zeros(q * ns);
        let mut zs = Vec::with_capacity(ns);
        let mut props: Vec<PropagatorDerivs> = Vec::with_capacity(ns);
        for (j, &(col, sign)) in signs.iter().enumerate() {
            let (z, lambda) = if col < q {
                (&mean + lc.column(col) * (ub.beta * sign), 0.0)
            } else {
                (mean.clone(), sign * ub.beta * ub.param_sigma)
            };
            let norm = z.norm();
            let w = &z / norm;
            let (sa, sf) = self.sample_target.shift(a, f_q, lambda);
            let pd = qubit_propagator_derivs(sa, sf, dt);
            out.fixed_rows_mut::<4>(q * j).copy_from(&apply_qubit(&pd.u, w.as_slice()));
            zs.push(z);
            props.push(pd);
        }
        if !with_jacobian {
            return Ok(UnscentedStep { out, d_samples: None, d_flux: None, d_dt: None });
        }

        let mut d_flux = DVector::zeros(q * ns);
        let mut d_dt = DVector::zeros(q * ns);
        for j in 0..ns {
            let w = &zs[j] / zs[j].norm();
            d_flux.fixed_rows_mut::<4>(q * j).copy_from(&apply_qubit(&props[j].du_da, w.as_slice()));
            d_dt.fixed_rows_mut::<4>(q * j).copy_from(&apply_qubit(&props[j].du_ddt, w.as_slice()));
        }

        // d(sample j out)/d(stored sample i, component r)
        let lc_inv = lc
            .clone()
            .solve_lower_triangular(&DMatrix::identity(q, q))
            .ok_or_else(|| Error::Numeric("singular sigma-point factor".into()))?;
        let centred: Vec<DVector<f64>> = samples.iter().map(|s| s - &mean).collect();
        let norm_proj: Vec<(DMatrix<f64>, f64)> = zs
            .iter()
            .map(|z| {
                let nz = z.norm();
                let w = z / nz;
                (DMatrix::identity(q, q) - &w * w.transpose(), nz)
            })
            .collect();
        let u4s: Vec<Matrix4<f64>> = props.iter().map(|p| iso4(&p.u)).collect();
        let mut d_samples = DMatrix::zeros(q * ns, q * ns);
        let inv_scale = 1.0 / (2.0 * ub.beta * ub.beta);
        for i in 0..ns {
            for r in 0..q {
                let mut dm = DVector::zeros(q);
                dm[r] = 1.0 / ns as f64;
                let mut er = DVector::zeros(q);
                er[r] = 1.0;
                let dp = (&er * centred[i].transpose() + &centred[i] * er.transpose()) * inv_scale;
                let mut inner = &lc_inv * dp * lc_inv.transpose();
                for p in 0..q {
                    inner[(p, p)] *= 0.5;
                    for s in p + 1..q {
                        inner[(p, s)] = 0.0;
                    }
                }
                let dl = &lc * inner;
                let in_col = q * i + r;
                for (j, &(col, sign)) in signs.iter().enumerate() {
                    let dz = if col < q { &dm + dl.column(col) * (ub.beta * sign) } else { dm.clone() };
                    let (proj, nz) = &norm_proj[j];
                    let dw = proj * dz / *nz;
                    let dout = u4s[j] * Vector4::from_column_slice(dw.as_slice());
                    d_samples.view_mut((q * j, in_col), (q, 1)).copy_from(&dout);
                }
            }
        }
        Ok(UnscentedStep { out, d_samples: Some(d_samples), d_flux: Some(d_flux), d_dt: Some(d_dt) })
    }
}

struct UnscentedStep {
    out: DVector<f64>,
    d_samples: Option<DMatrix<f64>>,
    d_flux: Option<DVector<f64>>,
    d_dt: Option<DVector<f64>>,
}

/// Cholesky with escalating diagonal jitter starting at 1e-12.
pub fn robust_cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    let mut jitter = 1e-12;
    while jitter <= 1e-6 {
        if let Some(c) = Cholesky::new(m + DMatrix::identity(n, n) * jitter) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::Model("covariance is not positive definite even with jitter".into()))
}

impl DiscreteDynamics for GateDynamics {
    fn state_dim(&self) -> usize {
        self.layout.dim
    }

    fn control_dim(&self) -> usize {
        GateDynamics::control_dim(self)
    }

    fn step(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.step_vec(x, u)
    }

    fn jacobians(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.jacobians_vec(x, u)
    }
}

/// Exact update of (∫a, a, da) under constant second derivative `c`.
pub fn flux_chain(ia: f64, a: f64, da: f64, c: f64, dt: f64) -> (f64, f64, f64) {
    let dt2 = dt * dt;
    (
        ia + a * dt + da * dt2 / 2.0 + c * dt2 * dt / 6.0,
        a + da * dt + c * dt2 / 2.0,
        da + c * dt,
    )
}

/// Lawson-Euler step of a first-order sensitivity:
/// ∂ψ' = e^{-iHΔt} (∂ψ + Δt·(−i ∂H) ψ).
pub fn step_derivative(
    dpsi: &DVector<f64>,
    psi: &QuantumState,
    h: &RealIsoMatrix,
    dh: &RealIsoMatrix,
    dt: f64,
) -> Result<DVector<f64>> {
    let n2 = psi.data().len();
    if dpsi.len() != n2 || h.data().nrows() != n2 || dh.data().nrows() != n2 {
        return Err(Error::InvalidInput("sensitivity step dimension mismatch".into()));
    }
    let prop = crate::quantum::propagator(h, dt);
    // −i in the real isomorphism maps (re, im) → (im, −re)
    let src = dh.data() * psi.data();
    let n = n2 / 2;
    let mut minus_i = DVector::zeros(n2);
    for k in 0..n {
        minus_i[k] = src[n + k];
        minus_i[n + k] = -src[k];
    }
    Ok(prop.data() * (dpsi + minus_i * dt))
}

/// Increment of the integrated depolarization rate over one step, using the
/// step-start flux.
pub fn step_d1(a: f64, dt: f64, t1: &T1Interpolant) -> Result<f64> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidInput(format!("negative step duration {dt}")));
    }
    let t = t1.t1_ns(a);
    if !(t > 0.0) {
        return Err(Error::Model(format!("non-positive T1 {t} ns at flux {a}")));
    }
    Ok(dt / t)
}

fn check_finite(x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
    if x.iter().chain(u.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("non-finite state or control".into()))
    }
}

fn set_block(m: &mut DMatrix<f64>, r: usize, c: usize, b: &Matrix4<f64>) {
    m.fixed_view_mut::<4, 4>(r, c).copy_from(b);
}

fn add_block(m: &mut DMatrix<f64>, r: usize, c: usize, b: &Matrix4<f64>) {
    let mut v = m.fixed_view_mut::<4, 4>(r, c);
    v += b;
}

fn set_col(m: &mut DMatrix<f64>, r: usize, c: usize, v: &Vector4<f64>) {
    m.fixed_view_mut::<4, 1>(r, c).copy_from(v);
}
