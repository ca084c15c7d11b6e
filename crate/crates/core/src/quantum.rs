//! Real-isomorphic linear algebra for qubit states and operators.
//!
//! A complex n-level state ψ is stored as the real 2n-vector
//! `(Re ψ | Im ψ)` and a complex operator H as the 2n×2n block matrix
//!
//! ```text
//! [ H_re  -H_im ]
//! [ H_im   H_re ]
//! ```
//!
//! so that complex matrix-vector products become real ones. Frequencies are
//! in GHz and times in ns; Hamiltonians carry the factor 2π so that the
//! Schrödinger equation reads dψ/dt = -iHψ.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

pub fn sigma_x() -> Matrix2<C64> {
    Matrix2::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0))
}

pub fn sigma_y() -> Matrix2<C64> {
    Matrix2::new(C64::new(0.0, 0.0), -I, I, C64::new(0.0, 0.0))
}

pub fn sigma_z() -> Matrix2<C64> {
    Matrix2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0))
}

/// A complex n-level state in real-isomorphic layout `(Re ψ | Im ψ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumState {
    data: DVector<f64>,
}

impl QuantumState {
    pub fn from_real_iso(data: DVector<f64>) -> Result<Self> {
        if data.is_empty() || data.len() % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "real-isomorphic state needs a positive even length, got {}",
                data.len()
            )));
        }
        Ok(Self { data })
    }

    pub fn from_slice(data: &[f64]) -> Result<Self> {
        Self::from_real_iso(DVector::from_column_slice(data))
    }

    pub fn from_complex(amps: &[C64]) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidInput("empty state".into()));
        }
        let n = amps.len();
        let mut data = DVector::zeros(2 * n);
        for (i, a) in amps.iter().enumerate() {
            data[i] = a.re;
            data[n + i] = a.im;
        }
        Ok(Self { data })
    }

    /// Computational basis state |i⟩ of an n-level system.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut data = DVector::zeros(2 * n);
        data[i] = 1.0;
        Self { data }
    }

    pub fn levels(&self) -> usize {
        self.data.len() / 2
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.data
    }

    pub fn to_complex(&self) -> Vec<C64> {
        let n = self.levels();
        (0..n).map(|i| C64::new(self.data[i], self.data[n + i])).collect()
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.norm_squared()
    }

    pub fn normalized(&self) -> Self {
        Self { data: &self.data / self.data.norm() }
    }

    /// Multiplies the state by the global phase e^{iφ}.
    pub fn rotate_phase(&self, phi: f64) -> Self {
        let z = C64::from_polar(1.0, phi);
        let amps: Vec<C64> = self.to_complex().into_iter().map(|a| a * z).collect();
        Self::from_complex(&amps).expect("non-empty")
    }

    /// Complex inner product ⟨self|other⟩.
    pub fn inner(&self, other: &QuantumState) -> C64 {
        inner_iso(self.as_slice(), other.as_slice())
    }
}

/// ⟨a|b⟩ for two real-isomorphic vectors of equal length.
pub fn inner_iso(a: &[f64], b: &[f64]) -> C64 {
    let n = a.len() / 2;
    let (ar, ai) = a.split_at(n);
    let (br, bi) = b.split_at(n);
    let mut re = 0.0;
    let mut im = 0.0;
    for i in 0..n {
        re += ar[i] * br[i] + ai[i] * bi[i];
        im += ar[i] * bi[i] - ai[i] * br[i];
    }
    C64::new(re, im)
}

/// A complex operator embedded as a 2n×2n real block matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealIsoMatrix {
    data: DMatrix<f64>,
}

impl RealIsoMatrix {
    pub fn from_complex(m: &DMatrix<C64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "operator must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let mut data = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = m[(i, j)];
                data[(i, j)] = z.re;
                data[(i + n, j + n)] = z.re;
                data[(i, j + n)] = -z.im;
                data[(i + n, j)] = z.im;
            }
        }
        Ok(Self { data })
    }

    pub fn from_qubit(m: &Matrix2<C64>) -> Self {
        Self { data: DMatrix::from_iterator(4, 4, iso4(m).iter().copied()) }
    }

    /// Wraps a real matrix, checking the block structure.
    pub fn from_real(data: DMatrix<f64>) -> Result<Self> {
        if !data.is_square() || data.nrows() % 2 != 0 || data.nrows() == 0 {
            return Err(Error::InvalidInput("real-isomorphic matrix must be 2n x 2n".into()));
        }
        let m = Self { data };
        if !m.is_block_symmetric(1e-12) {
            return Err(Error::InvalidInput("matrix lacks the [[A,-B],[B,A]] block form".into()));
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self { data: DMatrix::identity(2 * n, 2 * n) }
    }

    pub fn levels(&self) -> usize {
        self.data.nrows() / 2
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn to_complex(&self) -> DMatrix<C64> {
        let n = self.levels();
        DMatrix::from_fn(n, n, |i, j| C64::new(self.data[(i, j)], self.data[(i + n, j)]))
    }

    pub fn is_block_symmetric(&self, tol: f64) -> bool {
        let n = self.levels();
        (0..n).all(|i| {
            (0..n).all(|j| {
                (self.data[(i, j)] - self.data[(i + n, j + n)]).abs() <= tol
                    && (self.data[(i, j + n)] + self.data[(i + n, j)]).abs() <= tol
            })
        })
    }

    pub fn apply(&self, psi: &QuantumState) -> Result<QuantumState> {
        if psi.data.len() != self.data.ncols() {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: operator {} vs state {}",
                self.data.ncols(),
                psi.data.len()
            )));
        }
        Ok(QuantumState { data: &self.data * &psi.data })
    }

    pub fn mul(&self, rhs: &RealIsoMatrix) -> Result<RealIsoMatrix> {
        if self.data.ncols() != rhs.data.nrows() {
            return Err(Error::InvalidInput("dimension mismatch in operator product".into()));
        }
        Ok(Self { data: &self.data * &rhs.data })
    }
}

/// Real-isomorphic 4×4 embedding of a qubit operator.
pub fn iso4(m: &Matrix2<C64>) -> Matrix4<f64> {
    let mut out = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + 2, j + 2)] = z.re;
            out[(i, j + 2)] = -z.im;
            out[(i + 2, j)] = z.im;
        }
    }
    out
}

/// Applies a qubit operator to a real-isomorphic 4-vector.
#[inline]
pub fn apply_qubit(m: &Matrix2<C64>, psi: &[f64]) -> Vector4<f64> {
    let a = C64::new(psi[0], psi[2]);
    let b = C64::new(psi[1], psi[3]);
    let r0 = m[(0, 0)] * a + m[(0, 1)] * b;
    let r1 = m[(1, 0)] * a + m[(1, 1)] * b;
    Vector4::new(r0.re, r1.re, r0.im, r1.im)
}

pub fn embed_matrix(m: &DMatrix<C64>) -> Result<RealIsoMatrix> {
    RealIsoMatrix::from_complex(m)
}

pub fn embed_state(psi: &[C64]) -> Result<QuantumState> {
    QuantumState::from_complex(psi)
}

pub fn extract_matrix(m: &RealIsoMatrix) -> DMatrix<C64> {
    m.to_complex()
}

pub fn extract_state(psi: &QuantumState) -> Vec<C64> {
    psi.to_complex()
}

/// Two-level fluxonium parameters near the flux-frustration point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FluxoniumParams {
    /// Qubit frequency at the frustration point, GHz.
    pub f_q: f64,
    /// Flux amplitude bound, GHz.
    pub a_max: f64,
}

impl Default for FluxoniumParams {
    fn default() -> Self {
        Self { f_q: 0.0139, a_max: 0.5 }
    }
}

impl FluxoniumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_q > 0.0 && self.f_q.is_finite()) {
            return Err(Error::Config(format!("f_q must be positive, got {}", self.f_q)));
        }
        if !(self.a_max > 0.0 && self.a_max.is_finite()) {
            return Err(Error::Config(format!("a_max must be positive, got {}", self.a_max)));
        }
        Ok(())
    }

    /// Larmor period 1/f_q in ns.
    pub fn larmor_period(&self) -> f64 {
        1.0 / self.f_q
    }
}

/// H = 2π(f_q σz/2 + a σx/2) as a complex 2×2 matrix.
pub fn qubit_hamiltonian(a: f64, f_q: f64) -> Matrix2<C64> {
    (sigma_z() * C64::from(f_q) + sigma_x() * C64::from(a)) * C64::from(PI)
}

pub fn hamiltonian(a: f64, p: &FluxoniumParams) -> RealIsoMatrix {
    RealIsoMatrix::from_qubit(&qubit_hamiltonian(a, p.f_q))
}

/// exp(-iπ dt (f σz + a σx)) from the Pauli closed form.
pub fn qubit_propagator(a: f64, f: f64, dt: f64) -> Matrix2<C64> {
    let omega = (f * f + a * a).sqrt();
    let phi = PI * dt * omega;
    let s = PI * dt * sinc(phi);
    let c = phi.cos();
    Matrix2::new(
        C64::new(c, -s * f),
        C64::new(0.0, -s * a),
        C64::new(0.0, -s * a),
        C64::new(c, s * f),
    )
}

/// Propagator together with its derivatives with respect to the flux `a`,
/// the qubit frequency `f` and the step duration `dt`.
#[derive(Debug, Clone, Copy)]
pub struct PropagatorDerivs {
    pub u: Matrix2<C64>,
    pub du_da: Matrix2<C64>,
    pub du_df: Matrix2<C64>,
    pub du_ddt: Matrix2<C64>,
}

pub fn qubit_propagator_derivs(a: f64, f: f64, dt: f64) -> PropagatorDerivs {
    let omega = (f * f + a * a).sqrt();
    let pdt = PI * dt;
    let phi = pdt * omega;
    let s = pdt * sinc(phi);
    // g = (ds/dΩ)/Ω
    let g = pdt * pdt * pdt * sinc_deriv_over_phi(phi);
    let m = sigma_z() * C64::from(f) + sigma_x() * C64::from(a);
    let id = Matrix2::<C64>::identity();
    let u = qubit_propagator(a, f, dt);
    let du_da = id * C64::from(-pdt * a * s) - (m * C64::from(a * g) + sigma_x() * C64::from(s)) * I;
    let du_df = id * C64::from(-pdt * f * s) - (m * C64::from(f * g) + sigma_z() * C64::from(s)) * I;
    let du_ddt = -(m * u) * C64::new(0.0, PI);
    PropagatorDerivs { u, du_da, du_df, du_ddt }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// (x cos x - sin x) / x³, the derivative of sinc divided by x.
fn sinc_deriv_over_phi(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        -1.0 / 3.0 + x * x / 30.0
    } else {
        (x * x.cos() - x.sin()) / (x * x * x)
    }
}

/// Exact step exp(-iH dt). Qubits use the Pauli closed form; larger systems
/// fall back to a general complex matrix exponential.
pub fn propagator(h: &RealIsoMatrix, dt: f64) -> RealIsoMatrix {
    let hc = h.to_complex();
    if hc.nrows() == 2 {
        let h0 = (hc[(0, 0)].re + hc[(1, 1)].re) / 2.0;
        let hx = hc[(1, 0)].re;
        let hy = hc[(1, 0)].im;
        let hz = (hc[(0, 0)].re - hc[(1, 1)].re) / 2.0;
        let norm = (hx * hx + hy * hy + hz * hz).sqrt();
        let theta = norm * dt;
        // sin(θ)/|h| without dividing by zero
        let s = dt * sinc(theta);
        let c = theta.cos();
        let phase = C64::from_polar(1.0, -h0 * dt);
        let u = Matrix2::new(
            C64::new(c, -s * hz),
            C64::new(-s * hy, -s * hx),
            C64::new(s * hy, -s * hx),
            C64::new(c, s * hz),
        ) * phase;
        RealIsoMatrix::from_qubit(&u)
    } else {
        let gen = hc * C64::new(0.0, -dt);
        RealIsoMatrix::from_complex(&gen.exp()).expect("square")
    }
}

/// Overlap-squared fidelity |⟨a|b⟩|² of two normalized states.
pub fn fidelity(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    if a.data.len() != b.data.len() {
        return Err(Error::InvalidInput("states have different dimensions".into()));
    }
    for (name, s) in [("first", a), ("second", b)] {
        let dev = (s.norm_squared() - 1.0).abs();
        if dev > 1e-6 {
            return Err(Error::InvalidInput(format!("{name} state is not normalized (|norm^2 - 1| = {dev:e})")));
        }
    }
    Ok(a.inner(b).norm_sqr().clamp(0.0, 1.0))
}

/// {|0⟩, |1⟩, (|0⟩+i|1⟩)/√2, (|0⟩−|1⟩)/√2}: outer products span all qubit operators.
pub fn operator_basis() -> [QuantumState; 4] {
    let h = FRAC_1_SQRT_2;
    [
        QuantumState::basis(2, 0),
        QuantumState::basis(2, 1),
        QuantumState::from_slice(&[h, 0.0, 0.0, h]).expect("even"),
        QuantumState::from_slice(&[h, -h, 0.0, 0.0]).expect("even"),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    #[serde(rename = "X/2")]
    XHalf,
    #[serde(rename = "Y/2")]
    YHalf,
    #[serde(rename = "Z/2")]
    ZHalf,
    #[serde(rename = "custom")]
    Custom,
}

/// Target gate with a fixed global phase: targets are U|ψ⟩ with U as written.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTarget {
    pub kind: GateKind,
    matrix: RealIsoMatrix,
}

impl GateTarget {
    /// X/2, Y/2 and Z/2 are the π/2 rotations exp(-iπσ/4).
    pub fn new(kind: GateKind) -> Result<Self> {
        let sigma = match kind {
            GateKind::XHalf => sigma_x(),
            GateKind::YHalf => sigma_y(),
            GateKind::ZHalf => sigma_z(),
            GateKind::Custom => {
                return Err(Error::InvalidInput("custom gates need an explicit matrix".into()))
            }
        };
        let c = C64::from((PI / 4.0).cos());
        let s = C64::new(0.0, -(PI / 4.0).sin());
        let u = Matrix2::identity() * c + sigma * s;
        Ok(Self { kind, matrix: RealIsoMatrix::from_qubit(&u) })
    }

    pub fn custom(u: &DMatrix<C64>) -> Result<Self> {
        let n = u.nrows();
        if !u.is_square() {
            return Err(Error::InvalidInput("gate matrix must be square".into()));
        }
        let err = (u.adjoint() * u - DMatrix::<C64>::identity(n, n)).norm();
        if err > 1e-12 {
            return Err(Error::InvalidInput(format!("gate matrix is not unitary (|U†U - I| = {err:e})")));
        }
        Ok(Self { kind: GateKind::Custom, matrix: RealIsoMatrix::from_complex(u)? })
    }

    pub fn matrix(&self) -> &RealIsoMatrix {
        &self.matrix
    }

    pub fn qubit_matrix(&self) -> Matrix2<C64> {
        let c = self.matrix.to_complex();
        Matrix2::new(c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)])
    }

    pub fn target_state(&self, initial: &QuantumState) -> Result<QuantumState> {
        self.matrix.apply(initial)
    }

    /// U^k, the target after k successive applications.
    pub fn power(&self, k: usize) -> RealIsoMatrix {
        let mut out = RealIsoMatrix::identity(self.matrix.levels());
        for _ in 0..k {
            out = self.matrix.mul(&out).expect("same size");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<C64> {
        DMatrix::from_fn(r, c, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn embed_identity_and_imaginary_unit() {
        let id = RealIsoMatrix::from_complex(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(id.data(), &DMatrix::<f64>::identity(4, 4));
        let iid = RealIsoMatrix::from_complex(&(DMatrix::<C64>::identity(2, 2) * I)).unwrap();
        let mut expect = DMatrix::<f64>::zeros(4, 4);
        for i in 0..2 {
            expect[(i, i + 2)] = -1.0;
            expect[(i + 2, i)] = 1.0;
        }
        assert_eq!(iid.data(), &expect);
        assert!(iid.is_block_symmetric(0.0));
    }

    #[test]
    fn embedded_product_matches_complex_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 3] {
            let h = random_complex(&mut rng, n, n);
            let psi: Vec<C64> = random_complex(&mut rng, n, 1).iter().copied().collect();
            let direct = &h * DVector::from_column_slice(&psi);
            let out = embed_matrix(&h).unwrap().apply(&embed_state(&psi).unwrap()).unwrap();
            for (a, b) in extract_state(&out).iter().zip(direct.iter()) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn embed_rejects_bad_dimensions() {
        assert!(RealIsoMatrix::from_complex(&DMatrix::zeros(2, 3)).is_err());
        assert!(QuantumState::from_slice(&[1.0, 0.0, 0.0]).is_err());
        let m = RealIsoMatrix::identity(2);
        assert!(m.apply(&QuantumState::basis(3, 0)).is_err());
    }

    #[test]
    fn hamiltonian_limits() {
        let p = FluxoniumParams { f_q: 0.3, a_max: 0.5 };
        let h0 = hamiltonian(0.0, &p).to_complex();
        assert_abs_diff_eq!(h0[(0, 0)].re, 2.0 * PI * 0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(h0[(1, 1)].re, -2.0 * PI * 0.15, epsilon = 1e-15);
        assert_eq!(h0[(0, 1)], C64::new(0.0, 0.0));
        let p0 = FluxoniumParams { f_q: 0.0, a_max: 0.5 };
        let hx = hamiltonian(0.2, &p0).to_complex();
        assert_eq!(hx[(0, 0)], C64::new(0.0, 0.0));
        assert_abs_diff_eq!(hx[(0, 1)].re, 2.0 * PI * 0.1, epsilon = 1e-15);
    }

    #[test]
    fn hamiltonian_eigenvalues_closed_form() {
        let p = FluxoniumParams { f_q: 0.0139, a_max: 0.5 };
        for a in [0.0, 0.1, -0.37] {
            let h = hamiltonian(a, &p).to_complex();
            // 2x2 Hermitian: eigenvalues from trace and determinant
            let tr = (h[(0, 0)] + h[(1, 1)]).re;
            let det = (h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)]).re;
            let disc = (tr * tr / 4.0 - det).sqrt();
            let expect = PI * (p.f_q * p.f_q + a * a).sqrt();
            assert_abs_diff_eq!(tr / 2.0 + disc, expect, epsilon = 1e-13);
            assert_abs_diff_eq!(tr / 2.0 - disc, -expect, epsilon = 1e-13);
        }
    }

    #[test]
    fn idle_quarter_period_is_z_half() {
        let p = FluxoniumParams::default();
        let u = propagator(&hamiltonian(0.0, &p), 1.0 / (4.0 * p.f_q)).to_complex();
        let rel = u[(1, 1)] / u[(0, 0)];
        assert_abs_diff_eq!(rel.arg(), PI / 2.0, epsilon = 1e-12);
        let target = GateTarget::new(GateKind::ZHalf).unwrap().matrix().to_complex();
        assert!((u - target).norm() < 1e-12);
    }

    #[test]
    fn propagator_identity_inverse_and_orthogonal() {
        let p = FluxoniumParams::default();
        let h = hamiltonian(0.23, &p);
        assert!((propagator(&h, 0.0).data() - DMatrix::<f64>::identity(4, 4)).norm() < 1e-15);
        let u = propagator(&h, 1.7);
        let back = propagator(&h, -1.7);
        assert!((u.data() * back.data() - DMatrix::<f64>::identity(4, 4)).norm() < 1e-12);
        assert!((u.data().transpose() * u.data() - DMatrix::<f64>::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn propagator_general_fallback_agrees_for_three_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_complex(&mut rng, 3, 3);
        let h = (&a + a.adjoint()) * C64::from(0.5);
        let u = propagator(&RealIsoMatrix::from_complex(&h).unwrap(), 0.8);
        let d = u.data();
        assert!((d.transpose() * d - DMatrix::<f64>::identity(6, 6)).norm() < 1e-12);
    }

    #[test]
    fn qubit_propagator_matches_generic_route() {
        let p = FluxoniumParams::default();
        for (a, dt) in [(0.0, 0.1), (0.31, 0.1), (-0.5, 2.3)] {
            let direct = RealIsoMatrix::from_qubit(&qubit_propagator(a, p.f_q, dt));
            let generic = propagator(&hamiltonian(a, &p), dt);
            assert!((direct.data() - generic.data()).norm() < 1e-13);
        }
    }

    #[test]
    fn propagator_derivatives_match_finite_differences() {
        let eps = 1e-6;
        for (a, f, dt) in [(0.2, 0.0139, 0.1), (0.0, 0.0139, 3.0), (1e-7, 0.0, 0.5), (-0.4, 0.05, 1.3)] {
            let d = qubit_propagator_derivs(a, f, dt);
            let fd_a = (qubit_propagator(a + eps, f, dt) - qubit_propagator(a - eps, f, dt)) / C64::from(2.0 * eps);
            let fd_f = (qubit_propagator(a, f + eps, dt) - qubit_propagator(a, f - eps, dt)) / C64::from(2.0 * eps);
            let fd_t = (qubit_propagator(a, f, dt + eps) - qubit_propagator(a, f, dt - eps)) / C64::from(2.0 * eps);
            assert!((d.du_da - fd_a).norm() < 1e-7, "a {a} f {f}");
            assert!((d.du_df - fd_f).norm() < 1e-7);
            assert!((d.du_ddt - fd_t).norm() < 1e-7);
        }
    }

    #[test]
    fn fidelity_examples() {
        let b = operator_basis();
        assert_abs_diff_eq!(fidelity(&b[0], &b[0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&b[0], &b[1]).unwrap(), 0.0, epsilon = 1e-15);
        let plus = QuantumState::from_slice(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(fidelity(&b[0], &plus).unwrap(), 0.5, epsilon = 1e-15);
        let bad = QuantumState::from_slice(&[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(fidelity(&b[0], &bad).is_err());
    }

    #[test]
    fn operator_basis_spans_operator_space() {
        let basis = operator_basis();
        for s in &basis {
            assert_abs_diff_eq!(s.norm_squared(), 1.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(basis[2].as_slice()[3], FRAC_1_SQRT_2, epsilon = 1e-16);
        // vectorized outer products |ψ⟩⟨ψ| as rows of a 4x4 complex matrix
        let rows: Vec<Vec<C64>> = basis
            .iter()
            .map(|s| {
                let c = s.to_complex();
                let mut v = Vec::new();
                for i in 0..2 {
                    for j in 0..2 {
                        v.push(c[i] * c[j].conj());
                    }
                }
                v
            })
            .collect();
        let gram = DMatrix::from_fn(4, 4, |i, j| {
            rows[i].iter().zip(&rows[j]).map(|(a, b)| a.conj() * b).sum::<C64>()
        });
        let sv = gram.singular_values();
        assert!(sv.iter().all(|&x| x > 1e-8), "rank deficient: {sv}");
    }

    #[test]
    fn gate_targets_are_unitary_and_phase_fixed() {
        for kind in [GateKind::XHalf, GateKind::YHalf, GateKind::ZHalf] {
            let g = GateTarget::new(kind).unwrap();
            let u = g.matrix().to_complex();
            assert!((u.adjoint() * &u - DMatrix::<C64>::identity(2, 2)).norm() < 1e-12);
        }
        let x = GateTarget::new(GateKind::XHalf).unwrap();
        let t = x.target_state(&QuantumState::basis(2, 0)).unwrap().to_complex();
        assert_abs_diff_eq!(t[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(t[1].im, -FRAC_1_SQRT_2, epsilon = 1e-15);
        assert!(GateTarget::custom(&DMatrix::from_element(2, 2, C64::from(1.0))).is_err());
    }

    proptest::proptest! {
        #[test]
        fn embedding_is_a_homomorphism(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_complex(&mut rng, 2, 2);
            let b = random_complex(&mut rng, 2, 2);
            let lhs = embed_matrix(&(&a * &b)).unwrap();
            let rhs = embed_matrix(&a).unwrap().mul(&embed_matrix(&b).unwrap()).unwrap();
            proptest::prop_assert!((lhs.data() - rhs.data()).norm() < 1e-13);
        }

        #[test]
        fn propagator_preserves_norm(a in -0.5f64..0.5, dt in 0.0f64..50.0, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi = QuantumState::from_slice(&[rng.gen(), rng.gen(), rng.gen(), rng.gen()]).unwrap();
            let u = propagator(&hamiltonian(a, &FluxoniumParams::default()), dt);
            let out = u.apply(&psi).unwrap();
            proptest::prop_assert!((out.data().norm() - psi.data().norm()).abs() < 1e-12);
        }

        #[test]
        fn propagator_matches_rabi_formula(a in -0.5f64..0.5, t in 0.0f64..40.0) {
            let f = 0.0139;
            let omega = (f * f + a * a).sqrt();
            let theta = PI * t * omega;
            let n_sigma = (sigma_z() * C64::from(f / omega) + sigma_x() * C64::from(a / omega)) * C64::new(0.0, -theta.sin());
            let rabi = Matrix2::identity() * C64::from(theta.cos()) + n_sigma;
            let u = propagator(&hamiltonian(a, &FluxoniumParams::default()), t);
            proptest::prop_assert!((u.data() - RealIsoMatrix::from_qubit(&rabi).data()).norm() < 1e-12);
        }

        #[test]
        fn fidelity_is_global_phase_invariant(phi in -10.0f64..10.0, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = QuantumState::from_slice(&[rng.gen(), rng.gen(), rng.gen(), rng.gen()]).unwrap().normalized();
            let b = QuantumState::from_slice(&[rng.gen(), rng.gen(), rng.gen(), rng.gen()]).unwrap().normalized();
            let f0 = fidelity(&a, &b).unwrap();
            let f1 = fidelity(&a, &b.rotate_phase(phi)).unwrap();
            proptest::prop_assert!((f0 - f1).abs() < 1e-14);
            proptest::prop_assert!((f0 - fidelity(&b, &a).unwrap()).abs() < 1e-15);
        }
    }
}
