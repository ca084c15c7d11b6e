//! Vectorized Lindblad evolution of a qubit with flux-dependent relaxation.

use nalgebra::{Matrix2, Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::noise::T1Interpolant;
use crate::quantum::{qubit_hamiltonian, QuantumState, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(pub Matrix2<C64>);

impl DensityMatrix {
    pub fn pure(psi: &QuantumState) -> Result<Self> {
        if psi.levels() != 2 {
            return Err(Error::InvalidInput("density matrices are qubit-only".into()));
        }
        let c = psi.to_complex();
        let v = nalgebra::Vector2::new(c[0], c[1]);
        Ok(Self(v * v.adjoint()))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint()).camax()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.0 + self.0.adjoint()) * C64::from(0.5);
        let mean = 0.5 * (h[(0, 0)].re + h[(1, 1)].re);
        let half_gap = (0.25 * (h[(0, 0)].re - h[(1, 1)].re).powi(2) + h[(0, 1)].norm_sqr()).sqrt();
        mean - half_gap
    }

    /// ⟨ψ|ρ|ψ⟩.
    pub fn overlap(&self, psi: &QuantumState) -> f64 {
        let c = psi.to_complex();
        let v = nalgebra::Vector2::new(c[0], c[1]);
        (v.adjoint() * self.0 * v)[(0, 0)].re
    }

    /// Population of the second basis state.
    pub fn excited_population(&self) -> f64 {
        self.0[(1, 1)].re
    }

    /// Column-major vectorization.
    pub fn vec(&self) -> Vector4<C64> {
        Vector4::new(self.0[(0, 0)], self.0[(1, 0)], self.0[(0, 1)], self.0[(1, 1)])
    }

    pub fn from_vec(v: &Vector4<C64>) -> Self {
        Self(Matrix2::new(v[0], v[2], v[1], v[3]))
    }
}

/// Raising and lowering channels at equal rates 1/(2·T1(a)); `t1 = None`
/// switches dissipation off.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    pub f_q: f64,
    pub t1: Option<T1Interpolant>,
}

fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

impl LindbladModel {
    /// (γ₊, γ₋) in 1/ns at flux `a`.
    pub fn rates(&self, a: f64) -> Result<(f64, f64)> {
        match &self.t1 {
            None => Ok((0.0, 0.0)),
            Some(t1) => {
                let t = t1.t1_ns(a);
                if !(t > 0.0) {
                    return Err(Error::Model(format!("non-positive T1 at flux {a}")));
                }
                Ok((0.5 / t, 0.5 / t))
            }
        }
    }

    /// Generator acting on column-major vec(ρ):
    /// −i(I⊗H − Hᵀ⊗I) + Σ γ (L*⊗L − ½ I⊗L†L − ½ (L†L)ᵀ⊗I).
    pub fn generator(&self, a: f64) -> Result<Matrix4<C64>> {
        let h = qubit_hamiltonian(a, self.f_q);
        let id = Matrix2::<C64>::identity();
        let mi = C64::new(0.0, -1.0);
        let mut l = (kron(&id, &h) - kron(&h.transpose(), &id)) * mi;
        let (g_up, g_down) = self.rates(a)?;
        let one = C64::from(1.0);
        let zero = C64::from(0.0);
        // σ⁺ = |1⟩⟨0|, σ⁻ = |0⟩⟨1|
        let raise = Matrix2::new(zero, zero, one, zero);
        let lower = Matrix2::new(zero, one, zero, zero);
        for (g, op) in [(g_up, raise), (g_down, lower)] {
            if g == 0.0 {
                continue;
            }
            let ll = op.adjoint() * op;
            let d = kron(&op.conjugate(), &op) - (kron(&id, &ll) + kron(&ll.transpose(), &id)) * C64::from(0.5);
            l += d * C64::from(g);
        }
        Ok(l)
    }

    /// exp(dt·L) at flux `a`.
    pub fn step_map(&self, a: f64, dt: f64) -> Result<Matrix4<C64>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("step duration must be positive, got {dt}")));
        }
        Ok((self.generator(a)? * C64::from(dt)).exp())
    }
}

/// One step of length `dt` with the flux (and hence rates) held at `a`.
pub fn lindblad_step(rho: &DensityMatrix, a: f64, dt: f64, model: &LindbladModel) -> Result<DensityMatrix> {
    let m = model.step_map(a, dt)?;
    Ok(DensityMatrix::from_vec(&(m * rho.vec())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::qubit_propagator;

    fn excited() -> DensityMatrix {
        DensityMatrix::pure(&QuantumState::basis(2, 1)).unwrap()
    }

    fn mixed_state() -> DensityMatrix {
        let psi = QuantumState::from_slice(&[0.6, 0.0, 0.0, 0.8]).unwrap();
        DensityMatrix::pure(&psi).unwrap()
    }

    #[test]
    fn closed_limit_is_unitary_conjugation() {
        let model = LindbladModel { f_q: 0.0139, t1: None };
        let rho = mixed_state();
        for (a, dt) in [(0.0, 0.1), (0.2, 0.37), (-0.41, 2.0)] {
            let u = qubit_propagator(a, 0.0139, dt);
            let expect = u * rho.0 * u.adjoint();
            let got = lindblad_step(&rho, a, dt, &model).unwrap();
            assert!((got.0 - expect).camax() < 1e-12);
        }
    }

    #[test]
    fn free_decay_matches_rate_equation() {
        let t1_us = 2.0;
        let t1_ns = t1_us * 1e3;
        let model = LindbladModel { f_q: 0.0, t1: Some(T1Interpolant::flat(t1_us).unwrap()) };
        let mut rho = excited();
        let dt = t1_ns / 200.0;
        for k in 1..=200 {
            rho = lindblad_step(&rho, 0.0, dt, &model).unwrap();
            let t = k as f64 * dt;
            let p = 0.5 + 0.5 * (-t / t1_ns).exp();
            assert!((rho.excited_population() - p).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn relaxes_to_maximally_mixed() {
        let model = LindbladModel { f_q: 0.0139, t1: Some(T1Interpolant::flat(1e-3).unwrap()) };
        let rho = lindblad_step(&mixed_state(), 0.1, 50.0, &model).unwrap();
        let half = Matrix2::<C64>::identity() * C64::from(0.5);
        assert!((rho.0 - half).camax() < 1e-9);
    }

    #[test]
    fn trace_hermiticity_and_positivity_over_many_steps() {
        let model = LindbladModel { f_q: 0.0139, t1: Some(T1Interpolant::synthetic()) };
        let mut rho = mixed_state();
        for k in 0..10_000 {
            let a = 0.3 * (k as f64 * 0.01).sin();
            rho = lindblad_step(&rho, a, 0.5, &model).unwrap();
            assert!((rho.trace() - C64::from(1.0)).norm() <= 1e-10);
            assert!(rho.min_eigenvalue() >= -1e-9);
        }
        assert!(rho.hermiticity_error() < 1e-12);
    }

    #[test]
    fn single_exponential_matches_fine_substeps() {
        let model = LindbladModel { f_q: 0.0139, t1: Some(T1Interpolant::flat(0.05).unwrap()) };
        let rho0 = mixed_state();
        let dt = 3.0;
        let coarse = lindblad_step(&rho0, 0.17, dt, &model).unwrap();
        let mut fine = rho0;
        for _ in 0..100 {
            fine = lindblad_step(&fine, 0.17, dt / 100.0, &model).unwrap();
        }
        assert!((coarse.0 - fine.0).camax() < 1e-8);
    }
}
