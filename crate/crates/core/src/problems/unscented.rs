//! Sigma-point resampling and propagation for the unscented robustness
//! method.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::robust_cholesky;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnscentedConfig {
    /// Contour spacing of the sigma points.
    pub beta: f64,
    /// Standard deviation of the isotropic initial state covariance.
    pub initial_std: f64,
}

impl Default for UnscentedConfig {
    fn default() -> Self {
        Self { beta: 1.0, initial_std: 1e-4 }
    }
}

impl UnscentedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.initial_std > 0.0) {
            return Err(Error::Config("unscented beta and initial_std must be positive".into()));
        }
        Ok(())
    }
}

/// Column and sign of each sigma point: all (+) columns, then all (−).
pub fn sigma_signs(state_dim: usize, param_dim: usize) -> Vec<(usize, f64)> {
    let m = state_dim + param_dim;
    (0..m).map(|c| (c, 1.0)).chain((0..m).map(|c| (c, -1.0))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoints {
    pub states: Vec<DVector<f64>>,
    pub params: Vec<DVector<f64>>,
}

/// Sigma points at ±β·(columns of chol(blockdiag(P, L))) around (ψ̄, 0),
/// optionally renormalized.
pub fn unscented_resample(
    mean: &DVector<f64>,
    p: &DMatrix<f64>,
    l: &DMatrix<f64>,
    beta: f64,
    normalize: bool,
) -> Result<SigmaPoints> {
    let q = mean.len();
    let d = l.nrows();
    if p.nrows() != q || p.ncols() != q || l.ncols() != d {
        return Err(Error::InvalidInput("covariance dimensions do not match the mean".into()));
    }
    let mut joint = DMatrix::zeros(q + d, q + d);
    joint.view_mut((0, 0), (q, q)).copy_from(p);
    joint.view_mut((q, q), (d, d)).copy_from(l);
    let chol = robust_cholesky(&joint)?.l();
    let mut states = Vec::with_capacity(2 * (q + d));
    let mut params = Vec::with_capacity(2 * (q + d));
    for (col, sign) in sigma_signs(q, d) {
        let offset = chol.column(col) * (beta * sign);
        let mut s = mean + offset.rows(0, q);
        if normalize {
            let n = s.norm();
            if !(n > 0.0) {
                return Err(Error::Numeric("zero-norm sigma point".into()));
            }
            s /= n;
        }
        states.push(s);
        params.push(offset.rows(q, d).into_owned());
    }
    Ok(SigmaPoints { states, params })
}

/// Arithmetic mean and covariance (1/(2β²))·Σ(ψ_j − ψ̄)(ψ_j − ψ̄)ᵀ.
pub fn sample_mean_cov(samples: &[DVector<f64>], beta: f64) -> (DVector<f64>, DMatrix<f64>) {
    let q = samples[0].len();
    let mut mean = DVector::zeros(q);
    for s in samples {
        mean += s;
    }
    mean /= samples.len() as f64;
    let mut cov = DMatrix::zeros(q, q);
    for s in samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    cov /= 2.0 * beta * beta;
    (mean, cov)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnscentedStep {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// The propagated samples, before resampling.
    pub samples: Vec<DVector<f64>>,
}

/// Steps each sigma point through `f(state, param)` and summarizes the
/// result.
pub fn unscented_propagate(
    points: &SigmaPoints,
    f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    beta: f64,
) -> UnscentedStep {
    let samples: Vec<DVector<f64>> = points.states.iter().zip(&points.params).map(|(s, l)| f(s, l)).collect();
    let (mean, cov) = sample_mean_cov(&samples, beta);
    UnscentedStep { mean, cov, samples }
}

/// Unnormalized sigma points of (ψ̄, P) with the parameter columns
/// collapsed to ψ̄; their sample covariance is exactly P.
pub fn initial_sigma_states(mean: &DVector<f64>, p: &DMatrix<f64>, param_dim: usize, beta: f64) -> Result<Vec<DVector<f64>>> {
    let l = DMatrix::identity(param_dim, param_dim);
    Ok(unscented_resample(mean, p, &l, beta, false)?.states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() * 1e-3 + DMatrix::identity(n, n) * 1e-4
    }

    #[test]
    fn diagonal_factor_gives_axis_points() {
        let eps = 1e-3;
        let mean = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let pts =
            unscented_resample(&mean, &(DMatrix::identity(4, 4) * eps * eps), &DMatrix::from_element(1, 1, eps * eps), 1.0, false)
                .unwrap();
        assert_eq!(pts.states.len(), 10);
        for (j, (c, s)) in sigma_signs(4, 1).into_iter().enumerate() {
            let mut expect = mean.clone();
            if c < 4 {
                expect[c] += s * eps;
                assert_eq!(pts.params[j][0], 0.0);
            } else {
                assert!((pts.params[j][0] - s * eps).abs() < 1e-18);
            }
            assert!((&pts.states[j] - expect).amax() < 1e-15);
        }
        let lam_mean: f64 = pts.params.iter().map(|l| l[0]).sum();
        assert_eq!(lam_mean, 0.0);
    }

    #[test]
    fn normalized_points_have_unit_norm() {
        let mean = DVector::from_vec(vec![0.6, 0.0, 0.0, 0.8]);
        let pts = unscented_resample(&mean, &random_spd(4, 1), &DMatrix::from_element(1, 1, 1e-6), 1.0, true).unwrap();
        for s in &pts.states {
            assert!((s.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reconstruction_returns_covariance() {
        for beta in [0.5, 1.0, 2.0] {
            let mean = DVector::from_vec(vec![0.6, 0.1, -0.2, 0.7]);
            let p = random_spd(4, 7);
            let pts = unscented_resample(&mean, &p, &DMatrix::from_element(1, 1, 1e-6), beta, false).unwrap();
            let (m, c) = sample_mean_cov(&pts.states, beta);
            assert!((m - &mean).amax() < 1e-15);
            assert!((c - &p).amax() < 1e-10);
        }
    }

    #[test]
    fn linear_map_is_propagated_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let mean = DVector::from_vec(vec![0.3, -0.1, 0.4, 0.2]);
        let p = random_spd(4, 9);
        let pts = unscented_resample(&mean, &p, &DMatrix::from_element(1, 1, 1e-4), 1.0, false).unwrap();
        let out = unscented_propagate(&pts, |s, _| &m * s, 1.0);
        assert!((out.mean - &m * &mean).amax() < 1e-12);
        assert!((out.cov - &m * &p * m.transpose()).amax() < 1e-10);
    }

    #[test]
    fn identity_dynamics_preserve_summary() {
        let mean = DVector::from_vec(vec![0.6, 0.1, -0.2, 0.7]);
        let p = random_spd(4, 3);
        let pts = unscented_resample(&mean, &p, &DMatrix::from_element(1, 1, 1e-6), 1.0, false).unwrap();
        let out = unscented_propagate(&pts, |s, _| s.clone(), 1.0);
        assert!((out.mean - mean).amax() < 1e-15);
        assert!((out.cov - p).amax() < 1e-12);
    }

    #[test]
    fn initial_states_reproduce_covariance() {
        let mean = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let p = DMatrix::identity(4, 4) * 1e-8;
        let s = initial_sigma_states(&mean, &p, 1, 1.0).unwrap();
        let (m, c) = sample_mean_cov(&s, 1.0);
        assert!((m - mean).amax() < 1e-16);
        assert!((c - p).amax() < 1e-20);
    }

    #[test]
    fn non_spd_covariance_is_rejected() {
        let mean = DVector::zeros(2);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            unscented_resample(&mean, &p, &DMatrix::from_element(1, 1, 1.0), 1.0, false),
            Err(Error::Model(_))
        ));
    }
}
