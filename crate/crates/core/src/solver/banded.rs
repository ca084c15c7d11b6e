use crate::error::{Error, Result};

/// Cholesky factor of a symmetric positive-definite band matrix, stored by
/// rows: row `i` holds columns `i - bandwidth ..= i`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    /// `lower(i, j)` for `j ≤ i ≤ j + bandwidth` supplies the matrix.
    pub fn factor(n: usize, bandwidth: usize, lower: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = bandwidth + 1;
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(bandwidth);
            for j in j0..=i {
                data[i * w + (j + bandwidth - i)] = lower(i, j);
            }
        }
        Self::factor_in_place(n, bandwidth, data)
    }

    fn factor_in_place(n: usize, bw: usize, mut data: Vec<f64>) -> Result<Self> {
        let w = bw + 1;
        let at = |i: usize, j: usize| i * w + (j + bw - i);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = data[at(i, j)];
                for k in k0..j {
                    s -= data[at(i, k)] * data[at(j, k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Numeric(format!("band matrix not positive definite at row {i}")));
                    }
                    data[at(i, i)] = s.sqrt();
                } else {
                    data[at(i, j)] = s / data[at(j, j)];
                }
            }
        }
        Ok(Self { n, bw, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let at = |i: usize, j: usize| i * w + (j + bw - i);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[at(i, k)] * y[k];
            }
            y[i] = s / self.data[at(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.data[at(k, i)] * y[k];
            }
            y[i] = s / self.data[at(i, i)];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_dense_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (n, bw) = (40, 5);
        // banded B·Bᵀ is banded with twice B's half-width
        let mut b = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
                b[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        let a = &b * b.transpose() + DMatrix::identity(n, n);
        let f = BandedCholesky::factor(n, bw, |i, j| a[(i, j)]).unwrap();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = f.solve(&rhs);
        let dense = a.clone().cholesky().unwrap().solve(&DVector::from_vec(rhs));
        assert!((DVector::from_vec(x) - dense).amax() < 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        assert!(BandedCholesky::factor(2, 1, |i, j| if i == j { 1.0 } else { 2.0 }).is_err());
    }
}
