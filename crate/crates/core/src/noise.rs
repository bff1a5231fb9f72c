//! First-order autoregressive sensor noise, temporally correlated and
//! spatially white across array elements.
//!
//! The temporal covariance is `R[i][j] = (−a)^|i−j| / (1 − a²)`, the
//! covariance of `e_t = −a e_{t−1} + w_t` with unit-variance innovations. Its
//! inverse is tridiagonal, which every quadratic form in the crate uses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel<T> {
    pub ar_coefficient: T,
    pub num_samples: usize,
}

impl<T: Real> NoiseModel<T> {
    pub fn new(ar_coefficient: T, num_samples: usize) -> Result<Self> {
        let m = Self {
            ar_coefficient,
            num_samples,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ar_coefficient.abs() < T::one()) {
            return Err(Error::NonStationary(self.ar_coefficient.to_f64_lossy()));
        }
        if self.num_samples == 0 {
            return Err(Error::Config("noise num_samples must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_num_samples(&self, num_samples: usize) -> Self {
        Self {
            ar_coefficient: self.ar_coefficient,
            num_samples,
        }
    }

    /// Per-sample noise variance 1/(1 − a²).
    pub fn lag0_variance(&self) -> T {
        let a = self.ar_coefficient;
        T::one() / (T::one() - a * a)
    }

    pub fn autocovariance(&self, lag: usize) -> T {
        (-self.ar_coefficient).powi(lag as i32) * self.lag0_variance()
    }

    /// N×N symmetric Toeplitz temporal covariance.
    pub fn ar1_covariance(&self) -> Result<Matrix<T>> {
        self.validate()?;
        let n = self.num_samples;
        let lags: Vec<T> = (0..n).map(|k| self.autocovariance(k)).collect();
        Ok(Matrix::from_fn(n, n, |i, j| lags[i.abs_diff(j)]))
    }

    /// MN×MN block-diagonal covariance, `I_M ⊗ R`.
    pub fn spatial_block_covariance(&self, num_sensors: usize) -> Result<Matrix<T>> {
        if num_sensors == 0 {
            return Err(Error::Config("num_sensors must be >= 1".into()));
        }
        let r = self.ar1_covariance()?;
        let n = self.num_samples;
        let mut out = Matrix::zeros(n * num_sensors, n * num_sensors);
        for m in 0..num_sensors {
            for i in 0..n {
                for j in 0..n {
                    out[(m * n + i, m * n + j)] = r[(i, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn precision(&self) -> Result<Ar1Precision<T>> {
        self.validate()?;
        Ok(Ar1Precision::new(self.ar_coefficient, self.num_samples))
    }

    pub fn factorize(&self) -> Result<Cholesky<T>> {
        self.ar1_covariance()?.cholesky("AR(1) covariance")
    }

    /// Smallest and largest eigenvalue bounds of R from the AR(1) spectral
    /// density, 1/(1+|a|)² and 1/(1−|a|)².
    pub fn eigenvalue_bounds(&self) -> (T, T) {
        let a = self.ar_coefficient.abs();
        let lo = T::one() / ((T::one() + a) * (T::one() + a));
        let hi = T::one() / ((T::one() - a) * (T::one() - a));
        (lo, hi)
    }
}

/// Exact inverse of the N×N AR(1) covariance: diagonal `[1, 1+a², …, 1+a², 1]`
/// and off-diagonal `a` (`1 − a²` when N = 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ar1Precision<T> {
    a: T,
    n: usize,
}

impl<T: Real> Ar1Precision<T> {
    pub fn new(a: T, n: usize) -> Self {
        Self { a, n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn diag(&self, i: usize) -> T {
        let a2 = self.a * self.a;
        if self.n == 1 {
            T::one() - a2
        } else if i == 0 || i + 1 == self.n {
            T::one()
        } else {
            T::one() + a2
        }
    }

    #[inline]
    pub fn off_diag(&self) -> T {
        self.a
    }

    /// `xᵀ R⁻¹ z` for one N-sample block.
    pub fn bilinear(&self, x: &[T], z: &[T]) -> T {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(z.len(), self.n);
        let mut acc = T::zero();
        for i in 0..self.n {
            acc = acc + x[i] * self.diag(i) * z[i];
        }
        let a = self.a;
        for i in 1..self.n {
            acc = acc + a * (x[i] * z[i - 1] + x[i - 1] * z[i]);
        }
        acc
    }

    /// `R⁻¹ x` for one N-sample block.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.n;
        let a = self.a;
        (0..n)
            .map(|i| {
                let mut v = self.diag(i) * x[i];
                if i > 0 {
                    v = v + a * x[i - 1];
                }
                if i + 1 < n {
                    v = v + a * x[i + 1];
                }
                v
            })
            .collect()
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let n = self.n;
        Matrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag(i)
            } else if i.abs_diff(j) == 1 {
                self.a
            } else {
                T::zero()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_case_is_identity() {
        let m = NoiseModel::new(0.0, 5).unwrap();
        assert_eq!(m.ar1_covariance().unwrap(), Matrix::identity(5));
        assert_eq!(m.spatial_block_covariance(2).unwrap(), Matrix::identity(10));
    }

    #[test]
    fn half_coefficient_entries() {
        let r = NoiseModel::new(0.5f64, 4).unwrap().ar1_covariance().unwrap();
        assert!((r[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((r[(0, 1)] + 2.0 / 3.0).abs() < 1e-15);
        assert!((r[(3, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nonstationary_rejected() {
        assert!(matches!(NoiseModel::new(1.0, 4), Err(Error::NonStationary(_))));
        assert!(matches!(NoiseModel::new(-1.2, 4), Err(Error::NonStationary(_))));
    }

    #[test]
    fn block_structure() {
        let m = NoiseModel::new(0.3, 3).unwrap();
        assert_eq!(m.spatial_block_covariance(1).unwrap(), m.ar1_covariance().unwrap());
        let b = m.spatial_block_covariance(3).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                if i / 3 != j / 3 {
                    assert_eq!(b[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn precision_is_exact_inverse() {
        for &(a, n) in &[(0.5, 1usize), (0.5, 2), (-0.7, 7), (0.93, 16), (0.0, 4)] {
            let m = NoiseModel::new(a, n).unwrap();
            let prod = m.ar1_covariance().unwrap().matmul(&m.precision().unwrap().to_dense());
            assert!(prod.sub(&Matrix::identity(n)).max_abs() < 1e-12, "a={a} n={n}");
        }
    }

    #[test]
    fn precision_apply_and_bilinear_agree_with_dense() {
        let p = NoiseModel::new(-0.4, 6).unwrap().precision().unwrap();
        let x: Vec<f64> = (0..6).map(|i| (i as f64 * 1.3).sin()).collect();
        let z: Vec<f64> = (0..6).map(|i| (i as f64 * 0.7).cos()).collect();
        let dense = p.to_dense();
        let px = dense.matvec(&x);
        for (u, v) in p.apply(&x).iter().zip(&px) {
            assert!((u - v).abs() < 1e-14);
        }
        let expected: f64 = px.iter().zip(&z).map(|(a, b)| a * b).sum();
        assert!((p.bilinear(&x, &z) - expected).abs() < 1e-14);
    }

    #[test]
    fn three_by_three_is_positive_definite() {
        let r = NoiseModel::new(0.5f64, 3).unwrap().ar1_covariance().unwrap();
        let eig = r.symmetric_eigenvalues();
        assert!(eig[0] > 0.0);
        // numpy eigvalsh of [[4,-2,1],[-2,4,-2],[1,-2,4]]/3
        assert!((eig[0] - 0.542_572_892_243_661_5).abs() < 1e-12);
    }
}
