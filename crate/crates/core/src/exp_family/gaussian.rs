use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
#[allow(unused_imports)] // float methods come from std when it is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use super::Model;
use crate::error::{Error, Result};
use crate::numeric::log1p_gap;
use crate::linalg::{cholesky, condition_number, log_det, unpack_symmetric};

/// Multivariate normal `N(mean, cov)` with a positive-definite covariance.
#[derive(Debug, Clone)]
pub struct GaussianParams {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl PartialEq for GaussianParams {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl GaussianParams {
    /// Validates `cov` (exactly symmetric, positive definite) and factors it.
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("Gaussian dimension must be at least 1"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("Gaussian parameters must be finite"));
        }
        for i in 0..d {
            for j in i + 1..d {
                if cov[(i, j)] != cov[(j, i)] {
                    return Err(Error::invalid(format!("covariance is not symmetric at ({i}, {j})")));
                }
            }
        }
        let chol = cholesky(&cov)
            .ok_or_else(|| Error::Degenerate("covariance is not positive definite".into()))?;
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov,
            chol,
        })
    }

    /// `(m, C)` from packed expectation parameters `(m, m m^T + C)`.
    pub(crate) fn from_expectation(dim: usize, eta: &[f64]) -> Result<Self> {
        let mean = eta[..dim].to_vec();
        let second = unpack_symmetric(dim, &eta[dim..]);
        let m = DVector::from_column_slice(&mean);
        let cov = second - &m * m.transpose();
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower-triangular factor `L` with `L L^T = cov`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub(crate) fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim() as f64;
        let diff = DVector::from_column_slice(x) - &self.mean;
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        -0.5 * (d * (2.0 * PI).ln() + log_det(&self.chol) + z.norm_squared())
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<Vec<f64>> {
        let l = self.chol.l();
        let d = self.dim();
        (0..count)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                (&self.mean + &l * z).iter().copied().collect()
            })
            .collect()
    }

    /// Closed-form `KL(self || other)`.
    ///
    /// The trace/log-det part is evaluated as `sum g(u_i)` over the
    /// eigenvalues `u_i` of `L_q^{-1} (C_p - C_q) L_q^{-T}`, with
    /// `g(u) = u - ln(1 + u)`, so nearby distributions keep relative
    /// precision.
    pub(crate) fn kl_divergence(&self, other: &Self) -> f64 {
        let lq = other.chol.l();
        let dm = &other.mean - &self.mean;
        let z = lq
            .solve_lower_triangular(&dm)
            .expect("Cholesky factor has a positive diagonal");
        let diff = &self.cov - &other.cov;
        let half = lq
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        let mut b = lq
            .solve_lower_triangular(&half.transpose())
            .expect("Cholesky factor has a positive diagonal");
        b = (&b + b.transpose()) * 0.5;
        let eig = SymmetricEigen::new(b);
        let spread: f64 = eig.eigenvalues.iter().map(|&u| log1p_gap(u)).sum();
        (0.5 * (spread + z.norm_squared())).max(0.0)
    }
}

const FISHER_STEP: f64 = 1e-3;

/// Hessian of `delta -> KL(eta || eta + delta)` at zero by central
/// differences with one Richardson extrapolation step.
pub(crate) fn numerical_fisher(model: Model, eta: &[f64]) -> Result<DMatrix<f64>> {
    let base = model.params(eta)?;
    let n = eta.len();
    let kl_at = |shift: &[(usize, f64)]| -> Result<f64> {
        let mut moved = eta.to_vec();
        for &(k, s) in shift {
            moved[k] += s;
        }
        base.kl_divergence(&model.params(&moved)?)
    };
    let hessian = |scale: f64| -> Result<DMatrix<f64>> {
        let steps: Vec<f64> = eta.iter().map(|e| scale * e.abs().max(1.0)).collect();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            let hi = steps[i];
            h[(i, i)] = (kl_at(&[(i, hi)])? + kl_at(&[(i, -hi)])?) / (hi * hi);
            for j in 0..i {
                let hj = steps[j];
                let v = (kl_at(&[(i, hi), (j, hj)])? - kl_at(&[(i, hi), (j, -hj)])?
                    - kl_at(&[(i, -hi), (j, hj)])?
                    + kl_at(&[(i, -hi), (j, -hj)])?)
                    / (4.0 * hi * hj);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    };
    let coarse = hessian(FISHER_STEP)?;
    let fine = hessian(FISHER_STEP / 2.0)?;
    let fisher = (fine * 4.0 - coarse) / 3.0;
    if cholesky(&fisher).is_none() {
        return Err(Error::IllConditioned {
            condition: condition_number(&fisher),
        });
    }
    Ok(fisher)
}
