//! Kernel functions, their gradients and Gram matrices.
//!
//! Three kernels are supported: linear `z'e`, polynomial `(z'e + c)^d` and
//! Gaussian `exp(-||e - z||^2 / (2 sigma^2))`. Each comes with the analytic
//! gradient with respect to its first argument, which is what the endmember
//! update rules consume.

use crate::error::{Error, Result};
use crate::matrix::{dot, sq_dist, Mat};

/// Kernel choice with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `k(e, z) = z'e`. Recovers the classical factorization.
    Linear,
    /// `k(e, z) = (z'e + offset)^degree` with `offset >= 0`, `degree >= 1`.
    Polynomial { degree: u32, offset: f64 },
    /// `k(e, z) = exp(-||e - z||^2 / (2 bandwidth^2))` with `bandwidth > 0`.
    Gaussian { bandwidth: f64 },
}

impl KernelSpec {
    /// Polynomial kernel, validating `degree >= 1` and `offset >= 0`.
    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        let k = KernelSpec::Polynomial { degree, offset };
        k.validate()?;
        Ok(k)
    }

    /// Gaussian kernel, validating `bandwidth > 0`.
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { bandwidth };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, offset } => {
                if degree < 1 {
                    Err(Error::InvalidParameter(
                        "polynomial degree must be at least 1".into(),
                    ))
                } else if !(offset >= 0.0 && offset.is_finite()) {
                    Err(Error::InvalidParameter(format!(
                        "polynomial offset must be finite and nonnegative, got {offset}"
                    )))
                } else {
                    Ok(())
                }
            }
            KernelSpec::Gaussian { bandwidth } => {
                if bandwidth > 0.0 && bandwidth.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "gaussian bandwidth must be finite and positive, got {bandwidth}"
                    )))
                }
            }
        }
    }

    /// Short lowercase name, used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::Gaussian { .. } => "gaussian",
        }
    }

    /// Kernel value `k(e, z)`.
    pub fn eval(&self, e: &[f64], z: &[f64]) -> Result<f64> {
        check_same_len(e, z)?;
        Ok(self.eval_unchecked(e, z))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, e: &[f64], z: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(z, e),
            KernelSpec::Polynomial { degree, offset } => (dot(z, e) + offset).powi(degree as i32),
            KernelSpec::Gaussian { bandwidth } => {
                (-sq_dist(e, z) / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }

    /// Gradient of `k(e, z)` with respect to `e`.
    pub fn grad(&self, e: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        check_same_len(e, z)?;
        Ok(self.grad_unchecked(e, z))
    }

    #[inline]
    pub(crate) fn grad_unchecked(&self, e: &[f64], z: &[f64]) -> Vec<f64> {
        match *self {
            KernelSpec::Linear => z.to_vec(),
            KernelSpec::Polynomial { degree, offset } => {
                let s = (dot(z, e) + offset).powi(degree as i32 - 1) * degree as f64;
                z.iter().map(|&zl| s * zl).collect()
            }
            KernelSpec::Gaussian { bandwidth } => {
                let s = -self.eval_unchecked(e, z) / (bandwidth * bandwidth);
                e.iter()
                    .zip(z.iter())
                    .map(|(&el, &zl)| s * (el - zl))
                    .collect()
            }
        }
    }

    /// Gradient of `k(e, .)` in its first slot, evaluated at `(e, e)`.
    ///
    /// This is the term the feature-space smoothness penalty adds to the
    /// endmember updates. For the Gaussian kernel it vanishes identically.
    pub fn self_grad(&self, e: &[f64]) -> Vec<f64> {
        match *self {
            KernelSpec::Linear => e.to_vec(),
            KernelSpec::Polynomial { degree, offset } => {
                let s = (dot(e, e) + offset).powi(degree as i32 - 1) * degree as f64;
                e.iter().map(|&el| s * el).collect()
            }
            KernelSpec::Gaussian { .. } => vec![0.0; e.len()],
        }
    }

    /// Symmetric Gram matrix with entry `(n, m) = k(e_n, e_m)`.
    pub fn gram(&self, endmembers: &Mat) -> Mat {
        let n = endmembers.cols();
        let mut g = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.eval_unchecked(endmembers.col(i), endmembers.col(j));
                g.set(i, j, v);
                g.set(j, i, v);
            }
        }
        g
    }

    /// Cross Gram matrix with entry `(n, t) = k(e_n, x_t)`.
    pub fn cross_gram(&self, endmembers: &Mat, data: &Mat) -> Result<Mat> {
        if endmembers.rows() != data.rows() {
            return Err(Error::DimensionMismatch(format!(
                "endmembers have {} rows but data has {}",
                endmembers.rows(),
                data.rows()
            )));
        }
        let n = endmembers.cols();
        let t = data.cols();
        Ok(Mat::from_fn(n, t, |i, j| {
            self.eval_unchecked(endmembers.col(i), data.col(j))
        }))
    }
}

fn check_same_len(e: &[f64], z: &[f64]) -> Result<()> {
    if e.len() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            e.len(),
            z.len()
        )));
    }
    if e.is_empty() {
        return Err(Error::DimensionMismatch("empty vectors".into()));
    }
    Ok(())
}
