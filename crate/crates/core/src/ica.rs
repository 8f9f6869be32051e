//! Centering, eigen-whitening and symmetric FastICA with the log-cosh contrast.
//!
//! Blocks are `n x m` matrices with one observation per row.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a covariance counts as singular.
pub const SINGULAR_EPS: f64 = 1e-9;

/// Affine map `s = W (x - mean)` together with its inverse `x = A s + mean`.
#[derive(Clone, Debug, PartialEq)]
pub struct IcaTransform {
    pub mean: DVector<f64>,
    pub unmixing: DMatrix<f64>,
    pub mixing: DMatrix<f64>,
    /// `ln |det W|`, the log density correction of the transform.
    pub log_abs_det_unmixing: f64,
}

impl IcaTransform {
    pub fn identity(m: usize) -> Self {
        Self {
            mean: DVector::zeros(m),
            unmixing: DMatrix::identity(m, m),
            mixing: DMatrix::identity(m, m),
            log_abs_det_unmixing: 0.0,
        }
    }

    /// Builds the transform from `W`, inverting it and caching `ln |det W|`.
    pub fn from_unmixing(mean: DVector<f64>, unmixing: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if unmixing.nrows() != m || unmixing.ncols() != m {
            return Err(Error::InvalidArgument(format!(
                "unmixing is {}x{}, mean has length {m}",
                unmixing.nrows(),
                unmixing.ncols()
            )));
        }
        let det = unmixing.clone().lu().determinant();
        let mixing = unmixing
            .clone()
            .try_inverse()
            .filter(|_| det != 0.0 && det.is_finite())
            .ok_or(Error::SingularCovariance { ratio: 0.0 })?;
        Ok(Self {
            mean,
            unmixing,
            mixing,
            log_abs_det_unmixing: det.abs().ln(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `W (x - mean)`, accumulated left to right per component.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let m = self.dim();
        debug_assert_eq!(x.len(), m);
        (0..m)
            .map(|j| {
                let mut acc = 0.0;
                for (k, xk) in x.iter().enumerate() {
                    acc += self.unmixing[(j, k)] * (xk - self.mean[k]);
                }
                acc
            })
            .collect()
    }

    /// `A s + mean`.
    pub fn inverse_transform(&self, s: &[f64]) -> Vec<f64> {
        let m = self.dim();
        debug_assert_eq!(s.len(), m);
        (0..m)
            .map(|k| {
                let mut acc = 0.0;
                for (j, sj) in s.iter().enumerate() {
                    acc += self.mixing[(k, j)] * sj;
                }
                acc + self.mean[k]
            })
            .collect()
    }
}

/// Result of [`fast_ica`]. Running out of iterations is not an error; the
/// last iterate is kept and `converged` is false.
#[derive(Clone, Debug)]
pub struct IcaFit {
    pub transform: IcaTransform,
    pub converged: bool,
    pub iterations: usize,
}

/// Subtracts the column means.
pub fn center(block: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = block.nrows();
    let mean = DVector::from_iterator(
        block.ncols(),
        block.column_iter().map(|c| c.iter().sum::<f64>() / n as f64),
    );
    let mut centered = block.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (centered, mean)
}

/// Whitens a centered block with `K = L^{-1/2} E^T` from the eigendecomposition
/// `C = E L E^T` of the empirical covariance `C = X^T X / n`.
///
/// Returns `(X K^T, K)`.
pub fn whiten(centered: &DMatrix<f64>, eps: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = centered.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument("whitening needs at least 2 rows".into()));
    }
    let cov = centered.tr_mul(centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min < eps * max {
        return Err(Error::SingularCovariance {
            ratio: if max > 0.0 { min / max } else { 0.0 },
        });
    }
    let mut k = eig.eigenvectors.transpose();
    for (i, mut row) in k.row_iter_mut().enumerate() {
        row /= eig.eigenvalues[i].sqrt();
    }
    let whitened = centered * k.transpose();
    Ok((whitened, k))
}

/// `(W W^T)^{-1/2} W`: makes the rows orthonormal without favouring any of them.
fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|d| 1.0 / d.max(f64::MIN_POSITIVE).sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

/// Symmetric (parallel) FastICA on an `n x m` block.
///
/// `n_components` must equal `m`. The returned unmixing maps centered
/// original-space rows to components; in whitened coordinates its rows are
/// orthonormal. Iteration stops once every row direction changes by less than
/// `tol` (`max_i | |<w_new_i, w_i>| - 1 | < tol`) or after `max_iter` rounds.
pub fn fast_ica(
    block: &DMatrix<f64>,
    n_components: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<IcaFit> {
    let (n, m) = block.shape();
    if n_components != m {
        return Err(Error::InvalidArgument(format!(
            "n_components ({n_components}) must equal the number of columns ({m})"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("empty block".into()));
    }
    if n <= m {
        return Err(Error::InvalidArgument(format!(
            "FastICA needs more rows ({n}) than columns ({m})"
        )));
    }
    let (centered, mean) = center(block);
    let (z, k) = whiten(&centered, SINGULAR_EPS)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut w = symmetric_decorrelation(&init);

    let mut converged = false;
    let mut iterations = 0;
    let inv_n = 1.0 / n as f64;
    while iterations < max_iter {
        iterations += 1;
        // Projections y = Z W^T; g = tanh(y), g' = 1 - tanh(y)^2.
        let mut g = &z * w.transpose();
        let mut g_prime_mean = vec![0.0; m];
        for (i, mut col) in g.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                let t = v.tanh();
                *v = t;
                g_prime_mean[i] += 1.0 - t * t;
            }
            g_prime_mean[i] *= inv_n;
        }
        let mut w_new = g.tr_mul(&z) * inv_n;
        for i in 0..m {
            for j in 0..m {
                w_new[(i, j)] -= g_prime_mean[i] * w[(i, j)];
            }
        }
        let w_new = symmetric_decorrelation(&w_new);
        let lim = (0..m)
            .map(|i| (w_new.row(i).dot(&w.row(i)).abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if lim < tol {
            converged = true;
            break;
        }
    }

    let transform = IcaTransform::from_unmixing(mean, &w * k)?;
    Ok(IcaFit {
        transform,
        converged,
        iterations,
    })
}
