use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use super::special::ln_multigamma;
use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `A = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholeskyFactor {
    lower: Matrix,
}

const SYMMETRY_TOL: f64 = 1e-9;

/// Factors a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Result<CholeskyFactor> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape(format!("cholesky needs a square matrix, got {}x{}", n, a.cols())));
    }
    if !a.is_finite() {
        return Err(Error::domain("cholesky input has non-finite entries"));
    }
    let scale = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::domain(format!("cholesky input is not symmetric at ({i}, {j})")));
            }
        }
    }

    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.row(j)[..j];
        let pivot = a[(j, j)] - dot(lj, lj);
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / d;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

impl CholeskyFactor {
    pub fn identity(dim: usize) -> Self {
        Self {
            lower: Matrix::identity(dim),
        }
    }

    /// Wraps an existing lower-triangular factor; the diagonal must be positive.
    pub fn from_lower(lower: Matrix) -> Result<Self> {
        let n = lower.rows();
        if lower.cols() != n {
            return Err(Error::shape("cholesky factor must be square"));
        }
        for i in 0..n {
            if !(lower[(i, i)] > 0.0) || !lower[(i, i)].is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i });
            }
            for j in (i + 1)..n {
                if lower[(i, j)] != 0.0 {
                    return Err(Error::domain("cholesky factor must be lower triangular"));
                }
            }
        }
        Ok(Self { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.lower
            .matmul(&self.lower.transpose())
            .expect("square factor")
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s = b[i] - dot(&self.lower.row(i)[..i], &y[..i]);
            y[i] = s / self.lower[(i, i)];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.lower[(k, i)] * x[k];
            }
            x[i] = s / self.lower[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::shape(format!(
                "right-hand side has length {}, factor has dim {}",
                b.len(),
                self.dim()
            )));
        }
        Ok(self.solve_upper(&self.solve_lower(b)))
    }

    /// `vᵀ A⁻¹ v` computed as `‖L⁻¹ v‖²`.
    pub fn inv_quad_form(&self, v: &[f64]) -> f64 {
        let y = self.solve_lower(v);
        dot(&y, &y)
    }

    /// `Tr(A⁻¹ B)` via column solves.
    pub fn trace_solve(&self, b: &Matrix) -> f64 {
        let n = self.dim();
        let mut col = vec![0.0; n];
        let mut tr = 0.0;
        for j in 0..n {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            let x = self.solve_upper(&self.solve_lower(&col));
            tr += x[j];
        }
        tr
    }

    /// `Tr(A⁻¹ M Mᵀ)` for the Cholesky factor `M` of another matrix, as `‖L⁻¹ M‖²_F`.
    pub fn trace_solve_factor(&self, other: &CholeskyFactor) -> f64 {
        let n = self.dim();
        let mut col = vec![0.0; n];
        let mut total = 0.0;
        for j in 0..n {
            for i in 0..n {
                col[i] = other.lower[(i, j)];
            }
            let y = self.solve_lower(&col);
            total += dot(&y, &y);
        }
        total
    }

    /// Explicit `A⁻¹`; only for reporting and tests.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let x = self.solve_upper(&self.solve_lower(&e));
            for i in 0..n {
                inv[(i, j)] = x[i];
            }
        }
        inv.symmetrize();
        inv
    }
}

/// `log B(W, ν)`, the Wishart normalizer, for scale `W` and degrees of freedom `ν`.
pub fn log_wishart_normalizer(w: &Matrix, nu: f64) -> Result<f64> {
    let dim = w.rows();
    if !w.is_finite() || !nu.is_finite() {
        return Err(Error::domain("Wishart normalizer needs finite inputs"));
    }
    if nu <= dim as f64 - 1.0 {
        return Err(Error::domain(format!(
            "Wishart degrees of freedom {nu} must exceed D - 1 = {}",
            dim as f64 - 1.0
        )));
    }
    let chol = cholesky(w)?;
    Ok(log_wishart_normalizer_parts(chol.log_det(), dim, nu))
}

/// Same as [`log_wishart_normalizer`] given `log|W|` directly.
pub(crate) fn log_wishart_normalizer_parts(log_det_w: f64, dim: usize, nu: f64) -> f64 {
    let d = dim as f64;
    -0.5 * nu * log_det_w - 0.5 * nu * d * std::f64::consts::LN_2 - ln_multigamma(0.5 * nu, dim)
}
