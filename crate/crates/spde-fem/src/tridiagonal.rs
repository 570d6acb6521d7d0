//! Symmetric tridiagonal matrices with O(n) storage and O(n) kernels.
//!
//! Everything downstream (stiffness and mass matrices, implicit integrator
//! factors, stationary covariances) is symmetric tridiagonal, so a two-vector
//! representation plus a two-vector Cholesky factor covers all linear algebra
//! in the crate. Dense matrices appear only inside test oracles.

use crate::error::Error;

/// Symmetric tridiagonal matrix given by its diagonal and first
/// off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalMatrix {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl TridiagonalMatrix {
    /// Builds the matrix from its diagonal (length n) and off-diagonal
    /// (length n-1).
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(!diag.is_empty(), "matrix must have at least one row");
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal must have length n-1");
        Self { diag, off }
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.size()];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = self x` without allocating; `x` and `y` must not alias.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.size();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * x[i + 1];
            }
            y[i] = v;
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `-self`, used to factor negated stiffness matrices.
    pub fn negated(&self) -> Self {
        Self {
            diag: self.diag.iter().map(|v| -v).collect(),
            off: self.off.iter().map(|v| -v).collect(),
        }
    }

    /// `a*self + b*other`; both matrices must have the same size.
    pub fn linear_combination(a: f64, this: &Self, b: f64, other: &Self) -> Self {
        assert_eq!(this.size(), other.size());
        Self {
            diag: this.diag.iter().zip(&other.diag).map(|(x, y)| a * x + b * y).collect(),
            off: this.off.iter().zip(&other.off).map(|(x, y)| a * x + b * y).collect(),
        }
    }

    /// `I - dt*self`, the factor solved by the semi-implicit integrator.
    pub fn identity_minus_scaled(&self, dt: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|v| 1.0 - dt * v).collect(),
            off: self.off.iter().map(|v| -dt * v).collect(),
        }
    }

    /// Two-vector Cholesky factorisation `self = L L^T` with L lower
    /// bidiagonal. A nonpositive pivot means the matrix is not positive
    /// definite and is reported with its row index; this is the witness used
    /// to reject operators that are not negative definite.
    pub fn cholesky(&self) -> Result<TridiagonalCholesky, Error> {
        self.cholesky_impl(0.0)
    }

    /// Cholesky with a pivot floor relative to the largest diagonal entry.
    /// Matrices with an exact zero mode can round to a pivot of either tiny
    /// sign; the floor turns them into a deterministic rejection.
    pub fn cholesky_with_floor(&self, relative_floor: f64) -> Result<TridiagonalCholesky, Error> {
        let scale = self.diag.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        self.cholesky_impl(relative_floor * scale)
    }

    fn cholesky_impl(&self, floor: f64) -> Result<TridiagonalCholesky, Error> {
        let n = self.size();
        let mut l_diag = vec![0.0; n];
        let mut l_sub = vec![0.0; n.saturating_sub(1)];
        let mut pivot = self.diag[0];
        for i in 0..n {
            if pivot.is_nan() || pivot <= floor {
                return Err(Error::NotPositiveDefinite { index: i });
            }
            l_diag[i] = pivot.sqrt();
            if i + 1 < n {
                l_sub[i] = self.off[i] / l_diag[i];
                pivot = self.diag[i + 1] - l_sub[i] * l_sub[i];
            }
        }
        let inv_diag = l_diag.iter().map(|v| 1.0 / v).collect();
        Ok(TridiagonalCholesky { l_diag, l_sub, inv_diag })
    }

    /// Largest eigenvalue, located by bisection on the Sturm sequence count.
    /// The tolerance is 1e-12 relative to the Gershgorin radius.
    pub fn max_eigenvalue(&self) -> f64 {
        let (mut lo, mut hi) = self.gershgorin_bounds();
        let scale = hi.abs().max(lo.abs()).max(1.0);
        let n = self.size();
        while hi - lo > 1e-12 * scale {
            let mid = 0.5 * (lo + hi);
            if self.count_eigenvalues_below(mid) == n {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn gershgorin_bounds(&self) -> (f64, f64) {
        let n = self.size();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut radius = 0.0;
            if i > 0 {
                radius += self.off[i - 1].abs();
            }
            if i + 1 < n {
                radius += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - radius);
            hi = hi.max(self.diag[i] + radius);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x`, from the signs of the LDL^T
    /// pivots of `self - x I`.
    fn count_eigenvalues_below(&self, x: f64) -> usize {
        let n = self.size();
        let tiny = f64::MIN_POSITIVE;
        let mut count = 0;
        let mut d = self.diag[0] - x;
        for i in 0..n {
            if d < 0.0 {
                count += 1;
            }
            if i + 1 < n {
                let mut safe = d;
                if safe.abs() < tiny {
                    safe = if safe < 0.0 { -tiny } else { tiny };
                }
                d = self.diag[i + 1] - x - self.off[i] * self.off[i] / safe;
            }
        }
        count
    }
}

/// Lower-bidiagonal Cholesky factor of a symmetric positive definite
/// tridiagonal matrix. Pivot reciprocals are precomputed so the triangular
/// solves run without divisions.
#[derive(Debug, Clone)]
pub struct TridiagonalCholesky {
    l_diag: Vec<f64>,
    l_sub: Vec<f64>,
    inv_diag: Vec<f64>,
}

impl TridiagonalCholesky {
    pub fn size(&self) -> usize {
        self.l_diag.len()
    }

    /// Solves `A x = b` by forward then backward substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Forward then backward substitution overwriting the right hand side.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        self.solve_lower_in_place(x);
        self.solve_upper_in_place(x);
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        self.solve_lower_in_place(&mut y);
        y
    }

    /// Solves `L y = b` overwriting `b`.
    pub fn solve_lower_in_place(&self, x: &mut [f64]) {
        let n = self.size();
        assert_eq!(x.len(), n);
        let mut prev = x[0] * self.inv_diag[0];
        x[0] = prev;
        let rest = x[1..].iter_mut().zip(&self.inv_diag[1..]).zip(&self.l_sub);
        for ((xi, inv), sub) in rest {
            prev = (*xi - sub * prev) * inv;
            *xi = prev;
        }
    }

    /// Solves `L^T x = y`. Applied to a standard normal vector this yields a
    /// draw with covariance `A^{-1}`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        self.solve_upper_in_place(&mut x);
        x
    }

    /// Solves `L^T x = y` overwriting `y`.
    pub fn solve_upper_in_place(&self, x: &mut [f64]) {
        let n = self.size();
        assert_eq!(x.len(), n);
        let mut next = x[n - 1] * self.inv_diag[n - 1];
        x[n - 1] = next;
        let rest = x[..n - 1]
            .iter_mut()
            .rev()
            .zip(self.inv_diag[..n - 1].iter().rev())
            .zip(self.l_sub.iter().rev());
        for ((xi, inv), sub) in rest {
            next = (*xi - sub * next) * inv;
            *xi = next;
        }
    }

    /// `L z`; applied to a standard normal vector this yields a draw with
    /// covariance `A`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.size()];
        self.mul_lower_into(z, &mut y);
        y
    }

    /// `y = L z` without allocating; `z` and `y` must not alias.
    pub fn mul_lower_into(&self, z: &[f64], y: &mut [f64]) {
        let n = self.size();
        assert_eq!(z.len(), n);
        assert_eq!(y.len(), n);
        for i in 0..n {
            y[i] = self.l_diag[i] * z[i];
            if i > 0 {
                y[i] += self.l_sub[i - 1] * z[i - 1];
            }
        }
    }
}
