//! Boundary conditions for the second-derivative operator on [0, 1].
//!
//! The operator `Lu = u''` acts on functions satisfying
//!
//! ```text
//!     alpha0 * u(0) - beta0 * u'(0) = 0,
//!     alpha1 * u(1) + beta1 * u'(1) = 0.
//! ```
//!
//! `beta = 0` is a Dirichlet condition, `alpha = 0` a Neumann condition and
//! the general case a Robin condition. The operator generates a stationary
//! Ornstein-Uhlenbeck dynamics only when it is negative definite;
//! [`BoundaryConditions::is_negative_definite`] decides this with exact
//! comparisons, and [`scan_nonnegative_spectrum`] cross-checks the decision
//! numerically by searching the nonnegative axis for roots of the eigenvalue
//! determinant.

use crate::error::Error;

/// Which sides of the interval carry a Dirichlet condition (`beta = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCase {
    RobinRobin,
    DirichletLeft,
    DirichletRight,
    DirichletDirichlet,
}

impl BoundaryCase {
    /// Stable lower-case label, used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            BoundaryCase::RobinRobin => "robin_robin",
            BoundaryCase::DirichletLeft => "dirichlet_left",
            BoundaryCase::DirichletRight => "dirichlet_right",
            BoundaryCase::DirichletDirichlet => "dirichlet_dirichlet",
        }
    }
}

/// Coefficients of the boundary conditions, stored in canonical form:
/// `beta >= 0` on both sides, and `alpha >= 0` wherever `beta = 0`.
///
/// Scaling a side by a nonzero constant does not change the condition, so the
/// constructor flips signs to reach the canonical representative; all derived
/// quantities are invariant under such flips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConditions {
    alpha0: f64,
    beta0: f64,
    alpha1: f64,
    beta1: f64,
}

impl BoundaryConditions {
    /// Validates and canonicalises the four coefficients.
    pub fn new(alpha0: f64, beta0: f64, alpha1: f64, beta1: f64) -> Result<Self, Error> {
        for (side, a, b) in [("left", alpha0, beta0), ("right", alpha1, beta1)] {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::Validation(format!(
                    "boundary coefficients on the {side} side must be finite, got ({a}, {b})"
                )));
            }
            if a == 0.0 && b == 0.0 {
                return Err(Error::DegenerateBoundary { side });
            }
        }
        let (alpha0, beta0) = canonical_side(alpha0, beta0);
        let (alpha1, beta1) = canonical_side(alpha1, beta1);
        Ok(Self { alpha0, beta0, alpha1, beta1 })
    }

    /// Homogeneous Dirichlet conditions `u(0) = u(1) = 0`.
    pub fn dirichlet() -> Self {
        Self { alpha0: 1.0, beta0: 0.0, alpha1: 1.0, beta1: 0.0 }
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    /// Classifies the conditions by which sides are Dirichlet.
    pub fn case(&self) -> BoundaryCase {
        match (self.beta0 == 0.0, self.beta1 == 0.0) {
            (false, false) => BoundaryCase::RobinRobin,
            (true, false) => BoundaryCase::DirichletLeft,
            (false, true) => BoundaryCase::DirichletRight,
            (true, true) => BoundaryCase::DirichletDirichlet,
        }
    }

    /// Exact criterion for the operator to be negative definite, evaluated
    /// with plain comparisons (no tolerances). The operator has its whole
    /// spectrum in (-inf, 0) if and only if this returns true; borderline
    /// parameter sets with an eigenvalue at zero return false.
    pub fn is_negative_definite(&self) -> bool {
        let Self { alpha0: a0, beta0: b0, alpha1: a1, beta1: b1 } = *self;
        let robin0 = b0 * (a0 + b0) > 0.0;
        let robin1 = b1 * (a1 + b1) > 0.0;
        let dirichlet0 = b0 == 0.0 && a0 != 0.0;
        let dirichlet1 = b1 == 0.0 && a1 != 0.0;
        (robin0 && robin1 && ((a0 + b0) * (a1 + b1)).abs() > (b0 * b1).abs())
            || (dirichlet0 && robin1)
            || (robin0 && dirichlet1)
            || (dirichlet0 && dirichlet1)
    }

    /// Determinant whose zeros on `[0, inf)` are exactly the nonnegative
    /// eigenvalues of the operator:
    ///
    /// ```text
    ///     f(lambda) = alpha0*alpha1
    ///               + (alpha0*beta1 + alpha1*beta0) * sqrt(lambda)*coth(sqrt(lambda))
    ///               + beta0*beta1*lambda,
    /// ```
    ///
    /// with the `lambda -> 0` limit `alpha0*alpha1 + alpha0*beta1 + alpha1*beta0`.
    pub fn eigen_determinant(&self, lambda: f64) -> Result<f64, Error> {
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::NegativeLambda(lambda));
        }
        let cross = self.alpha0 * self.beta1 + self.alpha1 * self.beta0;
        Ok(self.alpha0 * self.alpha1
            + cross * sqrt_coth_sqrt(lambda)
            + self.beta0 * self.beta1 * lambda)
    }
}

fn canonical_side(alpha: f64, beta: f64) -> (f64, f64) {
    if beta < 0.0 || (beta == 0.0 && alpha < 0.0) {
        (-alpha, -beta)
    } else {
        (alpha, beta)
    }
}

/// `sqrt(lambda) * coth(sqrt(lambda))` for `lambda >= 0`, switching to the
/// Taylor expansion `1 + lambda/3 - lambda^2/45` below 1e-4 where the direct
/// quotient loses accuracy.
fn sqrt_coth_sqrt(lambda: f64) -> f64 {
    if lambda < 1e-4 {
        1.0 + lambda / 3.0 - lambda * lambda / 45.0
    } else {
        let x = lambda.sqrt();
        x / x.tanh()
    }
}

/// Result of scanning the eigenvalue determinant over `[0, lambda_max]`.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Roots found, refined by bisection to relative width 1e-12.
    pub roots: Vec<f64>,
    /// True when at least one root (a nonnegative eigenvalue) was found.
    pub has_nonneg_eigenvalue: bool,
    /// Upper end of the scanned interval.
    pub lambda_max: f64,
}

/// Searches `[0, lambda_max]` for zeros of the eigenvalue determinant.
///
/// The grid consists of a linear patch near zero (roots cluster there for
/// nearly-Neumann conditions) followed by logarithmically spaced points.
/// Every sign change is refined by bisection; exact zeros at grid points are
/// recorded directly, which catches the eigenvalue at `lambda = 0` of e.g.
/// Neumann-Neumann conditions.
pub fn scan_nonnegative_spectrum(
    bc: &BoundaryConditions,
    lambda_max: f64,
    n_points: usize,
) -> Result<SpectrumReport, Error> {
    if !lambda_max.is_finite() || lambda_max <= 0.0 {
        return Err(Error::Validation(format!(
            "lambda_max must be positive and finite, got {lambda_max}"
        )));
    }
    if n_points < 8 {
        return Err(Error::Validation(format!(
            "spectrum scan needs at least 8 grid points, got {n_points}"
        )));
    }

    let grid = scan_grid(lambda_max, n_points);
    let mut roots = Vec::new();
    let mut prev = (0.0, bc.eigen_determinant(0.0)?);
    if prev.1 == 0.0 {
        roots.push(0.0);
    }
    for &lambda in &grid[1..] {
        let value = bc.eigen_determinant(lambda)?;
        if value == 0.0 {
            roots.push(lambda);
        } else if prev.1 != 0.0 && (value < 0.0) != (prev.1 < 0.0) {
            roots.push(bisect_root(bc, prev.0, lambda));
        }
        prev = (lambda, value);
    }

    Ok(SpectrumReport { has_nonneg_eigenvalue: !roots.is_empty(), roots, lambda_max })
}

fn scan_grid(lambda_max: f64, n_points: usize) -> Vec<f64> {
    let switch = lambda_max.min(1.0);
    let n_linear = (n_points / 4).max(4);
    let mut grid = Vec::with_capacity(n_points + 1);
    grid.push(0.0);
    for i in 1..=n_linear {
        grid.push(switch * i as f64 / n_linear as f64);
    }
    if switch < lambda_max {
        let n_log = n_points - n_linear;
        let ratio = (lambda_max / switch).ln();
        for i in 1..=n_log {
            grid.push(switch * (ratio * i as f64 / n_log as f64).exp());
        }
    }
    grid
}

fn bisect_root(bc: &BoundaryConditions, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = bc.eigen_determinant(lo).expect("bracket endpoints are nonnegative");
    let mut lo_negative = f_lo < 0.0;
    while hi - lo > 1e-12 * hi.max(1e-300) {
        let mid = 0.5 * (lo + hi);
        let f_mid = bc.eigen_determinant(mid).expect("midpoint is nonnegative");
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == lo_negative {
            lo = mid;
            lo_negative = f_mid < 0.0;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
