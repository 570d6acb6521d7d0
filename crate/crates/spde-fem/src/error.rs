use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A boundary side has both coefficients zero, which describes no
    /// boundary condition at all.
    #[error("degenerate boundary condition on the {side} side: alpha and beta are both zero")]
    DegenerateBoundary { side: &'static str },

    /// The spectrum determinant is only defined for `lambda >= 0`.
    #[error("eigenvalue parameter must be nonnegative, got {0}")]
    NegativeLambda(f64),

    /// `alpha0*alpha1 + alpha0*beta1 + beta0*alpha1 = 0`: the operator has a
    /// zero eigenvalue and no stationary covariance exists.
    #[error("operator is singular: alpha0*alpha1 + alpha0*beta1 + beta0*alpha1 = 0")]
    SingularOperator,

    /// The negative-definiteness criterion fails, so the linear equation has
    /// no stationary distribution.
    #[error("operator is not negative definite for the given boundary conditions")]
    NotNegativeDefinite,

    /// Cholesky pivot failure; the matrix handed to the factorisation was not
    /// positive definite.
    #[error("matrix is not positive definite (nonpositive pivot at row {index})")]
    NotPositiveDefinite { index: usize },

    /// Malformed input that is not covered by a more specific variant.
    #[error("invalid input: {0}")]
    Validation(String),

    /// The supplied derivative disagrees with a finite-difference probe of
    /// the potential.
    #[error(
        "potential derivative mismatch at v = {at}: supplied {supplied}, finite difference {probed}"
    )]
    PotentialMismatch { at: f64, supplied: f64, probed: f64 },

    /// A fine path grid does not contain the coarse FEM grid.
    #[error("path resolution {m} is not a multiple of the grid size {n}")]
    MisalignedGrids { m: usize, n: usize },

    /// The integrator produced a non-finite state.
    #[error("simulation diverged: non-finite state after step {step}")]
    Divergence { step: usize },

    /// Importance weights collapsed onto too few samples to be usable.
    #[error("importance weights are degenerate: effective sample size {ess:.2} < 10")]
    DegenerateWeights { ess: f64 },
}
