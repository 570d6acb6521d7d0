//! Finite-element discretisation of the stochastic heat equation
//!
//! ```text
//!     du = d^2u/dx^2 dt + f(u) dt + sqrt(2) dW,      x in [0, 1],
//! ```
//!
//! with Robin, Neumann or Dirichlet boundary conditions, together with exact
//! descriptions of the stationary distributions on both the continuum and the
//! discretised side and Monte Carlo estimators for the total-variation
//! distance between them.
//!
//! The crate is organised along the pipeline:
//!
//! * [`boundary`]: boundary conditions, the negative-definiteness criterion
//!   for the second-derivative operator and its spectrum scan,
//! * [`measure`]: the exact Gaussian stationary measure of the linear
//!   equation (covariance, boundary moments, path sampling) and potentials
//!   for the nonlinear drift,
//! * [`fem`]: grids, stiffness/mass assembly, the discretised drift and the
//!   Gaussian stationary law of the linear coefficient SDE,
//! * [`dynamics`]: Euler-Maruyama integrators targeting the stationary law of
//!   the coefficient SDE,
//! * [`compare`]: projection and bridge embedding between paths and
//!   coefficient vectors, normalisation constants, and total-variation
//!   estimators,
//! * [`stats`]: small statistical helpers shared by the estimators.
//!
//! All randomised routines either take an `rng` explicitly or derive
//! independent ChaCha streams from a caller-supplied seed, so results are
//! reproducible bit for bit regardless of thread count.

pub mod boundary;
pub mod compare;
pub mod dynamics;
mod error;
pub mod fem;
pub mod measure;
pub mod quadrature;
pub mod stats;
pub mod tridiagonal;

pub use boundary::{scan_nonnegative_spectrum, BoundaryCase, BoundaryConditions, SpectrumReport};
pub use compare::{
    bridge_embed, estimate_log_normalization, estimate_tv_conditional, estimate_tv_upper,
    potential_functional, project, ConditionalTv, NormalizationEstimate, ReferenceMeasure,
    TvEstimate, TvEstimator,
};
pub use dynamics::{
    em_step, simulate_stationary, EmScheme, IntegratorConfig, SampleSet, SdeForm, Stepper,
};
pub use error::Error;
pub use fem::{
    check_exactness, discretized_drift, mass_matrix, stiffness_matrix, CoefficientVector,
    DiscreteGaussian, FemSystem, GridSpec,
};
pub use measure::{
    potential_path_integral, CovarianceParams, LinearStationaryMeasure, PathSample, Potential,
};
pub use quadrature::GaussLegendre;
pub use tridiagonal::{TridiagonalCholesky, TridiagonalMatrix};
