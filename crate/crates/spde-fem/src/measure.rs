//! The stationary distribution of the linear stochastic heat equation and the
//! change of measure produced by a nonlinear drift.
//!
//! For negative definite boundary conditions the linear equation has a
//! centred Gaussian stationary measure whose covariance is known in closed
//! form; [`LinearStationaryMeasure`] evaluates it and draws exact paths on a
//! uniform grid by combining a correlated pair of boundary values with a
//! Brownian bridge. Adding a drift `f = F'` multiplies the stationary density
//! by `exp(int_0^1 F(u(x)) dx)` up to normalisation; [`Potential`] carries
//! `F` together with its derivative and the bounds the estimators rely on,
//! and [`potential_path_integral`] evaluates the exponent along a sampled
//! path.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::boundary::BoundaryConditions;
use crate::error::Error;

/// Second moments of the boundary values `(U(0), U(1))` under the stationary
/// measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceParams {
    pub var_left: f64,
    pub var_right: f64,
    pub cov: f64,
}

/// A path sampled on the uniform grid `0, 1/m, ..., 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    values: Vec<f64>,
}

impl PathSample {
    /// Wraps `m + 1` finite values on the uniform grid.
    pub fn new(values: Vec<f64>) -> Result<Self, Error> {
        if values.len() < 2 {
            return Err(Error::Validation(format!(
                "a path needs at least two grid values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("path values must be finite".into()));
        }
        Ok(Self { values })
    }

    /// Number of grid cells `m`; the path has `m + 1` values.
    pub fn resolution(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Position of grid node `i`.
    pub fn abscissa(&self, i: usize) -> f64 {
        i as f64 / self.resolution() as f64
    }
}

/// The centred Gaussian stationary measure of the linear equation.
#[derive(Debug, Clone)]
pub struct LinearStationaryMeasure {
    bc: BoundaryConditions,
    denom: f64,
}

impl LinearStationaryMeasure {
    /// Requires negative definite boundary conditions; the covariance
    /// denominator `alpha0*alpha1 + alpha0*beta1 + beta0*alpha1` must be
    /// nonzero, which negative definiteness guarantees.
    pub fn new(bc: &BoundaryConditions) -> Result<Self, Error> {
        if !bc.is_negative_definite() {
            return Err(Error::NotNegativeDefinite);
        }
        let denom = bc.alpha0() * bc.alpha1() + bc.alpha0() * bc.beta1() + bc.beta0() * bc.alpha1();
        if denom == 0.0 {
            return Err(Error::SingularOperator);
        }
        Ok(Self { bc: *bc, denom })
    }

    pub fn boundary_conditions(&self) -> &BoundaryConditions {
        &self.bc
    }

    /// Stationary covariance `C(x, y)` for `x, y` in [0, 1]:
    ///
    /// ```text
    ///     C(x,y) = [beta0*beta1 + alpha0*beta1*x*y
    ///               + beta0*alpha1*(1-x)*(1-y)] / D  +  min(x,y) - x*y.
    /// ```
    pub fn covariance(&self, x: f64, y: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
        let bc = &self.bc;
        let boundary_part = bc.beta0() * bc.beta1()
            + bc.alpha0() * bc.beta1() * x * y
            + bc.beta0() * bc.alpha1() * (1.0 - x) * (1.0 - y);
        boundary_part / self.denom + x.min(y) - x * y
    }

    /// Joint second moments of the boundary pair `(U(0), U(1))`.
    pub fn boundary_moments(&self) -> CovarianceParams {
        let bc = &self.bc;
        CovarianceParams {
            var_left: bc.beta0() * (bc.alpha1() + bc.beta1()) / self.denom,
            var_right: (bc.alpha0() + bc.beta0()) * bc.beta1() / self.denom,
            cov: bc.beta0() * bc.beta1() / self.denom,
        }
    }

    /// Draws a path on the grid `0, 1/m, ..., 1` whose law at the grid nodes
    /// is exactly the stationary one: a correlated Gaussian pair for the
    /// boundary values, linearly interpolated, plus an independent Brownian
    /// bridge.
    pub fn sample_path(&self, m: usize, rng: &mut impl Rng) -> Result<PathSample, Error> {
        if m < 1 {
            return Err(Error::Validation("path resolution m must be at least 1".into()));
        }
        let moments = self.boundary_moments();
        // Cholesky of the 2x2 boundary covariance; var_left = 0 forces
        // cov = 0, so the zero guard is consistent.
        let s_left = moments.var_left.sqrt();
        let cross = if s_left > 0.0 { moments.cov / s_left } else { 0.0 };
        let s_right = (moments.var_right - cross * cross).max(0.0).sqrt();
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let left = s_left * z0;
        let right = cross * z0 + s_right * z1;

        let mut values = Vec::with_capacity(m + 1);
        let scale = (1.0 / m as f64).sqrt();
        let mut walk = Vec::with_capacity(m + 1);
        let mut w = 0.0;
        walk.push(0.0);
        for _ in 0..m {
            w += scale * rng.sample::<f64, _>(StandardNormal);
            walk.push(w);
        }
        let w_end = walk[m];
        for (k, wk) in walk.iter().enumerate() {
            let t = k as f64 / m as f64;
            let bridge = wk - t * w_end;
            values.push((1.0 - t) * left + t * right + bridge);
        }
        PathSample::new(values)
    }
}

/// Integral of `F` along a path by the trapezoid rule; this is the
/// unnormalised log-density of the nonlinear stationary measure with respect
/// to the Gaussian one.
pub fn potential_path_integral(path: &PathSample, potential: &Potential) -> f64 {
    let values = path.values();
    let m = path.resolution();
    let dx = 1.0 / m as f64;
    let mut total = 0.5 * (potential.value(values[0]) + potential.value(values[m]));
    for v in &values[1..m] {
        total += potential.value(*v);
    }
    total * dx
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A drift potential: the scalar function `F` whose derivative `f = F'`
/// enters the equation as drift. `F` must be bounded above with bounded
/// second derivative; the bounds are caller-supplied and carried along for
/// the estimators.
#[derive(Clone)]
pub struct Potential {
    value: ScalarFn,
    derivative: ScalarFn,
    upper_bound: f64,
    second_derivative_bound: f64,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("upper_bound", &self.upper_bound)
            .field("second_derivative_bound", &self.second_derivative_bound)
            .finish_non_exhaustive()
    }
}

impl Potential {
    /// Builds a potential and spot-checks the supplied derivative against a
    /// central finite difference at 16 fixed pseudo-random points (relative
    /// tolerance 1e-6).
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        upper_bound: f64,
        second_derivative_bound: f64,
    ) -> Result<Self, Error> {
        if !upper_bound.is_finite() || !second_derivative_bound.is_finite() {
            return Err(Error::Validation("potential bounds must be finite".into()));
        }
        if second_derivative_bound < 0.0 {
            return Err(Error::Validation(
                "second derivative bound must be nonnegative".into(),
            ));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
        let h = 1e-5;
        for _ in 0..16 {
            let v = rng.random_range(-3.0..3.0);
            let supplied = derivative(v);
            let probed = (value(v + h) - value(v - h)) / (2.0 * h);
            if !(supplied - probed).abs().le(&(1e-6 * supplied.abs().max(1.0))) {
                return Err(Error::PotentialMismatch { at: v, supplied, probed });
            }
        }
        Ok(Self {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            upper_bound,
            second_derivative_bound,
        })
    }

    pub fn value(&self, v: f64) -> f64 {
        (self.value)(v)
    }

    /// The drift `f = F'`.
    pub fn derivative(&self, v: f64) -> f64 {
        (self.derivative)(v)
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    pub fn second_derivative_bound(&self) -> f64 {
        self.second_derivative_bound
    }

    /// `F = 0`: no drift, the stationary measure stays Gaussian.
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `F = c`: shifts the log-density by a constant, which every normalised
    /// quantity must ignore.
    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, |_| 0.0, c, 0.0).expect("constant potential is consistent")
    }

    /// `F(v) = -k v^2 / 2` with `k >= 0`; drift `f(v) = -k v`.
    pub fn quadratic_well(k: f64) -> Result<Self, Error> {
        if !k.is_finite() || k < 0.0 {
            return Err(Error::Validation(format!(
                "quadratic well needs a nonnegative curvature, got {k}"
            )));
        }
        Self::new(move |v| -0.5 * k * v * v, move |v| -k * v, 0.0, k)
    }

    /// `F(v) = -cos(v)`; drift `f(v) = sin(v)`.
    pub fn neg_cos() -> Self {
        Self::new(|v| -v.cos(), f64::sin, 1.0, 1.0).expect("cosine potential is consistent")
    }

    /// `F(v) = -log cosh(v)`; drift `f(v) = -tanh(v)`.
    pub fn neg_log_cosh() -> Self {
        Self::new(|v| -v.cosh().ln(), |v| -v.tanh(), 0.0, 1.0)
            .expect("log-cosh potential is consistent")
    }

    /// Potential of a diffusion bridge with drift `g(v) = a*tanh(v)`:
    /// `F = -(g^2 + g')/2`.
    pub fn bridge_drift_tanh(a: f64) -> Result<Self, Error> {
        if !a.is_finite() {
            return Err(Error::Validation("tanh drift amplitude must be finite".into()));
        }
        let value = move |v: f64| {
            let t = v.tanh();
            -0.5 * (a * a * t * t + a * (1.0 - t * t))
        };
        let derivative = move |v: f64| {
            let t = v.tanh();
            -a * (a - 1.0) * t * (1.0 - t * t)
        };
        let upper = -0.5 * a.min(a * a);
        Self::new(value, derivative, upper, (a * (a - 1.0)).abs())
    }

    /// Potential of a diffusion bridge with drift `g(v) = a*sin(k v)`.
    pub fn bridge_drift_sin(a: f64, k: f64) -> Result<Self, Error> {
        if !a.is_finite() || !k.is_finite() {
            return Err(Error::Validation("sin drift parameters must be finite".into()));
        }
        let value = move |v: f64| {
            let s = (k * v).sin();
            let c = (k * v).cos();
            -0.5 * (a * a * s * s + a * k * c)
        };
        let derivative = move |v: f64| {
            -0.5 * a * a * k * (2.0 * k * v).sin() + 0.5 * a * k * k * (k * v).sin()
        };
        let upper = 0.5 * (a * k).abs();
        let second = a * a * k * k + 0.5 * (a * k * k * k).abs();
        Self::new(value, derivative, upper, second)
    }
}
