//! Total-variation comparison of the continuum stationary measure with the
//! stationary law of the discretised equation.
//!
//! Both measures are absolutely continuous with respect to Gaussian
//! references that agree at the grid nodes: the continuum measure has
//! density `exp(int F(u))/Z` against the linear Gaussian measure, the
//! discretised one has density `exp(F_n(u))/Z_n` against `N(0, (-L)^{-1})`,
//! and the projection of the linear Gaussian measure onto the nodes is
//! exactly `N(0, (-L)^{-1})`. The distance between the projected continuum
//! measure and the discrete one is therefore
//!
//! ```text
//! || mu o Pi^-1 - mu_n || = E | E[exp(int F)/Z | Pi u = x] - exp(F_n(x))/Z_n |,
//! ```
//!
//! with the outer expectation over `x ~ N(0, (-L)^{-1})`. Dropping the
//! conditioning gives an upper bound that needs no inner average. Both
//! estimators follow the convention without the factor 1/2, so values lie
//! in [0, 2].
//!
//! The linear Gaussian measure is Markov with Brownian local fluctuations,
//! so its conditional law given the node values is an independent Brownian
//! bridge in each cell; [`bridge_embed`] samples that law and is the inner
//! sampler of the conditional estimator.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::boundary::BoundaryConditions;
use crate::error::Error;
use crate::fem::{
    interpolant_potential_integral, node_values, CoefficientVector, FemSystem, GridSpec,
};
use crate::measure::{
    potential_path_integral, LinearStationaryMeasure, PathSample, Potential,
};
use crate::quadrature::GaussLegendre;
use crate::stats;

/// Point evaluation of a sampled path at the retained grid nodes. The path
/// resolution must be a multiple of the grid size so that the nodes are on
/// the path's abscissa.
pub fn project(path: &PathSample, grid: &GridSpec) -> Result<CoefficientVector, Error> {
    let m = path.resolution();
    let n = grid.n();
    if !m.is_multiple_of(n) {
        return Err(Error::MisalignedGrids { m, n });
    }
    let stride = m / n;
    let values: Vec<f64> = grid.indices().map(|node| path.values()[node * stride]).collect();
    CoefficientVector::new(values)
}

/// The functional `F_n(u) = int_0^1 F(u_h(t)) dt` over the piecewise linear
/// interpolant of the coefficients; its gradient is the discretised drift.
pub fn potential_functional(
    potential: &Potential,
    u: &CoefficientVector,
    grid: &GridSpec,
    quad: &GaussLegendre,
) -> Result<f64, Error> {
    if u.len() != grid.len() {
        return Err(Error::Validation(format!(
            "coefficient vector has length {} but the grid retains {} nodes",
            u.len(),
            grid.len()
        )));
    }
    Ok(interpolant_potential_integral(potential, u.values(), grid, quad))
}

/// Draws a path from the linear Gaussian measure conditioned on the given
/// node values: an independent Brownian bridge in each grid cell, sampled
/// at `resolution` intervals (a multiple of the grid size). With
/// `resolution == n` the path is just the node values themselves.
pub fn bridge_embed(
    u: &CoefficientVector,
    grid: &GridSpec,
    resolution: usize,
    rng: &mut impl Rng,
) -> Result<PathSample, Error> {
    if u.len() != grid.len() {
        return Err(Error::Validation(format!(
            "coefficient vector has length {} but the grid retains {} nodes",
            u.len(),
            grid.len()
        )));
    }
    let n = grid.n();
    if resolution < n || !resolution.is_multiple_of(n) {
        return Err(Error::MisalignedGrids { m: resolution, n });
    }
    let stride = resolution / n;
    let h = 1.0 / resolution as f64;
    let all = node_values(u.values(), grid);
    let mut out = Vec::with_capacity(resolution + 1);
    for k in 0..n {
        let target = all[k + 1];
        let mut v = all[k];
        out.push(v);
        for j in 1..stride {
            // Brownian bridge recursion: the next point given the current
            // one and the cell's right endpoint.
            let steps_left = (stride - j + 1) as f64;
            let mean = v + (target - v) / steps_left;
            let var = h * (steps_left - 1.0) / steps_left;
            let z: f64 = rng.sample(StandardNormal);
            v = mean + var.sqrt() * z;
            out.push(v);
        }
    }
    out.push(all[n]);
    PathSample::new(out)
}

/// Which Gaussian reference a normalisation constant is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMeasure {
    /// Stationary measure of the continuum linear equation, sampled as
    /// paths with the given number of intervals.
    Continuum { resolution: usize },
    /// Stationary Gaussian of the discretised linear equation on an n-cell
    /// grid.
    Discretized { n: usize },
}

/// Log normalisation constant with its delta-method error bar and the
/// effective sample size of the weights behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationEstimate {
    pub log_z: f64,
    pub se: f64,
    pub ess: f64,
    pub n_samples: usize,
}

const SALT_NORM_CONTINUUM: u64 = 1;
const SALT_NORM_DISCRETE: u64 = 2;
const SALT_OUTER_UPPER: u64 = 3;
const SALT_OUTER_CONDITIONAL: u64 = 4;
const SALT_BOOTSTRAP: u64 = 5;
const N_CHUNKS: usize = 64;

/// Evaluates `f` on `n_samples` fresh draws, split over a fixed number of
/// chunks whose RNG streams depend only on (seed, salt, chunk index), so
/// the result does not depend on how rayon schedules the chunks.
fn sample_chunked<T: Send>(
    n_samples: usize,
    seed: u64,
    salt: u64,
    f: impl Fn(&mut ChaCha8Rng) -> Result<T, Error> + Sync,
) -> Result<Vec<T>, Error> {
    let bounds: Vec<(usize, usize)> = (0..N_CHUNKS)
        .map(|c| (n_samples * c / N_CHUNKS, n_samples * (c + 1) / N_CHUNKS))
        .collect();
    let nested: Result<Vec<Vec<T>>, Error> = bounds
        .into_par_iter()
        .enumerate()
        .map(|(c, (lo, hi))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((salt << 32) | c as u64);
            (lo..hi).map(|_| f(&mut rng)).collect()
        })
        .collect();
    Ok(nested?.into_iter().flatten().collect())
}

fn normalization_from_logs(logs: &[f64]) -> Result<NormalizationEstimate, Error> {
    let ess = stats::effective_sample_size(logs);
    if ess < 10.0 {
        return Err(Error::DegenerateWeights { ess });
    }
    let log_z = stats::log_sum_exp(logs) - (logs.len() as f64).ln();
    // Normalised weights average to one exactly, so the relative error of
    // the mean weight is the error of log Z to first order.
    let normalized: Vec<f64> = logs.iter().map(|g| (g - log_z).exp()).collect();
    let (_, se) = stats::mean_and_se(&normalized);
    Ok(NormalizationEstimate { log_z, se, ess, n_samples: logs.len() })
}

/// Estimates `log E[exp(G)]` where `G` is `int F(u)` under the continuum
/// reference or `F_n(u)` under the discretised one (with the given
/// quadrature order; continuum functionals use the path's trapezoid rule).
/// Refuses to report a value when the weight effective sample size drops
/// below 10.
pub fn estimate_log_normalization(
    bc: &BoundaryConditions,
    potential: &Potential,
    reference: ReferenceMeasure,
    n_samples: usize,
    quad_order: usize,
    seed: u64,
) -> Result<NormalizationEstimate, Error> {
    if n_samples < 2 {
        return Err(Error::Validation("need at least 2 samples for a normalisation".into()));
    }
    let logs = match reference {
        ReferenceMeasure::Continuum { resolution } => {
            let measure = LinearStationaryMeasure::new(bc)?;
            sample_chunked(n_samples, seed, SALT_NORM_CONTINUUM, |rng| {
                let path = measure.sample_path(resolution, rng)?;
                Ok(potential_path_integral(&path, potential))
            })?
        }
        ReferenceMeasure::Discretized { n } => {
            let system = FemSystem::new(bc, n)?;
            let sampler = system.stationary_gaussian()?;
            let quad = GaussLegendre::new(quad_order)?;
            sample_chunked(n_samples, seed, SALT_NORM_DISCRETE, |rng| {
                let u = sampler.sample(rng);
                Ok(interpolant_potential_integral(potential, u.values(), system.grid(), &quad))
            })?
        }
    };
    normalization_from_logs(&logs)
}

/// Sampling budget for the total-variation estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TvEstimator {
    /// Outer Monte Carlo samples for the distance itself.
    pub n_samples: usize,
    /// Independent samples for each of the two normalisation constants.
    pub normalization_samples: usize,
    /// Path resolution for continuum functionals; must be a multiple of
    /// the grid size.
    pub resolution: usize,
    /// Gauss-Legendre order for the discrete functional.
    pub quad_order: usize,
    pub seed: u64,
}

/// A total-variation distance estimate (convention without the factor 1/2,
/// so perfect disagreement is 2). The error bar combines a bootstrap over
/// the outer samples with the first-order sensitivity to the two estimated
/// normalisation constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvEstimate {
    pub estimate: f64,
    pub se: f64,
    pub n_samples: usize,
}

/// Conditional estimates at two inner sample counts. The inner average
/// biases the distance upward; doubling the count halves the bias, so the
/// gap between the two runs estimates the bias remaining in `doubled`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalTv {
    /// Distance with the requested number of bridge fills per outer sample.
    pub estimate: TvEstimate,
    /// Same outer samples with twice the fills.
    pub doubled: TvEstimate,
}

impl ConditionalTv {
    /// Upper-bias indicator: estimate minus doubled, which extrapolates the
    /// inner-average bias still present in `doubled`.
    pub fn inner_bias(&self) -> f64 {
        self.estimate.estimate - self.doubled.estimate
    }
}

fn validate_tv_config(est: &TvEstimator, n: usize) -> Result<(), Error> {
    if est.n_samples < 2 || est.normalization_samples < 2 {
        return Err(Error::Validation(
            "total-variation estimation needs at least 2 samples per batch".into(),
        ));
    }
    if est.resolution < n || !est.resolution.is_multiple_of(n) {
        return Err(Error::MisalignedGrids { m: est.resolution, n });
    }
    if est.quad_order == 0 {
        return Err(Error::Validation("quadrature order must be at least 1".into()));
    }
    Ok(())
}

fn sign(gap: f64) -> f64 {
    if gap > 0.0 {
        1.0
    } else if gap < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Turns per-sample (continuum weight, discrete weight) pairs into the
/// distance estimate with bootstrap plus normalisation-sensitivity error.
fn tv_from_weights(
    pairs: &[(f64, f64)],
    z_cont: &NormalizationEstimate,
    z_disc: &NormalizationEstimate,
    seed: u64,
) -> TvEstimate {
    let diffs: Vec<f64> = pairs.iter().map(|(w, wn)| (w - wn).abs()).collect();
    let estimate = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SALT_BOOTSTRAP << 32);
    let se_boot = stats::bootstrap_mean_se(&diffs, 200, &mut rng);
    let n = pairs.len() as f64;
    let sens_cont =
        pairs.iter().map(|(w, wn)| sign(w - wn) * w).sum::<f64>() / n;
    let sens_disc =
        pairs.iter().map(|(w, wn)| sign(w - wn) * wn).sum::<f64>() / n;
    let se = (se_boot.powi(2)
        + (sens_cont * z_cont.se).powi(2)
        + (sens_disc * z_disc.se).powi(2))
    .sqrt();
    TvEstimate { estimate, se, n_samples: pairs.len() }
}

/// Upper-bound estimator: paths `u` from the continuum Gaussian measure,
/// distance `E |exp(int F(u))/Z - exp(F_n(Pi u))/Z_n|`. Dominates the
/// projected total-variation distance by Jensen's inequality and needs no
/// inner average.
pub fn estimate_tv_upper(
    bc: &BoundaryConditions,
    potential: &Potential,
    n: usize,
    est: &TvEstimator,
) -> Result<TvEstimate, Error> {
    validate_tv_config(est, n)?;
    let system = FemSystem::new(bc, n)?;
    let measure = LinearStationaryMeasure::new(bc)?;
    let z_cont = estimate_log_normalization(
        bc,
        potential,
        ReferenceMeasure::Continuum { resolution: est.resolution },
        est.normalization_samples,
        est.quad_order,
        est.seed,
    )?;
    let z_disc = estimate_log_normalization(
        bc,
        potential,
        ReferenceMeasure::Discretized { n },
        est.normalization_samples,
        est.quad_order,
        est.seed,
    )?;
    let quad = GaussLegendre::new(est.quad_order)?;
    let pairs = sample_chunked(est.n_samples, est.seed, SALT_OUTER_UPPER, |rng| {
        let path = measure.sample_path(est.resolution, rng)?;
        let g = potential_path_integral(&path, potential);
        let u = project(&path, system.grid())?;
        let gn = interpolant_potential_integral(potential, u.values(), system.grid(), &quad);
        Ok(((g - z_cont.log_z).exp(), (gn - z_disc.log_z).exp()))
    })?;
    Ok(tv_from_weights(&pairs, &z_cont, &z_disc, est.seed))
}

/// Conditional estimator of the projected distance itself: node vectors
/// from the discretised Gaussian, the conditional continuum weight
/// estimated by averaging over Brownian bridge fills. Returns the run with
/// `n_inner` fills alongside one with `2 n_inner` so callers can see the
/// remaining inner-average bias.
pub fn estimate_tv_conditional(
    bc: &BoundaryConditions,
    potential: &Potential,
    n: usize,
    n_inner: usize,
    est: &TvEstimator,
) -> Result<ConditionalTv, Error> {
    validate_tv_config(est, n)?;
    if n_inner == 0 {
        return Err(Error::Validation("need at least one inner bridge fill".into()));
    }
    let system = FemSystem::new(bc, n)?;
    let sampler = system.stationary_gaussian()?;
    let z_cont = estimate_log_normalization(
        bc,
        potential,
        ReferenceMeasure::Continuum { resolution: est.resolution },
        est.normalization_samples,
        est.quad_order,
        est.seed,
    )?;
    let z_disc = estimate_log_normalization(
        bc,
        potential,
        ReferenceMeasure::Discretized { n },
        est.normalization_samples,
        est.quad_order,
        est.seed,
    )?;
    let quad = GaussLegendre::new(est.quad_order)?;
    let rows: Vec<(f64, f64, f64)> =
        sample_chunked(est.n_samples, est.seed, SALT_OUTER_CONDITIONAL, |rng| {
            let u = sampler.sample(rng);
            let gn = interpolant_potential_integral(potential, u.values(), system.grid(), &quad);
            let wn = (gn - z_disc.log_z).exp();
            let mut total = 0.0;
            let mut first_half = 0.0;
            for k in 0..2 * n_inner {
                let path = bridge_embed(&u, system.grid(), est.resolution, rng)?;
                let w = (potential_path_integral(&path, potential) - z_cont.log_z).exp();
                total += w;
                if k < n_inner {
                    first_half += w;
                }
            }
            Ok((first_half / n_inner as f64, total / (2 * n_inner) as f64, wn))
        })?;
    let single: Vec<(f64, f64)> = rows.iter().map(|&(w, _, wn)| (w, wn)).collect();
    let double: Vec<(f64, f64)> = rows.iter().map(|&(_, w, wn)| (w, wn)).collect();
    Ok(ConditionalTv {
        estimate: tv_from_weights(&single, &z_cont, &z_disc, est.seed),
        doubled: tv_from_weights(&double, &z_cont, &z_disc, est.seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::DiscreteGaussian;
    use crate::stats::mean_and_se;

    fn bc(a0: f64, b0: f64, a1: f64, b1: f64) -> BoundaryConditions {
        BoundaryConditions::new(a0, b0, a1, b1).unwrap()
    }

    fn grid(c: &BoundaryConditions, n: usize) -> GridSpec {
        GridSpec::new(c, n).unwrap()
    }

    #[test]
    fn projection_picks_retained_nodes() {
        let path = PathSample::new(vec![0.0, 0.5, 1.0, 0.5, 0.25]).unwrap();
        let dirichlet = BoundaryConditions::dirichlet();
        let p = project(&path, &grid(&dirichlet, 2)).unwrap();
        assert_eq!(p.values(), &[1.0]);
        let robin = bc(1.0, 1.0, 1.0, 1.0);
        let p = project(&path, &grid(&robin, 4)).unwrap();
        assert_eq!(p.values(), &[0.0, 0.5, 1.0, 0.5, 0.25]);
        let err = project(&path, &grid(&robin, 3)).unwrap_err();
        assert!(matches!(err, Error::MisalignedGrids { m: 4, n: 3 }));
    }

    #[test]
    fn functional_matches_hand_integral_on_one_hat() {
        // Single Dirichlet coefficient x: the interpolant is x phi(t) with
        // int phi^2 = 1/3, so F(v) = -v^2/2 integrates to -x^2/6.
        let dirichlet = BoundaryConditions::dirichlet();
        let g = grid(&dirichlet, 2);
        let quad = GaussLegendre::new(4).unwrap();
        let well = Potential::quadratic_well(1.0).unwrap();
        let u = CoefficientVector::new(vec![1.5]).unwrap();
        let got = potential_functional(&well, &u, &g, &quad).unwrap();
        assert!((got - (-1.5f64.powi(2) / 6.0)).abs() < 1e-14);
    }

    #[test]
    fn functional_gradient_is_the_discretized_drift() {
        let c = bc(1.0, 1.0, 2.0, 1.0);
        let g = grid(&c, 4);
        let quad = GaussLegendre::new(8).unwrap();
        let pot = Potential::neg_log_cosh();
        let base = vec![0.4, -0.3, 0.9, 0.2, -0.6];
        let drift = crate::fem::discretized_drift(
            &pot,
            &CoefficientVector::new(base.clone()).unwrap(),
            &g,
            &quad,
        )
        .unwrap();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let fp = potential_functional(
                &pot,
                &CoefficientVector::new(plus).unwrap(),
                &g,
                &quad,
            )
            .unwrap();
            let fm = potential_functional(
                &pot,
                &CoefficientVector::new(minus).unwrap(),
                &g,
                &quad,
            )
            .unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - drift[i]).abs() < 1e-8,
                "component {i}: finite difference {fd} vs drift {}",
                drift[i]
            );
        }
    }

    #[test]
    fn bridge_embed_reduces_to_node_values_at_grid_resolution() {
        let c = bc(1.0, 1.0, 1.0, 1.0);
        let g = grid(&c, 4);
        let u = CoefficientVector::new(vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = bridge_embed(&u, &g, 4, &mut rng).unwrap();
        assert_eq!(path.values(), u.values());
        assert!(matches!(
            bridge_embed(&u, &g, 6, &mut rng),
            Err(Error::MisalignedGrids { m: 6, n: 4 })
        ));
    }

    #[test]
    fn bridge_fill_has_brownian_bridge_moments() {
        // One Dirichlet cell pair, n = 2: between nodes the fill is a bridge
        // over a cell of length 1/2, so the cell midpoint (t = 1/4) has
        // conditional mean (0 + x)/2 and variance (1/2)/4 = 1/8.
        let dirichlet = BoundaryConditions::dirichlet();
        let g = grid(&dirichlet, 2);
        let u = CoefficientVector::new(vec![0.8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws: Vec<f64> = (0..40_000)
            .map(|_| bridge_embed(&u, &g, 4, &mut rng).unwrap().values()[1])
            .collect();
        let (mean, se) = mean_and_se(&draws);
        assert!((mean - 0.4).abs() < 5.0 * se, "midpoint mean {mean}");
        let centered: Vec<f64> = draws.iter().map(|v| (v - 0.4).powi(2)).collect();
        let (var, vse) = mean_and_se(&centered);
        assert!((var - 0.125).abs() < 5.0 * vse, "midpoint variance {var}");
    }

    #[test]
    fn bridge_embedded_gaussian_nodes_recover_the_continuum_law() {
        // Drawing nodes from N(0, (-L)^{-1}) and filling with bridges must
        // reproduce the continuum Gaussian measure at off-node points.
        let c = bc(1.0, 1.0, 1.0, 1.0);
        let g = grid(&c, 2);
        let measure = LinearStationaryMeasure::new(&c).unwrap();
        let sampler = DiscreteGaussian::new(&crate::fem::stiffness_matrix(&c, &g)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut products = Vec::new();
        let mut squares = Vec::new();
        for _ in 0..40_000 {
            let u = sampler.sample(&mut rng);
            let path = bridge_embed(&u, &g, 8, &mut rng).unwrap();
            // Fine nodes 1/8 and 5/8 sit inside different cells.
            squares.push(path.values()[1].powi(2));
            products.push(path.values()[1] * path.values()[5]);
        }
        let (var, var_se) = mean_and_se(&squares);
        let want_var = measure.covariance(0.125, 0.125);
        assert!((var - want_var).abs() < 5.0 * var_se, "{var} vs {want_var}");
        let (cov, cov_se) = mean_and_se(&products);
        let want_cov = measure.covariance(0.125, 0.625);
        assert!((cov - want_cov).abs() < 5.0 * cov_se, "{cov} vs {want_cov}");
    }

    #[test]
    fn constant_potential_normalizes_exactly() {
        let c = bc(1.0, 1.0, 1.0, 1.0);
        for reference in [
            ReferenceMeasure::Continuum { resolution: 8 },
            ReferenceMeasure::Discretized { n: 4 },
        ] {
            let est = estimate_log_normalization(
                &c,
                &Potential::constant(-0.7),
                reference,
                64,
                4,
                9,
            )
            .unwrap();
            assert!((est.log_z - (-0.7)).abs() < 1e-12);
            assert_eq!(est.se, 0.0);
            assert_eq!(est.n_samples, 64);
        }
    }

    #[test]
    fn discrete_normalization_matches_gaussian_oracle() {
        // Dirichlet n = 2 with F(v) = -v^2/2: F_n(u) = -X^2/6 with
        // X ~ N(0, 1/4), so Z_n = E exp(-X^2/6) = (1 + 1/12)^(-1/2).
        let dirichlet = BoundaryConditions::dirichlet();
        let est = estimate_log_normalization(
            &dirichlet,
            &Potential::quadratic_well(1.0).unwrap(),
            ReferenceMeasure::Discretized { n: 2 },
            40_000,
            4,
            123,
        )
        .unwrap();
        let want = -0.5 * (1.0f64 + 1.0 / 12.0).ln();
        assert!(est.se > 0.0 && est.se < 1e-3);
        assert!((est.log_z - want).abs() < 5.0 * est.se, "{} vs {want}", est.log_z);
    }

    #[test]
    fn degenerate_weights_are_refused() {
        // A violently curved well concentrates all weight on a sliver of
        // the reference measure; the effective sample size collapses.
        let dirichlet = BoundaryConditions::dirichlet();
        let err = estimate_log_normalization(
            &dirichlet,
            &Potential::quadratic_well(1e6).unwrap(),
            ReferenceMeasure::Discretized { n: 2 },
            200,
            4,
            7,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateWeights { ess } if ess < 10.0));
    }

    #[test]
    fn constant_potential_gives_zero_distance() {
        // With F constant both densities are identically one. For F = 0 the
        // cancellation is bit-exact; a nonzero constant can leave a few ulp
        // from the two integration rules rounding differently.
        let c = bc(1.0, 1.0, 1.0, 1.0);
        let est = TvEstimator {
            n_samples: 128,
            normalization_samples: 64,
            resolution: 16,
            quad_order: 4,
            seed: 5,
        };
        let upper = estimate_tv_upper(&c, &Potential::zero(), 4, &est).unwrap();
        assert_eq!(upper.estimate, 0.0);
        assert_eq!(upper.se, 0.0);
        let cond = estimate_tv_conditional(&c, &Potential::zero(), 4, 4, &est).unwrap();
        assert_eq!(cond.estimate.estimate, 0.0);
        assert_eq!(cond.doubled.estimate, 0.0);
        assert_eq!(cond.inner_bias(), 0.0);

        let shifted = estimate_tv_upper(&c, &Potential::constant(0.3), 4, &est).unwrap();
        assert!(shifted.estimate <= 1e-12, "constant shift left {}", shifted.estimate);
        assert!(shifted.se <= 1e-12);
    }

    #[test]
    fn conditional_distance_sits_below_the_upper_bound() {
        let dirichlet = BoundaryConditions::dirichlet();
        let pot = Potential::quadratic_well(4.0).unwrap();
        let est = TvEstimator {
            n_samples: 4_000,
            normalization_samples: 8_000,
            resolution: 32,
            quad_order: 4,
            seed: 17,
        };
        let upper = estimate_tv_upper(&dirichlet, &pot, 2, &est).unwrap();
        let cond = estimate_tv_conditional(&dirichlet, &pot, 2, 16, &est).unwrap();
        assert!(upper.estimate > 0.0);
        assert!(cond.doubled.estimate > 0.0);
        let slack = 3.0 * (upper.se + cond.doubled.se);
        assert!(
            cond.doubled.estimate <= upper.estimate + slack,
            "conditional {} vs upper {}",
            cond.doubled.estimate,
            upper.estimate
        );
        // More inner fills can only lower the estimate, up to noise.
        assert!(cond.inner_bias() > -3.0 * (cond.estimate.se + cond.doubled.se));
    }

    #[test]
    fn estimators_are_deterministic_in_the_seed() {
        let c = bc(1.0, 1.0, 1.0, 1.0);
        let pot = Potential::quadratic_well(1.0).unwrap();
        let est = TvEstimator {
            n_samples: 200,
            normalization_samples: 200,
            resolution: 8,
            quad_order: 4,
            seed: 21,
        };
        let a = estimate_tv_upper(&c, &pot, 4, &est).unwrap();
        let b = estimate_tv_upper(&c, &pot, 4, &est).unwrap();
        assert_eq!(a, b);
        let other = TvEstimator { seed: 22, ..est };
        let d = estimate_tv_upper(&c, &pot, 4, &other).unwrap();
        assert!(a.estimate != d.estimate);
    }

    #[test]
    fn tv_config_is_validated() {
        let c = bc(1.0, 1.0, 1.0, 1.0);
        let pot = Potential::zero();
        let bad_res = TvEstimator {
            n_samples: 16,
            normalization_samples: 16,
            resolution: 6,
            quad_order: 4,
            seed: 0,
        };
        assert!(matches!(
            estimate_tv_upper(&c, &pot, 4, &bad_res),
            Err(Error::MisalignedGrids { m: 6, n: 4 })
        ));
        let bad_samples = TvEstimator { n_samples: 1, ..bad_res };
        assert!(estimate_tv_upper(&c, &pot, 4, &bad_samples).is_err());
        assert!(estimate_tv_conditional(&c, &pot, 4, 0, &TvEstimator {
            resolution: 8,
            ..bad_res
        })
        .is_err());
    }
}
