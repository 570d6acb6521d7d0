//! Sampling checks of the identities that tie the modules together: node
//! restriction and bridge embedding between the continuum and discretised
//! stationary laws, exact chain variances for every integrator branch and
//! the decay of the distance estimates under grid refinement.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spde_fem::stats;
use spde_fem::{
    bridge_embed, estimate_tv_conditional, estimate_tv_upper, potential_functional, project,
    BoundaryConditions, CoefficientVector, EmScheme, FemSystem, GaussLegendre, IntegratorConfig,
    LinearStationaryMeasure, Potential, SdeForm, TvEstimate, TvEstimator,
};

fn product_matches(xs: &[f64], ys: &[f64], exact: f64, tag: &str) {
    let products: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x * y).collect();
    let (mean, se) = stats::mean_and_se(&products);
    assert!((mean - exact).abs() <= 5.0 * se, "{tag}: {mean} vs {exact} (se {se})");
}

fn restriction_case(bc: &BoundaryConditions, n: usize, seed: u64) {
    let system = FemSystem::new(bc, n).unwrap();
    let grid = *system.grid();
    let measure = LinearStationaryMeasure::new(bc).unwrap();
    let gaussian = system.stationary_gaussian().unwrap();
    let m = 8 * n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_draws = 20_000;
    let mut coords: Vec<Vec<f64>> = vec![Vec::with_capacity(n_draws); grid.len()];
    for _ in 0..n_draws {
        let path = measure.sample_path(m, &mut rng).unwrap();
        let u = project(&path, &grid).unwrap();
        for (slot, v) in coords.iter_mut().zip(u.values()) {
            slot.push(*v);
        }
    }
    for j in 0..grid.len() {
        let column = gaussian.covariance_column(j);
        for i in 0..=j {
            product_matches(&coords[i], &coords[j], column[i], &format!("n={n} pair ({i},{j})"));
        }
    }
}

#[test]
fn node_restriction_of_the_continuum_law_is_the_discrete_gaussian() {
    restriction_case(&BoundaryConditions::new(1.0, 1.0, 1.0, 1.0).unwrap(), 4, 101);
    restriction_case(&BoundaryConditions::new(1.0, 0.0, 0.0, 1.0).unwrap(), 16, 102);
}

#[test]
fn bridge_fill_of_discrete_draws_restores_the_continuum_covariance() {
    let bc = BoundaryConditions::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let system = FemSystem::new(&bc, 4).unwrap();
    let grid = *system.grid();
    let measure = LinearStationaryMeasure::new(&bc).unwrap();
    let gaussian = system.stationary_gaussian().unwrap();
    let resolution = 32usize;
    // Fine indices in the interior of four different cells plus one node.
    let picks = [4usize, 12, 16, 20, 28];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n_draws = 20_000;
    let mut coords: Vec<Vec<f64>> = vec![Vec::with_capacity(n_draws); picks.len()];
    for _ in 0..n_draws {
        let u = gaussian.sample(&mut rng);
        let path = bridge_embed(&u, &grid, resolution, &mut rng).unwrap();
        for (slot, &k) in coords.iter_mut().zip(&picks) {
            slot.push(path.values()[k]);
        }
    }
    for (a, &ka) in picks.iter().enumerate() {
        for (b, &kb) in picks.iter().enumerate().skip(a) {
            let exact = measure
                .covariance(ka as f64 / resolution as f64, kb as f64 / resolution as f64);
            product_matches(&coords[a], &coords[b], exact, &format!("pair ({ka},{kb})"));
        }
    }
}

#[test]
fn integrator_branches_have_the_exact_scalar_chain_variance() {
    // Dirichlet with n = 2 keeps one node, so each branch is a scalar AR(1)
    // recursion (stiffness -4, mass 1/3) whose stationary variance is known
    // in closed form. At dt = 0.1 all four sit well away from the exact
    // stationary variance 1/4; the gap is the documented O(dt) bias.
    let system = FemSystem::new(&BoundaryConditions::dirichlet(), 2).unwrap();
    let potential = Potential::zero();
    let cases = [
        (EmScheme::SemiImplicit, SdeForm::PreconditionedForm, 5.0 / 24.0, 21),
        (EmScheme::Explicit, SdeForm::PreconditionedForm, 5.0 / 16.0, 22),
        (EmScheme::SemiImplicit, SdeForm::MassForm, 5.0 / 32.0, 23),
        (EmScheme::Explicit, SdeForm::MassForm, 5.0 / 8.0, 24),
    ];
    for (scheme, form, exact, seed) in cases {
        let config = IntegratorConfig {
            dt: 0.1,
            scheme,
            burn_in: 200,
            thin: 5,
            n_samples: 40_000,
            n_chains: 2,
            quad_order: 2,
            seed,
        };
        let samples = simulate(&system, &potential, form, &config);
        let (mean, mean_se) = samples.mean(0);
        assert!(mean.abs() <= 5.0 * mean_se, "{scheme:?} {form:?}: mean {mean} (se {mean_se})");
        let (var, se) = samples.variance(0);
        assert!((var - exact).abs() <= 5.0 * se, "{scheme:?} {form:?}: {var} vs {exact} (se {se})");
        assert!((var - 0.25).abs() > 5.0 * se, "{scheme:?} {form:?}: step bias not visible");
    }
}

fn simulate(
    system: &FemSystem,
    potential: &Potential,
    form: SdeForm,
    config: &IntegratorConfig,
) -> spde_fem::SampleSet {
    spde_fem::simulate_stationary(system, potential, form, config).unwrap()
}

#[test]
fn conditional_estimate_is_dominated_by_the_upper_estimate() {
    let bc = BoundaryConditions::dirichlet();
    let potential = Potential::neg_cos();
    let est = TvEstimator {
        n_samples: 3_000,
        normalization_samples: 3_000,
        resolution: 512,
        quad_order: 4,
        seed: 7,
    };
    let upper = estimate_tv_upper(&bc, &potential, 8, &est).unwrap();
    let cond = estimate_tv_conditional(&bc, &potential, 8, 32, &est).unwrap();
    let slack = 3.0 * (upper.se + cond.doubled.se);
    assert!(
        cond.doubled.estimate <= upper.estimate + slack,
        "conditional {} exceeds upper {} (slack {slack})",
        cond.doubled.estimate,
        upper.estimate,
    );
    // More fills per outer sample must not move the estimate beyond noise.
    let refined = estimate_tv_conditional(&bc, &potential, 8, 64, &est).unwrap();
    let combined = (cond.doubled.se.powi(2) + refined.doubled.se.powi(2)).sqrt();
    assert!(
        (cond.doubled.estimate - refined.doubled.estimate).abs() <= 3.0 * combined,
        "fill refinement moved the estimate: {} vs {}",
        cond.doubled.estimate,
        refined.doubled.estimate,
    );
    let bias_se = (cond.estimate.se.powi(2) + cond.doubled.se.powi(2)).sqrt();
    assert!(
        cond.inner_bias().abs() <= 3.0 * bias_se,
        "inner-fill bias {} visible at se {bias_se}",
        cond.inner_bias(),
    );
}

#[test]
fn doubling_the_embedding_resolution_does_not_move_the_estimate() {
    let bc = BoundaryConditions::dirichlet();
    let potential = Potential::neg_cos();
    let base = TvEstimator {
        n_samples: 6_000,
        normalization_samples: 6_000,
        resolution: 128,
        quad_order: 4,
        seed: 5,
    };
    let coarse = estimate_tv_upper(&bc, &potential, 4, &base).unwrap();
    let fine = estimate_tv_upper(&bc, &potential, 4, &TvEstimator { resolution: 256, ..base })
        .unwrap();
    let combined = (coarse.se.powi(2) + fine.se.powi(2)).sqrt();
    assert!(
        (coarse.estimate - fine.estimate).abs() <= 2.0 * combined,
        "resolution doubling moved the estimate: {} vs {} (se {combined})",
        coarse.estimate,
        fine.estimate,
    );
}

fn fitted_rate(bc: &BoundaryConditions, potential: &Potential, seed: u64) -> (f64, f64) {
    let mut points = Vec::new();
    let mut errors = Vec::new();
    let mut prev: Option<TvEstimate> = None;
    for n in [4usize, 8, 16] {
        let est = TvEstimator {
            n_samples: 6_000,
            normalization_samples: 6_000,
            resolution: 32 * n,
            quad_order: 4,
            seed,
        };
        let tv = estimate_tv_upper(bc, potential, n, &est).unwrap();
        assert!(tv.estimate > 0.0, "n={n}: estimate not positive");
        if let Some(p) = &prev {
            assert!(
                tv.estimate < p.estimate + 2.0 * (tv.se + p.se),
                "n={n}: {} does not decrease from {}",
                tv.estimate,
                p.estimate,
            );
        }
        points.push(((n as f64).ln(), tv.estimate.ln()));
        errors.push(tv.se / tv.estimate);
        prev = Some(tv);
    }
    let fit = stats::line_fit(&points, &errors);
    (fit.slope, fit.slope_se)
}

#[test]
fn distance_estimates_decay_at_first_order_in_the_grid_size() {
    let robin = BoundaryConditions::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let (slope, se) = fitted_rate(&robin, &Potential::quadratic_well(1.0).unwrap(), 31);
    assert!(
        slope + 3.0 * se < -0.4 && slope - 3.0 * se > -2.0,
        "well potential: slope {slope} (se {se})"
    );
    let mixed = BoundaryConditions::new(1.0, 0.0, 0.0, 1.0).unwrap();
    let (slope, se) = fitted_rate(&mixed, &Potential::neg_log_cosh(), 32);
    assert!(
        slope + 3.0 * se < -0.4 && slope - 3.0 * se > -2.0,
        "log-cosh potential: slope {slope} (se {se})"
    );
}

#[test]
fn interpolant_functional_matches_the_cellwise_closed_form() {
    // For F(v) = -k v^2 / 2 each cell contributes -k dx (a^2 + ab + b^2) / 6,
    // and the quadrature is exact from order 2 on.
    let bc = BoundaryConditions::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let system = FemSystem::new(&bc, 5).unwrap();
    let grid = *system.grid();
    let k = 0.7;
    let potential = Potential::quadratic_well(k).unwrap();
    let values = [0.3, -1.2, 0.8, 0.05, -0.6, 1.1];
    let u = CoefficientVector::new(values.to_vec()).unwrap();
    let mut exact = 0.0;
    for w in values.windows(2) {
        exact -= k * grid.dx() * (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]) / 6.0;
    }
    for order in [2usize, 4, 8] {
        let quad = GaussLegendre::new(order).unwrap();
        let got = potential_functional(&potential, &u, &grid, &quad).unwrap();
        assert!((got - exact).abs() < 1e-14, "order {order}: {got} vs {exact}");
    }
}
