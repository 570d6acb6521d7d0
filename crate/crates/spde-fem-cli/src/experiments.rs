//! Experiment drivers behind the binary's subcommands. Each `run_*`
//! function validates its parameters, runs the study and returns a sorted
//! [`ResultTable`]; nothing here prints or exits.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use spde_fem::stats;
use spde_fem::{
    check_exactness, estimate_tv_conditional, estimate_tv_upper, potential_functional,
    scan_nonnegative_spectrum, simulate_stationary, BoundaryConditions, FemSystem, GaussLegendre,
    GridSpec, IntegratorConfig, Potential, SampleSet, SdeForm, TvEstimator,
};

use crate::table::{ResultTable, Row};
use crate::CliError;

/// RNG stream salts for the harness's own samplers; the library keeps its
/// salts below 16 under the same seeding scheme.
const SALT_REWEIGHT: u64 = 16;
const SALT_ORACLE: u64 = 17;
const N_CHUNKS: usize = 64;

/// Spectrum scan window and grid for the negative-definiteness cross-check.
/// The scan grid keeps at least two points between consecutive eigenvalue
/// candidates `(k pi)^2` up to the window end.
pub const SCAN_LAMBDA_MAX: f64 = 1e4;
pub const SCAN_POINTS: usize = 400;

/// Optional replacements for individual fields of
/// [`IntegratorConfig::recommended`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SamplerOverrides {
    pub dt: Option<f64>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub n_samples: Option<usize>,
    pub n_chains: Option<usize>,
    pub quad_order: Option<usize>,
}

impl SamplerOverrides {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn apply(&self, mut config: IntegratorConfig) -> IntegratorConfig {
        if let Some(dt) = self.dt {
            config.dt = dt;
        }
        if let Some(burn_in) = self.burn_in {
            config.burn_in = burn_in;
        }
        if let Some(thin) = self.thin {
            config.thin = thin;
        }
        if let Some(n_samples) = self.n_samples {
            config.n_samples = n_samples;
        }
        if let Some(n_chains) = self.n_chains {
            config.n_chains = n_chains;
        }
        if let Some(quad_order) = self.quad_order {
            config.quad_order = quad_order;
        }
        config
    }
}

/// Stamps rows of one experiment stage with the elapsed runtime at the
/// moment each row is produced.
struct Stage {
    experiment: &'static str,
    n: usize,
    seed: u64,
    started: Instant,
}

impl Stage {
    fn new(experiment: &'static str, n: usize, seed: u64) -> Self {
        Self { experiment, n, seed, started: Instant::now() }
    }

    fn row(&self, stat: impl Into<String>, value: f64, stderr: f64) -> Row {
        Row {
            experiment: self.experiment.to_string(),
            n: self.n,
            stat: stat.into(),
            value,
            stderr,
            seed: self.seed,
            runtime_ms: self.started.elapsed().as_millis() as u64,
        }
    }
}

/// Evaluates `f` on fresh draws split over fixed chunks whose RNG streams
/// depend only on (seed, salt, chunk), so the output is reproducible
/// regardless of thread count.
fn chunked_map<T: Send>(
    n_samples: usize,
    seed: u64,
    salt: u64,
    f: impl Fn(&mut ChaCha8Rng) -> T + Sync,
) -> Vec<T> {
    let bounds: Vec<(usize, usize)> = (0..N_CHUNKS)
        .map(|c| (n_samples * c / N_CHUNKS, n_samples * (c + 1) / N_CHUNKS))
        .collect();
    let nested: Vec<Vec<T>> = bounds
        .into_par_iter()
        .enumerate()
        .map(|(c, (lo, hi))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((salt << 32) | c as u64);
            (lo..hi).map(|_| f(&mut rng)).collect()
        })
        .collect();
    nested.into_iter().flatten().collect()
}

fn require_increasing(n_list: &[usize]) -> Result<(), CliError> {
    if n_list.is_empty() {
        return Err(CliError::invalid("need at least one grid size"));
    }
    if n_list[0] < 2 {
        return Err(CliError::invalid("grid sizes must be at least 2"));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::invalid("grid sizes must be strictly increasing"));
    }
    Ok(())
}

pub fn form_label(form: SdeForm) -> &'static str {
    match form {
        SdeForm::MassForm => "mass",
        SdeForm::PreconditionedForm => "precond",
    }
}

/// Forms integrate from distinct seeds so their error bars stay
/// independent in cross-form comparisons.
fn form_seed(seed: u64, form: SdeForm) -> u64 {
    match form {
        SdeForm::MassForm => seed,
        SdeForm::PreconditionedForm => seed.wrapping_add(1),
    }
}

fn node_label(grid: &GridSpec, i: usize) -> usize {
    grid.first_node() + i
}

// ---------------------------------------------------------------------
// exactness

/// Boundary parameter sets swept by the exactness suite. The last one is
/// not negative definite and is reported as skipped.
pub const EXACTNESS_CASES: &[(&str, [f64; 4])] = &[
    ("dirichlet_dirichlet", [1.0, 0.0, 1.0, 0.0]),
    ("robin_robin", [1.0, 1.0, 1.0, 1.0]),
    ("dirichlet_neumann", [1.0, 0.0, 0.0, 1.0]),
    ("robin_dirichlet", [1.0, 1.0, 1.0, 0.0]),
    ("neumann_neumann", [0.0, 1.0, 0.0, 1.0]),
];

pub const DEFAULT_EXACTNESS_GRID: &[usize] = &[2, 4, 8, 16, 32, 64];

#[derive(Debug, Clone)]
pub struct ExactnessParams {
    pub n_list: Vec<usize>,
    pub seed: u64,
}

/// Max-entry residuals of `C L + I` for every case and grid size, plus one
/// row per case comparing the exact negative-definiteness criterion with
/// the spectrum scan.
pub fn run_exactness_suite(params: &ExactnessParams) -> Result<ResultTable, CliError> {
    require_increasing(&params.n_list)?;
    let mut table = ResultTable::new();
    for (label, [a0, b0, a1, b1]) in EXACTNESS_CASES {
        let stage = Stage::new("exactness", 0, params.seed);
        let bc = BoundaryConditions::new(*a0, *b0, *a1, *b1)?;
        let definite = bc.is_negative_definite();
        let scan = scan_nonnegative_spectrum(&bc, SCAN_LAMBDA_MAX, SCAN_POINTS)?;
        let agree = definite != scan.has_nonneg_eigenvalue;
        table.push(stage.row(
            format!("{label}.scan_agreement"),
            if agree { 1.0 } else { 0.0 },
            0.0,
        ));
        for &n in &params.n_list {
            let stage = Stage::new("exactness", n, params.seed);
            if definite {
                let residual = check_exactness(&bc, n)?;
                table.push(stage.row(format!("{label}.exactness_residual"), residual, 0.0));
            } else {
                table.push(stage.row(format!("{label}.skipped_not_negative_definite"), 1.0, 0.0));
            }
        }
    }
    table.sort();
    Ok(table)
}

// ---------------------------------------------------------------------
// linear-law

#[derive(Debug, Clone)]
pub struct LinearLawParams {
    pub n: usize,
    pub bc: BoundaryConditions,
    /// Curvature k of the potential F(v) = -k v^2/2. At zero the stationary
    /// law is the explicit Gaussian and `exact.cov` rows are emitted for
    /// comparison.
    pub well_curvature: f64,
    pub forms: Vec<SdeForm>,
    pub overrides: SamplerOverrides,
    pub seed: u64,
}

/// Empirical stationary means and covariances of the coefficient SDE for
/// the requested forms, with the exact Gaussian reference when the
/// potential vanishes.
pub fn run_linear_law(params: &LinearLawParams) -> Result<ResultTable, CliError> {
    if params.forms.is_empty() {
        return Err(CliError::invalid("need at least one SDE form"));
    }
    if !params.bc.is_negative_definite() {
        return Err(spde_fem::Error::NotNegativeDefinite.into());
    }
    let system = FemSystem::new(&params.bc, params.n)?;
    let potential = Potential::quadratic_well(params.well_curvature)?;
    let grid = *system.grid();
    let mut table = ResultTable::new();
    if params.well_curvature == 0.0 {
        let stage = Stage::new("linear-law", params.n, params.seed);
        let gaussian = system.stationary_gaussian()?;
        for j in 0..grid.len() {
            let column = gaussian.covariance_column(j);
            for (i, &entry) in column.iter().take(j + 1).enumerate() {
                table.push(stage.row(cov_stat("exact", &grid, i, j), entry, 0.0));
            }
        }
    }
    for &form in &params.forms {
        let stage = Stage::new("linear-law", params.n, params.seed);
        let mut config = params.overrides.apply(IntegratorConfig::recommended(params.n));
        config.seed = form_seed(params.seed, form);
        let samples = simulate_stationary(&system, &potential, form, &config)?;
        table.append(full_moment_rows(&stage, form_label(form), &samples, &grid));
    }
    table.sort();
    Ok(table)
}

fn cov_stat(prefix: &str, grid: &GridSpec, i: usize, j: usize) -> String {
    format!("{prefix}.cov.{}.{}", node_label(grid, i), node_label(grid, j))
}

/// Every mean and covariance entry of a stationary run, plus the worst
/// per-component effective sample size.
fn full_moment_rows(
    stage: &Stage,
    label: &str,
    samples: &SampleSet,
    grid: &GridSpec,
) -> ResultTable {
    let mut table = ResultTable::new();
    let mut min_ess = f64::INFINITY;
    for i in 0..samples.dim() {
        min_ess = min_ess.min(samples.effective_sample_size(i));
        let (mean, se) = samples.mean(i);
        table.push(stage.row(format!("{label}.mean.{}", node_label(grid, i)), mean, se));
    }
    for j in 0..samples.dim() {
        for i in 0..=j {
            let (cov, se) = samples.covariance(i, j);
            table.push(stage.row(cov_stat(label, grid, i, j), cov, se));
        }
    }
    table.push(stage.row(format!("{label}.ess_min"), min_ess, 0.0));
    table
}

// ---------------------------------------------------------------------
// ou

#[derive(Debug, Clone)]
pub struct OuParams {
    pub n: usize,
    /// Boundary and kernel rate c > 0; the conditions are (c, 1, c, 1).
    pub c: f64,
    /// Linear drift coefficient k of f(v) = -k v. Defaults to c^2, the
    /// drift whose stationary kernel is exp(-c|s-t|)/(2c); analytic rows
    /// are only emitted at that default.
    pub drift_coefficient: Option<f64>,
    pub reweight_samples: usize,
    pub overrides: SamplerOverrides,
    pub seed: u64,
}

pub const DEFAULT_REWEIGHT_SAMPLES: usize = 200_000;

/// Stationary moments at the endpoints and midpoint via three routes
/// (reweighted Gaussian, both SDE forms), against the analytic kernel.
pub fn run_ou_example(params: &OuParams) -> Result<ResultTable, CliError> {
    if !params.c.is_finite() || params.c <= 0.0 {
        return Err(CliError::invalid(format!("kernel rate must be positive, got {}", params.c)));
    }
    if params.reweight_samples < 2 {
        return Err(CliError::invalid("need at least 2 reweighting samples"));
    }
    let k = params.drift_coefficient.unwrap_or(params.c * params.c);
    let bc = BoundaryConditions::new(params.c, 1.0, params.c, 1.0)?;
    let system = FemSystem::new(&bc, params.n)?;
    let potential = Potential::quadratic_well(k)?;
    let grid = *system.grid();
    let mid = params.n / 2;
    let probes = [0, mid, params.n];
    let pairs = [(0, mid), (0, params.n)];
    let mut table = ResultTable::new();

    if k == params.c * params.c {
        let stage = Stage::new("ou", params.n, params.seed);
        let kernel = |s: f64, t: f64| (-params.c * (s - t).abs()).exp() / (2.0 * params.c);
        for &node in &probes {
            let x = grid.node_position(node);
            table.push(stage.row(format!("analytic.var.{node}"), kernel(x, x), 0.0));
        }
        for &(a, b) in &pairs {
            let value = kernel(grid.node_position(a), grid.node_position(b));
            table.push(stage.row(format!("analytic.cov.{a}.{b}"), value, 0.0));
        }
    }

    table.append(reweight_rows(
        "ou",
        &system,
        &potential,
        &probes,
        &pairs,
        params.reweight_samples,
        params.overrides.quad_order.unwrap_or(4),
        params.seed,
    )?);

    for form in [SdeForm::MassForm, SdeForm::PreconditionedForm] {
        let stage = Stage::new("ou", params.n, params.seed);
        let mut config = params.overrides.apply(IntegratorConfig::recommended(params.n));
        config.seed = form_seed(params.seed, form);
        let samples = simulate_stationary(&system, &potential, form, &config)?;
        table.append(probe_rows(&stage, form_label(form), &samples, &grid, &probes, &pairs));
    }
    table.sort();
    Ok(table)
}

/// Self-normalised moments of `exp(F_n)`-reweighted draws from the
/// discretised Gaussian at the probed nodes.
#[allow(clippy::too_many_arguments)]
fn reweight_rows(
    experiment: &'static str,
    system: &FemSystem,
    potential: &Potential,
    probe_nodes: &[usize],
    pairs: &[(usize, usize)],
    n_samples: usize,
    quad_order: usize,
    seed: u64,
) -> Result<ResultTable, CliError> {
    let grid = system.grid();
    let stage = Stage::new(experiment, grid.n(), seed);
    let sampler = system.stationary_gaussian()?;
    let quad = GaussLegendre::new(quad_order)?;
    let first = grid.first_node();
    let draws: Vec<(Vec<f64>, f64)> = chunked_map(n_samples, seed, SALT_REWEIGHT, |rng| {
        let u = sampler.sample(rng);
        let log_weight = potential_functional(potential, &u, grid, &quad)
            .expect("sampler output matches its grid");
        let picks = probe_nodes.iter().map(|&node| u.values()[node - first]).collect();
        (picks, log_weight)
    });
    let log_weights: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let ess = stats::effective_sample_size(&log_weights);
    if ess < 10.0 {
        return Err(spde_fem::Error::DegenerateWeights { ess }.into());
    }
    let column = |k: usize| -> Vec<f64> { draws.iter().map(|d| d.0[k]).collect() };
    let mut table = ResultTable::new();
    for (k, &node) in probe_nodes.iter().enumerate() {
        let xs = column(k);
        let (mean, se) = stats::snis_mean_and_se(&log_weights, &xs);
        table.push(stage.row(format!("reweight.mean.{node}"), mean, se));
        let (var, se) = stats::snis_variance_and_se(&log_weights, &xs);
        table.push(stage.row(format!("reweight.var.{node}"), var, se));
    }
    for &(a, b) in pairs {
        let ka = probe_nodes.iter().position(|&p| p == a).expect("pair nodes are probed");
        let kb = probe_nodes.iter().position(|&p| p == b).expect("pair nodes are probed");
        let (cov, se) = stats::snis_covariance_and_se(&log_weights, &column(ka), &column(kb));
        table.push(stage.row(format!("reweight.cov.{a}.{b}"), cov, se));
    }
    table.push(stage.row("reweight.ess", ess, 0.0));
    Ok(table)
}

/// Means, variances and selected covariances of a stationary run at the
/// probed nodes.
fn probe_rows(
    stage: &Stage,
    label: &str,
    samples: &SampleSet,
    grid: &GridSpec,
    probe_nodes: &[usize],
    pairs: &[(usize, usize)],
) -> ResultTable {
    let first = grid.first_node();
    let mut table = ResultTable::new();
    let mut min_ess = f64::INFINITY;
    for &node in probe_nodes {
        let i = node - first;
        min_ess = min_ess.min(samples.effective_sample_size(i));
        let (mean, se) = samples.mean(i);
        table.push(stage.row(format!("{label}.mean.{node}"), mean, se));
        let (var, se) = samples.variance(i);
        table.push(stage.row(format!("{label}.var.{node}"), var, se));
    }
    for &(a, b) in pairs {
        let (cov, se) = samples.covariance(a - first, b - first);
        table.push(stage.row(format!("{label}.cov.{a}.{b}"), cov, se));
    }
    table.push(stage.row(format!("{label}.ess_min"), min_ess, 0.0));
    table
}

// ---------------------------------------------------------------------
// bridge

/// Drift family of the conditioned diffusion; both are smooth with bounded
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GFamily {
    /// g(v) = a tanh(v).
    Tanh { a: f64 },
    /// g(v) = a sin(k v).
    Sin { a: f64, k: f64 },
}

impl GFamily {
    pub fn label(&self) -> &'static str {
        match self {
            GFamily::Tanh { .. } => "tanh",
            GFamily::Sin { .. } => "sin",
        }
    }

    /// The potential F = -(g^2 + g')/2 whose reweighted bridge law is the
    /// diffusion conditioned to hit zero at both ends.
    pub fn potential(&self) -> Result<Potential, spde_fem::Error> {
        match *self {
            GFamily::Tanh { a } => Potential::bridge_drift_tanh(a),
            GFamily::Sin { a, k } => Potential::bridge_drift_sin(a, k),
        }
    }

    fn drift(&self, v: f64) -> f64 {
        match *self {
            GFamily::Tanh { a } => a * v.tanh(),
            GFamily::Sin { a, k } => a * (k * v).sin(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BridgeParams {
    pub n: usize,
    pub family: GFamily,
    /// Endpoint window |X(1)| < epsilon for the path oracle.
    pub epsilon: f64,
    pub oracle_attempts: usize,
    /// Euler-Maruyama steps per oracle path; even, so the midpoint lies on
    /// the step grid.
    pub oracle_steps: usize,
    pub reweight_samples: usize,
    pub overrides: SamplerOverrides,
    pub seed: u64,
}

pub const DEFAULT_ORACLE_ATTEMPTS: usize = 1_500_000;
pub const DEFAULT_ORACLE_STEPS: usize = 1_024;
pub const DEFAULT_EPSILON: f64 = 0.02;

/// Oracle acceptance below this rate emits `oracle.infeasible` and keeps
/// only the FE rows.
pub const ORACLE_FEASIBLE_RATE: f64 = 1e-4;

/// Midpoint law of a diffusion conditioned to start and end at zero,
/// estimated by reweighting, by the coefficient SDE and by an independent
/// rejection-sampled path simulation.
pub fn run_conditioned_diffusion_example(params: &BridgeParams) -> Result<ResultTable, CliError> {
    if params.n < 2 || !params.n.is_multiple_of(2) {
        return Err(CliError::invalid("midpoint statistics need an even grid size of at least 2"));
    }
    if !params.epsilon.is_finite() || params.epsilon <= 0.0 {
        return Err(CliError::invalid("endpoint window must be positive"));
    }
    if params.oracle_steps < 2 || !params.oracle_steps.is_multiple_of(2) {
        return Err(CliError::invalid("oracle paths need an even, positive step count"));
    }
    if params.oracle_attempts == 0 {
        return Err(CliError::invalid("need at least one oracle attempt"));
    }
    if params.reweight_samples < 2 {
        return Err(CliError::invalid("need at least 2 reweighting samples"));
    }
    let bc = BoundaryConditions::dirichlet();
    let system = FemSystem::new(&bc, params.n)?;
    let potential = params.family.potential()?;
    let grid = *system.grid();
    let mid = params.n / 2;
    let probes = [mid];
    let mut table = ResultTable::new();

    table.append(reweight_rows(
        "bridge",
        &system,
        &potential,
        &probes,
        &[],
        params.reweight_samples,
        params.overrides.quad_order.unwrap_or(4),
        params.seed,
    )?);

    let stage = Stage::new("bridge", params.n, params.seed);
    let mut config = params.overrides.apply(IntegratorConfig::recommended(params.n));
    config.seed = form_seed(params.seed, SdeForm::PreconditionedForm);
    let samples = simulate_stationary(&system, &potential, SdeForm::PreconditionedForm, &config)?;
    table.append(probe_rows(&stage, "sde", &samples, &grid, &probes, &[]));

    let stage = Stage::new("bridge", params.n, params.seed);
    let midpoints = bridge_oracle(
        &params.family,
        params.oracle_steps,
        params.epsilon,
        params.oracle_attempts,
        params.seed,
    );
    let rate = midpoints.len() as f64 / params.oracle_attempts as f64;
    let rate_se = (rate * (1.0 - rate) / params.oracle_attempts as f64).sqrt();
    table.push(stage.row("oracle.accepted", midpoints.len() as f64, 0.0));
    table.push(stage.row("oracle.acceptance_rate", rate, rate_se));
    if rate < ORACLE_FEASIBLE_RATE || midpoints.len() < 2 {
        table.push(stage.row("oracle.infeasible", 1.0, 0.0));
    } else {
        let (mean, se) = stats::mean_and_se(&midpoints);
        table.push(stage.row(format!("oracle.mean.{mid}"), mean, se));
        let (var, se) = stats::variance_and_se(&midpoints);
        table.push(stage.row(format!("oracle.var.{mid}"), var, se));
    }
    table.sort();
    Ok(table)
}

/// Euler-Maruyama paths of `dX = g(X) dtau + dW` from zero, keeping the
/// midpoint value of every path whose endpoint lands in the window.
fn bridge_oracle(
    family: &GFamily,
    steps: usize,
    epsilon: f64,
    attempts: usize,
    seed: u64,
) -> Vec<f64> {
    let dt = 1.0 / steps as f64;
    let sqrt_dt = dt.sqrt();
    let bounds: Vec<(usize, usize)> = (0..N_CHUNKS)
        .map(|c| (attempts * c / N_CHUNKS, attempts * (c + 1) / N_CHUNKS))
        .collect();
    let kept: Vec<Vec<f64>> = bounds
        .into_par_iter()
        .enumerate()
        .map(|(c, (lo, hi))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((SALT_ORACLE << 32) | c as u64);
            let mut accepted = Vec::new();
            for _ in lo..hi {
                let mut x = 0.0f64;
                let mut mid = 0.0f64;
                for step in 0..steps {
                    let z: f64 = rng.sample(StandardNormal);
                    x += family.drift(x) * dt + sqrt_dt * z;
                    if step + 1 == steps / 2 {
                        mid = x;
                    }
                }
                if x.abs() < epsilon {
                    accepted.push(mid);
                }
            }
            accepted
        })
        .collect();
    kept.concat()
}

// ---------------------------------------------------------------------
// tv-rate

/// Potentials selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialId {
    Zero,
    Cos,
    Well,
    LogCosh,
}

impl PotentialId {
    pub fn build(&self) -> Result<Potential, spde_fem::Error> {
        match self {
            PotentialId::Zero => Ok(Potential::zero()),
            PotentialId::Cos => Ok(Potential::neg_cos()),
            PotentialId::Well => Potential::quadratic_well(1.0),
            PotentialId::LogCosh => Ok(Potential::neg_log_cosh()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PotentialId::Zero => "zero",
            PotentialId::Cos => "cos",
            PotentialId::Well => "well",
            PotentialId::LogCosh => "logcosh",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TvRateParams {
    pub n_list: Vec<usize>,
    pub potential: PotentialId,
    pub bc: BoundaryConditions,
    pub n_outer: usize,
    pub norm_samples: usize,
    /// Fine-grid resolution per grid size n is `m_fine_factor * n`.
    pub m_fine_factor: usize,
    /// Runs the conditional estimator with this many bridge fills per
    /// outer sample on top of the upper estimator.
    pub n_inner: Option<usize>,
    pub quad_order: usize,
    pub seed: u64,
}

pub const DEFAULT_TV_GRID: &[usize] = &[4, 8, 16, 32];
pub const DEFAULT_N_OUTER: usize = 50_000;
pub const DEFAULT_NORM_SAMPLES: usize = 50_000;
pub const DEFAULT_M_FINE_FACTOR: usize = 64;

/// Distance estimates over the grid sweep and the fitted log-log rate.
/// Zero distances (constant potentials) make the fit undefined, which is
/// reported as its own row.
pub fn run_tv_rate(params: &TvRateParams) -> Result<ResultTable, CliError> {
    require_increasing(&params.n_list)?;
    if params.n_list.len() < 3 {
        return Err(CliError::invalid("rate fits need at least three grid sizes"));
    }
    if params.m_fine_factor == 0 {
        return Err(CliError::invalid("fine-grid factor must be at least 1"));
    }
    let potential = params.potential.build()?;
    let mut table = ResultTable::new();
    let mut fit_points = Vec::new();
    let mut fit_errors = Vec::new();
    let mut all_positive = true;
    for &n in &params.n_list {
        let stage = Stage::new("tv-rate", n, params.seed);
        let est = TvEstimator {
            n_samples: params.n_outer,
            normalization_samples: params.norm_samples,
            resolution: params.m_fine_factor * n,
            quad_order: params.quad_order,
            seed: params.seed,
        };
        let upper = estimate_tv_upper(&params.bc, &potential, n, &est)?;
        table.push(stage.row("upper", upper.estimate, upper.se));
        if upper.estimate > 0.0 {
            fit_points.push(((n as f64).ln(), upper.estimate.ln()));
            fit_errors.push(upper.se / upper.estimate);
        } else {
            all_positive = false;
        }
        if let Some(n_inner) = params.n_inner {
            let cond = estimate_tv_conditional(&params.bc, &potential, n, n_inner, &est)?;
            table.push(stage.row("conditional", cond.doubled.estimate, cond.doubled.se));
            let bias_se = (cond.estimate.se.powi(2) + cond.doubled.se.powi(2)).sqrt();
            table.push(stage.row("conditional.inner_bias", cond.inner_bias(), bias_se));
            if cond.inner_bias().abs() > 2.0 * bias_se {
                table.push(stage.row("conditional.inner_bias_warning", 1.0, 0.0));
            }
        }
    }
    let stage = Stage::new("tv-rate", 0, params.seed);
    if all_positive {
        let fit = stats::line_fit(&fit_points, &fit_errors);
        table.push(stage.row("fit.slope", fit.slope, fit.slope_se));
        table.push(stage.row("fit.intercept", fit.intercept, 0.0));
    } else {
        table.push(stage.row("fit.slope_undefined", 1.0, 0.0));
    }
    table.sort();
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip_runtime(table: &ResultTable) -> Vec<(String, usize, String, f64, f64, u64)> {
        table
            .rows()
            .iter()
            .map(|r| (r.experiment.clone(), r.n, r.stat.clone(), r.value, r.stderr, r.seed))
            .collect()
    }

    fn small_overrides() -> SamplerOverrides {
        SamplerOverrides {
            dt: Some(1e-3),
            burn_in: Some(2_000),
            thin: Some(100),
            n_samples: Some(300),
            n_chains: Some(2),
            quad_order: None,
        }
    }

    #[test]
    fn exactness_suite_reports_every_case_and_size() {
        let params = ExactnessParams { n_list: vec![2, 4], seed: 3 };
        let table = run_exactness_suite(&params).unwrap();
        // 5 scan rows + 5 cases x 2 sizes.
        assert_eq!(table.len(), 15);
        for (label, _) in EXACTNESS_CASES {
            let scan = table.find(&format!("{label}.scan_agreement")).unwrap();
            assert_eq!(scan.value, 1.0);
            assert_eq!(scan.n, 0);
        }
        for n in [2, 4] {
            for label in ["dirichlet_dirichlet", "robin_robin", "dirichlet_neumann", "robin_dirichlet"]
            {
                let row = table.find_at(n, &format!("{label}.exactness_residual")).unwrap();
                assert!(row.value <= 1e-10, "{label} n={n}: {}", row.value);
            }
            let skipped = table
                .find_at(n, "neumann_neumann.skipped_not_negative_definite")
                .unwrap();
            assert_eq!(skipped.value, 1.0);
        }
        assert!(run_exactness_suite(&ExactnessParams { n_list: vec![4, 4], seed: 0 }).is_err());
        assert!(run_exactness_suite(&ExactnessParams { n_list: vec![], seed: 0 }).is_err());
    }

    #[test]
    fn linear_law_reports_exact_rows_and_both_forms() {
        let params = LinearLawParams {
            n: 2,
            bc: BoundaryConditions::dirichlet(),
            well_curvature: 0.0,
            forms: vec![SdeForm::MassForm, SdeForm::PreconditionedForm],
            overrides: small_overrides(),
            seed: 5,
        };
        let table = run_linear_law(&params).unwrap();
        // Dirichlet n=2 keeps one node with stationary variance 1/4.
        let exact = table.find("exact.cov.1.1").unwrap();
        assert!((exact.value - 0.25).abs() < 1e-12);
        for label in ["mass", "precond"] {
            let var = table.find(&format!("{label}.cov.1.1")).unwrap();
            assert!((var.value - 0.25).abs() < 0.05, "{label}: {}", var.value);
            assert!(var.stderr > 0.0);
            assert!(table.find(&format!("{label}.ess_min")).unwrap().value > 50.0);
        }
        // The two forms must not share driving noise.
        let mass = table.find("mass.cov.1.1").unwrap().value;
        let precond = table.find("precond.cov.1.1").unwrap().value;
        assert!(mass != precond);

        let indefinite = LinearLawParams {
            bc: BoundaryConditions::new(0.0, 1.0, 0.0, 1.0).unwrap(),
            ..params
        };
        let err = run_linear_law(&indefinite).unwrap_err();
        assert_eq!(err.category, "not-negative-definite");
    }

    #[test]
    fn linear_law_is_deterministic_in_the_seed() {
        let params = LinearLawParams {
            n: 2,
            bc: BoundaryConditions::dirichlet(),
            well_curvature: 0.5,
            forms: vec![SdeForm::PreconditionedForm],
            overrides: small_overrides(),
            seed: 11,
        };
        let a = run_linear_law(&params).unwrap();
        let b = run_linear_law(&params).unwrap();
        assert_eq!(strip_runtime(&a), strip_runtime(&b));
        let other = run_linear_law(&LinearLawParams { seed: 12, ..params }).unwrap();
        assert!(strip_runtime(&a) != strip_runtime(&other));
    }

    #[test]
    fn ou_emits_analytic_rows_only_for_the_matching_drift() {
        let base = OuParams {
            n: 4,
            c: 1.0,
            drift_coefficient: None,
            reweight_samples: 4_000,
            overrides: small_overrides(),
            seed: 2,
        };
        let table = run_ou_example(&base).unwrap();
        let var = table.find("analytic.var.0").unwrap();
        assert!((var.value - 0.5).abs() < 1e-15);
        let cov = table.find("analytic.cov.0.4").unwrap();
        assert!((cov.value - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        for route in ["reweight", "mass", "precond"] {
            assert!(table.find(&format!("{route}.var.0")).is_some());
            assert!(table.find(&format!("{route}.cov.0.2")).is_some());
        }
        assert!(table.find("reweight.ess").unwrap().value > 100.0);

        let variant =
            run_ou_example(&OuParams { drift_coefficient: Some(2.0), ..base.clone() }).unwrap();
        assert!(variant.find("analytic.var.0").is_none());
        assert!(variant.find("reweight.var.0").is_some());

        assert!(run_ou_example(&OuParams { c: -1.0, ..base }).is_err());
    }

    #[test]
    fn bridge_runs_all_three_routes() {
        let params = BridgeParams {
            n: 4,
            family: GFamily::Tanh { a: 1.0 },
            epsilon: 0.5,
            oracle_attempts: 4_000,
            oracle_steps: 64,
            reweight_samples: 2_000,
            overrides: small_overrides(),
            seed: 9,
        };
        let table = run_conditioned_diffusion_example(&params).unwrap();
        assert!(table.find("reweight.var.2").is_some());
        assert!(table.find("sde.var.2").is_some());
        let accepted = table.find("oracle.accepted").unwrap().value;
        assert!(accepted >= 100.0, "accepted {accepted}");
        assert!(table.find("oracle.var.2").is_some());
        assert!(table.find("oracle.infeasible").is_none());
        // With a = 1 the potential is constant, so the weights are flat and
        // the effective sample size equals the draw count.
        let ess = table.find("reweight.ess").unwrap().value;
        assert!((ess - 2_000.0).abs() < 1e-6, "ess {ess}");
    }

    #[test]
    fn bridge_flags_an_infeasible_oracle() {
        let params = BridgeParams {
            n: 2,
            family: GFamily::Tanh { a: 1.0 },
            epsilon: 1e-9,
            oracle_attempts: 500,
            oracle_steps: 16,
            reweight_samples: 100,
            overrides: small_overrides(),
            seed: 1,
        };
        let table = run_conditioned_diffusion_example(&params).unwrap();
        assert_eq!(table.find("oracle.infeasible").unwrap().value, 1.0);
        assert!(table.find("oracle.mean.1").is_none());
        assert!(table.find("reweight.mean.1").is_some());

        assert!(run_conditioned_diffusion_example(&BridgeParams { n: 3, ..params }).is_err());
        assert!(
            run_conditioned_diffusion_example(&BridgeParams { oracle_steps: 15, ..params })
                .is_err()
        );
    }

    #[test]
    fn tv_rate_reports_an_undefined_fit_for_constant_potentials() {
        let params = TvRateParams {
            n_list: vec![2, 4, 8],
            potential: PotentialId::Zero,
            bc: BoundaryConditions::dirichlet(),
            n_outer: 200,
            norm_samples: 200,
            m_fine_factor: 4,
            n_inner: None,
            quad_order: 4,
            seed: 3,
        };
        let table = run_tv_rate(&params).unwrap();
        for n in [2, 4, 8] {
            assert_eq!(table.find_at(n, "upper").unwrap().value, 0.0);
        }
        assert_eq!(table.find("fit.slope_undefined").unwrap().value, 1.0);
        assert!(table.find("fit.slope").is_none());

        assert!(run_tv_rate(&TvRateParams { n_list: vec![2, 4], ..params.clone() }).is_err());
        assert!(run_tv_rate(&TvRateParams { m_fine_factor: 0, ..params }).is_err());
    }

    #[test]
    fn tv_rate_fits_a_slope_and_reports_conditional_rows() {
        let params = TvRateParams {
            n_list: vec![2, 4, 8],
            potential: PotentialId::Cos,
            bc: BoundaryConditions::dirichlet(),
            n_outer: 2_000,
            norm_samples: 2_000,
            m_fine_factor: 8,
            n_inner: Some(4),
            quad_order: 4,
            seed: 3,
        };
        let table = run_tv_rate(&params).unwrap();
        let slope = table.find("fit.slope").unwrap();
        assert!(slope.value < 0.0, "slope {}", slope.value);
        assert!(slope.stderr > 0.0);
        for n in [2, 4, 8] {
            assert!(table.find_at(n, "upper").unwrap().value > 0.0);
            assert!(table.find_at(n, "conditional").is_some());
            assert!(table.find_at(n, "conditional.inner_bias").is_some());
        }
    }
}
