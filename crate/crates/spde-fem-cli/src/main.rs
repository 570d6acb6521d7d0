//! Command-line front end: flag parsing, config resolution and table
//! output. All actual work lives in [`spde_fem_cli::experiments`].

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spde_fem::{BoundaryConditions, SdeForm};
use spde_fem_cli::config::{self, FileConfig};
use spde_fem_cli::experiments::{
    self, BridgeParams, ExactnessParams, GFamily, LinearLawParams, OuParams, PotentialId,
    SamplerOverrides, TvRateParams, DEFAULT_EPSILON, DEFAULT_EXACTNESS_GRID, DEFAULT_M_FINE_FACTOR,
    DEFAULT_NORM_SAMPLES, DEFAULT_N_OUTER, DEFAULT_ORACLE_ATTEMPTS, DEFAULT_ORACLE_STEPS,
    DEFAULT_REWEIGHT_SAMPLES, DEFAULT_TV_GRID,
};
use spde_fem_cli::table::ResultTable;
use spde_fem_cli::CliError;

#[derive(Parser)]
#[command(name = "spde-fem", version, about = "Finite-element stationary-law experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Residuals of the exact stationary covariance identity across
    /// boundary cases and grid sizes.
    Exactness(ExactnessArgs),
    /// Stationary moments of the coefficient SDE against the exact
    /// Gaussian law.
    LinearLaw(LinearLawArgs),
    /// Exponential-kernel example with Robin boundaries and linear drift.
    Ou(OuArgs),
    /// Diffusion conditioned to hit zero at both ends, with a path oracle.
    Bridge(BridgeArgs),
    /// Distance-to-stationarity sweep over grid sizes with a rate fit.
    TvRate(TvRateArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Exactness(a) => &a.common,
            Command::LinearLaw(a) => &a.common,
            Command::Ou(a) => &a.common,
            Command::Bridge(a) => &a.common,
            Command::TvRate(a) => &a.common,
        }
    }
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// RNG seed; resolution order is flag, config file, SPDE_FEM_SEED, 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the CSV table to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a JSON mirror of the table to this file.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Bound on the worker thread count.
    #[arg(long)]
    jobs: Option<usize>,
    /// Key-value file supplying sampler and budget settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SamplerArgs {
    /// Integrator step size.
    #[arg(long)]
    dt: Option<f64>,
    /// Steps discarded before recording starts.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Steps between recorded samples.
    #[arg(long)]
    thin: Option<usize>,
    /// Recorded samples per chain.
    #[arg(long)]
    n_samples: Option<usize>,
    /// Independent chains.
    #[arg(long)]
    n_chains: Option<usize>,
    /// Gauss-Legendre nodes per element.
    #[arg(long)]
    quad_order: Option<usize>,
}

#[derive(Args)]
struct ExactnessArgs {
    /// Grid sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct LinearLawArgs {
    /// Grid size.
    #[arg(long)]
    n: Option<usize>,
    /// Boundary parameters a0,b0,a1,b1.
    #[arg(long)]
    bc: Option<String>,
    /// Which SDE form to integrate.
    #[arg(long, value_enum)]
    form: Option<FormChoice>,
    /// Curvature k of the well potential F(v) = -k v^2 / 2.
    #[arg(long)]
    well_curvature: Option<f64>,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct OuArgs {
    /// Grid size.
    #[arg(long)]
    n: Option<usize>,
    /// Kernel rate and boundary coefficient c.
    #[arg(long)]
    c: Option<f64>,
    /// Linear drift coefficient, replacing the default c^2.
    #[arg(long)]
    drift_linear_coeff: Option<f64>,
    /// Draws for the reweighting route.
    #[arg(long)]
    reweight_samples: Option<usize>,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct BridgeArgs {
    /// Grid size, even so the midpoint is a node.
    #[arg(long)]
    n: Option<usize>,
    /// Drift family g.
    #[arg(long, value_enum)]
    g_family: Option<GChoice>,
    /// Drift amplitude a.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Wavenumber k of the sin family.
    #[arg(long)]
    wavenumber: Option<f64>,
    /// Endpoint window for the path oracle.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Path attempts for the oracle.
    #[arg(long)]
    oracle_attempts: Option<usize>,
    /// Euler-Maruyama steps per oracle path.
    #[arg(long)]
    oracle_steps: Option<usize>,
    /// Draws for the reweighting route.
    #[arg(long)]
    reweight_samples: Option<usize>,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct TvRateArgs {
    /// Grid sizes, comma separated, at least three.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Potential driving the nonlinearity.
    #[arg(long, value_enum)]
    potential: Option<PotentialChoice>,
    /// Boundary parameters a0,b0,a1,b1.
    #[arg(long)]
    bc: Option<String>,
    /// Outer samples per grid size.
    #[arg(long)]
    n_outer: Option<usize>,
    /// Samples for the normalisation constants.
    #[arg(long)]
    norm_samples: Option<usize>,
    /// Fine-grid resolution per grid size n is this factor times n.
    #[arg(long)]
    m_fine_factor: Option<usize>,
    /// Bridge fills per outer sample; enables the conditional estimator.
    #[arg(long)]
    n_inner: Option<usize>,
    /// Gauss-Legendre nodes per element.
    #[arg(long)]
    quad_order: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormChoice {
    Mass,
    Precond,
    Both,
}

impl FormChoice {
    fn forms(self) -> Vec<SdeForm> {
        match self {
            FormChoice::Mass => vec![SdeForm::MassForm],
            FormChoice::Precond => vec![SdeForm::PreconditionedForm],
            FormChoice::Both => vec![SdeForm::MassForm, SdeForm::PreconditionedForm],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GChoice {
    Tanh,
    Sin,
}

#[derive(Clone, Copy, ValueEnum)]
enum PotentialChoice {
    Zero,
    Cos,
    Well,
    Logcosh,
}

impl PotentialChoice {
    fn id(self) -> PotentialId {
        match self {
            PotentialChoice::Zero => PotentialId::Zero,
            PotentialChoice::Cos => PotentialId::Cos,
            PotentialChoice::Well => PotentialId::Well,
            PotentialChoice::Logcosh => PotentialId::LogCosh,
        }
    }
}

fn parse_bc(raw: &str) -> Result<BoundaryConditions, CliError> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 4 {
        return Err(CliError::invalid(format!(
            "boundary parameters must be four comma-separated numbers a0,b0,a1,b1, got {raw:?}"
        )));
    }
    let mut values = [0.0f64; 4];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| {
            CliError::invalid(format!("boundary parameter {part:?} is not a number"))
        })?;
    }
    Ok(BoundaryConditions::new(values[0], values[1], values[2], values[3])?)
}

fn sampler_overrides(args: &SamplerArgs, cfg: &FileConfig) -> Result<SamplerOverrides, CliError> {
    Ok(SamplerOverrides {
        dt: args.dt.or(cfg.get_f64("dt")?),
        burn_in: args.burn_in.or(cfg.get_usize("burn_in")?),
        thin: args.thin.or(cfg.get_usize("thin")?),
        n_samples: args.n_samples.or(cfg.get_usize("n_samples")?),
        n_chains: args.n_chains.or(cfg.get_usize("n_chains")?),
        quad_order: args.quad_order.or(cfg.get_usize("quad_order")?),
    })
}

fn dispatch(command: Command, cfg: &FileConfig, seed: u64) -> Result<ResultTable, CliError> {
    match command {
        Command::Exactness(args) => {
            let params = ExactnessParams {
                n_list: args.n.unwrap_or_else(|| DEFAULT_EXACTNESS_GRID.to_vec()),
                seed,
            };
            experiments::run_exactness_suite(&params)
        }
        Command::LinearLaw(args) => {
            let params = LinearLawParams {
                n: args.n.unwrap_or(4),
                bc: parse_bc(args.bc.as_deref().unwrap_or("1,1,1,1"))?,
                well_curvature: args.well_curvature.unwrap_or(0.0),
                forms: args.form.unwrap_or(FormChoice::Both).forms(),
                overrides: sampler_overrides(&args.sampler, cfg)?,
                seed,
            };
            experiments::run_linear_law(&params)
        }
        Command::Ou(args) => {
            let params = OuParams {
                n: args.n.unwrap_or(32),
                c: args.c.unwrap_or(1.0),
                drift_coefficient: args.drift_linear_coeff,
                reweight_samples: config::resolve(
                    args.reweight_samples,
                    cfg.get_usize("reweight_samples")?,
                    DEFAULT_REWEIGHT_SAMPLES,
                ),
                overrides: sampler_overrides(&args.sampler, cfg)?,
                seed,
            };
            experiments::run_ou_example(&params)
        }
        Command::Bridge(args) => {
            let amplitude = args.amplitude.unwrap_or(1.0);
            let family = match args.g_family.unwrap_or(GChoice::Tanh) {
                GChoice::Tanh => GFamily::Tanh { a: amplitude },
                GChoice::Sin => GFamily::Sin { a: amplitude, k: args.wavenumber.unwrap_or(1.0) },
            };
            let params = BridgeParams {
                n: args.n.unwrap_or(32),
                family,
                epsilon: config::resolve(args.epsilon, cfg.get_f64("epsilon")?, DEFAULT_EPSILON),
                oracle_attempts: config::resolve(
                    args.oracle_attempts,
                    cfg.get_usize("oracle_attempts")?,
                    DEFAULT_ORACLE_ATTEMPTS,
                ),
                oracle_steps: config::resolve(
                    args.oracle_steps,
                    cfg.get_usize("oracle_steps")?,
                    DEFAULT_ORACLE_STEPS,
                ),
                reweight_samples: config::resolve(
                    args.reweight_samples,
                    cfg.get_usize("reweight_samples")?,
                    DEFAULT_REWEIGHT_SAMPLES,
                ),
                overrides: sampler_overrides(&args.sampler, cfg)?,
                seed,
            };
            experiments::run_conditioned_diffusion_example(&params)
        }
        Command::TvRate(args) => {
            let params = TvRateParams {
                n_list: args.n.unwrap_or_else(|| DEFAULT_TV_GRID.to_vec()),
                potential: args.potential.unwrap_or(PotentialChoice::Cos).id(),
                bc: parse_bc(args.bc.as_deref().unwrap_or("1,0,1,0"))?,
                n_outer: config::resolve(args.n_outer, cfg.get_usize("n_outer")?, DEFAULT_N_OUTER),
                norm_samples: config::resolve(
                    args.norm_samples,
                    cfg.get_usize("norm_samples")?,
                    DEFAULT_NORM_SAMPLES,
                ),
                m_fine_factor: config::resolve(
                    args.m_fine_factor,
                    cfg.get_usize("m_fine_factor")?,
                    DEFAULT_M_FINE_FACTOR,
                ),
                n_inner: args.n_inner.or(cfg.get_usize("n_inner")?),
                quad_order: config::resolve(args.quad_order, cfg.get_usize("quad_order")?, 4),
                seed,
            };
            experiments::run_tv_rate(&params)
        }
    }
}

fn emit(table: &ResultTable, common: &CommonArgs) -> Result<(), CliError> {
    let csv = table.to_csv();
    match &common.out {
        Some(path) => std::fs::write(path, &csv)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    if let Some(path) = &common.json {
        let mut body = table.to_json();
        body.push('\n');
        std::fs::write(path, body)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let common = cli.command.common().clone();
    let cfg = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::empty(),
    };
    if let Some(jobs) = common.jobs.or(cfg.get_usize("jobs")?) {
        if jobs == 0 {
            return Err(CliError::invalid("worker count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot set worker count: {e}")))?;
    }
    let seed = config::resolve_seed(common.seed, &cfg)?;
    let table = dispatch(cli.command, &cfg, seed)?;
    emit(&table, &common)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn bc_strings_parse_or_reject() {
        let bc = parse_bc("1, 0, 1, 0").unwrap();
        assert_eq!(bc, BoundaryConditions::dirichlet());
        assert!(parse_bc("1,0,1").is_err());
        assert!(parse_bc("1,0,1,x").is_err());
    }
}
