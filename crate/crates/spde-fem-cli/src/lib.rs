//! Experiment harness around the `spde-fem` crate: parameter sweeps, the
//! worked examples and the CSV/JSON result tables behind the `spde-fem`
//! binary.

pub mod config;
pub mod experiments;
pub mod table;

use std::fmt;

/// Error with a machine-readable category and the exit code the binary
/// reports for it: 2 for usage and configuration mistakes, 1 for failures
/// at run time.
#[derive(Debug, Clone)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
    pub exit_code: u8,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { category: "config", message: message.into(), exit_code: 2 }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self { category: "invalid-input", message: message.into(), exit_code: 2 }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { category: "io", message: message.into(), exit_code: 1 }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "category={} {}", self.category, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<spde_fem::Error> for CliError {
    fn from(err: spde_fem::Error) -> Self {
        use spde_fem::Error;
        let (category, exit_code) = match err {
            Error::Divergence { .. } => ("divergence", 1),
            Error::DegenerateWeights { .. } => ("degenerate-weights", 1),
            Error::NotNegativeDefinite => ("not-negative-definite", 1),
            Error::SingularOperator => ("singular-operator", 1),
            Error::NotPositiveDefinite { .. } => ("not-positive-definite", 1),
            _ => ("invalid-input", 2),
        };
        Self { category, message: err.to_string(), exit_code }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_categories_and_exit_codes() {
        let e = CliError::from(spde_fem::Error::Divergence { step: 3 });
        assert_eq!((e.category, e.exit_code), ("divergence", 1));
        let e = CliError::from(spde_fem::Error::NotNegativeDefinite);
        assert_eq!((e.category, e.exit_code), ("not-negative-definite", 1));
        let e = CliError::from(spde_fem::Error::Validation("bad".into()));
        assert_eq!((e.category, e.exit_code), ("invalid-input", 2));
        assert_eq!(CliError::config("x").exit_code, 2);
        assert_eq!(format!("{}", CliError::config("bad key")), "category=config bad key");
    }
}
