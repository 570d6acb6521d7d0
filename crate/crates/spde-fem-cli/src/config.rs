//! Key-value config files and the flag > file > environment > default
//! resolution order for shared settings.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

/// Seed fallback when neither a flag, a config file nor the environment
/// provides one.
pub const DEFAULT_SEED: u64 = 0;

/// Environment variable consulted for the seed.
pub const SEED_ENV_VAR: &str = "SPDE_FEM_SEED";

/// Keys a config file may set. Everything else is rejected so typos do not
/// silently fall back to defaults.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "jobs",
    "dt",
    "burn_in",
    "thin",
    "n_samples",
    "n_chains",
    "quad_order",
    "n_outer",
    "norm_samples",
    "m_fine_factor",
    "n_inner",
    "reweight_samples",
    "oracle_attempts",
    "oracle_steps",
    "epsilon",
];

/// Parsed `key = value` file. Lines starting with `#` and blank lines are
/// skipped; later assignments win.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    entries: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("config line {} is not key = value: {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::config(format!(
                    "unknown config key {key:?} on line {}",
                    lineno + 1
                )));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::config(format!("config value for {key} is not valid: {raw:?}"))
            }),
        }
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        self.parse_as(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.parse_as(key)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.parse_as(key)
    }
}

/// Seed from the environment, if set.
pub fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV_VAR) {
        Err(_) => Ok(None),
        Ok(raw) => raw
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::config(format!("{SEED_ENV_VAR} is not a valid seed: {raw:?}"))),
    }
}

/// Flag > config file > environment > [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> Result<u64, CliError> {
    Ok(flag
        .or(file.get_u64("seed")?)
        .or(env_seed()?)
        .unwrap_or(DEFAULT_SEED))
}

/// Flag > config file > default, for settings without an environment hook.
pub fn resolve<T>(flag: Option<T>, file_value: Option<T>, default: T) -> T {
    flag.or(file_value).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_overrides() {
        let cfg = FileConfig::parse(
            "# sampler settings\n\nseed = 42\ndt = 0.002\nseed= 43\n",
        )
        .unwrap();
        assert_eq!(cfg.get_u64("seed").unwrap(), Some(43));
        assert_eq!(cfg.get_f64("dt").unwrap(), Some(0.002));
        assert_eq!(cfg.get_usize("thin").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(FileConfig::parse("dtt = 0.1\n").is_err());
        assert!(FileConfig::parse("no equals sign\n").is_err());
        let cfg = FileConfig::parse("dt = fast\n").unwrap();
        assert!(cfg.get_f64("dt").is_err());
    }

    #[test]
    fn seed_resolution_prefers_the_flag() {
        let cfg = FileConfig::parse("seed = 9\n").unwrap();
        assert_eq!(resolve_seed(Some(5), &cfg).unwrap(), 5);
        assert_eq!(resolve_seed(None, &cfg).unwrap(), 9);
        assert_eq!(resolve_seed(None, &FileConfig::empty()).unwrap(), DEFAULT_SEED);
    }

    #[test]
    fn generic_resolution_order() {
        assert_eq!(resolve(Some(1), Some(2), 3), 1);
        assert_eq!(resolve(None, Some(2), 3), 2);
        assert_eq!(resolve::<usize>(None, None, 3), 3);
    }
}
