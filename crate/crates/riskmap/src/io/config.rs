//! Run configuration: a flat `key = value` file plus command-line
//! overrides, with typed builders for the model, sampler, and dataset
//! schema.
//!
//! Unknown keys are rejected by name so typos fail fast instead of
//! silently running with defaults.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::choropleth::ClassBreaks;
use crate::io::dataset::DatasetSchema;
use crate::mcmc::McmcConfig;
use crate::model::{GammaParams, ModelSpec, ModelTier};

/// Every recognized configuration key with its documentation line.
pub const KNOWN_KEYS: &[(&str, &str)] = &[
    // Model
    ("tier", "model tier: glm | bym | spatio-temporal"),
    ("covariates", "comma-separated covariate column names (empty for none)"),
    ("beta_prior_mean", "normal prior mean for every regression coefficient (default 0)"),
    ("beta_prior_precision", "normal prior precision for every coefficient (default 1e-5)"),
    ("tau_phi_shape", "gamma prior shape for the structured precision (default 0.5)"),
    ("tau_phi_rate", "gamma prior rate for the structured precision (default 0.0005)"),
    ("tau_theta_shape", "gamma prior shape for the unstructured precision (default 0.5)"),
    ("tau_theta_rate", "gamma prior rate for the unstructured precision (default 0.0005)"),
    // Sampler
    ("chains", "number of chains (default 2)"),
    ("iterations", "post-burn-in iterations per chain (default 20000)"),
    ("burn_in", "discarded leading iterations per chain (default 4000)"),
    ("thin", "keep every thin-th draw (default 1; must divide iterations)"),
    ("seed", "base RNG seed (default 1)"),
    ("adapt_window", "proposal adaptation window, at most burn_in (default min(2000, burn_in))"),
    ("target_accept", "Metropolis acceptance target (default 0.44)"),
    ("prior_only", "true to sample the prior without data (default false)"),
    // Data
    ("data", "dataset CSV path"),
    ("region_column", "dataset column with region ids (default 'region')"),
    ("count_column", "dataset column with observed counts (default 'count')"),
    ("expected_column", "dataset column with expected counts (default 'expected')"),
    ("period_column", "dataset column with periods (unset for purely spatial data)"),
    // Graph
    ("graph", "boundary GeoJSON path, edge CSV path, or lattice:ROWSxCOLS"),
    ("contiguity", "polygon adjacency rule: queen | rook (default queen)"),
    ("id_property", "GeoJSON property with region ids (default 'id')"),
    ("snap_tolerance", "vertex snap grid relative to the bbox diagonal (default 1e-9)"),
    ("graph_regions", "region count for edge CSVs that omit isolated regions"),
    // Output
    ("monitor", "summary scope: monitored | all (default monitored)"),
    ("breaks", "map classes: quantile:K or manual:B1,B2,... (default quantile:5)"),
    ("units", "free-text units label carried into map exports"),
    // Simulation
    ("sim_alpha0", "true intercept for simulate (default 0)"),
    ("sim_beta", "comma-separated true covariate coefficients (default none)"),
    ("sim_alpha3", "true period-trend coefficient for simulate (default 0)"),
    ("sim_tau_phi", "true structured precision for simulate (default 1)"),
    ("sim_tau_theta", "true unstructured precision for simulate (default 1)"),
    ("sim_expected_low", "lower bound for simulated expected counts (default 100)"),
    ("sim_expected_high", "upper bound for simulated expected counts (default 100)"),
    ("sim_periods", "number of periods to simulate (default 1)"),
];

/// Parsed key-value configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    map: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines; `#` lines are comments, blank lines are
    /// skipped, keys may appear once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "config line {}: expected 'key = value', got '{line}'",
                    no + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!(
                    "config line {}: empty key or value",
                    no + 1
                )));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "config line {}: key '{key}' appears more than once",
                    no + 1
                )));
            }
        }
        let cfg = RunConfig { map };
        cfg.check_keys()?;
        Ok(cfg)
    }

    /// Applies `key=value` override strings (last one wins per key).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for kv in overrides {
            let kv = kv.as_ref();
            let Some((key, value)) = kv.split_once('=') else {
                return Err(Error::Config(format!(
                    "override '{kv}' is not of the form key=value"
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!("override '{kv}' has an empty side")));
            }
            self.map.insert(key.to_string(), value.to_string());
        }
        self.check_keys()
    }

    fn check_keys(&self) -> Result<()> {
        for key in self.map.keys() {
            if !KNOWN_KEYS.iter().any(|(k, _)| k == key) {
                return Err(Error::Config(format!("unknown config key '{key}'")));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    /// Snapshot of every set key, for archiving.
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.map
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.map.insert(key.to_string(), value.to_string());
        self.check_keys()
    }

    fn parse_with<T, E>(&self, key: &str, f: impl Fn(&str) -> std::result::Result<T, E>) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => f(raw).map(Some).map_err(|_| {
                Error::Config(format!("config key '{key}' has invalid value '{raw}'"))
            }),
        }
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.parse_with(key, str::parse::<f64>)?.unwrap_or(default);
        if !v.is_finite() {
            return Err(Error::Config(format!("config key '{key}' must be finite")));
        }
        Ok(v)
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parse_with(key, str::parse::<usize>)?.unwrap_or(default))
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parse_with(key, str::parse::<u64>)?.unwrap_or(default))
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        self.parse_with(key, |s| match s.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(()),
        })
        .map(|v| v.unwrap_or(default))
    }

    fn comma_list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|raw| {
                raw.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Covariate column names (empty when the model has none).
    pub fn covariate_columns(&self) -> Vec<String> {
        self.comma_list("covariates")
    }

    /// Builds the model specification; `tier` must be set.
    pub fn model_spec(&self) -> Result<ModelSpec<f64>> {
        let tier = match self.get("tier") {
            Some(raw) => ModelTier::parse(raw)?,
            None => return Err(Error::Config("config key 'tier' is required".into())),
        };
        let n_covariates = self.covariate_columns().len();
        let mut spec = ModelSpec::new(tier, n_covariates);
        let mean = self.get_f64("beta_prior_mean", 0.0)?;
        let precision = self.get_f64("beta_prior_precision", 1e-5)?;
        spec.beta_prior_mean = vec![mean; spec.n_beta()];
        spec.beta_prior_precision = vec![precision; spec.n_beta()];
        spec.tau_phi_prior = GammaParams::new(
            self.get_f64("tau_phi_shape", 0.5)?,
            self.get_f64("tau_phi_rate", 0.0005)?,
        );
        spec.tau_theta_prior = GammaParams::new(
            self.get_f64("tau_theta_shape", 0.5)?,
            self.get_f64("tau_theta_rate", 0.0005)?,
        );
        spec.validate()?;
        Ok(spec)
    }

    /// Builds the sampler configuration.
    pub fn mcmc_config(&self) -> Result<McmcConfig<f64>> {
        let burn_in = self.get_usize("burn_in", 4_000)?;
        let cfg = McmcConfig {
            n_chains: self.get_usize("chains", 2)?,
            n_iterations: self.get_usize("iterations", 20_000)?,
            burn_in,
            thin: self.get_usize("thin", 1)?,
            seed: self.get_u64("seed", 1)?,
            adapt_window: self.get_usize("adapt_window", burn_in.min(2_000))?,
            target_accept: self.get_f64("target_accept", 0.44)?,
            prior_only: self.get_bool("prior_only", false)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the dataset column mapping.
    pub fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            region_id: self.get("region_column").unwrap_or("region").to_string(),
            count: self.get("count_column").unwrap_or("count").to_string(),
            expected: self.get("expected_column").unwrap_or("expected").to_string(),
            covariates: self.covariate_columns(),
            period: self.get("period_column").map(str::to_string),
        }
    }

    /// Parses the map class-break rule (default `quantile:5`).
    pub fn class_breaks(&self) -> Result<ClassBreaks<f64>> {
        let raw = self.get("breaks").unwrap_or("quantile:5");
        let fail = || Error::Config(format!("config key 'breaks' has invalid value '{raw}'"));
        let (kind, arg) = raw.split_once(':').ok_or_else(fail)?;
        match kind.trim() {
            "quantile" => {
                let k: usize = arg.trim().parse().map_err(|_| fail())?;
                Ok(ClassBreaks::Quantile(k))
            }
            "manual" => {
                let edges: Vec<f64> = arg
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| fail()))
                    .collect::<Result<_>>()?;
                Ok(ClassBreaks::Manual(edges))
            }
            _ => Err(fail()),
        }
    }
}
