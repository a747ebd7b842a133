//! Flat dotted-key configuration files: `section.key = value`, one per
//! line, `#` comments. Every key has a default; unknown keys are rejected
//! so typos cannot silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::Path;

use epl_core::mcmc::{ChainConfig, PriorConfig, TuningConfig};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Ordering,
    Ranking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Epl,
    Mallows,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataConfig {
    pub path: Option<String>,
    pub format: DataFormat,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticConfig {
    pub b: usize,
    pub alpha: f64,
    pub constrained: bool,
    pub smoothed: bool,
    /// Posterior summary JSON from `fit`, source of the plug-in parameters.
    pub summary_path: Option<String>,
    /// Chain CSV from `fit`; enables the posterior-predictive p-value.
    pub chain_path: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateConfig {
    pub generator: Generator,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EplGenConfig {
    pub rho: Vec<usize>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MallowsConfig {
    pub sigma: Vec<usize>,
    /// Dispersion; when absent it is calibrated to `mean_hamming`.
    pub theta: Option<f64>,
    pub mean_hamming: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerConfig {
    pub n_datasets: usize,
    pub n: usize,
    pub scenario: Generator,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub data: DataConfig,
    pub prior: PriorConfig,
    pub tuning: TuningConfig,
    pub chain: ChainConfig,
    pub diagnostic: DiagnosticConfig,
    pub simulate: SimulateConfig,
    pub epl: EplGenConfig,
    pub mallows: MallowsConfig,
    pub power: PowerConfig,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig {
                path: None,
                format: DataFormat::Ordering,
            },
            prior: PriorConfig::default(),
            tuning: TuningConfig::default(),
            chain: ChainConfig::default(),
            diagnostic: DiagnosticConfig {
                b: 100,
                alpha: 0.05,
                constrained: true,
                smoothed: false,
                summary_path: None,
                chain_path: None,
            },
            simulate: SimulateConfig {
                generator: Generator::Epl,
                n: 100,
            },
            epl: EplGenConfig {
                rho: vec![1, 5, 2, 4, 3],
                p: vec![0.15, 0.4, 0.12, 0.08, 0.25],
            },
            mallows: MallowsConfig {
                sigma: vec![1, 2, 3, 4, 5],
                theta: None,
                mean_hamming: 2.0,
            },
            power: PowerConfig {
                n_datasets: 20,
                n: 149,
                scenario: Generator::Epl,
            },
            output_dir: "out".to_string(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Validation(format!("config key `{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Validation(format!(
            "config key `{key}`: expected a boolean, got `{value}`"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_str_pairs(&text)
    }

    pub fn from_str_pairs(text: &str) -> Result<Self, CliError> {
        let mut pairs = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!(
                    "config line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ))
            })?;
            let key = key.trim().to_string();
            if pairs
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(CliError::Validation(format!(
                    "config line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        let mut cfg = RunConfig::default();
        for (key, value) in &pairs {
            cfg.apply(key, value)?;
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "data.path" => self.data.path = Some(value.to_string()),
            "data.format" => {
                self.data.format = match value {
                    "ordering" => DataFormat::Ordering,
                    "ranking" => DataFormat::Ranking,
                    _ => {
                        return Err(CliError::Validation(format!(
                            "data.format must be `ordering` or `ranking`, got `{value}`"
                        )))
                    }
                }
            }
            "prior.c" => self.prior.c = parse_num(key, value)?,
            "prior.d" => self.prior.d = parse_num(key, value)?,
            "tuning.h" => self.tuning.h = parse_num(key, value)?,
            "tuning.alpha0" => self.tuning.alpha0 = parse_list(key, value)?,
            "tuning.lambda1" => self.tuning.lambda1 = parse_num(key, value)?,
            "tuning.mc_draws" => {
                self.tuning.mc_draws = if value == "auto" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "tuning.smoothing" => self.tuning.smoothing = parse_num(key, value)?,
            "tuning.swap_multiplicity_correction" => {
                self.tuning.swap_multiplicity_correction = parse_bool(key, value)?
            }
            "tuning.swap_proposal_mass_ratio" => {
                self.tuning.swap_proposal_mass_ratio = parse_bool(key, value)?
            }
            "chain.iterations" => self.chain.iterations = parse_num(key, value)?,
            "chain.burn_in" => self.chain.burn_in = parse_num(key, value)?,
            "chain.thin" => self.chain.thin = parse_num(key, value)?,
            "chain.seed" => self.chain.seed = parse_num(key, value)?,
            "diagnostic.b" => self.diagnostic.b = parse_num(key, value)?,
            "diagnostic.alpha" => self.diagnostic.alpha = parse_num(key, value)?,
            "diagnostic.constrained" => self.diagnostic.constrained = parse_bool(key, value)?,
            "diagnostic.smoothed" => self.diagnostic.smoothed = parse_bool(key, value)?,
            "diagnostic.summary_path" => self.diagnostic.summary_path = Some(value.to_string()),
            "diagnostic.chain_path" => self.diagnostic.chain_path = Some(value.to_string()),
            "simulate.generator" | "power.scenario" => {
                let gen = match value {
                    "epl" => Generator::Epl,
                    "mallows" => Generator::Mallows,
                    _ => {
                        return Err(CliError::Validation(format!(
                            "{key} must be `epl` or `mallows`, got `{value}`"
                        )))
                    }
                };
                if key == "simulate.generator" {
                    self.simulate.generator = gen;
                } else {
                    self.power.scenario = gen;
                }
            }
            "simulate.n" => self.simulate.n = parse_num(key, value)?,
            "epl.rho" => self.epl.rho = parse_list(key, value)?,
            "epl.p" => self.epl.p = parse_list(key, value)?,
            "mallows.sigma" => self.mallows.sigma = parse_list(key, value)?,
            "mallows.theta" => self.mallows.theta = Some(parse_num(key, value)?),
            "mallows.mean_hamming" => self.mallows.mean_hamming = parse_num(key, value)?,
            "power.n_datasets" => self.power.n_datasets = parse_num(key, value)?,
            "power.n" => self.power.n = parse_num(key, value)?,
            "output.dir" => self.output_dir = value.to_string(),
            _ => {
                return Err(CliError::Validation(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }
}
