//! Subcommand implementations. Each command computes everything first and
//! writes its outputs at the end, so a failure leaves the output directory
//! untouched.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use epl_core::diag::{
    bootstrap_p_value, epl_diagnostic, posterior_predictive_p_value, power_study, Scenario,
};
use epl_core::mcmc::{plug_in_params, posterior_summaries, run_chain, PosteriorSummary};
use epl_core::model::{sample_epl, EPLParams, MallowsHamming, RankingDataset, SupportParams};
use epl_core::perm::{Permutation, ReferenceOrder};

use crate::config::{Generator, RunConfig};
use crate::io;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.output_dir).join(name)
}

fn epl_params_from(rho: &[usize], p: &[f64]) -> Result<EPLParams, CliError> {
    let rho = Permutation::from_slice(rho)
        .and_then(ReferenceOrder::encode)
        .map_err(|e| CliError::Validation(format!("epl.rho: {e}")))?;
    let p =
        SupportParams::new(p.to_vec()).map_err(|e| CliError::Validation(format!("epl.p: {e}")))?;
    EPLParams::new(rho, p).map_err(|e| CliError::Validation(format!("epl generator: {e}")))
}

fn mallows_from(cfg: &RunConfig) -> Result<(MallowsHamming, f64), CliError> {
    let sigma = Permutation::from_slice(&cfg.mallows.sigma)
        .map_err(|e| CliError::Validation(format!("mallows.sigma: {e}")))?;
    let theta = match cfg.mallows.theta {
        Some(t) => t,
        None => MallowsHamming::calibrate_theta(&sigma, cfg.mallows.mean_hamming, 0.01)
            .map_err(|e| CliError::Validation(format!("mallows calibration: {e}")))?,
    };
    let model = MallowsHamming::new(sigma, theta)
        .map_err(|e| CliError::Validation(format!("mallows model: {e}")))?;
    Ok((model, theta))
}

fn read_configured_dataset(cfg: &RunConfig) -> Result<RankingDataset, CliError> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| CliError::Validation("data.path is required".into()))?;
    io::read_dataset(Path::new(path), cfg.data.format)
}

#[derive(Serialize)]
struct Provenance<'a> {
    schema_version: u32,
    command: &'static str,
    seed: u64,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    generator: Generator,
    n: usize,
    /// Dispersion actually used for Mallows generation (calibrated when
    /// not given explicitly).
    mallows_theta: Option<f64>,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.simulate.n < 1 {
        return Err(CliError::Validation("simulate.n must be at least 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.chain.seed);
    let mut theta_used = None;
    let data = match cfg.simulate.generator {
        Generator::Epl => {
            let params = epl_params_from(&cfg.epl.rho, &cfg.epl.p)?;
            sample_epl(&params, cfg.simulate.n, &mut rng)
                .map_err(|e| CliError::Runtime(format!("simulation failed: {e}")))?
        }
        Generator::Mallows => {
            let (model, theta) = mallows_from(cfg)?;
            theta_used = Some(theta);
            model
                .sample_dataset(cfg.simulate.n, &mut rng)
                .map_err(|e| CliError::Runtime(format!("simulation failed: {e}")))?
        }
    };
    io::write_dataset(&out_path(cfg, "dataset.csv"), &data)?;
    io::write_json(
        &out_path(cfg, "provenance.json"),
        &SimulateReport {
            provenance: Provenance {
                schema_version: SCHEMA_VERSION,
                command: "simulate",
                seed: cfg.chain.seed,
                config: cfg,
            },
            generator: cfg.simulate.generator,
            n: cfg.simulate.n,
            mallows_theta: theta_used,
        },
    )
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    summary: PosteriorSummary,
    borda_ordering: Vec<usize>,
    item_labels: Vec<String>,
}

#[derive(Deserialize)]
struct FitReportIn {
    summary: PosteriorSummary,
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<(), CliError> {
    let data = read_configured_dataset(cfg)?;
    let chain = run_chain(&data, &cfg.prior, &cfg.tuning, &cfg.chain)
        .map_err(|e| CliError::Validation(format!("chain setup: {e}")))?;
    let summary = posterior_summaries(&chain, 10)
        .map_err(|e| CliError::Runtime(format!("summarizing the chain: {e}")))?;

    io::write_chain(&out_path(cfg, "chain.csv"), &chain)?;

    let mut top = String::from("rank,rho,probability\n");
    for (i, entry) in summary.top_rho.iter().enumerate() {
        let rho: Vec<String> = entry.rho.iter().map(|e| e.to_string()).collect();
        top.push_str(&format!(
            "{},{},{:?}\n",
            i + 1,
            rho.join(" "),
            entry.probability
        ));
    }
    io::write_atomic(&out_path(cfg, "top_rho.csv"), &top)?;

    io::write_json(
        &out_path(cfg, "summary.json"),
        &FitReport {
            provenance: Provenance {
                schema_version: SCHEMA_VERSION,
                command: "fit",
                seed: cfg.chain.seed,
                config: cfg,
            },
            borda_ordering: data.borda_ordering().entries().to_vec(),
            item_labels: data.item_labels().to_vec(),
            summary,
        },
    )
}

#[derive(Serialize)]
struct PlugIn {
    source: &'static str,
    rho: Vec<usize>,
    p: Vec<f64>,
}

#[derive(Serialize)]
struct DiagnoseReport<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    b: usize,
    constrained: bool,
    smoothed: bool,
    t_min: f64,
    argmin_pair: (usize, usize),
    t_matrix: Vec<Vec<Option<f64>>>,
    bootstrap_p_value: f64,
    posterior_predictive_p_value: Option<f64>,
    plug_in: PlugIn,
}

pub fn cmd_diagnose(cfg: &RunConfig) -> Result<(), CliError> {
    let data = read_configured_dataset(cfg)?;
    let chain = match &cfg.diagnostic.chain_path {
        Some(p) => Some(io::read_chain(Path::new(p))?),
        None => None,
    };
    let (fitted, source) = if let Some(path) = &cfg.diagnostic.summary_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read summary {path}: {e}")))?;
        let report: FitReportIn = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("summary {path}: {e}")))?;
        let params = epl_params_from(
            &report.summary.modal_rho,
            &report.summary.support_mean_normalized,
        )?;
        (params, "summary")
    } else if let Some(chain) = &chain {
        let params = plug_in_params(chain)
            .map_err(|e| CliError::Validation(format!("chain plug-in: {e}")))?;
        (params, "chain")
    } else {
        return Err(CliError::Validation(
            "diagnose needs diagnostic.summary_path or diagnostic.chain_path".into(),
        ));
    };

    let diag = epl_diagnostic(&data, cfg.diagnostic.constrained);
    let boot = bootstrap_p_value(
        &data,
        &fitted,
        cfg.diagnostic.b,
        cfg.diagnostic.constrained,
        cfg.diagnostic.smoothed,
        cfg.chain.seed,
    )
    .map_err(|e| CliError::Runtime(format!("bootstrap: {e}")))?;
    let ppp = match &chain {
        Some(chain) => Some(
            posterior_predictive_p_value(
                &data,
                chain,
                cfg.diagnostic.b,
                cfg.diagnostic.constrained,
                cfg.diagnostic.smoothed,
                cfg.chain.seed,
            )
            .map_err(|e| CliError::Runtime(format!("posterior predictive: {e}")))?,
        ),
        None => None,
    };

    io::write_json(
        &out_path(cfg, "diagnostic.json"),
        &DiagnoseReport {
            provenance: Provenance {
                schema_version: SCHEMA_VERSION,
                command: "diagnose",
                seed: cfg.chain.seed,
                config: cfg,
            },
            b: cfg.diagnostic.b,
            constrained: cfg.diagnostic.constrained,
            smoothed: cfg.diagnostic.smoothed,
            t_min: diag.t_min,
            argmin_pair: diag.argmin_pair,
            t_matrix: diag.t_matrix,
            bootstrap_p_value: boot,
            posterior_predictive_p_value: ppp,
            plug_in: PlugIn {
                source,
                rho: fitted.rho.rho().entries().to_vec(),
                p: fitted.p.values().to_vec(),
            },
        },
    )
}

#[derive(Serialize)]
struct PowerReport<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    scenario: Generator,
    n_datasets: usize,
    n: usize,
    b: usize,
    alpha: f64,
    rejection_rate: f64,
}

pub fn cmd_power_study(cfg: &RunConfig) -> Result<(), CliError> {
    let scenario = match cfg.power.scenario {
        Generator::Epl => Scenario::Epl(epl_params_from(&cfg.epl.rho, &cfg.epl.p)?),
        Generator::Mallows => {
            let (model, _) = mallows_from(cfg)?;
            Scenario::MallowsHamming {
                sigma: model.sigma().clone(),
                theta: model.theta(),
            }
        }
    };
    let result = power_study(
        &scenario,
        cfg.power.n_datasets,
        cfg.power.n,
        cfg.diagnostic.b,
        cfg.diagnostic.alpha,
        &cfg.prior,
        &cfg.tuning,
        &cfg.chain,
        cfg.diagnostic.constrained,
        cfg.chain.seed,
    )
    .map_err(|e| CliError::Validation(format!("power study: {e}")))?;

    let mut pvals = String::from("dataset,p_value\n");
    for (i, p) in result.p_values.iter().enumerate() {
        pvals.push_str(&format!("{},{:?}\n", i + 1, p));
    }
    io::write_atomic(&out_path(cfg, "p_values.csv"), &pvals)?;
    io::write_json(
        &out_path(cfg, "power.json"),
        &PowerReport {
            provenance: Provenance {
                schema_version: SCHEMA_VERSION,
                command: "power-study",
                seed: cfg.chain.seed,
                config: cfg,
            },
            scenario: cfg.power.scenario,
            n_datasets: cfg.power.n_datasets,
            n: cfg.power.n,
            b: cfg.diagnostic.b,
            alpha: cfg.diagnostic.alpha,
            rejection_rate: result.rejection_rate,
        },
    )
}
