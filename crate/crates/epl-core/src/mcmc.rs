//! Tuned joint Metropolis-within-Gibbs sampler for the order-constrained
//! EPL posterior.
//!
//! One iteration composes three kernels:
//!
//! 1. a joint MH proposal for `(rho, p)` whose stagewise top/bottom
//!    probabilities are tuned by comparing observed contingency tables with
//!    Monte-Carlo expected tables under the candidate supports;
//! 2. a full Gibbs cycle for the exponential latents `y` and the supports
//!    `p` (Gamma conjugacy);
//! 3. an adjacent-swap MH move on `rho` at the current supports.
//!
//! The stagewise proposal probabilities depend on Monte-Carlo tables, so
//! each iteration fixes one table randomization (a [`TableContext`]) and
//! evaluates the forward and reverse proposal densities under it. The
//! context seed is drawn independently of the chain state, which keeps the
//! acceptance ratio a valid MH ratio for that iteration's proposal kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::exec::substream_seed;
use crate::model::{
    epl_log_likelihood, sample_latents, sample_pl_prefix, EPLParams, LatentMatrix, ModelError,
    RankingDataset, SupportParams,
};
use crate::perm::{PermError, Permutation, ReferenceOrder};

#[derive(Debug, Error)]
pub enum McmcError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Perm(#[from] PermError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("rank {0} is not a first-stage candidate (must be 1 or K)")]
    BadFirstStageRank(usize),
    #[error("stage {t} out of range {lo}..={hi}")]
    StageOutOfRange { t: usize, lo: usize, hi: usize },
    #[error("chain holds no draws")]
    EmptyChain,
}

/// Gamma prior on each support weight, uniform prior on the restricted
/// reference-order space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorConfig {
    pub c: f64,
    pub d: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { c: 1.0, d: 1.0 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<(), McmcError> {
        if !(self.c > 0.0 && self.c.is_finite() && self.d > 0.0 && self.d.is_finite()) {
            return Err(McmcError::Config(format!(
                "prior shape/rate must be positive, got c={}, d={}",
                self.c, self.d
            )));
        }
        Ok(())
    }

    pub fn log_density(&self, p: &SupportParams) -> f64 {
        let base = self.c * self.d.ln() - ln_gamma(self.c);
        p.values()
            .iter()
            .map(|&v| base + (self.c - 1.0) * v.ln() - self.d * v)
            .sum()
    }
}

/// Tuning knobs of the joint proposal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningConfig {
    /// Floor for the bottom-selection probability; lambdas live in
    /// `[h, 1-h]`.
    pub h: f64,
    /// Dirichlet concentration multiplier; one entry broadcasts to all K.
    pub alpha0: Vec<f64>,
    /// First-stage top probability.
    pub lambda1: f64,
    /// Monte-Carlo draws per expected table; `None` uses N.
    pub mc_draws: Option<usize>,
    /// Added to frequency counts before the Dirichlet scaling, keeping the
    /// parameters proper when a count is zero.
    pub smoothing: f64,
    /// Include the `M(rho')/M(rho'')` uniform-swap-choice factor in the
    /// swap acceptance ratio. On by default: it is the Hastings correction
    /// for the uniform choice over applicable swaps, and without it the
    /// swap kernel does not leave the posterior invariant.
    pub swap_multiplicity_correction: bool,
    /// Include the published `g(rho')/g(rho'')` proposal-mass factor in the
    /// swap acceptance ratio. Off by default: the factor tilts the swap
    /// kernel's stationary law away from the posterior (measurably so on
    /// small instances where the posterior can be enumerated).
    pub swap_proposal_mass_ratio: bool,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            h: 0.1,
            alpha0: vec![1.0],
            lambda1: 0.5,
            mc_draws: None,
            smoothing: 1.0,
            swap_multiplicity_correction: true,
            swap_proposal_mass_ratio: false,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self, k: usize) -> Result<(), McmcError> {
        if !(self.h > 0.0 && self.h < 0.5) {
            return Err(McmcError::Config(format!(
                "h must lie in (0, 0.5), got {}",
                self.h
            )));
        }
        if !(self.lambda1 > 0.0 && self.lambda1 < 1.0) {
            return Err(McmcError::Config(format!(
                "lambda1 must lie in (0, 1), got {}",
                self.lambda1
            )));
        }
        if self.alpha0.is_empty() || (self.alpha0.len() != 1 && self.alpha0.len() != k) {
            return Err(McmcError::Config(format!(
                "alpha0 needs 1 or {k} entries, got {}",
                self.alpha0.len()
            )));
        }
        if self.alpha0.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(McmcError::Config("alpha0 entries must be positive".into()));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(McmcError::Config(format!(
                "smoothing must be non-negative, got {}",
                self.smoothing
            )));
        }
        if self.mc_draws == Some(0) {
            return Err(McmcError::Config("mc_draws must be >= 1".into()));
        }
        Ok(())
    }

    fn alpha0_for(&self, k: usize) -> Vec<f64> {
        if self.alpha0.len() == 1 {
            vec![self.alpha0[0]; k]
        } else {
            self.alpha0.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 2_000,
            thin: 1,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), McmcError> {
        if self.burn_in >= self.iterations {
            return Err(McmcError::Config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(McmcError::Config("thin must be >= 1".into()));
        }
        Ok(())
    }
}

/// Post-burn-in, thinned draws plus acceptance flags.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Absolute iteration index of each stored draw.
    pub iteration_index: Vec<usize>,
    pub rho_draws: Vec<ReferenceOrder>,
    pub p_draws: Vec<Vec<f64>>,
    pub accept_joint: Vec<bool>,
    pub accept_swap: Vec<bool>,
    pub log_posterior_trace: Vec<f64>,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.rho_draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho_draws.is_empty()
    }
}

/// A freshly generated joint candidate with its exact proposal log density.
#[derive(Debug, Clone)]
pub struct ProposalRecord {
    pub rho: ReferenceOrder,
    pub p: SupportParams,
    pub log_density: f64,
    pub lambdas: Vec<f64>,
}

/// Count of rows placing item `i` at rank `j`, for `j` in `{1, K}`.
pub fn first_stage_frequencies(data: &RankingDataset, rank: usize) -> Result<Vec<u64>, McmcError> {
    let k = data.k();
    if rank != 1 && rank != k {
        return Err(McmcError::BadFirstStageRank(rank));
    }
    let mut counts = vec![0u64; k];
    for row in data.orderings() {
        counts[row.at(rank) - 1] += 1;
    }
    Ok(counts)
}

fn replay_prefix(prefix: &[usize], k: usize) -> Result<(usize, usize), McmcError> {
    // returns (tops, bottoms) assigned over the prefix
    let mut tops = 0usize;
    let mut bottoms = 0usize;
    for (idx, &v) in prefix.iter().enumerate() {
        if v == tops + 1 {
            tops += 1;
        } else if v == k - bottoms {
            bottoms += 1;
        } else {
            return Err(PermError::NotTopOrBottom {
                stage: idx + 1,
                value: v,
            }
            .into());
        }
    }
    Ok((tops, bottoms))
}

/// Observed contingency tables at stage `t` given the reference-order
/// prefix through stage `t-1`: `tau` pairs the item at rank `rho(t-1)` with
/// the item at the next available top rank, `beta` with the next available
/// bottom rank.
#[allow(clippy::type_complexity)]
pub fn contingency_tables(
    data: &RankingDataset,
    rho_prefix: &[usize],
    t: usize,
) -> Result<(Vec<Vec<u64>>, Vec<Vec<u64>>), McmcError> {
    let k = data.k();
    if t < 2 || t > k - 1 {
        return Err(McmcError::StageOutOfRange {
            t,
            lo: 2,
            hi: k - 1,
        });
    }
    if rho_prefix.len() != t - 1 {
        return Err(McmcError::Config(format!(
            "prefix of length {} does not reach stage {t}",
            rho_prefix.len()
        )));
    }
    let (tops, bottoms) = replay_prefix(rho_prefix, k)?;
    let prev_rank = rho_prefix[t - 2];
    let top_rank = tops + 1;
    let bottom_rank = k - bottoms;
    let mut tau = vec![vec![0u64; k]; k];
    let mut beta = vec![vec![0u64; k]; k];
    for row in data.orderings() {
        let i = row.at(prev_rank) - 1;
        tau[i][row.at(top_rank) - 1] += 1;
        beta[i][row.at(bottom_rank) - 1] += 1;
    }
    Ok((tau, beta))
}

/// Monte-Carlo expected table at stage `t`: joint frequency of the stage
/// `t-1` and stage `t` picks among `mc_draws` PL(p) prefix samples.
pub fn expected_tables<R: Rng + ?Sized>(
    p: &SupportParams,
    t: usize,
    mc_draws: usize,
    rng: &mut R,
) -> Result<Vec<Vec<u64>>, McmcError> {
    let k = p.len();
    if t < 2 || t > k {
        return Err(McmcError::StageOutOfRange { t, lo: 2, hi: k });
    }
    let mut table = vec![vec![0u64; k]; k];
    for prefix in sample_pl_prefix(p, t, mc_draws, rng)? {
        table[prefix[t - 2] - 1][prefix[t - 1] - 1] += 1;
    }
    Ok(table)
}

/// Scaled top probability `lambda_t = d_t (1 - 2h) + h` with
/// `d_t = 1 - dT / (dT + dB)`; `dT = dB = 0` yields 0.5.
pub fn stage_lambda(tau: &[Vec<u64>], beta: &[Vec<u64>], expected: &[Vec<u64>], h: f64) -> f64 {
    let sq = |obs: &[Vec<u64>]| -> f64 {
        obs.iter()
            .zip(expected)
            .flat_map(|(or_, er)| or_.iter().zip(er))
            .map(|(&o, &e)| {
                let diff = o as f64 - e as f64;
                diff * diff
            })
            .sum()
    };
    let d_top = sq(tau);
    let d_bottom = sq(beta);
    let d_t = if d_top == 0.0 && d_bottom == 0.0 {
        0.5
    } else {
        1.0 - d_top / (d_top + d_bottom)
    };
    d_t * (1.0 - 2.0 * h) + h
}

/// One iteration's shared randomization for the expected tables: both the
/// candidate's and the current state's proposal densities draw their
/// Monte-Carlo tables from the same per-stage substreams.
#[derive(Debug, Clone)]
pub struct TableContext {
    seed: u64,
    mc_draws: usize,
}

impl TableContext {
    pub fn new(seed: u64, mc_draws: usize) -> Self {
        Self { seed, mc_draws }
    }

    pub fn mc_draws(&self) -> usize {
        self.mc_draws
    }

    pub fn expected(&self, p: &SupportParams, t: usize) -> Result<Vec<Vec<u64>>, McmcError> {
        let mut rng = ChaCha12Rng::seed_from_u64(substream_seed(self.seed, t as u64));
        expected_tables(p, t, self.mc_draws, &mut rng)
    }
}

fn dirichlet_params(
    data: &RankingDataset,
    first_rank: usize,
    tuning: &TuningConfig,
) -> Result<Vec<f64>, McmcError> {
    let r = first_stage_frequencies(data, first_rank)?;
    let alpha0 = tuning.alpha0_for(data.k());
    let alpha: Vec<f64> = r
        .iter()
        .zip(&alpha0)
        .map(|(&count, &a0)| a0 * (count as f64 + tuning.smoothing))
        .collect();
    if alpha.iter().any(|&a| a <= 0.0) {
        return Err(McmcError::Config(
            "Dirichlet parameter is zero; set smoothing > 0".into(),
        ));
    }
    Ok(alpha)
}

fn dirichlet_log_pdf(alpha: &[f64], q: &[f64]) -> f64 {
    let sum_alpha: f64 = alpha.iter().sum();
    let mut lp = ln_gamma(sum_alpha);
    for (&a, &x) in alpha.iter().zip(q) {
        lp += (a - 1.0) * x.ln() - ln_gamma(a);
    }
    lp
}

/// Bernoulli log mass of the reference order's W encoding under the
/// stagewise tuned lambdas computed from `p` and the table context. Also
/// returns the lambda sequence (lambda_K is 1 by convention).
pub fn rho_proposal_log_mass(
    rho: &ReferenceOrder,
    p: &SupportParams,
    data: &RankingDataset,
    tuning: &TuningConfig,
    ctx: &TableContext,
) -> Result<(f64, Vec<f64>), McmcError> {
    let k = rho.k();
    let w = rho.w();
    let mut lambdas = vec![tuning.lambda1];
    let mut mass = if w[0] == 1 {
        tuning.lambda1.ln()
    } else {
        (1.0 - tuning.lambda1).ln()
    };
    let entries = rho.rho().entries();
    for t in 2..k {
        let (tau, beta) = contingency_tables(data, &entries[..t - 1], t)?;
        let expected = ctx.expected(p, t)?;
        let lambda = stage_lambda(&tau, &beta, &expected, tuning.h);
        lambdas.push(lambda);
        mass += if w[t - 1] == 1 {
            lambda.ln()
        } else {
            (1.0 - lambda).ln()
        };
    }
    if k >= 2 {
        lambdas.push(1.0); // terminal stage is forced
    }
    Ok((mass, lambdas))
}

/// Full joint proposal log density `g(rho, p)` evaluated at the given
/// state under the shared table context: Dirichlet factor at the
/// normalization of `p` plus the Bernoulli factor of the W encoding.
pub fn proposal_log_density(
    rho: &ReferenceOrder,
    p: &SupportParams,
    data: &RankingDataset,
    tuning: &TuningConfig,
    ctx: &TableContext,
) -> Result<(f64, Vec<f64>), McmcError> {
    let alpha = dirichlet_params(data, rho.rho().at(1), tuning)?;
    let q = p.normalized();
    let (mass, lambdas) = rho_proposal_log_mass(rho, p, data, tuning, ctx)?;
    Ok((dirichlet_log_pdf(&alpha, &q) + mass, lambdas))
}

/// Alias for [`proposal_log_density`]: the reverse-move density of the
/// acceptance ratio is the same construction evaluated at the current
/// state.
pub fn reverse_proposal_log_density(
    rho: &ReferenceOrder,
    p: &SupportParams,
    data: &RankingDataset,
    tuning: &TuningConfig,
    ctx: &TableContext,
) -> Result<f64, McmcError> {
    proposal_log_density(rho, p, data, tuning, ctx).map(|(lp, _)| lp)
}

/// Generates a joint candidate `(rho, p)` by the tuned stagewise scheme and
/// records its exact proposal log density under `ctx`.
pub fn propose_joint<R: Rng + ?Sized>(
    data: &RankingDataset,
    tuning: &TuningConfig,
    ctx: &TableContext,
    rng: &mut R,
) -> Result<ProposalRecord, McmcError> {
    let k = data.k();
    // stage 1: top or bottom rank
    let w1 = rng.random::<f64>() < tuning.lambda1;
    let first_rank = if w1 { 1 } else { k };

    // supports from the Dirichlet guided by the observed first-stage counts
    let alpha = dirichlet_params(data, first_rank, tuning)?;
    let mut gammas = Vec::with_capacity(k);
    for &a in &alpha {
        let g: f64 = Gamma::new(a, 1.0)
            .map_err(|e| McmcError::Config(format!("Dirichlet sampling failed: {e}")))?
            .sample(rng);
        gammas.push(g.max(f64::MIN_POSITIVE));
    }
    let total: f64 = gammas.iter().sum();
    let p = SupportParams::new(gammas.iter().map(|g| g / total).collect())?;

    // remaining stages follow the tuned Bernoulli tree
    let mut entries = vec![first_rank];
    let mut tops = usize::from(w1);
    let mut bottoms = usize::from(!w1);
    for t in 2..k {
        let (tau, beta) = contingency_tables(data, &entries, t)?;
        let expected = ctx.expected(&p, t)?;
        let lambda = stage_lambda(&tau, &beta, &expected, tuning.h);
        if rng.random::<f64>() < lambda {
            entries.push(tops + 1);
            tops += 1;
        } else {
            entries.push(k - bottoms);
            bottoms += 1;
        }
    }
    entries.push(tops + 1); // last open rank (top == bottom)
    let rho = ReferenceOrder::encode(Permutation::new(entries)?)?;

    let (log_density, lambdas) = proposal_log_density(&rho, &p, data, tuning, ctx)?;
    Ok(ProposalRecord {
        rho,
        p,
        log_density,
        lambdas,
    })
}

/// MH acceptance for the joint candidate; returns the post-step state and
/// the acceptance flag.
#[allow(clippy::too_many_arguments)]
pub fn mh_accept_joint<R: Rng + ?Sized>(
    current_rho: &ReferenceOrder,
    current_p: &SupportParams,
    candidate: &ProposalRecord,
    data: &RankingDataset,
    prior: &PriorConfig,
    tuning: &TuningConfig,
    ctx: &TableContext,
    rng: &mut R,
) -> Result<(ReferenceOrder, SupportParams, bool), McmcError> {
    let cand_params = EPLParams::new(candidate.rho.clone(), candidate.p.clone())?;
    let cur_params = EPLParams::new(current_rho.clone(), current_p.clone())?;
    let g_current = reverse_proposal_log_density(current_rho, current_p, data, tuning, ctx)?;
    let log_ratio = (g_current - candidate.log_density)
        + (epl_log_likelihood(data, &cand_params)? + prior.log_density(&candidate.p))
        - (epl_log_likelihood(data, &cur_params)? + prior.log_density(current_p));
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        Ok((candidate.rho.clone(), candidate.p.clone(), true))
    } else {
        Ok((current_rho.clone(), current_p.clone(), false))
    }
}

/// Adjacent-swap MH kernel on the reference order at fixed supports. The
/// default acceptance ratio is the exact Hastings form: likelihood ratio
/// times the `M(rho')/M(rho'')` correction for the uniform swap choice.
/// `swap_proposal_mass_ratio` adds the `g(rho')/g(rho'')` factor as
/// published, at the cost of posterior exactness.
pub fn swap_move<R: Rng + ?Sized>(
    rho: &ReferenceOrder,
    p: &SupportParams,
    data: &RankingDataset,
    tuning: &TuningConfig,
    ctx: &TableContext,
    rng: &mut R,
) -> Result<(ReferenceOrder, bool), McmcError> {
    let swaps = rho.applicable_swaps();
    let t_star = swaps[rng.random_range(0..swaps.len())];
    let swapped = rho.swapped(t_star)?;

    let ll_current = epl_log_likelihood(data, &EPLParams::new(rho.clone(), p.clone())?)?;
    let ll_swapped = epl_log_likelihood(data, &EPLParams::new(swapped.clone(), p.clone())?)?;

    let mut log_ratio = ll_swapped - ll_current;
    if tuning.swap_proposal_mass_ratio {
        let (g_current, _) = rho_proposal_log_mass(rho, p, data, tuning, ctx)?;
        let (g_swapped, _) = rho_proposal_log_mass(&swapped, p, data, tuning, ctx)?;
        log_ratio += g_current - g_swapped;
    }
    if tuning.swap_multiplicity_correction {
        let m_current = swaps.len() as f64;
        let m_swapped = swapped.applicable_swaps().len() as f64;
        log_ratio += m_current.ln() - m_swapped.ln();
    }
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        Ok((swapped, true))
    } else {
        Ok((rho.clone(), false))
    }
}

/// Gibbs full conditional of the latent matrix.
pub fn gibbs_update_latents<R: Rng + ?Sized>(
    data: &RankingDataset,
    rho: &ReferenceOrder,
    p: &SupportParams,
    rng: &mut R,
) -> Result<LatentMatrix, McmcError> {
    let params = EPLParams::new(rho.clone(), p.clone())?;
    Ok(sample_latents(data, &params, rng)?)
}

/// Gibbs full conditional of the supports: independent
/// `Gamma(c + N, d + S_i)` draws.
pub fn gibbs_update_supports<R: Rng + ?Sized>(
    data: &RankingDataset,
    rho: &ReferenceOrder,
    y: &LatentMatrix,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<SupportParams, McmcError> {
    let increments = crate::model::latent_rate_increments(data, rho, y)?;
    let shape = prior.c + data.n() as f64;
    let mut p = Vec::with_capacity(increments.len());
    for s_i in increments {
        let rate = prior.d + s_i;
        let draw: f64 = Gamma::new(shape, 1.0 / rate)
            .map_err(|e| McmcError::Config(format!("Gamma sampling failed: {e}")))?
            .sample(rng);
        p.push(draw.max(f64::MIN_POSITIVE));
    }
    Ok(SupportParams::new(p)?)
}

fn log_posterior(
    data: &RankingDataset,
    rho: &ReferenceOrder,
    p: &SupportParams,
    prior: &PriorConfig,
) -> Result<f64, McmcError> {
    let params = EPLParams::new(rho.clone(), p.clone())?;
    let rho_prior = -((rho.k() as f64 - 1.0) * std::f64::consts::LN_2);
    Ok(epl_log_likelihood(data, &params)? + prior.log_density(p) + rho_prior)
}

/// Runs the full sampler; draws after burn-in are stored every `thin`
/// iterations. The run is a pure function of `(data, configs, seed)`.
pub fn run_chain(
    data: &RankingDataset,
    prior: &PriorConfig,
    tuning: &TuningConfig,
    chain_cfg: &ChainConfig,
) -> Result<ChainOutput, McmcError> {
    let k = data.k();
    prior.validate()?;
    tuning.validate(k)?;
    chain_cfg.validate()?;

    let mut rng = ChaCha12Rng::seed_from_u64(chain_cfg.seed);
    let mc_draws = tuning.mc_draws.unwrap_or(data.n());

    // initial state from the priors
    let mut w: Vec<u8> = (0..k - 1).map(|_| u8::from(rng.random::<bool>())).collect();
    w.push(1);
    let mut rho = ReferenceOrder::decode(&w)?;
    let mut p = {
        let gamma = Gamma::new(prior.c, 1.0 / prior.d)
            .map_err(|e| McmcError::Config(format!("prior sampling failed: {e}")))?;
        SupportParams::new(
            (0..k)
                .map(|_| gamma.sample(&mut rng).max(f64::MIN_POSITIVE))
                .collect(),
        )?
    };

    let stored = (chain_cfg.iterations - chain_cfg.burn_in).div_ceil(chain_cfg.thin);
    let mut out = ChainOutput {
        iteration_index: Vec::with_capacity(stored),
        rho_draws: Vec::with_capacity(stored),
        p_draws: Vec::with_capacity(stored),
        accept_joint: Vec::with_capacity(stored),
        accept_swap: Vec::with_capacity(stored),
        log_posterior_trace: Vec::with_capacity(stored),
    };

    for iter in 0..chain_cfg.iterations {
        let ctx = TableContext::new(rng.random::<u64>(), mc_draws);

        // kernel 1: tuned joint MH
        let candidate = propose_joint(data, tuning, &ctx, &mut rng)?;
        let (rho_mh, p_mh, accepted_joint) =
            mh_accept_joint(&rho, &p, &candidate, data, prior, tuning, &ctx, &mut rng)?;

        // kernel 2: Gibbs cycle for (y, p)
        let y = gibbs_update_latents(data, &rho_mh, &p_mh, &mut rng)?;
        let p_next = gibbs_update_supports(data, &rho_mh, &y, prior, &mut rng)?;

        // kernel 3: adjacent swap on rho
        let (rho_next, accepted_swap) = swap_move(&rho_mh, &p_next, data, tuning, &ctx, &mut rng)?;

        rho = rho_next;
        p = p_next;

        if iter >= chain_cfg.burn_in && (iter - chain_cfg.burn_in).is_multiple_of(chain_cfg.thin) {
            out.iteration_index.push(iter);
            out.rho_draws.push(rho.clone());
            out.p_draws.push(p.values().to_vec());
            out.accept_joint.push(accepted_joint);
            out.accept_swap.push(accepted_swap);
            out.log_posterior_trace
                .push(log_posterior(data, &rho, &p, prior)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopReferenceOrder {
    pub rho: Vec<usize>,
    pub probability: f64,
}

/// Posterior summary of a chain: modal reference order, top-k table,
/// normalized support means with credible intervals, acceptance rates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub modal_rho: Vec<usize>,
    pub modal_probability: f64,
    pub top_rho: Vec<TopReferenceOrder>,
    pub support_mean_normalized: Vec<f64>,
    pub support_ci_lower: Vec<f64>,
    pub support_ci_upper: Vec<f64>,
    pub accept_rate_joint: f64,
    pub accept_rate_swap: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Summarizes a chain; `top_k` bounds the reference-order table.
pub fn posterior_summaries(
    chain: &ChainOutput,
    top_k: usize,
) -> Result<PosteriorSummary, McmcError> {
    if chain.is_empty() {
        return Err(McmcError::EmptyChain);
    }
    let n = chain.len();
    let k = chain.rho_draws[0].k();

    let mut counts: std::collections::BTreeMap<Vec<usize>, usize> = Default::default();
    for rho in &chain.rho_draws {
        *counts.entry(rho.rho().entries().to_vec()).or_insert(0) += 1;
    }
    let mut ranked: Vec<(Vec<usize>, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let (modal_rho, modal_count) = ranked[0].clone();
    let top_rho = ranked
        .iter()
        .take(top_k)
        .map(|(rho, count)| TopReferenceOrder {
            rho: rho.clone(),
            probability: *count as f64 / n as f64,
        })
        .collect();

    let mut mean = vec![0.0; k];
    let mut per_item: Vec<Vec<f64>> = vec![Vec::with_capacity(n); k];
    for draw in &chain.p_draws {
        let total: f64 = draw.iter().sum();
        for (i, &v) in draw.iter().enumerate() {
            let q = v / total;
            mean[i] += q;
            per_item[i].push(q);
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut lower = Vec::with_capacity(k);
    let mut upper = Vec::with_capacity(k);
    for series in &mut per_item {
        series.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lower.push(quantile(series, 0.025));
        upper.push(quantile(series, 0.975));
    }

    let rate = |flags: &[bool]| flags.iter().filter(|&&f| f).count() as f64 / n as f64;
    Ok(PosteriorSummary {
        n_draws: n,
        modal_rho,
        modal_probability: modal_count as f64 / n as f64,
        top_rho,
        support_mean_normalized: mean,
        support_ci_lower: lower,
        support_ci_upper: upper,
        accept_rate_joint: rate(&chain.accept_joint),
        accept_rate_swap: rate(&chain.accept_swap),
    })
}

/// Plug-in parameters for predictive simulation: posterior modal reference
/// order and posterior mean normalized supports.
pub fn plug_in_params(chain: &ChainOutput) -> Result<EPLParams, McmcError> {
    let summary = posterior_summaries(chain, 1)?;
    let rho = ReferenceOrder::encode(Permutation::new(summary.modal_rho)?)?;
    let p = SupportParams::new(summary.support_mean_normalized)?;
    Ok(EPLParams::new(rho, p)?)
}
