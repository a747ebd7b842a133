//! PL/EPL densities, forward sampling, the exponential latent-variable
//! augmentation, and an exact Mallows-Hamming oracle.
//!
//! All densities are evaluated in log space. The stagewise normalizers are
//! suffix sums of the support weights along the selection order, so one
//! ordering costs O(K).

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::perm::{compose_with_reference, PermError, Permutation, ReferenceOrder};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Perm(#[from] PermError),
    #[error("support parameter {0} is not strictly positive and finite")]
    BadSupport(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("row {row}: {source}")]
    BadRow { row: usize, source: PermError },
    #[error("latent variable {0} is not strictly positive and finite")]
    BadLatent(f64),
    #[error("stage {t} out of range 1..={k}")]
    BadStage { t: usize, k: usize },
    #[error("Mallows exact mode supports K <= {max}, got K = {k}")]
    MallowsTooLarge { k: usize, max: usize },
    #[error("Mallows concentration must be >= 0, got {0}")]
    BadTheta(f64),
    #[error("mean Hamming distance target {target} unreachable (range (0, {max}))")]
    BadDistanceTarget { target: f64, max: f64 },
    #[error("sample count must be >= 1")]
    BadCount,
    #[error("expected {expected} item labels, got {got}")]
    BadLabels { expected: usize, got: usize },
}

/// Positive item support weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportParams {
    p: Vec<f64>,
}

impl SupportParams {
    pub fn new(p: Vec<f64>) -> Result<Self, ModelError> {
        if p.len() < 2 {
            return Err(PermError::TooShort.into());
        }
        for &v in &p {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::BadSupport(v));
            }
        }
        Ok(Self { p })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Weight of item `i` (1-based).
    pub fn get(&self, i: usize) -> f64 {
        self.p[i - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.p.iter().sum();
        self.p.iter().map(|v| v / total).collect()
    }
}

/// Reference order plus support weights.
#[derive(Debug, Clone)]
pub struct EPLParams {
    pub rho: ReferenceOrder,
    pub p: SupportParams,
}

impl EPLParams {
    pub fn new(rho: ReferenceOrder, p: SupportParams) -> Result<Self, ModelError> {
        if rho.k() != p.len() {
            return Err(ModelError::DimensionMismatch(rho.k(), p.len()));
        }
        Ok(Self { rho, p })
    }

    pub fn k(&self) -> usize {
        self.p.len()
    }
}

/// N orderings over a shared item set.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingDataset {
    orderings: Vec<Permutation>,
    item_labels: Vec<String>,
}

impl RankingDataset {
    pub fn new(orderings: Vec<Permutation>, item_labels: Vec<String>) -> Result<Self, ModelError> {
        let first = orderings.first().ok_or(ModelError::EmptyDataset)?;
        let k = first.len();
        if item_labels.len() != k {
            return Err(ModelError::BadLabels {
                expected: k,
                got: item_labels.len(),
            });
        }
        for (idx, row) in orderings.iter().enumerate() {
            if row.len() != k {
                return Err(ModelError::BadRow {
                    row: idx + 1,
                    source: PermError::WrongLength {
                        expected: k,
                        got: row.len(),
                    },
                });
            }
        }
        Ok(Self {
            orderings,
            item_labels,
        })
    }

    /// Builds a dataset with default labels `item1..itemK`.
    pub fn from_orderings(orderings: Vec<Permutation>) -> Result<Self, ModelError> {
        let k = orderings.first().ok_or(ModelError::EmptyDataset)?.len();
        let labels = (1..=k).map(|i| format!("item{i}")).collect();
        Self::new(orderings, labels)
    }

    pub fn n(&self) -> usize {
        self.orderings.len()
    }

    pub fn k(&self) -> usize {
        self.orderings[0].len()
    }

    pub fn orderings(&self) -> &[Permutation] {
        &self.orderings
    }

    pub fn item_labels(&self) -> &[String] {
        &self.item_labels
    }

    pub fn borda_ordering(&self) -> Permutation {
        crate::perm::borda_ordering(&self.orderings).expect("dataset is non-empty")
    }
}

/// N x K matrix of positive exponential auxiliary variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    y: Vec<Vec<f64>>,
}

impl LatentMatrix {
    pub fn new(y: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        for row in &y {
            for &v in row {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ModelError::BadLatent(v));
                }
            }
        }
        Ok(Self { y })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.y
    }
}

/// Log probability of an ordering under PL(p):
/// sum over stages of `log p_{item} - log (sum of remaining supports)`.
pub fn pl_log_prob(ordering: &Permutation, p: &SupportParams) -> Result<f64, ModelError> {
    let k = ordering.len();
    if k != p.len() {
        return Err(ModelError::DimensionMismatch(k, p.len()));
    }
    let mut suffix = 0.0;
    let mut log_prob = 0.0;
    for t in (1..=k).rev() {
        let w = p.get(ordering.at(t));
        suffix += w;
        log_prob += w.ln() - suffix.ln();
    }
    Ok(log_prob)
}

/// Log probability of an ordering under EPL(rho, p): the PL log probability
/// of the composed selection sequence.
pub fn epl_log_prob(ordering: &Permutation, params: &EPLParams) -> Result<f64, ModelError> {
    let eta = compose_with_reference(ordering, &params.rho)?;
    pl_log_prob(&eta, &params.p)
}

/// Sum of `epl_log_prob` over the dataset rows.
pub fn epl_log_likelihood(data: &RankingDataset, params: &EPLParams) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for row in data.orderings() {
        total += epl_log_prob(row, params)?;
    }
    Ok(total)
}

fn sample_one_pl_prefix<R: Rng + ?Sized>(p: &SupportParams, t: usize, rng: &mut R) -> Vec<usize> {
    let k = p.len();
    let mut remaining: Vec<usize> = (1..=k).collect();
    let mut total: f64 = p.values().iter().sum();
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (idx, &item) in remaining.iter().enumerate() {
            u -= p.get(item);
            if u <= 0.0 {
                pick = idx;
                break;
            }
        }
        let item = remaining.swap_remove(pick);
        total -= p.get(item);
        out.push(item);
    }
    out
}

/// First `t` stages of PL(p) sampling: `n` partial selection sequences.
pub fn sample_pl_prefix<R: Rng + ?Sized>(
    p: &SupportParams,
    t: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, ModelError> {
    let k = p.len();
    if t < 1 || t > k {
        return Err(ModelError::BadStage { t, k });
    }
    if n < 1 {
        return Err(ModelError::BadCount);
    }
    Ok((0..n).map(|_| sample_one_pl_prefix(p, t, rng)).collect())
}

/// Draws one ordering from EPL(rho, p): the stage-t pick receives rank
/// `rho(t)`.
pub fn sample_epl_one<R: Rng + ?Sized>(params: &EPLParams, rng: &mut R) -> Permutation {
    let k = params.k();
    let eta = sample_one_pl_prefix(&params.p, k, rng);
    let mut entries = vec![0usize; k];
    for (t, &item) in eta.iter().enumerate() {
        entries[params.rho.rho().at(t + 1) - 1] = item;
    }
    Permutation::new(entries).expect("EPL draw is a permutation by construction")
}

/// `n` iid EPL draws collected into a dataset with default labels.
pub fn sample_epl<R: Rng + ?Sized>(
    params: &EPLParams,
    n: usize,
    rng: &mut R,
) -> Result<RankingDataset, ModelError> {
    if n < 1 {
        return Err(ModelError::BadCount);
    }
    let orderings = (0..n).map(|_| sample_epl_one(params, rng)).collect();
    RankingDataset::from_orderings(orderings)
}

/// Per-row, per-stage sum of supports of the items not yet selected:
/// the exponential rate of the latent augmentation.
fn stage_rates(row: &Permutation, params: &EPLParams) -> Result<Vec<f64>, ModelError> {
    let eta = compose_with_reference(row, &params.rho)?;
    let k = eta.len();
    let mut rates = vec![0.0; k];
    let mut suffix = 0.0;
    for t in (1..=k).rev() {
        suffix += params.p.get(eta.at(t));
        rates[t - 1] = suffix;
    }
    Ok(rates)
}

/// Independent exponential draws `y_{st}` with rate equal to the sum of the
/// supports of the items still unselected at stage `t` of row `s`.
pub fn sample_latents<R: Rng + ?Sized>(
    data: &RankingDataset,
    params: &EPLParams,
    rng: &mut R,
) -> Result<LatentMatrix, ModelError> {
    let mut y = Vec::with_capacity(data.n());
    for row in data.orderings() {
        let rates = stage_rates(row, params)?;
        let mut y_row = Vec::with_capacity(rates.len());
        for rate in rates {
            let draw: f64 = Exp::new(rate)
                .expect("positive rate")
                .sample(rng)
                .max(f64::MIN_POSITIVE);
            y_row.push(draw);
        }
        y.push(y_row);
    }
    LatentMatrix::new(y)
}

/// Per-item accumulators `S_i = sum_s sum_t delta_{sti} y_{st}` where
/// `delta_{sti} = 1` iff item `i` is still unselected at stage `t` of row
/// `s` (so `delta_{s1i} = 1` for everyone).
pub fn latent_rate_increments(
    data: &RankingDataset,
    rho: &ReferenceOrder,
    y: &LatentMatrix,
) -> Result<Vec<f64>, ModelError> {
    let k = data.k();
    if y.rows().len() != data.n() {
        return Err(ModelError::DimensionMismatch(y.rows().len(), data.n()));
    }
    let mut s = vec![0.0; k];
    for (row, y_row) in data.orderings().iter().zip(y.rows()) {
        if y_row.len() != k {
            return Err(ModelError::DimensionMismatch(y_row.len(), k));
        }
        let eta = compose_with_reference(row, rho)?;
        // item selected at stage t stays active through stages 1..=t
        let mut cum = 0.0;
        let mut cum_y = Vec::with_capacity(k);
        for &v in y_row {
            cum += v;
            cum_y.push(cum);
        }
        for t in 1..=k {
            s[eta.at(t) - 1] += cum_y[t - 1];
        }
    }
    Ok(s)
}

/// Complete-data log likelihood:
/// `sum_i [N log p_i - p_i * S_i]` with `S_i` as in
/// [`latent_rate_increments`].
pub fn complete_data_log_likelihood(
    data: &RankingDataset,
    params: &EPLParams,
    y: &LatentMatrix,
) -> Result<f64, ModelError> {
    let s = latent_rate_increments(data, &params.rho, y)?;
    let n = data.n() as f64;
    let mut total = 0.0;
    for (i, &s_i) in s.iter().enumerate() {
        let p_i = params.p.get(i + 1);
        total += n * p_i.ln() - p_i * s_i;
    }
    Ok(total)
}

/// Joint log density of the latent matrix given the data and parameters:
/// a product of exponential densities with the stagewise remaining-support
/// rates.
pub fn latent_log_density(
    data: &RankingDataset,
    params: &EPLParams,
    y: &LatentMatrix,
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (row, y_row) in data.orderings().iter().zip(y.rows()) {
        let rates = stage_rates(row, params)?;
        for (&rate, &v) in rates.iter().zip(y_row) {
            total += rate.ln() - rate * v;
        }
    }
    Ok(total)
}

/// Number of positions at which two rankings disagree.
pub fn hamming_distance(a: &Permutation, b: &Permutation) -> Result<usize, ModelError> {
    if a.len() != b.len() {
        return Err(ModelError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(a.entries()
        .iter()
        .zip(b.entries())
        .filter(|(x, y)| x != y)
        .count())
}

/// Mallows model under the Hamming distance, normalized by exact
/// enumeration of the K! permutations (K <= 8).
#[derive(Debug, Clone)]
pub struct MallowsHamming {
    sigma: Permutation,
    theta: f64,
    rankings: Vec<Permutation>,
    log_pmf: Vec<f64>,
    cumulative: Vec<f64>,
}

impl MallowsHamming {
    pub const MAX_EXACT_K: usize = 8;

    pub fn new(sigma: Permutation, theta: f64) -> Result<Self, ModelError> {
        let k = sigma.len();
        if k > Self::MAX_EXACT_K {
            return Err(ModelError::MallowsTooLarge {
                k,
                max: Self::MAX_EXACT_K,
            });
        }
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(ModelError::BadTheta(theta));
        }
        use itertools::Itertools;
        let mut rankings = Vec::new();
        let mut unnorm = Vec::new();
        for entries in (1..=k).permutations(k) {
            let pi = Permutation::new(entries).expect("enumeration yields permutations");
            let d = hamming_distance(&pi, &sigma)? as f64;
            unnorm.push(-theta * d);
            rankings.push(pi);
        }
        let max = unnorm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + unnorm.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let log_pmf: Vec<f64> = unnorm.iter().map(|v| v - log_z).collect();
        let mut cumulative = Vec::with_capacity(log_pmf.len());
        let mut acc = 0.0;
        for &lp in &log_pmf {
            acc += lp.exp();
            cumulative.push(acc);
        }
        Ok(Self {
            sigma,
            theta,
            rankings,
            log_pmf,
            cumulative,
        })
    }

    pub fn sigma(&self) -> &Permutation {
        &self.sigma
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn log_pmf(&self, ranking: &Permutation) -> Result<f64, ModelError> {
        let idx = self
            .rankings
            .iter()
            .position(|r| r == ranking)
            .ok_or_else(|| ModelError::DimensionMismatch(ranking.len(), self.sigma.len()))?;
        Ok(self.log_pmf[idx])
    }

    /// Expected Hamming distance from the mode under the exact pmf.
    pub fn mean_distance(&self) -> f64 {
        self.rankings
            .iter()
            .zip(&self.log_pmf)
            .map(|(pi, &lp)| hamming_distance(pi, &self.sigma).expect("same K") as f64 * lp.exp())
            .sum()
    }

    /// Inverse-CDF sample of one ranking.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Permutation {
        let u = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let idx = self.cumulative.partition_point(|&c| c < u);
        self.rankings[idx.min(self.rankings.len() - 1)].clone()
    }

    /// `n` iid rankings converted to the ordering format.
    pub fn sample_dataset<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<RankingDataset, ModelError> {
        if n < 1 {
            return Err(ModelError::BadCount);
        }
        let orderings = (0..n).map(|_| self.sample_one(rng).invert()).collect();
        RankingDataset::from_orderings(orderings)
    }

    /// Bisection for the concentration giving a target mean Hamming
    /// distance from the mode.
    pub fn calibrate_theta(
        sigma: &Permutation,
        target_mean_distance: f64,
        tol: f64,
    ) -> Result<f64, ModelError> {
        let uniform = Self::new(sigma.clone(), 0.0)?;
        let max = uniform.mean_distance();
        if !(target_mean_distance > 0.0 && target_mean_distance < max) {
            return Err(ModelError::BadDistanceTarget {
                target: target_mean_distance,
                max,
            });
        }
        let (mut lo, mut hi) = (0.0f64, 100.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let mean = Self::new(sigma.clone(), mid)?.mean_distance();
            if (mean - target_mean_distance).abs() <= tol {
                return Ok(mid);
            }
            // mean distance decreases in theta
            if mean > target_mean_distance {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

pub fn mallows_hamming_log_pmf(
    ranking: &Permutation,
    sigma: &Permutation,
    theta: f64,
) -> Result<f64, ModelError> {
    MallowsHamming::new(sigma.clone(), theta)?.log_pmf(ranking)
}

pub fn sample_mallows_hamming<R: Rng + ?Sized>(
    sigma: &Permutation,
    theta: f64,
    n: usize,
    rng: &mut R,
) -> Result<RankingDataset, ModelError> {
    MallowsHamming::new(sigma.clone(), theta)?.sample_dataset(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Direct product-of-ratios evaluation, independent of the suffix-sum
    /// implementation path.
    fn pl_prob_oracle(ordering: &[usize], p: &[f64]) -> f64 {
        let k = ordering.len();
        let mut prob = 1.0;
        for t in 0..k {
            let denom: f64 = (t..k).map(|v| p[ordering[v] - 1]).sum();
            prob *= p[ordering[t] - 1] / denom;
        }
        prob
    }

    fn perm(entries: &[usize]) -> Permutation {
        Permutation::from_slice(entries).unwrap()
    }

    fn factorial(k: usize) -> f64 {
        (1..=k).product::<usize>() as f64
    }

    #[test]
    fn pl_binary_choice() {
        let p = SupportParams::new(vec![3.0, 1.0]).unwrap();
        let lp = pl_log_prob(&perm(&[1, 2]), &p).unwrap();
        assert!((lp - (3.0f64 / 4.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn pl_uniform_is_uniform() {
        let p = SupportParams::new(vec![1.0; 5]).unwrap();
        let lp = pl_log_prob(&perm(&[3, 1, 5, 2, 4]), &p).unwrap();
        assert!((lp + factorial(5).ln()).abs() < 1e-12);
    }

    #[test]
    fn pl_matches_oracle() {
        let p = SupportParams::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let ord = [2usize, 4, 1, 3];
        let lp = pl_log_prob(&perm(&ord), &p).unwrap();
        assert!((lp - pl_prob_oracle(&ord, p.values()).ln()).abs() < 1e-12);
    }

    #[test]
    fn epl_forward_equals_pl() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = rng.random_range(2..=7);
            let p =
                SupportParams::new((0..k).map(|_| rng.random::<f64>() + 0.05).collect()).unwrap();
            let ord = {
                let prefix = sample_one_pl_prefix(&p, k, &mut rng);
                Permutation::new(prefix).unwrap()
            };
            let params = EPLParams::new(ReferenceOrder::forward(k), p.clone()).unwrap();
            let a = epl_log_prob(&ord, &params).unwrap();
            let b = pl_log_prob(&ord, &p).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn epl_backward_binary() {
        let p = SupportParams::new(vec![3.0, 1.0]).unwrap();
        let params = EPLParams::new(ReferenceOrder::backward(2), p).unwrap();
        let lp = epl_log_prob(&perm(&[1, 2]), &params).unwrap();
        assert!((lp - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn epl_matches_composition_oracle() {
        let p = SupportParams::new(vec![0.15, 0.4, 0.12, 0.08, 0.25]).unwrap();
        let rho = ReferenceOrder::encode(perm(&[5, 1, 4, 3, 2])).unwrap();
        let ord = perm(&[4, 2, 5, 1, 3]);
        let eta = compose_with_reference(&ord, &rho).unwrap();
        let params = EPLParams::new(rho, p.clone()).unwrap();
        let a = epl_log_prob(&ord, &params).unwrap();
        let b = pl_prob_oracle(eta.entries(), p.values()).ln();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn epl_scale_invariance() {
        let p = SupportParams::new(vec![0.15, 0.4, 0.12, 0.08, 0.25]).unwrap();
        let scaled = SupportParams::new(p.values().iter().map(|v| v * 37.5).collect()).unwrap();
        let rho = ReferenceOrder::decode(&[0, 1, 0, 0, 1]).unwrap();
        let ord = perm(&[4, 2, 5, 1, 3]);
        let a = epl_log_prob(&ord, &EPLParams::new(rho.clone(), p).unwrap()).unwrap();
        let b = epl_log_prob(&ord, &EPLParams::new(rho, scaled).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn likelihood_additivity() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let p = SupportParams::new(vec![0.3, 0.5, 0.2]).unwrap();
        let params = EPLParams::new(ReferenceOrder::backward(3), p).unwrap();
        let data = sample_epl(&params, 20, &mut rng).unwrap();
        let single = RankingDataset::from_orderings(vec![data.orderings()[0].clone()]).unwrap();
        assert!(
            (epl_log_likelihood(&single, &params).unwrap()
                - epl_log_prob(&data.orderings()[0], &params).unwrap())
            .abs()
                < 1e-12
        );
        let doubled = RankingDataset::from_orderings(
            data.orderings()
                .iter()
                .chain(data.orderings())
                .cloned()
                .collect(),
        )
        .unwrap();
        let ll = epl_log_likelihood(&data, &params).unwrap();
        assert!((epl_log_likelihood(&doubled, &params).unwrap() - 2.0 * ll).abs() < 1e-9);
        // rows evaluated one by one match the total
        let by_rows: f64 = data
            .orderings()
            .iter()
            .map(|row| {
                pl_prob_oracle(
                    compose_with_reference(row, &params.rho).unwrap().entries(),
                    params.p.values(),
                )
                .ln()
            })
            .sum();
        assert!((ll - by_rows).abs() < 1e-9);
    }

    #[test]
    fn sample_epl_binary_frequency() {
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let p = SupportParams::new(vec![3.0, 1.0]).unwrap();
        let params = EPLParams::new(ReferenceOrder::forward(2), p).unwrap();
        let data = sample_epl(&params, 100_000, &mut rng).unwrap();
        let hits = data
            .orderings()
            .iter()
            .filter(|o| o.entries() == [1, 2])
            .count() as f64;
        assert!((hits / 100_000.0 - 0.75).abs() < 0.01);
    }

    #[test]
    fn sample_epl_dominant_item_first() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let p = SupportParams::new(vec![1e6, 1.0, 1.0]).unwrap();
        let params = EPLParams::new(ReferenceOrder::forward(3), p).unwrap();
        let data = sample_epl(&params, 10_000, &mut rng).unwrap();
        let firsts = data.orderings().iter().filter(|o| o.at(1) == 1).count() as f64;
        assert!(firsts / 10_000.0 >= 0.999);
    }

    #[test]
    fn prefix_marginals() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let p = SupportParams::new(vec![3.0, 1.0]).unwrap();
        let draws = sample_pl_prefix(&p, 1, 100_000, &mut rng).unwrap();
        let hits = draws.iter().filter(|d| d[0] == 1).count() as f64;
        assert!((hits / 100_000.0 - 0.75).abs() < 0.01);

        // uniform supports, K=4, t=2: all 12 ordered pairs equifrequent
        let p = SupportParams::new(vec![1.0; 4]).unwrap();
        let draws = sample_pl_prefix(&p, 2, 120_000, &mut rng).unwrap();
        let mut counts = std::collections::HashMap::new();
        for d in &draws {
            *counts.entry((d[0], d[1])).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 12);
        for &c in counts.values() {
            assert!((c as f64 / 120_000.0 - 1.0 / 12.0).abs() < 0.005);
        }
    }

    #[test]
    fn complete_data_hand_example() {
        let data = RankingDataset::from_orderings(vec![perm(&[1, 2])]).unwrap();
        let params = EPLParams::new(
            ReferenceOrder::forward(2),
            SupportParams::new(vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let y = LatentMatrix::new(vec![vec![1.0, 1.0]]).unwrap();
        let ll = complete_data_log_likelihood(&data, &params, &y).unwrap();
        assert!((ll - (-3.0)).abs() < 1e-12);
    }

    #[test]
    fn complete_data_linear_in_y() {
        let data =
            RankingDataset::from_orderings(vec![perm(&[2, 3, 1]), perm(&[1, 3, 2])]).unwrap();
        let params = EPLParams::new(
            ReferenceOrder::backward(3),
            SupportParams::new(vec![0.3, 0.5, 0.2]).unwrap(),
        )
        .unwrap();
        let y1 = LatentMatrix::new(vec![vec![0.4, 1.0, 2.0], vec![0.7, 0.2, 1.5]]).unwrap();
        let c = 3.0;
        let y2 = LatentMatrix::new(
            y1.rows()
                .iter()
                .map(|r| r.iter().map(|v| v * c).collect())
                .collect(),
        )
        .unwrap();
        let base: f64 = (0..3).map(|i| 2.0 * params.p.get(i + 1).ln()).sum();
        let l1 = complete_data_log_likelihood(&data, &params, &y1).unwrap();
        let l2 = complete_data_log_likelihood(&data, &params, &y2).unwrap();
        assert!(((l2 - base) - c * (l1 - base)).abs() < 1e-10);
    }

    #[test]
    fn augmentation_integrates_to_likelihood() {
        // exp(complete log-lik - latent log-density) is exactly the observed
        // likelihood for every latent draw
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let p = SupportParams::new(vec![0.5, 0.2, 0.3]).unwrap();
        let rho = ReferenceOrder::decode(&[0, 1, 1]).unwrap();
        let params = EPLParams::new(rho, p).unwrap();
        let data =
            RankingDataset::from_orderings(vec![perm(&[2, 3, 1]), perm(&[3, 1, 2])]).unwrap();
        let ll = epl_log_likelihood(&data, &params).unwrap();
        for _ in 0..50 {
            let y = sample_latents(&data, &params, &mut rng).unwrap();
            let complete = complete_data_log_likelihood(&data, &params, &y).unwrap();
            let latent = latent_log_density(&data, &params, &y).unwrap();
            assert!((complete - latent - ll).abs() < 1e-9);
        }
    }

    #[test]
    fn latent_first_stage_mean() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let p = SupportParams::new(vec![0.15, 0.4, 0.12, 0.08, 0.25]).unwrap();
        let params = EPLParams::new(ReferenceOrder::forward(5), p).unwrap();
        let data = sample_epl(&params, 100_000, &mut rng).unwrap();
        let y = sample_latents(&data, &params, &mut rng).unwrap();
        let mean: f64 = y.rows().iter().map(|r| r[0]).sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.02); // stage-1 rate = sum(p) = 1
                                            // stage-K rate is the support of the last-selected item
        for (row, y_row) in data.orderings().iter().zip(y.rows()).take(5) {
            let eta = compose_with_reference(row, &params.rho).unwrap();
            let rate = params.p.get(eta.at(5));
            assert!(rate > 0.0 && y_row[4].is_finite());
        }
    }

    #[test]
    fn mallows_uniform_and_mode() {
        let sigma = perm(&[1, 2, 3]);
        let m = MallowsHamming::new(sigma.clone(), 0.0).unwrap();
        for entries in [[1, 2, 3], [2, 3, 1], [3, 2, 1]] {
            let lp = m.log_pmf(&perm(&entries)).unwrap();
            assert!((lp + factorial(3).ln()).abs() < 1e-12);
        }
        let m = MallowsHamming::new(sigma.clone(), 1.0).unwrap();
        let mode_lp = m.log_pmf(&sigma).unwrap();
        for r in &m.rankings {
            assert!(m.log_pmf(r).unwrap() <= mode_lp + 1e-12);
        }
    }

    #[test]
    fn mallows_k3_distance_spectrum() {
        // K=3 distances from identity: 1 permutation at 0, 3 at 2, 2 at 3
        let sigma = perm(&[1, 2, 3]);
        let m = MallowsHamming::new(sigma.clone(), 1.0).unwrap();
        let mut dist_counts = std::collections::BTreeMap::new();
        for r in &m.rankings {
            *dist_counts
                .entry(hamming_distance(r, &sigma).unwrap())
                .or_insert(0usize) += 1;
        }
        assert_eq!(dist_counts, [(0, 1), (2, 3), (3, 2)].into_iter().collect());
        let z = 1.0 + 3.0 * (-2.0f64).exp() + 2.0 * (-3.0f64).exp();
        assert!((m.log_pmf(&sigma).unwrap() - (1.0 / z).ln()).abs() < 1e-12);
        let total: f64 = m.log_pmf.iter().map(|lp| lp.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mallows_calibration() {
        let sigma = perm(&[1, 2, 3, 4, 5]);
        let theta = MallowsHamming::calibrate_theta(&sigma, 2.0, 0.01).unwrap();
        let mean = MallowsHamming::new(sigma, theta).unwrap().mean_distance();
        assert!((mean - 2.0).abs() <= 0.01);
    }

    #[test]
    fn mallows_exact_cap() {
        let sigma = Permutation::identity(9);
        assert!(matches!(
            MallowsHamming::new(sigma, 1.0),
            Err(ModelError::MallowsTooLarge { k: 9, .. })
        ));
    }

    #[test]
    fn support_params_validation() {
        assert!(SupportParams::new(vec![0.5, 0.0]).is_err());
        assert!(SupportParams::new(vec![0.5, -1.0]).is_err());
        assert!(SupportParams::new(vec![0.5, f64::INFINITY]).is_err());
    }
}
