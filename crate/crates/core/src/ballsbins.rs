//! Maximum bin load `M(N, m)`: sampling, the exact small-case law, the
//! delete-after-overthrow coupling and the comparison with the largest
//! monochromatic clique.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{binomial_pmf, moments_y, neumaier_sum, LawError, Neumaier, SetSizeLaw};
use crate::instance::{generate, uniform_subset, InstanceError};

/// Largest `N` and `m` accepted by [`max_load_exact`].
pub const EXACT_LIMIT: u64 = 200;

#[derive(Debug, Error)]
pub enum BallsError {
    #[error("size limit: exact maximum load needs N, m <= {EXACT_LIMIT} (got N = {balls}, m = {bins})")]
    SizeLimit { balls: u64, bins: u64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Exact,
    Empirical,
}

/// Probability mass function over loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadDistribution {
    pub source: Source,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trials: Option<u64>,
    pub pmf: BTreeMap<u64, f64>,
}

impl LoadDistribution {
    /// Empirical law of `samples`. An empty slice gives an empty pmf.
    pub fn from_samples(samples: &[u64]) -> Self {
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for &s in samples {
            *counts.entry(s).or_default() += 1;
        }
        let total = samples.len() as f64;
        LoadDistribution {
            source: Source::Empirical,
            trials: Some(samples.len() as u64),
            pmf: counts.into_iter().map(|(k, c)| (k, c as f64 / total)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        neumaier_sum(self.pmf.iter().map(|(&k, &p)| k as f64 * p))
    }

    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.pmf.values().copied())
    }
}

/// One sample of the maximum load after throwing `balls` balls into `bins`
/// bins.
pub fn max_load_sample<R: Rng + ?Sized>(balls: u64, bins: u64, rng: &mut R) -> u64 {
    assert!(bins >= 1, "at least one bin is required");
    if balls == 0 {
        return 0;
    }
    if bins == 1 {
        return balls;
    }
    let mut counts = vec![0u32; bins as usize];
    for _ in 0..balls {
        counts[rng.random_range(0..bins as usize)] += 1;
    }
    counts.into_iter().max().unwrap_or(0) as u64
}

/// Exact law of `M(N, m)` for `N, m <= 200`.
///
/// `P(M <= k)` is computed bin by bin: given `r` balls left for the last
/// `m - i` bins, bin `i` receives `Binomial(r, 1/(m - i))` of them, and the
/// paths with every bin at most `k` are accumulated. Binomial weights are
/// evaluated in log space.
pub fn max_load_exact(balls: u64, bins: u64) -> Result<LoadDistribution, BallsError> {
    if bins == 0 {
        return Err(BallsError::Invalid("at least one bin is required".into()));
    }
    if balls > EXACT_LIMIT || bins > EXACT_LIMIT {
        return Err(BallsError::SizeLimit { balls, bins });
    }
    let mut pmf = BTreeMap::new();
    if balls == 0 {
        pmf.insert(0, 1.0);
        return Ok(LoadDistribution {
            source: Source::Exact,
            trials: None,
            pmf,
        });
    }
    let n = balls as usize;
    let lowest = balls.div_ceil(bins) as usize;
    let cdf = cdf_table(n, bins as usize, lowest);
    let mut previous = 0.0;
    for (k, &c) in cdf.iter().enumerate().skip(lowest) {
        let mass = (c - previous).max(0.0);
        if mass > 0.0 {
            pmf.insert(k as u64, mass);
        }
        previous = c;
    }
    Ok(LoadDistribution {
        source: Source::Exact,
        trials: None,
        pmf,
    })
}

/// `P(M <= k)` for every `k` in `0..=n`; entries below `lowest` are zero.
/// Loads whose total tail mass is below `1e-18` get no entry of their own.
fn cdf_table(n: usize, bins: usize, lowest: usize) -> Vec<f64> {
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    // Above `top`, P(M > k) <= m * P(Bin(n, 1/m) > k) is below 1e-18, so
    // those caps are treated as certain.
    let single = binomial_pmf(n as u64, 1.0 / bins as f64);
    let mut top = n;
    let mut tail = 0.0;
    while top > lowest {
        tail += single[top];
        if bins as f64 * tail >= 1e-18 {
            break;
        }
        top -= 1;
    }
    let caps: Vec<usize> = (lowest..top.min(n)).collect();
    // dist[c][r]: probability that r balls remain and every bin so far holds
    // at most caps[c]
    let mut dist = vec![vec![0.0f64; n + 1]; caps.len()];
    for d in &mut dist {
        d[n] = 1.0;
    }
    let mut weight = vec![0.0f64; (n + 1) * (n + 1)];
    let mut next = vec![Neumaier::default(); n + 1];
    for i in 0..bins.saturating_sub(1) {
        let q = 1.0 / (bins - i) as f64;
        let (ln_q, ln_rest) = (q.ln(), (1.0 - q).ln());
        for r in 0..=n {
            for j in 0..=r {
                weight[r * (n + 1) + j] =
                    (ln_fact[r] - ln_fact[j] - ln_fact[r - j] + j as f64 * ln_q + (r - j) as f64 * ln_rest).exp();
            }
        }
        for (d, &k) in dist.iter_mut().zip(&caps) {
            next.iter_mut().for_each(|x| *x = Neumaier::default());
            for (r, &p) in d.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for j in 0..=r.min(k) {
                    next[r - j].add(p * weight[r * (n + 1) + j]);
                }
            }
            for (x, acc) in d.iter_mut().zip(&next) {
                *x = acc.total();
            }
        }
    }
    let mut out = vec![1.0; n + 1];
    out[..lowest].iter_mut().for_each(|x| *x = 0.0);
    for (d, &k) in dist.iter().zip(&caps) {
        // the last bin takes whatever is left
        out[k] = neumaier_sum(d[..=k].iter().copied());
    }
    out
}

/// Total variation distance: half the L1 distance over the union of supports.
pub fn tv_distance(a: &LoadDistribution, b: &LoadDistribution) -> f64 {
    let mut diffs = Vec::new();
    for (k, &p) in &a.pmf {
        diffs.push((p - b.pmf.get(k).copied().unwrap_or(0.0)).abs());
    }
    for (k, &q) in &b.pmf {
        if !a.pmf.contains_key(k) {
            diffs.push(q.abs());
        }
    }
    0.5 * neumaier_sum(diffs)
}

/// Default `delta` for the coupling: `1 / ln(N + 2)`.
pub fn default_delta(balls: u64) -> f64 {
    1.0 / ((balls + 2) as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutcome {
    pub trials: u64,
    /// `floor(N (1 + eps))` balls thrown
    pub thrown: u64,
    /// `floor(eps N)` balls deleted
    pub deleted: u64,
    pub delta: f64,
    /// frequency of `M = M'`
    pub p_equal: f64,
    /// frequency of `M' - M <= delta * mean(M')`
    pub p_within_delta: f64,
    pub mean_m_prime: f64,
    /// trials with `M > M'`; the coupling makes this impossible
    pub violations: u64,
}

/// One coupled pair `(M, M')`: throw `thrown` balls, take the maximum `M'`,
/// delete `deleted` of the balls uniformly and take the maximum `M`.
pub fn coupled_pair<R: Rng + ?Sized>(thrown: u64, deleted: u64, bins: u64, rng: &mut R) -> (u64, u64) {
    let mut counts = vec![0u32; bins as usize];
    let mut landing = Vec::with_capacity(thrown as usize);
    for _ in 0..thrown {
        let b = rng.random_range(0..bins as usize);
        counts[b] += 1;
        landing.push(b as u32);
    }
    let m_prime = counts.iter().copied().max().unwrap_or(0) as u64;
    for ball in uniform_subset(thrown as usize, deleted as usize, rng) {
        counts[landing[ball as usize] as usize] -= 1;
    }
    let m = counts.iter().copied().max().unwrap_or(0) as u64;
    (m, m_prime)
}

/// Monte Carlo coupling of `M(N, m)` with `M(floor(N(1+eps)), m)`.
///
/// Trials run in parallel; trial `i` uses stream `i` of a ChaCha generator
/// keyed by one draw from `rng`, so the result does not depend on the thread
/// count.
pub fn coupling_experiment<R: Rng + ?Sized>(
    balls: u64,
    bins: u64,
    eps: f64,
    trials: u64,
    delta: Option<f64>,
    rng: &mut R,
) -> Result<CouplingOutcome, BallsError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(BallsError::Invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    if bins == 0 || trials == 0 {
        return Err(BallsError::Invalid("bins and trials must be positive".into()));
    }
    let thrown = (balls as f64 * (1.0 + eps)).floor() as u64;
    let deleted = (eps * balls as f64).floor() as u64;
    let delta = delta.unwrap_or_else(|| default_delta(balls));
    let key: u64 = rng.random();
    let pairs: Vec<(u64, u64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut trial_rng = ChaCha8Rng::seed_from_u64(key);
            trial_rng.set_stream(t);
            coupled_pair(thrown, deleted, bins, &mut trial_rng)
        })
        .collect();
    let mean_m_prime = neumaier_sum(pairs.iter().map(|&(_, mp)| mp as f64)) / trials as f64;
    let equal = pairs.iter().filter(|&&(m, mp)| m == mp).count();
    let within = pairs
        .iter()
        .filter(|&&(m, mp)| mp as f64 - m as f64 <= delta * mean_m_prime)
        .count();
    let violations = pairs.iter().filter(|&&(m, mp)| m > mp).count() as u64;
    Ok(CouplingOutcome {
        trials,
        thrown,
        deleted,
        delta,
        p_equal: equal as f64 / trials as f64,
        p_within_delta: within as f64 / trials as f64,
        mean_m_prime,
        violations,
    })
}

/// The ball count `floor(sqrt(m n) * E Y)` matched to `G(n, m, P)`.
pub fn matched_balls(n: u64, m: u64, law: &SetSizeLaw) -> Result<u64, BallsError> {
    let mean_y = moments_y(law, n, m)?.mean_y;
    Ok(((m as f64 * n as f64).sqrt() * mean_y).floor() as u64)
}

/// Size of the largest monochromatic clique of one generated instance. Only
/// attribute occupancies are counted; no graph is built.
pub fn omega_prime_sample(n: u64, m: u64, law: &SetSizeLaw, seed: u64) -> Result<u64, BallsError> {
    let inst = generate(n as usize, m as usize, law, seed)?;
    let mut occupancy = vec![0u32; m as usize];
    for s in inst.subsets() {
        for &w in s {
            occupancy[w as usize] += 1;
        }
    }
    Ok(occupancy.into_iter().max().unwrap_or(0) as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaVsLoad {
    pub balls: u64,
    pub tv: f64,
    pub pmf_omega: LoadDistribution,
    pub pmf_load: LoadDistribution,
}

/// Empirical laws of `omega'` over `trials` instances and of
/// `M(floor(sqrt(mn) E Y), m)` over as many samples, with their TV distance.
pub fn omega_prime_vs_maxload<R: Rng + ?Sized>(
    n: u64,
    m: u64,
    law: &SetSizeLaw,
    trials: u64,
    rng: &mut R,
) -> Result<OmegaVsLoad, BallsError> {
    let balls = matched_balls(n, m, law)?;
    let key: u64 = rng.random();
    let omegas: Vec<u64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut seeds = ChaCha8Rng::seed_from_u64(key);
            seeds.set_stream(2 * t);
            omega_prime_sample(n, m, law, seeds.random())
        })
        .collect::<Result<_, _>>()?;
    let loads: Vec<u64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = ChaCha8Rng::seed_from_u64(key);
            r.set_stream(2 * t + 1);
            max_load_sample(balls, m, &mut r)
        })
        .collect();
    let pmf_omega = LoadDistribution::from_samples(&omegas);
    let pmf_load = LoadDistribution::from_samples(&loads);
    Ok(OmegaVsLoad {
        balls,
        tv: tv_distance(&pmf_omega, &pmf_load),
        pmf_omega,
        pmf_load,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn dist(pairs: &[(u64, f64)]) -> LoadDistribution {
        LoadDistribution {
            source: Source::Exact,
            trials: None,
            pmf: pairs.iter().copied().collect(),
        }
    }

    /// Exact law by enumerating all `m^N` placements.
    fn enumerate_max_load(balls: u32, bins: u32) -> BTreeMap<u64, f64> {
        let total = (bins as u64).pow(balls);
        let mut out = BTreeMap::new();
        for code in 0..total {
            let mut counts = vec![0u64; bins as usize];
            let mut c = code;
            for _ in 0..balls {
                counts[(c % bins as u64) as usize] += 1;
                c /= bins as u64;
            }
            *out.entry(counts.into_iter().max().unwrap()).or_insert(0.0) += 1.0 / total as f64;
        }
        out
    }

    #[test]
    fn sample_edge_cases() {
        let mut r = rng(1);
        assert_eq!(max_load_sample(0, 5, &mut r), 0);
        assert_eq!(max_load_sample(17, 1, &mut r), 17);
        let hits = (0..100_000).filter(|_| max_load_sample(2, 2, &mut r) == 2).count();
        let p = hits as f64 / 1e5;
        let sigma = (0.25f64 / 1e5).sqrt();
        assert!((p - 0.5).abs() < 3.0 * sigma, "{p}");
    }

    #[test]
    fn exact_examples() {
        assert_eq!(max_load_exact(2, 2).unwrap().pmf, dist(&[(1, 0.5), (2, 0.5)]).pmf);
        assert_eq!(max_load_exact(3, 1).unwrap().pmf, dist(&[(3, 1.0)]).pmf);
        let d = max_load_exact(3, 3).unwrap();
        for (k, want) in [(1, 6.0 / 27.0), (2, 18.0 / 27.0), (3, 3.0 / 27.0)] {
            assert!((d.pmf[&k] - want).abs() < 1e-14);
        }
        assert_eq!(max_load_exact(0, 4).unwrap().pmf, dist(&[(0, 1.0)]).pmf);
        assert!(matches!(max_load_exact(201, 5), Err(BallsError::SizeLimit { .. })));
        assert!(matches!(max_load_exact(5, 201), Err(BallsError::SizeLimit { .. })));
    }

    #[test]
    fn exact_matches_enumeration() {
        for (balls, bins) in [(4, 3), (5, 3), (6, 4), (7, 2), (3, 5), (8, 4)] {
            let want = enumerate_max_load(balls, bins);
            let got = max_load_exact(balls as u64, bins as u64).unwrap();
            assert_eq!(got.pmf.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
            for (k, p) in &want {
                assert!((got.pmf[k] - p).abs() < 1e-12, "N={balls} m={bins} k={k}");
            }
        }
    }

    #[test]
    fn exact_normalization_and_monotone_mean() {
        let mut last_mean = 0.0;
        for balls in (0..=200).step_by(25) {
            let d = max_load_exact(balls, 200).unwrap();
            assert!((d.total_mass() - 1.0).abs() < 1e-9);
            let lowest = balls.div_ceil(200);
            assert!(d.pmf.keys().all(|&k| k >= lowest && k <= balls));
            assert!(d.mean() >= last_mean - 1e-12);
            last_mean = d.mean();
        }
    }

    #[test]
    fn tv_examples() {
        let a = dist(&[(0, 0.5), (1, 0.5)]);
        assert_eq!(tv_distance(&a, &a), 0.0);
        assert_eq!(tv_distance(&dist(&[(0, 1.0)]), &dist(&[(1, 1.0)])), 1.0);
        assert!((tv_distance(&a, &dist(&[(0, 0.75), (1, 0.25)])) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn coupling_edge_cases() {
        let nothing_deleted = coupling_experiment(100, 10, 0.001, 200, None, &mut rng(2)).unwrap();
        assert_eq!(nothing_deleted.deleted, 0);
        assert_eq!(nothing_deleted.p_equal, 1.0);
        let single_bin = coupling_experiment(1000, 1, 0.1, 50, None, &mut rng(3)).unwrap();
        assert_eq!(single_bin.thrown, 1100);
        assert_eq!(single_bin.mean_m_prime, 1100.0);
        // M' - M is exactly floor(eps N) in every trial, so never equal
        assert_eq!(single_bin.p_equal, 0.0);
        let (m, mp) = coupled_pair(1100, 100, 1, &mut rng(4));
        assert_eq!(mp - m, 100);
        assert!(coupling_experiment(10, 10, 1.0, 5, None, &mut rng(5)).is_err());
    }

    #[test]
    fn coupling_is_monotone() {
        let out = coupling_experiment(2000, 500, 0.2, 300, Some(0.1), &mut rng(6)).unwrap();
        assert_eq!(out.violations, 0);
        assert!(out.p_within_delta >= out.p_equal);
    }

    #[test]
    fn coupling_is_reproducible() {
        let a = coupling_experiment(500, 100, 0.05, 64, None, &mut rng(7)).unwrap();
        let b = coupling_experiment(500, 100, 0.05, 64, None, &mut rng(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn omega_prime_zero_law() {
        let law = SetSizeLaw::Deterministic { x_fixed: 0 };
        let out = omega_prime_vs_maxload(50, 50, &law, 20, &mut rng(8)).unwrap();
        assert_eq!(out.balls, 0);
        assert_eq!(out.tv, 0.0);
        assert_eq!(out.pmf_omega.pmf, dist(&[(0, 1.0)]).pmf);
    }

    #[test]
    fn omega_prime_counts_occupancy() {
        let law = SetSizeLaw::Deterministic { x_fixed: 3 };
        assert_eq!(matched_balls(100, 100, &law).unwrap(), 300);
        let one_attribute = omega_prime_sample(30, 1, &SetSizeLaw::Deterministic { x_fixed: 1 }, 9).unwrap();
        assert_eq!(one_attribute, 30);
    }

    #[test]
    fn load_distribution_json() {
        let d = LoadDistribution::from_samples(&[1, 2, 2, 3]);
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["source"], "empirical");
        assert_eq!(v["trials"], 4);
        assert_eq!(v["pmf"]["2"], 0.5);
        let exact = serde_json::to_value(max_load_exact(2, 2).unwrap()).unwrap();
        assert!(exact.get("trials").is_none());
        let back: LoadDistribution = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
    }
}
