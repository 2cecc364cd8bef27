//! Attribute-set size laws `P(n)` and the normalized size `Y = sqrt(n/m) * X`.
//!
//! A law is an immutable description. For a concrete `(n, m)` it is turned
//! into a [`SizeSampler`], which owns whatever tables the law needs and draws
//! sizes `X` in `[0, m]` from a caller-supplied random stream.
//!
//! The heavy-tailed law is a Pareto-type distribution on `Y` with survival
//! function `L(y) / L(y_min) * (y / y_min)^-alpha` above `y_min`, where
//! `L(x) = ln(e + x)^gamma`. It is quantized as `X = floor(sqrt(m/n) * Y)`
//! and truncated at `m`, so all moments and tail probabilities reported here
//! refer to the quantized law that is actually sampled.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LawError {
    #[error("invalid law: {0}")]
    Invalid(String),
    #[error("invalid dimensions: n = {n}, m = {m} (both must be at least 1)")]
    Dimensions { n: u64, m: u64 },
}

/// Distribution of the attribute-set size `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SetSizeLaw {
    /// Pareto-type tail on `Y` with exponent `alpha` and slowly varying
    /// factor `ln(e + y)^sv_gamma`.
    PowerLawTail {
        alpha: f64,
        y_min: f64,
        #[serde(default)]
        sv_gamma: f64,
    },
    /// Every attribute included independently with probability `p`.
    Binomial { p: f64 },
    /// Fixed size, truncated at `m`.
    Deterministic { x_fixed: u64 },
    /// Finite list of `(size, probability)` pairs.
    Empirical { pmf: Vec<(u64, f64)> },
}

/// The built-in slowly varying family `L(x) = ln(e + x)^gamma`.
pub fn slowly_varying(gamma: f64, x: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else {
        (std::f64::consts::E + x).ln().powf(gamma)
    }
}

/// Moments of `Y = sqrt(n/m) * X` under the quantized, truncated law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YMoments {
    pub mean_y: f64,
    pub var_y: f64,
    pub mean_y2: f64,
}

impl SetSizeLaw {
    pub fn validate(&self) -> Result<(), LawError> {
        match *self {
            SetSizeLaw::PowerLawTail { alpha, y_min, sv_gamma } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(LawError::Invalid(format!("alpha must be positive, got {alpha}")));
                }
                if !(y_min.is_finite() && y_min > 0.0) {
                    return Err(LawError::Invalid(format!("y_min must be positive, got {y_min}")));
                }
                if !sv_gamma.is_finite() {
                    return Err(LawError::Invalid("sv_gamma must be finite".into()));
                }
                // L(y) y^-alpha is non-increasing for every y > 0 only when gamma <= alpha.
                if sv_gamma > alpha {
                    return Err(LawError::Invalid(format!(
                        "sv_gamma ({sv_gamma}) must not exceed alpha ({alpha})"
                    )));
                }
                Ok(())
            }
            SetSizeLaw::Binomial { p } => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(LawError::Invalid(format!("p must lie in [0, 1], got {p}")))
                }
            }
            SetSizeLaw::Deterministic { .. } => Ok(()),
            SetSizeLaw::Empirical { ref pmf } => {
                if pmf.is_empty() {
                    return Err(LawError::Invalid("empirical pmf is empty".into()));
                }
                let mut total = 0.0;
                for &(size, prob) in pmf {
                    if !(prob.is_finite() && prob >= 0.0) {
                        return Err(LawError::Invalid(format!("probability of size {size} is {prob}")));
                    }
                    total += prob;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(LawError::Invalid(format!(
                        "empirical probabilities sum to {total}, not 1"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Prepares a sampler for a concrete `(n, m)`.
    pub fn sampler(&self, n: u64, m: u64) -> Result<SizeSampler, LawError> {
        check_dims(n, m)?;
        self.validate()?;
        let kind = match *self {
            SetSizeLaw::PowerLawTail { alpha, y_min, sv_gamma } => SamplerKind::Pareto {
                tail: ParetoTail {
                    alpha,
                    y_min,
                    gamma: sv_gamma,
                },
                x_per_y: (m as f64 / n as f64).sqrt(),
            },
            SetSizeLaw::Binomial { p } => {
                SamplerKind::Binomial(Binomial::new(m, p).map_err(|e| LawError::Invalid(e.to_string()))?)
            }
            SetSizeLaw::Deterministic { x_fixed } => SamplerKind::Fixed(x_fixed.min(m)),
            SetSizeLaw::Empirical { ref pmf } => {
                let sizes = pmf.iter().map(|&(s, _)| s.min(m)).collect();
                let table = WeightedAliasIndex::new(pmf.iter().map(|&(_, p)| p).collect())
                    .map_err(|e| LawError::Invalid(e.to_string()))?;
                SamplerKind::Alias { sizes, table }
            }
        };
        Ok(SizeSampler { kind, m })
    }

    /// `P(X >= k)` under the quantized, truncated law.
    fn survival_x(&self, n: u64, m: u64, k: u64) -> f64 {
        if k == 0 {
            return 1.0;
        }
        if k > m {
            return 0.0;
        }
        match *self {
            SetSizeLaw::PowerLawTail { alpha, y_min, sv_gamma } => {
                let tail = ParetoTail {
                    alpha,
                    y_min,
                    gamma: sv_gamma,
                };
                tail.survival(k as f64 * y_per_x(n, m))
            }
            SetSizeLaw::Binomial { p } => {
                let pmf = binomial_pmf(m, p);
                neumaier_sum(pmf[k as usize..].iter().copied())
            }
            SetSizeLaw::Deterministic { x_fixed } => {
                if x_fixed.min(m) >= k {
                    1.0
                } else {
                    0.0
                }
            }
            SetSizeLaw::Empirical { ref pmf } => {
                neumaier_sum(pmf.iter().filter(|&&(s, _)| s.min(m) >= k).map(|&(_, p)| p))
            }
        }
    }

    /// Exact probability mass function of `X` as `(size, probability)` pairs
    /// with strictly increasing sizes. Zero-probability sizes may be omitted.
    pub fn size_pmf(&self, n: u64, m: u64) -> Result<Vec<(u64, f64)>, LawError> {
        check_dims(n, m)?;
        self.validate()?;
        Ok(match *self {
            SetSizeLaw::PowerLawTail { .. } => {
                let mut out = Vec::with_capacity(m as usize + 1);
                let mut upper = 1.0;
                for k in 0..=m {
                    let next = self.survival_x(n, m, k + 1);
                    out.push((k, (upper - next).max(0.0)));
                    upper = next;
                }
                out
            }
            SetSizeLaw::Binomial { p } => binomial_pmf(m, p)
                .into_iter()
                .enumerate()
                .map(|(k, q)| (k as u64, q))
                .collect(),
            SetSizeLaw::Deterministic { x_fixed } => vec![(x_fixed.min(m), 1.0)],
            SetSizeLaw::Empirical { ref pmf } => {
                let mut merged: Vec<(u64, f64)> = pmf.iter().map(|&(s, p)| (s.min(m), p)).collect();
                merged.sort_by_key(|&(s, _)| s);
                let mut out: Vec<(u64, f64)> = Vec::with_capacity(merged.len());
                for (s, p) in merged {
                    match out.last_mut() {
                        Some(last) if last.0 == s => last.1 += p,
                        _ => out.push((s, p)),
                    }
                }
                out
            }
        })
    }
}

fn check_dims(n: u64, m: u64) -> Result<(), LawError> {
    if n == 0 || m == 0 {
        Err(LawError::Dimensions { n, m })
    } else {
        Ok(())
    }
}

fn y_per_x(n: u64, m: u64) -> f64 {
    (n as f64 / m as f64).sqrt()
}

/// Draws a single set size `X` in `[0, m]`.
pub fn sample_size<R: Rng + ?Sized>(law: &SetSizeLaw, n: u64, m: u64, rng: &mut R) -> Result<u64, LawError> {
    Ok(law.sampler(n, m)?.sample(rng))
}

/// `E Y`, `Var Y` and `E Y^2` of the law that is actually sampled.
pub fn moments_y(law: &SetSizeLaw, n: u64, m: u64) -> Result<YMoments, LawError> {
    check_dims(n, m)?;
    law.validate()?;
    let (ex, var_x) = match *law {
        SetSizeLaw::Binomial { p } => {
            let mf = m as f64;
            (mf * p, mf * p * (1.0 - p))
        }
        SetSizeLaw::Deterministic { x_fixed } => (x_fixed.min(m) as f64, 0.0),
        SetSizeLaw::Empirical { .. } => {
            let pmf = law.size_pmf(n, m)?;
            let ex = neumaier_sum(pmf.iter().map(|&(s, p)| s as f64 * p));
            let var = neumaier_sum(pmf.iter().map(|&(s, p)| (s as f64 - ex).powi(2) * p));
            (ex, var)
        }
        SetSizeLaw::PowerLawTail { .. } => {
            // E X = sum_k P(X >= k), E X^2 = sum_k (2k - 1) P(X >= k).
            let mut ex = Neumaier::default();
            let mut ex2 = Neumaier::default();
            for k in 1..=m {
                let s = law.survival_x(n, m, k);
                ex.add(s);
                ex2.add((2 * k - 1) as f64 * s);
            }
            let ex = ex.total();
            (ex, (ex2.total() - ex * ex).max(0.0))
        }
    };
    let scale2 = n as f64 / m as f64;
    let mean_y = scale2.sqrt() * ex;
    let var_y = scale2 * var_x;
    Ok(YMoments {
        mean_y,
        var_y,
        mean_y2: var_y + mean_y * mean_y,
    })
}

/// Exact `P(Y >= t)` under the quantized law.
pub fn tail_prob_y(law: &SetSizeLaw, n: u64, m: u64, t: f64) -> Result<f64, LawError> {
    check_dims(n, m)?;
    law.validate()?;
    if t <= 0.0 {
        return Ok(1.0);
    }
    let step = y_per_x(n, m);
    // smallest k with k * step >= t
    let mut k = (t / step).ceil().max(0.0);
    if k >= 1.0 && (k - 1.0) * step >= t {
        k -= 1.0;
    }
    while k * step < t {
        k += 1.0;
    }
    if k > m as f64 {
        return Ok(0.0);
    }
    Ok(law.survival_x(n, m, k as u64))
}

/// A law bound to a concrete `(n, m)`.
#[derive(Debug, Clone)]
pub struct SizeSampler {
    kind: SamplerKind,
    m: u64,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Pareto {
        tail: ParetoTail,
        x_per_y: f64,
    },
    Binomial(Binomial),
    Fixed(u64),
    Alias {
        sizes: Vec<u64>,
        table: WeightedAliasIndex<f64>,
    },
}

impl SizeSampler {
    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.kind {
            SamplerKind::Pareto { tail, x_per_y } => {
                // u in (0, 1]
                let u = 1.0 - rng.random::<f64>();
                let y = tail.inverse_survival(u);
                let x = (y * x_per_y).floor();
                if x >= self.m as f64 {
                    self.m
                } else {
                    x as u64
                }
            }
            SamplerKind::Binomial(b) => b.sample(rng),
            SamplerKind::Fixed(x) => *x,
            SamplerKind::Alias { sizes, table } => sizes[table.sample(rng)],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ParetoTail {
    alpha: f64,
    y_min: f64,
    gamma: f64,
}

impl ParetoTail {
    fn survival(&self, y: f64) -> f64 {
        if y <= self.y_min {
            return 1.0;
        }
        let base = (y / self.y_min).powf(-self.alpha);
        if self.gamma == 0.0 {
            base
        } else {
            (base * slowly_varying(self.gamma, y) / slowly_varying(self.gamma, self.y_min)).min(1.0)
        }
    }

    /// The `y >= y_min` with `survival(y) = u`, for `u` in `(0, 1]`.
    fn inverse_survival(&self, u: f64) -> f64 {
        let closed = self.y_min * u.powf(-1.0 / self.alpha);
        if self.gamma == 0.0 || u >= 1.0 {
            return closed;
        }
        let mut lo = self.y_min.ln();
        let mut hi = closed.ln().max(lo) + 1.0;
        while self.survival(hi.exp()) > u {
            hi += (hi - lo).max(1.0);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.survival(mid.exp()) > u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    }
}

/// Binomial(m, p) probabilities for sizes `0..=m`.
pub(crate) fn binomial_pmf(m: u64, p: f64) -> Vec<f64> {
    let len = m as usize + 1;
    let mut out = vec![0.0; len];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[m as usize] = 1.0;
        return out;
    }
    let log_ratio = p.ln() - (-p).ln_1p();
    let mut log_term = m as f64 * (-p).ln_1p();
    out[0] = log_term.exp();
    for k in 0..m {
        log_term += ((m - k) as f64 / (k + 1) as f64).ln() + log_ratio;
        out[k as usize + 1] = log_term.exp();
    }
    out
}

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn neumaier_sum(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Neumaier::default();
    for x in it {
        acc.add(x);
    }
    acc.total()
}
