//! Closed-form predictions: clique-number laws, degree thresholds, the root
//! of `a - ln z - b z^2`, rainbow-clique bounds and degree moments.
//!
//! Everything here is a pure function evaluated in double precision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{moments_y, slowly_varying, LawError, SetSizeLaw};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("invalid regime: {0}")]
    InvalidRegime(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Law(#[from] LawError),
}

/// Parameters of the heavy-tailed regime: tail exponent `alpha`, the growth
/// exponent `beta` of `m` in `n`, the window constants `eps0 > eps1` and the
/// slowly varying exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawRegime {
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default = "default_eps1")]
    pub eps1: f64,
    #[serde(default)]
    pub sv_gamma: f64,
}

fn default_beta() -> f64 {
    1.0
}
fn default_eps0() -> f64 {
    0.2
}
fn default_eps1() -> f64 {
    0.1
}

impl PowerLawRegime {
    /// `m = n` (`beta = 1`) with `eps0 = 0.2`, `eps1 = 0.1`.
    pub fn new(alpha: f64, sv_gamma: f64) -> Self {
        Self {
            alpha,
            beta: default_beta(),
            eps0: default_eps0(),
            eps1: default_eps1(),
            sv_gamma,
        }
    }

    pub fn validate(&self) -> Result<(), TheoryError> {
        let bad = |msg: String| Err(TheoryError::InvalidRegime(msg));
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return bad(format!("alpha must lie in (1, 2), got {}", self.alpha));
        }
        let floor = (2.0 - self.alpha).max(self.alpha - 1.0);
        if self.beta.is_nan() || self.beta <= floor {
            return bad(format!("beta must exceed {floor}, got {}", self.beta));
        }
        if !(self.eps1 > 0.0 && self.eps1 < self.eps0 && self.eps0 < 0.5) {
            return bad(format!(
                "need 0 < eps1 < eps0 < 0.5, got eps1 = {}, eps0 = {}",
                self.eps1, self.eps0
            ));
        }
        if !self.sv_gamma.is_finite() {
            return bad("sv_gamma must be finite".into());
        }
        Ok(())
    }
}

/// `(1 - alpha/2)^(-alpha/2) * L(sqrt(n ln n)) * n^(1 - alpha/2) * (ln n)^(-alpha/2)`.
pub fn predicted_clique_powerlaw(n: u64, regime: &PowerLawRegime) -> Result<f64, TheoryError> {
    regime.validate()?;
    if n < 3 {
        return Err(TheoryError::Domain(format!("need n >= 3, got {n}")));
    }
    let a = regime.alpha;
    let nf = n as f64;
    let ln_n = nf.ln();
    let log_value = -0.5 * a * (1.0 - 0.5 * a).ln() + (1.0 - 0.5 * a) * ln_n - 0.5 * a * ln_n.ln();
    Ok(log_value.exp() * slowly_varying(regime.sv_gamma, (nf * ln_n).sqrt()))
}

/// `ln n / ln ln n`, defined for `n >= 16`.
pub fn predicted_clique_finite_variance(n: u64) -> Result<f64, TheoryError> {
    if n < 16 {
        return Err(TheoryError::Domain(format!("need n >= 16, got {n}")));
    }
    let ln_n = (n as f64).ln();
    Ok(ln_n / ln_n.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta1: f64,
    pub theta2: f64,
}

/// `theta1 = sqrt(m) n^-eps1` and
/// `theta2 = sqrt((1 - alpha/2) m ln n + m e1)` with
/// `e1 = max(0, ln L(sqrt(n ln n)))`.
pub fn thresholds(n: u64, m: u64, regime: &PowerLawRegime) -> Result<Thresholds, TheoryError> {
    regime.validate()?;
    if n < 2 || m < 1 {
        return Err(TheoryError::Domain(format!(
            "need n >= 2 and m >= 1, got n = {n}, m = {m}"
        )));
    }
    let (nf, mf) = (n as f64, m as f64);
    let ln_n = nf.ln();
    let e1 = slowly_varying(regime.sv_gamma, (nf * ln_n).sqrt()).ln().max(0.0);
    Ok(Thresholds {
        theta1: mf.sqrt() * nf.powf(-regime.eps1),
        theta2: ((1.0 - 0.5 * regime.alpha) * mf * ln_n + mf * e1).sqrt(),
    })
}

/// Vertex counts with `X < theta1`, `theta1 <= X <= theta2` and `X > theta2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexPartition {
    pub v0: u64,
    pub v1: u64,
    pub v2: u64,
}

pub fn partition_by_size(sizes: impl IntoIterator<Item = u64>, th: &Thresholds) -> VertexPartition {
    let mut p = VertexPartition { v0: 0, v1: 0, v2: 0 };
    for x in sizes {
        let x = x as f64;
        if x < th.theta1 {
            p.v0 += 1;
        } else if x <= th.theta2 {
            p.v1 += 1;
        } else {
            p.v2 += 1;
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambertRoot {
    pub z: f64,
    /// `sqrt((2a + ln 2b) / (2b))`, absent when `2a + ln 2b <= 0`
    pub asymptote: Option<f64>,
    pub residual: f64,
}

/// Positive root of `a - ln z - b z^2 = 0`.
///
/// With `t = 2 b z^2` the equation becomes `t + ln t = c`, `c = 2a + ln 2b`.
/// Newton's method runs on `u = ln t` (`e^u + u = c`), starting to the right
/// of the root, where the convex iteration decreases monotonically.
pub fn lambert_root(a: f64, b: f64) -> Result<LambertRoot, TheoryError> {
    if !a.is_finite() || !(b > 0.0 && b.is_finite()) {
        return Err(TheoryError::Domain(format!(
            "need finite a and b > 0, got a = {a}, b = {b}"
        )));
    }
    let c = 2.0 * a + (2.0 * b).ln();
    let mut u = if c > 1.0 { c.ln() } else { c };
    for _ in 0..200 {
        let eu = u.exp();
        let step = (eu + u - c) / (eu + 1.0);
        u -= step;
        if step.abs() <= 1e-15 * u.abs().max(1.0) {
            break;
        }
    }
    let z = (u.exp() / (2.0 * b)).sqrt();
    Ok(LambertRoot {
        z,
        asymptote: (c > 0.0).then(|| (c / (2.0 * b)).sqrt()),
        residual: a - z.ln() - b * z * z,
    })
}

/// Smallest `h >= 4` with `C(h, 4) >= k`.
pub fn h_of_k(k: u64) -> Result<u64, TheoryError> {
    if k == 0 {
        return Err(TheoryError::Domain("need k >= 1".into()));
    }
    let choose4 = |h: u128| h * (h - 1) * (h - 2) * (h - 3) / 24;
    // (h - 3)^4 / 24 <= C(h, 4), so the answer is at most this start + 3
    let mut h = ((24.0 * k as f64).powf(0.25) as u128 + 3).max(4);
    while h > 4 && choose4(h - 1) >= k as u128 {
        h -= 1;
    }
    while choose4(h) < k as u128 {
        h += 1;
    }
    Ok(h as u64)
}

/// `c h^3 / ln h * p (sqrt(2k) + 5 + 2p)` with `h = h_of_k(k)`.
pub fn t_of_kp(k: u64, p: u64, c: f64) -> Result<f64, TheoryError> {
    if p == 0 || c.is_nan() || c <= 0.0 {
        return Err(TheoryError::Domain(format!(
            "need p >= 1 and c > 0, got p = {p}, c = {c}"
        )));
    }
    let h = h_of_k(k)? as f64;
    let (kf, pf) = (k as f64, p as f64);
    Ok(c * h.powi(3) / h.ln() * pf * ((2.0 * kf).sqrt() + 5.0 + 2.0 * pf))
}

/// `m^(-k(k-1)/2) * (x_1 ... x_k)^(k-1)`, clamped to `[0, 1]`.
pub fn rainbow_kk_prob_bound(sizes: &[u64], m: u64) -> Result<f64, TheoryError> {
    let k = sizes.len();
    if k < 2 {
        return Err(TheoryError::Domain(format!("need at least two sizes, got {k}")));
    }
    if let Some(&x) = sizes.iter().find(|&&x| x > m) {
        return Err(TheoryError::Domain(format!("size {x} exceeds m = {m}")));
    }
    if sizes.contains(&0) {
        return Ok(0.0);
    }
    // exact integers give a correctly rounded ratio, so comparisons against
    // exact enumerations are not spoiled by exp/ln round-off
    let pairs = (k * (k - 1) / 2) as u32;
    let num = sizes
        .iter()
        .try_fold(1u128, |acc, &x| acc.checked_mul((x as u128).checked_pow(k as u32 - 1)?));
    let den = (m as u128).checked_pow(pairs);
    if let (Some(num), Some(den)) = (num, den) {
        if num < 1 << 53 && den < 1 << 53 {
            return Ok((num as f64 / den as f64).min(1.0));
        }
    }
    let kf = k as f64;
    let log_bound =
        (kf - 1.0) * sizes.iter().map(|&x| (x as f64).ln()).sum::<f64>() - kf * (kf - 1.0) / 2.0 * (m as f64).ln();
    Ok(log_bound.exp().clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeMoments {
    pub mean_d: f64,
    pub var_d: f64,
}

/// Leading-order degree moments `(E Y)^2` and `(E Y)^2 (Var Y + 1)`.
pub fn degree_moment_predictions(law: &SetSizeLaw, n: u64, m: u64) -> Result<DegreeMoments, TheoryError> {
    let mom = moments_y(law, n, m)?;
    let sq = mom.mean_y * mom.mean_y;
    Ok(DegreeMoments {
        mean_d: sq,
        var_d: sq * (mom.var_y + 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Bounds on `P(S_1 ∩ S_2 ≠ ∅)` for uniform subsets of sizes `x1`, `x2`:
/// `max(0, x1 x2/m - (x1 x2/m)^2) <= P <= min(1, x1 x2/m)`.
pub fn edge_prob_bounds(x1: u64, x2: u64, m: u64) -> Result<EdgeProbBounds, TheoryError> {
    if m == 0 || x1 > m || x2 > m {
        return Err(TheoryError::Domain(format!(
            "need x1, x2 <= m and m >= 1, got {x1}, {x2}, {m}"
        )));
    }
    let r = x1 as f64 * x2 as f64 / m as f64;
    Ok(EdgeProbBounds {
        lower: (r - r * r).max(0.0),
        upper: r.min(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    // reference values from a 40-digit evaluation of the same formula
    #[test]
    fn powerlaw_matches_extended_precision() {
        let cases = [
            (1.5, 0.0, 3, 3.468_901_496_738_859_4),
            (1.25, 0.0, 3, 2.627_986_593_292_378_7),
            (1.75, 1.0, 3, 9.852_032_034_409_643),
            (1.5, -0.5, 3, 2.821_509_779_062_779),
            (1.1, 2.0, 1000, 237.838_809_253_319_9),
            (1.5, 0.0, 1_000_000, 12.481_586_452_754_14),
            (1.9, 0.5, 1_000_000_000, 9.390_780_960_676_817),
        ];
        for (alpha, gamma, n, want) in cases {
            let got = predicted_clique_powerlaw(n, &PowerLawRegime::new(alpha, gamma)).unwrap();
            assert!(
                close(got, want, 1e-12),
                "alpha={alpha} gamma={gamma} n={n}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn powerlaw_constant_l() {
        let got = predicted_clique_powerlaw(1_000_000, &PowerLawRegime::new(1.5, 0.0)).unwrap();
        let direct = 4f64.powf(0.75) * 10f64.powf(1.5) * (1e6f64).ln().powf(-0.75);
        assert!(close(got, direct, 1e-13));
        assert!((got - 12.4816).abs() < 1e-3);
        assert!(predicted_clique_powerlaw(2, &PowerLawRegime::new(1.5, 0.0)).is_err());
        assert!(predicted_clique_powerlaw(100, &PowerLawRegime::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn finite_variance_values() {
        assert!((predicted_clique_finite_variance(16).unwrap() - 2.719).abs() < 1e-3);
        assert!((predicted_clique_finite_variance(1_000_000).unwrap() - 5.261).abs() < 1e-3);
        assert!(predicted_clique_finite_variance(15).is_err());
        let mut last = 0.0;
        for n in 16..5000 {
            let v = predicted_clique_finite_variance(n).unwrap();
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn threshold_values() {
        let th = thresholds(10_000, 10_000, &PowerLawRegime::new(1.5, 0.0)).unwrap();
        assert!((th.theta2 - 23_025.850_929_940_457_f64.sqrt()).abs() < 1e-9);
        assert!((th.theta2 - 151.74).abs() < 0.01);
        assert!((th.theta1 - 39.81).abs() < 0.01);
        let p = partition_by_size([0, 39, 40, 151, 152, 500], &th);
        assert_eq!(p, VertexPartition { v0: 2, v1: 2, v2: 2 });
    }

    #[test]
    fn thresholds_are_ordered() {
        for alpha in [1.01, 1.2, 1.5, 1.8] {
            for eps1 in [0.1f64, 0.3, 0.49] {
                for gamma in [-2.0, 0.0, 2.0] {
                    let regime = PowerLawRegime {
                        eps0: 0.499,
                        eps1: eps1.min(0.49),
                        ..PowerLawRegime::new(alpha, gamma)
                    };
                    for n in [100u64, 1000, 10_000, 1_000_000] {
                        let th = thresholds(n, n, &regime).unwrap();
                        assert!(th.theta1 < th.theta2, "{regime:?} n={n}");
                    }
                }
            }
        }
    }

    #[test]
    fn thresholds_cross_near_the_box_edge() {
        // (1 - alpha/2) ln n < n^(-2 eps1) here, so the ordering is asymptotic only
        let regime = PowerLawRegime {
            eps1: 0.01,
            ..PowerLawRegime::new(1.99, 0.0)
        };
        let th = thresholds(100, 100, &regime).unwrap();
        assert!(th.theta1 > th.theta2);
    }

    #[test]
    fn regime_validation() {
        assert!(PowerLawRegime::new(1.5, 0.0).validate().is_ok());
        let low_beta = PowerLawRegime {
            beta: 0.5,
            ..PowerLawRegime::new(1.5, 0.0)
        };
        assert!(low_beta.validate().is_err());
        let eps = PowerLawRegime {
            eps1: 0.3,
            ..PowerLawRegime::new(1.5, 0.0)
        };
        assert!(eps.validate().is_err());
        let parsed: PowerLawRegime = serde_json::from_str(r#"{"alpha": 1.5}"#).unwrap();
        assert_eq!(parsed, PowerLawRegime::new(1.5, 0.0));
    }

    #[test]
    fn lambert_examples() {
        assert!((lambert_root(1.0, 1.0).unwrap().z - 1.0).abs() < 1e-12);
        assert!((lambert_root(2f64.ln() + 4.0, 1.0).unwrap().z - 2.0).abs() < 1e-12);
        let r = lambert_root(100.0, 0.01).unwrap();
        let asym = ((200.0 + 0.02f64.ln()) / 0.02).sqrt();
        assert_eq!(r.asymptote, Some(asym));
        assert!((r.z / asym - 1.0).abs() < 0.05);
        assert!(lambert_root(1.0, 0.0).is_err());
        assert!(lambert_root(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn h_examples() {
        assert_eq!(h_of_k(1).unwrap(), 4);
        assert_eq!(h_of_k(2).unwrap(), 5);
        assert_eq!(h_of_k(5).unwrap(), 5);
        assert_eq!(h_of_k(6).unwrap(), 6);
        assert_eq!(h_of_k(15).unwrap(), 6);
        assert_eq!(h_of_k(16).unwrap(), 7);
        assert!(h_of_k(0).is_err());
        let choose4 = |h: u64| h * (h - 1) * (h - 2) * (h - 3) / 24;
        for k in 1..3000u64 {
            let h = h_of_k(k).unwrap();
            assert!(choose4(h) >= k);
            assert!(h == 4 || choose4(h - 1) < k);
        }
    }

    #[test]
    fn t_examples() {
        let t = t_of_kp(1, 1, 1.0).unwrap();
        assert!((t - 64.0 / 4f64.ln() * (2f64.sqrt() + 7.0)).abs() < 1e-9);
        assert!((t - 388.5).abs() < 0.05);
        assert_eq!(t_of_kp(7, 3, 2.0).unwrap(), 2.0 * t_of_kp(7, 3, 1.0).unwrap());
        for k in 1..=100 {
            for p in 1..=100 {
                let here = t_of_kp(k, p, 1.0).unwrap();
                if k > 1 {
                    assert!(here >= t_of_kp(k - 1, p, 1.0).unwrap());
                }
                if p > 1 {
                    assert!(here >= t_of_kp(k, p - 1, 1.0).unwrap());
                }
            }
        }
    }

    #[test]
    fn rainbow_bound_examples() {
        assert_eq!(rainbow_kk_prob_bound(&[0, 3, 3], 10).unwrap(), 0.0);
        assert!((rainbow_kk_prob_bound(&[1, 1], 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((rainbow_kk_prob_bound(&[2, 2, 2], 6).unwrap() - 64.0 / 216.0).abs() < 1e-15);
        assert_eq!(rainbow_kk_prob_bound(&[5, 5], 5).unwrap(), 1.0);
        assert!(rainbow_kk_prob_bound(&[1], 2).is_err());
        assert!(rainbow_kk_prob_bound(&[3, 1], 2).is_err());
    }

    #[test]
    fn degree_moment_examples() {
        let d = degree_moment_predictions(&SetSizeLaw::Deterministic { x_fixed: 3 }, 50, 50).unwrap();
        assert_eq!((d.mean_d, d.var_d), (9.0, 9.0));
        let d = degree_moment_predictions(&SetSizeLaw::Deterministic { x_fixed: 0 }, 50, 50).unwrap();
        assert_eq!((d.mean_d, d.var_d), (0.0, 0.0));
        let law = SetSizeLaw::Empirical {
            pmf: vec![(0, 0.5), (2, 0.5)],
        };
        let d = degree_moment_predictions(&law, 50, 50).unwrap();
        assert!((d.mean_d - 1.0).abs() < 1e-12 && (d.var_d - 2.0).abs() < 1e-12);
    }

    /// `1 - C(m - x1, x2) / C(m, x2)` as a running product.
    fn exact_edge_prob(x1: u64, x2: u64, m: u64) -> f64 {
        if x1 + x2 > m {
            return 1.0;
        }
        let miss: f64 = (0..x2).map(|i| (m - x1 - i) as f64 / (m - i) as f64).product();
        1.0 - miss
    }

    #[test]
    fn edge_bounds_examples() {
        let b = edge_prob_bounds(1, 1, 2).unwrap();
        assert_eq!((b.lower, b.upper), (0.25, 0.5));
        assert_eq!(exact_edge_prob(1, 1, 2), 0.5);
        let b = edge_prob_bounds(0, 4, 9).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        let b = edge_prob_bounds(7, 7, 7).unwrap();
        assert_eq!(b.upper, 1.0);
        assert_eq!(exact_edge_prob(7, 7, 7), 1.0);
    }

    #[test]
    fn edge_bounds_sandwich_exhaustive() {
        for m in 1..=40u64 {
            for x1 in 0..=m {
                for x2 in 0..=(m - x1) {
                    let b = edge_prob_bounds(x1, x2, m).unwrap();
                    let p = exact_edge_prob(x1, x2, m);
                    assert!(b.lower <= p + 1e-12 && p <= b.upper + 1e-12, "{x1} {x2} {m}");
                }
            }
        }
    }

    #[test]
    fn predictions_are_repeatable() {
        let r = PowerLawRegime::new(1.3, 0.7);
        assert_eq!(
            predicted_clique_powerlaw(12345, &r).unwrap().to_bits(),
            predicted_clique_powerlaw(12345, &r).unwrap().to_bits()
        );
        assert_eq!(lambert_root(3.3, 0.2), lambert_root(3.3, 0.2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn lambert_residual_is_tiny(a in -10.0f64..1000.0, log_b in (1e-6f64).ln()..(1e3f64).ln()) {
            let r = lambert_root(a, log_b.exp()).unwrap();
            prop_assert!(r.z > 0.0);
            prop_assert!(r.residual.abs() < 1e-9, "a={} b={} residual={}", a, log_b.exp(), r.residual);
        }
    }
}
