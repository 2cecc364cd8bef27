//! Brute-force baselines for validating the fast paths.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{intersect_into, uniform_subset, SparseGraph};
use crate::sdr::distinct_representatives;

/// Largest graph accepted by [`brute_max_clique`].
pub const BRUTE_CLIQUE_LIMIT: usize = 20;
/// Largest number of outcomes or families enumerated by one call.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("size limit: {0}")]
    SizeLimit(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Clique number by checking all `2^n` vertex subsets.
pub fn brute_max_clique(g: &SparseGraph) -> Result<usize, OracleError> {
    let n = g.n();
    if n > BRUTE_CLIQUE_LIMIT {
        return Err(OracleError::SizeLimit(format!(
            "brute-force clique search needs n <= {BRUTE_CLIQUE_LIMIT}, got {n}"
        )));
    }
    let adj: Vec<u32> = (0..n)
        .map(|v| g.neighbors(v).iter().fold(0u32, |acc, &u| acc | 1 << u))
        .collect();
    // is_clique[s] for every subset s, built from s minus its lowest vertex
    let mut is_clique = vec![false; 1 << n];
    is_clique[0] = true;
    let mut best = 0;
    for s in 1u32..(1 << n) {
        let v = s.trailing_zeros() as usize;
        let rest = s & (s - 1);
        if is_clique[rest as usize] && rest & !adj[v] == 0 {
            is_clique[s as usize] = true;
            best = best.max(s.count_ones() as usize);
        }
    }
    Ok(best)
}

/// `C(n, k)` as `u64`, saturating.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// The `d`-subsets of `[0, m)` in colex order.
#[derive(Debug, Clone)]
pub struct Combinations {
    m: usize,
    current: Vec<usize>,
    fresh: bool,
}

impl Combinations {
    pub fn new(m: usize, d: usize) -> Self {
        Self {
            m,
            current: (0..d).collect(),
            fresh: d <= m,
        }
    }

    /// Advances and returns the next subset, or `None` when exhausted.
    pub fn next_subset(&mut self) -> Option<&[usize]> {
        if self.fresh {
            self.fresh = false;
            return Some(&self.current);
        }
        let d = self.current.len();
        let j = (0..d).find(|&j| {
            let limit = if j + 1 < d { self.current[j + 1] } else { self.m };
            self.current[j] + 1 < limit
        })?;
        self.current[j] += 1;
        for (i, c) in self.current[..j].iter_mut().enumerate() {
            *c = i;
        }
        Some(&self.current)
    }
}

/// Probability that `{S ∩ A_1, ..., S ∩ A_k}` has a system of distinct
/// representatives when `S` is a uniform `d`-subset of `[0, m)`.
pub fn sdr_probability_exact(family: &[Vec<u32>], m: usize, d: usize) -> Result<f64, OracleError> {
    if d > m {
        return Err(OracleError::Invalid(format!("d = {d} exceeds m = {m}")));
    }
    if family.iter().flatten().any(|&w| w as usize >= m) {
        return Err(OracleError::Invalid(format!(
            "family uses an attribute outside [0, {m})"
        )));
    }
    let outcomes = binomial(m as u64, d as u64);
    if outcomes > ENUMERATION_LIMIT {
        return Err(OracleError::SizeLimit(format!("C({m}, {d}) = {outcomes} outcomes")));
    }
    let sorted: Vec<Vec<u32>> = family
        .iter()
        .map(|a| {
            let mut a = a.clone();
            a.sort_unstable();
            a.dedup();
            a
        })
        .collect();
    let mut combos = Combinations::new(m, d);
    let mut hits = 0u64;
    let mut chosen: Vec<u32> = Vec::with_capacity(d);
    let mut traces: Vec<Vec<u32>> = vec![Vec::new(); sorted.len()];
    while let Some(s) = combos.next_subset() {
        chosen.clear();
        chosen.extend(s.iter().map(|&x| x as u32));
        for (trace, a) in traces.iter_mut().zip(&sorted) {
            trace.clear();
            intersect_into(&chosen, a, trace);
        }
        if distinct_representatives(&traces).is_some() {
            hits += 1;
        }
    }
    Ok(hits as f64 / outcomes as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisjointCheck {
    /// best probability among the compared families (0 when there are none)
    pub max_other: f64,
    pub disjoint: f64,
    /// `disjoint >= max_other - 1e-12`
    pub holds: bool,
    pub families: u64,
}

/// Consecutive blocks `[0, s_1), [s_1, s_1 + s_2), ...`.
pub fn disjoint_family(sizes: &[usize]) -> Vec<Vec<u32>> {
    let mut start = 0u32;
    sizes
        .iter()
        .map(|&s| {
            let block = (start..start + s as u32).collect();
            start += s as u32;
            block
        })
        .collect()
}

fn check_preconditions(sizes: &[usize], m: usize, d: usize) -> Result<(), OracleError> {
    if sizes.iter().sum::<usize>() > m {
        return Err(OracleError::Invalid(format!(
            "sizes {sizes:?} do not fit disjointly in m = {m}"
        )));
    }
    if d < sizes.len() || d > m {
        return Err(OracleError::Invalid(format!(
            "need k <= d <= m, got k = {}, d = {d}, m = {m}",
            sizes.len()
        )));
    }
    Ok(())
}

fn pairwise_disjoint(family: &[Vec<u32>]) -> bool {
    let mut seen = std::collections::HashSet::new();
    family.iter().flatten().all(|&w| seen.insert(w))
}

/// Compares the disjoint family against `candidates` random families with the
/// same set sizes. Each set is a uniform subset of its size; fully disjoint
/// draws are redrawn unless fewer than two sets are nonempty (then every draw
/// is disjoint).
pub fn verify_disjoint_maximizes<R: Rng + ?Sized>(
    sizes: &[usize],
    m: usize,
    d: usize,
    candidates: u64,
    rng: &mut R,
) -> Result<DisjointCheck, OracleError> {
    check_preconditions(sizes, m, d)?;
    let disjoint = sdr_probability_exact(&disjoint_family(sizes), m, d)?;
    let can_overlap = sizes.iter().filter(|&&s| s > 0).count() >= 2;
    let mut max_other: f64 = 0.0;
    for _ in 0..candidates {
        let family = loop {
            let f: Vec<Vec<u32>> = sizes.iter().map(|&s| uniform_subset(m, s, rng)).collect();
            if !can_overlap || !pairwise_disjoint(&f) {
                break f;
            }
        };
        max_other = max_other.max(sdr_probability_exact(&family, m, d)?);
    }
    Ok(DisjointCheck {
        max_other,
        disjoint,
        holds: disjoint >= max_other - 1e-12,
        families: candidates,
    })
}

/// As [`verify_disjoint_maximizes`], but against every family with the given
/// set sizes.
pub fn verify_disjoint_maximizes_exhaustive(sizes: &[usize], m: usize, d: usize) -> Result<DisjointCheck, OracleError> {
    check_preconditions(sizes, m, d)?;
    let families = sizes
        .iter()
        .try_fold(1u64, |acc, &s| acc.checked_mul(binomial(m as u64, s as u64)))
        .filter(|&f| f <= ENUMERATION_LIMIT)
        .ok_or_else(|| OracleError::SizeLimit(format!("too many families for sizes {sizes:?}, m = {m}")))?;
    let disjoint = sdr_probability_exact(&disjoint_family(sizes), m, d)?;
    let mut max_other: f64 = 0.0;
    for_each_family(sizes, m, &mut |family| {
        let p = sdr_probability_exact(family, m, d)?;
        max_other = max_other.max(p);
        Ok(())
    })?;
    Ok(DisjointCheck {
        max_other,
        disjoint,
        holds: disjoint >= max_other - 1e-12,
        families,
    })
}

/// Calls `f` on every tuple `(A_1, ..., A_k)` with `|A_i| = sizes[i]`.
fn for_each_family<F>(sizes: &[usize], m: usize, f: &mut F) -> Result<(), OracleError>
where
    F: FnMut(&[Vec<u32>]) -> Result<(), OracleError>,
{
    fn go<F>(sizes: &[usize], m: usize, acc: &mut Vec<Vec<u32>>, f: &mut F) -> Result<(), OracleError>
    where
        F: FnMut(&[Vec<u32>]) -> Result<(), OracleError>,
    {
        let i = acc.len();
        if i == sizes.len() {
            return f(acc);
        }
        let mut combos = Combinations::new(m, sizes[i]);
        while let Some(s) = combos.next_subset() {
            acc.push(s.iter().map(|&x| x as u32).collect());
            go(sizes, m, acc, f)?;
            acc.pop();
        }
        Ok(())
    }
    go(sizes, m, &mut Vec::with_capacity(sizes.len()), f)
}

/// Whether some injective choice of one element per set exists, by trying
/// every assignment.
pub fn brute_injective_assignment(sets: &[Vec<u32>]) -> bool {
    fn go(sets: &[Vec<u32>], used: &mut Vec<u32>) -> bool {
        let Some((first, rest)) = sets.split_first() else {
            return true;
        };
        for &w in first {
            if !used.contains(&w) {
                used.push(w);
                if go(rest, used) {
                    return true;
                }
                used.pop();
            }
        }
        false
    }
    go(sets, &mut Vec::new())
}

/// Exact probability that `k` independent uniform subsets of `[0, m)` with
/// the given sizes form a rainbow `K_k`: every pair intersects and the pair
/// intersections admit distinct representatives. Checked by enumerating all
/// tuples of subsets and all injective assignments.
pub fn rainbow_clique_probability_exact(sizes: &[usize], m: usize) -> Result<f64, OracleError> {
    if sizes.iter().any(|&s| s > m) {
        return Err(OracleError::Invalid(format!("sizes {sizes:?} exceed m = {m}")));
    }
    let total = sizes
        .iter()
        .try_fold(1u64, |acc, &s| acc.checked_mul(binomial(m as u64, s as u64)))
        .filter(|&f| f <= ENUMERATION_LIMIT)
        .ok_or_else(|| OracleError::SizeLimit(format!("too many tuples for sizes {sizes:?}, m = {m}")))?;
    let mut hits = 0u64;
    for_each_family(sizes, m, &mut |family| {
        let mut colours = Vec::new();
        for (i, a) in family.iter().enumerate() {
            for b in &family[i + 1..] {
                let mut shared = Vec::new();
                intersect_into(a, b, &mut shared);
                colours.push(shared);
            }
        }
        if brute_injective_assignment(&colours) {
            hits += 1;
        }
        Ok(())
    })?;
    Ok(hits as f64 / total as f64)
}
