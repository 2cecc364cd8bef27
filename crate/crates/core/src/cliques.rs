//! Clique algorithms and the structural counters used to analyse them.
//!
//! [`greedy_clique`] and [`mono_clique`] only look at the graph. The exact
//! search, the monochromatic clique and the rainbow/cycle counters also use
//! the attribute sets of the instance.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::instance::{intersect_into, intersection_size, AttributeIndex, IntersectionInstance, SparseGraph};
use crate::sdr::distinct_representatives;

/// Default node-expansion limit for [`exact_max_clique`].
pub const DEFAULT_EXACT_BUDGET: u64 = 100_000_000;
/// Default cap on the number of 4-cliques inspected by [`rainbow_k4_report`].
pub const DEFAULT_K4_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CliqueError {
    #[error("exact search exceeded its budget of {budget} expansions")]
    BudgetExceeded { budget: u64 },
    #[error("resource limit: more than {cap} 4-cliques")]
    ResourceLimit { cap: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Greedy,
    Mono,
    Exact,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::Mono => "mono",
            Algorithm::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliqueResult {
    /// sorted
    pub vertices: Vec<u32>,
    pub algorithm: Algorithm,
    pub elapsed: Duration,
}

impl CliqueResult {
    fn new(mut vertices: Vec<u32>, algorithm: Algorithm, start: Instant) -> Self {
        vertices.sort_unstable();
        Self {
            vertices,
            algorithm,
            elapsed: start.elapsed(),
        }
    }

    pub fn size(&self) -> usize {
        self.vertices.len()
    }
}

impl Serialize for CliqueResult {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("CliqueResult", 4)?;
        st.serialize_field("algorithm", &self.algorithm)?;
        st.serialize_field("size", &self.vertices.len())?;
        st.serialize_field("vertices", &self.vertices)?;
        st.serialize_field("elapsed_ns", &(self.elapsed.as_nanos() as u64))?;
        st.end()
    }
}

/// Greedy-Clique: scan vertices by degree (descending, ties by id) and keep
/// every vertex adjacent to all vertices kept so far.
pub fn greedy_clique(g: &SparseGraph) -> CliqueResult {
    let start = Instant::now();
    let mut order: Vec<u32> = (0..g.n() as u32).collect();
    order.sort_unstable_by_key(|&v| (Reverse(g.degree(v as usize)), v));
    let mut members: Vec<u32> = Vec::new();
    for &v in &order {
        // later vertices have no larger degree, so none of them can join either
        if g.degree(v as usize) < members.len() {
            break;
        }
        if members.iter().all(|&u| g.has_edge(u as usize, v as usize)) {
            members.push(v);
        }
    }
    debug_assert!(g.is_clique(&members));
    CliqueResult::new(members, Algorithm::Greedy, start)
}

/// Mono-Clique: for edges in decreasing order of common-neighbourhood size
/// (ties by lexicographic edge), return `{u, v} ∪ (Γ(u) ∩ Γ(v))` for the first
/// edge whose common neighbourhood is a clique. Without edges the result is
/// the lowest-id vertex.
pub fn mono_clique(g: &SparseGraph) -> CliqueResult {
    let start = Instant::now();
    let mut keys: Vec<(u32, Reverse<u32>, Reverse<u32>)> = Vec::with_capacity(g.edge_count());
    for (u, v) in g.edges() {
        let common = intersection_size(g.neighbors(u as usize), g.neighbors(v as usize));
        keys.push((common as u32, Reverse(u), Reverse(v)));
    }
    // heapify is linear; edges are extracted one at a time instead of sorted up front
    let mut heap = BinaryHeap::from(keys);
    let mut common = Vec::new();
    while let Some((_, Reverse(u), Reverse(v))) = heap.pop() {
        common.clear();
        intersect_into(g.neighbors(u as usize), g.neighbors(v as usize), &mut common);
        if g.is_clique(&common) {
            common.push(u);
            common.push(v);
            debug_assert!(g.is_clique(&common));
            return CliqueResult::new(common, Algorithm::Mono, start);
        }
    }
    let fallback = if g.n() > 0 { vec![0] } else { Vec::new() };
    CliqueResult::new(fallback, Algorithm::Mono, start)
}

/// Exact maximum clique by branch and bound.
///
/// Vertices are processed in degeneracy order, each with its later neighbours
/// as candidates. Inside, branching skips neighbours of a pivot and subtrees
/// are pruned by a greedy colouring bound. Every search node counts against
/// `budget`.
pub fn exact_max_clique(g: &SparseGraph, budget: u64) -> Result<CliqueResult, CliqueError> {
    let start = Instant::now();
    let mut search = ExactSearch {
        g,
        best: greedy_clique(g).vertices,
        expansions: 0,
        budget,
    };
    let order = degeneracy_order(g);
    let mut position = vec![0usize; g.n()];
    for (i, &v) in order.iter().enumerate() {
        position[v as usize] = i;
    }
    let mut clique = Vec::new();
    for &v in &order {
        let later: Vec<u32> = g
            .neighbors(v as usize)
            .iter()
            .copied()
            .filter(|&u| position[u as usize] > position[v as usize])
            .collect();
        if later.len() < search.best.len() {
            continue;
        }
        clique.push(v);
        search.expand(&mut clique, later)?;
        clique.pop();
    }
    debug_assert!(g.is_clique(&search.best));
    Ok(CliqueResult::new(search.best, Algorithm::Exact, start))
}

struct ExactSearch<'a> {
    g: &'a SparseGraph,
    best: Vec<u32>,
    expansions: u64,
    budget: u64,
}

impl ExactSearch<'_> {
    fn expand(&mut self, clique: &mut Vec<u32>, mut candidates: Vec<u32>) -> Result<(), CliqueError> {
        self.expansions += 1;
        if self.expansions > self.budget {
            return Err(CliqueError::BudgetExceeded { budget: self.budget });
        }
        if candidates.is_empty() {
            if clique.len() > self.best.len() {
                self.best = clique.clone();
            }
            return Ok(());
        }
        if clique.len() + candidates.len() <= self.best.len()
            || clique.len() + colour_bound(self.g, &candidates) <= self.best.len()
        {
            return Ok(());
        }
        let g = self.g;
        let pivot = *candidates
            .iter()
            .max_by_key(|&&u| {
                let links = candidates
                    .iter()
                    .filter(|&&x| g.has_edge(u as usize, x as usize))
                    .count();
                (links, Reverse(u))
            })
            .expect("non-empty");
        let branch: Vec<u32> = candidates
            .iter()
            .copied()
            .filter(|&x| !g.has_edge(pivot as usize, x as usize))
            .collect();
        let mut next = Vec::new();
        for x in branch {
            if clique.len() + candidates.len() <= self.best.len() {
                break;
            }
            next.clear();
            intersect_into(&candidates, g.neighbors(x as usize), &mut next);
            clique.push(x);
            self.expand(clique, std::mem::take(&mut next))?;
            clique.pop();
            if let Ok(i) = candidates.binary_search(&x) {
                candidates.remove(i);
            }
        }
        Ok(())
    }
}

/// Number of colours used by sequential greedy colouring of `vertices`; an
/// upper bound on the clique number of the induced subgraph.
fn colour_bound(g: &SparseGraph, vertices: &[u32]) -> usize {
    let mut classes: Vec<Vec<u32>> = Vec::new();
    for &v in vertices {
        match classes
            .iter_mut()
            .find(|c| c.iter().all(|&u| !g.has_edge(u as usize, v as usize)))
        {
            Some(c) => c.push(v),
            None => classes.push(vec![v]),
        }
    }
    classes.len()
}

/// Vertices in the order they are removed when repeatedly deleting a vertex
/// of minimum remaining degree (ties by id).
pub fn degeneracy_order(g: &SparseGraph) -> Vec<u32> {
    let n = g.n();
    let mut degree: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let max_deg = degree.iter().copied().max().unwrap_or(0);
    let mut buckets: Vec<std::collections::BTreeSet<u32>> = vec![Default::default(); max_deg + 1];
    for v in 0..n {
        buckets[degree[v]].insert(v as u32);
    }
    let mut removed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut low = 0;
    for _ in 0..n {
        while buckets[low].is_empty() {
            low += 1;
        }
        let v = buckets[low].pop_first().expect("non-empty bucket");
        removed[v as usize] = true;
        order.push(v);
        for &u in g.neighbors(v as usize) {
            let u = u as usize;
            if !removed[u] {
                buckets[degree[u]].remove(&(u as u32));
                degree[u] -= 1;
                buckets[degree[u]].insert(u as u32);
                low = low.min(degree[u]);
            }
        }
    }
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monochromatic {
    /// `None` when every `T_w` is empty.
    pub attribute: Option<u32>,
    pub size: usize,
}

/// Largest monochromatic clique `T_w` (smallest attribute id on ties).
pub fn max_monochromatic(idx: &AttributeIndex) -> Monochromatic {
    let mut best = Monochromatic {
        attribute: None,
        size: 0,
    };
    for w in 0..idx.m() {
        let size = idx.occupancy(w);
        if size > best.size {
            best = Monochromatic {
                attribute: Some(w as u32),
                size,
            };
        }
    }
    best
}

/// One edge of a rainbow witness and the attribute assigned to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColouredEdge {
    pub u: u32,
    pub v: u32,
    pub attribute: u32,
}

/// An injective edge→attribute assignment covering all pairs of `vertices`,
/// if one exists. Absent also when some pair shares no attribute.
pub fn is_rainbow_witness(inst: &IntersectionInstance, vertices: &[u32]) -> Option<Vec<ColouredEdge>> {
    let mut pairs = Vec::new();
    let mut colour_sets: Vec<Vec<u32>> = Vec::new();
    for (i, &u) in vertices.iter().enumerate() {
        for &v in &vertices[i + 1..] {
            let mut shared = Vec::new();
            intersect_into(inst.subset(u as usize), inst.subset(v as usize), &mut shared);
            if shared.is_empty() {
                return None;
            }
            pairs.push((u, v));
            colour_sets.push(shared);
        }
    }
    let reps = distinct_representatives(&colour_sets)?;
    Some(
        pairs
            .into_iter()
            .zip(reps)
            .map(|((u, v), attribute)| ColouredEdge { u, v, attribute })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RainbowWitness {
    pub vertices: Vec<u32>,
    pub assignment: Vec<ColouredEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RainbowWitnessReport {
    pub h: usize,
    pub count: u64,
    /// at most ten examples, in enumeration order
    pub sample_witnesses: Vec<RainbowWitness>,
}

const MAX_SAMPLE_WITNESSES: usize = 10;

/// Counts the 4-sets witnessing a rainbow `K4`. Only 4-cliques of `g` are
/// inspected; fails if there are more than `cap` of them.
pub fn rainbow_k4_report(
    inst: &IntersectionInstance,
    g: &SparseGraph,
    cap: u64,
) -> Result<RainbowWitnessReport, CliqueError> {
    let mut report = RainbowWitnessReport {
        h: 4,
        count: 0,
        sample_witnesses: Vec::new(),
    };
    let mut seen = 0u64;
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    for u in 0..g.n() {
        let nu = g.neighbors(u);
        let hi_u = &nu[nu.partition_point(|&x| x as usize <= u)..];
        for (i, &v) in hi_u.iter().enumerate() {
            c1.clear();
            intersect_into(&hi_u[i + 1..], g.neighbors(v as usize), &mut c1);
            for (j, &w) in c1.iter().enumerate() {
                c2.clear();
                intersect_into(&c1[j + 1..], g.neighbors(w as usize), &mut c2);
                for &x in &c2 {
                    seen += 1;
                    if seen > cap {
                        return Err(CliqueError::ResourceLimit { cap });
                    }
                    let quad = [u as u32, v, w, x];
                    if let Some(assignment) = is_rainbow_witness(inst, &quad) {
                        report.count += 1;
                        if report.sample_witnesses.len() < MAX_SAMPLE_WITNESSES {
                            report.sample_witnesses.push(RainbowWitness {
                                vertices: quad.to_vec(),
                                assignment,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// The number `R` of rainbow `K4` witnesses, with the default 4-clique cap.
pub fn count_rainbow_k4(inst: &IntersectionInstance, g: &SparseGraph) -> Result<u64, CliqueError> {
    rainbow_k4_report(inst, g, DEFAULT_K4_CAP).map(|r| r.count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleCount {
    pub count: u64,
    /// the enumeration stopped at the cap; `count` is a lower bound
    pub saturated: bool,
}

/// Ordered 4-tuples `(v1, v2, v3, v4)` of distinct vertices forming the cycle
/// `v1 v2 v3 v4 v1` with `S_{v2} ∩ S_{v4} = ∅`.
pub fn count_bad_cycles(inst: &IntersectionInstance, g: &SparseGraph, cap: u64) -> CycleCount {
    count_cycles_with(g, cap, |v2, v4| {
        intersection_size(inst.subset(v2 as usize), inst.subset(v4 as usize)) == 0
    })
}

/// Ordered 4-tuples of distinct vertices forming a 4-cycle.
pub fn count_4cycles(g: &SparseGraph, cap: u64) -> CycleCount {
    count_cycles_with(g, cap, |_, _| true)
}

/// For every ordered pair `(v1, v3)` the common neighbours are collected via
/// wedges; each ordered pair `(v2, v4)` of distinct common neighbours accepted
/// by `keep` is one tuple.
fn count_cycles_with<F: Fn(u32, u32) -> bool>(g: &SparseGraph, cap: u64, keep: F) -> CycleCount {
    let n = g.n();
    let mut common: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut touched: Vec<u32> = Vec::new();
    let mut count = 0u64;
    for a in 0..n {
        for &b in g.neighbors(a) {
            for &c in g.neighbors(b as usize) {
                if c as usize == a {
                    continue;
                }
                if common[c as usize].is_empty() {
                    touched.push(c);
                }
                common[c as usize].push(b);
            }
        }
        for &c in &touched {
            let list = std::mem::take(&mut common[c as usize]);
            for (i, &x) in list.iter().enumerate() {
                for (j, &y) in list.iter().enumerate() {
                    if i != j && keep(x, y) {
                        count += 1;
                        if count >= cap {
                            return CycleCount { count, saturated: true };
                        }
                    }
                }
            }
        }
        touched.clear();
    }
    CycleCount {
        count,
        saturated: false,
    }
}
