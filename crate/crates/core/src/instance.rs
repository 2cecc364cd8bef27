//! Sampled intersection instances, the attribute index and the sparse graph.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::distributions::{moments_y, LawError, SetSizeLaw};

/// Default cap on `sum_w |T_w|^2` when materializing a graph.
pub const DEFAULT_BUILD_BUDGET: u64 = 500_000_000;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error(transparent)]
    Law(#[from] LawError),
    #[error("resource limit: clique expansion needs {needed} steps, budget is {budget}")]
    ResourceLimit { needed: u64, budget: u64 },
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `n` attribute subsets of `[0, m)`, one per vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntersectionInstance {
    m: usize,
    subsets: Vec<Vec<u32>>,
    seed: u64,
}

impl IntersectionInstance {
    /// Builds an instance from explicit subsets. Each subset must be strictly
    /// increasing with values below `m`.
    pub fn from_subsets(m: usize, subsets: Vec<Vec<u32>>, seed: u64) -> Result<Self, InstanceError> {
        if m > u32::MAX as usize || subsets.len() > u32::MAX as usize {
            return Err(InstanceError::Invalid("too many vertices or attributes".into()));
        }
        for (v, s) in subsets.iter().enumerate() {
            if s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(InstanceError::Invalid(format!(
                    "subset of vertex {v} is not strictly increasing"
                )));
            }
            if let Some(&last) = s.last() {
                if last as usize >= m {
                    return Err(InstanceError::Invalid(format!(
                        "vertex {v} holds attribute {last}, but m = {m}"
                    )));
                }
            }
        }
        Ok(Self { m, subsets, seed })
    }

    pub fn n(&self) -> usize {
        self.subsets.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn subset(&self, v: usize) -> &[u32] {
        &self.subsets[v]
    }

    pub fn subsets(&self) -> &[Vec<u32>] {
        &self.subsets
    }

    /// `sum_v |S_v|`
    pub fn total_size(&self) -> usize {
        self.subsets.iter().map(Vec::len).sum()
    }
}

/// Samples `n` independent subsets: a size from `law`, then a uniform subset
/// of that size.
pub fn generate(n: usize, m: usize, law: &SetSizeLaw, seed: u64) -> Result<IntersectionInstance, InstanceError> {
    let sampler = law.sampler(n as u64, m as u64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subsets = (0..n)
        .map(|_| {
            let k = sampler.sample(&mut rng) as usize;
            uniform_subset(m, k, &mut rng)
        })
        .collect();
    IntersectionInstance::from_subsets(m, subsets, seed)
}

/// Binomial intersection graph: each attribute joins each subset independently
/// with probability `p`.
pub fn generate_binomial(n: usize, m: usize, p: f64, seed: u64) -> Result<IntersectionInstance, InstanceError> {
    generate(n, m, &SetSizeLaw::Binomial { p }, seed)
}

/// Uniformly random `k`-subset of `[0, m)`, sorted.
///
/// Floyd's selection for `k` small relative to `m` (no `O(m)` allocation),
/// partial Fisher-Yates otherwise.
pub fn uniform_subset<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> Vec<u32> {
    if k == 0 {
        return Vec::new();
    }
    if k >= m {
        return (0..m as u32).collect();
    }
    let mut out: Vec<u32> = if k * 4 > m {
        let mut pool: Vec<u32> = (0..m as u32).collect();
        for i in 0..k {
            let j = rng.random_range(i..m);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    } else if k <= 32 {
        let mut chosen: Vec<u32> = Vec::with_capacity(k);
        for j in (m - k)..m {
            let t = rng.random_range(0..=j) as u32;
            if chosen.contains(&t) {
                chosen.push(j as u32);
            } else {
                chosen.push(t);
            }
        }
        chosen
    } else {
        let mut chosen = std::collections::HashSet::with_capacity(k);
        let mut order = Vec::with_capacity(k);
        for j in (m - k)..m {
            let t = rng.random_range(0..=j) as u32;
            let pick = if chosen.contains(&t) { j as u32 } else { t };
            chosen.insert(pick);
            order.push(pick);
        }
        order
    };
    out.sort_unstable();
    out
}

/// Inverted index `T_w = { v : w in S_v }` in compressed row form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeIndex {
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl AttributeIndex {
    pub fn m(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn occupants(&self, w: usize) -> &[u32] {
        &self.members[self.offsets[w]..self.offsets[w + 1]]
    }

    pub fn occupancy(&self, w: usize) -> usize {
        self.offsets[w + 1] - self.offsets[w]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.m()).map(move |w| self.occupants(w))
    }
}

pub fn invert(inst: &IntersectionInstance) -> AttributeIndex {
    let m = inst.m();
    let mut offsets = vec![0usize; m + 1];
    for s in inst.subsets() {
        for &w in s {
            offsets[w as usize + 1] += 1;
        }
    }
    for w in 0..m {
        offsets[w + 1] += offsets[w];
    }
    let mut cursor = offsets.clone();
    let mut members = vec![0u32; offsets[m]];
    // vertices are visited in increasing order, so every T_w comes out sorted
    for (v, s) in inst.subsets().iter().enumerate() {
        for &w in s {
            members[cursor[w as usize]] = v as u32;
            cursor[w as usize] += 1;
        }
    }
    AttributeIndex { offsets, members }
}

/// Simple undirected graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    offsets: Vec<usize>,
    adjacency: Vec<u32>,
}

impl SparseGraph {
    /// Builds a graph from an edge list. Duplicates are merged; self-loops and
    /// out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self, InstanceError> {
        let mut lists = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u == v {
                return Err(InstanceError::Invalid(format!("self-loop at {u}")));
            }
            if u as usize >= n || v as usize >= n {
                return Err(InstanceError::Invalid(format!("edge ({u}, {v}) out of range")));
            }
            lists[u as usize].push(v);
            lists[v as usize].push(u);
        }
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        Ok(Self::from_sorted_lists(lists))
    }

    /// The complete graph on `n` vertices.
    pub fn complete(n: usize) -> Self {
        let lists = (0..n as u32)
            .map(|v| (0..n as u32).filter(|&u| u != v).collect())
            .collect();
        Self::from_sorted_lists(lists)
    }

    fn from_sorted_lists(lists: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut adjacency = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for l in lists {
            adjacency.extend_from_slice(&l);
            offsets.push(adjacency.len());
        }
        Self { offsets, adjacency }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adjacency[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let (a, b) = if self.degree(u) <= self.degree(v) {
            (u, v)
        } else {
            (v, u)
        };
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    /// Edges `(u, v)` with `u < v` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| v as usize > u)
                .map(move |&v| (u as u32, v))
        })
    }

    pub fn is_clique(&self, vertices: &[u32]) -> bool {
        vertices.iter().enumerate().all(|(i, &a)| {
            vertices[i + 1..]
                .iter()
                .all(|&b| a != b && self.has_edge(a as usize, b as usize))
        })
    }

    /// Checks symmetry, sortedness and the absence of loops and duplicates.
    pub fn check_invariants(&self) -> bool {
        (0..self.n()).all(|v| {
            let nb = self.neighbors(v);
            nb.windows(2).all(|w| w[0] < w[1])
                && nb.iter().all(|&u| {
                    u as usize != v
                        && (u as usize) < self.n()
                        && self.neighbors(u as usize).binary_search(&(v as u32)).is_ok()
                })
        })
    }
}

/// Size of `a ∩ b` for sorted slices.
pub fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// `a ∩ b` for sorted slices, appended to `out`.
pub fn intersect_into(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
}

pub fn build_graph(inst: &IntersectionInstance) -> Result<SparseGraph, InstanceError> {
    build_graph_with_budget(inst, DEFAULT_BUILD_BUDGET)
}

/// Materializes the intersection graph by expanding every `T_w` into a clique
/// and deduplicating. Fails when `sum_w |T_w|^2` exceeds `budget`.
pub fn build_graph_with_budget(inst: &IntersectionInstance, budget: u64) -> Result<SparseGraph, InstanceError> {
    let idx = invert(inst);
    let needed: u64 = idx.iter().map(|t| (t.len() as u64).pow(2)).sum();
    if needed > budget {
        return Err(InstanceError::ResourceLimit { needed, budget });
    }
    let n = inst.n();
    let mut stamp = vec![u32::MAX; n];
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut adjacency = Vec::new();
    for v in 0..n {
        let start = adjacency.len();
        for &w in inst.subset(v) {
            for &u in idx.occupants(w as usize) {
                if u as usize != v && stamp[u as usize] != v as u32 {
                    stamp[u as usize] = v as u32;
                    adjacency.push(u);
                }
            }
        }
        adjacency[start..].sort_unstable();
        offsets.push(adjacency.len());
    }
    let g = SparseGraph { offsets, adjacency };
    debug_assert!(g.check_invariants());
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub mean: f64,
    /// population variance (divides by `n`)
    pub variance: f64,
    pub max: usize,
}

pub fn degree_stats(g: &SparseGraph) -> DegreeStats {
    let n = g.n();
    if n == 0 {
        return DegreeStats {
            mean: 0.0,
            variance: 0.0,
            max: 0,
        };
    }
    let mean = (2 * g.edge_count()) as f64 / n as f64;
    let variance = (0..n).map(|v| (g.degree(v) as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    let max = (0..n).map(|v| g.degree(v)).max().unwrap_or(0);
    DegreeStats { mean, variance, max }
}

/// Number of triangles, by ordered sorted-adjacency intersection.
pub fn triangle_count(g: &SparseGraph) -> u64 {
    let mut total = 0u64;
    for u in 0..g.n() {
        let nu = g.neighbors(u);
        let hi_u = &nu[nu.partition_point(|&x| x as usize <= u)..];
        for &v in hi_u {
            let nv = g.neighbors(v as usize);
            let hi_v = &nv[nv.partition_point(|&x| x <= v)..];
            let tail_u = &hi_u[hi_u.partition_point(|&x| x <= v)..];
            total += intersection_size(tail_u, hi_v) as u64;
        }
    }
    total
}

/// Number of paths of length two, `sum_v C(d_v, 2)`.
pub fn two_path_count(g: &SparseGraph) -> u64 {
    (0..g.n())
        .map(|v| {
            let d = g.degree(v) as u64;
            d * d.saturating_sub(1) / 2
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clustering {
    /// `3 * triangles / two-paths`; absent when the graph has no 2-path.
    pub empirical: Option<f64>,
    /// `sqrt(n/m) * E Y / E Y^2`; absent when `E Y^2 = 0`.
    pub predicted: Option<f64>,
    pub triangles: u64,
    pub two_paths: u64,
}

pub fn clustering(inst: &IntersectionInstance, g: &SparseGraph, law: &SetSizeLaw) -> Result<Clustering, InstanceError> {
    let (n, m) = (inst.n() as u64, inst.m() as u64);
    let mom = moments_y(law, n, m)?;
    let predicted = if mom.mean_y2 > 0.0 {
        Some((n as f64 / m as f64).sqrt() * mom.mean_y / mom.mean_y2)
    } else {
        None
    };
    let triangles = triangle_count(g);
    let two_paths = two_path_count(g);
    let empirical = if two_paths > 0 {
        Some(3.0 * triangles as f64 / two_paths as f64)
    } else {
        None
    };
    Ok(Clustering {
        empirical,
        predicted,
        triangles,
        two_paths,
    })
}

/// Largest number of vertices sharing one pair of attributes (0 when no
/// subset has two elements).
pub fn attribute_pair_multiplicity(inst: &IntersectionInstance) -> u64 {
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    for s in inst.subsets() {
        for (i, &a) in s.iter().enumerate() {
            for &b in &s[i + 1..] {
                *counts.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    counts.values().copied().max().unwrap_or(0)
}

/// Plain-text instance: `n m seed`, then one line of attribute ids per vertex.
pub fn write_instance<W: Write>(inst: &IntersectionInstance, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {} {}", inst.n(), inst.m(), inst.seed())?;
    let mut line = String::new();
    for s in inst.subsets() {
        line.clear();
        for (i, w) in s.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&w.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_instance<R: BufRead>(input: R) -> Result<IntersectionInstance, InstanceError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(InstanceError::Parse {
        line: 1,
        msg: "missing header".into(),
    })??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(InstanceError::Parse {
            line: 1,
            msg: format!("expected `n m seed`, got {header:?}"),
        });
    }
    let parse_u64 = |s: &str, what: &str| {
        s.parse::<u64>().map_err(|e| InstanceError::Parse {
            line: 1,
            msg: format!("{what}: {e}"),
        })
    };
    let n = parse_u64(fields[0], "n")? as usize;
    let m = parse_u64(fields[1], "m")? as usize;
    let seed = parse_u64(fields[2], "seed")?;
    let mut subsets = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if subsets.len() == n {
            if line.trim().is_empty() {
                continue;
            }
            return Err(InstanceError::Parse {
                line: lineno,
                msg: format!("more than {n} vertex lines"),
            });
        }
        let mut s = line
            .split_whitespace()
            .map(|t| {
                t.parse::<u32>().map_err(|e| InstanceError::Parse {
                    line: lineno,
                    msg: format!("attribute {t:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        s.sort_unstable();
        subsets.push(s);
    }
    // trailing empty subsets may be cut off by editors
    subsets.resize(n, Vec::new());
    IntersectionInstance::from_subsets(m, subsets, seed)
}

/// Edge list, one `u v` line per edge with `u < v`.
pub fn write_edge_list<W: Write>(g: &SparseGraph, mut out: W) -> std::io::Result<()> {
    for (u, v) in g.edges() {
        writeln!(out, "{u} {v}")?;
    }
    Ok(())
}
