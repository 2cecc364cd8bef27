//! The named experiments: what one trial measures, which predictions and
//! per-point statistics are attached, and which rules decide pass/fail.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Aggregate, ExperimentConfig, HarnessError, PointSummary, RuleOutcome, RunContext, TrialOutcome, TrialRecord,
};
use crate::ballsbins::{
    coupled_pair, default_delta, matched_balls, max_load_sample, omega_prime_sample, tv_distance, LoadDistribution,
};
use crate::cliques::{exact_max_clique, greedy_clique, max_monochromatic, mono_clique, rainbow_k4_report, CliqueError};
use crate::distributions::{moments_y, SetSizeLaw};
use crate::instance::{
    attribute_pair_multiplicity, build_graph_with_budget, clustering, degree_stats, generate, invert, InstanceError,
    IntersectionInstance, SparseGraph, DEFAULT_BUILD_BUDGET,
};
use crate::oracles::{verify_disjoint_maximizes, verify_disjoint_maximizes_exhaustive};
use crate::theory::{
    degree_moment_predictions, partition_by_size, predicted_clique_finite_variance, predicted_clique_powerlaw,
    thresholds, PowerLawRegime,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PowerlawClique,
    FiniteVarianceStructure,
    TvMaxload,
    MonoOptimality,
    DegreeMoments,
    RainbowBound,
    PairMultiplicity,
    SdrMaximization,
    Coupling,
    RuntimeScaling,
}

const COMMON_KNOBS: &[(&str, f64)] = &[("max_excluded_fraction", 0.05)];

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::PowerlawClique,
        ExperimentKind::FiniteVarianceStructure,
        ExperimentKind::TvMaxload,
        ExperimentKind::MonoOptimality,
        ExperimentKind::DegreeMoments,
        ExperimentKind::RainbowBound,
        ExperimentKind::PairMultiplicity,
        ExperimentKind::SdrMaximization,
        ExperimentKind::Coupling,
        ExperimentKind::RuntimeScaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PowerlawClique => "powerlaw-clique",
            ExperimentKind::FiniteVarianceStructure => "finite-variance-structure",
            ExperimentKind::TvMaxload => "tv-maxload",
            ExperimentKind::MonoOptimality => "mono-optimality",
            ExperimentKind::DegreeMoments => "degree-moments",
            ExperimentKind::RainbowBound => "rainbow-bound",
            ExperimentKind::PairMultiplicity => "pair-multiplicity",
            ExperimentKind::SdrMaximization => "sdr-maximization",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::RuntimeScaling => "runtime-scaling",
        }
    }

    pub fn claim(self) -> &'static str {
        match self {
            ExperimentKind::PowerlawClique => {
                "heavy tail, alpha in (1,2): clique number = (1+o_P(1)) (1-alpha/2)^(-alpha/2) K(n)"
            }
            ExperimentKind::FiniteVarianceStructure => "finite variance: omega = omega' + O_P(1)",
            ExperimentKind::TvMaxload => "d_TV(omega', M(floor(sqrt(mn) E Y), m)) -> 0",
            ExperimentKind::MonoOptimality => "Mono-Clique output C: E(omega - |C|)^2 = O(1)",
            ExperimentKind::DegreeMoments => {
                "E D = (E Y)^2 + o(1), Var D = (E Y)^2 (Var Y + 1) + o(1), clustering ~ sqrt(n/m) E Y / E Y^2"
            }
            ExperimentKind::RainbowBound => "rainbow K4 witnesses: E R <= (E Y^2)^4 / 4!",
            ExperimentKind::PairMultiplicity => "whp every attribute pair is shared by at most two vertices",
            ExperimentKind::SdrMaximization => "P({S ∩ A_i} has an SDR) is maximised by mutually disjoint A_i",
            ExperimentKind::Coupling => "delete-after-overthrow coupling: M <= M' always, M' - delta E M' <= M whp",
            ExperimentKind::RuntimeScaling => "Mono-Clique expected time O(n); Greedy-Clique time O(n^2)",
        }
    }

    pub fn default_law(self) -> SetSizeLaw {
        match self {
            ExperimentKind::PowerlawClique => SetSizeLaw::PowerLawTail {
                alpha: 1.5,
                y_min: 1.0,
                sv_gamma: 0.0,
            },
            _ => SetSizeLaw::Deterministic { x_fixed: 3 },
        }
    }

    /// Knob names and defaults. The defaults are the acceptance thresholds;
    /// they are conventions for finite `n`, not constants from the claims.
    pub fn knobs(self) -> &'static [(&'static str, f64)] {
        match self {
            ExperimentKind::PowerlawClique => &[
                ("ratio_low", 0.4),
                ("ratio_high", 1.6),
                ("trend_slack", 0.1),
                ("beta", 1.0),
                ("eps0", 0.2),
                ("eps1", 0.1),
            ],
            ExperimentKind::FiniteVarianceStructure => {
                &[("exact_budget", 1e8), ("max_gap", 3.0), ("gap_fraction", 0.95)]
            }
            ExperimentKind::MonoOptimality => &[
                ("exact_budget", 1e8),
                ("mono_exact_fraction", 0.9),
                ("max_mean_sq_gap", 1.0),
            ],
            ExperimentKind::TvMaxload => &[("tv_max", 0.15), ("tv_trend_slack", 0.05)],
            ExperimentKind::DegreeMoments => &[("mean_tol", 0.05), ("var_tol", 0.10), ("clustering_tol", 0.05)],
            ExperimentKind::RainbowBound => &[("k4_cap", 1e7), ("z", 1.645), ("max_pairs", 2.0)],
            ExperimentKind::PairMultiplicity => &[("max_pairs", 2.0), ("pair_fraction", 0.9)],
            ExperimentKind::SdrMaximization => &[("d", 0.0), ("exhaustive", 0.0)],
            ExperimentKind::Coupling => &[("eps", 1e-3), ("delta", 0.0), ("p_equal_min", 0.9)],
            ExperimentKind::RuntimeScaling => &[("mono_growth_slack", 1.5), ("greedy_envelope_slack", 1.5)],
        }
    }

    pub fn knob_default(self, key: &str) -> Option<f64> {
        self.knobs()
            .iter()
            .chain(COMMON_KNOBS)
            .find(|(k, _)| *k == key)
            .map(|&(_, v)| v)
    }

    pub fn uses_instances(self) -> bool {
        !matches!(
            self,
            ExperimentKind::TvMaxload | ExperimentKind::SdrMaximization | ExperimentKind::Coupling
        )
    }

    /// Whether the first schedule coordinate is a vertex count (`n >= 1`).
    pub(crate) fn needs_vertices(self) -> bool {
        !matches!(self, ExperimentKind::SdrMaximization | ExperimentKind::Coupling)
    }

    pub(crate) fn is_timed(self) -> bool {
        self == ExperimentKind::RuntimeScaling
    }

    pub(crate) fn validate(self, config: &ExperimentConfig) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::ConfigInvalid(msg));
        match self {
            ExperimentKind::PowerlawClique => {
                regime(config)?;
            }
            ExperimentKind::SdrMaximization => {
                let sizes = sdr_sizes(config);
                let d = sdr_d(config);
                for &(_, m) in &config.schedule {
                    let m = m as usize;
                    if sizes.iter().sum::<usize>() > m || d < sizes.len() || d > m {
                        return bad(format!("sizes {sizes:?} with d = {d} do not fit m = {m}"));
                    }
                }
            }
            ExperimentKind::Coupling => {
                let eps = config.knob("eps");
                if !(eps > 0.0 && eps < 1.0) {
                    return bad(format!("eps must lie in (0, 1), got {eps}"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub(crate) fn trial(self, ctx: &RunContext, n: u64, m: u64, seed: u64) -> Result<TrialOutcome, HarnessError> {
        match self {
            ExperimentKind::PowerlawClique => powerlaw_trial(ctx, n, m, seed),
            ExperimentKind::FiniteVarianceStructure | ExperimentKind::MonoOptimality => {
                structure_trial(ctx, n, m, seed)
            }
            ExperimentKind::TvMaxload => tv_trial(ctx, n, m, seed),
            ExperimentKind::DegreeMoments => degree_trial(ctx, n, m, seed),
            ExperimentKind::RainbowBound => rainbow_trial(ctx, n, m, seed),
            ExperimentKind::PairMultiplicity => pair_trial(ctx, n, m, seed),
            ExperimentKind::SdrMaximization => sdr_trial(ctx, m, seed),
            ExperimentKind::Coupling => coupling_trial(ctx, n, m, seed),
            ExperimentKind::RuntimeScaling => runtime_trial(ctx, n, m, seed),
        }
    }

    pub(crate) fn predictions(self, ctx: &RunContext, n: u64, m: u64) -> Result<BTreeMap<String, f64>, HarnessError> {
        let mut p = BTreeMap::new();
        let config = ctx.config;
        match self {
            ExperimentKind::PowerlawClique => {
                let r = regime(config)?;
                p.insert("predicted_clique".into(), predicted_clique_powerlaw(n, &r)?);
                let th = thresholds(n, m, &r)?;
                p.insert("theta1".into(), th.theta1);
                p.insert("theta2".into(), th.theta2);
            }
            ExperimentKind::FiniteVarianceStructure | ExperimentKind::MonoOptimality => {
                if let Ok(v) = predicted_clique_finite_variance(n) {
                    p.insert("ln_n_over_ln_ln_n".into(), v);
                }
            }
            ExperimentKind::TvMaxload => {
                p.insert("balls".into(), matched_balls(n, m, &ctx.law)? as f64);
            }
            ExperimentKind::DegreeMoments => {
                let d = degree_moment_predictions(&ctx.law, n, m)?;
                p.insert("mean_degree".into(), d.mean_d);
                p.insert("degree_variance".into(), d.var_d);
                let mom = moments_y(&ctx.law, n, m)?;
                if mom.mean_y2 > 0.0 {
                    p.insert(
                        "clustering".into(),
                        (n as f64 / m as f64).sqrt() * mom.mean_y / mom.mean_y2,
                    );
                }
            }
            ExperimentKind::RainbowBound => {
                let mom = moments_y(&ctx.law, n, m)?;
                p.insert("rainbow_k4_bound".into(), mom.mean_y2.powi(4) / 24.0);
            }
            ExperimentKind::SdrMaximization => {
                let sizes = sdr_sizes(config);
                let fam = crate::oracles::disjoint_family(&sizes);
                p.insert(
                    "disjoint".into(),
                    crate::oracles::sdr_probability_exact(&fam, m as usize, sdr_d(config))?,
                );
            }
            ExperimentKind::Coupling => {
                p.insert("delta".into(), coupling_delta(config, n));
            }
            ExperimentKind::PairMultiplicity | ExperimentKind::RuntimeScaling => {}
        }
        Ok(p)
    }

    /// Statistics that need all trials of one point together.
    pub(crate) fn derive(self, ctx: &RunContext, n: u64, m: u64, records: &[TrialRecord]) -> BTreeMap<String, f64> {
        let mut d = BTreeMap::new();
        let included: Vec<&TrialRecord> = records.iter().filter(|r| !r.excluded).collect();
        let values = |key: &str| -> Vec<f64> { included.iter().filter_map(|r| r.metrics.get(key).copied()).collect() };
        match self {
            ExperimentKind::TvMaxload => {
                let to_counts = |v: Vec<f64>| v.into_iter().map(|x| x as u64).collect::<Vec<_>>();
                let omega = LoadDistribution::from_samples(&to_counts(values("omega_prime")));
                let load = LoadDistribution::from_samples(&to_counts(values("max_load")));
                d.insert("tv".into(), tv_distance(&omega, &load));
                d.insert("mean_omega_prime".into(), omega.mean());
                d.insert("mean_max_load".into(), load.mean());
            }
            ExperimentKind::DegreeMoments => {
                let means = values("mean_degree");
                let vars = values("degree_variance");
                if !means.is_empty() {
                    let k = means.len() as f64;
                    let grand = means.iter().sum::<f64>() / k;
                    let second = means.iter().zip(&vars).map(|(a, v)| v + a * a).sum::<f64>() / k;
                    d.insert("grand_mean_degree".into(), grand);
                    d.insert("pooled_degree_variance".into(), second - grand * grand);
                }
            }
            ExperimentKind::Coupling => {
                let gaps = values("gap");
                let primes = values("m_prime");
                if !gaps.is_empty() {
                    let k = gaps.len() as f64;
                    let mean_prime = primes.iter().sum::<f64>() / k;
                    let delta = coupling_delta(ctx.config, n);
                    d.insert("mean_m_prime".into(), mean_prime);
                    d.insert("p_equal".into(), gaps.iter().filter(|&&g| g == 0.0).count() as f64 / k);
                    d.insert(
                        "p_within_delta".into(),
                        gaps.iter().filter(|&&g| g <= delta * mean_prime).count() as f64 / k,
                    );
                    d.insert("violations".into(), gaps.iter().filter(|&&g| g < 0.0).count() as f64);
                }
            }
            ExperimentKind::SdrMaximization => {
                if ctx.config.knob("exhaustive") != 0.0 {
                    let sizes = sdr_sizes(ctx.config);
                    if let Ok(check) = verify_disjoint_maximizes_exhaustive(&sizes, m as usize, sdr_d(ctx.config)) {
                        d.insert("exhaustive_max_other".into(), check.max_other);
                        d.insert("exhaustive_families".into(), check.families as f64);
                        d.insert("exhaustive_holds".into(), check.holds as u8 as f64);
                    }
                }
            }
            ExperimentKind::RuntimeScaling => {
                let mut mono = values("mono_ns");
                if !mono.is_empty() {
                    mono.sort_by(f64::total_cmp);
                    let mid = mono.len() / 2;
                    let median = if mono.len() % 2 == 1 {
                        mono[mid]
                    } else {
                        0.5 * (mono[mid - 1] + mono[mid])
                    };
                    d.insert("median_mono_ns".into(), median);
                    d.insert("total_greedy_ns".into(), values("greedy_ns").iter().sum());
                }
            }
            _ => {}
        }
        d
    }

    pub(crate) fn rules(
        self,
        ctx: &RunContext,
        points: &[PointSummary],
        aggregates: &[Aggregate],
        records: &[TrialRecord],
    ) -> Vec<RuleOutcome> {
        let c = ctx.config;
        let mean_at = |point: usize, metric: &str| -> Option<f64> {
            aggregates
                .iter()
                .find(|a| a.point == point && a.metric == metric)
                .map(|a| a.mean)
        };
        let worst = |f: &dyn Fn(usize) -> Option<f64>, pick_max: bool| -> Option<f64> {
            let vals: Option<Vec<f64>> = (0..points.len()).map(f).collect();
            let vals = vals?;
            if pick_max {
                vals.into_iter().reduce(f64::max)
            } else {
                vals.into_iter().reduce(f64::min)
            }
        };
        let first = 0;
        let last = points.len() - 1;
        let mut rules = Vec::new();
        match self {
            ExperimentKind::PowerlawClique => {
                let ratio = mean_at(last, "ratio_greedy");
                rules.push(RuleOutcome::at_least(
                    "ratio_at_largest_n_low",
                    ratio,
                    c.knob("ratio_low"),
                ));
                rules.push(RuleOutcome::at_most(
                    "ratio_at_largest_n_high",
                    ratio,
                    c.knob("ratio_high"),
                ));
                if points.len() > 1 {
                    let trend = mean_at(first, "ratio_greedy")
                        .zip(ratio)
                        .map(|(a, b)| (b - 1.0).abs() - (a - 1.0).abs());
                    rules.push(RuleOutcome::at_most("ratio_error_growth", trend, c.knob("trend_slack")));
                }
            }
            ExperimentKind::FiniteVarianceStructure => {
                let min_gap = records
                    .iter()
                    .filter(|r| !r.excluded)
                    .filter_map(|r| r.metrics.get("gap").copied())
                    .reduce(f64::min);
                rules.push(RuleOutcome::at_least("min_gap", min_gap, 0.0));
                let max_gap = c.knob("max_gap");
                let within = |p: usize| {
                    let gaps: Vec<f64> = records
                        .iter()
                        .filter(|r| r.point == p && !r.excluded)
                        .filter_map(|r| r.metrics.get("gap").copied())
                        .collect();
                    (!gaps.is_empty())
                        .then(|| gaps.iter().filter(|&&g| g <= max_gap).count() as f64 / gaps.len() as f64)
                };
                rules.push(RuleOutcome::at_least(
                    "gap_within_fraction",
                    worst(&within, false),
                    c.knob("gap_fraction"),
                ));
            }
            ExperimentKind::MonoOptimality => {
                rules.push(RuleOutcome::at_least(
                    "mono_exact_fraction",
                    worst(&|p| mean_at(p, "mono_exact"), false),
                    c.knob("mono_exact_fraction"),
                ));
                rules.push(RuleOutcome::at_most(
                    "mean_sq_gap",
                    worst(&|p| mean_at(p, "mono_gap_sq"), true),
                    c.knob("max_mean_sq_gap"),
                ));
            }
            ExperimentKind::TvMaxload => {
                let tv = |p: usize| points[p].derived.get("tv").copied();
                rules.push(RuleOutcome::at_most("tv_at_largest_n", tv(last), c.knob("tv_max")));
                if points.len() > 1 {
                    let growth = tv(last).zip(tv(first)).map(|(b, a)| b - a);
                    rules.push(RuleOutcome::at_most("tv_growth", growth, c.knob("tv_trend_slack")));
                }
            }
            ExperimentKind::DegreeMoments => {
                let rel = |value: Option<f64>, predicted: Option<f64>| -> Option<f64> {
                    let (v, p) = (value?, predicted?);
                    Some(if p == 0.0 { v.abs() } else { (v - p).abs() / p.abs() })
                };
                let mean_err = |p: usize| {
                    rel(
                        points[p].derived.get("grand_mean_degree").copied(),
                        points[p].predictions.get("mean_degree").copied(),
                    )
                };
                let var_err = |p: usize| {
                    rel(
                        points[p].derived.get("pooled_degree_variance").copied(),
                        points[p].predictions.get("degree_variance").copied(),
                    )
                };
                let clust_err = |p: usize| {
                    Some((mean_at(p, "clustering")? - points[p].predictions.get("clustering").copied()?).abs())
                };
                rules.push(RuleOutcome::at_most(
                    "mean_degree_rel_error",
                    worst(&mean_err, true),
                    c.knob("mean_tol"),
                ));
                rules.push(RuleOutcome::at_most(
                    "degree_variance_rel_error",
                    worst(&var_err, true),
                    c.knob("var_tol"),
                ));
                rules.push(RuleOutcome::at_most(
                    "clustering_abs_error",
                    worst(&clust_err, true),
                    c.knob("clustering_tol"),
                ));
            }
            ExperimentKind::RainbowBound => {
                // one-sided upper confidence limit of E R, minus the bound
                let z = c.knob("z");
                let excess = |p: usize| {
                    let a = aggregates.iter().find(|a| a.point == p && a.metric == "rainbow_k4")?;
                    let ucl = a.mean + z * (a.variance / a.count as f64).sqrt();
                    Some(ucl - points[p].predictions.get("rainbow_k4_bound").copied()?)
                };
                rules.push(RuleOutcome::at_most(
                    "rainbow_ucl_minus_bound",
                    worst(&excess, true),
                    0.0,
                ));
            }
            ExperimentKind::PairMultiplicity => {
                rules.push(RuleOutcome::at_least(
                    "pair_ok_fraction",
                    worst(&|p| mean_at(p, "pair_ok"), false),
                    c.knob("pair_fraction"),
                ));
            }
            ExperimentKind::SdrMaximization => {
                rules.push(RuleOutcome::at_least(
                    "min_holds",
                    worst(
                        &|p| {
                            aggregates
                                .iter()
                                .find(|a| a.point == p && a.metric == "holds")
                                .map(|a| if a.mean == 1.0 { 1.0 } else { 0.0 })
                        },
                        false,
                    ),
                    1.0,
                ));
                if c.knob("exhaustive") != 0.0 {
                    rules.push(RuleOutcome::at_least(
                        "exhaustive_holds",
                        worst(&|p| points[p].derived.get("exhaustive_holds").copied(), false),
                        1.0,
                    ));
                }
            }
            ExperimentKind::Coupling => {
                let total: Option<f64> = points.iter().map(|p| p.derived.get("violations").copied()).sum();
                rules.push(RuleOutcome::at_most("violations", total, 0.0));
                rules.push(RuleOutcome::at_least(
                    "p_equal",
                    worst(&|p| points[p].derived.get("p_equal").copied(), false),
                    c.knob("p_equal_min"),
                ));
            }
            ExperimentKind::RuntimeScaling => {
                if points.len() > 1 {
                    let growth = (1..points.len())
                        .map(|i| {
                            let a = points[i - 1].derived.get("median_mono_ns").copied()?;
                            let b = points[i].derived.get("median_mono_ns").copied()?;
                            Some(b / a / (points[i].n as f64 / points[i - 1].n as f64))
                        })
                        .collect::<Option<Vec<f64>>>()
                        .and_then(|v| v.into_iter().reduce(f64::max));
                    rules.push(RuleOutcome::at_most(
                        "mono_growth_over_linear",
                        growth,
                        c.knob("mono_growth_slack"),
                    ));
                    let envelope = (1..points.len())
                        .map(|i| {
                            let a = points[0].derived.get("total_greedy_ns").copied()?;
                            let b = points[i].derived.get("total_greedy_ns").copied()?;
                            let scale = (points[i].n as f64 / points[0].n as f64).powi(2);
                            Some(b / (a * scale))
                        })
                        .collect::<Option<Vec<f64>>>()
                        .and_then(|v| v.into_iter().reduce(f64::max));
                    rules.push(RuleOutcome::at_most(
                        "greedy_over_quadratic_envelope",
                        envelope,
                        c.knob("greedy_envelope_slack"),
                    ));
                }
            }
        }
        rules
    }
}

fn regime(config: &ExperimentConfig) -> Result<PowerLawRegime, HarnessError> {
    match config.law() {
        SetSizeLaw::PowerLawTail { alpha, sv_gamma, .. } => {
            let r = PowerLawRegime {
                alpha,
                beta: config.knob("beta"),
                eps0: config.knob("eps0"),
                eps1: config.knob("eps1"),
                sv_gamma,
            };
            r.validate()?;
            Ok(r)
        }
        other => Err(HarnessError::ConfigInvalid(format!(
            "powerlaw-clique needs a PowerLawTail law, got {other:?}"
        ))),
    }
}

fn sdr_sizes(config: &ExperimentConfig) -> Vec<usize> {
    config.sizes.clone().unwrap_or_else(|| vec![2, 2, 2])
}

fn sdr_d(config: &ExperimentConfig) -> usize {
    match config.knob("d") {
        d if d >= 1.0 => d as usize,
        _ => sdr_sizes(config).len(),
    }
}

fn coupling_delta(config: &ExperimentConfig, balls: u64) -> f64 {
    match config.knob("delta") {
        d if d > 0.0 => d,
        _ => default_delta(balls),
    }
}

fn instance(ctx: &RunContext, n: u64, m: u64, seed: u64) -> Result<IntersectionInstance, HarnessError> {
    match &ctx.replay {
        Some(inst) => Ok(inst.clone()),
        None => Ok(generate(n as usize, m as usize, &ctx.law, seed)?),
    }
}

/// Builds the graph, or explains why the trial has to be excluded.
fn graph(inst: &IntersectionInstance) -> Result<Result<SparseGraph, TrialOutcome>, HarnessError> {
    match build_graph_with_budget(inst, DEFAULT_BUILD_BUDGET) {
        Ok(g) => Ok(Ok(g)),
        Err(e @ InstanceError::ResourceLimit { .. }) => Ok(Err(TrialOutcome::excluded(e.to_string()))),
        Err(e) => Err(e.into()),
    }
}

macro_rules! graph_or_exclude {
    ($inst:expr) => {
        match graph($inst)? {
            Ok(g) => g,
            Err(outcome) => return Ok(outcome),
        }
    };
}

fn omega_prime(inst: &IntersectionInstance) -> usize {
    max_monochromatic(&invert(inst)).size
}

fn powerlaw_trial(ctx: &RunContext, n: u64, m: u64, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let inst = instance(ctx, n, m, seed)?;
    let g = graph_or_exclude!(&inst);
    let r = regime(ctx.config)?;
    let predicted = predicted_clique_powerlaw(n, &r)?;
    let th = thresholds(n, m, &r)?;
    let part = partition_by_size(inst.subsets().iter().map(|s| s.len() as u64), &th);
    let greedy = greedy_clique(&g).size() as f64;
    let mut out = TrialOutcome::default();
    out.set("greedy", greedy);
    out.set("ratio_greedy", greedy / predicted);
    out.set("omega_prime", omega_prime(&inst) as f64);
    out.set("v0", part.v0 as f64);
    out.set("v1", part.v1 as f64);
    out.set("v2", part.v2 as f64);
    out.set("edges", g.edge_count() as f64);
    Ok(out)
}

fn structure_trial(ctx: &RunContext, n: u64, m: u64, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let inst = instance(ctx, n, m, seed)?;
    let g = graph_or_exclude!(&inst);
    let budget = ctx.config.knob("exact_budget") as u64;
    let omega = match exact_max_clique(&g, budget) {
        Ok(c) => c.size() as f64,
        Err(e @ CliqueError::BudgetExceeded { .. }) => return Ok(TrialOutcome::excluded(e.to_string())),
        Err(e) => return Ok(TrialOutcome::excluded(e.to_string())),
    };
    let omega_p = omega_prime(&inst) as f64;
    let mono = mono_clique(&g).size() as f64;
    let mut out = TrialOutcome::default();
    out.set("omega", omega);
    out.set("omega_prime", omega_p);
    out.set("gap", omega - omega_p);
    out.set("greedy", greedy_clique(&g).size() as f64);
    out.set("mono", mono);
    out.set("mono_gap_sq", (omega - mono).powi(2));
    out.set("mono_exact", (mono == omega) as u8 as f64);
    Ok(out)
}

fn tv_trial(ctx: &RunContext, n: u64, m: u64, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instance_seed: u64 = rng.random();
    let balls = matched_balls(n, m, &ctx.law)?;
    let mut out = TrialOutcome::default();
    out.set("omega_prime", omega_prime_sample(n, m, &ctx.law, instance_seed)? as f64);
    out.set("max_load", max_load_sample(balls, m, &mut rng) as f64);
    Ok(out)
}

fn degree_trial(ctx: &RunContext, n: u64, m: u64, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let inst = instance(ctx, n, m, seed)?;
    let g = graph_or_exclude!(&inst);
    let stats = degree_stats(&g);
    let cl = clustering(&inst, &g, &ctx.law)?;
    let mut out = TrialOutcome::default();
    out.set("mean_degree", stats.mean);
    out.set("degree_variance", stats.variance);
    out.set("max_degree", stats.max as f64);
    out.set("triangles", cl.triangles as f64);
    out.set("two_paths", cl.two_paths as f64);
    if let Some(e) = cl.empirical {
        out.set("clustering", e);
    }
    Ok(out)
}

fn rainbow_trial(ctx: &RunContext, n: u64, m: u64, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let inst = instance(ctx, n, m, seed)?;
    let g = graph_or_exclude!(&inst);
    let report = match rainbow_k4_report(&inst, &g, ctx.config.knob("k4_cap") as u64) {
        Ok(r) => r,
        Err(e) => return Ok(TrialOutcome::excluded(e.to_string())),
    };
    let pairs = attribute_pair_multiplicity(&inst) as f64;
    let mut out = TrialOutcome::default();
    out.set("rainbow_k4", report.count as f64);
    out.set("pair_multiplicity", pairs);
    out.set("pair_ok", (pairs <= ctx.config.knob("max_pairs")) as u8 as f64);
    Ok(out)
}

fn pair_trial(ctx: &RunContext, n: u64, m: u64, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let inst = instance(ctx, n, m, seed)?;
    let pairs = attribute_pair_multiplicity(&inst) as f64;
    let mut out = TrialOutcome::default();
    out.set("pair_multiplicity", pairs);
    out.set("pair_ok", (pairs <= ctx.config.knob("max_pairs")) as u8 as f64);
    Ok(out)
}

fn sdr_trial(ctx: &RunContext, m: u64, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let check = verify_disjoint_maximizes(&sdr_sizes(ctx.config), m as usize, sdr_d(ctx.config), 1, &mut rng)?;
    let mut out = TrialOutcome::default();
    out.set("p_other", check.max_other);
    out.set("disjoint", check.disjoint);
    out.set("margin", check.disjoint - check.max_other);
    out.set("holds", check.holds as u8 as f64);
    Ok(out)
}

fn coupling_trial(ctx: &RunContext, balls: u64, bins: u64, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let eps = ctx.config.knob("eps");
    let thrown = (balls as f64 * (1.0 + eps)).floor() as u64;
    let deleted = (eps * balls as f64).floor() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (after, before) = coupled_pair(thrown, deleted, bins, &mut rng);
    let mut out = TrialOutcome::default();
    out.set("m", after as f64);
    out.set("m_prime", before as f64);
    out.set("gap", before as f64 - after as f64);
    Ok(out)
}

fn runtime_trial(ctx: &RunContext, n: u64, m: u64, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let inst = instance(ctx, n, m, seed)?;
    let g = graph_or_exclude!(&inst);
    let greedy = greedy_clique(&g);
    let mono = mono_clique(&g);
    let mut out = TrialOutcome::default();
    out.set("greedy_ns", greedy.elapsed.as_nanos() as f64);
    out.set("mono_ns", mono.elapsed.as_nanos() as f64);
    out.set("greedy_size", greedy.size() as f64);
    out.set("mono_size", mono.size() as f64);
    out.set("edges", g.edge_count() as f64);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{run, ExperimentConfig};
    use super::*;

    #[test]
    fn names_round_trip() {
        for kind in ExperimentKind::ALL {
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.name()));
            assert_eq!(serde_json::from_str::<ExperimentKind>(&json).unwrap(), kind);
        }
    }

    #[test]
    fn every_experiment_runs_small() {
        for kind in ExperimentKind::ALL {
            let schedule = match kind {
                ExperimentKind::SdrMaximization => vec![(0, 8)],
                ExperimentKind::Coupling => vec![(200, 50)],
                _ => vec![(200, 200), (400, 400)],
            };
            let mut c = ExperimentConfig::new(kind, schedule, 3, 11);
            if kind == ExperimentKind::Coupling {
                c = c.with_override("eps", 0.1);
            }
            let report = run(&c).unwrap_or_else(|e| panic!("{}: {e}", kind.name()));
            assert_eq!(report.records.len() as u64, 3 * c.schedule.len() as u64);
            assert!(!report.rules.is_empty(), "{}", kind.name());
        }
    }

    #[test]
    fn structure_never_has_negative_gap() {
        let c = ExperimentConfig::new(ExperimentKind::FiniteVarianceStructure, vec![(300, 300)], 20, 5);
        let report = run(&c).unwrap();
        for r in &report.records {
            assert!(r.metrics["omega"] >= r.metrics["omega_prime"]);
            assert!(r.metrics["mono"] <= r.metrics["omega"]);
        }
        assert!(report.rule("min_gap").unwrap().passed);
    }

    #[test]
    fn budget_exhaustion_is_recorded_not_fatal() {
        // dense enough that the search must expand at least one node
        let c = ExperimentConfig::new(ExperimentKind::FiniteVarianceStructure, vec![(60, 60)], 4, 5)
            .with_law(SetSizeLaw::Deterministic { x_fixed: 12 })
            .with_override("exact_budget", 0.0);
        let report = run(&c).unwrap();
        assert_eq!(report.excluded, 4);
        assert!(report.records.iter().all(|r| r.excluded && r.note.is_some()));
        assert!(!report.passed);
        assert!(!report.rule("excluded_fraction").unwrap().passed);
    }

    #[test]
    fn coupling_single_bin() {
        let c = ExperimentConfig::new(ExperimentKind::Coupling, vec![(1000, 1)], 5, 3).with_override("eps", 0.1);
        let report = run(&c).unwrap();
        for r in &report.records {
            assert_eq!(r.metrics["gap"], 100.0);
        }
        assert_eq!(report.points[0].derived["p_equal"], 0.0);
    }

    #[test]
    fn powerlaw_needs_heavy_tail() {
        let c = ExperimentConfig::new(ExperimentKind::PowerlawClique, vec![(100, 100)], 1, 1)
            .with_law(SetSizeLaw::Deterministic { x_fixed: 2 });
        assert!(matches!(run(&c), Err(HarnessError::ConfigInvalid(_))));
    }

    #[test]
    fn sdr_sizes_must_fit() {
        let mut c = ExperimentConfig::new(ExperimentKind::SdrMaximization, vec![(0, 5)], 1, 1);
        assert!(run(&c).is_err());
        c.sizes = Some(vec![1, 2]);
        c = c.with_override("exhaustive", 1.0);
        let report = run(&c).unwrap();
        assert!(report.passed, "{:?}", report.rules);
        assert_eq!(report.points[0].derived["exhaustive_families"], 50.0);
    }
}
