//! Seeded Monte Carlo runner.
//!
//! A run is a list of `(n, m)` points, each with `trials` independent trials.
//! Trial `i` of point `p` uses a seed hashed from the master seed, the
//! experiment name, `p` and `i`, and results are collected in trial order, so
//! a report does not depend on the number of worker threads. Timing metrics
//! (runtime-scaling only) are the exception.

mod experiments;

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufReader;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ballsbins::BallsError;
use crate::distributions::{LawError, SetSizeLaw};
use crate::instance::{read_instance, InstanceError, IntersectionInstance};
use crate::oracles::OracleError;
use crate::theory::TheoryError;

pub use experiments::ExperimentKind;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Balls(#[from] BallsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// `(n, m)` points; for `coupling` these are `(N, m)` balls and bins.
    pub schedule: Vec<(u64, u64)>,
    /// Defaults per experiment when absent (see [`ExperimentKind::default_law`]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<SetSizeLaw>,
    pub trials: u64,
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub worker_count: usize,
    /// Thresholds and knobs; unknown keys are rejected.
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    /// Set sizes for `sdr-maximization`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    /// Replay one fixed instance in every trial instead of sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_file: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, schedule: Vec<(u64, u64)>, trials: u64, master_seed: u64) -> Self {
        Self {
            experiment,
            schedule,
            law: None,
            trials,
            master_seed,
            worker_count: 1,
            overrides: BTreeMap::new(),
            sizes: None,
            instance_file: None,
        }
    }

    pub fn with_law(mut self, law: SetSizeLaw) -> Self {
        self.law = Some(law);
        self
    }

    pub fn with_override(mut self, key: &str, value: f64) -> Self {
        self.overrides.insert(key.to_string(), value);
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.worker_count = workers;
        self
    }

    pub fn law(&self) -> SetSizeLaw {
        self.law.clone().unwrap_or_else(|| self.experiment.default_law())
    }

    /// Value of a knob: the override if present, else the experiment default.
    pub fn knob(&self, key: &str) -> f64 {
        self.overrides
            .get(key)
            .copied()
            .or_else(|| self.experiment.knob_default(key))
            .unwrap_or_else(|| panic!("unknown knob {key}"))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::ConfigInvalid(msg));
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        if self.schedule.is_empty() {
            return bad("schedule must not be empty".into());
        }
        if self.worker_count < 1 {
            return bad("worker_count must be at least 1".into());
        }
        if let Some(&(n, m)) = self
            .schedule
            .iter()
            .find(|&&(n, m)| m < 1 || (n < 1 && self.experiment.needs_vertices()))
        {
            return bad(format!("schedule point ({n}, {m}) needs n, m >= 1"));
        }
        for (key, value) in &self.overrides {
            if self.experiment.knob_default(key).is_none() {
                let known: Vec<_> = self.experiment.knobs().iter().map(|(k, _)| *k).collect();
                return bad(format!("unknown override {key:?}; known: {known:?}"));
            }
            if !value.is_finite() {
                return bad(format!("override {key} must be finite"));
            }
        }
        self.law().validate()?;
        if self.instance_file.is_some() && !self.experiment.uses_instances() {
            return bad(format!("{} does not replay instances", self.experiment.name()));
        }
        self.experiment.validate(self)
    }
}

/// Loads a JSON config from disk.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, HarnessError> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub point: usize,
    pub n: u64,
    pub m: u64,
    pub trial: u64,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub excluded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub point: usize,
    pub n: u64,
    pub m: u64,
    pub metric: String,
    pub count: u64,
    pub mean: f64,
    /// sample variance (divide by `count - 1`); 0 for a single value
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: usize,
    pub n: u64,
    pub m: u64,
    /// theory predictions for this point
    pub predictions: BTreeMap<String, f64>,
    /// statistics that need all trials of the point at once
    pub derived: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub name: String,
    /// absent when the statistic is undefined (e.g. no usable trials)
    pub value: Option<f64>,
    pub comparison: String,
    pub threshold: f64,
    pub passed: bool,
}

impl RuleOutcome {
    pub fn at_most(name: &str, value: Option<f64>, threshold: f64) -> Self {
        Self::build(name, value, "<=", threshold, |v| v <= threshold)
    }

    pub fn at_least(name: &str, value: Option<f64>, threshold: f64) -> Self {
        Self::build(name, value, ">=", threshold, |v| v >= threshold)
    }

    fn build(name: &str, value: Option<f64>, comparison: &str, threshold: f64, ok: impl Fn(f64) -> bool) -> Self {
        let value = value.filter(|v| v.is_finite());
        Self {
            name: name.to_string(),
            value,
            comparison: comparison.to_string(),
            threshold,
            passed: value.is_some_and(ok),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// the claim this experiment checks
    pub claim: String,
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
    pub points: Vec<PointSummary>,
    pub excluded: u64,
    pub rules: Vec<RuleOutcome>,
    pub passed: bool,
}

impl ExperimentReport {
    /// Aggregate of `metric` at `point`, if any trial recorded it.
    pub fn aggregate(&self, point: usize, metric: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.point == point && a.metric == metric)
    }

    pub fn rule(&self, name: &str) -> Option<&RuleOutcome> {
        self.rules.iter().find(|r| r.name == name)
    }

    /// Values of `metric` over the included trials of `point`.
    pub fn values(&self, point: usize, metric: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.point == point && !r.excluded)
            .filter_map(|r| r.metrics.get(metric).copied())
            .collect()
    }
}

/// Seed of trial `trial` at `point`: the first 8 bytes of
/// SHA-256(master_seed, experiment, point, trial).
pub fn derive_seed(master_seed: u64, experiment: &str, point: usize, trial: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((experiment.len() as u64).to_le_bytes());
    h.update(experiment.as_bytes());
    h.update((point as u64).to_le_bytes());
    h.update(trial.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Result of one trial before it is stamped with its coordinates.
#[derive(Debug, Clone, Default)]
pub(crate) struct TrialOutcome {
    pub metrics: BTreeMap<String, f64>,
    pub excluded: bool,
    pub note: Option<String>,
}

impl TrialOutcome {
    pub fn set(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub fn excluded(note: String) -> Self {
        Self {
            metrics: BTreeMap::new(),
            excluded: true,
            note: Some(note),
        }
    }
}

/// Shared, read-only state for one run.
pub(crate) struct RunContext<'a> {
    pub config: &'a ExperimentConfig,
    pub law: SetSizeLaw,
    pub replay: Option<IntersectionInstance>,
}

/// Runs the configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let replay = match &config.instance_file {
        Some(path) => {
            let inst = read_instance(BufReader::new(std::fs::File::open(path)?))?;
            if config
                .schedule
                .iter()
                .any(|&(n, m)| (n, m) != (inst.n() as u64, inst.m() as u64))
            {
                return Err(HarnessError::ConfigInvalid(format!(
                    "schedule must match the replayed instance ({}, {})",
                    inst.n(),
                    inst.m()
                )));
            }
            Some(inst)
        }
        None => None,
    };
    let ctx = RunContext {
        config,
        law: config.law(),
        replay,
    };
    let kind = config.experiment;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_count)
        .build()
        .map_err(|e| HarnessError::ConfigInvalid(format!("cannot start {} workers: {e}", config.worker_count)))?;

    let mut records = Vec::new();
    let mut points = Vec::new();
    for (p, &(n, m)) in config.schedule.iter().enumerate() {
        let seeds: Vec<u64> = (0..config.trials)
            .map(|t| derive_seed(config.master_seed, kind.name(), p, t))
            .collect();
        let run_trial = |seed: u64| kind.trial(&ctx, n, m, seed);
        let outcomes: Vec<Result<TrialOutcome, HarnessError>> = if kind.is_timed() {
            // timings are taken one trial at a time so trials do not compete
            seeds.iter().map(|&s| run_trial(s)).collect()
        } else {
            pool.install(|| seeds.par_iter().map(|&s| run_trial(s)).collect())
        };
        let start = records.len();
        for (t, (outcome, seed)) in outcomes.into_iter().zip(&seeds).enumerate() {
            let outcome = outcome?;
            records.push(TrialRecord {
                point: p,
                n,
                m,
                trial: t as u64,
                seed: *seed,
                metrics: outcome.metrics,
                excluded: outcome.excluded,
                note: outcome.note,
            });
        }
        points.push(PointSummary {
            point: p,
            n,
            m,
            predictions: kind.predictions(&ctx, n, m)?,
            derived: kind.derive(&ctx, n, m, &records[start..]),
        });
    }

    let aggregates = compute_aggregates(&records);
    let excluded = records.iter().filter(|r| r.excluded).count() as u64;
    let mut rules = kind.rules(&ctx, &points, &aggregates, &records);
    let total = records.len() as f64;
    rules.push(RuleOutcome::at_most(
        "excluded_fraction",
        Some(excluded as f64 / total),
        config.knob("max_excluded_fraction"),
    ));
    let passed = rules.iter().all(|r| r.passed);
    Ok(ExperimentReport {
        claim: kind.claim().to_string(),
        config: config.clone(),
        records,
        aggregates,
        points,
        excluded,
        rules,
        passed,
    })
}

/// Mean, sample variance and normal 95% interval of every metric at every
/// point, over included trials.
pub fn compute_aggregates(records: &[TrialRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(usize, String), (u64, u64, Vec<f64>)> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.excluded) {
        for (k, &v) in &r.metrics {
            groups
                .entry((r.point, k.clone()))
                .or_insert_with(|| (r.n, r.m, Vec::new()))
                .2
                .push(v);
        }
    }
    groups
        .into_iter()
        .map(|((point, metric), (n, m, values))| {
            let (mean, variance) = mean_and_variance(&values);
            let half = 1.96 * (variance / values.len() as f64).sqrt();
            Aggregate {
                point,
                n,
                m,
                metric,
                count: values.len() as u64,
                mean,
                variance,
                ci_low: mean - half,
                ci_high: mean + half,
            }
        })
        .collect()
}

/// Mean and sample variance; the variance of fewer than two values is 0.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (k - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(HarnessError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Serializes a report: the full nested report as JSON, or one CSV row per
/// trial (fixed columns, then every metric name in sorted order).
pub fn emit(report: &ExperimentReport, format: Format) -> Result<Vec<u8>, HarnessError> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report)?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let metrics: BTreeSet<&str> = report
                .records
                .iter()
                .flat_map(|r| r.metrics.keys().map(String::as_str))
                .collect();
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["point", "n", "m", "trial", "seed", "excluded", "note"];
            header.extend(metrics.iter().copied());
            w.write_record(&header)?;
            for r in &report.records {
                let mut row = vec![
                    r.point.to_string(),
                    r.n.to_string(),
                    r.m.to_string(),
                    r.trial.to_string(),
                    r.seed.to_string(),
                    r.excluded.to_string(),
                    r.note.clone().unwrap_or_default(),
                ];
                row.extend(
                    metrics
                        .iter()
                        .map(|k| r.metrics.get(*k).map(|v| v.to_string()).unwrap_or_default()),
                );
                w.write_record(&row)?;
            }
            w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::new(ExperimentKind::DegreeMoments, vec![(300, 300), (500, 500)], 6, 42)
            .with_law(SetSizeLaw::Deterministic { x_fixed: 3 })
    }

    #[test]
    fn seeds_differ_by_every_coordinate() {
        let base = derive_seed(1, "coupling", 0, 0);
        assert_eq!(base, derive_seed(1, "coupling", 0, 0));
        assert_ne!(base, derive_seed(2, "coupling", 0, 0));
        assert_ne!(base, derive_seed(1, "tv-maxload", 0, 0));
        assert_ne!(base, derive_seed(1, "coupling", 1, 0));
        assert_ne!(base, derive_seed(1, "coupling", 0, 1));
    }

    #[test]
    fn config_validation() {
        assert!(small_config().validate().is_ok());
        let mut c = small_config();
        c.trials = 0;
        assert!(matches!(c.validate(), Err(HarnessError::ConfigInvalid(_))));
        let mut c = small_config();
        c.schedule.clear();
        assert!(c.validate().is_err());
        assert!(small_config().with_workers(0).validate().is_err());
        assert!(small_config().with_override("no_such_knob", 1.0).validate().is_err());
        assert!(small_config().with_override("mean_tol", 0.1).validate().is_ok());
        let c = small_config().with_law(SetSizeLaw::Binomial { p: 2.0 });
        assert!(matches!(c.validate(), Err(HarnessError::Law(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let text = r#"{
            "experiment": "degree-moments",
            "schedule": [[100, 100]],
            "law": {"kind": "Deterministic", "x_fixed": 3},
            "trials": 2,
            "master_seed": 7,
            "overrides": {"mean_tol": 0.2}
        }"#;
        let c: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.worker_count, 1);
        assert_eq!(c.knob("mean_tol"), 0.2);
        assert_eq!(c.knob("var_tol"), 0.10);
        let again: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn aggregates_match_records() {
        let report = run(&small_config()).unwrap();
        assert_eq!(report.records.len(), 12);
        assert_eq!(compute_aggregates(&report.records), report.aggregates);
        let a = report.aggregate(1, "mean_degree").unwrap();
        let values = report.values(1, "mean_degree");
        assert_eq!(a.count, 6);
        let mean = values.iter().sum::<f64>() / 6.0;
        assert!((a.mean - mean).abs() < 1e-12);
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((a.variance - var).abs() < 1e-12);
        assert!(a.ci_low <= a.mean && a.mean <= a.ci_high);
    }

    #[test]
    fn reports_are_deterministic_and_worker_invariant() {
        let one = emit(&run(&small_config()).unwrap(), Format::Json).unwrap();
        let again = emit(&run(&small_config()).unwrap(), Format::Json).unwrap();
        let four = run(&small_config().with_workers(4)).unwrap();
        assert_eq!(one, again);
        let mut four = four;
        four.config.worker_count = 1;
        assert_eq!(one, emit(&four, Format::Json).unwrap());
    }

    #[test]
    fn csv_shape() {
        let mut report = run(&ExperimentConfig::new(
            ExperimentKind::PairMultiplicity,
            vec![(50, 50)],
            3,
            1,
        ))
        .unwrap();
        let text = String::from_utf8(emit(&report, Format::Csv).unwrap()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("point,n,m,trial,seed,excluded,note,"));
        report.records.clear();
        let text = String::from_utf8(emit(&report, Format::Csv).unwrap()).unwrap();
        assert_eq!(text, "point,n,m,trial,seed,excluded,note\n");
    }

    #[test]
    fn json_round_trip_is_idempotent() {
        let report = run(&small_config()).unwrap();
        let first = emit(&report, Format::Json).unwrap();
        let parsed: ExperimentReport = serde_json::from_slice(&first).unwrap();
        assert_eq!(parsed, report);
        assert_eq!(emit(&parsed, Format::Json).unwrap(), first);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("json".parse::<Format>().unwrap(), Format::Json);
        assert!(matches!(
            "xml".parse::<Format>(),
            Err(HarnessError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn rule_outcomes() {
        assert!(RuleOutcome::at_most("x", Some(1.0), 1.0).passed);
        assert!(!RuleOutcome::at_least("x", Some(0.5), 1.0).passed);
        let undefined = RuleOutcome::at_most("x", Some(f64::NAN), 1.0);
        assert_eq!(undefined.value, None);
        assert!(!undefined.passed);
    }
}
