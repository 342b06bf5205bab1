//! Monte Carlo comparison of the schemes over random scenarios.
//!
//! Replication `r` samples its scenario with seed `seed + r`, so results do
//! not depend on how replications are spread over threads. Means are
//! pairwise sums over replications in index order and error bars are
//! standard errors of the mean.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{compare_schemes_with, CompareOptions, ComparisonRow};
use crate::error::{Error, Result};
use crate::outcome::Scheme;
use crate::quantity_competition::QceOptions;
use crate::scalar::pairwise_sum;
use crate::scenario::{sample_scenario, Scenario, ScenarioConfig, TruncNormalSpec};

/// Which scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Mean LTE downlink capacity.
    LteCapacityMean,
    /// Probability that a user is on LTE.
    RhoLte,
    /// LTE operating cost as a fraction of the 3G one: both the mean and
    /// the variance of the LTE cost are the 3G values scaled by this ratio.
    CostRatio,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::LteCapacityMean => "lte_capacity_mean",
            SweepParameter::RhoLte => "rho_lte",
            SweepParameter::CostRatio => "cost_ratio",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Experiment description. The scenario distribution fields sit at the top
/// level next to `replications` and `seed`; anything omitted takes its
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub replications: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// Schemes to run; all of them when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schemes: Option<Vec<Scheme>>,
    pub allow_nonconvex: bool,
    /// Mean-value iterations allowed per quantity equilibrium before
    /// falling back to bisection.
    pub qce_max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            replications: 200,
            seed: 0,
            scenario: ScenarioConfig::default(),
            sweep: None,
            schemes: None,
            allow_nonconvex: false,
            qce_max_iter: 10_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        // Flattened fields cannot reject unknown keys on their own.
        let known = serde_json::to_value(ExperimentConfig {
            sweep: Some(Sweep { parameter: SweepParameter::RhoLte, values: Vec::new() }),
            schemes: Some(Vec::new()),
            ..Default::default()
        })?;
        if let (Some(given), Some(known)) = (value.as_object(), known.as_object()) {
            if let Some(key) = given.keys().find(|k| !known.contains_key(*k)) {
                return Err(Error::config(format!("unknown experiment field `{key}`")));
            }
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if self.seed.checked_add(self.replications as u64 - 1).is_none() {
            return Err(Error::config("seed + replications overflows"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep has no values"));
            }
            for &v in &sweep.values {
                let ok = match sweep.parameter {
                    SweepParameter::LteCapacityMean => v.is_finite() && v > 0.0,
                    SweepParameter::RhoLte | SweepParameter::CostRatio => (0.0..=1.0).contains(&v),
                };
                if !ok {
                    return Err(Error::config(format!("sweep value {v} is out of range for {}", sweep.parameter.name())));
                }
            }
        }
        if matches!(&self.schemes, Some(v) if v.is_empty()) {
            return Err(Error::config("scheme list is empty"));
        }
        for (_, cfg) in self.points() {
            cfg.validate()?;
        }
        Ok(())
    }

    /// The scenario configuration at each sweep value, in file order.
    pub fn points(&self) -> Vec<(Option<f64>, ScenarioConfig)> {
        let Some(sweep) = &self.sweep else {
            return vec![(None, self.scenario.clone())];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut cfg = self.scenario.clone();
                match sweep.parameter {
                    SweepParameter::LteCapacityMean => cfg.capacity_lte.mu = v,
                    SweepParameter::RhoLte => cfg.rho_lte = v,
                    SweepParameter::CostRatio => {
                        cfg.op_cost_lte = TruncNormalSpec::new(v * cfg.op_cost_3g.mu, v * cfg.op_cost_3g.kappa_sq)
                    }
                }
                (Some(v), cfg)
            })
            .collect()
    }

    pub fn schemes(&self) -> Vec<Scheme> {
        self.schemes.clone().unwrap_or_else(|| Scheme::ALL.to_vec())
    }
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
}

impl Stat {
    /// `None` when there are no samples. A single sample has zero error.
    pub fn of(xs: &[f64]) -> Option<Stat> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = pairwise_sum(xs) / n as f64;
        let sem = if n > 1 {
            let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, sem, n })
    }
}

pub const METRICS: [&str; 6] = ["profit_total", "payoff", "welfare", "profit_vs_ntp", "payoff_vs_ntp", "welfare_vs_ntp"];

#[derive(Debug, Clone, Serialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub runs: usize,
    /// Replications where this scheme failed.
    pub failures: usize,
    /// Replications left out of the averages because some scheme failed.
    pub excluded: usize,
    /// One entry per name in [`METRICS`].
    pub metrics: Vec<Option<Stat>>,
    /// First few failure messages.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl SchemeSummary {
    pub fn metric(&self, name: &str) -> Option<Stat> {
        METRICS.iter().position(|&m| m == name).and_then(|k| self.metrics[k])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: Option<f64>,
    pub schemes: Vec<SchemeSummary>,
}

impl SweepPoint {
    pub fn scheme(&self, k: Scheme) -> Option<&SchemeSummary> {
        self.schemes.iter().find(|s| s.scheme == k)
    }

    /// Mean of `metric` under `a` divided by its mean under `b`.
    pub fn ratio_of_means(&self, a: Scheme, b: Scheme, metric: &str) -> Option<f64> {
        let top = self.scheme(a)?.metric(metric)?.mean;
        let bottom = self.scheme(b)?.metric(metric)?.mean;
        (bottom != 0.0).then(|| top / bottom)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub points: Vec<SweepPoint>,
    /// Replications attempted across all points, and those excluded
    /// because some scheme failed.
    pub runs: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

const KEPT_ERRORS: usize = 5;

fn metric_values(row: &ComparisonRow<f64>) -> Option<[Option<f64>; 6]> {
    let o = row.outcome.as_ref()?;
    Some([Some(o.profit_total), Some(o.payoff), Some(o.welfare), row.profit_vs_ntp, row.payoff_vs_ntp, row.welfare_vs_ntp])
}

/// Runs every replication at every sweep point.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let schemes = cfg.schemes();
    let opts = CompareOptions {
        schemes: schemes.clone(),
        allow_nonconvex: cfg.allow_nonconvex,
        qce: QceOptions { max_iter: cfg.qce_max_iter, ..Default::default() },
    };
    let mut points = Vec::new();
    let (mut runs, mut failures) = (0, 0);
    for (value, scenario_cfg) in cfg.points() {
        let tables: Vec<Result<Vec<ComparisonRow<f64>>, String>> = (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let s: Scenario<f64> = sample_scenario(&scenario_cfg, cfg.seed + r as u64).map_err(|e| e.to_string())?;
                Ok(compare_schemes_with(&s, &opts))
            })
            .collect();
        // A replication contributes only if every scheme succeeded, so all
        // schemes are averaged over the same scenarios.
        let complete: Vec<bool> =
            tables.iter().map(|t| t.as_ref().is_ok_and(|rows| rows.iter().all(|r| r.outcome.is_some()))).collect();
        let mut summaries = Vec::new();
        for (k, &scheme) in schemes.iter().enumerate() {
            let mut columns: Vec<Vec<f64>> = vec![Vec::new(); METRICS.len()];
            let mut summary = SchemeSummary {
                scheme,
                runs: cfg.replications,
                failures: 0,
                excluded: 0,
                metrics: Vec::new(),
                errors: Vec::new(),
            };
            for (table, &ok) in tables.iter().zip(&complete) {
                let err = match table {
                    Ok(rows) => rows[k].error.clone(),
                    Err(e) => Some(format!("sampling: {e}")),
                };
                if let Some(e) = err {
                    summary.failures += 1;
                    if summary.errors.len() < KEPT_ERRORS {
                        summary.errors.push(e);
                    }
                }
                if !ok {
                    summary.excluded += 1;
                    continue;
                }
                let vals = table.as_ref().ok().and_then(|rows| metric_values(&rows[k])).expect("complete replication");
                for (col, v) in columns.iter_mut().zip(vals) {
                    col.extend(v);
                }
            }
            summary.metrics = columns.iter().map(|c| Stat::of(c)).collect();
            summaries.push(summary);
        }
        runs += cfg.replications;
        failures += complete.iter().filter(|&&ok| !ok).count();
        points.push(SweepPoint { value, schemes: summaries });
    }
    let mut warnings = Vec::new();
    if failures * 100 > runs {
        let msg = format!("{failures} of {runs} replications had a failing scheme and were excluded");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(ExperimentResults { config: cfg.clone(), points, runs, failures, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    /// Seeds used at every sweep point, as `[first, last]`.
    seeds: [u64; 2],
    runs: usize,
    failures: usize,
    error_bars: &'static str,
    warnings: &'a [String],
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Writes `results.csv` (or `results.json`) and `manifest.json` into `dir`
/// and returns their paths. The output depends only on the results, so a
/// fixed configuration gives byte-identical files.
pub fn emit_results(results: &ExperimentResults, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let data = match format {
        OutputFormat::Csv => {
            let path = dir.join("results.csv");
            fs::write(&path, results_csv(results)?).map_err(io_error(&path))?;
            path
        }
        OutputFormat::Json => {
            let path = dir.join("results.json");
            fs::write(&path, serde_json::to_string_pretty(&results.points)? + "\n").map_err(io_error(&path))?;
            path
        }
    };
    let cfg = &results.config;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seeds: [cfg.seed, cfg.seed + cfg.replications as u64 - 1],
        runs: results.runs,
        failures: results.failures,
        error_bars: "standard error of the mean",
        warnings: &results.warnings,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_error(&path))?;
    Ok(vec![data, path])
}

/// Wide table: one row per sweep value and scheme, a mean and a standard
/// error column per metric.
pub fn results_csv(results: &ExperimentResults) -> Result<String> {
    let parameter = results.config.sweep.as_ref().map_or("", |s| s.parameter.name());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "sweep_parameter".to_string(),
        "sweep_value".into(),
        "scheme".into(),
        "runs".into(),
        "failures".into(),
        "excluded".into(),
    ];
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_sem"));
    }
    let csv_err = |e: csv::Error| Error::Io { path: "results.csv".into(), source: e.into() };
    w.write_record(&header).map_err(csv_err)?;
    for point in &results.points {
        for s in &point.schemes {
            let mut rec = vec![
                parameter.to_string(),
                point.value.map(|v| v.to_string()).unwrap_or_default(),
                s.scheme.name().to_string(),
                s.runs.to_string(),
                s.failures.to_string(),
                s.excluded.to_string(),
            ];
            for stat in &s.metrics {
                match stat {
                    Some(st) => {
                        rec.push(st.mean.to_string());
                        rec.push(st.sem.to_string());
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io { path: "results.csv".into(), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::compare_schemes;

    fn small(reps: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig { replications: reps, seed: 7, ..Default::default() };
        cfg.scenario.users = 4;
        cfg
    }

    #[test]
    fn config_from_flat_json() {
        let cfg = ExperimentConfig::from_json(
            r#"{"replications": 3, "seed": 9, "users": 6, "rho_lte": 0.5,
                "sweep": {"parameter": "cost_ratio", "values": [0.25, 1.0]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.scenario.users, 6);
        let pts = cfg.points();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].1.op_cost_lte, TruncNormalSpec::new(87.5, 10.0));
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"sweep": {"parameter": "rho_lte", "values": [1.5]}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"replications": 0}"#).is_err());
    }

    #[test]
    fn sem_of_known_samples() {
        let st = Stat::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(st.mean, 2.5);
        assert!((st.sem - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[3.0]).unwrap().sem, 0.0);
        assert!(Stat::of(&[]).is_none());
    }

    #[test]
    fn one_replication_matches_direct_comparison() {
        let cfg = small(1);
        let res = run_experiment(&cfg).unwrap();
        let s: Scenario<f64> = sample_scenario(&cfg.scenario, cfg.seed).unwrap();
        let rows = compare_schemes(&s);
        for row in rows {
            let summary = res.points[0].scheme(row.scheme).unwrap();
            match row.outcome {
                Some(o) if summary.excluded == 0 => {
                    assert_eq!(summary.metric("profit_total").unwrap().mean, o.profit_total)
                }
                Some(_) => assert_eq!(summary.excluded, 1),
                None => assert_eq!(summary.failures, 1),
            }
        }
    }

    #[test]
    fn output_is_deterministic() {
        let mut cfg = small(3);
        cfg.schemes = Some(vec![Scheme::Coop, Scheme::Ntp]);
        cfg.sweep = Some(Sweep { parameter: SweepParameter::RhoLte, values: vec![0.2, 0.8] });
        let a = results_csv(&run_experiment(&cfg).unwrap()).unwrap();
        let b = results_csv(&run_experiment(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 5);
        let dir = tempfile::tempdir().unwrap();
        let files = emit_results(&run_experiment(&cfg).unwrap(), dir.path(), OutputFormat::Csv).unwrap();
        assert_eq!(fs::read_to_string(&files[0]).unwrap(), a);
        let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files[1]).unwrap()).unwrap();
        assert_eq!(manifest["seeds"], serde_json::json!([7, 9]));
    }
}
