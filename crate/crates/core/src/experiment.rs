//! Train/test experiment harness and result tables.
//!
//! Each trial draws a fresh arrival-time distribution, a training scenario
//! set and an independent test scenario set from it, optimizes a layout per
//! method and parameter, and scores every layout on the test set.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::cutting_plane::{run_cutting_plane, CutParams};
use crate::domain::{BayConfig, Layout, ScenarioSet};
use crate::error::{invalid_param, Error, Result};
use crate::formulation::{solve_direct, CvarProblem, SolvedLayout};
use crate::milp::{MipBackend, SolveParams, SolveStatus};
use crate::risk::{check_alpha, loss_distribution};
use crate::sampling::{sample_scenarios, DistributionSpec, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Direct,
    CuttingPlane,
    /// Single scheduled-order scenario with `alpha = 0`.
    DeterministicScheduled,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Direct, Method::CuttingPlane, Method::DeterministicScheduled];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::CuttingPlane => "cutting-plane",
            Method::DeterministicScheduled => "deterministic-scheduled",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid_param(format!("unknown method '{s}'")))
    }
}

/// Solves `problem` with `method`; the deterministic method ignores the
/// problem's scenarios and alpha.
pub fn solve_with_method(
    method: Method,
    problem: &CvarProblem,
    backend: &mut dyn MipBackend,
    solve: &SolveParams,
    cut: &CutParams,
) -> Result<SolvedLayout> {
    match method {
        Method::Direct => solve_direct(problem, backend, solve),
        Method::CuttingPlane => run_cutting_plane(problem, backend, cut).map(|(s, _)| s),
        Method::DeterministicScheduled => {
            solve_direct(&CvarProblem::deterministic(problem.config().clone()), backend, solve)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Label used in the tables, e.g. `4x4`.
    pub dataset: String,
    pub bay: BayConfig,
    pub alphas: Vec<f64>,
    pub train_sizes: Vec<usize>,
    pub test_size: usize,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub time_limit_seconds: f64,
    /// Relative gap of the cutting-plane method.
    pub epsilon: f64,
}

impl ExperimentConfig {
    /// Defaults for `bay`: alpha 0.75, 10^4 training and test samples, ten trials.
    pub fn new(dataset: impl Into<String>, bay: BayConfig) -> Self {
        Self {
            dataset: dataset.into(),
            bay,
            alphas: vec![0.75],
            train_sizes: vec![10_000],
            test_size: 10_000,
            trials: 10,
            methods: vec![Method::CuttingPlane, Method::DeterministicScheduled],
            seed: 0,
            time_limit_seconds: 3600.0,
            epsilon: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid_param("trials must be at least 1"));
        }
        if self.test_size == 0 {
            return Err(invalid_param("test size must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid_param("no methods selected"));
        }
        let needs_training = self.methods.iter().any(|&m| m != Method::DeterministicScheduled);
        if needs_training && (self.alphas.is_empty() || self.train_sizes.is_empty()) {
            return Err(invalid_param("alphas and train sizes must be non-empty"));
        }
        if self.train_sizes.contains(&0) {
            return Err(invalid_param("train sizes must be positive"));
        }
        for &alpha in &self.alphas {
            check_alpha(alpha)?;
        }
        if self.time_limit_seconds.is_nan() || self.time_limit_seconds <= 0.0 {
            return Err(invalid_param("time limit must be positive"));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(invalid_param("epsilon must be >= 0"));
        }
        Ok(())
    }

    fn distribution_seed(&self, trial: usize) -> RngSeed {
        RngSeed::new(self.seed, 3 * trial as u64)
    }

    fn train_seed(&self, trial: usize) -> RngSeed {
        RngSeed::new(self.seed, 3 * trial as u64 + 1)
    }

    fn test_seed(&self, trial: usize) -> RngSeed {
        RngSeed::new(self.seed, 3 * trial as u64 + 2)
    }
}

/// Test-set statistics of one layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestStatistics {
    pub mean: f64,
    pub q75: f64,
    pub q90: f64,
    pub q99: f64,
}

impl TestStatistics {
    pub fn of(layout: &Layout, test: &ScenarioSet) -> Result<Self> {
        let losses = loss_distribution(layout, test)?;
        Ok(Self {
            mean: losses.expected(),
            q75: losses.quantile(0.75)? as f64,
            q90: losses.quantile(0.90)? as f64,
            q99: losses.quantile(0.99)? as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub dataset: String,
    pub trial: usize,
    pub seed: u64,
    /// RNG stream of the trial's distribution.
    pub distribution_stream: u64,
    pub method: Method,
    /// `None` for the deterministic method.
    pub alpha: Option<f64>,
    pub train_size: Option<usize>,
    /// Training-set CV@R of the layout.
    pub objective: Option<f64>,
    pub test: Option<TestStatistics>,
    pub layout: Option<Layout>,
    pub status: String,
    pub wall_time_s: f64,
}

impl TrialResult {
    /// Parameter label of the table row.
    pub fn param(&self) -> String {
        match (self.alpha, self.train_size) {
            (Some(a), Some(n)) => format!("alpha={a};I={n}"),
            _ => "scheduled".into(),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.test.is_some()
    }

    /// Metric values in table order.
    pub fn metrics(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("objective", self.objective),
            ("test_mean", self.test.map(|t| t.mean)),
            ("test_q75", self.test.map(|t| t.q75)),
            ("test_q90", self.test.map(|t| t.q90)),
            ("test_q99", self.test.map(|t| t.q99)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub rows: Vec<TrialResult>,
}

impl ExperimentResults {
    pub fn all_failed(&self) -> bool {
        !self.rows.iter().any(TrialResult::succeeded)
    }
}

/// Runs every trial, recording failures as rows instead of aborting.
pub fn run_experiment(config: &ExperimentConfig, backend: &mut dyn MipBackend) -> Result<ExperimentResults> {
    config.validate()?;
    let r = config.bay.num_classes();
    let solve = SolveParams::default().with_time_limit(config.time_limit_seconds);
    let cut = CutParams {
        epsilon: config.epsilon,
        time_limit_seconds: config.time_limit_seconds,
        ..CutParams::default()
    };
    let mut rows = Vec::new();
    for trial in 0..config.trials {
        let spec = DistributionSpec::random(r, &mut config.distribution_seed(trial).rng())?;
        let test = sample_scenarios(&spec, config.test_size, &mut config.test_seed(trial).rng())?;
        let mut runs: Vec<(Method, Option<f64>, Option<usize>)> = Vec::new();
        for &method in &config.methods {
            if method == Method::DeterministicScheduled {
                runs.push((method, None, None));
                continue;
            }
            for &n in &config.train_sizes {
                for &alpha in &config.alphas {
                    runs.push((method, Some(alpha), Some(n)));
                }
            }
        }
        let mut train_sets: BTreeMap<usize, ScenarioSet> = BTreeMap::new();
        for (method, alpha, n) in runs {
            let start = Instant::now();
            let train = match n {
                Some(n) => match train_sets.get(&n) {
                    Some(set) => set.clone(),
                    None => {
                        let set = sample_scenarios(&spec, n, &mut config.train_seed(trial).rng())?;
                        train_sets.insert(n, set.clone());
                        set
                    }
                },
                None => ScenarioSet::scheduled(r),
            };
            let problem = CvarProblem::new(config.bay.clone(), train, alpha.unwrap_or(0.0))?;
            let outcome = solve_with_method(method, &problem, backend, &solve, &cut)
                .and_then(|s| TestStatistics::of(&s.layout, &test).map(|t| (s, t)));
            let mut row = TrialResult {
                dataset: config.dataset.clone(),
                trial,
                seed: config.seed,
                distribution_stream: config.distribution_seed(trial).stream,
                method,
                alpha,
                train_size: n,
                objective: None,
                test: None,
                layout: None,
                status: String::new(),
                wall_time_s: 0.0,
            };
            match outcome {
                Ok((solved, stats)) => {
                    row.objective = Some(solved.objective);
                    row.test = Some(stats);
                    row.status = solved.status.to_string();
                    row.layout = Some(solved.layout);
                    row.wall_time_s = solved.wall_time_s;
                }
                Err(e) => {
                    warn!("trial {trial} {method} {}: {e}", row.param());
                    row.status = format!("{}: {e}", SolveStatus::Error);
                    row.wall_time_s = start.elapsed().as_secs_f64();
                }
            }
            info!(
                "trial {trial} {method} {}: {} objective {:?} test mean {:?} ({:.2}s)",
                row.param(),
                row.status,
                row.objective,
                row.test.map(|t| t.mean),
                row.wall_time_s
            );
            rows.push(row);
        }
    }
    Ok(ExperimentResults {
        config: config.clone(),
        rows,
    })
}

/// Mean and standard error (`s / sqrt(n)`, 0 for one value).
pub fn mean_and_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

/// One aggregated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub method: Method,
    pub param: String,
    pub metric: String,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub n_trials: usize,
}

/// Named metric values of one trial, the input of [`aggregate`].
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub dataset: String,
    pub method: Method,
    pub param: String,
    pub values: Vec<(String, Option<f64>)>,
}

impl From<&TrialResult> for MetricRow {
    fn from(r: &TrialResult) -> Self {
        Self {
            dataset: r.dataset.clone(),
            method: r.method,
            param: r.param(),
            values: r.metrics().iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

/// Aggregates metric rows per dataset, method, parameter and metric, in
/// order of first appearance.
pub fn aggregate(rows: &[MetricRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, Method, String, String)> = Vec::new();
    let mut values: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for row in rows {
        for (metric, value) in &row.values {
            let key = (row.dataset.clone(), row.method, row.param.clone(), metric.clone());
            let idx = match keys.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    keys.push(key);
                    keys.len() - 1
                }
            };
            let cell = values.entry(idx).or_default();
            if let Some(v) = value.filter(|v| v.is_finite()) {
                cell.push(v);
            }
        }
    }
    keys.into_iter()
        .enumerate()
        .map(|(i, (dataset, method, param, metric))| {
            let cell = &values[&i];
            let stats = mean_and_stderr(cell);
            AggregateRow {
                dataset,
                method,
                param,
                metric,
                mean: stats.map(|s| s.0),
                stderr: stats.map(|s| s.1),
                n_trials: cell.len(),
            }
        })
        .collect()
}

/// Rendered result tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTables {
    /// `dataset,method,param,metric,mean,stderr,n_trials`.
    pub csv: String,
    /// One line per method and parameter, cells `mean (± stderr)`.
    pub markdown: String,
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v}"))
}

pub fn report_tables(rows: &[MetricRow]) -> ReportTables {
    let aggregated = aggregate(rows);
    let mut csv = String::from("dataset,method,param,metric,mean,stderr,n_trials\n");
    for a in &aggregated {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            a.dataset,
            a.method,
            a.param,
            a.metric,
            cell(a.mean),
            cell(a.stderr),
            a.n_trials
        );
    }

    let mut metrics: Vec<&str> = Vec::new();
    let mut lines: Vec<(&str, Method, &str)> = Vec::new();
    for a in &aggregated {
        if !metrics.contains(&a.metric.as_str()) {
            metrics.push(&a.metric);
        }
        let line = (a.dataset.as_str(), a.method, a.param.as_str());
        if !lines.contains(&line) {
            lines.push(line);
        }
    }
    let mut md = String::from("| dataset | method | param |");
    for m in &metrics {
        let _ = write!(md, " {m} |");
    }
    md.push_str("\n|---|---|---|");
    md.push_str(&"---|".repeat(metrics.len()));
    md.push('\n');
    for (dataset, method, param) in lines {
        let _ = write!(md, "| {dataset} | {method} | {param} |");
        for m in &metrics {
            let found = aggregated
                .iter()
                .find(|a| a.dataset == dataset && a.method == method && a.param == param && a.metric == *m);
            match found.and_then(|a| a.mean.zip(a.stderr)) {
                Some((mean, se)) => {
                    let _ = write!(md, " {mean:.3} (± {se:.3}) |");
                }
                None => md.push_str(" n/a |"),
            }
        }
        md.push('\n');
    }
    ReportTables { csv, markdown: md }
}

fn fmt_opt(x: Option<f64>) -> String {
    cell(x)
}

/// Per-trial rows without timing, stable across runs with the same seed.
pub fn trials_csv(rows: &[TrialResult]) -> Result<String> {
    let mut out = String::from(
        "dataset,trial,seed,distribution_stream,method,alpha,train_size,objective,test_mean,test_q75,test_q90,test_q99,status,layout\n",
    );
    for r in rows {
        let layout = match &r.layout {
            Some(l) => serde_json::to_string(&l.stacks())?,
            None => String::new(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},\"{}\",\"{}\"",
            r.dataset,
            r.trial,
            r.seed,
            r.distribution_stream,
            r.method,
            fmt_opt(r.alpha),
            r.train_size.map_or_else(String::new, |n| n.to_string()),
            fmt_opt(r.objective),
            fmt_opt(r.test.map(|t| t.mean)),
            fmt_opt(r.test.map(|t| t.q75)),
            fmt_opt(r.test.map(|t| t.q90)),
            fmt_opt(r.test.map(|t| t.q99)),
            r.status.replace('"', "'"),
            layout
        );
    }
    Ok(out)
}

/// Wall times per trial plus their aggregate.
pub fn timings_csv(rows: &[TrialResult]) -> String {
    let mut out = String::from("dataset,trial,method,param,status,wall_time_s\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},\"{}\",{:.6}",
            r.dataset,
            r.trial,
            r.method,
            r.param(),
            r.status.replace('"', "'"),
            r.wall_time_s
        );
    }
    out
}

/// Writes `trials.csv`, `aggregate.csv`, `aggregate.md`, `timings.csv` and
/// `timings_aggregate.csv` into `dir`.
pub fn write_outputs(dir: &Path, results: &ExperimentResults) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trials.csv"), trials_csv(&results.rows)?)?;
    let metric_rows: Vec<MetricRow> = results.rows.iter().map(MetricRow::from).collect();
    let tables = report_tables(&metric_rows);
    fs::write(dir.join("aggregate.csv"), tables.csv)?;
    fs::write(dir.join("aggregate.md"), tables.markdown)?;
    fs::write(dir.join("timings.csv"), timings_csv(&results.rows))?;
    let time_rows: Vec<MetricRow> = results
        .rows
        .iter()
        .map(|r| MetricRow {
            dataset: r.dataset.clone(),
            method: r.method,
            param: r.param(),
            values: vec![("wall_time_s".into(), Some(r.wall_time_s))],
        })
        .collect();
    fs::write(dir.join("timings_aggregate.csv"), report_tables(&time_rows).csv)?;
    Ok(())
}
