//! Benchmark matrix: environment x algorithm x budget x seed.
//!
//! Every cell derives its own random streams from the global seed and its
//! coordinates, so cells can run in any order on any number of threads and
//! the data files come out the same. Wall-clock columns are the only
//! exception; [`BenchmarkPlan::record_timing`] turns them off for
//! byte-for-byte comparisons.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{exact_policy_value, fitted_dp, true_rates};
use crate::env::{make_env, EnvConfig};
use crate::eval::{aggregate_runs, monte_carlo_eval, EvalError, EvalReport, RunResult};
use crate::policy::Policy;
use crate::rl::{train_policy_gradient, train_q_learning, TrainSpec};
use crate::rng::{derive_seed, label, stream};

pub const DEFAULT_BUDGETS: [usize; 6] = [40, 100, 200, 400, 1000, 2000];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    FittedDp,
    QLearning,
    PolicyGradient,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::FittedDp, Algorithm::QLearning, Algorithm::PolicyGradient];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::FittedDp => "fitted_dp",
            Algorithm::QLearning => "q_learning",
            Algorithm::PolicyGradient => "policy_gradient",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fitted_dp" | "dp" => Ok(Algorithm::FittedDp),
            "q_learning" | "q" => Ok(Algorithm::QLearning),
            "policy_gradient" | "pg" => Ok(Algorithm::PolicyGradient),
            other => Err(format!("unknown algorithm '{other}' (fitted_dp, q_learning, policy_gradient)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkPlan {
    pub envs: Vec<u8>,
    pub algorithms: Vec<Algorithm>,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_sims: usize,
    pub global_seed: u64,
    pub out_dir: PathBuf,
    /// Write measured wall times; when false the time columns are zero.
    pub record_timing: bool,
}

impl BenchmarkPlan {
    /// Default matrix over all five environments.
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            envs: (1..=5).collect(),
            algorithms: Algorithm::ALL.to_vec(),
            budgets: DEFAULT_BUDGETS.to_vec(),
            seeds: (0..10).collect(),
            n_sims: 10_000,
            global_seed: 0,
            out_dir: out_dir.into(),
            record_timing: true,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidPlan(m.into()));
        if self.envs.is_empty() || self.algorithms.is_empty() || self.budgets.is_empty() || self.seeds.is_empty() {
            return bad("every selection must be non-empty");
        }
        if self.budgets.contains(&0) {
            return bad("budgets must be positive");
        }
        if self.n_sims == 0 {
            return bad("n_sims must be positive");
        }
        for &id in &self.envs {
            make_env(id).map_err(|e| ExperimentError::InvalidPlan(e.to_string()))?;
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.envs.len() * self.algorithms.len() * self.budgets.len() * self.seeds.len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("no results.csv in {0}")]
    MissingResults(PathBuf),
    #[error("results file has no rows")]
    EmptyResults,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Seed for the training side of one cell.
pub fn train_seed(global: u64, env_id: u8, algorithm: Algorithm, episodes: usize, seed: u64) -> u64 {
    derive_seed(global, &[label("train"), u64::from(env_id), label(algorithm.as_str()), episodes as u64, seed])
}

/// Evaluation seed; shared by all algorithms and budgets at a given run seed.
pub fn eval_seed(global: u64, env_id: u8, seed: u64) -> u64 {
    derive_seed(global, &[label("eval"), u64::from(env_id), seed])
}

/// Trained artifact of one cell.
pub struct Trained {
    pub policy: Box<dyn Policy + Send>,
    pub train_s: f64,
    pub solve_s: f64,
}

/// Trains `algorithm` on `config` with `episodes` of interaction.
pub fn train(config: &EnvConfig, algorithm: Algorithm, episodes: usize, seed: u64) -> Result<Trained, String> {
    match algorithm {
        Algorithm::FittedDp => {
            let fit = fitted_dp(config, episodes, &mut stream(seed, &[])).map_err(|e| e.to_string())?;
            Ok(Trained {
                policy: Box::new(fit.policy),
                train_s: fit.timing.train().as_secs_f64(),
                solve_s: fit.timing.solve.as_secs_f64(),
            })
        }
        Algorithm::QLearning => {
            let run = train_q_learning(config, &TrainSpec::q_learning(episodes, seed)).map_err(|e| e.to_string())?;
            Ok(Trained { policy: Box::new(run.policy), train_s: run.elapsed.as_secs_f64(), solve_s: 0.0 })
        }
        Algorithm::PolicyGradient => {
            let run = train_policy_gradient(config, &TrainSpec::policy_gradient(episodes, seed))
                .map_err(|e| e.to_string())?;
            Ok(Trained { policy: Box::new(run.policy), train_s: run.elapsed.as_secs_f64(), solve_s: 0.0 })
        }
    }
}

/// Runs one benchmark cell. Failures are captured in the `status` field.
pub fn run_cell(plan: &BenchmarkPlan, env_id: u8, algorithm: Algorithm, episodes: usize, seed: u64) -> RunResult {
    let mut result = RunResult {
        env_id,
        algorithm: algorithm.as_str().to_string(),
        episodes,
        seed,
        report: None,
        exact_value: None,
        train_s: 0.0,
        solve_s: 0.0,
        eval_s: 0.0,
        status: "ok".into(),
    };
    let config = match make_env(env_id) {
        Ok(c) => c,
        Err(e) => {
            result.status = format!("failed: {e}");
            return result;
        }
    };
    let trained = match train(&config, algorithm, episodes, train_seed(plan.global_seed, env_id, algorithm, episodes, seed)) {
        Ok(t) => t,
        Err(e) => {
            result.status = format!("failed: {e}");
            return result;
        }
    };
    result.train_s = trained.train_s;
    result.solve_s = trained.solve_s;

    let started = Instant::now();
    match monte_carlo_eval(&config, trained.policy.as_ref(), plan.n_sims, eval_seed(plan.global_seed, env_id, seed)) {
        Ok(report) => result.report = Some(report),
        Err(e) => result.status = format!("failed: {e}"),
    }
    result.eval_s = started.elapsed().as_secs_f64();
    if config.typologies.len() == 1 && config.constraint.is_none() {
        result.exact_value = exact_policy_value(&config, trained.policy.as_ref(), true_rates(&config)).ok();
    }
    if !plan.record_timing {
        result.train_s = 0.0;
        result.solve_s = 0.0;
        result.eval_s = 0.0;
    }
    result
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub rows: Vec<RunResult>,
    pub failed: usize,
}

/// Runs every cell of `plan` and writes `results.csv`, `timing.csv` and one
/// `samples/env{E}_{algo}_ep{B}_seed{S}.csv` per constrained run.
pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<BenchmarkOutcome, ExperimentError> {
    plan.validate()?;
    let mut cells = Vec::with_capacity(plan.cell_count());
    for &env in &plan.envs {
        for &algo in &plan.algorithms {
            for &budget in &plan.budgets {
                for &seed in &plan.seeds {
                    cells.push((env, algo, budget, seed));
                }
            }
        }
    }
    let mut rows: Vec<RunResult> =
        cells.into_par_iter().map(|(e, a, b, s)| run_cell(plan, e, a, b, s)).collect();
    rows.sort_by(|x, y| {
        (x.env_id, algorithm_rank(&x.algorithm), x.episodes, x.seed)
            .cmp(&(y.env_id, algorithm_rank(&y.algorithm), y.episodes, y.seed))
    });

    fs::create_dir_all(&plan.out_dir)?;
    write_results(&plan.out_dir.join("results.csv"), &rows)?;
    write_timing(&plan.out_dir.join("timing.csv"), &rows)?;
    let samples_dir = plan.out_dir.join("samples");
    for row in &rows {
        if let Some(report) = row.report.as_ref().filter(|r| r.constraint.is_some()) {
            fs::create_dir_all(&samples_dir)?;
            write_samples(&samples_dir.join(samples_file_name(row)), &report.revenue_at_tau_samples)?;
        }
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    Ok(BenchmarkOutcome { rows, failed })
}

fn algorithm_rank(name: &str) -> (usize, String) {
    let rank = Algorithm::ALL.iter().position(|a| a.as_str() == name).unwrap_or(usize::MAX);
    (rank, name.to_string())
}

pub fn samples_file_name(row: &RunResult) -> String {
    format!("env{}_{}_ep{}_seed{}.csv", row.env_id, row.algorithm, row.episodes, row.seed)
}

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub env_id: u8,
    pub algorithm: String,
    pub episodes: usize,
    pub seed: u64,
    pub mean_revenue: Option<f64>,
    pub std_revenue: Option<f64>,
    pub standard_error: Option<f64>,
    pub satisfaction_rate: Option<f64>,
    pub exact_value: Option<f64>,
    pub train_s: String,
    pub solve_s: String,
    pub eval_s: String,
    pub status: String,
}

impl From<&RunResult> for ResultRow {
    fn from(r: &RunResult) -> Self {
        let rep = r.report.as_ref();
        Self {
            env_id: r.env_id,
            algorithm: r.algorithm.clone(),
            episodes: r.episodes,
            seed: r.seed,
            mean_revenue: rep.map(|x| x.mean_revenue),
            std_revenue: rep.map(|x| x.std_revenue),
            standard_error: rep.map(|x| x.standard_error),
            satisfaction_rate: rep.and_then(|x| x.satisfaction_rate),
            exact_value: r.exact_value,
            train_s: format!("{:.3}", r.train_s),
            solve_s: format!("{:.3}", r.solve_s),
            eval_s: format!("{:.3}", r.eval_s),
            status: r.status.clone(),
        }
    }
}

pub fn write_results(path: &Path, rows: &[RunResult]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(ResultRow::from(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

fn write_timing(path: &Path, rows: &[RunResult]) -> Result<(), ExperimentError> {
    let mut groups: BTreeMap<(u8, (usize, String), usize), Vec<&RunResult>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.env_id, algorithm_rank(&r.algorithm), r.episodes)).or_default().push(r);
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["env_id", "algorithm", "episodes", "runs", "train_s", "solve_s", "eval_s"])?;
    for ((env, (_, algo), episodes), group) in groups {
        let avg = |f: fn(&RunResult) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / group.len() as f64;
        w.write_record([
            env.to_string(),
            algo,
            episodes.to_string(),
            group.len().to_string(),
            format!("{:.3}", avg(|r| r.train_s)),
            format!("{:.3}", avg(|r| r.solve_s)),
            format!("{:.3}", avg(|r| r.eval_s)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_samples(path: &Path, samples: &[f64]) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "sample")?;
    for s in samples {
        writeln!(out, "{s}")?;
    }
    out.flush()
}

fn read_samples(path: &Path) -> Result<Vec<f64>, ExperimentError> {
    #[derive(Deserialize)]
    struct Row {
        sample: f64,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let rows: Vec<Row> = reader.deserialize().collect::<Result<_, _>>()?;
    Ok(rows.into_iter().map(|r| r.sample).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub curve_rows: usize,
    pub violin_rows: usize,
    /// Cells or sample files that could not be used.
    pub missing: Vec<String>,
}

/// Reads a benchmark directory and writes `learning_curves.csv`
/// (`env,algo,episodes,mean,std`) and `violins.csv` (`env,algo,sample`) to
/// `out_dir`. Violins pool all seeds at the largest successful budget per
/// constrained `(env, algo)`.
pub fn emit_plot_data(results_dir: &Path, out_dir: &Path) -> Result<PlotData, ExperimentError> {
    let path = results_dir.join("results.csv");
    if !path.is_file() {
        return Err(ExperimentError::MissingResults(results_dir.to_path_buf()));
    }
    let rows = read_results(&path)?;
    if rows.is_empty() {
        return Err(ExperimentError::EmptyResults);
    }
    let mut missing = Vec::new();

    let mut by_cell: BTreeMap<(u8, (usize, String), usize), Vec<RunResult>> = BTreeMap::new();
    for row in &rows {
        let report = row.mean_revenue.map(|mean| EvalReport {
            env_id: Some(row.env_id),
            constraint: None,
            n_sims: 0,
            mean_revenue: mean,
            std_revenue: row.std_revenue.unwrap_or(f64::NAN),
            standard_error: row.standard_error.unwrap_or(f64::NAN),
            satisfaction_rate: row.satisfaction_rate,
            revenue_at_tau_samples: Vec::new(),
        });
        by_cell.entry((row.env_id, algorithm_rank(&row.algorithm), row.episodes)).or_default().push(RunResult {
            env_id: row.env_id,
            algorithm: row.algorithm.clone(),
            episodes: row.episodes,
            seed: row.seed,
            report,
            exact_value: row.exact_value,
            train_s: 0.0,
            solve_s: 0.0,
            eval_s: 0.0,
            status: row.status.clone(),
        });
    }

    fs::create_dir_all(out_dir)?;
    let mut curves = csv::Writer::from_path(out_dir.join("learning_curves.csv"))?;
    curves.write_record(["env", "algo", "episodes", "mean", "std"])?;
    let mut curve_rows = 0;
    for ((env, (_, algo), episodes), runs) in &by_cell {
        match aggregate_runs(runs) {
            Ok(summary) => {
                let s = &summary[0];
                curves.write_record([
                    env.to_string(),
                    algo.clone(),
                    episodes.to_string(),
                    s.mean.to_string(),
                    s.std.to_string(),
                ])?;
                curve_rows += 1;
            }
            Err(_) => missing.push(format!("env {env} {algo} {episodes} episodes: no successful run")),
        }
    }
    curves.flush()?;

    // largest budget with at least one successful constrained run
    let mut violin_cells: BTreeMap<(u8, (usize, String)), usize> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.satisfaction_rate.is_some()) {
        let best = violin_cells.entry((row.env_id, algorithm_rank(&row.algorithm))).or_insert(0);
        *best = (*best).max(row.episodes);
    }
    let mut violins = csv::Writer::from_path(out_dir.join("violins.csv"))?;
    violins.write_record(["env", "algo", "sample"])?;
    let mut violin_rows = 0;
    for ((env, (rank, algo)), budget) in violin_cells {
        let runs = &by_cell[&(env, (rank, algo.clone()), budget)];
        for run in runs.iter().filter(|r| r.report.is_some()) {
            let file = results_dir.join("samples").join(samples_file_name(run));
            match read_samples(&file) {
                Ok(samples) if !samples.is_empty() => {
                    for s in samples {
                        violins.write_record([env.to_string(), algo.clone(), s.to_string()])?;
                        violin_rows += 1;
                    }
                }
                _ => missing.push(format!("samples for env {env} {algo} {budget} episodes seed {}", run.seed)),
            }
        }
    }
    violins.flush()?;

    Ok(PlotData { curve_rows, violin_rows, missing })
}
