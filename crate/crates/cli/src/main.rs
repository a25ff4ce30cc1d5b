use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dynprice_core::dp::{fitted_dp, solve_oracle};
use dynprice_core::env::{make_env, EnvConfig};
use dynprice_core::estimation::{
    collect_random_episodes, fit_per_typology, read_observations_csv, write_observations_csv, FeatureSet,
};
use dynprice_core::eval::monte_carlo_eval;
use dynprice_core::experiment::{emit_plot_data, run_benchmark, Algorithm, BenchmarkPlan, DEFAULT_BUDGETS};
use dynprice_core::policy::PolicyFile;
use dynprice_core::rl::{train_policy_gradient, train_q_learning, TrainSpec};
use dynprice_core::rng::stream;
use dynprice_core::space::enumerate_states;

#[derive(Parser)]
#[command(name = "dynprice", version, about = "Finite-horizon dynamic pricing benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct EnvArgs {
    /// Preset environment (1-5)
    #[arg(long, default_value_t = 1)]
    env: u8,
    /// JSON environment description; overrides --env
    #[arg(long)]
    config: Option<PathBuf>,
}

impl EnvArgs {
    fn load(&self) -> Result<EnvConfig> {
        match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
            }
            None => Ok(make_env(self.env)?),
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum RlAlgo {
    Q,
    Pg,
}

#[derive(Subcommand)]
enum Command {
    /// Play random-price episodes and write the sales observations as CSV
    Simulate {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one demand model per typology from an observations CSV
    Fit {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        data: PathBuf,
        /// Force the feature set instead of choosing it from the demand type
        #[arg(long, value_enum)]
        features: Option<Features>,
    },
    /// Fitted DP (or the true-rate oracle) and its policy file
    SolveDp {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = 2000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Solve with the true demand rates instead of fitted ones
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a tabular learner and write its policy file
    TrainRl {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, value_enum)]
        algo: RlAlgo,
        #[arg(long, default_value_t = 2000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo evaluation of a policy file
    Evaluate {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        sims: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write revenue-at-tau samples here (constrained environments)
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Write the JSON report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the environment x algorithm x budget x seed matrix
    Benchmark {
        #[arg(long, value_delimiter = ',', default_values_t = [1u8, 2, 3, 4, 5])]
        env: Vec<u8>,
        #[arg(long, value_delimiter = ',', default_values_t = Algorithm::ALL.map(|a| a.to_string()))]
        algo: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BUDGETS)]
        episodes: Vec<usize>,
        /// Number of seeds per cell (0..runs)
        #[arg(long, default_value_t = 10)]
        runs: u64,
        /// Global seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        sims: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write zero wall times so reruns are byte-identical
        #[arg(long)]
        no_timing: bool,
    },
    /// Turn a benchmark directory into learning_curves.csv and violins.csv
    EmitPlotData {
        #[arg(long)]
        results: PathBuf,
        /// Defaults to the results directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum Features {
    Base,
    Augmented,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { env, episodes, seed, out } => {
            let config = env.load()?;
            let data = collect_random_episodes(&config, episodes, &mut stream(seed, &[]))?;
            match out {
                Some(path) => write_observations_csv(&data, fs::File::create(&path)?)?,
                None => write_observations_csv(&data, io::stdout().lock())?,
            }
        }
        Command::Fit { env, data, features } => {
            let config = env.load()?;
            let obs = read_observations_csv(&data).with_context(|| format!("reading {}", data.display()))?;
            let fs = match features {
                Some(Features::Base) => FeatureSet::Base,
                Some(Features::Augmented) => FeatureSet::Augmented,
                None => FeatureSet::for_config(&config),
            };
            let models = fit_per_typology(&config, &obs, fs)?;
            println!("{}", serde_json::to_string_pretty(&models)?);
        }
        Command::SolveDp { env, episodes, seed, oracle, out } => {
            let config = env.load()?;
            let (values, policy) = if oracle {
                solve_oracle(&config)
            } else {
                let fit = fitted_dp(&config, episodes, &mut stream(seed, &[]))?;
                eprintln!(
                    "collect {:.3}s, fit {:.3}s, solve {:.3}s",
                    fit.timing.collect.as_secs_f64(),
                    fit.timing.fit.as_secs_f64(),
                    fit.timing.solve.as_secs_f64()
                );
                (fit.values, fit.policy)
            };
            println!("V0 = {}", values.initial(&config));
            PolicyFile::deterministic(&policy, Some(values.values)).save(&out)?;
        }
        Command::TrainRl { env, algo, episodes, seed, out } => {
            let config = env.load()?;
            let (file, elapsed) = match algo {
                RlAlgo::Q => {
                    let run = train_q_learning(&config, &TrainSpec::q_learning(episodes, seed))?;
                    (PolicyFile::deterministic(&run.policy, None), run.elapsed)
                }
                RlAlgo::Pg => {
                    let run = train_policy_gradient(&config, &TrainSpec::policy_gradient(episodes, seed))?;
                    (PolicyFile::softmax(&run.policy), run.elapsed)
                }
            };
            eprintln!("trained in {:.3}s", elapsed.as_secs_f64());
            file.save(&out)?;
        }
        Command::Evaluate { env, policy, sims, seed, samples, out } => {
            let config = env.load()?;
            let file = PolicyFile::load(&policy).with_context(|| format!("reading {}", policy.display()))?;
            if file.layout() != &enumerate_states(&config) {
                bail!("policy layout does not match the environment");
            }
            let report = monte_carlo_eval(&config, file.into_policy().as_ref(), sims, seed)?;
            if let Some(path) = samples {
                write_samples(&path, &report.revenue_at_tau_samples)?;
            }
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(path) => fs::write(path, json)?,
                None => println!("{json}"),
            }
        }
        Command::Benchmark { env, algo, episodes, runs, seed, sims, out, no_timing } => {
            let algorithms =
                algo.iter().map(|a| a.parse::<Algorithm>()).collect::<Result<Vec<_>, _>>().map_err(anyhow::Error::msg)?;
            let plan = BenchmarkPlan {
                envs: env,
                algorithms,
                budgets: episodes,
                seeds: (0..runs).collect(),
                n_sims: sims,
                global_seed: seed,
                out_dir: out,
                record_timing: !no_timing,
            };
            let outcome = run_benchmark(&plan)?;
            eprintln!("{} runs, {} failed", outcome.rows.len(), outcome.failed);
            for row in outcome.rows.iter().filter(|r| r.status != "ok") {
                eprintln!("  env {} {} {} episodes seed {}: {}", row.env_id, row.algorithm, row.episodes, row.seed, row.status);
            }
            if outcome.failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::EmitPlotData { results, out } => {
            let out = out.unwrap_or_else(|| results.clone());
            let summary = emit_plot_data(&results, &out)?;
            eprintln!("{} curve rows, {} violin samples", summary.curve_rows, summary.violin_rows);
            for m in &summary.missing {
                eprintln!("  missing: {m}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_samples(path: &Path, samples: &[f64]) -> Result<()> {
    let mut text = String::from("sample\n");
    for s in samples {
        text.push_str(&format!("{s}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}
