//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{bandit, bellman_check, hc0_se, monotonicity_violation, ols_with_se, reduced_env2};
use dynprice_core::demand::{intensity, sales_pmf, sample_poisson};
use dynprice_core::dp::{exact_policy_value, fitted_dp, solve_oracle, true_rates};
use dynprice_core::env::make_env;
use dynprice_core::estimation::{fit_ols, least_squares, FeatureSet, SalesObservation};
use dynprice_core::eval::monte_carlo_eval;
use dynprice_core::experiment::{run_benchmark, train_seed, Algorithm, BenchmarkPlan};
use dynprice_core::policy::{Policy, UniformPolicy};
use dynprice_core::rl::{train_policy_gradient, train_q_learning, TrainSpec};
use dynprice_core::rng::stream;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pmf_normalization() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for id in 1..=5 {
        let c = make_env(id).unwrap();
        for ty in &c.typologies {
            for &p in &ty.grid {
                for t in 0..c.horizon {
                    for n in 0..=10 {
                        let total: f64 = sales_pmf(intensity(&ty.demand, p, t), n).iter().sum();
                        worst = worst.max((total - 1.0).abs());
                        cases += 1;
                    }
                }
            }
        }
    }
    ensure(worst <= 1e-12, format!("{cases} cases, max |sum - 1| = {worst:.2e}"))
}

fn ols_recovery() -> Outcome {
    let truth = [2.0, -1.0, 2.0, -1.0];
    let c = make_env(1).unwrap();
    let grid = &c.typologies[0].grid;
    let horizon = c.horizon;
    let mut rng = stream(2024, &[]);
    let obs: Vec<SalesObservation> = (0..10_000)
        .map(|i| {
            let price = grid[rng.random_range(0..grid.len())];
            let t = rng.random_range(0..horizon);
            let rate: f64 = FeatureSet::Base.features(price, t, horizon).iter().zip(truth).map(|(x, b)| x * b).sum();
            SalesObservation { episode: i, typology: 0, t, price, sales: sample_poisson(rate, &mut rng), censored: false }
        })
        .collect();
    let model = fit_ols(&obs, FeatureSet::Base, horizon).map_err(|e| e.to_string())?;
    let rows: Vec<_> =
        obs.iter().map(|o| (FeatureSet::Base.features(o.price, o.t, horizon), f64::from(o.sales))).collect();
    let (beta, _) = ols_with_se(&rows);
    let se = hc0_se(&rows, &beta);
    let agree = model.coefficients.iter().zip(&beta).all(|(a, b)| (a - b).abs() <= 1e-8 * (1.0 + b.abs()));
    let z: Vec<f64> = model.coefficients.iter().zip(truth).zip(&se).map(|((b, t), s)| (b - t) / s).collect();
    let within = z.iter().all(|z| z.abs() <= 3.0);

    // noiseless: targets equal the rate exactly
    let exact_rows = obs.iter().map(|o| {
        let x = FeatureSet::Base.features(o.price, o.t, horizon);
        let y = x.iter().zip(truth).map(|(a, b)| a * b).sum();
        (x, y)
    });
    let exact = least_squares(4, exact_rows).map_err(|e| e.to_string())?;
    let exact_err = exact.iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    ensure(
        agree && within && exact_err <= 1e-9,
        format!("z = {z:.2?}, oracle agreement {agree}, noiseless max error {exact_err:.1e}"),
    )
}

fn oracle_optimality() -> Outcome {
    let c = make_env(1).unwrap();
    let oracle = solve_oracle(&c).0.initial(&c);
    let mut above = 0;
    let mut failures = 0;
    let mut good_at_2000 = 0;
    let mut worst_2000 = f64::INFINITY;
    for budget in [40, 100, 200, 400, 1000, 2000] {
        for seed in 0..10 {
            let mut rng = stream(train_seed(0, 1, Algorithm::FittedDp, budget, seed), &[]);
            let Ok(fit) = fitted_dp(&c, budget, &mut rng) else {
                failures += 1;
                continue;
            };
            let value = exact_policy_value(&c, &fit.policy, true_rates(&c)).unwrap();
            if value > oracle + 1e-9 {
                above += 1;
            }
            if budget == 2000 {
                worst_2000 = worst_2000.min(value / oracle);
                if value >= 0.97 * oracle {
                    good_at_2000 += 1;
                }
            }
        }
    }
    ensure(
        above == 0 && good_at_2000 >= 9,
        format!(
            "oracle V0 = {oracle:.6}; above oracle: {above}; fit failures: {failures}; \
             >= 0.97 at 2000: {good_at_2000}/10 (worst ratio {worst_2000:.4})"
        ),
    )
}

fn bellman_residual() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    let cases = [("env1", make_env(1).unwrap()), ("env4", make_env(4).unwrap()), ("reduced env2", reduced_env2())];
    for (name, c) in cases {
        let (v, pi) = solve_oracle(&c);
        let check = bellman_check(&c, &v, &pi, true_rates(&c));
        let mono = monotonicity_violation(&v);
        ok &= check.residual <= 1e-9 && check.policy_gap <= 1e-9 && mono <= 1e-9;
        parts.push(format!("{name}: residual {:.1e}, monotone slack {:.1e}", check.residual, mono.max(0.0)));
    }
    ensure(ok, parts.join("; "))
}

fn mc_vs_exact() -> Outcome {
    let c = make_env(1).unwrap();
    let (_, pi) = solve_oracle(&c);
    let exact = exact_policy_value(&c, &pi, true_rates(&c)).unwrap();
    let inside = (0..20)
        .filter(|&rep| {
            let r = monte_carlo_eval(&c, &pi, 10_000, 9_000 + rep).unwrap();
            (r.mean_revenue - exact).abs() <= 3.0 * r.standard_error
        })
        .count();
    ensure(inside >= 18, format!("{inside}/20 repetitions within 3 SE of {exact:.6}"))
}

fn min_time<F: FnMut() -> Duration>(reps: usize, mut f: F) -> f64 {
    (0..reps).map(|_| f().as_secs_f64()).fold(f64::INFINITY, f64::min)
}

fn timing_shape() -> Outcome {
    let c1 = make_env(1).unwrap();
    let c2 = make_env(2).unwrap();
    let solve = |c: &dynprice_core::env::EnvConfig, budget: usize| {
        min_time(3, || fitted_dp(c, budget, &mut stream(1, &[])).unwrap().timing.solve)
    };
    let env2_40 = solve(&c2, 40);
    let env2_2000 = solve(&c2, 2000);
    let env1_2000 = min_time(20, || fitted_dp(&c1, 2000, &mut stream(1, &[])).unwrap().timing.solve);
    let dp_ratio = env2_2000 / env2_40;
    let env_ratio = env2_2000 / env1_2000;

    let q = |b| min_time(5, || train_q_learning(&c1, &TrainSpec::q_learning(b, 3)).unwrap().elapsed);
    let pg = |b| min_time(5, || train_policy_gradient(&c1, &TrainSpec::policy_gradient(b, 3)).unwrap().elapsed);
    let q_ratio = q(2000) / q(40);
    let pg_ratio = pg(2000) / pg(40);

    ensure(
        dp_ratio <= 1.2 && (25.0..=100.0).contains(&q_ratio) && (25.0..=100.0).contains(&pg_ratio) && env_ratio >= 100.0,
        format!(
            "env2 DP solve 2000/40 = {dp_ratio:.3}; RL 2000/40: q {q_ratio:.1}, pg {pg_ratio:.1}; \
             env2/env1 DP solve = {env_ratio:.0}"
        ),
    )
}

fn constraint_behavior() -> Outcome {
    let c = make_env(2).unwrap();
    let random = monte_carlo_eval(&c, &UniformPolicy { action_count: c.action_count() }, 10_000, 77).unwrap();
    let random_rate = random.satisfaction_rate.unwrap();
    let mut rates = Vec::new();
    for seed in 0..3 {
        let mut rng = stream(train_seed(0, 2, Algorithm::FittedDp, 2000, seed), &[]);
        let fit = fitted_dp(&c, 2000, &mut rng).map_err(|e| e.to_string())?;
        let r = monte_carlo_eval(&c, &fit.policy, 10_000, 77).unwrap();
        if r.revenue_at_tau_samples.is_empty() {
            return Err("fitted DP report has no revenue samples".into());
        }
        rates.push(r.satisfaction_rate.unwrap());
    }

    // every constrained benchmark run leaves a non-empty samples file
    let dir = tempfile::tempdir().unwrap();
    let plan = BenchmarkPlan {
        envs: vec![2, 3, 4],
        algorithms: Algorithm::ALL.to_vec(),
        budgets: vec![40],
        seeds: vec![0],
        n_sims: 500,
        global_seed: 0,
        out_dir: dir.path().to_path_buf(),
        record_timing: false,
    };
    let out = run_benchmark(&plan).map_err(|e| e.to_string())?;
    let mut empty = 0;
    for row in out.rows.iter().filter(|r| r.report.is_some()) {
        let path = dir.path().join("samples").join(dynprice_core::experiment::samples_file_name(row));
        let lines = fs::read_to_string(&path).map(|s| s.lines().count()).unwrap_or(0);
        if lines <= 1 {
            empty += 1;
        }
    }
    let ok_rows = out.rows.iter().filter(|r| r.report.is_some()).count();
    ensure(
        rates.iter().all(|&r| r >= random_rate) && empty == 0 && ok_rows > 0,
        format!(
            "fitted DP satisfaction {rates:.3?} vs uniform {random_rate:.3}; \
             {ok_rows} constrained runs, {empty} without samples"
        ),
    )
}

fn bandit_sanity() -> Outcome {
    let c = bandit();
    let s0 = c.reset();
    let q_hits = (0..10)
        .filter(|&s| train_q_learning(&c, &TrainSpec::q_learning(2000, s)).unwrap().policy.lookup(&s0) == 1)
        .count();
    let pg_hits = (0..10)
        .filter(|&s| {
            let run = train_policy_gradient(&c, &TrainSpec::policy_gradient(2000, s)).unwrap();
            run.policy.action_probabilities(&s0).iter().any(|&(a, p)| a == 1 && p > 0.9)
        })
        .count();
    ensure(q_hits >= 8 && pg_hits >= 8, format!("q-learning {q_hits}/10, policy gradient {pg_hits}/10"))
}

fn env5_nonlinear() -> Outcome {
    let c = make_env(5).unwrap();
    let oracle = solve_oracle(&c).0.initial(&c);
    let mut good = 0;
    let mut worst = f64::INFINITY;
    for seed in 0..10 {
        let mut rng = stream(train_seed(0, 5, Algorithm::FittedDp, 2000, seed), &[]);
        let fit = fitted_dp(&c, 2000, &mut rng).map_err(|e| e.to_string())?;
        if fit.models[0].feature_set != FeatureSet::Augmented {
            return Err("base features used for nonlinear demand".into());
        }
        let ratio = exact_policy_value(&c, &fit.policy, true_rates(&c)).unwrap() / oracle;
        worst = worst.min(ratio);
        if ratio >= 0.95 {
            good += 1;
        }
    }
    ensure(good >= 9, format!("oracle {oracle:.4}; {good}/10 seeds >= 0.95 (worst {worst:.4})"))
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = fs::read(&p).unwrap();
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut rows = 0;
    for dir in [a.path(), b.path()] {
        let mut plan = BenchmarkPlan::new(dir);
        plan.envs = vec![1, 4];
        plan.global_seed = 2024;
        plan.record_timing = false;
        rows = run_benchmark(&plan).map_err(|e| e.to_string())?.rows.len();
    }
    let fa = files_under(a.path());
    let fb = files_under(b.path());
    let bytes: usize = fa.iter().map(|f| f.1.len()).sum();
    ensure(
        fa == fb && rows == 360,
        format!("{rows} rows, {} files, {bytes} bytes, identical: {}", fa.len(), fa == fb),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("pmf normalization", pmf_normalization),
        ("OLS recovery", ols_recovery),
        ("oracle optimality (env 1)", oracle_optimality),
        ("Bellman residual and monotonicity", bellman_residual),
        ("Monte Carlo vs exact (env 1)", mc_vs_exact),
        ("timing shape", timing_shape),
        ("constraint behavior (env 2)", constraint_behavior),
        ("bandit sanity for RL", bandit_sanity),
        ("env 5 nonlinear fitted DP", env5_nonlinear),
        ("determinism (envs 1 and 4)", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(format!("panicked: {}", panic_message(&e))));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown".into())
}
