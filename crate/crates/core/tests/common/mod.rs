//! Independent reference computations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the solver internals.
#![allow(dead_code)]

use dynprice_core::demand::DemandSpec;
use dynprice_core::dp::ValueFunction;
use dynprice_core::env::{ConstraintSpec, EnvConfig, Typology};
use dynprice_core::policy::PolicyTable;
use dynprice_core::space::revenue_to_bin;

/// `P(S = k)` for `S = min(Poisson(rate), n)`, from the closed form
/// `exp(-rate) rate^k / k!` with the remaining mass on `k = n`.
pub fn truncated_poisson(rate: f64, n: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    for k in 0..n {
        let p = if rate == 0.0 {
            if k == 0 { 1.0 } else { 0.0 }
        } else {
            let log_fact: f64 = (1..=k).map(|j| f64::from(j).ln()).sum();
            (-rate + f64::from(k) * rate.ln() - log_fact).exp()
        };
        out.push(p);
    }
    let head: f64 = out.iter().sum();
    out.push((1.0 - head).max(0.0));
    out
}

/// Two-armed bandit: one epoch, ten units, prices {0.5, 1.0}, rate `2 - p`.
pub fn bandit() -> EnvConfig {
    EnvConfig::new(
        1,
        vec![Typology { demand: DemandSpec::linear(2.0, 1.0, 1).unwrap(), grid: vec![0.5, 1.0], initial_inventory: 10 }],
        None,
        0.5,
    )
    .unwrap()
}

/// Two Env-1 typologies with three units each over five epochs, revenue
/// width 1.0 and a target of 6 checked at epoch 3.
pub fn reduced_env2() -> EnvConfig {
    let grid: Vec<f64> = (5..=20).map(|k| f64::from(k) / 10.0).collect();
    let ty = Typology { demand: DemandSpec::linear(2.0, 1.0, 5).unwrap(), grid, initial_inventory: 3 };
    EnvConfig::new(5, vec![ty.clone(), ty], Some(ConstraintSpec { target: 6.0, mu: 4.0, tau: 3 }), 1.0).unwrap()
}

/// Result of a one-step lookahead sweep over every tabulated state.
pub struct BellmanCheck {
    /// `max |V_t(s) - max_a Q_t(s, a)|`
    pub residual: f64,
    /// `max (max_a Q_t(s, a) - Q_t(s, pi(s)))`
    pub policy_gap: f64,
    pub states: usize,
}

/// Recomputes `max_a E[r + V_{t+1}(s')]` for every state by enumerating
/// joint sales directly and binning the successor revenue from scratch.
pub fn bellman_check<F>(config: &EnvConfig, v: &ValueFunction, pi: &PolicyTable, rate: F) -> BellmanCheck
where
    F: Fn(usize, f64, usize) -> f64,
{
    let space = &v.space;
    let k = config.typologies.len();
    let mut residual: f64 = 0.0;
    let mut policy_gap: f64 = 0.0;
    let mut states = 0;
    for t in 0..config.horizon {
        for s in 0..space.state_count(t) {
            let (stock, bin) = space.decode(t, s);
            let revenue_now = space.revenue.map_or(0.0, |g| g.value(bin));
            let mut qs = Vec::with_capacity(space.action_count);
            for a in 0..space.action_count {
                let prices = config.unflatten_action(a).unwrap().price_indices;
                let pmfs: Vec<Vec<f64>> = (0..k)
                    .map(|i| {
                        let p = config.typologies[i].grid[prices[i]];
                        truncated_poisson(rate(i, p, t), stock[i])
                    })
                    .collect();
                let mut q = 0.0;
                let mut sold = vec![0u32; k];
                loop {
                    let mut prob = 1.0;
                    let mut r = 0.0;
                    let mut next_stock = stock.clone();
                    for i in 0..k {
                        prob *= pmfs[i][sold[i] as usize];
                        r += config.typologies[i].grid[prices[i]] * f64::from(sold[i]);
                        next_stock[i] -= sold[i];
                    }
                    let (next_bin, penalty) = match (space.revenue, config.constraint) {
                        (Some(g), Some(c)) if t < g.tau => {
                            let b = revenue_to_bin(revenue_now + r, g.width, g.max_revenue);
                            let pen = if t + 1 == c.tau { c.penalty(g.value(b)) } else { 0.0 };
                            (b, pen)
                        }
                        _ => (0, 0.0),
                    };
                    let next_inv = space.inventory_index(&next_stock);
                    let cont = v.values[t + 1][space.index(t + 1, next_inv, next_bin)];
                    q += prob * (r - penalty + cont);

                    let mut i = k;
                    let mut done = true;
                    while i > 0 {
                        i -= 1;
                        if sold[i] < stock[i] {
                            sold[i] += 1;
                            done = false;
                            break;
                        }
                        sold[i] = 0;
                    }
                    if done {
                        break;
                    }
                }
                qs.push(q);
            }
            let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((v.values[t][s] - best).abs());
            policy_gap = policy_gap.max(best - qs[pi.actions[t][s] as usize]);
            states += 1;
        }
    }
    BellmanCheck { residual, policy_gap, states }
}

/// Largest violation of `V_t(N + e_i, b) >= V_t(N, b)` and
/// `V_t(N, b + 1) >= V_t(N, b)`; zero or negative means monotone.
pub fn monotonicity_violation(v: &ValueFunction) -> f64 {
    let space = &v.space;
    let mut worst = f64::NEG_INFINITY;
    for (t, slice) in v.values.iter().enumerate() {
        let bins = space.bins_at(t);
        for s in 0..slice.len() {
            let (stock, bin) = space.decode(t, s);
            for i in 0..stock.len() {
                if (stock[i] as usize) + 1 < space.inventory_levels[i] {
                    let mut more = stock.clone();
                    more[i] += 1;
                    let up = slice[space.index(t, space.inventory_index(&more), bin)];
                    worst = worst.max(slice[s] - up);
                }
            }
            if bin + 1 < bins {
                worst = worst.max(slice[s] - slice[s + 1]);
            }
        }
    }
    worst
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Normal-equations OLS with classical standard errors
/// `sqrt(diag((X'X)^-1) * RSS / (n - k))`.
pub fn ols_with_se(rows: &[(Vec<f64>, f64)]) -> (Vec<f64>, Vec<f64>) {
    let k = rows[0].0.len();
    let n = rows.len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (x, y) in rows {
        for i in 0..k {
            xty[i] += x[i] * y;
            for j in 0..k {
                xtx[i][j] += x[i] * x[j];
            }
        }
    }
    let beta = gauss_solve(xtx.clone(), xty);
    let rss: f64 = rows
        .iter()
        .map(|(x, y)| {
            let fit: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (y - fit).powi(2)
        })
        .sum();
    let sigma2 = rss / (n - k) as f64;
    let se = (0..k)
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            let col = gauss_solve(xtx.clone(), e);
            (col[i] * sigma2).sqrt()
        })
        .collect();
    (beta, se)
}

/// Heteroskedasticity-consistent (HC0) standard errors for `beta`:
/// `sqrt(diag((X'X)^-1 X' diag(e^2) X (X'X)^-1))`.
pub fn hc0_se(rows: &[(Vec<f64>, f64)], beta: &[f64]) -> Vec<f64> {
    let k = beta.len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut meat = vec![vec![0.0; k]; k];
    for (x, y) in rows {
        let e = y - x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..k {
            for j in 0..k {
                xtx[i][j] += x[i] * x[j];
                meat[i][j] += e * e * x[i] * x[j];
            }
        }
    }
    let inv: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut unit = vec![0.0; k];
            unit[i] = 1.0;
            gauss_solve(xtx.clone(), unit)
        })
        .collect();
    // inv is symmetric, so its columns double as rows
    (0..k)
        .map(|i| {
            let mut v = 0.0;
            for a in 0..k {
                for b in 0..k {
                    v += inv[i][a] * meat[a][b] * inv[b][i];
                }
            }
            v.sqrt()
        })
        .collect()
}
