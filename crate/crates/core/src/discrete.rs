//! Difference-equation market models, plain and with memory.
//!
//! Updates are synchronous: every `k+1` value is computed from step-`k`
//! values only.

use crate::continuous::{ensure_finite, meta, total_balance, SimError};
use crate::model::{MarketParams, MarketState, MemorySpec, Trajectory};

/// Plain discrete update on a flat `(S, D, E, lambda)` vector.
///
/// The step is folded into each rate (`dt * alpha_i`, `dt * k`, ...) so that
/// a memory model whose lag-0 weights are those products reproduces it
/// exactly.
pub(crate) fn step_flat(params: &MarketParams, x: &[f64], dt: f64) -> Vec<f64> {
    let (m, n) = (params.m, params.n);
    let e = x[m + n];
    let lambda = x[m + n + 1];
    let mut out = Vec::with_capacity(x.len());
    for i in 0..m {
        out.push(x[i] + (dt * params.alpha[i]) * (lambda - params.a[i] - params.b[i] * x[i]));
    }
    for j in 0..n {
        let dj = x[m + j];
        out.push(dj + (dt * params.beta[j]) * (params.c[j] - params.d[j] * dj - lambda));
    }
    out.push(e + dt * total_balance(x, m, n));
    out.push(
        lambda + (-(dt * params.k_price) * e + (dt * params.h_gain) * (params.lambda0 - lambda)),
    );
    out
}

pub fn step_discrete(params: &MarketParams, state: &MarketState, dt: f64) -> MarketState {
    let x = step_flat(params, &state.to_vec(), dt);
    MarketState::from_slice(state.t + dt, params.m, params.n, &x)
}

/// Iterates [`step_discrete`] `n_steps` times; the result holds `n_steps + 1` states.
pub fn simulate_discrete(
    params: &MarketParams,
    x0: &MarketState,
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory, SimError> {
    params.clone().validate()?;
    x0.check_dims(params)?;
    let (m, n) = (params.m, params.n);
    let mut x = x0.to_vec();
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0.clone());
    for k in 0..n_steps {
        x = step_flat(params, &x, dt);
        let t = x0.t + (k + 1) as f64 * dt;
        ensure_finite(&x, k + 1, t)?;
        states.push(MarketState::from_slice(t, m, n, &x));
    }
    Ok(Trajectory {
        dt,
        states,
        meta: meta("discrete", params),
    })
}

/// Discrete model with memory: each update adds weighted residuals from the
/// last `p + 1` steps. Steps before the start read `x0`. Consecutive states
/// are `mem.lag_step` apart in time.
pub fn simulate_discrete_memory(
    params: &MarketParams,
    mem: &MemorySpec,
    x0: &MarketState,
    n_steps: usize,
) -> Result<Trajectory, SimError> {
    params.clone().validate()?;
    x0.check_dims(params)?;
    let w = mem.resolve(params)?;
    let (m, n) = (params.m, params.n);
    let dim = m + n + 2;
    let mut grid: Vec<Vec<f64>> = Vec::with_capacity(n_steps + 1);
    grid.push(x0.to_vec());
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0.clone());

    for k in 0..n_steps {
        let mut incr = vec![0.0; dim];
        for l in 0..=w.p {
            let xl = &grid[k.saturating_sub(l)];
            let e = xl[m + n];
            let lambda = xl[m + n + 1];
            let mut add = |idx: usize, v: f64| {
                incr[idx] = if l == 0 { v } else { incr[idx] + v };
            };
            for i in 0..m {
                add(i, w.alpha[l][i] * (lambda - params.a[i] - params.b[i] * xl[i]));
            }
            for j in 0..n {
                add(
                    m + j,
                    w.beta[l][j] * (params.c[j] - params.d[j] * xl[m + j] - lambda),
                );
            }
            add(m + n, w.e[l] * total_balance(xl, m, n));
            add(
                m + n + 1,
                -w.k[l] * e + w.h[l] * (params.lambda0 - lambda),
            );
        }
        let x: Vec<f64> = grid[k].iter().zip(&incr).map(|(a, b)| a + b).collect();
        let t = x0.t + (k + 1) as f64 * w.lag_step;
        ensure_finite(&x, k + 1, t)?;
        states.push(MarketState::from_slice(t, m, n, &x));
        grid.push(x);
    }
    Ok(Trajectory {
        dt: w.lag_step,
        states,
        meta: meta("discrete_memory", params),
    })
}
