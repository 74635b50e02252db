//! Fractional-order market model with Caputo derivatives.
//!
//! Each Caputo-governed component `y` of order `q` is advanced with the
//! Grünwald–Letnikov sum applied to `y - y(0)`:
//!
//! ```text
//! y[k+1] = -sum_{j=1..=k+1} w_j y[k+1-j] + (sum_{j=0..=k+1} w_j) y[0] + dt^q f(x[k])
//! ```
//!
//! With `q = 1` the weights are `[1, -1, 0, ...]` and the update is exactly
//! explicit Euler. The imbalance `E` is integer-order and uses those weights.

use crate::continuous::{ensure_finite, meta, total_balance, SimError, StepperConfig};
use crate::model::{FractionalSpec, MarketParams, MarketState, Trajectory};

/// Grünwald–Letnikov weights `w_0 = 1`, `w_j = w_{j-1} (1 - (q + 1) / j)`.
pub fn caputo_weights(order: f64, n_steps: usize) -> Result<Vec<f64>, SimError> {
    if !(order > 0.0 && order <= 1.0) {
        return Err(SimError::OrderOutOfRange(order));
    }
    let mut w = Vec::with_capacity(n_steps + 1);
    w.push(1.0);
    for j in 1..=n_steps {
        let prev = w[j - 1];
        w.push(prev * (1.0 - (order + 1.0) / j as f64));
    }
    Ok(w)
}

/// Weights for one order plus cached partial sums.
struct MemoryKernel {
    order: f64,
    weights: Vec<f64>,
    partial_sums: Vec<f64>,
    /// Index one past the last non-zero weight.
    support: usize,
    step_factor: f64,
}

impl MemoryKernel {
    fn new(order: f64, n_steps: usize, dt: f64) -> Result<Self, SimError> {
        let weights = caputo_weights(order, n_steps + 1)?;
        let mut partial_sums = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            partial_sums.push(acc);
        }
        let support = weights.iter().rposition(|w| *w != 0.0).map_or(1, |i| i + 1);
        Ok(Self {
            order,
            weights,
            partial_sums,
            support,
            step_factor: dt.powf(order),
        })
    }

    /// Next value of component `c` given its history `hist[0..=k]`.
    fn advance(&self, hist: &[Vec<f64>], c: usize, k: usize, f: f64, limit: Option<usize>) -> f64 {
        let mut jmax = (k + 1).min(self.support.saturating_sub(1).max(1));
        if let Some(l) = limit {
            jmax = jmax.min(l.max(1));
        }
        let mut acc = 0.0;
        for j in 1..=jmax {
            acc -= self.weights[j] * hist[k + 1 - j][c];
        }
        acc += self.partial_sums[jmax] * hist[0][c];
        acc + self.step_factor * f
    }
}

fn fractional_rhs(params: &MarketParams, spec: &FractionalSpec, t: f64, x: &[f64], dx: &mut [f64]) {
    let (m, n) = (params.m, params.n);
    let lambda = x[m + n + 1];
    for i in 0..m {
        dx[i] = params.alpha[i] * (lambda - params.a[i] - params.b[i] * x[i]);
    }
    for j in 0..n {
        dx[m + j] = params.beta[j] * (params.c[j] - params.d[j] * x[m + j] - lambda);
    }
    dx[m + n] = total_balance(x, m, n);
    dx[m + n + 1] = -spec.h_d * lambda + spec.k_e * (spec.omega_ref - spec.omega_coi_at(t));
}

/// Right-hand side of the fractional model at time `t`, packed as a state.
/// With every order equal to one this is an ordinary ODE.
pub fn rhs_fractional(
    params: &MarketParams,
    spec: &FractionalSpec,
    state: &MarketState,
) -> MarketState {
    let x = state.to_vec();
    let mut dx = vec![0.0; x.len()];
    fractional_rhs(params, spec, state.t, &x, &mut dx);
    MarketState::from_slice(state.t, params.m, params.n, &dx)
}

/// Integrates the fractional model. `cfg.method` is ignored; the scheme is
/// the explicit Grünwald–Letnikov update above.
pub fn simulate_fractional(
    params: &MarketParams,
    spec: &FractionalSpec,
    x0: &MarketState,
    cfg: &StepperConfig,
) -> Result<Trajectory, SimError> {
    params.clone().validate()?;
    spec.validate(params)?;
    x0.check_dims(params)?;
    cfg.validate()?;

    let (m, n) = (params.m, params.n);
    let dim = m + n + 2;
    let n_steps = cfg.n_steps();

    let mut orders: Vec<f64> = spec.ord_alpha.clone();
    orders.extend(&spec.ord_beta);
    orders.push(1.0);
    orders.push(spec.ord_gamma);

    let mut kernels: Vec<MemoryKernel> = Vec::new();
    let mut kernel_of = Vec::with_capacity(dim);
    for &q in &orders {
        let idx = match kernels.iter().position(|k| k.order == q) {
            Some(i) => i,
            None => {
                kernels.push(MemoryKernel::new(q, n_steps, cfg.dt)?);
                kernels.len() - 1
            }
        };
        kernel_of.push(idx);
    }

    let t0 = x0.t;
    let mut hist: Vec<Vec<f64>> = Vec::with_capacity(n_steps + 1);
    hist.push(x0.to_vec());
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0.clone());
    let mut f = vec![0.0; dim];

    for k in 0..n_steps {
        let tk = t0 + k as f64 * cfg.dt;
        fractional_rhs(params, spec, tk, &hist[k], &mut f);
        let next: Vec<f64> = (0..dim)
            .map(|c| kernels[kernel_of[c]].advance(&hist, c, k, f[c], spec.history_limit))
            .collect();
        let t = t0 + (k + 1) as f64 * cfg.dt;
        ensure_finite(&next, k + 1, t)?;
        states.push(MarketState::from_slice(t, m, n, &next));
        hist.push(next);
    }
    Ok(Trajectory {
        dt: cfg.dt,
        states,
        meta: meta("fractional", params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::StepMethod;

    fn params() -> MarketParams {
        MarketParams {
            m: 1,
            n: 1,
            a: vec![10.0],
            b: vec![1.0],
            c: vec![50.0],
            d: vec![1.0],
            alpha: vec![1.0],
            beta: vec![1.0],
            k_price: 1.0,
            h_gain: 1.0,
            lambda0: 30.0,
        }
    }

    fn spec(q: f64) -> FractionalSpec {
        FractionalSpec {
            ord_alpha: vec![q],
            ord_beta: vec![q],
            ord_gamma: q,
            h_d: 1.0,
            k_e: 3.0,
            omega_ref: 50.0,
            omega_coi: None,
            history_limit: None,
        }
    }

    #[test]
    fn weights_order_one_and_half() {
        assert_eq!(caputo_weights(1.0, 4).unwrap(), vec![1.0, -1.0, 0.0, 0.0, 0.0]);
        let w = caputo_weights(0.5, 2).unwrap();
        assert_eq!(w, vec![1.0, -0.5, -0.125]);
        assert!(caputo_weights(0.0, 3).is_err());
        assert!(caputo_weights(1.5, 3).is_err());
    }

    #[test]
    fn weights_sign_pattern_and_sum() {
        for q in [0.1, 0.5, 0.9] {
            let w = caputo_weights(q, 10_000).unwrap();
            assert!(w[0] > 0.0);
            assert!(w[1..].iter().all(|&x| x < 0.0));
            let mut partial = 0.0;
            let mut prev = f64::INFINITY;
            for x in &w {
                partial += x;
                assert!(partial <= prev);
                prev = partial;
            }
            // Tail of the binomial series decays like j^-q, so the partial
            // sum at 10^4 is only small for larger q.
            if q >= 0.5 {
                assert!(partial < 0.01 && partial > 0.0, "q={q} partial={partial}");
            }
        }
    }

    #[test]
    fn order_one_price_decay() {
        let p = params();
        let x0 = MarketState::new(0.0, vec![0.0], vec![0.0], 0.0, 1.0);
        let cfg = StepperConfig::new(StepMethod::ExplicitEuler, 1e-3, 1.0);
        let traj = simulate_fractional(&p, &spec(1.0), &x0, &cfg).unwrap();
        assert!((traj.last().lambda - (-1.0f64).exp()).abs() < 2e-3);
    }

    #[test]
    fn agent_fixed_point_at_zero_price() {
        let p = params();
        let x0 = MarketState::new(0.0, vec![-10.0], vec![50.0], 0.0, 0.0);
        let cfg = StepperConfig::new(StepMethod::Rk4, 1e-2, 2.0);
        let traj = simulate_fractional(&p, &spec(0.7), &x0, &cfg).unwrap();
        for st in &traj.states {
            // The memory sum reassembles y0 from weighted copies, so the
            // fixed point holds to rounding, not bitwise.
            assert!((st.s[0] + 10.0).abs() < 1e-12);
            assert!((st.d[0] - 50.0).abs() < 1e-12);
            assert_eq!(st.lambda, 0.0);
        }
    }

    #[test]
    fn rejects_bad_orders() {
        let p = params();
        let x0 = MarketState::new(0.0, vec![0.0], vec![0.0], 0.0, 1.0);
        let cfg = StepperConfig::new(StepMethod::Rk4, 1e-2, 1.0);
        let mut s = spec(0.5);
        s.ord_gamma = 1.2;
        assert!(simulate_fractional(&p, &s, &x0, &cfg).is_err());
    }
}
