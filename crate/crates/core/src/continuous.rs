//! Fixed-step integrators for the continuous-time market models.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::discrete;
use crate::model::{
    fmt_f64, MarketParams, MarketState, MemorySpec, MemoryWeights, ModelError, Trajectory,
    TrajectoryMeta,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid stepper configuration: {0}")]
    Config(String),
    #[error("non-finite state at step {step} (t = {t}); the run is diverging")]
    NonFinite { step: usize, t: f64 },
    #[error("initial state violates the balance constraint (residual {residual:e})")]
    InconsistentInit { residual: f64 },
    #[error("lag_step {lag_step} is not an integer multiple of dt {dt}")]
    LagNotMultiple { lag_step: f64, dt: f64 },
    #[error("fractional order {0} outside (0, 1]")]
    OrderOutOfRange(f64),
    #[error("history holds {have} samples, memory depth needs {need}")]
    UnpopulatedHistory { have: usize, need: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMethod {
    ExplicitEuler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    #[serde(default)]
    pub method: StepMethod,
    pub dt: f64,
    pub t_end: f64,
}

impl StepperConfig {
    pub fn new(method: StepMethod, dt: f64, t_end: f64) -> Self {
        Self { method, dt, t_end }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(SimError::Config(format!(
                "t_end ({}) must be at least dt ({})",
                self.t_end, self.dt
            )));
        }
        Ok(())
    }

    /// Number of steps covering `[0, t_end]`, rounded to the nearest integer.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

/// Writes the `(S, D, E, lambda)` derivative of the full model into `dx`.
pub(crate) fn rhs_flat(params: &MarketParams, x: &[f64], dx: &mut [f64]) {
    let (m, n) = (params.m, params.n);
    let e = x[m + n];
    let lambda = x[m + n + 1];
    for i in 0..m {
        dx[i] = params.alpha[i] * (lambda - params.a[i] - params.b[i] * x[i]);
    }
    for j in 0..n {
        dx[m + j] = params.beta[j] * (params.c[j] - params.d[j] * x[m + j] - lambda);
    }
    dx[m + n] = total_balance(x, m, n);
    dx[m + n + 1] = -params.k_price * e + params.h_gain * (params.lambda0 - lambda);
}

/// `sum S - sum D`.
pub(crate) fn total_balance(x: &[f64], m: usize, n: usize) -> f64 {
    x[..m].iter().sum::<f64>() - x[m..m + n].iter().sum::<f64>()
}

/// Time derivative of the full market model, packed as a state.
pub fn rhs_full(params: &MarketParams, state: &MarketState) -> MarketState {
    let x = state.to_vec();
    let mut dx = vec![0.0; x.len()];
    rhs_flat(params, &x, &mut dx);
    MarketState::from_slice(state.t, params.m, params.n, &dx)
}

/// One step of `method` for the autonomous system `x' = f(x)`.
pub(crate) fn step_with<F>(method: StepMethod, x: &[f64], dt: f64, f: &mut F) -> Vec<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let dim = x.len();
    match method {
        StepMethod::ExplicitEuler => {
            let mut k1 = vec![0.0; dim];
            f(x, &mut k1);
            x.iter().zip(&k1).map(|(xi, ki)| xi + dt * ki).collect()
        }
        StepMethod::Rk4 => {
            let mut k1 = vec![0.0; dim];
            let mut k2 = vec![0.0; dim];
            let mut k3 = vec![0.0; dim];
            let mut k4 = vec![0.0; dim];
            let mut tmp = vec![0.0; dim];
            f(x, &mut k1);
            for i in 0..dim {
                tmp[i] = x[i] + 0.5 * dt * k1[i];
            }
            f(&tmp, &mut k2);
            for i in 0..dim {
                tmp[i] = x[i] + 0.5 * dt * k2[i];
            }
            f(&tmp, &mut k3);
            for i in 0..dim {
                tmp[i] = x[i] + dt * k3[i];
            }
            f(&tmp, &mut k4);
            (0..dim)
                .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
    }
}

pub(crate) fn ensure_finite(x: &[f64], step: usize, t: f64) -> Result<(), SimError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SimError::NonFinite { step, t })
    }
}

pub(crate) fn meta(model: &str, params: &MarketParams) -> TrajectoryMeta {
    TrajectoryMeta {
        model: model.to_string(),
        fingerprint: params.fingerprint(),
    }
}

fn prepare(params: &MarketParams, x0: &MarketState, cfg: &StepperConfig) -> Result<(), SimError> {
    params.clone().validate()?;
    x0.check_dims(params)?;
    cfg.validate()
}

/// Integrates the full `(S, D, E, lambda)` model.
///
/// `ExplicitEuler` applies the plain discrete update, so its output is
/// identical to [`discrete::simulate_discrete`] with the same step.
pub fn simulate_ode(
    params: &MarketParams,
    x0: &MarketState,
    cfg: &StepperConfig,
) -> Result<Trajectory, SimError> {
    prepare(params, x0, cfg)?;
    let (m, n) = (params.m, params.n);
    let t0 = x0.t;
    let mut states = Vec::with_capacity(cfg.n_steps() + 1);
    states.push(x0.clone());
    let mut x = x0.to_vec();
    let mut rhs = |x: &[f64], dx: &mut [f64]| rhs_flat(params, x, dx);
    for k in 0..cfg.n_steps() {
        x = match cfg.method {
            StepMethod::ExplicitEuler => discrete::step_flat(params, &x, cfg.dt),
            StepMethod::Rk4 => step_with(StepMethod::Rk4, &x, cfg.dt, &mut rhs),
        };
        let t = t0 + (k + 1) as f64 * cfg.dt;
        ensure_finite(&x, k + 1, t)?;
        states.push(MarketState::from_slice(t, m, n, &x));
    }
    Ok(Trajectory {
        dt: cfg.dt,
        states,
        meta: meta("continuous", params),
    })
}

/// Price that keeps `d/dt (sum S - sum D) = 0`.
pub fn balanced_price(params: &MarketParams, s: &[f64], d: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..params.m {
        num += params.alpha[i] * (params.a[i] + params.b[i] * s[i]);
        den += params.alpha[i];
    }
    for j in 0..params.n {
        num += params.beta[j] * (params.c[j] - params.d[j] * d[j]);
        den += params.beta[j];
    }
    num / den
}

/// Integrates the balanced model `0 = 1'S - 1'D` after index reduction.
///
/// The price is eliminated algebraically and each step ends with an
/// orthogonal projection back onto the constraint. `E` is reported as zero.
pub fn simulate_dae_balanced(
    params: &MarketParams,
    x0: &MarketState,
    cfg: &StepperConfig,
) -> Result<Trajectory, SimError> {
    prepare(params, x0, cfg)?;
    let (m, n) = (params.m, params.n);
    let scale = 1.0 + x0.s.iter().chain(&x0.d).map(|v| v.abs()).sum::<f64>();
    let residual = x0.s.iter().sum::<f64>() - x0.d.iter().sum::<f64>();
    if residual.abs() > 1e-9 * scale {
        return Err(SimError::InconsistentInit { residual });
    }

    let mut rhs = |y: &[f64], dy: &mut [f64]| {
        let (s, d) = y.split_at(m);
        let lambda = balanced_price(params, s, d);
        for i in 0..m {
            dy[i] = params.alpha[i] * (lambda - params.a[i] - params.b[i] * s[i]);
        }
        for j in 0..n {
            dy[m + j] = params.beta[j] * (params.c[j] - params.d[j] * d[j] - lambda);
        }
    };
    let pack = |t: f64, y: &[f64]| {
        let (s, d) = y.split_at(m);
        MarketState::new(t, s.to_vec(), d.to_vec(), 0.0, balanced_price(params, s, d))
    };

    let t0 = x0.t;
    let mut y: Vec<f64> = x0.s.iter().chain(&x0.d).copied().collect();
    let mut states = vec![pack(t0, &y)];
    for k in 0..cfg.n_steps() {
        y = step_with(cfg.method, &y, cfg.dt, &mut rhs);
        let r = y[..m].iter().sum::<f64>() - y[m..].iter().sum::<f64>();
        let shift = r / (m + n) as f64;
        y[..m].iter_mut().for_each(|v| *v -= shift);
        y[m..].iter_mut().for_each(|v| *v += shift);
        let t = t0 + (k + 1) as f64 * cfg.dt;
        ensure_finite(&y, k + 1, t)?;
        states.push(pack(t, &y));
    }
    Ok(Trajectory {
        dt: cfg.dt,
        states,
        meta: meta("balanced_dae", params),
    })
}

/// Balance residual `1'S - 1'D` per output state of a zero-imbalance run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintLog {
    pub t: Vec<f64>,
    pub residual: Vec<f64>,
}

impl ConstraintLog {
    pub fn max_abs(&self) -> f64 {
        self.residual.iter().fold(0.0, |acc, r| acc.max(r.abs()))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,balance_residual")?;
        for (t, r) in self.t.iter().zip(&self.residual) {
            writeln!(out, "{},{}", fmt_f64(*t), fmt_f64(*r))?;
        }
        Ok(())
    }
}

/// Zero-imbalance model: agents as in the full model, price relaxing to
/// `lambda0` with no imbalance feedback, `E` frozen at its initial value.
/// The balance constraint is logged, not enforced.
pub fn simulate_zero_imbalance(
    params: &MarketParams,
    x0: &MarketState,
    cfg: &StepperConfig,
) -> Result<(Trajectory, ConstraintLog), SimError> {
    prepare(params, x0, cfg)?;
    let (m, n) = (params.m, params.n);
    let mut rhs = |x: &[f64], dx: &mut [f64]| {
        rhs_flat(params, x, dx);
        dx[m + n] = 0.0;
        dx[m + n + 1] = params.h_gain * (params.lambda0 - x[m + n + 1]);
    };
    let t0 = x0.t;
    let mut x = x0.to_vec();
    let mut states = vec![x0.clone()];
    let mut log = ConstraintLog {
        t: vec![t0],
        residual: vec![total_balance(&x, m, n)],
    };
    for k in 0..cfg.n_steps() {
        x = step_with(cfg.method, &x, cfg.dt, &mut rhs);
        let t = t0 + (k + 1) as f64 * cfg.dt;
        ensure_finite(&x, k + 1, t)?;
        log.t.push(t);
        log.residual.push(total_balance(&x, m, n));
        states.push(MarketState::from_slice(t, m, n, &x));
    }
    Ok((
        Trajectory {
            dt: cfg.dt,
            states,
            meta: meta("zero_imbalance", params),
        },
        log,
    ))
}

/// Samples of the pre-history at `t0 - l * lag_step`, `l = 0..=p`.
///
/// Reads between samples hold the older sample (zero-order hold).
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    pub lag_step: f64,
    pub samples: Vec<MarketState>,
}

impl HistoryBuffer {
    /// History that is constant and equal to `x0`.
    pub fn constant(x0: &MarketState, lag_step: f64, p: usize) -> Self {
        Self {
            lag_step,
            samples: vec![x0.clone(); p + 1],
        }
    }

    pub fn depth(&self) -> usize {
        self.samples.len()
    }
}

/// Integer ratio `lag_step / dt`, or an error when it is not whole.
pub(crate) fn lag_ratio(lag_step: f64, dt: f64) -> Result<usize, SimError> {
    let ratio = lag_step / dt;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio {
        return Err(SimError::LagNotMultiple { lag_step, dt });
    }
    Ok(rounded as usize)
}

/// Contribution of one lag `l` to the derivative, evaluated at the lagged
/// state `xl` (flat layout). `E` is never lagged.
fn lag_term(params: &MarketParams, w: &MemoryWeights, l: usize, xl: &[f64], dx: &mut [f64]) {
    let (m, n) = (params.m, params.n);
    let e = xl[m + n];
    let lambda = xl[m + n + 1];
    for i in 0..m {
        dx[i] = w.alpha[l][i] * (lambda - params.a[i] - params.b[i] * xl[i]);
    }
    for j in 0..n {
        dx[m + j] = w.beta[l][j] * (params.c[j] - params.d[j] * xl[m + j] - lambda);
    }
    dx[m + n] = 0.0;
    dx[m + n + 1] = -w.k[l] * e + w.h[l] * (params.lambda0 - lambda);
}

/// Delay model: every agent and price term is a weighted sum over lags
/// `t - l * lag_step`, while `dE/dt` uses current values only.
///
/// Lagged reads land on stored grid points because `dt` divides `lag_step`.
/// Within an RK4 step the lagged terms (`l >= 1`) are held at their value
/// at the start of the step.
pub fn simulate_delay(
    params: &MarketParams,
    mem: &MemorySpec,
    history: &HistoryBuffer,
    cfg: &StepperConfig,
) -> Result<Trajectory, SimError> {
    let x0 = history
        .samples
        .first()
        .ok_or(SimError::UnpopulatedHistory {
            have: 0,
            need: mem.p + 1,
        })?;
    prepare(params, x0, cfg)?;
    let w = mem.resolve(params)?;
    if history.depth() < w.p + 1 {
        return Err(SimError::UnpopulatedHistory {
            have: history.depth(),
            need: w.p + 1,
        });
    }
    for s in &history.samples {
        s.check_dims(params)?;
    }
    let ratio = if w.p == 0 {
        1
    } else {
        lag_ratio(w.lag_step, cfg.dt)?
    };

    let (m, n) = (params.m, params.n);
    let dim = m + n + 2;
    let hist: Vec<Vec<f64>> = history.samples.iter().map(MarketState::to_vec).collect();
    let t0 = x0.t;
    let mut grid: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut states = vec![x0.clone()];
    let mut term = vec![0.0; dim];

    for k in 0..cfg.n_steps() {
        let mut lagged = vec![0.0; dim];
        for l in 1..=w.p {
            let back = l * ratio;
            let xl = if back <= k {
                &grid[k - back]
            } else {
                let sample = (back - k).div_ceil(ratio);
                &hist[sample]
            };
            lag_term(params, &w, l, xl, &mut term);
            lagged.iter_mut().zip(&term).for_each(|(acc, v)| *acc += v);
        }
        let mut rhs = |x: &[f64], dx: &mut [f64]| {
            lag_term(params, &w, 0, x, dx);
            dx[m + n] = total_balance(x, m, n);
            if w.p > 0 {
                dx.iter_mut().zip(&lagged).for_each(|(d, v)| *d += v);
            }
        };
        let x = step_with(cfg.method, &grid[k], cfg.dt, &mut rhs);
        let t = t0 + (k + 1) as f64 * cfg.dt;
        ensure_finite(&x, k + 1, t)?;
        states.push(MarketState::from_slice(t, m, n, &x));
        grid.push(x);
    }
    Ok(Trajectory {
        dt: cfg.dt,
        states,
        meta: meta("delay", params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::equilibrium_sloped;

    fn unit_params() -> MarketParams {
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

    fn eq_state(p: &MarketParams) -> MarketState {
        equilibrium_sloped(p).unwrap().state(p.m, p.n)
    }

    #[test]
    fn rhs_examples() {
        let p = unit_params();
        let d = rhs_full(&p, &eq_state(&p));
        assert_eq!(d.to_vec(), vec![0.0; 4]);

        let flat = MarketParams {
            b: vec![0.0],
            alpha: vec![0.5],
            ..unit_params()
        };
        let st = MarketState::new(0.0, vec![0.0], vec![0.0], 0.0, 30.0);
        assert_eq!(rhs_full(&flat, &st).s[0], 10.0);

        let gains = MarketParams {
            k_price: 2.0,
            h_gain: 7.0,
            ..unit_params()
        };
        let st = MarketState::new(0.0, vec![0.0], vec![0.0], 1.0, 30.0);
        assert_eq!(rhs_full(&gains, &st).lambda, -2.0);
    }

    #[test]
    fn one_euler_step() {
        let p = MarketParams {
            b: vec![0.0],
            alpha: vec![0.5],
            ..unit_params()
        };
        let x0 = MarketState::new(0.0, vec![0.0], vec![0.0], 0.0, 30.0);
        let cfg = StepperConfig::new(StepMethod::ExplicitEuler, 0.1, 0.1);
        let traj = simulate_ode(&p, &x0, &cfg).unwrap();
        assert_eq!(traj.len(), 2);
        assert!((traj.states[1].s[0] - 1.0).abs() < 1e-15);
        assert!((traj.states[1].t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let p = unit_params();
        let x0 = eq_state(&p);
        let cfg = StepperConfig::new(StepMethod::Rk4, 0.01, 10.0);
        let traj = simulate_ode(&p, &x0, &cfg).unwrap();
        assert_eq!(traj.len(), 1001);
        for st in &traj.states {
            for (a, b) in st.to_vec().iter().zip(x0.to_vec()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_config_and_detects_blowup() {
        let p = unit_params();
        let x0 = eq_state(&p);
        assert!(matches!(
            simulate_ode(&p, &x0, &StepperConfig::new(StepMethod::Rk4, 0.0, 1.0)),
            Err(SimError::Config(_))
        ));
        assert!(matches!(
            simulate_ode(&p, &x0, &StepperConfig::new(StepMethod::Rk4, 1.0, 0.5)),
            Err(SimError::Config(_))
        ));
        let wild = MarketParams {
            alpha: vec![1e3],
            beta: vec![1e3],
            ..unit_params()
        };
        let start = MarketState::new(0.0, vec![0.0], vec![0.0], 0.0, 0.0);
        let res = simulate_ode(&wild, &start, &StepperConfig::new(StepMethod::ExplicitEuler, 1.0, 500.0));
        assert!(matches!(res, Err(SimError::NonFinite { .. })), "{res:?}");
    }

    #[test]
    fn dae_constant_costs() {
        let p = MarketParams {
            b: vec![0.0],
            d: vec![0.0],
            ..unit_params()
        };
        let x0 = MarketState::new(0.0, vec![0.0], vec![0.0], 0.0, 0.0);
        let cfg = StepperConfig::new(StepMethod::Rk4, 0.1, 1.0);
        let traj = simulate_dae_balanced(&p, &x0, &cfg).unwrap();
        for st in &traj.states {
            assert_eq!(st.lambda, 30.0);
            assert!((st.s[0] - 20.0 * st.t).abs() < 1e-12);
            assert!((st.s[0] - st.d[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn dae_rejects_inconsistent_start() {
        let p = unit_params();
        let x0 = MarketState::new(0.0, vec![1.0], vec![0.0], 0.0, 0.0);
        let cfg = StepperConfig::new(StepMethod::Rk4, 0.1, 1.0);
        match simulate_dae_balanced(&p, &x0, &cfg) {
            Err(SimError::InconsistentInit { residual }) => assert_eq!(residual, 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dae_sloped_ramps_to_equilibrium() {
        let p = unit_params();
        let x0 = MarketState::new(0.0, vec![0.0], vec![0.0], 0.0, 0.0);
        let cfg = StepperConfig::new(StepMethod::Rk4, 0.01, 30.0);
        let traj = simulate_dae_balanced(&p, &x0, &cfg).unwrap();
        assert_eq!(traj.states[0].lambda, 30.0);
        let last = traj.last();
        assert!((last.s[0] - 20.0).abs() < 1e-6 && (last.d[0] - 20.0).abs() < 1e-6);
        for st in &traj.states {
            assert!((st.s[0] - st.d[0]).abs() <= 1e-8);
        }
    }

    #[test]
    fn zero_imbalance_price_decay() {
        let p = unit_params();
        let x0 = MarketState::new(0.0, vec![0.0], vec![0.0], 0.0, 50.0);
        let cfg = StepperConfig::new(StepMethod::Rk4, 0.001, 1.0);
        let (traj, log) = simulate_zero_imbalance(&p, &x0, &cfg).unwrap();
        let want = 30.0 + 20.0 * (-1.0f64).exp();
        assert!((traj.last().lambda - want).abs() < 1e-9);
        assert!((want - 37.3576).abs() < 1e-4);
        assert!(log.max_abs() > 0.0);
        assert_eq!(log.residual.len(), traj.len());
    }

    #[test]
    fn zero_imbalance_symmetric_is_balanced() {
        let p = MarketParams {
            b: vec![0.0],
            d: vec![0.0],
            ..unit_params()
        };
        let x0 = MarketState::new(0.0, vec![5.0], vec![5.0], 0.0, 30.0);
        let cfg = StepperConfig::new(StepMethod::Rk4, 0.01, 2.0);
        let (_, log) = simulate_zero_imbalance(&p, &x0, &cfg).unwrap();
        assert!(log.residual.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn delay_validation() {
        let p = unit_params();
        let x0 = eq_state(&p);
        let mem = MemorySpec {
            p: 1,
            lag_step: 0.25,
            w_alpha: vec![vec![0.5], vec![0.5]],
            w_beta: vec![vec![0.5], vec![0.5]],
            w_k: None,
            w_h: None,
            w_e: None,
        };
        let cfg = StepperConfig::new(StepMethod::Rk4, 0.1, 1.0);
        let hist = HistoryBuffer::constant(&x0, 0.25, 1);
        assert!(matches!(
            simulate_delay(&p, &mem, &hist, &cfg),
            Err(SimError::LagNotMultiple { .. })
        ));
        let short = HistoryBuffer::constant(&x0, 0.25, 0);
        let cfg = StepperConfig::new(StepMethod::Rk4, 0.05, 1.0);
        assert!(matches!(
            simulate_delay(&p, &mem, &short, &cfg),
            Err(SimError::UnpopulatedHistory { have: 1, need: 2 })
        ));
        assert!(simulate_delay(&p, &mem, &hist, &cfg).is_ok());
    }

    #[test]
    fn delay_history_reads_hold_older_sample() {
        // With zero weight on lag 0 the first steps see only the history.
        let p = unit_params();
        let x0 = MarketState::new(0.0, vec![0.0], vec![0.0], 0.0, 30.0);
        let older = MarketState::new(-1.0, vec![0.0], vec![0.0], 0.0, 40.0);
        let mem = MemorySpec {
            p: 1,
            lag_step: 1.0,
            w_alpha: vec![vec![0.0], vec![1.0]],
            w_beta: vec![vec![0.0], vec![1.0]],
            w_k: Some(vec![0.0, 0.0]),
            w_h: Some(vec![0.0, 0.0]),
            w_e: None,
        };
        let hist = HistoryBuffer {
            lag_step: 1.0,
            samples: vec![x0.clone(), older],
        };
        let cfg = StepperConfig::new(StepMethod::ExplicitEuler, 0.5, 1.0);
        let traj = simulate_delay(&p, &mem, &hist, &cfg).unwrap();
        // dS = 40 - 10 - 0 read from the t = -1 sample for t in [0, 1).
        assert_eq!(traj.states[1].s[0], 15.0);
        assert_eq!(traj.states[2].s[0], 30.0);
    }
}
