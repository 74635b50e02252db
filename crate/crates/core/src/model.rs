//! Market parameters, state vectors and linear-system assembly.
//!
//! Every model variant shares the variable ordering
//! `(S_1..S_m, D_1..D_n, [E], lambda)`. The imbalance `E` is absent only from
//! the balanced (algebraic-constraint) form.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dimension mismatch on `{field}`: expected {expected}, got {actual}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("`{field}[{index}]` = {value} violates {bound}")]
    SignViolation {
        field: &'static str,
        index: usize,
        bound: &'static str,
        value: f64,
    },
    #[error("`{field}` contains a non-finite value")]
    NonFinite { field: &'static str },
    #[error("unknown system variant `{0}`")]
    UnknownVariant(String),
}

/// Producer, consumer and market coefficients.
///
/// Constant-cost markets are the special case `b = 0`, `d = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub m: usize,
    pub n: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub k_price: f64,
    pub h_gain: f64,
    pub lambda0: f64,
}

fn check_len(field: &'static str, v: &[f64], expected: usize) -> Result<(), ModelError> {
    if v.len() != expected {
        return Err(ModelError::DimensionMismatch {
            field,
            expected,
            actual: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite { field });
    }
    Ok(())
}

fn check_sign(
    field: &'static str,
    v: &[f64],
    bound: &'static str,
    ok: impl Fn(f64) -> bool,
) -> Result<(), ModelError> {
    match v.iter().position(|&x| !ok(x)) {
        Some(index) => Err(ModelError::SignViolation {
            field,
            index,
            bound,
            value: v[index],
        }),
        None => Ok(()),
    }
}

impl MarketParams {
    /// Checks shapes, finiteness and sign constraints; returns the params unchanged.
    pub fn validate(self) -> Result<Self, ModelError> {
        if self.m < 1 {
            return Err(ModelError::DimensionMismatch {
                field: "m",
                expected: 1,
                actual: 0,
            });
        }
        if self.n < 1 {
            return Err(ModelError::DimensionMismatch {
                field: "n",
                expected: 1,
                actual: 0,
            });
        }
        check_len("a", &self.a, self.m)?;
        check_len("b", &self.b, self.m)?;
        check_len("alpha", &self.alpha, self.m)?;
        check_len("c", &self.c, self.n)?;
        check_len("d", &self.d, self.n)?;
        check_len("beta", &self.beta, self.n)?;
        for (field, v) in [
            ("k_price", self.k_price),
            ("h_gain", self.h_gain),
            ("lambda0", self.lambda0),
        ] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite { field });
            }
        }
        check_sign("alpha", &self.alpha, "alpha > 0", |x| x > 0.0)?;
        check_sign("beta", &self.beta, "beta > 0", |x| x > 0.0)?;
        check_sign("b", &self.b, "b >= 0", |x| x >= 0.0)?;
        check_sign("d", &self.d, "d >= 0", |x| x >= 0.0)?;
        check_sign("k_price", &[self.k_price], "k >= 0", |x| x >= 0.0)?;
        check_sign("h_gain", &[self.h_gain], "h >= 0", |x| x >= 0.0)?;
        Ok(self)
    }

    /// True when every producer and consumer has a strictly positive slope.
    pub fn is_sloped(&self) -> bool {
        self.b.iter().all(|&x| x > 0.0) && self.d.iter().all(|&x| x > 0.0)
    }

    /// Dimension of the full `(S, D, E, lambda)` state.
    pub fn state_dim(&self) -> usize {
        self.m + self.n + 2
    }

    /// Stable hex digest of the parameter set, used to tag trajectories.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("params serialize");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// `a_i + b_i S_i` for every producer.
pub fn marginal_cost(params: &MarketParams, s: &[f64]) -> Result<Vec<f64>, ModelError> {
    if s.len() != params.m {
        return Err(ModelError::DimensionMismatch {
            field: "S",
            expected: params.m,
            actual: s.len(),
        });
    }
    Ok(s.iter()
        .zip(params.a.iter().zip(&params.b))
        .map(|(&s, (&a, &b))| a + b * s)
        .collect())
}

/// `c_j - d_j D_j` for every consumer.
pub fn marginal_benefit(params: &MarketParams, d: &[f64]) -> Result<Vec<f64>, ModelError> {
    if d.len() != params.n {
        return Err(ModelError::DimensionMismatch {
            field: "D",
            expected: params.n,
            actual: d.len(),
        });
    }
    Ok(d.iter()
        .zip(params.c.iter().zip(&params.d))
        .map(|(&d, (&c, &slope))| c - slope * d)
        .collect())
}

/// Instantaneous market state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    #[serde(default)]
    pub t: f64,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(rename = "E", default)]
    pub e: f64,
    pub lambda: f64,
}

impl MarketState {
    pub fn new(t: f64, s: Vec<f64>, d: Vec<f64>, e: f64, lambda: f64) -> Self {
        Self { t, s, d, e, lambda }
    }

    /// Flattens to `(S, D, E, lambda)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.s.len() + self.d.len() + 2);
        v.extend_from_slice(&self.s);
        v.extend_from_slice(&self.d);
        v.push(self.e);
        v.push(self.lambda);
        v
    }

    /// Inverse of [`MarketState::to_vec`].
    pub fn from_slice(t: f64, m: usize, n: usize, x: &[f64]) -> Self {
        debug_assert_eq!(x.len(), m + n + 2);
        Self {
            t,
            s: x[..m].to_vec(),
            d: x[m..m + n].to_vec(),
            e: x[m + n],
            lambda: x[m + n + 1],
        }
    }

    pub fn check_dims(&self, params: &MarketParams) -> Result<(), ModelError> {
        check_len("S", &self.s, params.m)?;
        check_len("D", &self.d, params.n)?;
        if !self.e.is_finite() {
            return Err(ModelError::NonFinite { field: "E" });
        }
        if !self.lambda.is_finite() {
            return Err(ModelError::NonFinite { field: "lambda" });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.s.iter().chain(&self.d).all(|x| x.is_finite())
            && self.e.is_finite()
            && self.lambda.is_finite()
    }
}

/// Memory weights for the lagged discrete and delay models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySpec {
    pub p: usize,
    pub lag_step: f64,
    /// `(p+1) x m`, row `l` holds the producer weights for lag `l`.
    pub w_alpha: Vec<Vec<f64>>,
    /// `(p+1) x n`.
    pub w_beta: Vec<Vec<f64>>,
    /// Imbalance-feedback weights; uniform `k_price` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_k: Option<Vec<f64>>,
    /// Price-relaxation weights; uniform `h_gain` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_h: Option<Vec<f64>>,
    /// Imbalance-accumulation weights of the discrete memory model; all ones
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_e: Option<Vec<f64>>,
}

/// Memory weights with defaults filled in and shapes checked.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryWeights {
    pub p: usize,
    pub lag_step: f64,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub k: Vec<f64>,
    pub h: Vec<f64>,
    pub e: Vec<f64>,
}

impl MemorySpec {
    /// Weights that place the plain response rates on lag zero only.
    pub fn zero_lag(params: &MarketParams) -> Self {
        Self {
            p: 0,
            lag_step: 1.0,
            w_alpha: vec![params.alpha.clone()],
            w_beta: vec![params.beta.clone()],
            w_k: None,
            w_h: None,
            w_e: None,
        }
    }

    pub fn resolve(&self, params: &MarketParams) -> Result<MemoryWeights, ModelError> {
        let depth = self.p + 1;
        if !(self.lag_step > 0.0 && self.lag_step.is_finite()) {
            return Err(ModelError::SignViolation {
                field: "lag_step",
                index: 0,
                bound: "lag_step > 0",
                value: self.lag_step,
            });
        }
        if self.w_alpha.len() != depth {
            return Err(ModelError::DimensionMismatch {
                field: "w_alpha",
                expected: depth,
                actual: self.w_alpha.len(),
            });
        }
        if self.w_beta.len() != depth {
            return Err(ModelError::DimensionMismatch {
                field: "w_beta",
                expected: depth,
                actual: self.w_beta.len(),
            });
        }
        for row in &self.w_alpha {
            check_len("w_alpha", row, params.m)?;
        }
        for row in &self.w_beta {
            check_len("w_beta", row, params.n)?;
        }
        let fill = |field: &'static str, w: &Option<Vec<f64>>, default: f64| match w {
            Some(v) => check_len(field, v, depth).map(|_| v.clone()),
            None => Ok(vec![default; depth]),
        };
        Ok(MemoryWeights {
            p: self.p,
            lag_step: self.lag_step,
            alpha: self.w_alpha.clone(),
            beta: self.w_beta.clone(),
            k: fill("w_k", &self.w_k, params.k_price)?,
            h: fill("w_h", &self.w_h, params.h_gain)?,
            e: fill("w_e", &self.w_e, 1.0)?,
        })
    }
}

/// Exogenous centre-of-inertia frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrequencySignal {
    Constant(f64),
    /// `(t, omega)` pairs sorted by time, sampled with a zero-order hold.
    Samples(Vec<(f64, f64)>),
}

impl FrequencySignal {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            FrequencySignal::Constant(w) => *w,
            FrequencySignal::Samples(samples) => {
                let idx = samples.partition_point(|&(ts, _)| ts <= t);
                samples[idx.saturating_sub(1)].1
            }
        }
    }

    /// Parses a two-column `t,omega` CSV. A non-numeric first line is
    /// treated as a header.
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 2 {
                return Err(format!("line {}: expected 2 columns", lineno + 1));
            }
            match (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
                (Ok(t), Ok(w)) => samples.push((t, w)),
                _ if lineno == 0 => continue,
                _ => return Err(format!("line {}: non-numeric value", lineno + 1)),
            }
        }
        if samples.is_empty() {
            return Err("no samples".into());
        }
        if samples.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err("sample times must be non-decreasing".into());
        }
        Ok(FrequencySignal::Samples(samples))
    }
}

fn default_signal() -> Option<FrequencySignal> {
    None
}

/// Caputo orders and frequency-control coefficients of the fractional model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalSpec {
    pub ord_alpha: Vec<f64>,
    pub ord_beta: Vec<f64>,
    pub ord_gamma: f64,
    pub h_d: f64,
    pub k_e: f64,
    pub omega_ref: f64,
    /// Defaults to a constant equal to `omega_ref`.
    #[serde(default = "default_signal", skip_serializing_if = "Option::is_none")]
    pub omega_coi: Option<FrequencySignal>,
    /// Keep only the most recent `history_limit` Grünwald–Letnikov terms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_limit: Option<usize>,
}

impl FractionalSpec {
    pub fn validate(&self, params: &MarketParams) -> Result<(), ModelError> {
        check_len("ord_alpha", &self.ord_alpha, params.m)?;
        check_len("ord_beta", &self.ord_beta, params.n)?;
        let in_range = |x: f64| x > 0.0 && x <= 1.0;
        check_sign("ord_alpha", &self.ord_alpha, "0 < order <= 1", in_range)?;
        check_sign("ord_beta", &self.ord_beta, "0 < order <= 1", in_range)?;
        check_sign("ord_gamma", &[self.ord_gamma], "0 < order <= 1", in_range)?;
        check_sign("h_d", &[self.h_d], "H_d >= 0", |x| x >= 0.0)?;
        for (field, v) in [("k_e", self.k_e), ("omega_ref", self.omega_ref)] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite { field });
            }
        }
        if let Some(FrequencySignal::Samples(s)) = &self.omega_coi {
            if s.is_empty() {
                return Err(ModelError::DimensionMismatch {
                    field: "omega_coi",
                    expected: 1,
                    actual: 0,
                });
            }
        }
        Ok(())
    }

    pub fn omega_coi_at(&self, t: f64) -> f64 {
        self.omega_coi
            .as_ref()
            .map_or(self.omega_ref, |sig| sig.at(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemVariant {
    /// Constant marginal curves (slopes ignored) over `(S, D, E, lambda)`.
    FullConstant,
    /// Full model including the `-alpha_i b_i`, `-beta_j d_j` diagonal.
    FullSloped,
    /// Balanced DAE over `(S, D, lambda)` with a singular mass matrix.
    BalancedDae,
}

impl FromStr for SystemVariant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full_constant" => Ok(SystemVariant::FullConstant),
            "full_sloped" => Ok(SystemVariant::FullSloped),
            "balanced_dae" => Ok(SystemVariant::BalancedDae),
            other => Err(ModelError::UnknownVariant(other.to_string())),
        }
    }
}

impl fmt::Display for SystemVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemVariant::FullConstant => "full_constant",
            SystemVariant::FullSloped => "full_sloped",
            SystemVariant::BalancedDae => "balanced_dae",
        })
    }
}

/// `E x' = A x + B`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub e_mat: DMatrix<f64>,
    pub a_mat: DMatrix<f64>,
    pub b_vec: DVector<f64>,
    pub labels: Vec<String>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.a_mat.nrows()
    }

    /// `A x + B`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a_mat * x + &self.b_vec
    }
}

fn state_labels(m: usize, n: usize, with_imbalance: bool) -> Vec<String> {
    let mut labels: Vec<String> = (1..=m).map(|i| format!("S_{i}")).collect();
    labels.extend((1..=n).map(|j| format!("D_{j}")));
    if with_imbalance {
        labels.push("E".into());
    }
    labels.push("lambda".into());
    labels
}

pub fn assemble_linear_system(params: &MarketParams, variant: SystemVariant) -> LinearSystem {
    let (m, n) = (params.m, params.n);
    let with_imbalance = variant != SystemVariant::BalancedDae;
    let dim = if with_imbalance { m + n + 2 } else { m + n + 1 };
    let lam = dim - 1;
    let slopes = variant != SystemVariant::FullConstant;

    let mut e_mat = DMatrix::<f64>::identity(dim, dim);
    let mut a_mat = DMatrix::<f64>::zeros(dim, dim);
    let mut b_vec = DVector::<f64>::zeros(dim);

    for i in 0..m {
        let alpha = params.alpha[i];
        a_mat[(i, lam)] = alpha;
        if slopes {
            a_mat[(i, i)] = -alpha * params.b[i];
        }
        b_vec[i] = -alpha * params.a[i];
    }
    for j in 0..n {
        let row = m + j;
        let beta = params.beta[j];
        a_mat[(row, lam)] = -beta;
        if slopes {
            a_mat[(row, row)] = -beta * params.d[j];
        }
        b_vec[row] = beta * params.c[j];
    }

    // Balance row: dE/dt in the full model, algebraic constraint otherwise.
    let balance = m + n;
    for i in 0..m {
        a_mat[(balance, i)] = 1.0;
    }
    for j in 0..n {
        a_mat[(balance, m + j)] = -1.0;
    }

    if with_imbalance {
        a_mat[(lam, balance)] = -params.k_price;
        a_mat[(lam, lam)] = -params.h_gain;
        b_vec[lam] = params.h_gain * params.lambda0;
    } else {
        e_mat[(lam, lam)] = 0.0;
    }

    LinearSystem {
        e_mat,
        a_mat,
        b_vec,
        labels: state_labels(m, n, with_imbalance),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub model: String,
    pub fingerprint: String,
}

/// States at uniform spacing `dt`, starting from `states[0].t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<MarketState>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn last(&self) -> &MarketState {
        self.states.last().expect("trajectory holds at least x0")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn csv_header(m: usize, n: usize) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend(state_labels(m, n, true));
        cols.join(",")
    }

    /// Writes `t,S_1..S_m,D_1..D_n,E,lambda` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let first = &self.states[0];
        writeln!(out, "{}", Self::csv_header(first.s.len(), first.d.len()))?;
        for st in &self.states {
            let mut line = fmt_f64(st.t);
            for v in st.s.iter().chain(&st.d).chain([&st.e, &st.lambda]) {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Locale-free scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
