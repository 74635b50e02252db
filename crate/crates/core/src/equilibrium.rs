//! Fixed points of the market models.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::model::{
    assemble_linear_system, LinearSystem, MarketParams, MarketState, MemoryWeights, SystemVariant,
};

/// Singular values below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EquilibriumError {
    #[error("closed form needs b_i > 0 and d_j > 0 ({0} is zero); use equilibrium_solve instead")]
    ZeroSlope(String),
    #[error("state has length {actual}, system has dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumStatus {
    Unique,
    Inconsistent,
    Underdetermined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    /// Solution vector in the system's own variable ordering.
    pub x: Vec<f64>,
    pub labels: Vec<String>,
    pub residual_norm: f64,
    pub status: EquilibriumStatus,
}

impl EquilibriumResult {
    /// Interprets `x` as a market state. Systems without an `E` row (the
    /// balanced DAE) report `E = 0`.
    pub fn state(&self, m: usize, n: usize) -> MarketState {
        let x = &self.x;
        if x.len() == m + n + 2 {
            MarketState::from_slice(0.0, m, n, x)
        } else {
            MarketState::new(0.0, x[..m].to_vec(), x[m..m + n].to_vec(), 0.0, x[m + n])
        }
    }
}

/// Closed-form equilibrium of the sloped market.
///
/// The imbalance is the value that holds the price law stationary,
/// `E* = h (lambda0 - lambda*) / k`, and zero when `k = 0`.
pub fn equilibrium_sloped(params: &MarketParams) -> Result<EquilibriumResult, EquilibriumError> {
    if let Some(i) = params.b.iter().position(|&b| b <= 0.0) {
        return Err(EquilibriumError::ZeroSlope(format!("b[{i}]")));
    }
    if let Some(j) = params.d.iter().position(|&d| d <= 0.0) {
        return Err(EquilibriumError::ZeroSlope(format!("d[{j}]")));
    }
    let num: f64 = params.a.iter().zip(&params.b).map(|(a, b)| a / b).sum::<f64>()
        + params.c.iter().zip(&params.d).map(|(c, d)| c / d).sum::<f64>();
    let den: f64 = params.b.iter().map(|b| 1.0 / b).sum::<f64>()
        + params.d.iter().map(|d| 1.0 / d).sum::<f64>();
    let lambda = num / den;
    let s: Vec<f64> = params
        .a
        .iter()
        .zip(&params.b)
        .map(|(a, b)| (lambda - a) / b)
        .collect();
    let d: Vec<f64> = params
        .c
        .iter()
        .zip(&params.d)
        .map(|(c, slope)| (c - lambda) / slope)
        .collect();
    let e = stationary_imbalance(params.k_price, params.h_gain, params.lambda0, lambda);
    let state = MarketState::new(0.0, s, d, e, lambda);
    let sys = assemble_linear_system(params, SystemVariant::FullSloped);
    let residual_norm = sys.apply(&DVector::from_vec(state.to_vec())).norm();
    let mut labels: Vec<String> = (1..=params.m).map(|i| format!("S_{i}")).collect();
    labels.extend((1..=params.n).map(|j| format!("D_{j}")));
    labels.push("E".into());
    labels.push("lambda".into());
    Ok(EquilibriumResult {
        x: state.to_vec(),
        labels,
        residual_norm,
        status: EquilibriumStatus::Unique,
    })
}

fn stationary_imbalance(k: f64, h: f64, lambda0: f64, lambda: f64) -> f64 {
    if k > 0.0 {
        h * (lambda0 - lambda) / k
    } else {
        0.0
    }
}

/// Fixed point of the lagged models. Producer and consumer terms vanish at
/// the same `(S*, D*, lambda*)` as the plain model; the imbalance follows the
/// summed price weights.
pub fn equilibrium_with_memory(
    params: &MarketParams,
    weights: &MemoryWeights,
) -> Result<EquilibriumResult, EquilibriumError> {
    let mut res = equilibrium_sloped(params)?;
    let lam_idx = params.m + params.n + 1;
    let lambda = res.x[lam_idx];
    let wk: f64 = weights.k.iter().sum();
    let wh: f64 = weights.h.iter().sum();
    res.x[lam_idx - 1] = stationary_imbalance(wk, wh, params.lambda0, lambda);
    Ok(res)
}

/// Solves `A x* + B = 0` through an SVD, classifying the solution set.
pub fn equilibrium_solve(sys: &LinearSystem) -> EquilibriumResult {
    equilibrium_solve_with_tol(sys, RANK_TOL)
}

pub fn equilibrium_solve_with_tol(sys: &LinearSystem, rank_tol: f64) -> EquilibriumResult {
    let rhs = -&sys.b_vec;
    let (x, rank) = min_norm_solve(&sys.a_mat, &rhs, rank_tol);
    let dim = sys.dim();
    let res_norm = residual_vec(sys, &x).norm();
    let status = if rank == dim {
        EquilibriumStatus::Unique
    } else if res_norm <= 1e-9 * (1.0 + sys.b_vec.norm()) {
        EquilibriumStatus::Underdetermined
    } else {
        EquilibriumStatus::Inconsistent
    };
    EquilibriumResult {
        x: x.iter().copied().collect(),
        labels: sys.labels.clone(),
        residual_norm: res_norm,
        status,
    }
}

/// Minimum-norm least-squares solution and numerical rank.
pub(crate) fn min_norm_solve(
    a: &DMatrix<f64>,
    rhs: &DVector<f64>,
    rank_tol: f64,
) -> (DVector<f64>, usize) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.max();
    let cutoff = rank_tol * sigma_max;
    let mut x = DVector::zeros(a.ncols());
    let mut rank = 0;
    for (i, &sv) in svd.singular_values.iter().enumerate() {
        if sv > cutoff && sv > 0.0 {
            rank += 1;
            let coef = u.column(i).dot(rhs) / sv;
            x += v_t.row(i).transpose() * coef;
        }
    }
    (x, rank)
}

fn residual_vec(sys: &LinearSystem, x: &DVector<f64>) -> DVector<f64> {
    sys.apply(x)
}

/// `||A x + B||_2`.
pub fn residual(sys: &LinearSystem, x: &[f64]) -> Result<f64, EquilibriumError> {
    if x.len() != sys.dim() {
        return Err(EquilibriumError::DimensionMismatch {
            expected: sys.dim(),
            actual: x.len(),
        });
    }
    Ok(residual_vec(sys, &DVector::from_column_slice(x)).norm())
}
