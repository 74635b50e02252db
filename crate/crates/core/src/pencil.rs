//! Matrix-pencil analysis of `E x' = A x + B`.
//!
//! Classification samples `det(sE - A)` on a circle and recovers the
//! characteristic polynomial with a discrete Fourier transform. The degree of
//! that polynomial fixes how many generalized eigenvalues are finite; the
//! finite ones are then computed by shift-and-invert on
//! `(A - sigma E)^{-1} E`, whose zero eigenvalues are the infinite ones.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::Serialize;

pub type C64 = Complex<f64>;

/// `|Re(lambda)| <= MARGINAL_TOL` counts as on the imaginary axis.
pub const MARGINAL_TOL: f64 = 1e-8;
/// A system is well damped when every non-zero finite mode has `zeta` above this.
pub const WELL_DAMPED_ZETA: f64 = 0.05;
/// Finite eigenvalues with modulus at or below this are treated as zero.
pub const ZERO_TOL: f64 = 1e-10;
/// Trailing characteristic-polynomial coefficients below this fraction of the
/// largest (scaled) coefficient are dropped.
pub const POLY_TRIM_TOL: f64 = 1e-9;
/// Eigenvalue sign threshold used by the Lyapunov checks.
pub const DEFINITENESS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PencilError {
    #[error("E is {e_rows}x{e_cols} but A is {a_rows}x{a_cols}")]
    ShapeMismatch {
        e_rows: usize,
        e_cols: usize,
        a_rows: usize,
        a_cols: usize,
    },
    #[error("pencil is singular: det(sE - A) vanishes identically")]
    SingularPencil,
    #[error("empty mode list")]
    EmptyModes,
    #[error("matrix `{0}` must be square and non-empty")]
    NotSquare(&'static str),
    #[error("matrix `{0}` is not symmetric")]
    NotSymmetric(&'static str),
    #[error("Q must be positive definite")]
    NotPositiveDefinite,
    #[error("A is not Hurwitz (max Re(lambda) = {0}); no positive definite solution exists")]
    NotHurwitz(f64),
    #[error("Lyapunov operator is singular")]
    SingularOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PencilKind {
    Regular,
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PencilClass {
    pub kind: PencilKind,
    /// Coefficients of `det(sE - A)` in ascending powers (regular only),
    /// scaled by `+-1` so the leading coefficient is positive.
    pub char_poly: Option<Vec<f64>>,
}

impl PencilClass {
    pub fn degree(&self) -> Option<usize> {
        self.char_poly.as_ref().map(|c| c.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Finite,
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeMetrics {
    pub zeta: f64,
    pub natural_freq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenMode {
    /// Infinite modes carry `+inf` here; check `kind` first.
    pub value: C64,
    pub kind: ModeKind,
    pub damping: Option<f64>,
    pub natural_freq: Option<f64>,
    pub right_vec: Option<DVector<C64>>,
    pub left_vec: Option<DVector<C64>>,
}

impl EigenMode {
    pub fn finite(value: C64) -> Self {
        let metrics = mode_metrics(value);
        Self {
            value,
            kind: ModeKind::Finite,
            damping: metrics.map(|mm| mm.zeta),
            natural_freq: metrics.map(|mm| mm.natural_freq),
            right_vec: None,
            left_vec: None,
        }
    }

    pub fn infinite() -> Self {
        Self {
            value: C64::new(f64::INFINITY, 0.0),
            kind: ModeKind::Infinite,
            damping: None,
            natural_freq: None,
            right_vec: None,
            left_vec: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.kind == ModeKind::Finite
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AsymptoticallyStable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub modes: Vec<EigenMode>,
    pub n_finite: usize,
    pub n_infinite: usize,
    pub verdict: Verdict,
    pub well_damped: bool,
}

#[derive(Serialize)]
struct ModeJson {
    re: Option<f64>,
    im: Option<f64>,
    kind: ModeKind,
    zeta: Option<f64>,
    #[serde(rename = "fn")]
    f_n: Option<f64>,
}

#[derive(Serialize)]
struct SpectrumJson {
    modes: Vec<ModeJson>,
    p: usize,
    q: usize,
    verdict: Verdict,
    well_damped: bool,
}

impl SpectrumReport {
    fn from_modes(mut modes: Vec<EigenMode>) -> Self {
        sort_modes(&mut modes);
        let n_finite = modes.iter().filter(|m| m.is_finite()).count();
        let n_infinite = modes.len() - n_finite;
        let (verdict, well_damped) = verdict_of(&modes);
        Self {
            modes,
            n_finite,
            n_infinite,
            verdict,
            well_damped,
        }
    }

    pub fn finite_values(&self) -> Vec<C64> {
        self.modes
            .iter()
            .filter(|m| m.is_finite())
            .map(|m| m.value)
            .collect()
    }

    pub fn to_json(&self) -> String {
        let doc = SpectrumJson {
            modes: self
                .modes
                .iter()
                .map(|m| ModeJson {
                    re: m.is_finite().then_some(m.value.re),
                    im: m.is_finite().then_some(m.value.im),
                    kind: m.kind,
                    zeta: m.damping,
                    f_n: m.natural_freq,
                })
                .collect(),
            p: self.n_finite,
            q: self.n_infinite,
            verdict: self.verdict,
            well_damped: self.well_damped,
        };
        serde_json::to_string_pretty(&doc).expect("spectrum serializes")
    }
}

fn sort_modes(modes: &mut [EigenMode]) {
    modes.sort_by(|x, y| match (x.kind, y.kind) {
        (ModeKind::Finite, ModeKind::Infinite) => std::cmp::Ordering::Less,
        (ModeKind::Infinite, ModeKind::Finite) => std::cmp::Ordering::Greater,
        (ModeKind::Infinite, ModeKind::Infinite) => std::cmp::Ordering::Equal,
        (ModeKind::Finite, ModeKind::Finite) => y
            .value
            .re
            .total_cmp(&x.value.re)
            .then(y.value.im.total_cmp(&x.value.im)),
    });
}

fn check_shapes(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<(), PencilError> {
    if e.shape() != a.shape() {
        return Err(PencilError::ShapeMismatch {
            e_rows: e.nrows(),
            e_cols: e.ncols(),
            a_rows: a.nrows(),
            a_cols: a.ncols(),
        });
    }
    Ok(())
}

/// Radius on which the determinant is sampled, roughly the eigenvalue scale.
fn sample_radius(e: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let (ne, na) = (e.norm(), a.norm());
    if ne > 0.0 && na > 0.0 {
        na / ne
    } else {
        1.0
    }
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Polynomial coefficients of `det(sE - A)` on the scaled variable `s / r`,
/// plus the largest sampled determinant modulus.
fn scaled_char_poly(e: &DMatrix<f64>, a: &DMatrix<f64>, r: f64) -> (Vec<f64>, f64) {
    let dim = e.nrows();
    let samples = dim + 1;
    let ec = to_complex(e);
    let ac = to_complex(a);
    let nodes: Vec<C64> = (0..samples)
        .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / samples as f64))
        .collect();
    let dets: Vec<C64> = nodes
        .iter()
        .map(|&w| (&ec * (w * r) - &ac).determinant())
        .collect();
    let max_det = dets.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let coeffs = (0..samples)
        .map(|j| {
            let acc: C64 = dets
                .iter()
                .zip(&nodes)
                .map(|(&p, &w)| p * w.powu(j as u32).conj())
                .sum();
            acc.re / samples as f64
        })
        .collect();
    (coeffs, max_det)
}

/// Classifies `sE - A` as regular or singular.
pub fn classify_pencil(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<PencilClass, PencilError> {
    check_shapes(e, a)?;
    let singular = PencilClass {
        kind: PencilKind::Singular,
        char_poly: None,
    };
    if !e.is_square() || e.nrows() == 0 {
        return Ok(singular);
    }
    let dim = e.nrows();
    let r = sample_radius(e, a);
    let (mut scaled, max_det) = scaled_char_poly(e, a, r);
    let scale = r * e.norm() + a.norm();
    if scale == 0.0 || max_det <= 1e-12 * scale.powi(dim as i32) {
        return Ok(singular);
    }

    let biggest = scaled.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
    let rank_e = e.rank(1e-10 * e.norm().max(f64::MIN_POSITIVE));
    scaled.truncate(rank_e + 1);
    while scaled.len() > 1 && scaled.last().unwrap().abs() < POLY_TRIM_TOL * biggest {
        scaled.pop();
    }
    // Sign is normalized so the leading coefficient is positive.
    let sign = scaled.last().unwrap().signum();
    let coeffs = scaled
        .iter()
        .enumerate()
        .map(|(j, c)| sign * c / r.powi(j as i32))
        .collect();
    Ok(PencilClass {
        kind: PencilKind::Regular,
        char_poly: Some(coeffs),
    })
}

/// Eigenvalues of a real square matrix.
///
/// The real Schur iteration has no exceptional shifts and can stall on
/// repeated eigenvalues at machine-epsilon deflation, so it runs with an
/// iteration cap and a progressively looser deflation threshold, falling back
/// to the complex Schur form.
pub(crate) fn eigenvalues(m: &DMatrix<f64>) -> Vec<C64> {
    let cap = 60 * m.nrows().max(1);
    for eps in [f64::EPSILON, 1e-14, 1e-12] {
        if let Some(schur) = Schur::try_new(m.clone(), eps, cap) {
            return schur.complex_eigenvalues().iter().copied().collect();
        }
    }
    for eps in [f64::EPSILON, 1e-14, 1e-12, 1e-10] {
        if let Some(schur) = Schur::try_new(to_complex(m), eps, cap) {
            let (_, t) = schur.unpack();
            return t.diagonal().iter().copied().collect();
        }
    }
    panic!("Schur iteration failed to converge on a {}x{} matrix", m.nrows(), m.ncols());
}

/// Roots of a polynomial given in ascending coefficients, via the
/// eigenvalues of its companion matrix.
pub fn poly_roots(coeffs: &[f64]) -> Vec<C64> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    eigenvalues(&comp)
}

/// `zeta = -Re / |lambda|`, `f_n = |lambda| / 2 pi`; `None` at the origin.
pub fn mode_metrics(lambda: C64) -> Option<ModeMetrics> {
    let mag = lambda.norm();
    if !(mag > ZERO_TOL) || !mag.is_finite() {
        return None;
    }
    Some(ModeMetrics {
        zeta: -lambda.re / mag,
        natural_freq: mag / (2.0 * PI),
    })
}

fn verdict_of(modes: &[EigenMode]) -> (Verdict, bool) {
    let finite: Vec<&EigenMode> = modes.iter().filter(|m| m.is_finite()).collect();
    let max_re = finite
        .iter()
        .map(|m| m.value.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let verdict = if max_re < -MARGINAL_TOL {
        Verdict::AsymptoticallyStable
    } else if max_re <= MARGINAL_TOL {
        Verdict::Marginal
    } else {
        Verdict::Unstable
    };
    // Zero modes have no damping ratio and are skipped.
    let well_damped = verdict != Verdict::Unstable
        && finite
            .iter()
            .filter_map(|m| mode_metrics(m.value))
            .all(|mm| mm.zeta > WELL_DAMPED_ZETA);
    (verdict, well_damped)
}

/// Stability verdict over the finite modes plus the well-damped flag.
/// A mode set with no finite modes is vacuously stable.
pub fn stability_verdict(modes: &[EigenMode]) -> Result<(Verdict, bool), PencilError> {
    if modes.is_empty() {
        return Err(PencilError::EmptyModes);
    }
    Ok(verdict_of(modes))
}

fn pick_shift(e: &DMatrix<f64>, a: &DMatrix<f64>, r: f64) -> f64 {
    const CANDIDATES: [f64; 6] = [0.5377, -0.8193, 1.3141, -1.6523, 0.2719, 2.2347];
    let mut best = (f64::NEG_INFINITY, CANDIDATES[0] * r);
    for c in CANDIDATES {
        let sigma = c * r;
        let sv = (a - e * sigma).singular_values();
        let quality = sv.min() / sv.max().max(f64::MIN_POSITIVE);
        if quality > best.0 {
            best = (quality, sigma);
        }
    }
    best.1
}

/// Finite generalized eigenvalues, `count` of them.
fn finite_by_shift_invert(e: &DMatrix<f64>, a: &DMatrix<f64>, count: usize) -> Vec<C64> {
    if count == 0 {
        return Vec::new();
    }
    let r = sample_radius(e, a);
    let sigma = pick_shift(e, a, r);
    let shifted = (a - e * sigma).lu();
    let m = shifted.solve(e).expect("shift keeps A - sigma E invertible");
    let mut mus = eigenvalues(&m);
    mus.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
    mus.truncate(count);
    mus.into_iter()
        .map(|mu| {
            let s = C64::new(sigma, 0.0) + mu.inv();
            if s.norm() <= ZERO_TOL * r.max(1.0) {
                C64::new(0.0, 0.0)
            } else {
                s
            }
        })
        .collect()
}

/// Unit null vector of `A - lambda E` (right) or its conjugate transpose (left).
fn null_vector(e: &DMatrix<f64>, a: &DMatrix<f64>, lambda: C64, left: bool) -> DVector<C64> {
    let mut pencil = to_complex(a) - to_complex(e) * lambda;
    if left {
        pencil = pencil.adjoint();
    }
    let svd = pencil.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let last = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .unwrap();
    let v: DVector<C64> = v_t.row(last).adjoint();
    let norm = v.norm();
    v / C64::new(norm, 0.0)
}

/// Left eigenvector `w` with `w^H (A - lambda E) = 0`.
pub fn left_eigenvector(e: &DMatrix<f64>, a: &DMatrix<f64>, lambda: C64) -> DVector<C64> {
    null_vector(e, a, lambda, true)
}

/// Generalized eigenvalues of `s E v = A v` with finite/infinite separation,
/// damping metrics and a stability verdict. Finite modes carry right
/// eigenvectors.
pub fn generalized_eigenvalues(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
) -> Result<SpectrumReport, PencilError> {
    let class = classify_pencil(e, a)?;
    let degree = class.degree().ok_or(PencilError::SingularPencil)?;
    let dim = e.nrows();
    let mut modes: Vec<EigenMode> = finite_by_shift_invert(e, a, degree)
        .into_iter()
        .map(|lambda| {
            let mut mode = EigenMode::finite(lambda);
            mode.right_vec = Some(null_vector(e, a, lambda, false));
            mode
        })
        .collect();
    modes.extend((degree..dim).map(|_| EigenMode::infinite()));
    Ok(SpectrumReport::from_modes(modes))
}

/// Spectrum of the dual pencil (roles of `E` and `A` swapped): zero and
/// infinite eigenvalues trade places, every other value is inverted.
pub fn dual_spectrum(report: &SpectrumReport) -> SpectrumReport {
    let modes = report
        .modes
        .iter()
        .map(|m| match m.kind {
            ModeKind::Infinite => EigenMode::finite(C64::new(0.0, 0.0)),
            ModeKind::Finite if m.value.norm() <= ZERO_TOL => EigenMode::infinite(),
            ModeKind::Finite => EigenMode::finite(m.value.inv()),
        })
        .collect();
    SpectrumReport::from_modes(modes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckReport {
    /// `E^T M` is symmetric positive definite.
    pub energy_positive: bool,
    /// `A^T M + M A` is negative definite.
    pub derivative_negative: bool,
    pub min_energy_eig: f64,
    pub max_derivative_eig: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.energy_positive && self.derivative_negative
    }
}

fn require_square(name: &'static str, m: &DMatrix<f64>, dim: usize) -> Result<(), PencilError> {
    if !m.is_square() || m.nrows() != dim || dim == 0 {
        return Err(PencilError::NotSquare(name));
    }
    Ok(())
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    (m - m.transpose()).norm() <= tol * m.norm().max(1.0)
}

fn sym_eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    (eig.min(), eig.max())
}

/// Checks the quadratic Lyapunov candidate `V(x) = x^T E^T M x`.
pub fn lyapunov_check(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<CheckReport, PencilError> {
    let dim = a.nrows();
    require_square("A", a, dim)?;
    require_square("E", e, dim)?;
    require_square("M", m, dim)?;
    if !is_symmetric(m, DEFINITENESS_TOL) {
        return Err(PencilError::NotSymmetric("M"));
    }
    let energy = e.transpose() * m;
    let (min_energy, _) = sym_eigen_range(&energy);
    let energy_positive = is_symmetric(&energy, DEFINITENESS_TOL)
        && min_energy > DEFINITENESS_TOL * energy.norm().max(1.0);

    let deriv = a.transpose() * m + m * a;
    let (_, max_deriv) = sym_eigen_range(&deriv);
    let derivative_negative = max_deriv < -DEFINITENESS_TOL * deriv.norm().max(1.0);
    Ok(CheckReport {
        energy_positive,
        derivative_negative,
        min_energy_eig: min_energy,
        max_derivative_eig: max_deriv,
    })
}

/// Solves `A^T M + M A = -Q` for symmetric `M` via the Kronecker form.
pub fn lyapunov_solve_standard(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>, PencilError> {
    let dim = a.nrows();
    require_square("A", a, dim)?;
    require_square("Q", q, dim)?;
    if !is_symmetric(q, DEFINITENESS_TOL) {
        return Err(PencilError::NotSymmetric("Q"));
    }
    if sym_eigen_range(q).0 <= 0.0 {
        return Err(PencilError::NotPositiveDefinite);
    }
    let max_re = eigenvalues(a)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_re >= 0.0 {
        return Err(PencilError::NotHurwitz(max_re));
    }

    let eye = DMatrix::<f64>::identity(dim, dim);
    let at = a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(dim * dim, q.iter().map(|x| -x));
    let lu = op.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(PencilError::SingularOperator)?;
    // One round of iterative refinement.
    let corr = lu
        .solve(&(&rhs - &op * &x))
        .ok_or(PencilError::SingularOperator)?;
    x += corr;

    let m = DMatrix::from_column_slice(dim, dim, x.as_slice());
    Ok((&m + m.transpose()) * 0.5)
}
