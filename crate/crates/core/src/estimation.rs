//! LTI process models, steady-state Kalman covariance and the AoI → MSE map.
//!
//! A sensor that has gone `τ` slots without a successful delivery leaves the
//! remote estimator with error covariance `f^τ(P̄)`, where `f(X) = A X Aᵀ + W`
//! and `P̄` is the local filter's steady-state posterior covariance. Everything
//! the scheduler needs from a process is therefore the table
//! `τ ↦ Tr(f^τ(P̄))`, precomputed once at construction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RICCATI_TOL: f64 = 1e-10;
pub const RICCATI_MAX_ITER: usize = 100_000;
/// Number of AoI values tabulated per process.
pub const DEFAULT_TABLE_LEN: usize = 1024;

/// Per-slot reward shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// `−Σ Tr(f^τn(P̄n))`
    SumMse,
    /// `−Σ τn`
    SumAoi,
    /// `−Π Tr(f^τn(P̄n))`; not additive across sensors.
    ProductMse,
}

impl RewardKind {
    pub fn name(self) -> &'static str {
        match self {
            RewardKind::SumMse => "sum_mse",
            RewardKind::SumAoi => "sum_aoi",
            RewardKind::ProductMse => "product_mse",
        }
    }
}

impl std::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum_mse" => Ok(RewardKind::SumMse),
            "sum_aoi" => Ok(RewardKind::SumAoi),
            "product_mse" => Ok(RewardKind::ProductMse),
            other => Err(Error::validation(format!(
                "unknown reward kind {other:?} (expected sum_mse, sum_aoi or product_mse)"
            ))),
        }
    }
}

/// `Tr(f^τ(P̄))` for `τ = 1..=len`.
#[derive(Debug, Clone, PartialEq)]
pub struct MseTable {
    values: Vec<f64>,
}

impl MseTable {
    fn build(a: &DMatrix<f64>, w: &DMatrix<f64>, p_bar: &DMatrix<f64>, len: usize) -> (Self, DMatrix<f64>) {
        let mut values = Vec::with_capacity(len);
        let mut cov = p_bar.clone();
        for _ in 0..len {
            cov = holding(a, w, &cov);
            values.push(cov.trace());
        }
        (MseTable { values }, cov)
    }

    /// Largest tabulated AoI.
    pub fn tau_max(&self) -> u32 {
        self.values.len() as u32
    }

    pub fn get(&self, tau: u32) -> Option<f64> {
        if tau == 0 {
            return None;
        }
        self.values.get(tau as usize - 1).copied()
    }

    /// Looks up `τ`, saturating at the table end. The flag is set when
    /// saturation happened.
    pub fn value_clamped(&self, tau: u32) -> (f64, bool) {
        let clamped = tau > self.tau_max();
        let idx = tau.clamp(1, self.tau_max()) as usize - 1;
        (self.values[idx], clamped)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One linear time-invariant process observed by one sensor.
#[derive(Debug, Clone)]
pub struct ProcessModel {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    w: DMatrix<f64>,
    v: DMatrix<f64>,
    p_bar: DMatrix<f64>,
    spectral_radius: f64,
    table: MseTable,
    /// `f^{len}(P̄)`, the seed for evaluating AoIs past the table.
    table_tail: DMatrix<f64>,
}

impl ProcessModel {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, w: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        Self::with_table_len(a, c, w, v, DEFAULT_TABLE_LEN)
    }

    pub fn with_table_len(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        w: DMatrix<f64>,
        v: DMatrix<f64>,
        table_len: usize,
    ) -> Result<Self> {
        validate_dims(&a, &c, &w, &v)?;
        if table_len == 0 {
            return Err(Error::validation("MSE table length must be at least 1"));
        }
        let spectral_radius = spectral_radius(&a);
        if spectral_radius <= 1.0 {
            return Err(Error::validation(format!(
                "system matrix must be unstable (spectral radius {spectral_radius} <= 1)"
            )));
        }
        let p_bar = steady_state_covariance(&a, &c, &w, &v, RICCATI_TOL, RICCATI_MAX_ITER)?;
        let (table, table_tail) = MseTable::build(&a, &w, &p_bar, table_len);
        Ok(ProcessModel {
            a,
            c,
            w,
            v,
            p_bar,
            spectral_radius,
            table,
            table_tail,
        })
    }

    /// Scalar process `x⁺ = a x + w`, `y = c x + v`.
    pub fn scalar(a: f64, c: f64, w: f64, v: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, w),
            DMatrix::from_element(1, 1, v),
        )
    }

    /// Builds a process from row-major nested arrays.
    pub fn from_rows(a: &[Vec<f64>], c: &[Vec<f64>], w: &[Vec<f64>], v: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            matrix_from_rows(a, "A")?,
            matrix_from_rows(c, "C")?,
            matrix_from_rows(w, "W")?,
            matrix_from_rows(v, "V")?,
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }
    pub fn p_bar(&self) -> &DMatrix<f64> {
        &self.p_bar
    }
    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }
    pub fn mse_table(&self) -> &MseTable {
        &self.table
    }

    /// `f(X) = A X Aᵀ + W`.
    pub fn holding(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        holding(&self.a, &self.w, x)
    }

    /// Remote estimation MSE `Tr(f^τ(P̄))` after `τ ≥ 1` slots without delivery.
    /// AoIs past the table are evaluated by continuing the recursion.
    pub fn aoi_error_trace(&self, tau: u32) -> Result<f64> {
        if tau == 0 {
            return Err(Error::validation("AoI must be at least 1"));
        }
        if let Some(v) = self.table.get(tau) {
            return Ok(v);
        }
        let mut cov = self.table_tail.clone();
        for _ in self.table.tau_max()..tau {
            cov = self.holding(&cov);
        }
        Ok(cov.trace())
    }

    /// Residual (sup-norm) of one Kalman predict+update cycle applied to `P̄`.
    pub fn fixed_point_residual(&self) -> f64 {
        let next = kalman_cycle(&self.a, &self.c, &self.w, &self.v, &self.p_bar);
        (next - &self.p_bar).amax()
    }

    /// Row-major nested arrays for serialization: `(A, C, W, V)`.
    pub fn to_rows(&self) -> [Vec<Vec<f64>>; 4] {
        [
            matrix_to_rows(&self.a),
            matrix_to_rows(&self.c),
            matrix_to_rows(&self.w),
            matrix_to_rows(&self.v),
        ]
    }
}

/// Serializable form of a process: row-major `A`, `C`, `W`, `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl ProcessSpec {
    pub fn build(&self) -> Result<ProcessModel> {
        ProcessModel::from_rows(&self.a, &self.c, &self.w, &self.v)
    }
}

impl From<&ProcessModel> for ProcessSpec {
    fn from(p: &ProcessModel) -> Self {
        let [a, c, w, v] = p.to_rows();
        ProcessSpec { a, c, w, v }
    }
}

fn holding(a: &DMatrix<f64>, w: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    a * x * a.transpose() + w
}

fn validate_dims(a: &DMatrix<f64>, c: &DMatrix<f64>, w: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<()> {
    let l = a.nrows();
    if l == 0 || a.ncols() != l {
        return Err(Error::validation(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
    }
    let e = c.nrows();
    if e == 0 || c.ncols() != l {
        return Err(Error::validation(format!("C must be e x {l}, got {}x{}", c.nrows(), c.ncols())));
    }
    if w.shape() != (l, l) {
        return Err(Error::validation(format!("W must be {l}x{l}")));
    }
    if v.shape() != (e, e) {
        return Err(Error::validation(format!("V must be {e}x{e}")));
    }
    for (name, m) in [("A", a), ("C", c), ("W", w), ("V", v)] {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation(format!("{name} has non-finite entries")));
        }
    }
    require_spd(w, "W")?;
    require_spd(v, "V")
}

fn require_spd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        return Err(Error::validation(format!("{name} is not symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::validation(format!("{name} is not positive definite")));
    }
    Ok(())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// One predict+update cycle of the Kalman covariance recursion, posterior to
/// posterior.
pub fn kalman_cycle(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    w: &DMatrix<f64>,
    v: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let prior = holding(a, w, p);
    let innovation = c * &prior * c.transpose() + v;
    // innovation covariance is SPD whenever V is
    let inv = innovation
        .clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .unwrap_or_else(|| innovation.try_inverse().expect("innovation covariance singular"));
    let gain = &prior * c.transpose() * inv;
    let identity = DMatrix::<f64>::identity(a.nrows(), a.nrows());
    let post = (identity - gain * c) * prior;
    (&post + post.transpose()) * 0.5
}

/// Steady-state posterior covariance by fixed-point iteration from `P⁰ = W`.
pub fn steady_state_covariance(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    w: &DMatrix<f64>,
    v: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>> {
    validate_dims(a, c, w, v)?;
    if !(tol > 0.0) {
        return Err(Error::validation("tolerance must be positive"));
    }
    let mut p = w.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = kalman_cycle(a, c, w, v, &p);
        residual = (&next - &p).amax();
        // return the iterate whose own one-cycle change is below tol
        if residual < tol {
            return Ok(p);
        }
        p = next;
        if !residual.is_finite() {
            break;
        }
    }
    Err(Error::Convergence {
        what: "steady-state Riccati iteration",
        iterations: max_iter,
        residual,
    })
}

/// Instantaneous reward of an AoI vector.
pub fn reward(processes: &[ProcessModel], tau: &[u32], kind: RewardKind) -> Result<f64> {
    if processes.len() != tau.len() {
        return Err(Error::validation(format!(
            "AoI vector has {} entries for {} processes",
            tau.len(),
            processes.len()
        )));
    }
    match kind {
        RewardKind::SumAoi => {
            if tau.contains(&0) {
                return Err(Error::validation("AoI must be at least 1"));
            }
            Ok(-tau.iter().map(|&t| t as f64).sum::<f64>())
        }
        RewardKind::SumMse => {
            let mut total = 0.0;
            for (p, &t) in processes.iter().zip(tau) {
                total += p.aoi_error_trace(t)?;
            }
            Ok(-total)
        }
        RewardKind::ProductMse => {
            let mut total = 1.0;
            for (p, &t) in processes.iter().zip(tau) {
                total *= p.aoi_error_trace(t)?;
            }
            Ok(-total)
        }
    }
}

/// Sum of remote MSEs, `Σ Tr(f^τn(P̄n))`.
pub fn sum_mse(processes: &[ProcessModel], tau: &[u32]) -> Result<f64> {
    reward(processes, tau, RewardKind::SumMse).map(|r| -r)
}

pub fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::validation(format!("matrix {name} must be a non-empty rectangular array")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Scalar Riccati oracle: prior S solves S² = a²·S + w·... with c = v = 1,
    // i.e. S² − 1.44 S − 1 = 0 for a = 1.2, w = 1.
    fn scalar_prior() -> f64 {
        (1.44 + (1.44f64 * 1.44 + 4.0).sqrt()) / 2.0
    }

    #[test]
    fn scalar_steady_state_matches_closed_form() {
        let p = ProcessModel::scalar(1.2, 1.0, 1.0, 1.0).unwrap();
        let s = scalar_prior();
        assert_relative_eq!(s, 1.952_2, epsilon = 1e-4);
        assert_relative_eq!(p.p_bar()[(0, 0)], s / (s + 1.0), epsilon = 1e-9);
        assert_relative_eq!(p.p_bar()[(0, 0)], 0.6613, epsilon = 1e-4);
        // f(P̄) is the steady-state prior
        assert_relative_eq!(p.aoi_error_trace(1).unwrap(), s, epsilon = 1e-9);
        assert!(p.fixed_point_residual() < RICCATI_TOL);
    }

    #[test]
    fn perfect_measurement_drives_posterior_to_zero() {
        let p = ProcessModel::scalar(1.2, 1.0, 1.0, 1e-12).unwrap();
        assert!(p.p_bar()[(0, 0)] < 1e-9);
    }

    #[test]
    fn aoi_trace_recursion() {
        let p = ProcessModel::scalar(1.2, 1.0, 1.0, 1.0).unwrap();
        let s = scalar_prior();
        assert_relative_eq!(p.aoi_error_trace(2).unwrap(), 1.44 * s + 1.0, epsilon = 1e-9);
        assert_relative_eq!(p.aoi_error_trace(2).unwrap(), 3.8113, epsilon = 1e-4);
        assert!(p.aoi_error_trace(0).is_err());
        let vals = p.mse_table().values();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn trace_past_table_continues_recursion() {
        let a = DMatrix::from_element(1, 1, 1.1);
        let one = DMatrix::from_element(1, 1, 1.0);
        let short = ProcessModel::with_table_len(a.clone(), one.clone(), one.clone(), one.clone(), 4).unwrap();
        let long = ProcessModel::with_table_len(a, one.clone(), one.clone(), one, 40).unwrap();
        for tau in 1..=40 {
            assert_relative_eq!(
                short.aoi_error_trace(tau).unwrap(),
                long.aoi_error_trace(tau).unwrap(),
                max_relative = 1e-12
            );
        }
        let (v, clamped) = short.mse_table().value_clamped(9);
        assert!(clamped);
        assert_eq!(v, short.mse_table().get(4).unwrap());
        assert!(!short.mse_table().value_clamped(4).1);
    }

    #[test]
    fn rewards_for_two_identical_processes() {
        let p = ProcessModel::scalar(1.2, 1.0, 1.0, 1.0).unwrap();
        let ps = vec![p.clone(), p];
        let s = scalar_prior();
        assert_relative_eq!(reward(&ps, &[1, 1], RewardKind::SumMse).unwrap(), -2.0 * s, epsilon = 1e-9);
        assert_relative_eq!(reward(&ps, &[1, 1], RewardKind::SumMse).unwrap(), -3.9046, epsilon = 1e-3);
        assert_eq!(reward(&ps, &[1, 1], RewardKind::SumAoi).unwrap(), -2.0);
        let prod = reward(&ps, &[1, 2], RewardKind::ProductMse).unwrap();
        // P̄ carries the 1e-10 Riccati stopping error, amplified along the product
        assert_relative_eq!(prod, -(s * (1.44 * s + 1.0)), epsilon = 1e-8);
        assert_relative_eq!(prod, -7.441, epsilon = 1e-3);
        assert!(reward(&ps, &[1], RewardKind::SumMse).is_err());
        assert!(reward(&ps, &[0, 1], RewardKind::SumAoi).is_err());
    }

    #[test]
    fn rejects_bad_covariances_and_stable_systems() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let neg = DMatrix::from_element(1, 1, -1.0);
        let a = DMatrix::from_element(1, 1, 1.2);
        assert!(matches!(
            ProcessModel::new(a.clone(), one.clone(), neg.clone(), one.clone()),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            ProcessModel::new(a.clone(), one.clone(), one.clone(), neg),
            Err(Error::Validation(_))
        ));
        assert!(ProcessModel::scalar(0.9, 1.0, 1.0, 1.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let a2 = DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 1.1]);
        let c2 = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(ProcessModel::new(a2, c2, asym, one).is_err());
    }

    #[test]
    fn riccati_reports_non_convergence() {
        let m = |x: f64| DMatrix::from_element(1, 1, x);
        let err = steady_state_covariance(&m(1.2), &m(1.0), &m(1.0), &m(1.0), 1e-10, 2).unwrap_err();
        match err {
            Error::Convergence { iterations, residual, .. } => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_dimensional_fixed_point() {
        let a = DMatrix::from_row_slice(2, 2, &[1.1, 0.3, -0.2, 0.9]);
        let c = DMatrix::from_row_slice(1, 2, &[0.4, 0.7]);
        let p = ProcessModel::new(a, c, DMatrix::identity(2, 2), DMatrix::identity(1, 1)).unwrap();
        assert!(p.fixed_point_residual() < RICCATI_TOL);
        let pb = p.p_bar();
        assert!((pb - pb.transpose()).amax() < 1e-12);
        assert!(pb.clone().symmetric_eigenvalues().iter().all(|&e| e >= -1e-12));
    }
}
