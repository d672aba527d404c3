//! Parametric cell-probability models pi(c) for general covariates:
//! multinomial-logit fitting by Newton-Raphson, analytic Jacobians, the
//! simultaneous elliptical confidence set over all covariate values, and
//! sensitivity bands along a covariate grid.
//!
//! The reference cell is (z, y) = (0, 0); the three non-reference cells
//! carry coefficient blocks in canonical cell order (1,0), (0,1), (1,1),
//! each block an intercept followed by one slope per covariate.

use nalgebra::{DMatrix, DVector, Matrix4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::confidence::{self, ConfidenceSet};
use crate::error::{Error, Result};
use crate::qcqp::{self, SolverConfig};
use crate::sharp::BoundsInterval;
use crate::table::{ObservedTable, SensitivityParams};

/// Coefficients of the multinomial logit, one block per non-reference cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlCoefficients {
    /// Block for cell (z=1, y=0): intercept then slopes.
    pub b10: Vec<f64>,
    /// Block for cell (z=0, y=1).
    pub b01: Vec<f64>,
    /// Block for cell (z=1, y=1).
    pub b11: Vec<f64>,
}

impl MnlCoefficients {
    pub fn zeros(p: usize) -> Self {
        MnlCoefficients {
            b10: vec![0.0; p + 1],
            b01: vec![0.0; p + 1],
            b11: vec![0.0; p + 1],
        }
    }

    /// Number of covariates (excluding the intercept).
    pub fn covariate_dim(&self) -> usize {
        self.b10.len() - 1
    }

    /// Total parameter count m = 3 * (p + 1).
    pub fn param_count(&self) -> usize {
        self.b10.len() + self.b01.len() + self.b11.len()
    }

    fn from_flat(flat: &DVector<f64>, q: usize) -> Self {
        MnlCoefficients {
            b10: flat.as_slice()[0..q].to_vec(),
            b01: flat.as_slice()[q..2 * q].to_vec(),
            b11: flat.as_slice()[2 * q..3 * q].to_vec(),
        }
    }

    /// Flat parameter vector in block order (b10, b01, b11), matching the
    /// covariance layout of [`ModelFit::sigma_hat`].
    pub fn to_flat(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.b10);
        v.extend_from_slice(&self.b01);
        v.extend_from_slice(&self.b11);
        DVector::from_vec(v)
    }

    /// Softmax cell probabilities at covariate vector `c`, canonical order.
    pub fn predict_cells(&self, c: &[f64]) -> [f64; 4] {
        let eta = [
            0.0,
            dot_tilde(&self.b10, c),
            dot_tilde(&self.b01, c),
            dot_tilde(&self.b11, c),
        ];
        softmax4(eta)
    }
}

fn dot_tilde(beta: &[f64], c: &[f64]) -> f64 {
    let mut s = beta[0];
    for (b, x) in beta[1..].iter().zip(c) {
        s += b * x;
    }
    s
}

fn softmax4(eta: [f64; 4]) -> [f64; 4] {
    let m = eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut e = [0.0; 4];
    let mut s = 0.0;
    for i in 0..4 {
        e[i] = (eta[i] - m).exp();
        s += e[i];
    }
    for v in &mut e {
        *v /= s;
    }
    e
}

/// One individual-level record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlObservation {
    pub covariates: Vec<f64>,
    pub z: u8,
    pub y: u8,
}

impl MnlObservation {
    pub fn cell(&self) -> usize {
        (self.z + 2 * self.y) as usize
    }
}

/// Fitted model with its estimated coefficient covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub beta: MnlCoefficients,
    /// Estimated covariance of beta-hat: inverse observed information at the
    /// optimum (total information, so duplicating the data halves this).
    pub sigma_hat: Vec<Vec<f64>>,
    pub n: usize,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Ridge actually applied (0 unless separation forced a fallback).
    pub ridge: f64,
    /// Largest absolute covariate value seen at ingestion; the simultaneous
    /// set theory assumes bounded covariates.
    pub covariate_bound: f64,
}

fn check_rows(rows: &[MnlObservation]) -> Result<(usize, f64)> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    let p = rows[0].covariates.len();
    let mut cell_seen = [false; 4];
    let mut bound = 0.0_f64;
    for (i, r) in rows.iter().enumerate() {
        if r.covariates.len() != p {
            return Err(Error::InvalidInput(format!(
                "row {i} has {} covariates, expected {p}",
                r.covariates.len()
            )));
        }
        if r.z > 1 || r.y > 1 {
            return Err(Error::InvalidInput(format!(
                "row {i} has z={}, y={}, expected binary",
                r.z, r.y
            )));
        }
        for &x in &r.covariates {
            if !x.is_finite() {
                return Err(Error::InvalidInput(format!("row {i} has non-finite covariate")));
            }
            bound = bound.max(x.abs());
        }
        cell_seen[r.cell()] = true;
    }
    if cell_seen.iter().any(|&s| !s) {
        return Err(Error::InvalidInput(
            "every exposure-outcome cell needs at least one observation".into(),
        ));
    }
    Ok((p, bound))
}

/// Maximum-likelihood fit by Newton-Raphson with step halving.
///
/// `ridge` is a coefficient penalty weight; pass 0 for plain MLE. If the
/// information matrix turns singular or the coefficients run away
/// (separation), a ridge of 1e-8 is applied automatically and recorded on
/// the returned fit.
pub fn fit_mnl(rows: &[MnlObservation], ridge: f64) -> Result<ModelFit> {
    let (p, covariate_bound) = check_rows(rows)?;
    let q = p + 1;
    let m = 3 * q;
    let n = rows.len();
    let max_iter = 100;
    let grad_tol = 1e-10 * n as f64;

    let mut ridge_now = ridge.max(0.0);
    let mut beta = DVector::<f64>::zeros(m);
    let mut ll = loglik_at(rows, &beta, q, ridge_now);
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let (grad, info) = score_and_information(rows, &beta, q, ridge_now);
        if grad.norm() <= grad_tol {
            break;
        }
        let step = match solve_spd(&info, &grad) {
            Some(s) => s,
            None => {
                // Singular information: separation. Restart with a ridge.
                if ridge_now == 0.0 {
                    ridge_now = 1e-8;
                    beta = DVector::zeros(m);
                    ll = loglik_at(rows, &beta, q, ridge_now);
                    continue;
                } else {
                    break;
                }
            }
        };
        // Step halving keeps the (penalized) log-likelihood nondecreasing.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + scale * &step;
            let cand_ll = loglik_at(rows, &cand, q, ridge_now);
            if cand_ll >= ll - 1e-12 {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        if ridge_now == 0.0 && beta.amax() > 30.0 {
            // Runaway coefficients: separation in disguise.
            ridge_now = 1e-8;
            beta = DVector::zeros(m);
            ll = loglik_at(rows, &beta, q, ridge_now);
        }
    }

    let (grad, info) = score_and_information(rows, &beta, q, ridge_now);
    let grad_norm = grad.norm();
    let converged = grad_norm <= grad_tol;
    let sigma = invert_spd(&info).ok_or_else(|| Error::InvalidCovariance(
        "information matrix is singular at the optimum".into(),
    ))?;
    let sigma_hat: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| sigma[(i, j)]).collect())
        .collect();

    let fit = ModelFit {
        beta: MnlCoefficients::from_flat(&beta, q),
        sigma_hat,
        n,
        loglik: loglik_at(rows, &beta, q, 0.0),
        converged,
        iterations,
        grad_norm,
        ridge: ridge_now,
        covariate_bound,
    };
    if !converged {
        return Err(Error::NonConverged {
            iterations,
            grad_norm,
            last_fit: Box::new(fit),
        });
    }
    Ok(fit)
}

fn cells_at(beta: &DVector<f64>, q: usize, c: &[f64]) -> [f64; 4] {
    let mut eta = [0.0; 4];
    for k in 1..4 {
        let block = &beta.as_slice()[(k - 1) * q..k * q];
        eta[k] = dot_tilde(block, c);
    }
    softmax4(eta)
}

fn loglik_at(rows: &[MnlObservation], beta: &DVector<f64>, q: usize, ridge: f64) -> f64 {
    let mut ll = 0.0;
    for r in rows {
        let pi = cells_at(beta, q, &r.covariates);
        ll += pi[r.cell()].max(1e-300).ln();
    }
    if ridge > 0.0 {
        ll -= 0.5 * ridge * rows.len() as f64 * beta.norm_squared();
    }
    ll
}

fn score_and_information(
    rows: &[MnlObservation],
    beta: &DVector<f64>,
    q: usize,
    ridge: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let m = 3 * q;
    let mut grad = DVector::<f64>::zeros(m);
    let mut info = DMatrix::<f64>::zeros(m, m);
    let mut ctilde = vec![0.0; q];
    for r in rows {
        ctilde[0] = 1.0;
        ctilde[1..].copy_from_slice(&r.covariates);
        let pi = cells_at(beta, q, &r.covariates);
        let cell = r.cell();
        for k in 1..4 {
            let resid = (cell == k) as u8 as f64 - pi[k];
            for j in 0..q {
                grad[(k - 1) * q + j] += resid * ctilde[j];
            }
        }
        for k in 1..4 {
            for k2 in k..4 {
                let wkk = if k == k2 {
                    pi[k] * (1.0 - pi[k])
                } else {
                    -pi[k] * pi[k2]
                };
                for j in 0..q {
                    for j2 in 0..q {
                        let v = wkk * ctilde[j] * ctilde[j2];
                        info[((k - 1) * q + j, (k2 - 1) * q + j2)] += v;
                        if k != k2 {
                            info[((k2 - 1) * q + j2, (k - 1) * q + j)] += v;
                        }
                    }
                }
            }
        }
    }
    if ridge > 0.0 {
        let nr = ridge * rows.len() as f64;
        grad -= nr * beta;
        for i in 0..m {
            info[(i, i)] += nr;
        }
    }
    (grad, info)
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|ch| ch.solve(b)).or_else(|| {
        let lu = a.clone().lu();
        lu.solve(b)
    })
}

fn invert_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .or_else(|| a.clone().try_inverse())
}

/// Predicted 2x2 table at covariate vector `c`, canonical cell order.
pub fn predict_pi(fit: &ModelFit, c: &[f64]) -> Result<ObservedTable> {
    if c.len() != fit.beta.covariate_dim() {
        return Err(Error::InvalidInput(format!(
            "covariate vector has length {}, model expects {}",
            c.len(),
            fit.beta.covariate_dim()
        )));
    }
    let cells = fit.beta.predict_cells(c);
    ObservedTable::from_probs(cells)
}

/// Analytic Jacobian of the cell probabilities with respect to the flat
/// coefficient vector, evaluated at the fitted coefficients: a 4 x m matrix
/// M * (e2 ct', e3 ct', e4 ct') with M = diag(g) - g g'.
pub fn jacobian_dc(fit: &ModelFit, c: &[f64]) -> Result<DMatrix<f64>> {
    if c.len() != fit.beta.covariate_dim() {
        return Err(Error::InvalidInput(format!(
            "covariate vector has length {}, model expects {}",
            c.len(),
            fit.beta.covariate_dim()
        )));
    }
    let q = fit.beta.covariate_dim() + 1;
    let g = fit.beta.predict_cells(c);
    let mut mm = Matrix4::<f64>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            mm[(i, j)] = if i == j { g[i] * (1.0 - g[i]) } else { -g[i] * g[j] };
        }
    }
    let mut ctilde = vec![0.0; q];
    ctilde[0] = 1.0;
    ctilde[1..].copy_from_slice(c);
    let mut d = DMatrix::<f64>::zeros(4, 3 * q);
    for k in 1..4 {
        for j in 0..q {
            for i in 0..4 {
                d[(i, (k - 1) * q + j)] = mm[(i, k)] * ctilde[j];
            }
        }
    }
    Ok(d)
}

/// Simultaneous elliptical confidence set for the cell probabilities at `c`,
/// valid jointly over all covariate values: quadratic form in the projected
/// coefficient covariance with a chi-squared m-df threshold.
pub fn simultaneous_set(fit: &ModelFit, c: &[f64], alpha: f64) -> Result<ConfidenceSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha={alpha} not in (0,1)")));
    }
    let d = jacobian_dc(fit, c)?;
    let m = d.ncols();
    let sigma = DMatrix::from_fn(m, m, |i, j| fit.sigma_hat[i][j]);
    let a = &d * sigma * d.transpose();
    let mut matrix = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            matrix[i][j] = a[(i, j)];
        }
    }
    let chi = ChiSquared::new(m as f64).expect("positive df");
    let threshold = chi.inverse_cdf(1.0 - alpha);
    let center = fit.beta.predict_cells(c);
    ConfidenceSet::elliptical(center, matrix, threshold, fit.n as u64, alpha)
}

/// Which way the per-grid-point confidence interval is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandRoute {
    /// Interval hull of the ellipse per cell, then the closed-form
    /// rectangular machinery. Conservative; ignores xi.
    BoxHull,
    /// The elliptical membership constraint fed into the optimization-based
    /// bounds; honors all three parameters.
    ExactSet,
}

/// Bounds at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub c: Vec<f64>,
    pub point_bounds: BoundsInterval,
    pub ci_bounds: BoundsInterval,
}

/// Sensitivity band along a covariate grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub alpha: f64,
    pub params: SensitivityParams,
    pub route: BandRoute,
    pub points: Vec<BandPoint>,
}

/// Per grid point: the point sensitivity bounds at the fitted cell
/// probabilities, and the worst-case bounds over the simultaneous set.
/// Grid points are independent work units; results are assembled in order.
pub fn band_bounds(
    fit: &ModelFit,
    grid: &[Vec<f64>],
    alpha: f64,
    params: &SensitivityParams,
    route: BandRoute,
    cfg: &SolverConfig,
) -> Result<BandResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty covariate grid".into()));
    }
    if !fit.converged {
        return Err(Error::InvalidInput("band needs a converged fit".into()));
    }
    let points: Result<Vec<BandPoint>> = grid
        .par_iter()
        .map(|c| -> Result<BandPoint> {
            let table = predict_pi(fit, c)?;
            let point_bounds = qcqp::solve_bounds(&table, params, cfg)?.interval;
            let set = simultaneous_set(fit, c, alpha)?;
            let ci_bounds = match route {
                BandRoute::BoxHull => {
                    let (lo, hi) = set.cell_hull();
                    confidence::rect_ci_bounds(&lo, &hi, params.delta, params.gamma)?
                }
                BandRoute::ExactSet => confidence::ci_bounds_opt_for_set(&set, params, cfg)?.0,
            };
            Ok(BandPoint {
                c: c.clone(),
                point_bounds,
                ci_bounds,
            })
        })
        .collect();
    Ok(BandResult {
        alpha,
        params: *params,
        route,
        points: points?,
    })
}

/// Convenience conversion for univariate datasets.
pub fn univariate_rows(data: &[(f64, u8, u8)]) -> Vec<MnlObservation> {
    data.iter()
        .map(|&(c, z, y)| MnlObservation {
            covariates: vec![c],
            z,
            y,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// The coefficient values used by the continuous-covariate experiments.
    pub fn experiment_coefficients() -> MnlCoefficients {
        MnlCoefficients {
            b10: vec![0.5, 0.5],
            b01: vec![1.3, -1.3],
            b11: vec![-0.1, -0.3],
        }
    }

    fn intercept_only_rows() -> Vec<MnlObservation> {
        let mut rows = Vec::new();
        for (cell, count) in [(0usize, 10usize), (1, 20), (2, 30), (3, 40)] {
            for _ in 0..count {
                rows.push(MnlObservation {
                    covariates: vec![],
                    z: (cell % 2) as u8,
                    y: (cell / 2) as u8,
                });
            }
        }
        rows
    }

    #[test]
    fn intercept_only_matches_empirical() {
        let fit = fit_mnl(&intercept_only_rows(), 0.0).unwrap();
        assert!(fit.converged);
        let pi = predict_pi(&fit, &[]).unwrap();
        for (a, b) in pi.cells().iter().zip([0.1, 0.2, 0.3, 0.4]) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert!(fit.grad_norm <= 1e-8 * fit.n as f64);
    }

    #[test]
    fn zero_coefficients_predict_uniform() {
        let beta = MnlCoefficients::zeros(2);
        let cells = beta.predict_cells(&[3.0, -1.0]);
        for c in cells {
            assert!((c - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn paper_coefficients_at_origin() {
        let beta = experiment_coefficients();
        let cells = beta.predict_cells(&[0.0]);
        let expect = [0.138_449_5, 0.228_264_8, 0.508_018_3, 0.125_267_4];
        for (a, b) in cells.iter().zip(expect) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        let s: f64 = cells.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn raising_intercept_raises_cell() {
        let mut beta = MnlCoefficients::zeros(1);
        let base = beta.predict_cells(&[0.7]);
        beta.b11[0] += 0.5;
        let bumped = beta.predict_cells(&[0.7]);
        assert!(bumped[3] > base[3]);
    }

    #[test]
    fn duplicated_data_halves_sigma() {
        let rows = {
            // A univariate dataset with spread-out covariates.
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let beta = experiment_coefficients();
            let mut rows = Vec::new();
            for _ in 0..400 {
                let c: f64 = rng.random();
                let cells = beta.predict_cells(&[c]);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut cell = 3;
                for (k, &p) in cells.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        cell = k;
                        break;
                    }
                }
                rows.push(MnlObservation {
                    covariates: vec![c],
                    z: (cell % 2) as u8,
                    y: (cell / 2) as u8,
                });
            }
            rows
        };
        let fit1 = fit_mnl(&rows, 0.0).unwrap();
        let mut doubled = rows.clone();
        doubled.extend_from_slice(&rows);
        let fit2 = fit_mnl(&doubled, 0.0).unwrap();
        let b1 = fit1.beta.to_flat();
        let b2 = fit2.beta.to_flat();
        assert!((&b1 - &b2).amax() < 1e-6);
        for i in 0..b1.len() {
            let ratio = fit2.sigma_hat[i][i] / fit1.sigma_hat[i][i];
            assert!((ratio - 0.5).abs() < 1e-3, "ratio {ratio}");
        }
    }

    #[test]
    fn jacobian_columns_sum_to_zero() {
        let fit = fit_with_beta(MnlCoefficients::zeros(1));
        let d = jacobian_dc(&fit, &[0.0]).unwrap();
        for j in 0..d.ncols() {
            let s: f64 = (0..4).map(|i| d[(i, j)]).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let beta = MnlCoefficients {
                b10: vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5],
                b01: vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5],
                b11: vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5],
            };
            let c = [rng.random::<f64>()];
            let fit = fit_with_beta(beta.clone());
            let d = jacobian_dc(&fit, &c).unwrap();
            let fd = finite_difference_jacobian(&beta, &c);
            for i in 0..4 {
                for j in 0..6 {
                    assert!(
                        (d[(i, j)] - fd[(i, j)]).abs() < 1e-6,
                        "entry ({i},{j}): {} vs {}",
                        d[(i, j)],
                        fd[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn slope_columns_scale_with_covariate_at_zero_beta() {
        let fit = fit_with_beta(MnlCoefficients::zeros(1));
        let d1 = jacobian_dc(&fit, &[0.5]).unwrap();
        let d2 = jacobian_dc(&fit, &[1.0]).unwrap();
        // Slope columns are 1, 3, 5 (second entry of each block).
        for k in 0..3 {
            let j = 2 * k + 1;
            for i in 0..4 {
                assert!((2.0 * d1[(i, j)] - d2[(i, j)]).abs() < 1e-12);
            }
        }
    }

    /// Fit object with prescribed coefficients and identity covariance,
    /// for exercising the prediction/Jacobian paths in isolation.
    pub fn fit_with_beta(beta: MnlCoefficients) -> ModelFit {
        let m = beta.param_count();
        let sigma_hat = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        ModelFit {
            beta,
            sigma_hat,
            n: 1,
            loglik: 0.0,
            converged: true,
            iterations: 0,
            grad_norm: 0.0,
            ridge: 0.0,
            covariate_bound: 1.0,
        }
    }

    pub fn finite_difference_jacobian(beta: &MnlCoefficients, c: &[f64]) -> DMatrix<f64> {
        let h = 1e-6;
        let q = beta.covariate_dim() + 1;
        let flat = beta.to_flat();
        let mut out = DMatrix::zeros(4, 3 * q);
        for j in 0..3 * q {
            let mut plus = flat.clone();
            plus[j] += h;
            let mut minus = flat.clone();
            minus[j] -= h;
            let gp = MnlCoefficients::from_flat(&plus, q).predict_cells(c);
            let gm = MnlCoefficients::from_flat(&minus, q).predict_cells(c);
            for i in 0..4 {
                out[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn simultaneous_set_center_and_df() {
        let rows = intercept_only_with_covariate();
        let fit = fit_mnl(&rows, 0.0).unwrap();
        let set = simultaneous_set(&fit, &[0.5], 0.05).unwrap();
        assert!(set.contains(&set.center));
        // m = 6 for univariate c with intercepts.
        let chi = ChiSquared::new(6.0).unwrap();
        assert!((set.critical_value() - chi.inverse_cdf(0.95)).abs() < 1e-12);
    }

    fn intercept_only_with_covariate() -> Vec<MnlObservation> {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let beta = experiment_coefficients();
        let mut rows = Vec::new();
        for _ in 0..2000 {
            let c: f64 = rng.random();
            let cells = beta.predict_cells(&[c]);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut cell = 3;
            for (k, &p) in cells.iter().enumerate() {
                acc += p;
                if u < acc {
                    cell = k;
                    break;
                }
            }
            rows.push(MnlObservation {
                covariates: vec![c],
                z: (cell % 2) as u8,
                y: (cell / 2) as u8,
            });
        }
        rows
    }

    #[test]
    fn band_hull_contains_exact_set() {
        let rows = intercept_only_with_covariate();
        let fit = fit_mnl(&rows, 0.0).unwrap();
        let params = SensitivityParams::new(0.1, 5.0, 2.0).unwrap();
        let cfg = SolverConfig {
            starts: 6,
            ..SolverConfig::default()
        };
        let grid: Vec<Vec<f64>> = vec![vec![0.25], vec![0.75]];
        let hull = band_bounds(&fit, &grid, 0.05, &params, BandRoute::BoxHull, &cfg).unwrap();
        let exact = band_bounds(&fit, &grid, 0.05, &params, BandRoute::ExactSet, &cfg).unwrap();
        for (h, e) in hull.points.iter().zip(&exact.points) {
            assert!(h.ci_bounds.lower <= e.ci_bounds.lower + 1e-9);
            assert!(h.ci_bounds.upper >= e.ci_bounds.upper - 1e-9);
            // Both contain the pointwise bounds.
            assert!(h.ci_bounds.lower <= h.point_bounds.lower + 1e-9);
            assert!(e.ci_bounds.upper >= e.point_bounds.upper - 1e-9);
        }
    }
}
