//! Confidence sets for multinomial cell probabilities and the confidence
//! bounds they induce on the causal odds ratio.
//!
//! Three set shapes: an elliptical set from the chi-squared quadratic form
//! (Q), and two rectangular sets from studentized (N) and arcsine-
//! transformed (T) per-cell margins at a common max-|Gaussian| critical
//! value. Closed-form confidence bounds rework the rectangular endpoints
//! through the boxed-minimum kernel; optimization-based bounds treat the
//! cell probabilities as extra decision variables constrained to the set.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::qcqp::SolverConfig;
use crate::sharp::{self, BoundsInterval};
use crate::table::{cross_ratio, ObservedTable, SensitivityParams, CELLS};

/// Which of the three confidence-set constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetShape {
    /// Elliptical: chi-squared quadratic form in the estimated covariance.
    Q,
    /// Rectangular: studentized per-cell margins.
    N,
    /// Rectangular: arcsine-transformed per-cell margins.
    T,
}

impl std::fmt::Display for SetShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SetShape::Q => "Q",
            SetShape::N => "N",
            SetShape::T => "T",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SetShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Q" | "q" => Ok(SetShape::Q),
            "N" | "n" => Ok(SetShape::N),
            "T" | "t" => Ok(SetShape::T),
            other => Err(Error::InvalidInput(format!(
                "unknown set shape {other:?}; expected Q, N or T"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SetPayload {
    Elliptical {
        /// Covariance-like matrix A defining the quadratic form.
        matrix: Matrix4<f64>,
        /// Pseudoinverse of A (eigenvalues below 1e-12 * largest dropped).
        pinv: Matrix4<f64>,
        /// Membership: (q - center)' pinv (q - center) <= threshold.
        threshold: f64,
    },
    Rectangular {
        lower: [f64; 4],
        upper: [f64; 4],
        /// The max-|Gaussian| critical value behind the margins.
        crit: f64,
    },
}

/// A confidence set for the four cell probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub shape: SetShape,
    pub center: [f64; 4],
    pub n: u64,
    pub alpha: f64,
    payload: SetPayload,
}

impl ConfidenceSet {
    pub fn contains(&self, q: &[f64; 4]) -> bool {
        match &self.payload {
            SetPayload::Elliptical { pinv, threshold, .. } => {
                let d = Vector4::new(
                    q[0] - self.center[0],
                    q[1] - self.center[1],
                    q[2] - self.center[2],
                    q[3] - self.center[3],
                );
                (d.transpose() * pinv * d)[(0, 0)] <= *threshold
            }
            SetPayload::Rectangular { lower, upper, .. } => {
                (0..4).all(|i| lower[i] <= q[i] && q[i] <= upper[i])
            }
        }
    }

    /// Per-cell endpoints for rectangular shapes.
    pub fn rect_endpoints(&self) -> Option<(&[f64; 4], &[f64; 4])> {
        match &self.payload {
            SetPayload::Rectangular { lower, upper, .. } => Some((lower, upper)),
            SetPayload::Elliptical { .. } => None,
        }
    }

    /// The critical value: chi-squared threshold for Q, max-|Gaussian|
    /// quantile for N/T.
    pub fn critical_value(&self) -> f64 {
        match &self.payload {
            SetPayload::Elliptical { threshold, .. } => *threshold,
            SetPayload::Rectangular { crit, .. } => *crit,
        }
    }

    /// Per-cell interval hull of the set, clipped to [0,1]. For rectangles
    /// this is the rectangle itself; for ellipsoids the axis extents
    /// sqrt(threshold * A_kk).
    pub fn cell_hull(&self) -> ([f64; 4], [f64; 4]) {
        match &self.payload {
            SetPayload::Rectangular { lower, upper, .. } => (*lower, *upper),
            SetPayload::Elliptical { matrix, threshold, .. } => {
                let mut lo = [0.0; 4];
                let mut hi = [0.0; 4];
                for k in 0..4 {
                    let half = (threshold * matrix[(k, k)]).max(0.0).sqrt();
                    lo[k] = (self.center[k] - half).max(0.0);
                    hi[k] = (self.center[k] + half).min(1.0);
                }
                (lo, hi)
            }
        }
    }

    /// Build an elliptical set directly from a quadratic form; used by the
    /// covariate-model simultaneous sets.
    pub fn elliptical(
        center: [f64; 4],
        matrix: [[f64; 4]; 4],
        threshold: f64,
        n: u64,
        alpha: f64,
    ) -> Result<Self> {
        let m = Matrix4::from_fn(|i, j| matrix[i][j]);
        let (pinv, rank) = pseudo_inverse(&m);
        if rank == 0 {
            return Err(Error::DegenerateSet);
        }
        Ok(ConfidenceSet {
            shape: SetShape::Q,
            center,
            n,
            alpha,
            payload: SetPayload::Elliptical { matrix: m, pinv, threshold },
        })
    }
}

/// Symmetric pseudoinverse with eigenvalues below 1e-12 times the largest
/// treated as zero. Returns the pseudoinverse and the numerical rank.
fn pseudo_inverse(m: &Matrix4<f64>) -> (Matrix4<f64>, usize) {
    let eig = SymmetricEigen::new(*m);
    let max_ev = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let cut = 1e-12 * max_ev;
    let mut inv_diag = Vector4::zeros();
    let mut rank = 0;
    for i in 0..4 {
        if eig.eigenvalues[i].abs() > cut && eig.eigenvalues[i] > 0.0 {
            inv_diag[i] = 1.0 / eig.eigenvalues[i];
            rank += 1;
        }
    }
    let v = eig.eigenvectors;
    let pinv = v * Matrix4::from_diagonal(&inv_diag) * v.transpose();
    (pinv, rank)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha={alpha} not in (0,1)")));
    }
    Ok(())
}

/// The 1-alpha quantile of max_i |xi_i| for a mean-zero Gaussian vector with
/// the given covariance, by Monte Carlo. Deterministic per seed.
pub fn max_abs_gauss_quantile(
    omega: &[[f64; 4]; 4],
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if draws == 0 {
        return Err(Error::InvalidInput("draws must be positive".into()));
    }
    let m = Matrix4::from_fn(|i, j| omega[i][j]);
    for i in 0..4 {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 {
                return Err(Error::InvalidCovariance(format!(
                    "not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let eig = SymmetricEigen::new(m);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_ev < -1e-8 {
        return Err(Error::InvalidCovariance(format!(
            "negative eigenvalue {min_ev}"
        )));
    }
    // Square root with tiny negative eigenvalues clamped to zero.
    let mut sqrt_diag = Vector4::zeros();
    for i in 0..4 {
        sqrt_diag[i] = eig.eigenvalues[i].max(0.0).sqrt();
    }
    let root = eig.eigenvectors * Matrix4::from_diagonal(&sqrt_diag);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut maxima = Vec::with_capacity(draws);
    for _ in 0..draws {
        let g = Vector4::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let x = root * g;
        let stat = x.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        maxima.push(stat);
    }
    let k = (((1.0 - alpha) * draws as f64).ceil() as usize).clamp(1, draws) - 1;
    let (_, quantile, _) = maxima.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap());
    Ok(*quantile)
}

/// Correlation-like matrix of the studentized multinomial proportions:
/// unit diagonal, off-diagonals -sqrt(pi pi' / ((1-pi)(1-pi'))).
pub fn studentized_omega(pi: &[f64; 4]) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = if i == j {
                1.0
            } else {
                -(pi[i] * pi[j] / ((1.0 - pi[i]) * (1.0 - pi[j]))).sqrt()
            };
        }
    }
    m
}

/// Build a confidence set for the cell probabilities from counts.
///
/// Q needs no Monte Carlo (the threshold is the chi-squared 3-df quantile);
/// N and T share the critical value d_hat from [`max_abs_gauss_quantile`]
/// over the estimated studentized covariance.
pub fn conf_set(
    counts: [u64; 4],
    alpha: f64,
    shape: SetShape,
    mc_draws: usize,
    seed: u64,
) -> Result<ConfidenceSet> {
    check_alpha(alpha)?;
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::InvalidInput("zero total count".into()));
    }
    let t = ObservedTable::from_counts(counts);
    let pi = *t.cells();
    let nf = n as f64;

    match shape {
        SetShape::Q => {
            let mut sigma = Matrix4::zeros();
            for i in 0..4 {
                for j in 0..4 {
                    sigma[(i, j)] = if i == j { pi[i] * (1.0 - pi[i]) } else { -pi[i] * pi[j] };
                }
            }
            let (pinv, rank) = pseudo_inverse(&sigma);
            if rank == 0 {
                return Err(Error::DegenerateSet);
            }
            let chi = ChiSquared::new(3.0).expect("df 3");
            let threshold = chi.inverse_cdf(1.0 - alpha) / nf;
            Ok(ConfidenceSet {
                shape,
                center: pi,
                n,
                alpha,
                payload: SetPayload::Elliptical { matrix: sigma, pinv, threshold },
            })
        }
        SetShape::N | SetShape::T => {
            for (i, &(z, y)) in CELLS.iter().enumerate() {
                if pi[i] <= 0.0 || pi[i] >= 1.0 {
                    return Err(Error::BoundaryCell { z, y, value: pi[i] });
                }
            }
            let omega = studentized_omega(&pi);
            let crit = max_abs_gauss_quantile(&omega, alpha, mc_draws, seed)?;
            let mut lower = [0.0; 4];
            let mut upper = [0.0; 4];
            match shape {
                SetShape::N => {
                    for i in 0..4 {
                        let half = crit * (pi[i] * (1.0 - pi[i]) / nf).sqrt();
                        lower[i] = (pi[i] - half).max(0.0);
                        upper[i] = (pi[i] + half).min(1.0);
                    }
                }
                SetShape::T => {
                    let half = crit / nf.sqrt();
                    for i in 0..4 {
                        let theta = (2.0 * pi[i] - 1.0).asin();
                        let tl = (theta - half).max(-std::f64::consts::FRAC_PI_2);
                        let th = (theta + half).min(std::f64::consts::FRAC_PI_2);
                        lower[i] = (tl.sin() + 1.0) / 2.0;
                        upper[i] = (th.sin() + 1.0) / 2.0;
                    }
                }
                SetShape::Q => unreachable!(),
            }
            Ok(ConfidenceSet {
                shape,
                center: pi,
                n,
                alpha,
                payload: SetPayload::Rectangular { lower, upper, crit },
            })
        }
    }
}

/// Confidence bounds plus the context they were computed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiBoundsResult {
    pub interval: BoundsInterval,
    pub shape: SetShape,
    pub params: SensitivityParams,
    pub alpha: f64,
    pub n: u64,
    pub converged: bool,
}

/// Boxed-minimum confidence bounds for a rectangle of cell probabilities:
/// the per-cell sensitivity limits are built from the rectangle endpoints,
/// then minimized exactly as in the point analysis (reciprocal of the
/// relabeled minimum for the upper end).
pub fn rect_ci_bounds(
    rect_lower: &[f64; 4],
    rect_upper: &[f64; 4],
    delta: f64,
    gamma: f64,
) -> Result<BoundsInterval> {
    let mut lower = [0.0; 4];
    let mut upper = [0.0; 4];
    for i in 0..4 {
        lower[i] = sharp::cell_limits(rect_lower[i], delta, gamma).0;
        upper[i] = sharp::cell_limits(rect_upper[i], delta, gamma).1;
    }
    let bx = sharp::CellBox { lower, upper };
    let (lo, lo_w) = sharp::min_or_boxed(&bx)?;
    let (m, qr) = sharp::min_or_boxed(&bx.relabel_exposure())?;
    let upper_witness = [qr[1], qr[0], qr[3], qr[2]];
    Ok(BoundsInterval {
        lower: lo,
        upper: if m == 0.0 { f64::INFINITY } else { 1.0 / m },
        lower_witness: Some(lo_w),
        upper_witness: Some(upper_witness),
    })
}

/// Closed-form confidence bounds (rectangular sets only). Requesting shape
/// Q is an error: the elliptical constraint has no closed form and belongs
/// to [`ci_bounds_opt`].
pub fn ci_bounds_closed(
    counts: [u64; 4],
    alpha: f64,
    delta: f64,
    gamma: f64,
    shape: SetShape,
    mc_draws: usize,
    seed: u64,
) -> Result<CiBoundsResult> {
    if shape == SetShape::Q {
        return Err(Error::InvalidInput(
            "closed-form confidence bounds need a rectangular set (N or T); use ci_bounds_opt for shape Q".into(),
        ));
    }
    let set = conf_set(counts, alpha, shape, mc_draws, seed)?;
    let (lo, hi) = set.rect_endpoints().expect("rectangular");
    let interval = rect_ci_bounds(lo, hi, delta, gamma)?;
    Ok(CiBoundsResult {
        interval,
        shape,
        params: SensitivityParams::delta_gamma(delta, gamma)?,
        alpha,
        n: set.n,
        converged: true,
    })
}

/// Optimization-based confidence bounds: the cell probabilities join the
/// decision variables, constrained to the confidence set and the simplex,
/// on top of the three-constraint program.
pub fn ci_bounds_opt(
    counts: [u64; 4],
    alpha: f64,
    params: &SensitivityParams,
    shape: SetShape,
    mc_draws: usize,
    cfg: &SolverConfig,
) -> Result<CiBoundsResult> {
    let set = conf_set(counts, alpha, shape, mc_draws, derive_seed(cfg.seed, 101))?;
    let interval_result = ci_bounds_opt_for_set(&set, params, cfg)?;
    Ok(CiBoundsResult {
        interval: interval_result.0,
        shape,
        params: *params,
        alpha,
        n: set.n,
        converged: interval_result.1,
    })
}

/// Worst-case sensitivity bounds over all cell probabilities in an already
/// constructed set. Returns (interval, converged).
pub fn ci_bounds_opt_for_set(
    set: &ConfidenceSet,
    params: &SensitivityParams,
    cfg: &SolverConfig,
) -> Result<(BoundsInterval, bool)> {
    cfg.validate()?;
    let (delta, gamma, xi) = (params.delta, params.gamma, params.xi);
    let center = set.center;
    for (i, &(z, y)) in CELLS.iter().enumerate() {
        if center[i] <= 0.0 {
            return Err(Error::UndefinedOddsRatio { z, y });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 7));

    // Candidate cell-probability vectors: the center plus boundary points of
    // the set along simplex-tangent directions (axes and random).
    let mut pis: Vec<[f64; 4]> = vec![center];
    let mut dirs: Vec<[f64; 4]> = Vec::new();
    for i in 0..4 {
        let mut d = [-0.25; 4];
        d[i] += 1.0;
        dirs.push(d);
        let neg = [-d[0], -d[1], -d[2], -d[3]];
        dirs.push(neg);
    }
    for _ in 0..cfg.starts.max(8) {
        dirs.push(random_tangent_direction(&mut rng));
    }
    for d in &dirs {
        pis.push(set_boundary_point(set, &center, d));
    }

    // For each candidate pi, the inner problem at that pi contributes warm
    // starts; with xi inactive the inner problem is the exact closed form,
    // so the outer search reduces to three dimensions over pi itself.
    let xi_active = xi.is_finite() && gamma.is_finite() && delta > 0.0 && gamma > 1.0;

    if !xi_active {
        // Inner problem solved in closed form per pi; compass over pi only.
        let eval_lower = |q: &[f64; 4]| -> Option<f64> {
            inner_closed(q, set, delta, gamma).map(|iv| iv.0)
        };
        let eval_upper = |q: &[f64; 4]| -> Option<f64> {
            inner_closed(q, set, delta, gamma).map(|iv| iv.1)
        };
        let mut best_lo = f64::INFINITY;
        let mut best_hi = f64::NEG_INFINITY;
        let mut conv = true;
        for p in &pis {
            if let Some((lo, hi, c)) = outer_search(p, &eval_lower, &eval_upper) {
                best_lo = best_lo.min(lo);
                best_hi = best_hi.max(hi);
                conv &= c;
            }
        }
        if best_lo == f64::INFINITY || best_hi == f64::NEG_INFINITY {
            return Err(Error::DegenerateSet);
        }
        let interval = BoundsInterval {
            lower: best_lo,
            upper: best_hi,
            lower_witness: None,
            upper_witness: None,
        };
        return Ok((interval, conv));
    }

    // Full joint search over (pi, p0): six free coordinates, with the
    // mixture weight profiled out exactly per candidate pair.
    let program = JointProgram {
        set,
        delta,
        gamma,
        xi,
    };
    let mut starts: Vec<[f64; 6]> = Vec::new();
    for p in &pis {
        starts.push(joint_identity(p));
        // Inner closed-form witnesses at this candidate pi, pulled toward
        // pi until the heterogeneity constraint accepts them.
        if let Ok(t) = ObservedTable::from_probs(normalize4(p)) {
            if let Ok(closed) = sharp::bounds_delta_gamma(&t, delta, gamma) {
                for witness in [closed.lower_witness, closed.upper_witness]
                    .into_iter()
                    .flatten()
                {
                    starts.push(repair_joint(&program, p, &witness));
                }
            }
        }
    }

    let (hull_lo, hull_hi) = set.cell_hull();
    let pi_widths = [
        (hull_hi[0] - hull_lo[0]).max(1e-6),
        (hull_hi[1] - hull_lo[1]).max(1e-6),
        (hull_hi[2] - hull_lo[2]).max(1e-6),
    ];
    let init_steps = [
        pi_widths[0] / 8.0,
        pi_widths[1] / 8.0,
        pi_widths[2] / 8.0,
        0.02,
        0.02,
        0.02,
    ];
    let budget = 6000usize;

    let run = |sign: f64| -> (f64, [f64; 6], bool) {
        let or0 = cross_ratio(&center).ln();
        let mut best = sign * or0;
        let mut best_x = joint_identity(&center);
        let mut conv = true;
        let side_tag = if sign > 0.0 { 0 } else { 1 };
        for (k, x0) in starts.iter().enumerate() {
            let f0 = match program.eval(x0) {
                Some(f) => f,
                None => continue,
            };
            let run_seed = crate::derive_seed(cfg.seed, (300 + 2 * k + side_tag) as u64);
            let (x, f, c) = compass6(&program, *x0, f0, init_steps, run_seed, sign, budget);
            if sign * f < best - 1e-15 {
                best = sign * f;
                best_x = x;
                conv = c;
            }
        }
        for round in 0..cfg.refine_rounds {
            let f0 = match program.eval(&best_x) {
                Some(f) => f,
                None => break,
            };
            let scale = 4.0 * (round + 1) as f64;
            let reset = init_steps.map(|s| s / scale);
            let run_seed = crate::derive_seed(cfg.seed, (900 + 2 * round + side_tag) as u64);
            let (x, f, c) = compass6(&program, best_x, f0, reset, run_seed, sign, budget);
            if sign * f < best - 1e-15 {
                best = sign * f;
                best_x = x;
            }
            conv = c;
        }
        (sign * best, best_x, conv)
    };

    let (flo, xlo, clo) = run(1.0);
    let (fhi, xhi, chi_) = run(-1.0);
    let interval = BoundsInterval {
        lower: flo.exp(),
        upper: fhi.exp(),
        lower_witness: Some(p0_of(&xlo)),
        upper_witness: Some(p0_of(&xhi)),
    };
    Ok((interval, clo && chi_))
}

/// Inner closed form at a candidate pi: sharp (delta, gamma) bounds if pi is
/// a valid positive probability vector inside the set.
fn inner_closed(
    q: &[f64; 4],
    set: &ConfidenceSet,
    delta: f64,
    gamma: f64,
) -> Option<(f64, f64)> {
    if q.iter().any(|&c| c <= 1e-12) {
        return None;
    }
    if !set.contains(q) {
        return None;
    }
    let t = ObservedTable::from_probs(normalize4(q)).ok()?;
    if delta == 0.0 || gamma == 1.0 {
        let or = t.observed_or().ok()?;
        return Some((or, or));
    }
    let b = if gamma.is_infinite() {
        sharp::bounds_delta(&t, delta).ok()?
    } else {
        sharp::bounds_delta_gamma(&t, delta, gamma).ok()?
    };
    Some((b.lower, b.upper))
}

fn normalize4(q: &[f64; 4]) -> [f64; 4] {
    // q is parametrized to sum to one already; renormalize to wash out
    // accumulated rounding before the strict table validation.
    let s: f64 = q.iter().sum();
    [q[0] / s, q[1] / s, q[2] / s, q[3] / s]
}

/// Compass search over the three free pi coordinates, evaluating closed-form
/// inner bounds. Returns best (lower, upper, converged-by-step-collapse).
fn outer_search(
    p0: &[f64; 4],
    eval_lower: &dyn Fn(&[f64; 4]) -> Option<f64>,
    eval_upper: &dyn Fn(&[f64; 4]) -> Option<f64>,
) -> Option<(f64, f64, bool)> {
    let to_q = |x: &[f64; 3]| -> [f64; 4] { [x[0], x[1], x[2], 1.0 - x[0] - x[1] - x[2]] };
    let x0 = [p0[0], p0[1], p0[2]];
    let q0 = to_q(&x0);
    let lo0 = eval_lower(&q0)?;
    let hi0 = eval_upper(&q0)?;

    let search = |minimize: bool| -> (f64, bool) {
        let mut x = x0;
        let mut best = if minimize { lo0 } else { -hi0 };
        let mut steps = [0.01_f64; 3];
        let mut evals = 0;
        while evals < 3000 {
            let mut improved = false;
            for j in 0..3 {
                for sgn in [1.0, -1.0] {
                    let mut cand = x;
                    cand[j] += sgn * steps[j];
                    evals += 1;
                    let q = to_q(&cand);
                    let v = if minimize {
                        eval_lower(&q)
                    } else {
                        eval_upper(&q).map(|u| -u)
                    };
                    if let Some(v) = v {
                        if v < best - 1e-15 {
                            best = v;
                            x = cand;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                if steps.iter().all(|&s| s < 1e-9) {
                    return (best, true);
                }
                for s in &mut steps {
                    *s *= 0.5;
                }
            }
        }
        (best, false)
    };
    let (lo, c1) = search(true);
    let (neg_hi, c2) = search(false);
    Some((lo, -neg_hi, c1 && c2))
}

struct JointProgram<'a> {
    set: &'a ConfidenceSet,
    delta: f64,
    gamma: f64,
    xi: f64,
}

impl JointProgram<'_> {
    /// x = (pi00, pi10, pi01, p00, p10, p01); the fourth cell of each
    /// probability vector is the simplex residual, and the mixture weight
    /// is profiled out exactly for each (pi, p0) pair.
    fn eval(&self, x: &[f64; 6]) -> Option<f64> {
        let q = [x[0], x[1], x[2], 1.0 - x[0] - x[1] - x[2]];
        if q.iter().any(|&c| c <= 1e-12) {
            return None;
        }
        if !self.set.contains(&q) {
            return None;
        }
        let p0 = [x[3], x[4], x[5], 1.0 - x[3] - x[4] - x[5]];
        for &c in &p0 {
            if !(c > 0.0 && c < 1.0) {
                return None;
            }
        }
        // p0 = q is the w = 0 reduction, feasible for any parameters.
        let same = (0..4).all(|i| (p0[i] - q[i]).abs() < 1e-14);
        if !same {
            let inner = crate::qcqp::Program {
                pi: q,
                delta: self.delta,
                gamma: self.gamma,
                xi: self.xi,
            };
            inner.feasible_w(&p0)?;
        }
        Some(cross_ratio(&p0).ln())
    }
}

fn joint_identity(pi: &[f64; 4]) -> [f64; 6] {
    [pi[0], pi[1], pi[2], pi[0], pi[1], pi[2]]
}

/// Bisect the hidden table from pi toward `target` at fixed pi until the
/// joint program accepts it.
fn repair_joint(program: &JointProgram, pi: &[f64; 4], target: &[f64; 4]) -> [f64; 6] {
    let full = [pi[0], pi[1], pi[2], target[0], target[1], target[2]];
    if program.eval(&full).is_some() {
        return full;
    }
    let base = joint_identity(pi);
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let mut x = base;
        for j in 0..3 {
            x[3 + j] += mid * (target[j] - base[3 + j]);
        }
        if program.eval(&x).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = base;
    for j in 0..3 {
        x[3 + j] += lo * (target[j] - base[3 + j]);
    }
    x
}

fn p0_of(x: &[f64; 6]) -> [f64; 4] {
    [x[3], x[4], x[5], 1.0 - x[3] - x[4] - x[5]]
}

fn compass6(
    program: &JointProgram,
    x0: [f64; 6],
    f0: f64,
    init_steps: [f64; 6],
    seed: u64,
    sign: f64,
    budget: usize,
) -> ([f64; 6], f64, bool) {
    let eval = |x: &[f64; 6]| program.eval(x);
    crate::search::compass(&eval, x0, f0, init_steps, seed, sign, budget)
}

fn random_tangent_direction(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let mut d = [0.0; 4];
    let mut mean = 0.0;
    for v in &mut d {
        *v = rng.sample::<f64, _>(StandardNormal);
        mean += *v;
    }
    mean /= 4.0;
    let mut norm = 0.0;
    for v in &mut d {
        *v -= mean;
        norm += *v * *v;
    }
    let norm = norm.sqrt().max(1e-12);
    for v in &mut d {
        *v /= norm;
    }
    d
}

/// Furthest point of the set along a simplex-tangent direction from the
/// center, by bisection on membership and positivity.
fn set_boundary_point(set: &ConfidenceSet, center: &[f64; 4], dir: &[f64; 4]) -> [f64; 4] {
    let at = |t: f64| -> [f64; 4] {
        [
            center[0] + t * dir[0],
            center[1] + t * dir[1],
            center[2] + t * dir[2],
            center[3] + t * dir[3],
        ]
    };
    let ok = |q: &[f64; 4]| q.iter().all(|&c| c > 1e-9) && set.contains(q);
    let mut lo = 0.0_f64;
    let mut hi = 2.0_f64;
    if ok(&at(hi)) {
        lo = hi;
    } else {
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if ok(&at(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    at(0.98 * lo)
}

/// Sampling oracle for the optimization-based bounds: inner sensitivity
/// bounds at deterministically sampled set points, enveloped. This is an
/// inner approximation; [`ci_bounds_opt`] must contain it.
pub fn ci_oracle_bounds(
    counts: [u64; 4],
    alpha: f64,
    params: &SensitivityParams,
    shape: SetShape,
    mc_draws: usize,
    n_samples: usize,
    cfg: &SolverConfig,
) -> Result<BoundsInterval> {
    let set = conf_set(counts, alpha, shape, mc_draws, derive_seed(cfg.seed, 101))?;
    let center = set.center;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 13));
    let mut points: Vec<[f64; 4]> = vec![center];
    for i in 0..4 {
        let mut d = [-0.25; 4];
        d[i] += 1.0;
        points.push(set_boundary_point(&set, &center, &d));
        let neg = [-d[0], -d[1], -d[2], -d[3]];
        points.push(set_boundary_point(&set, &center, &neg));
    }
    while points.len() < n_samples {
        let d = random_tangent_direction(&mut rng);
        let boundary = set_boundary_point(&set, &center, &d);
        points.push(boundary);
        if points.len() < n_samples {
            // An interior point at half radius for coverage of the inside.
            let mid = [
                0.5 * (center[0] + boundary[0]),
                0.5 * (center[1] + boundary[1]),
                0.5 * (center[2] + boundary[2]),
                0.5 * (center[3] + boundary[3]),
            ];
            points.push(mid);
        }
    }

    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for (k, q) in points.iter().enumerate() {
        if q.iter().any(|&c| c <= 1e-12) {
            continue;
        }
        let t = match ObservedTable::from_probs(normalize4(q)) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let mut inner_cfg = *cfg;
        inner_cfg.seed = derive_seed(cfg.seed, 1000 + k as u64);
        let r = crate::qcqp::solve_bounds(&t, params, &inner_cfg)?;
        lower = lower.min(r.interval.lower);
        upper = upper.max(r.interval.upper);
    }
    Ok(BoundsInterval {
        lower,
        upper,
        lower_witness: None,
        upper_witness: None,
    })
}

/// Per-stratum level giving simultaneous 1-alpha coverage across K strata:
/// 1 - (1-alpha)^(1/K).
pub fn simultaneous_level(alpha: f64, k: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if k == 0 {
        return Err(Error::InvalidInput("stratum count must be >= 1".into()));
    }
    Ok(1.0 - (1.0 - alpha).powf(1.0 / k as f64))
}
