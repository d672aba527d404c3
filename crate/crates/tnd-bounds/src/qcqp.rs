//! The full three-constraint sensitivity program: extremize the causal odds
//! ratio over hidden decompositions pi = (1-w) p0 + w p1 subject to
//! w <= delta, per-cell ratio bounds gamma, and heterogeneity bound xi.
//!
//! Instead of the quadratic encoding with auxiliary ratio and product
//! variables, the program is searched in a reduced parametrization: for
//! w > 0 the mixture pins p1 = (pi - (1-w) p0)/w, and for a fixed hidden
//! table p0 the set of admissible weights is computable exactly — the box
//! constraints give a monotone threshold in w, and along s = 1/w the
//! hidden level-1 table moves on the affine path p0 + s (pi - p0), so the
//! heterogeneity constraint reduces to two quadratic inequalities in s.
//! The search therefore runs over the three free coordinates of p0 alone,
//! with w recovered per candidate. A multistart compass search does the
//! local work; [`oracle_bounds`] is an independent brute-force grid over
//! the same reduction used to cross-check it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sharp::{self, BoundsInterval, HiddenDecomposition};
use crate::table::{cross_ratio, ObservedTable, SensitivityParams, CELLS};

/// Relative slack allowed on ratio-type constraints during search and in
/// returned witnesses; keeps exactly-on-the-boundary warm starts feasible.
const RATIO_SLACK: f64 = 1e-9;
/// Smallest mixture weight considered a genuine hidden split.
const W_FLOOR: f64 = 1e-9;

/// Multistart/search knobs. All randomness comes from `seed`; identical
/// configs give bit-identical results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of randomized starts, in addition to the deterministic warm starts.
    pub starts: usize,
    /// Oracle lattice resolution, also used to scale initial search steps.
    pub grid_step: f64,
    /// Extra local passes from the incumbent after the multistart sweep.
    pub refine_rounds: usize,
    /// Feasibility tolerance applied to returned witnesses.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            starts: 32,
            grid_step: 0.01,
            refine_rounds: 2,
            tol: 1e-9,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts < 1 {
            return Err(Error::InvalidParams("starts must be >= 1".into()));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 0.1) {
            return Err(Error::InvalidParams(format!(
                "grid_step={} not in (0, 0.1]",
                self.grid_step
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParams("tol must be positive".into()));
        }
        Ok(())
    }
}

/// A candidate decomposition together with the derived quantities the
/// constraints act on.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasiblePoint {
    pub decomposition: HiddenDecomposition,
    /// Per-cell ratios p0/p1 in canonical order; infinite when p1 has a zero cell.
    pub ratios: [f64; 4],
    /// Ratio of causal odds ratios OR(p0)/OR(p1); NaN when OR(p1) is undefined.
    pub heterogeneity: f64,
}

impl FeasiblePoint {
    /// Build from the reduced coordinates. For w below the search floor the
    /// hidden split is taken to be absent (p1 = p0).
    pub fn from_reduced(t: &ObservedTable, w: f64, p0: [f64; 4]) -> Self {
        let pi = t.cells();
        let p1 = if w > W_FLOOR {
            let mut p1 = [0.0; 4];
            for i in 0..4 {
                p1[i] = (pi[i] - (1.0 - w) * p0[i]) / w;
            }
            p1
        } else {
            p0
        };
        Self::from_parts(w, p0, p1)
    }

    pub fn from_parts(w: f64, p0: [f64; 4], p1: [f64; 4]) -> Self {
        let mut ratios = [0.0; 4];
        for i in 0..4 {
            ratios[i] = if p1[i] > 0.0 {
                p0[i] / p1[i]
            } else if p0[i] == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
        }
        let or0 = cross_ratio(&p0);
        let or1 = cross_ratio(&p1);
        let heterogeneity = or0 / or1;
        FeasiblePoint {
            decomposition: HiddenDecomposition {
                w,
                p0,
                p1,
                degenerate: false,
            },
            ratios,
            heterogeneity,
        }
    }

    /// The causal odds ratio of the hidden level-0 table.
    pub fn objective(&self) -> f64 {
        cross_ratio(&self.decomposition.p0)
    }
}

/// One violated constraint with how far it is violated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: String,
    pub excess: f64,
}

/// Outcome of a feasibility check; empty means feasible.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, constraint: impl Into<String>, excess: f64) {
        self.violations.push(Violation {
            constraint: constraint.into(),
            excess,
        });
    }
}

/// Check every program constraint at tolerance `tol` (absolute for masses
/// and the mixture identity, relative for the ratio-type bounds) and report
/// each violation with its magnitude.
pub fn is_feasible(
    pt: &FeasiblePoint,
    t: &ObservedTable,
    params: &SensitivityParams,
    tol: f64,
) -> (bool, ViolationReport) {
    let mut report = ViolationReport::default();
    let d = &pt.decomposition;
    let pi = t.cells();

    for i in 0..4 {
        let (z, y) = CELLS[i];
        let gap = (pi[i] - (1.0 - d.w) * d.p0[i] - d.w * d.p1[i]).abs();
        if gap > tol {
            report.push(format!("mixture({z},{y})"), gap);
        }
    }
    let s0: f64 = d.p0.iter().sum();
    if (s0 - 1.0).abs() > tol {
        report.push("p0_simplex", (s0 - 1.0).abs());
    }
    let s1: f64 = d.p1.iter().sum();
    if (s1 - 1.0).abs() > tol {
        report.push("p1_simplex", (s1 - 1.0).abs());
    }
    for i in 0..4 {
        let (z, y) = CELLS[i];
        if d.p0[i] < -tol || d.p0[i] > 1.0 + tol {
            report.push(format!("p0_range({z},{y})"), range_excess(d.p0[i]));
        }
        if d.p1[i] < -tol || d.p1[i] > 1.0 + tol {
            report.push(format!("p1_range({z},{y})"), range_excess(d.p1[i]));
        }
    }
    if d.w < -tol || d.w > params.delta + tol {
        let excess = if d.w < 0.0 { -d.w } else { d.w - params.delta };
        report.push("w_range", excess);
    }
    if params.gamma.is_finite() {
        let cap = params.gamma * (1.0 + tol.max(RATIO_SLACK));
        for i in 0..4 {
            let (z, y) = CELLS[i];
            let r = pt.ratios[i];
            if !(1.0 / cap <= r && r <= cap) {
                let excess = if r > cap {
                    r - params.gamma
                } else {
                    1.0 / params.gamma - r
                };
                report.push(format!("gamma_ratio({z},{y})"), excess);
            }
        }
    }
    if params.xi.is_finite() {
        let cap = params.xi * (1.0 + tol.max(RATIO_SLACK));
        let h = pt.heterogeneity;
        if !(1.0 / cap <= h && h <= cap) {
            let excess = if h.is_nan() {
                f64::NAN
            } else if h > cap {
                h - params.xi
            } else {
                1.0 / params.xi - h
            };
            report.push("xi_heterogeneity", excess);
        }
    }
    (report.is_feasible(), report)
}

fn range_excess(v: f64) -> f64 {
    if v < 0.0 {
        -v
    } else {
        (v - 1.0).max(0.0)
    }
}

/// Solver output: the interval plus the feasible points attaining each end
/// and whether the local searches terminated by step collapse.
#[derive(Debug, Clone)]
pub struct SolverResult {
    pub interval: BoundsInterval,
    pub lower_point: FeasiblePoint,
    pub upper_point: FeasiblePoint,
    pub converged: bool,
}

/// The reduced program with the mixture weight profiled out analytically.
/// Requires finite gamma > 1, finite xi >= 1 and delta > 0; the other
/// parameter corners are routed to closed forms before a search starts.
pub(crate) struct Program {
    pub pi: [f64; 4],
    pub delta: f64,
    pub gamma: f64,
    pub xi: f64,
}

impl Program {
    /// Smallest weight at which the (delta, gamma) box admits `p0`:
    /// the per-cell thresholds from the ratio bounds and from p1 <= 1 are
    /// all nondecreasing requirements on w.
    fn w_box_threshold(&self, p0: &[f64; 4]) -> Option<f64> {
        let gamma = self.gamma * (1.0 + RATIO_SLACK);
        let mut wmin = 0.0_f64;
        for i in 0..4 {
            let pi_i = self.pi[i];
            let p = p0[i];
            if !(p > 0.0 && p < 1.0) {
                return None;
            }
            if pi_i > p {
                // ratio lower bound pi/(w gamma + 1 - w) <= p0
                wmin = wmin.max((pi_i / p - 1.0) / (gamma - 1.0));
                // p1 <= 1
                wmin = wmin.max((pi_i - p) / (1.0 - p));
            } else if p > pi_i {
                // ratio upper bound p0 <= pi gamma / (w + (1-w) gamma)
                wmin = wmin.max(gamma * (1.0 - pi_i / p) / (gamma - 1.0));
            }
        }
        if wmin > self.delta {
            None
        } else {
            Some(wmin)
        }
    }

    /// A weight w in (0, delta] at which (p0, p1(w)) satisfies every
    /// constraint including heterogeneity, or None. Along s = 1/w the
    /// level-1 table is p0 + s (pi - p0), so OR(p1) in [OR(p0)/xi,
    /// OR(p0) xi] is a pair of quadratic inequalities in s solved exactly.
    pub(crate) fn feasible_w(&self, p0: &[f64; 4]) -> Option<f64> {
        let wmin = self.w_box_threshold(p0)?;
        let s_lo = 1.0 / self.delta;
        let s_hi = 1.0 / wmin.max(W_FLOOR);

        // Quadratic coefficients of A(s) = p1_11 p1_00 and B(s) = p1_10 p1_01.
        let d: Vec<f64> = (0..4).map(|i| self.pi[i] - p0[i]).collect();
        let quad = |a: usize, b: usize| -> [f64; 3] {
            [
                p0[a] * p0[b],
                p0[a] * d[b] + p0[b] * d[a],
                d[a] * d[b],
            ]
        };
        let qa = quad(3, 0);
        let qb = quad(1, 2);
        let or0 = cross_ratio(p0);
        let xi = self.xi * (1.0 + RATIO_SLACK);
        let c_lo = or0 / xi;
        let c_hi = or0 * xi;
        // F_lo(s) = A - c_lo B >= 0 and F_hi(s) = A - c_hi B <= 0.
        let f_lo = [qa[0] - c_lo * qb[0], qa[1] - c_lo * qb[1], qa[2] - c_lo * qb[2]];
        let f_hi = [qa[0] - c_hi * qb[0], qa[1] - c_hi * qb[1], qa[2] - c_hi * qb[2]];

        let ge = quadratic_nonneg_intervals(f_lo, s_lo, s_hi);
        let le = quadratic_nonneg_intervals([-f_hi[0], -f_hi[1], -f_hi[2]], s_lo, s_hi);
        let feasible = intersect_intervals(&ge, &le);
        let (a, b) = feasible.first().copied()?;
        // Prefer the delta end (largest box slack), else the first interval's
        // midpoint so the witness sits off the heterogeneity boundary.
        let s = if a <= s_lo * (1.0 + 1e-12) { s_lo } else { 0.5 * (a + b) };
        Some(1.0 / s)
    }

    /// Objective (log odds ratio) if some admissible weight exists for this
    /// hidden table. x holds the three free coordinates of p0.
    pub(crate) fn eval3(&self, x: &[f64; 3]) -> Option<f64> {
        let p0 = [x[0], x[1], x[2], 1.0 - x[0] - x[1] - x[2]];
        for &c in &p0 {
            if !(c > 0.0 && c < 1.0) {
                return None;
            }
        }
        self.feasible_w(&p0)?;
        Some(cross_ratio(&p0).ln())
    }
}

/// Solution set of alpha s^2 + beta s + gamma >= 0 intersected with
/// [lo, hi], as at most two closed intervals.
fn quadratic_nonneg_intervals(coef: [f64; 3], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let (c, b, a) = (coef[0], coef[1], coef[2]);
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        // Identically zero: nonnegative everywhere.
        return vec![(lo, hi)];
    }
    let tiny = 1e-14 * scale;
    if a.abs() <= tiny {
        if b.abs() <= tiny {
            return if c >= -tiny { vec![(lo, hi)] } else { vec![] };
        }
        let root = -c / b;
        return if b > 0.0 {
            clip(root.max(lo), hi, lo, hi)
        } else {
            clip(lo, root.min(hi), lo, hi)
        };
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        // No sign change: sign given by a (touching root ignored).
        return if a > 0.0 { vec![(lo, hi)] } else { vec![] };
    }
    let sq = disc.sqrt();
    // Numerically stable root pair.
    let q = -0.5 * (b + b.signum() * sq);
    let (mut r1, mut r2) = (q / a, c / q);
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    if a > 0.0 {
        // Nonnegative outside (r1, r2).
        let mut out = clip(lo, r1.min(hi), lo, hi);
        out.extend(clip(r2.max(lo), hi, lo, hi));
        out
    } else {
        // Nonnegative inside [r1, r2].
        clip(r1.max(lo), r2.min(hi), lo, hi)
    }
}

fn clip(a: f64, b: f64, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let a = a.max(lo);
    let b = b.min(hi);
    if a <= b {
        vec![(a, b)]
    } else {
        vec![]
    }
}

fn intersect_intervals(xs: &[(f64, f64)], ys: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a, b) in xs {
        for &(c, d) in ys {
            let lo = a.max(c);
            let hi = b.min(d);
            if lo <= hi {
                out.push((lo, hi));
            }
        }
    }
    out
}

/// Pattern search over the three free hidden-table coordinates.
fn compass_search(
    program: &Program,
    x0: [f64; 3],
    f0: f64,
    init_steps: [f64; 3],
    seed: u64,
    sign: f64,
    budget: usize,
) -> ([f64; 3], f64, bool) {
    let eval = |x: &[f64; 3]| program.eval3(x);
    crate::search::compass(&eval, x0, f0, init_steps, seed, sign, budget)
}

/// Extremize the causal odds ratio under the three constraints.
///
/// Routing per the closed-form reductions: `delta = 0` or `gamma = 1`
/// collapse to the observed odds ratio; infinite `gamma` makes `xi`
/// irrelevant and reduces to the delta-only bounds; infinite `xi` is the
/// two-constraint analysis with its exact closed form. Otherwise a
/// multistart compass search runs over the hidden table, warm-started from
/// the closed-form witnesses, a coarse deterministic lattice, and
/// randomized rays.
pub fn solve_bounds(
    t: &ObservedTable,
    params: &SensitivityParams,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    cfg.validate()?;
    let or = t.observed_or()?;
    let pi = t.cells();
    let (delta, gamma, xi) = (params.delta, params.gamma, params.xi);

    let identity = FeasiblePoint::from_parts(0.0, *pi, *pi);
    if delta == 0.0 || gamma == 1.0 {
        return Ok(SolverResult {
            interval: BoundsInterval::point(or, *pi),
            lower_point: identity.clone(),
            upper_point: identity,
            converged: true,
        });
    }

    if gamma.is_infinite() {
        // With unrestricted confounding strength the heterogeneity bound has
        // no bite; the delta-only analysis is sharp.
        let interval = sharp::bounds_delta(t, delta)?;
        let lo = sharp::attaining_decomposition(t, delta, sharp::BoundSide::Lower)?;
        let hi = sharp::attaining_decomposition(t, delta, sharp::BoundSide::Upper)?;
        return Ok(SolverResult {
            interval,
            lower_point: FeasiblePoint::from_parts(lo.w, lo.p0, lo.p1),
            upper_point: FeasiblePoint::from_parts(hi.w, hi.p0, hi.p1),
            converged: true,
        });
    }

    if xi.is_infinite() {
        // Exact two-constraint closed form; w = delta carries any boxed p0.
        let interval = sharp::bounds_delta_gamma(t, delta, gamma)?;
        let lw = interval.lower_witness.expect("closed form returns witnesses");
        let uw = interval.upper_witness.expect("closed form returns witnesses");
        return Ok(SolverResult {
            interval,
            lower_point: FeasiblePoint::from_reduced(t, delta, lw),
            upper_point: FeasiblePoint::from_reduced(t, delta, uw),
            converged: true,
        });
    }

    let program = Program {
        pi: *pi,
        delta,
        gamma,
        xi,
    };
    let closed = sharp::bounds_delta_gamma(t, delta, gamma)?;
    let box_delta = sharp::cell_box(t, delta, gamma)?;

    // Deterministic warm starts: the observed table, both closed-form
    // witnesses (repaired toward pi if xi cuts them off), and the best
    // coarse-lattice points per side.
    let mut starts: Vec<[f64; 3]> = vec![[pi[0], pi[1], pi[2]]];
    for witness in [closed.lower_witness, closed.upper_witness].into_iter().flatten() {
        starts.push(repair_toward_pi(&program, &witness));
    }
    starts.extend_from_slice(&coarse_grid_starts(&program, &box_delta, 8));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.starts {
        let dir = random_direction(&mut rng);
        starts.push(feasible_along(&program, pi, &dir));
    }

    let widths = box_widths(&box_delta);
    let init_steps = [
        (widths[0] / 8.0).max(1e-6),
        (widths[1] / 8.0).max(1e-6),
        (widths[2] / 8.0).max(1e-6),
    ];
    let budget = 5000usize;

    let run_side = |sign: f64| -> (f64, [f64; 3], bool) {
        // p0 = pi (any weight, in particular w = 0) is always feasible.
        let mut best_val = sign * or.ln();
        let mut best_x = [pi[0], pi[1], pi[2]];
        let mut best_converged = true;
        let side_tag = if sign > 0.0 { 0 } else { 1 };
        for (k, x0) in starts.iter().enumerate() {
            let f0 = match program.eval3(x0) {
                Some(f) => f,
                None => continue,
            };
            let run_seed = crate::derive_seed(cfg.seed, (2 * k + side_tag) as u64);
            let (x, f, conv) = compass_search(&program, *x0, f0, init_steps, run_seed, sign, budget);
            if sign * f < best_val - 1e-15 {
                best_val = sign * f;
                best_x = x;
                best_converged = conv;
            }
        }
        for round in 0..cfg.refine_rounds {
            let scale = 4.0 * (round + 1) as f64;
            let reset = [
                init_steps[0] / scale,
                init_steps[1] / scale,
                init_steps[2] / scale,
            ];
            let f0 = match program.eval3(&best_x) {
                Some(f) => f,
                None => break,
            };
            let run_seed = crate::derive_seed(cfg.seed, (9000 + 2 * round + side_tag) as u64);
            let (x, f, conv) = compass_search(&program, best_x, f0, reset, run_seed, sign, budget);
            if sign * f < best_val - 1e-15 {
                best_val = sign * f;
                best_x = x;
            }
            best_converged = conv;
        }
        // Basin hopping: perturb the incumbent and re-descend, escaping
        // needle-shaped local basins the direct starts missed.
        let mut hop_rng =
            ChaCha8Rng::seed_from_u64(crate::derive_seed(cfg.seed, 5000 + side_tag as u64));
        for hop in 0..10 {
            let dir = random_direction(&mut hop_rng);
            let scale = if hop % 2 == 0 { 4.0 } else { 1.0 };
            let mut x0 = best_x;
            for m in 0..3 {
                x0[m] += scale * init_steps[m] * dir[m];
            }
            let f0 = match program.eval3(&x0) {
                Some(f) => f,
                None => continue,
            };
            let run_seed = crate::derive_seed(cfg.seed, (9500 + 2 * hop + side_tag) as u64);
            let (x, f, _) = compass_search(&program, x0, f0, init_steps, run_seed, sign, budget / 2);
            if sign * f < best_val - 1e-15 {
                best_val = sign * f;
                best_x = x;
            }
        }
        (sign * best_val, best_x, best_converged)
    };

    let (flo, xlo, conv_lo) = run_side(1.0);
    let (fhi, xhi, conv_hi) = run_side(-1.0);

    let lower_point = point_from_x(t, &program, &xlo);
    let upper_point = point_from_x(t, &program, &xhi);
    let interval = BoundsInterval {
        lower: flo.exp(),
        upper: fhi.exp(),
        lower_witness: Some(lower_point.decomposition.p0),
        upper_witness: Some(upper_point.decomposition.p0),
    };
    Ok(SolverResult {
        interval,
        lower_point,
        upper_point,
        converged: conv_lo && conv_hi,
    })
}

fn point_from_x(t: &ObservedTable, program: &Program, x: &[f64; 3]) -> FeasiblePoint {
    let p0 = [x[0], x[1], x[2], 1.0 - x[0] - x[1] - x[2]];
    let same = (0..4).all(|i| (p0[i] - t.cells()[i]).abs() < 1e-15);
    if same {
        return FeasiblePoint::from_parts(0.0, *t.cells(), *t.cells());
    }
    match program.feasible_w(&p0) {
        Some(w) => FeasiblePoint::from_reduced(t, w, p0),
        None => FeasiblePoint::from_parts(0.0, *t.cells(), *t.cells()),
    }
}

fn box_widths(bx: &sharp::CellBox) -> [f64; 3] {
    [
        bx.upper[0] - bx.lower[0],
        bx.upper[1] - bx.lower[1],
        bx.upper[2] - bx.lower[2],
    ]
}

fn random_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut d = [0.0; 3];
    let mut norm = 0.0;
    for v in &mut d {
        *v = rng.sample::<f64, _>(StandardNormal);
        norm += *v * *v;
    }
    let norm = norm.sqrt().max(1e-12);
    for v in &mut d {
        *v /= norm;
    }
    d
}

/// Furthest feasible point along pi + t * dir, by bisection from the
/// always-feasible anchor p0 = pi.
fn feasible_along(program: &Program, pi: &[f64; 4], dir: &[f64; 3]) -> [f64; 3] {
    let base = [pi[0], pi[1], pi[2]];
    let probe = |t: f64| -> Option<f64> {
        let x = [
            base[0] + t * dir[0],
            base[1] + t * dir[1],
            base[2] + t * dir[2],
        ];
        program.eval3(&x)
    };
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    if probe(hi).is_some() {
        lo = hi;
    } else {
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if probe(mid).is_some() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let t = 0.95 * lo;
    [
        base[0] + t * dir[0],
        base[1] + t * dir[1],
        base[2] + t * dir[2],
    ]
}

/// A coarse deterministic lattice over the hidden-table box; the best `k`
/// well-separated feasible points for each side become extra seeds. The
/// widest cell serves as the simplex residual so thin cells are gridded
/// directly across their own range.
fn coarse_grid_starts(program: &Program, bx: &sharp::CellBox, k: usize) -> Vec<[f64; 3]> {
    let per_dim = 13usize;
    let widths = [
        bx.upper[0] - bx.lower[0],
        bx.upper[1] - bx.lower[1],
        bx.upper[2] - bx.lower[2],
        bx.upper[3] - bx.lower[3],
    ];
    let residual = (0..4)
        .max_by(|&a, &b| widths[a].partial_cmp(&widths[b]).unwrap())
        .unwrap();
    let free: Vec<usize> = (0..4).filter(|&i| i != residual).collect();
    let sep = free
        .iter()
        .map(|&i| widths[i] / per_dim as f64)
        .fold(f64::INFINITY, f64::min)
        .max(1e-9);
    let mut lo_pool = IncumbentPool::new(k, 2.0 * sep);
    let mut hi_pool = IncumbentPool::new(k, 2.0 * sep);
    let mut scan = |spans: [(f64, f64); 3],
                    per: usize,
                    lo_pool: &mut IncumbentPool,
                    hi_pool: &mut IncumbentPool| {
        let mut p0 = [0.0; 4];
        for a in 0..per {
            p0[free[0]] = spans[0].0 + (spans[0].1 - spans[0].0) * a as f64 / (per - 1) as f64;
            for b in 0..per {
                p0[free[1]] =
                    spans[1].0 + (spans[1].1 - spans[1].0) * b as f64 / (per - 1) as f64;
                for c in 0..per {
                    p0[free[2]] =
                        spans[2].0 + (spans[2].1 - spans[2].0) * c as f64 / (per - 1) as f64;
                    let rest = 1.0 - p0[free[0]] - p0[free[1]] - p0[free[2]];
                    if rest < bx.lower[residual] - 1e-12 || rest > bx.upper[residual] + 1e-12 {
                        continue;
                    }
                    p0[residual] = rest;
                    let x = [p0[0], p0[1], p0[2]];
                    if let Some(f) = program.eval3(&x) {
                        lo_pool.offer(f, x);
                        hi_pool.offer(-f, x);
                    }
                }
            }
        }
    };

    let full = [
        (bx.lower[free[0]], bx.upper[free[0]]),
        (bx.lower[free[1]], bx.upper[free[1]]),
        (bx.lower[free[2]], bx.upper[free[2]]),
    ];
    scan(full, per_dim, &mut lo_pool, &mut hi_pool);
    // One local rescan around each promising candidate at finer resolution;
    // needle-shaped basins are often narrower than the coarse spacing.
    for side in 0..2 {
        let tops: Vec<[f64; 3]> = {
            let pool = if side == 0 { &lo_pool } else { &hi_pool };
            pool.entries.iter().take(k).map(|e| e.1).collect()
        };
        for x in tops {
            let fullp = [x[0], x[1], x[2], 1.0 - x[0] - x[1] - x[2]];
            let mut spans = [(0.0, 0.0); 3];
            for m in 0..3 {
                let half = 1.5 * widths[free[m]] / (per_dim - 1) as f64;
                let center = fullp[free[m]];
                spans[m] = (
                    (center - half).max(bx.lower[free[m]]),
                    (center + half).min(bx.upper[free[m]]),
                );
            }
            scan(spans, 11, &mut lo_pool, &mut hi_pool);
        }
    }

    let mut out: Vec<[f64; 3]> = Vec::with_capacity(2 * k);
    out.extend(lo_pool.entries.iter().map(|e| e.1));
    out.extend(hi_pool.entries.iter().map(|e| e.1));
    out
}

/// Pull a (possibly xi-infeasible) boxed witness toward the observed table
/// until the full program accepts it.
fn repair_toward_pi(program: &Program, witness: &[f64; 4]) -> [f64; 3] {
    let target = [witness[0], witness[1], witness[2]];
    if program.eval3(&target).is_some() {
        return target;
    }
    let pi = &program.pi;
    let base = [pi[0], pi[1], pi[2]];
    let at = |t: f64| -> [f64; 3] {
        [
            base[0] + t * (target[0] - base[0]),
            base[1] + t * (target[1] - base[1]),
            base[2] + t * (target[2] - base[2]),
        ]
    };
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if program.eval3(&at(mid)).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

/// Exhaustive grid oracle over the reduced parametrization, followed by
/// deterministic local refinement from a pool of well-separated incumbents.
/// No randomness; identical inputs give identical output.
pub fn oracle_bounds(
    t: &ObservedTable,
    params: &SensitivityParams,
    grid_step: f64,
) -> Result<BoundsInterval> {
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(Error::InvalidParams(format!(
            "grid_step={grid_step} not in (0, 0.1]"
        )));
    }
    let or = t.observed_or()?;
    let pi = t.cells();
    let (delta, gamma, xi) = (params.delta, params.gamma, params.xi);
    if delta == 0.0 || gamma == 1.0 {
        return Ok(BoundsInterval::point(or, *pi));
    }
    // With gamma = infinity xi has no bite (extreme hidden configurations
    // evade it); the delta-box alone is scanned. With infinite xi the
    // heterogeneity quadratics are skipped the same way.
    let program = Program {
        pi: *pi,
        delta,
        gamma,
        xi: if gamma.is_finite() { xi } else { f64::INFINITY },
    };
    let use_box_only = !program.xi.is_finite();

    let bx = sharp::cell_box(t, delta, gamma)?;
    let h = grid_step;
    // Box-anchored lattice: cells can be orders of magnitude thinner than
    // the step for small probabilities, so each free cell gets its own
    // resolution (at least a handful of points across its width) and the
    // widest cell becomes the simplex residual, whose window then always
    // catches lattice hits.
    let widths = [
        bx.upper[0] - bx.lower[0],
        bx.upper[1] - bx.lower[1],
        bx.upper[2] - bx.lower[2],
        bx.upper[3] - bx.lower[3],
    ];
    let residual = (0..4)
        .max_by(|&a, &b| widths[a].partial_cmp(&widths[b]).unwrap())
        .unwrap();
    let free: Vec<usize> = (0..4).filter(|&i| i != residual).collect();
    let counts: Vec<usize> = free
        .iter()
        .map(|&i| ((widths[i] / h).ceil() as usize).clamp(4, 400))
        .collect();

    let min_step = free
        .iter()
        .zip(&counts)
        .map(|(&i, &k)| widths[i] / k as f64)
        .fold(f64::INFINITY, f64::min);
    let mut lo_pool = IncumbentPool::new(12, 4.0 * min_step);
    let mut hi_pool = IncumbentPool::new(12, 4.0 * min_step);
    // p0 = pi (the w = 0 branch) is always feasible and always included.
    let anchor = [pi[0], pi[1], pi[2]];
    lo_pool.offer(or.ln(), anchor);
    hi_pool.offer(-or.ln(), anchor);

    let accept = |p0: &[f64; 4]| -> Option<f64> {
        if p0.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
            return None;
        }
        if use_box_only {
            // Any boxed table is coherent at w = delta.
            for i in 0..4 {
                if p0[i] < bx.lower[i] - 1e-12 || p0[i] > bx.upper[i] + 1e-12 {
                    return None;
                }
            }
            Some(cross_ratio(p0).ln())
        } else {
            program.feasible_w(p0)?;
            Some(cross_ratio(p0).ln())
        }
    };

    // One rectangular scan over the free coordinates; regions are given in
    // free-coordinate order.
    let scan = |spans: &[(f64, f64); 3],
                counts: &[usize; 3],
                lo_pool: &mut IncumbentPool,
                hi_pool: &mut IncumbentPool| {
        let mut p0 = [0.0; 4];
        for a in 0..=counts[0] {
            p0[free[0]] = spans[0].0 + (spans[0].1 - spans[0].0) * a as f64 / counts[0] as f64;
            for b in 0..=counts[1] {
                p0[free[1]] = spans[1].0 + (spans[1].1 - spans[1].0) * b as f64 / counts[1] as f64;
                for c in 0..=counts[2] {
                    p0[free[2]] =
                        spans[2].0 + (spans[2].1 - spans[2].0) * c as f64 / counts[2] as f64;
                    let rest = 1.0 - p0[free[0]] - p0[free[1]] - p0[free[2]];
                    if rest < bx.lower[residual] - 1e-12 || rest > bx.upper[residual] + 1e-12 {
                        continue;
                    }
                    p0[residual] = rest;
                    if let Some(f) = accept(&p0) {
                        let x = [p0[0], p0[1], p0[2]];
                        lo_pool.offer(f, x);
                        hi_pool.offer(-f, x);
                    }
                }
            }
        }
    };

    let full_spans = [
        (bx.lower[free[0]], bx.upper[free[0]]),
        (bx.lower[free[1]], bx.upper[free[1]]),
        (bx.lower[free[2]], bx.upper[free[2]]),
    ];
    let full_counts = [counts[0], counts[1], counts[2]];
    scan(&full_spans, &full_counts, &mut lo_pool, &mut hi_pool);

    // Progressive zoom: rescan finer lattices around the current best
    // candidates of each side, shrinking the window each round.
    let steps0: Vec<f64> = (0..3)
        .map(|m| (full_spans[m].1 - full_spans[m].0) / full_counts[m] as f64)
        .collect();
    for side in 0..2 {
        for round in 0..3 {
            let shrink = 3f64.powi(round);
            let tops: Vec<[f64; 3]> = {
                let pool = if side == 0 { &lo_pool } else { &hi_pool };
                pool.entries.iter().take(4).map(|e| e.1).collect()
            };
            for x in tops {
                // x is stored in canonical coordinates; re-read per free cell.
                let full = [x[0], x[1], x[2], 1.0 - x[0] - x[1] - x[2]];
                let mut spans = [(0.0, 0.0); 3];
                for m in 0..3 {
                    let center = full[free[m]];
                    let half = 2.0 * steps0[m] / shrink;
                    spans[m] = (
                        (center - half).max(bx.lower[free[m]]),
                        (center + half).min(bx.upper[free[m]]),
                    );
                }
                scan(&spans, &[20, 20, 20], &mut lo_pool, &mut hi_pool);
            }
        }
    }

    let eval_box_only = |x: &[f64; 3]| -> Option<f64> {
        let p0 = [x[0], x[1], x[2], 1.0 - x[0] - x[1] - x[2]];
        for i in 0..4 {
            if !(p0[i] > 0.0) || p0[i] < bx.lower[i] - 1e-12 || p0[i] > bx.upper[i] + 1e-12 {
                return None;
            }
        }
        Some(cross_ratio(&p0).ln())
    };

    // Refinement: deterministic pattern search from each incumbent, then
    // two finer restarts from the running winner.
    let h = min_step.min(h);
    let refine_side = |pool: &IncumbentPool, sign: f64| -> f64 {
        let steps = [h / 2.0; 3];
        let mut best_f = f64::INFINITY;
        let mut best_x = anchor;
        for (k, &(v, x)) in pool.entries.iter().enumerate() {
            let f0 = sign * v;
            let seed = 7_000 + k as u64;
            let (x1, f1, _) = if use_box_only {
                crate::search::compass(&eval_box_only, x, f0, steps, seed, sign, 30_000)
            } else {
                compass_search(&program, x, f0, steps, seed, sign, 30_000)
            };
            if sign * f1 < best_f {
                best_f = sign * f1;
                best_x = x1;
            }
        }
        for (round, div) in [16.0, 64.0].into_iter().enumerate() {
            let fine = [h / div; 3];
            let f0 = if use_box_only {
                eval_box_only(&best_x)
            } else {
                program.eval3(&best_x)
            };
            if let Some(f0) = f0 {
                let seed = 7_990 + round as u64;
                let (x1, f1, _) = if use_box_only {
                    crate::search::compass(&eval_box_only, best_x, f0, fine, seed, sign, 30_000)
                } else {
                    compass_search(&program, best_x, f0, fine, seed, sign, 30_000)
                };
                if sign * f1 < best_f {
                    best_f = sign * f1;
                    best_x = x1;
                }
            }
        }
        // Deterministic basin hops from the incumbent.
        let mut hop_rng = ChaCha8Rng::seed_from_u64(8_111 + if sign > 0.0 { 0 } else { 1 });
        for hop in 0..10_u64 {
            let dir = random_direction(&mut hop_rng);
            let scale = if hop % 2 == 0 { 4.0 } else { 1.0 };
            let mut x0 = best_x;
            for m in 0..3 {
                x0[m] += scale * h * dir[m];
            }
            let f0 = if use_box_only {
                eval_box_only(&x0)
            } else {
                program.eval3(&x0)
            };
            if let Some(f0) = f0 {
                let steps = [h / 2.0; 3];
                let seed = 8_200 + hop;
                let (x1, f1, _) = if use_box_only {
                    crate::search::compass(&eval_box_only, x0, f0, steps, seed, sign, 15_000)
                } else {
                    compass_search(&program, x0, f0, steps, seed, sign, 15_000)
                };
                if sign * f1 < best_f {
                    best_f = sign * f1;
                    best_x = x1;
                }
            }
        }
        sign * best_f
    };
    let flo = refine_side(&lo_pool, 1.0);
    let fhi = refine_side(&hi_pool, -1.0);
    let lower = flo.exp().min(or);
    let upper = fhi.exp().max(or);
    Ok(BoundsInterval {
        lower,
        upper,
        lower_witness: None,
        upper_witness: None,
    })
}

/// Fixed-capacity pool of the best candidates seen, kept pairwise separated
/// so refinement starts are diverse. Deterministic: contents only depend on
/// the offer order and values.
struct IncumbentPool {
    capacity: usize,
    min_sep: f64,
    /// (value, x) sorted ascending by value; lower is better.
    entries: Vec<(f64, [f64; 3])>,
}

impl IncumbentPool {
    fn new(capacity: usize, min_sep: f64) -> Self {
        IncumbentPool {
            capacity,
            min_sep,
            entries: Vec::with_capacity(capacity + 1),
        }
    }

    fn offer(&mut self, value: f64, x: [f64; 3]) {
        for e in &mut self.entries {
            let close = (0..3).all(|j| (e.1[j] - x[j]).abs() < self.min_sep);
            if close {
                if value < e.0 {
                    *e = (value, x);
                    self.entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                }
                return;
            }
        }
        if self.entries.len() < self.capacity {
            self.entries.push((value, x));
            self.entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        } else if value < self.entries.last().unwrap().0 {
            *self.entries.last_mut().unwrap() = (value, x);
            self.entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        }
    }
}
