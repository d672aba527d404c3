//! Closed-form sharp bounds on the causal odds ratio at confounder level 0.
//!
//! The sensitivity constraints confine the hidden table p_{zy|0} to a
//! per-cell box intersected with the simplex; the bounds are the extrema of
//! the odds ratio over that region. [`min_or_boxed`] is the kernel that
//! minimizes the cross-ratio over a box/simplex region in closed form; the
//! upper bound is the reciprocal of the minimum under relabeled exposure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{cross_ratio, ObservedTable};

/// Case-split comparisons tolerate this much; the two branches agree on the
/// boundary, so the direction of the tie does not affect the value.
const CASE_TOL: f64 = 1e-12;

/// Per-cell lower/upper limits on the hidden table p_{zy|0}, canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBox {
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl CellBox {
    /// Check 0 <= l <= u <= 1 per cell, sum(l) <= 1 and sum(u) >= 1.
    pub fn check_feasible(&self) -> Result<()> {
        for i in 0..4 {
            let (l, u) = (self.lower[i], self.upper[i]);
            if !(l.is_finite() && u.is_finite()) || l < -CASE_TOL || u > 1.0 + CASE_TOL || l > u + CASE_TOL {
                return Err(Error::InfeasibleBox(format!(
                    "cell {i}: lower={l}, upper={u}"
                )));
            }
        }
        let sl: f64 = self.lower.iter().sum();
        let su: f64 = self.upper.iter().sum();
        if sl > 1.0 + CASE_TOL {
            return Err(Error::InfeasibleBox(format!("lower limits sum to {sl} > 1")));
        }
        if su < 1.0 - CASE_TOL {
            return Err(Error::InfeasibleBox(format!("upper limits sum to {su} < 1")));
        }
        Ok(())
    }

    /// The box for the exposure-relabeled table: cells swap as
    /// (00,10,01,11) -> (10,00,11,01).
    pub fn relabel_exposure(&self) -> Self {
        let l = &self.lower;
        let u = &self.upper;
        CellBox {
            lower: [l[1], l[0], l[3], l[2]],
            upper: [u[1], u[0], u[3], u[2]],
        }
    }

    /// Membership within `tol` per cell.
    pub fn contains(&self, q: &[f64; 4], tol: f64) -> bool {
        (0..4).all(|i| q[i] >= self.lower[i] - tol && q[i] <= self.upper[i] + tol)
    }
}

/// Lower/upper sharp bounds, with the hidden tables attaining them when
/// they are attained at finite, nonzero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsInterval {
    pub lower: f64,
    #[serde(with = "crate::json_inf")]
    pub upper: f64,
    pub lower_witness: Option<[f64; 4]>,
    pub upper_witness: Option<[f64; 4]>,
}

impl BoundsInterval {
    pub fn point(or: f64, witness: [f64; 4]) -> Self {
        BoundsInterval {
            lower: or,
            upper: or,
            lower_witness: Some(witness),
            upper_witness: Some(witness),
        }
    }

    pub fn width_log(&self) -> f64 {
        (self.upper / self.lower).ln()
    }

    /// True if `other` lies inside this interval within an absolute slack.
    pub fn contains_interval(&self, other: &BoundsInterval, tol: f64) -> bool {
        let upper_ok = self.upper.is_infinite() || other.upper <= self.upper + tol;
        self.lower - tol <= other.lower && upper_ok
    }
}

/// A mixture representation of the observed table: pi = (1-w) p0 + w p1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenDecomposition {
    /// P(U != 0 | tested).
    pub w: f64,
    /// Hidden table at confounder level 0, canonical order.
    pub p0: [f64; 4],
    /// Hidden table at nonzero confounder level.
    pub p1: [f64; 4],
    /// Set when the requested bound degenerates to 0 or infinity and the
    /// witness sits at the clamped mixture weight.
    pub degenerate: bool,
}

impl HiddenDecomposition {
    /// Largest violation of the mixture identity pi = (1-w) p0 + w p1.
    pub fn mixture_error(&self, table: &ObservedTable) -> f64 {
        let pi = table.cells();
        (0..4)
            .map(|i| (pi[i] - (1.0 - self.w) * self.p0[i] - self.w * self.p1[i]).abs())
            .fold(0.0, f64::max)
    }
}

/// Which end of the identification interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundSide {
    Lower,
    Upper,
}

fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

/// Sharp bounds when only the residual confounder mass is restricted.
///
/// The upper bound is infinite once `delta` reaches the smaller of the two
/// off-diagonal cells; that is a legitimate value, not an error.
pub fn bounds_delta(t: &ObservedTable, delta: f64) -> Result<BoundsInterval> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParams(format!("delta={delta} not in [0,1]")));
    }
    let or = t.observed_or()?;
    if delta == 0.0 {
        return Ok(BoundsInterval::point(or, *t.cells()));
    }
    let lo = attaining_decomposition(t, delta, BoundSide::Lower)?;
    let hi = attaining_decomposition(t, delta, BoundSide::Upper)?;
    let lower = cross_ratio(&lo.p0);
    let upper = {
        let denom = hi.p0[1] * hi.p0[2];
        if denom == 0.0 {
            f64::INFINITY
        } else {
            cross_ratio(&hi.p0)
        }
    };
    Ok(BoundsInterval {
        lower,
        upper,
        lower_witness: Some(lo.p0),
        upper_witness: Some(hi.p0),
    })
}

/// Per-cell limits on p_{zy|0} induced by (delta, gamma).
///
/// `gamma` may be infinite; the limits are then the analytic limits
/// (pi - delta)_+/(1 - delta) and min(pi/(1 - delta), 1), so the
/// delta-only analysis is recovered exactly. At delta = 1 the term
/// (pi - delta)/(1 - delta) is taken as 0.
pub fn cell_box(t: &ObservedTable, delta: f64, gamma: f64) -> Result<CellBox> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParams(format!("delta={delta} not in [0,1]")));
    }
    if gamma.is_nan() || gamma < 1.0 {
        return Err(Error::InvalidParams(format!("gamma={gamma} must be >= 1")));
    }
    let pi = t.cells();
    let mut lower = [0.0; 4];
    let mut upper = [0.0; 4];
    for i in 0..4 {
        let (l, u) = cell_limits(pi[i], delta, gamma);
        lower[i] = l;
        upper[i] = u;
    }
    Ok(CellBox { lower, upper })
}

/// Limits for one cell; shared with the confidence-bound construction,
/// which feeds set endpoints instead of point probabilities.
pub(crate) fn cell_limits(pi: f64, delta: f64, gamma: f64) -> (f64, f64) {
    if delta == 0.0 {
        return (pi, pi);
    }
    let shrink = if delta == 1.0 {
        0.0
    } else {
        positive_part(pi - delta) / (1.0 - delta)
    };
    if gamma.is_infinite() {
        let u = if delta == 1.0 { 1.0 } else { (pi / (1.0 - delta)).min(1.0) };
        (shrink, u)
    } else {
        let l = (pi / (delta * gamma + 1.0 - delta)).max(shrink);
        let u = (pi * gamma / (delta + (1.0 - delta) * gamma)).min(1.0);
        (l, u)
    }
}

/// Minimize the cross-ratio q11*q00/(q10*q01) over the box intersected with
/// the simplex. Returns the infimum and a cell vector attaining it.
///
/// Two cases: when the mass budget forces the denominator cells below their
/// caps, the numerator cells sit at their floors and the free off-diagonal
/// cell is clamped around the concave maximum of q10*(rest - q10); otherwise
/// the denominator cells sit at their caps and the smaller of two boundary
/// placements of q11 wins. Ties return the first placement; the value is the
/// same either way.
pub fn min_or_boxed(bx: &CellBox) -> Result<(f64, [f64; 4])> {
    bx.check_feasible()?;
    let l = &bx.lower;
    let u = &bx.upper;
    // Indices: 0 = (0,0), 1 = (1,0), 2 = (0,1), 3 = (1,1).
    if l[3] + l[0] + u[2] + u[1] >= 1.0 - CASE_TOL {
        let q11 = l[3];
        let q00 = l[0];
        let rest = 1.0 - q11 - q00;
        let q10 = (l[1].max(rest - u[2]).max(rest / 2.0))
            .min(u[1])
            .min(rest - l[2]);
        let q01 = rest - q10;
        let q = [q00, q10, q01, q11];
        Ok((objective(&q), q))
    } else {
        let q10 = u[1];
        let q01 = u[2];
        let rest = 1.0 - q10 - q01;
        let q11_1 = l[3].max(rest - u[0]);
        let q11_2 = u[3].min(rest - l[0]);
        let q1 = [rest - q11_1, q10, q01, q11_1];
        let q2 = [rest - q11_2, q10, q01, q11_2];
        let (v1, v2) = (objective(&q1), objective(&q2));
        if v1 <= v2 {
            Ok((v1, q1))
        } else {
            Ok((v2, q2))
        }
    }
}

fn objective(q: &[f64; 4]) -> f64 {
    let num = q[3] * q[0];
    let den = q[1] * q[2];
    if den == 0.0 {
        if num == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        num / den
    }
}

/// Sharp bounds under both constraints: the lower bound is the boxed
/// minimum, the upper bound the reciprocal of the boxed minimum computed
/// with relabeled exposure. `gamma = 1` and `delta = 0` both collapse to
/// the observed odds ratio.
pub fn bounds_delta_gamma(t: &ObservedTable, delta: f64, gamma: f64) -> Result<BoundsInterval> {
    let or = t.observed_or()?;
    if delta == 0.0 || gamma == 1.0 {
        // Degenerate box; build it anyway so parameter validation runs.
        cell_box(t, delta, gamma)?;
        return Ok(BoundsInterval::point(or, *t.cells()));
    }
    let bx = cell_box(t, delta, gamma)?;
    let (lower, lower_witness) = min_or_boxed(&bx)?;
    let relabeled_box = cell_box(&t.relabel_exposure(), delta, gamma)?;
    let (m, qr) = min_or_boxed(&relabeled_box)?;
    // Map the relabeled witness back to the original exposure labels; its
    // cross-ratio is the reciprocal of m, i.e. the upper bound.
    let upper_witness = [qr[1], qr[0], qr[3], qr[2]];
    let upper = if m == 0.0 { f64::INFINITY } else { 1.0 / m };
    Ok(BoundsInterval {
        lower,
        upper,
        lower_witness: Some(lower_witness),
        upper_witness: Some(upper_witness),
    })
}

/// Heterogeneity benchmarks between two observed strata: the largest
/// per-cell probability ratio and the larger direction of the odds-ratio
/// ratio. These play the roles of gamma and xi, measured between observed
/// groups instead of confounder levels.
pub fn calibrate_benchmarks(a: &ObservedTable, b: &ObservedTable) -> Result<(f64, f64)> {
    let or_a = a.observed_or()?;
    let or_b = b.observed_or()?;
    let mut gamma_hat = 1.0_f64;
    for i in 0..4 {
        let r = a.cells()[i] / b.cells()[i];
        gamma_hat = gamma_hat.max(r).max(1.0 / r);
    }
    let xi_hat = (or_a / or_b).max(or_b / or_a);
    Ok((gamma_hat, xi_hat))
}

/// The mixture witness behind the delta-only bounds: all hidden mass at one
/// cell, with weight as close to `delta` as the observed table allows.
///
/// For the lower bound the driving cell is (1,1) or (0,0), whichever gives
/// the smaller causal odds ratio; for the upper bound, (1,0) or (0,1),
/// whichever gives the larger. When `delta` exceeds the driving cell's mass
/// the weight clamps there, the corresponding p0 cell vanishes, and the
/// decomposition is flagged degenerate.
pub fn attaining_decomposition(
    t: &ObservedTable,
    delta: f64,
    side: BoundSide,
) -> Result<HiddenDecomposition> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParams(format!("delta={delta} not in [0,1]")));
    }
    t.observed_or()?;
    if delta == 0.0 {
        return Ok(HiddenDecomposition {
            w: 0.0,
            p0: *t.cells(),
            p1: *t.cells(),
            degenerate: false,
        });
    }
    let candidates: [usize; 2] = match side {
        BoundSide::Lower => [3, 0],
        BoundSide::Upper => [1, 2],
    };
    let mut best: Option<(f64, HiddenDecomposition)> = None;
    for &cell in &candidates {
        let d = point_mass_decomposition(t, delta, cell);
        let val = match side {
            BoundSide::Lower => cross_ratio(&d.p0),
            BoundSide::Upper => {
                let den = d.p0[1] * d.p0[2];
                if den == 0.0 { f64::INFINITY } else { cross_ratio(&d.p0) }
            }
        };
        let better = match &best {
            None => true,
            Some((v, _)) => match side {
                BoundSide::Lower => val < *v,
                BoundSide::Upper => val > *v,
            },
        };
        if better {
            best = Some((val, d));
        }
    }
    Ok(best.expect("two candidates evaluated").1)
}

fn point_mass_decomposition(t: &ObservedTable, delta: f64, cell: usize) -> HiddenDecomposition {
    let pi = t.cells();
    let w = delta.min(pi[cell]);
    let mut p1 = [0.0; 4];
    p1[cell] = 1.0;
    let mut p0 = [0.0; 4];
    for i in 0..4 {
        let mass = if i == cell { pi[i] - w } else { pi[i] };
        p0[i] = mass / (1.0 - w);
    }
    // Guard rounding: the driving cell is exactly zero when clamped.
    if w == pi[cell] {
        p0[cell] = 0.0;
    }
    HiddenDecomposition {
        w,
        p0,
        p1,
        degenerate: w < delta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(c: [f64; 4]) -> ObservedTable {
        ObservedTable::from_probs(c).unwrap()
    }

    fn reference() -> ObservedTable {
        table([0.1, 0.2, 0.3, 0.4])
    }

    #[test]
    fn delta_zero_is_point() {
        let b = bounds_delta(&reference(), 0.0).unwrap();
        assert!((b.lower - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(b.lower, b.upper);
    }

    #[test]
    fn delta_bounds_reference_values() {
        let b = bounds_delta(&reference(), 0.05).unwrap();
        assert!((b.lower - 1.0 / 3.0).abs() < 1e-12);
        assert!((b.upper - 8.0 / 9.0).abs() < 1e-12);

        let wide = bounds_delta(&reference(), 0.25).unwrap();
        assert_eq!(wide.lower, 0.0);
        assert!(wide.upper.is_infinite());
    }

    #[test]
    fn delta_witnesses_reproduce_bounds() {
        let t = reference();
        for delta in [0.01, 0.05, 0.15, 0.25, 0.5] {
            let b = bounds_delta(&t, delta).unwrap();
            let lw = b.lower_witness.unwrap();
            assert!((lw.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!((objective_of(&lw) - b.lower).abs() < 1e-10);
            let uw = b.upper_witness.unwrap();
            assert!((uw.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let uv = objective_of(&uw);
            if b.upper.is_infinite() {
                assert!(uv.is_infinite());
            } else {
                assert!((uv - b.upper).abs() < 1e-10 * b.upper.max(1.0));
            }
        }
    }

    fn objective_of(q: &[f64; 4]) -> f64 {
        let den = q[1] * q[2];
        if den == 0.0 {
            if q[3] * q[0] == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            q[3] * q[0] / den
        }
    }

    #[test]
    fn cell_box_degenerate_at_delta_zero() {
        let t = reference();
        for gamma in [1.0, 2.0, 10.0, f64::INFINITY] {
            let bx = cell_box(&t, 0.0, gamma).unwrap();
            assert_eq!(&bx.lower, t.cells());
            assert_eq!(&bx.upper, t.cells());
        }
    }

    #[test]
    fn cell_box_gamma_only() {
        let bx = cell_box(&reference(), 1.0, 2.0).unwrap();
        for (a, b) in bx.lower.iter().zip([0.05, 0.1, 0.15, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in bx.upper.iter().zip([0.2, 0.4, 0.6, 0.8]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn cell_box_combined() {
        let bx = cell_box(&reference(), 0.1, 2.0).unwrap();
        let expect_l = [1.0 / 11.0, 2.0 / 11.0, 3.0 / 11.0, 4.0 / 11.0];
        let expect_u = [2.0 / 19.0, 4.0 / 19.0, 6.0 / 19.0, 8.0 / 19.0];
        for i in 0..4 {
            assert!((bx.lower[i] - expect_l[i]).abs() < 1e-12);
            assert!((bx.upper[i] - expect_u[i]).abs() < 1e-12);
        }
        assert!(bx.lower.iter().sum::<f64>() <= 1.0);
        assert!(bx.upper.iter().sum::<f64>() >= 1.0);
    }

    #[test]
    fn min_or_boxed_degenerate_box() {
        let c = [0.1, 0.2, 0.3, 0.4];
        let bx = CellBox { lower: c, upper: c };
        let (m, q) = min_or_boxed(&bx).unwrap();
        assert!((m - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(q, c);
    }

    #[test]
    fn min_or_boxed_case_one() {
        // Box from (delta = 1, gamma = 2): budget condition holds.
        let bx = cell_box(&reference(), 1.0, 2.0).unwrap();
        let (m, q) = min_or_boxed(&bx).unwrap();
        assert!((m - 16.0 / 225.0).abs() < 1e-12);
        let expect = [0.05, 0.375, 0.375, 0.2];
        for i in 0..4 {
            assert!((q[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn min_or_boxed_case_two() {
        let bx = cell_box(&reference(), 0.1, 2.0).unwrap();
        let (m, q) = min_or_boxed(&bx).unwrap();
        // Exact value 190/363; the second placement wins.
        assert!((m - 0.523_415_977_961_432).abs() < 1e-12);
        let expect = [1.0 / 11.0, 4.0 / 19.0, 6.0 / 19.0, 80.0 / 209.0];
        for i in 0..4 {
            assert!((q[i] - expect[i]).abs() < 1e-9);
        }
        assert!(bx.contains(&q, 1e-12));
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_or_boxed_rejects_infeasible() {
        let bad = CellBox {
            lower: [0.4, 0.4, 0.4, 0.4],
            upper: [0.5, 0.5, 0.5, 0.5],
        };
        assert!(matches!(min_or_boxed(&bad), Err(Error::InfeasibleBox(_))));
        let bad = CellBox {
            lower: [0.0; 4],
            upper: [0.1, 0.1, 0.1, 0.1],
        };
        assert!(matches!(min_or_boxed(&bad), Err(Error::InfeasibleBox(_))));
    }

    #[test]
    fn combined_bounds_golden_values() {
        let t = reference();
        let b = bounds_delta_gamma(&t, 0.1, 2.0).unwrap();
        assert!((b.lower - 0.523_415_977_961_432).abs() < 1e-12);
        assert!((b.upper - 0.835_202_761_000_863).abs() < 1e-12);

        let b5 = bounds_delta_gamma(&t, 0.1, 5.0).unwrap();
        assert!((b5.lower - 0.388_027_210_884_354).abs() < 1e-12);
        assert!((b5.upper - 1.054_670_684_459_750).abs() < 1e-12);
    }

    #[test]
    fn combined_bounds_witnesses_valid() {
        let t = reference();
        for (delta, gamma) in [(0.1, 2.0), (0.1, 5.0), (0.3, 1.5), (0.05, 10.0)] {
            let bx = cell_box(&t, delta, gamma).unwrap();
            let b = bounds_delta_gamma(&t, delta, gamma).unwrap();
            let lw = b.lower_witness.unwrap();
            assert!(bx.contains(&lw, 1e-10));
            assert!((lw.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!((objective_of(&lw) - b.lower).abs() < 1e-10 * b.lower.max(1.0));
            let uw = b.upper_witness.unwrap();
            assert!(bx.contains(&uw, 1e-10));
            assert!((uw.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!((objective_of(&uw) - b.upper).abs() < 1e-10 * b.upper.max(1.0));
        }
    }

    #[test]
    fn gamma_one_collapses() {
        let t = reference();
        for delta in [0.0, 0.3, 1.0] {
            let b = bounds_delta_gamma(&t, delta, 1.0).unwrap();
            assert!((b.lower - 2.0 / 3.0).abs() < 1e-12);
            assert_eq!(b.lower, b.upper);
        }
    }

    #[test]
    fn gamma_infinite_recovers_delta_only() {
        let t = reference();
        for delta in [0.02, 0.05, 0.15, 0.25, 0.6] {
            let a = bounds_delta(&t, delta).unwrap();
            let b = bounds_delta_gamma(&t, delta, f64::INFINITY).unwrap();
            assert!(
                (a.lower - b.lower).abs() < 1e-12,
                "lower mismatch at delta={delta}: {} vs {}",
                a.lower,
                b.lower
            );
            if a.upper.is_infinite() {
                assert!(b.upper.is_infinite());
            } else {
                assert!((a.upper - b.upper).abs() < 1e-12 * a.upper.max(1.0));
            }
        }
    }

    #[test]
    fn calibrate_examples() {
        let a = reference();
        let same = calibrate_benchmarks(&a, &a).unwrap();
        assert_eq!(same, (1.0, 1.0));

        let b = table([0.2, 0.1, 0.4, 0.3]);
        let (g, x) = calibrate_benchmarks(&a, &b).unwrap();
        assert!((g - 2.0).abs() < 1e-12);
        assert!((x - 2.25).abs() < 1e-12);

        let u = table([0.25; 4]);
        let v = table([0.4, 0.1, 0.1, 0.4]);
        let (g, x) = calibrate_benchmarks(&u, &v).unwrap();
        assert!((g - 2.5).abs() < 1e-12);
        assert!((x - 16.0).abs() < 1e-12);
    }

    #[test]
    fn attaining_decomposition_lower_example() {
        let t = reference();
        let d = attaining_decomposition(&t, 0.05, BoundSide::Lower).unwrap();
        assert_eq!(d.w, 0.05);
        // The (0,0)-mass candidate wins: 0.4*(0.1-0.05)/(0.2*0.3) = 1/3.
        assert_eq!(d.p1, [1.0, 0.0, 0.0, 0.0]);
        assert!(!d.degenerate);
        assert!(d.mixture_error(&t) < 1e-12);
        assert!((cross_ratio(&d.p0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn attaining_decomposition_degenerate_clamp() {
        // delta = 0.5 exceeds pi11 = 0.4: weight clamps, p0 loses that cell.
        let t = table([0.25, 0.2, 0.15, 0.4]);
        let d = attaining_decomposition(&t, 0.5, BoundSide::Lower).unwrap();
        assert!(d.degenerate);
        assert!(d.w < 0.5);
        assert!(d.mixture_error(&t) < 1e-12);
        let has_zero = d.p0.iter().any(|&c| c == 0.0);
        assert!(has_zero);
    }

    #[test]
    fn attaining_decomposition_zero_delta() {
        let t = table([0.25; 4]);
        let d = attaining_decomposition(&t, 0.0, BoundSide::Upper).unwrap();
        assert_eq!(d.w, 0.0);
        assert_eq!(&d.p0, t.cells());
        assert_eq!(&d.p1, t.cells());
    }
}
