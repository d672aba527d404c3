//! 2x2 exposure-by-outcome tables among tested units, and categorical
//! generalizations that restrict down to them.
//!
//! Cell order is fixed everywhere as (z, y) = (0,0), (1,0), (0,1), (1,1);
//! index = z + 2y. File formats and in-memory vectors all use this order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical (z, y) pairs in storage order.
pub const CELLS: [(u8, u8); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// Tolerance for "sums to one" checks on probability vectors.
pub const SUM_TOL: f64 = 1e-12;

#[inline]
pub fn cell_index(z: u8, y: u8) -> usize {
    (z + 2 * y) as usize
}

/// Odds ratio of a raw cell vector in canonical order. No validity checks.
#[inline]
pub(crate) fn cross_ratio(c: &[f64; 4]) -> f64 {
    c[3] * c[0] / (c[1] * c[2])
}

/// Normalized joint distribution of exposure and outcome among tested units,
/// optionally backed by the integer counts it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedTable {
    cells: [f64; 4],
    counts: Option<[u64; 4]>,
    n: Option<u64>,
    strictly_positive: bool,
}

impl ObservedTable {
    /// Validate and normalize four nonnegative numbers into a table.
    ///
    /// With `as_counts` the entries are integer-valued counts and the cells
    /// are their exact proportions; otherwise the entries are probabilities
    /// that must already sum to one.
    pub fn validate(raw: [f64; 4], as_counts: bool) -> Result<Self> {
        for (i, &v) in raw.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidTable(format!(
                    "cell (z={}, y={}) is {v}, expected a finite nonnegative number",
                    CELLS[i].0, CELLS[i].1
                )));
            }
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidTable("all cells are zero".into()));
        }

        if as_counts {
            let mut counts = [0u64; 4];
            for (i, &v) in raw.iter().enumerate() {
                if v.fract() != 0.0 {
                    return Err(Error::InvalidTable(format!(
                        "count for cell (z={}, y={}) is not an integer: {v}",
                        CELLS[i].0, CELLS[i].1
                    )));
                }
                counts[i] = v as u64;
            }
            Ok(Self::from_counts(counts))
        } else {
            if (total - 1.0).abs() > SUM_TOL {
                return Err(Error::InvalidTable(format!(
                    "probabilities sum to {total}, expected 1"
                )));
            }
            let cells = raw;
            let strictly_positive = cells.iter().all(|&c| c > 0.0);
            Ok(ObservedTable {
                cells,
                counts: None,
                n: None,
                strictly_positive,
            })
        }
    }

    /// Table from integer cell counts; cells are counts / n, each rounded
    /// once from the exact rational.
    pub fn from_counts(counts: [u64; 4]) -> Self {
        let n: u64 = counts.iter().sum();
        debug_assert!(n > 0);
        let mut cells = [0.0; 4];
        for i in 0..4 {
            cells[i] = counts[i] as f64 / n as f64;
        }
        let strictly_positive = counts.iter().all(|&c| c > 0);
        ObservedTable {
            cells,
            counts: Some(counts),
            n: Some(n),
            strictly_positive,
        }
    }

    /// Table from probabilities that must sum to one.
    pub fn from_probs(cells: [f64; 4]) -> Result<Self> {
        Self::validate(cells, false)
    }

    pub fn cells(&self) -> &[f64; 4] {
        &self.cells
    }

    pub fn counts(&self) -> Option<&[u64; 4]> {
        self.counts.as_ref()
    }

    pub fn n(&self) -> Option<u64> {
        self.n
    }

    /// True iff all four cells are strictly positive.
    pub fn is_strictly_positive(&self) -> bool {
        self.strictly_positive
    }

    /// Cell probability at exposure z, outcome y.
    pub fn p(&self, z: u8, y: u8) -> f64 {
        self.cells[cell_index(z, y)]
    }

    fn require_positive(&self) -> Result<()> {
        for (i, &(z, y)) in CELLS.iter().enumerate() {
            if self.cells[i] == 0.0 {
                return Err(Error::UndefinedOddsRatio { z, y });
            }
        }
        Ok(())
    }

    /// Observed odds ratio p11*p00 / (p10*p01).
    pub fn observed_or(&self) -> Result<f64> {
        self.require_positive()?;
        Ok(cross_ratio(&self.cells))
    }

    /// Swap the exposure labels: (p00, p10, p01, p11) -> (p10, p00, p11, p01).
    ///
    /// An involution; the odds ratio of the relabeled table is the reciprocal
    /// of the original.
    pub fn relabel_exposure(&self) -> Self {
        let c = &self.cells;
        let cells = [c[1], c[0], c[3], c[2]];
        let counts = self.counts.map(|k| [k[1], k[0], k[3], k[2]]);
        ObservedTable {
            cells,
            counts,
            n: self.n,
            strictly_positive: self.strictly_positive,
        }
    }
}

/// Joint distribution (or counts) over categorical exposure z in 0..=I and
/// outcome y in 0..=J.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralTable {
    /// (I+1, J+1)
    dims: (usize, usize),
    /// Row-major over z, then y: entry(z, y) = cells[z * (J+1) + y].
    cells: Vec<f64>,
    is_probability: bool,
}

impl GeneralTable {
    pub fn new(dims: (usize, usize), entries: Vec<f64>, as_counts: bool) -> Result<Self> {
        let (nz, ny) = dims;
        if nz < 2 || ny < 2 {
            return Err(Error::InvalidTable(format!(
                "general table needs at least 2 levels per margin, got {nz}x{ny}"
            )));
        }
        if entries.len() != nz * ny {
            return Err(Error::InvalidTable(format!(
                "expected {} entries for a {nz}x{ny} table, got {}",
                nz * ny,
                entries.len()
            )));
        }
        if entries.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidTable(
                "general table entries must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = entries.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidTable("all cells are zero".into()));
        }
        if !as_counts && (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidTable(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(GeneralTable {
            dims,
            cells: entries,
            is_probability: !as_counts,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn entry(&self, z: usize, y: usize) -> f64 {
        self.cells[z * self.dims.1 + y]
    }

    /// Restrict to the 2x2 sub-table of two exposure and two outcome levels,
    /// renormalized to sum one. The first index of each pair becomes level 0.
    pub fn restrict(&self, z_pair: (usize, usize), y_pair: (usize, usize)) -> Result<ObservedTable> {
        let (nz, ny) = self.dims;
        for &z in [z_pair.0, z_pair.1].iter() {
            if z >= nz {
                return Err(Error::InvalidInput(format!(
                    "exposure level {z} out of range 0..{nz}"
                )));
            }
        }
        for &y in [y_pair.0, y_pair.1].iter() {
            if y >= ny {
                return Err(Error::InvalidInput(format!(
                    "outcome level {y} out of range 0..{ny}"
                )));
            }
        }
        if z_pair.0 == z_pair.1 || y_pair.0 == y_pair.1 {
            return Err(Error::InvalidInput(
                "restriction needs two distinct levels per margin".into(),
            ));
        }
        let raw = [
            self.entry(z_pair.0, y_pair.0),
            self.entry(z_pair.1, y_pair.0),
            self.entry(z_pair.0, y_pair.1),
            self.entry(z_pair.1, y_pair.1),
        ];
        let mass: f64 = raw.iter().sum();
        if mass <= 0.0 {
            return Err(Error::EmptyRestriction);
        }
        let cells = [raw[0] / mass, raw[1] / mass, raw[2] / mass, raw[3] / mass];
        let strictly_positive = cells.iter().all(|&c| c > 0.0);
        Ok(ObservedTable {
            cells,
            counts: None,
            n: None,
            strictly_positive,
        })
    }

    pub fn is_probability(&self) -> bool {
        self.is_probability
    }
}

/// The three sensitivity parameters. `gamma` and `xi` may be `f64::INFINITY`
/// to drop the corresponding constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityParams {
    /// Bound on P(U != 0 | tested), in [0, 1].
    pub delta: f64,
    /// Bound on per-cell probability ratios across confounder levels, >= 1.
    #[serde(with = "crate::json_inf")]
    pub gamma: f64,
    /// Bound on the causal odds ratio heterogeneity across confounder levels, >= 1.
    #[serde(with = "crate::json_inf")]
    pub xi: f64,
}

impl SensitivityParams {
    pub fn new(delta: f64, gamma: f64, xi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidParams(format!("delta={delta} not in [0,1]")));
        }
        if gamma.is_nan() || gamma < 1.0 {
            return Err(Error::InvalidParams(format!("gamma={gamma} must be >= 1")));
        }
        if xi.is_nan() || xi < 1.0 {
            return Err(Error::InvalidParams(format!("xi={xi} must be >= 1")));
        }
        Ok(SensitivityParams { delta, gamma, xi })
    }

    /// Drop both the confounding-strength and heterogeneity constraints.
    pub fn delta_only(delta: f64) -> Result<Self> {
        Self::new(delta, f64::INFINITY, f64::INFINITY)
    }

    pub fn delta_gamma(delta: f64, gamma: f64) -> Result<Self> {
        Self::new(delta, gamma, f64::INFINITY)
    }
}
