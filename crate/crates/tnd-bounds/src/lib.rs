//! Sensitivity analysis for test-negative designs.
//!
//! A test-negative design identifies the causal odds ratio of an exposure
//! only when the design fully controls the unmeasured confounder. This crate
//! computes what can still be said when it does not: sharp partial-
//! identification bounds on the causal odds ratio under three sensitivity
//! constraints, and confidence bounds that add sampling uncertainty.
//!
//! The constraints are
//! - `delta`: an upper bound on the probability mass of a nonzero
//!   unmeasured confounder among tested units,
//! - `gamma`: a bound on how strongly the confounder shifts the joint
//!   exposure-outcome distribution (per-cell probability ratios),
//! - `xi`: a bound on treatment-effect heterogeneity across confounder
//!   levels (ratio of causal odds ratios).
//!
//! # Modules
//!
//! - [`table`] — contingency-table ingestion, validation, odds ratios,
//!   relabeling, and restriction of categorical tables.
//! - [`sharp`] — closed-form sharp bounds for (`delta`), (`gamma`) and
//!   (`delta`, `gamma`), via a box-constrained odds-ratio minimizer.
//! - [`qcqp`] — the full three-constraint program solved by multistart
//!   local search, plus an independent brute-force grid oracle.
//! - [`confidence`] — multinomial confidence sets (elliptical and
//!   rectangular) and confidence bounds on the causal odds ratio.
//! - [`covmodel`] — multinomial-logit models pi(c) for general covariates,
//!   simultaneous confidence sets, and sensitivity bands over a grid.
//! - [`simlab`] — seed-deterministic generators and coverage studies.
//! - [`cli`] — the `tnd` command-line surface.
//!
//! Each major capability has a runnable example under `examples/`; start
//! with `cargo run --example sharp_bounds`.

pub mod cli;
pub mod confidence;
pub mod covmodel;
pub mod error;
pub mod io;
pub mod qcqp;
mod search;
pub mod sharp;
pub mod simlab;
pub mod table;

pub use error::{Error, Result};
pub use sharp::{BoundSide, BoundsInterval, CellBox, HiddenDecomposition};
pub use table::{GeneralTable, ObservedTable, SensitivityParams};

/// Serde helpers for `f64` fields where infinity is legal and serialized as
/// the string `"inf"` (JSON has no infinity literal).
pub mod json_inf {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum NumOrStr {
            Num(f64),
            Str(String),
        }
        match NumOrStr::deserialize(d)? {
            NumOrStr::Num(v) => Ok(v),
            NumOrStr::Str(s) => parse_inf_f64(&s).map_err(D::Error::custom),
        }
    }

    /// Parse a float, accepting `inf`/`infinity` (case-insensitive).
    pub fn parse_inf_f64(s: &str) -> Result<f64, String> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(f64::INFINITY);
        }
        if t.eq_ignore_ascii_case("-inf") || t.eq_ignore_ascii_case("-infinity") {
            return Ok(f64::NEG_INFINITY);
        }
        t.parse::<f64>().map_err(|e| format!("bad float {s:?}: {e}"))
    }

    /// Format a float, rendering infinities as `inf`.
    pub fn format_inf_f64(v: f64) -> String {
        if v.is_infinite() {
            if v > 0.0 { "inf".into() } else { "-inf".into() }
        } else {
            format!("{v}")
        }
    }
}

/// Counter-based seed derivation: replication k of a study seeded with
/// `base` uses `derive_seed(base, k)`, so parallel and serial runs agree.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // SplitMix64 finalizer over the combined value.
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
