//! Confidence bounds: sampling uncertainty in the observed table widens the
//! sensitivity bounds. Three confidence-set shapes are available — an
//! elliptical chi-squared set (Q) and two rectangular sets from studentized
//! (N) and arcsine-transformed (T) margins — feeding either the closed-form
//! or the optimization-based construction.
//!
//! Run with: cargo run --release --example confidence_bounds

use tnd_bounds::confidence::{self, SetShape};
use tnd_bounds::qcqp::{self, SolverConfig};
use tnd_bounds::table::{ObservedTable, SensitivityParams};

fn main() -> tnd_bounds::Result<()> {
    let counts = [100u64, 200, 300, 400];
    let alpha = 0.05;

    // The rectangular sets share a max-|Gaussian| critical value.
    let set = confidence::conf_set(counts, alpha, SetShape::N, 1_000_000, 7)?;
    println!("studentized critical value d-hat = {:.4}", set.critical_value());
    let (lo, hi) = set.rect_endpoints().unwrap();
    println!("per-cell 95% margins:");
    for i in 0..4 {
        println!("  cell {i}: [{:.4}, {:.4}]", lo[i], hi[i]);
    }

    // Closed-form confidence bounds under (delta, gamma).
    let closed = confidence::ci_bounds_closed(counts, alpha, 0.1, 2.0, SetShape::N, 1_000_000, 7)?;
    let point = {
        let t = ObservedTable::from_counts(counts);
        tnd_bounds::sharp::bounds_delta_gamma(&t, 0.1, 2.0)?
    };
    println!(
        "\npoint bounds at the MLE:        [{:.4}, {:.4}]",
        point.lower, point.upper
    );
    println!(
        "closed-form confidence bounds:  [{:.4}, {:.4}]",
        closed.interval.lower, closed.interval.upper
    );

    // Optimization-based bounds handle the elliptical set and finite xi.
    let params = SensitivityParams::new(0.1, 5.0, 2.0)?;
    let cfg = SolverConfig::default();
    println!("\nwith (delta, gamma, xi) = (0.1, 5, 2):");
    let inner = {
        let t = ObservedTable::from_counts(counts);
        qcqp::solve_bounds(&t, &params, &cfg)?.interval
    };
    println!("  point bounds:        [{:.4}, {:.4}]", inner.lower, inner.upper);
    for shape in [SetShape::Q, SetShape::N, SetShape::T] {
        let ci = confidence::ci_bounds_opt(counts, alpha, &params, shape, 200_000, &cfg)?;
        println!(
            "  shape {shape}: [{:.4}, {:.4}]  log-width {:.3}",
            ci.interval.lower,
            ci.interval.upper,
            ci.interval.width_log()
        );
    }

    // Multiple strata: split the level to achieve simultaneous coverage.
    let per_stratum = confidence::simultaneous_level(alpha, 5)?;
    println!("\nper-stratum alpha for 5 strata at overall 0.05: {per_stratum:.5}");
    Ok(())
}
