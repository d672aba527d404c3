//! Basic per-stratum analysis: ingest a counts table, report the observed
//! odds ratio and vaccine efficacy, and bracket the causal odds ratio
//! under increasing amounts of unmeasured confounding.
//!
//! Run with: cargo run --release --example analyze_stratum

use tnd_bounds::sharp;
use tnd_bounds::table::ObservedTable;

fn main() -> tnd_bounds::Result<()> {
    // A 2x2 table of exposure (z) by outcome (y) among tested units, in
    // canonical cell order (0,0), (1,0), (0,1), (1,1).
    let table = ObservedTable::validate([100.0, 500.0, 1000.0, 399.0], true)?;

    let or = table.observed_or()?;
    println!("n = {}", table.n().unwrap());
    println!("observed odds ratio = {or:.4}");
    println!("vaccine efficacy    = {:.2}%", 100.0 * (1.0 - or));

    // A perfect design identifies the causal odds ratio; an imperfect one
    // only bounds it. delta bounds the residual confounder mass, gamma the
    // confounding strength.
    println!("\n{:>6} {:>6} {:>10} {:>10} {:>22}", "delta", "gamma", "lower", "upper", "efficacy range");
    for (delta, gamma) in [
        (0.0, f64::INFINITY),
        (0.05, f64::INFINITY),
        (0.1, 5.0),
        (0.1, 3.5),
        (0.1, 2.0),
        (0.3, 2.0),
    ] {
        let b = if gamma.is_finite() {
            sharp::bounds_delta_gamma(&table, delta, gamma)?
        } else {
            sharp::bounds_delta(&table, delta)?
        };
        let ve_hi = 100.0 * (1.0 - b.lower);
        let ve_lo = 100.0 * (1.0 - b.upper);
        println!(
            "{delta:>6.2} {:>6} {:>10.4} {:>10.4} {:>14.1}% - {:.1}%",
            if gamma.is_finite() { format!("{gamma}") } else { "inf".into() },
            b.lower,
            b.upper,
            ve_lo,
            ve_hi,
        );
    }
    Ok(())
}
