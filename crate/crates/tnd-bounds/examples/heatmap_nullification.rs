//! Sensitivity heatmap: bounds over a (gamma, xi) grid at fixed delta, and
//! the nullification frontier — the least confounding strength needed to
//! drag the upper bound of the causal odds ratio across 1.
//!
//! Run with: cargo run --release --example heatmap_nullification

use tnd_bounds::qcqp::{self, SolverConfig};
use tnd_bounds::sharp;
use tnd_bounds::table::{ObservedTable, SensitivityParams};

fn upper_at(t: &ObservedTable, delta: f64, gamma: f64, xi: f64) -> tnd_bounds::Result<f64> {
    if xi.is_finite() {
        let params = SensitivityParams::new(delta, gamma, xi)?;
        Ok(qcqp::solve_bounds(t, &params, &SolverConfig::default())?
            .interval
            .upper)
    } else {
        Ok(sharp::bounds_delta_gamma(t, delta, gamma)?.upper)
    }
}

fn main() -> tnd_bounds::Result<()> {
    // A strongly protective table: OR = 0.0798.
    let t = ObservedTable::validate([100.0, 500.0, 1000.0, 399.0], true)?;
    let delta = 0.1;
    let gammas = [1.5, 2.0, 3.0, 4.0, 5.0, 7.0];
    let xis = [1.5, 2.0, 3.5, f64::INFINITY];

    println!("upper bound of the causal odds ratio at delta = {delta}:");
    print!("{:>8}", "gamma\\xi");
    for xi in xis {
        print!("{:>9}", if xi.is_finite() { format!("{xi}") } else { "inf".into() });
    }
    println!();
    for &g in &gammas {
        print!("{g:>8}");
        for &x in &xis {
            print!("{:>9.4}", upper_at(&t, delta, g, x)?);
        }
        println!();
    }

    // Nullification: bisect the smallest gamma at which the upper bound
    // reaches 1 (no protective effect left), per xi.
    println!("\nnullification frontier (upper bound = 1):");
    for &xi in &xis {
        let mut lo = 1.0;
        let mut hi = 64.0;
        if upper_at(&t, delta, hi, xi)? < 1.0 {
            println!("  xi = {xi:>5}: not nullified even at gamma = {hi}");
            continue;
        }
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if upper_at(&t, delta, mid, xi)? >= 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        println!(
            "  xi = {:>5}: gamma = {hi:.3}",
            if xi.is_finite() { format!("{xi}") } else { "inf".into() }
        );
    }
    Ok(())
}
