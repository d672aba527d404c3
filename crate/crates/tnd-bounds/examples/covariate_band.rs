//! Continuous covariates: fit a multinomial-logit model for the cell
//! probabilities pi(c), build the simultaneous confidence set over all c,
//! and trace a sensitivity band along a covariate grid.
//!
//! Run with: cargo run --release --example covariate_band

use tnd_bounds::covmodel::{self, BandRoute};
use tnd_bounds::qcqp::SolverConfig;
use tnd_bounds::simlab;
use tnd_bounds::table::SensitivityParams;

fn main() -> tnd_bounds::Result<()> {
    // Simulate individual-level data from the benchmark data-generating
    // process (univariate c on (0,1)), then fit by Newton-Raphson.
    let beta = simlab::experiment_beta();
    let data = simlab::simulate_continuous(&beta, 50_000, 42);
    let rows = covmodel::univariate_rows(&data);
    let fit = covmodel::fit_mnl(&rows, 0.0)?;
    println!(
        "fit: converged={} iterations={} loglik={:.1} grad={:.2e}",
        fit.converged, fit.iterations, fit.loglik, fit.grad_norm
    );
    println!("  b10 = {:.3?} (truth 0.5, 0.5)", fit.beta.b10);
    println!("  b01 = {:.3?} (truth 1.3, -1.3)", fit.beta.b01);
    println!("  b11 = {:.3?} (truth -0.1, -0.3)", fit.beta.b11);

    // Predicted table and simultaneous set at one covariate value.
    let c = [0.5];
    let pi = covmodel::predict_pi(&fit, &c)?;
    println!("\npredicted cells at c=0.5: {:.4?}", pi.cells());
    let set = covmodel::simultaneous_set(&fit, &c, 0.05)?;
    println!(
        "simultaneous set: chi2 threshold {:.3}, center inside: {}",
        set.critical_value(),
        set.contains(&set.center)
    );

    // Sensitivity band over a coarse grid; the exact-set route honors all
    // three parameters, the box-hull route is a conservative rectangle.
    let params = SensitivityParams::new(0.1, 5.0, 2.0)?;
    let cfg = SolverConfig::default();
    let grid: Vec<Vec<f64>> = (0..11).map(|i| vec![i as f64 / 10.0]).collect();
    let band = covmodel::band_bounds(&fit, &grid, 0.05, &params, BandRoute::ExactSet, &cfg)?;
    println!("\n{:>5} {:>18} {:>18}", "c", "point bounds", "simultaneous band");
    for p in &band.points {
        println!(
            "{:>5.2} [{:>7.4}, {:>7.4}] [{:>7.4}, {:>7.4}]",
            p.c[0],
            p.point_bounds.lower,
            p.point_bounds.upper,
            p.ci_bounds.lower,
            p.ci_bounds.upper
        );
    }
    Ok(())
}
