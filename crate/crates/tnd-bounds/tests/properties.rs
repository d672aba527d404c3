//! Cross-module invariants: reduction, monotonicity, nesting, witness
//! validity, solver-vs-oracle agreement, confidence-set behavior, and the
//! structural reproduction of the width scan.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tnd_bounds::confidence::{self, SetShape};
use tnd_bounds::covmodel;
use tnd_bounds::qcqp::{self, SolverConfig};
use tnd_bounds::sharp::{self, BoundsInterval};
use tnd_bounds::simlab;
use tnd_bounds::table::{GeneralTable, ObservedTable, SensitivityParams};

fn dirichlet_table(rng: &mut ChaCha8Rng, floor: f64) -> ObservedTable {
    loop {
        let mut g = [0.0; 4];
        let mut s = 0.0;
        for v in &mut g {
            let u: f64 = rng.random();
            *v = -(1.0 - u).ln();
            s += *v;
        }
        for v in &mut g {
            *v /= s;
        }
        if g.iter().all(|&c| c > floor) {
            return ObservedTable::from_probs(g).unwrap();
        }
    }
}

fn check_witness(b: &BoundsInterval, bx: &sharp::CellBox) {
    for witness in [b.lower_witness, b.upper_witness].into_iter().flatten() {
        assert!(bx.contains(&witness, 1e-10));
        assert!((witness.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
    if let Some(w) = b.lower_witness {
        let or = w[3] * w[0] / (w[1] * w[2]);
        assert!((or - b.lower).abs() <= 1e-10 * b.lower.max(1.0));
    }
    if let Some(w) = b.upper_witness {
        let or = w[3] * w[0] / (w[1] * w[2]);
        if b.upper.is_infinite() {
            assert!(or.is_infinite() || w[1] * w[2] == 0.0);
        } else {
            assert!((or - b.upper).abs() <= 1e-10 * b.upper.max(1.0));
        }
    }
}

proptest! {
    #[test]
    fn table_validation_idempotent(raw in prop::array::uniform4(1u64..10_000)) {
        let t = ObservedTable::from_counts(raw);
        prop_assert!((t.cells().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        // Re-validating the normalized cells is the identity.
        let again = ObservedTable::validate(*t.cells(), false).unwrap();
        prop_assert_eq!(t.cells(), again.cells());
    }

    #[test]
    fn relabel_reciprocal(raw in prop::array::uniform4(1u64..10_000)) {
        let t = ObservedTable::from_counts(raw);
        let or = t.observed_or().unwrap();
        let ror = t.relabel_exposure().observed_or().unwrap();
        prop_assert!((or * ror - 1.0).abs() <= 1e-12 * or.max(1.0 / or));
    }

    #[test]
    fn restriction_preserves_cross_ratio(
        entries in prop::collection::vec(1u64..1000, 12),
        zs in (0usize..4, 0usize..4),
        ys in (0usize..3, 0usize..3),
    ) {
        prop_assume!(zs.0 != zs.1 && ys.0 != ys.1);
        let g = GeneralTable::new((4, 3), entries.iter().map(|&e| e as f64).collect(), true).unwrap();
        let t = g.restrict(zs, ys).unwrap();
        let raw = [
            g.entry(zs.0, ys.0),
            g.entry(zs.1, ys.0),
            g.entry(zs.0, ys.1),
            g.entry(zs.1, ys.1),
        ];
        let raw_cr = raw[3] * raw[0] / (raw[1] * raw[2]);
        let or = t.observed_or().unwrap();
        prop_assert!((or - raw_cr).abs() <= 1e-12 * raw_cr.max(1.0));
    }
}

#[test]
fn reduction_identities_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let t = dirichlet_table(&mut rng, 1e-3);
        let or = t.observed_or().unwrap();
        let a = sharp::bounds_delta(&t, 0.0).unwrap();
        let b = sharp::bounds_delta_gamma(&t, rng.random(), 1.0).unwrap();
        assert!((a.lower - or).abs() <= 1e-12 && (a.upper - or).abs() <= 1e-12);
        assert!((b.lower - or).abs() <= 1e-12 && (b.upper - or).abs() <= 1e-12);
    }
}

#[test]
fn bounds_monotone_in_delta_and_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let deltas: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
    let gammas: Vec<f64> = (0..10).map(|i| 1.0 + 0.5 * i as f64).collect();
    for _ in 0..100 {
        let t = dirichlet_table(&mut rng, 1e-3);
        let or = t.observed_or().unwrap();
        for &g in &gammas {
            let mut prev: Option<BoundsInterval> = None;
            for &d in &deltas {
                let b = sharp::bounds_delta_gamma(&t, d, g).unwrap();
                assert!(b.lower <= or + 1e-12 && b.upper >= or - 1e-12);
                if let Some(p) = prev {
                    assert!(b.lower <= p.lower + 1e-12, "lower not nonincreasing in delta");
                    assert!(b.upper >= p.upper - 1e-12, "upper not nondecreasing in delta");
                }
                prev = Some(b);
            }
        }
        for &d in &deltas {
            let mut prev: Option<BoundsInterval> = None;
            for &g in &gammas {
                let b = sharp::bounds_delta_gamma(&t, d, g).unwrap();
                if let Some(p) = prev {
                    assert!(b.lower <= p.lower + 1e-12, "lower not nonincreasing in gamma");
                    assert!(b.upper >= p.upper - 1e-12, "upper not nondecreasing in gamma");
                }
                prev = Some(b);
            }
        }
    }
}

#[test]
fn combined_bounds_nest_in_single_constraint_analyses() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let t = dirichlet_table(&mut rng, 1e-3);
        let d = 0.02 + 0.6 * rng.random::<f64>();
        let g = 1.0 + 6.0 * rng.random::<f64>();
        let both = sharp::bounds_delta_gamma(&t, d, g).unwrap();
        let delta_only = sharp::bounds_delta(&t, d).unwrap();
        let gamma_only = sharp::bounds_delta_gamma(&t, 1.0, g).unwrap();
        for outer in [&delta_only, &gamma_only] {
            assert!(outer.contains_interval(&both, 1e-10));
        }
        let bx = sharp::cell_box(&t, d, g).unwrap();
        check_witness(&both, &bx);
    }
}

#[test]
fn delta_witnesses_decompose_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let t = dirichlet_table(&mut rng, 1e-3);
        let d = rng.random::<f64>();
        for side in [sharp::BoundSide::Lower, sharp::BoundSide::Upper] {
            let dec = sharp::attaining_decomposition(&t, d, side).unwrap();
            assert!(dec.mixture_error(&t) <= 1e-12);
            assert!((dec.p0.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            assert!((dec.p1.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            assert!(dec.w <= d + 1e-15);
        }
    }
}

#[test]
fn solver_sandwich_and_witnesses() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cfg = SolverConfig::default();
    for _ in 0..25 {
        let t = dirichlet_table(&mut rng, 5e-3);
        let params = SensitivityParams::new(
            0.02 + 0.28 * rng.random::<f64>(),
            1.2 + 3.8 * rng.random::<f64>(),
            1.2 + 8.8 * rng.random::<f64>(),
        )
        .unwrap();
        let or = t.observed_or().unwrap();
        let r = qcqp::solve_bounds(&t, &params, &cfg).unwrap();
        let closed = sharp::bounds_delta_gamma(&t, params.delta, params.gamma).unwrap();
        assert!(r.interval.lower <= or + 1e-10 && or <= r.interval.upper + 1e-10);
        assert!(r.interval.lower >= closed.lower - 1e-9 * closed.lower.max(1.0));
        assert!(r.interval.upper <= closed.upper + 1e-9 * closed.upper.max(1.0));
        for pt in [&r.lower_point, &r.upper_point] {
            let (ok, rep) = qcqp::is_feasible(pt, &t, &params, 1e-9);
            assert!(ok, "{rep:?}");
        }
        assert!((r.lower_point.objective() - r.interval.lower).abs() <= 1e-8);
        assert!((r.upper_point.objective() - r.interval.upper).abs() <= 1e-8);
    }
}

#[test]
fn solver_monotone_widening_lattice() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let cfg = SolverConfig {
        starts: 8,
        ..SolverConfig::default()
    };
    let deltas: Vec<f64> = (1..=5).map(|i| 0.05 * i as f64).collect();
    let gammas: Vec<f64> = (1..=5).map(|i| 1.0 + 0.75 * i as f64).collect();
    let xis: Vec<f64> = (1..=5).map(|i| 1.0 + 0.6 * i as f64).collect();
    // Local-search noise can nudge an endpoint the wrong way by a hair;
    // nesting is asserted up to a small slack.
    let slack = 2e-3;
    for _ in 0..20 {
        let t = dirichlet_table(&mut rng, 5e-3);
        let solve = |d: f64, g: f64, x: f64| -> BoundsInterval {
            let params = SensitivityParams::new(d, g, x).unwrap();
            qcqp::solve_bounds(&t, &params, &cfg).unwrap().interval
        };
        // One axis at a time through the lattice midline.
        let (dm, gm, xm) = (deltas[2], gammas[2], xis[2]);
        let mut prev: Option<BoundsInterval> = None;
        for &d in &deltas {
            let b = solve(d, gm, xm);
            if let Some(p) = &prev {
                assert!(b.lower <= p.lower + slack && b.upper >= p.upper - slack);
            }
            prev = Some(b);
        }
        prev = None;
        for &g in &gammas {
            let b = solve(dm, g, xm);
            if let Some(p) = &prev {
                assert!(b.lower <= p.lower + slack && b.upper >= p.upper - slack);
            }
            prev = Some(b);
        }
        prev = None;
        for &x in &xis {
            let b = solve(dm, gm, x);
            if let Some(p) = &prev {
                assert!(b.lower <= p.lower + slack && b.upper >= p.upper - slack);
            }
            prev = Some(b);
        }
    }
}

#[test]
fn solver_matches_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = SolverConfig::default();
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let t = dirichlet_table(&mut rng, 5e-3);
        let params = SensitivityParams::new(
            0.02 + 0.28 * rng.random::<f64>(),
            1.2 + 3.8 * rng.random::<f64>(),
            1.2 + 8.8 * rng.random::<f64>(),
        )
        .unwrap();
        let r = qcqp::solve_bounds(&t, &params, &cfg).unwrap();
        let o = qcqp::oracle_bounds(&t, &params, 0.005).unwrap();
        let rel_lo = (r.interval.lower - o.lower).abs() / o.lower.max(1e-12);
        let rel_hi = (r.interval.upper - o.upper).abs() / o.upper.max(1e-12);
        worst = worst.max(rel_lo).max(rel_hi);
        assert!(
            rel_lo <= 5e-3 && rel_hi <= 5e-3,
            "case {case} ({params:?}): solver [{}, {}] vs oracle [{}, {}]",
            r.interval.lower,
            r.interval.upper,
            o.lower,
            o.upper
        );
    }
    println!("solver-vs-oracle worst relative deviation: {worst:.2e}");
}

#[test]
fn confidence_sets_monotone_in_alpha() {
    let counts = [120u64, 260, 310, 410];
    for shape in [SetShape::N, SetShape::T] {
        let wide = confidence::conf_set(counts, 0.01, shape, 200_000, 3).unwrap();
        let tight = confidence::conf_set(counts, 0.20, shape, 200_000, 3).unwrap();
        let (wl, wh) = wide.rect_endpoints().unwrap();
        let (tl, th) = tight.rect_endpoints().unwrap();
        for i in 0..4 {
            assert!(tl[i] >= wl[i] && th[i] <= wh[i]);
        }
    }
    // Elliptical: smaller alpha means larger threshold.
    let wide = confidence::conf_set(counts, 0.01, SetShape::Q, 1, 0).unwrap();
    let tight = confidence::conf_set(counts, 0.20, SetShape::Q, 1, 0).unwrap();
    assert!(wide.critical_value() > tight.critical_value());

    // Wider sets give wider confidence bounds.
    let lo = confidence::ci_bounds_closed(counts, 0.01, 0.1, 2.0, SetShape::N, 200_000, 3).unwrap();
    let hi = confidence::ci_bounds_closed(counts, 0.20, 0.1, 2.0, SetShape::N, 200_000, 3).unwrap();
    assert!(lo.interval.lower <= hi.interval.lower);
    assert!(lo.interval.upper >= hi.interval.upper);
}

#[test]
fn confidence_bounds_contain_point_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let cfg = SolverConfig {
        starts: 8,
        ..SolverConfig::default()
    };
    for _ in 0..5 {
        let truth = dirichlet_table(&mut rng, 0.05);
        let sample = simlab::sample_multinomial_table(&truth, 2000, rng.random());
        let counts = *sample.counts().unwrap();
        let pi_hat = ObservedTable::from_counts(counts);
        let params = SensitivityParams::new(0.1, 3.0, 2.5).unwrap();
        let point = qcqp::solve_bounds(&pi_hat, &params, &cfg).unwrap().interval;
        for shape in [SetShape::Q, SetShape::N, SetShape::T] {
            let ci = confidence::ci_bounds_opt(counts, 0.05, &params, shape, 100_000, &cfg)
                .unwrap();
            assert!(
                ci.interval.lower <= point.lower + 1e-9,
                "{shape}: ci lower {} vs point {}",
                ci.interval.lower,
                point.lower
            );
            assert!(ci.interval.upper >= point.upper - 1e-9);
        }
        // Closed form contains the optimized version (it drops the simplex
        // coupling on the cell probabilities).
        let closed =
            confidence::ci_bounds_closed(counts, 0.05, 0.1, 3.0, SetShape::N, 100_000, 9).unwrap();
        let opt_params = SensitivityParams::delta_gamma(0.1, 3.0).unwrap();
        let opt = confidence::ci_bounds_opt(counts, 0.05, &opt_params, SetShape::N, 100_000, &cfg)
            .unwrap();
        assert!(closed.interval.lower <= opt.interval.lower + 1e-9);
        assert!(closed.interval.upper >= opt.interval.upper - 1e-9);
    }
}

#[test]
fn simultaneous_set_covers_true_curve() {
    // Set-level simultaneous coverage across the covariate range: the true
    // cell probabilities lie inside the simultaneous set at every grid
    // point in at least 18 of 20 runs.
    let beta = simlab::experiment_beta();
    let grid: Vec<Vec<f64>> = (0..101).map(|i| vec![i as f64 / 100.0]).collect();
    let mut covering = 0;
    for run in 0..20 {
        let data = simlab::simulate_continuous(&beta, 50_000, 4000 + run);
        let rows = covmodel::univariate_rows(&data);
        let fit = covmodel::fit_mnl(&rows, 0.0).unwrap();
        let all = grid.iter().all(|c| {
            let set = covmodel::simultaneous_set(&fit, c, 0.05).unwrap();
            set.contains(&beta.predict_cells(c))
        });
        if all {
            covering += 1;
        }
    }
    assert!(covering >= 18, "simultaneous set covered in {covering}/20 runs");
}

#[test]
fn predicted_cells_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..200 {
        let beta = covmodel::MnlCoefficients {
            b10: vec![rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0],
            b01: vec![rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0],
            b11: vec![rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0],
        };
        let c = [rng.random::<f64>() * 2.0 - 1.0];
        let cells = beta.predict_cells(&c);
        assert!(cells.iter().all(|&v| v > 0.0));
        assert!((cells.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn newton_improves_on_null_coefficients() {
    // Step-halving keeps the likelihood nondecreasing, so the optimum must
    // beat the all-zero starting point.
    let beta = simlab::experiment_beta();
    let data = simlab::simulate_continuous(&beta, 5_000, 77);
    let rows = covmodel::univariate_rows(&data);
    let fit = covmodel::fit_mnl(&rows, 0.0).unwrap();
    let null_loglik = 5_000_f64 * (0.25_f64).ln();
    assert!(fit.loglik > null_loglik);
    assert!(fit.grad_norm <= 1e-8 * fit.n as f64);
}

#[test]
fn width_scan_log_ratio_structure() {
    // The log(upper/lower) variant: xi = 2 never widens the scan, and the
    // corner cells are wider than the center cell in both settings.
    let cfg = SolverConfig {
        starts: 8,
        ..SolverConfig::default()
    };
    let tight = SensitivityParams::new(0.1, 5.0, 2.0).unwrap();
    let grid = [0.1, 0.5, 0.9];
    let mut ratio_loose = std::collections::BTreeMap::new();
    let mut ratio_tight = std::collections::BTreeMap::new();
    for &m1 in &grid {
        for &m2 in &grid {
            let t = simlab::fixed_or_table(0.5, m1, m2).unwrap();
            let loose = sharp::bounds_delta_gamma(&t, 0.1, 5.0).unwrap();
            let tightened = qcqp::solve_bounds(&t, &tight, &cfg).unwrap().interval;
            assert!(tightened.width_log() <= loose.width_log() + 1e-9);
            let key = ((m1 * 10.0) as i32, (m2 * 10.0) as i32);
            ratio_loose.insert(key, loose.width_log());
            ratio_tight.insert(key, tightened.width_log());
        }
    }
    for widths in [&ratio_loose, &ratio_tight] {
        let center = widths[&(5, 5)];
        for corner in [(1, 1), (1, 9), (9, 1), (9, 9)] {
            assert!(widths[&corner] > center);
        }
    }
}
