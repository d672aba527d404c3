//! Shared pattern-search machinery for the feasible-projected local
//! searches. Directions are the coordinate axes plus all pairwise
//! diagonals; constrained optima typically sit where one or two constraints
//! are active, and the diagonal moves let the search slide along such a
//! boundary instead of stalling against it. On every mesh shrink a fresh
//! batch of random directions is drawn (seeded, so runs are reproducible);
//! refreshing the direction set as the mesh refines is what lets the
//! search track narrow curved feasible corridors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Coordinate axes (both signs) and normalized pairwise diagonals.
pub(crate) fn base_directions<const N: usize>() -> Vec<[f64; N]> {
    let mut dirs = Vec::with_capacity(2 * N + 2 * N * (N - 1));
    for j in 0..N {
        let mut d = [0.0; N];
        d[j] = 1.0;
        dirs.push(d);
        d[j] = -1.0;
        dirs.push(d);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for a in 0..N {
        for b in (a + 1)..N {
            for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut d = [0.0; N];
                d[a] = sa * s;
                d[b] = sb * s;
                dirs.push(d);
            }
        }
    }
    dirs
}

fn random_unit<const N: usize>(rng: &mut ChaCha8Rng) -> [f64; N] {
    let mut d = [0.0; N];
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

/// Pattern search minimizing `sign * eval(x)` over the feasible region
/// implied by `eval` returning `Some`. Per-coordinate steps halve when no
/// direction improves; terminates on step collapse (converged) or on
/// exhausting the evaluation budget (not converged). Deterministic given
/// its inputs, including `seed`.
pub(crate) fn compass<const N: usize>(
    eval: &dyn Fn(&[f64; N]) -> Option<f64>,
    x0: [f64; N],
    f0: f64,
    init_steps: [f64; N],
    seed: u64,
    sign: f64,
    budget: usize,
) -> ([f64; N], f64, bool) {
    let base = base_directions::<N>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_random = N + 4;
    let mut random_dirs: Vec<[f64; N]> = (0..n_random).map(|_| random_unit(&mut rng)).collect();

    let mut x = x0;
    let mut best = sign * f0;
    let mut steps = init_steps;
    let mut evals = 0usize;

    while evals < budget {
        let mut improved = false;
        for d in base.iter().chain(random_dirs.iter()) {
            let mut cand = x;
            for j in 0..N {
                cand[j] += steps[j] * d[j];
            }
            evals += 1;
            if let Some(f) = eval(&cand) {
                let v = sign * f;
                if v < best - 1e-15 {
                    best = v;
                    x = cand;
                    improved = true;
                    // Greedy ray extension: keep going along the same
                    // direction with doubling stride while it pays off.
                    // This crawls along active-constraint valleys that a
                    // single fixed step would traverse very slowly.
                    let mut stride = 2.0;
                    while evals < budget {
                        let mut ext = x;
                        for j in 0..N {
                            ext[j] += stride * steps[j] * d[j];
                        }
                        evals += 1;
                        match eval(&ext) {
                            Some(fe) if sign * fe < best - 1e-15 => {
                                best = sign * fe;
                                x = ext;
                                stride *= 2.0;
                            }
                            _ => break,
                        }
                    }
                }
            }
            if evals >= budget {
                break;
            }
        }
        if !improved {
            let max_step = steps.iter().fold(0.0_f64, |a, &b| a.max(b));
            if max_step < 1e-9 {
                return (x, sign * best, true);
            }
            for s in &mut steps {
                *s *= 0.5;
            }
            // Fresh random directions on the finer mesh.
            for d in &mut random_dirs {
                *d = random_unit(&mut rng);
            }
        }
    }
    (x, sign * best, false)
}
