//! Seed-deterministic data generators and experiment harnesses: multinomial
//! table sampling, Dirichlet random tables, the continuous-covariate data
//! generating process, fixed-odds-ratio table families, and coverage
//! studies of the confidence-bound procedures.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{self, SetShape};
use crate::covmodel::MnlCoefficients;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::qcqp::{self, SolverConfig};
use crate::table::{ObservedTable, SensitivityParams};

/// One multinomial draw of n units over the table's cells. Counts-backed.
pub fn sample_multinomial_table(pi: &ObservedTable, n: u64, seed: u64) -> ObservedTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_multinomial_with(pi, n, &mut rng)
}

pub(crate) fn sample_multinomial_with(
    pi: &ObservedTable,
    n: u64,
    rng: &mut ChaCha8Rng,
) -> ObservedTable {
    let cells = pi.cells();
    let mut counts = [0u64; 4];
    let mut remaining = n;
    let mut mass_left = 1.0;
    for i in 0..3 {
        if remaining == 0 || mass_left <= 0.0 {
            break;
        }
        let p = (cells[i] / mass_left).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, p).expect("valid binomial").sample(rng);
        counts[i] = draw;
        remaining -= draw;
        mass_left -= cells[i];
    }
    counts[3] = remaining;
    ObservedTable::from_counts(counts)
}

/// One Dirichlet draw on the simplex via normalized Gamma variates.
pub fn sample_dirichlet_pi(concentration: [f64; 4], seed: u64) -> Result<ObservedTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_dirichlet_with(concentration, &mut rng)
}

pub(crate) fn sample_dirichlet_with(
    concentration: [f64; 4],
    rng: &mut ChaCha8Rng,
) -> Result<ObservedTable> {
    if concentration.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::InvalidInput(
            "Dirichlet concentrations must be positive".into(),
        ));
    }
    let mut g = [0.0; 4];
    let mut total = 0.0;
    for i in 0..4 {
        let gamma = Gamma::new(concentration[i], 1.0)
            .map_err(|e| Error::InvalidInput(format!("gamma: {e}")))?;
        g[i] = gamma.sample(rng);
        total += g[i];
    }
    if total <= 0.0 {
        // Vanishingly unlikely; resample deterministically by nudging.
        return sample_dirichlet_with(concentration, rng);
    }
    for v in &mut g {
        *v /= total;
    }
    ObservedTable::from_probs(g)
}

/// i.i.d. rows (c, z, y) of the continuous-covariate process: c uniform on
/// (0,1), cell drawn from the multinomial-logit probabilities at c.
pub fn simulate_continuous(beta: &MnlCoefficients, n: usize, seed: u64) -> Vec<(f64, u8, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let c: f64 = rng.random();
        let cells = beta.predict_cells(&[c]);
        let u: f64 = rng.random();
        let mut cell = 3usize;
        let mut acc = 0.0;
        for (k, &p) in cells.iter().enumerate() {
            acc += p;
            if u < acc {
                cell = k;
                break;
            }
        }
        rows.push((c, (cell % 2) as u8, (cell / 2) as u8));
    }
    rows
}

/// The coefficient values used throughout the continuous-covariate
/// experiments.
pub fn experiment_beta() -> MnlCoefficients {
    MnlCoefficients {
        b10: vec![0.5, 0.5],
        b01: vec![1.3, -1.3],
        b11: vec![-0.1, -0.3],
    }
}

/// The table with a prescribed odds ratio and margins: treated fraction
/// m1 = p10 + p11 and positive fraction m2 = p01 + p11. Solves
/// (1-R) x^2 + ((1 - m1 - m2) + R (m1 + m2)) x - R m1 m2 = 0 for x = p11
/// and keeps the root that puts all four cells in (0,1).
pub fn fixed_or_table(or_target: f64, m1: f64, m2: f64) -> Result<ObservedTable> {
    if !(or_target > 0.0 && or_target.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "odds ratio target {or_target} must be positive and finite"
        )));
    }
    if !(0.0 < m1 && m1 < 1.0 && 0.0 < m2 && m2 < 1.0) {
        return Err(Error::InvalidParams(format!(
            "marginals (m1={m1}, m2={m2}) must lie in (0,1)"
        )));
    }
    let r = or_target;
    let roots: Vec<f64> = if (r - 1.0).abs() < 1e-14 {
        vec![m1 * m2]
    } else {
        let a = 1.0 - r;
        let b = (1.0 - m1 - m2) + r * (m1 + m2);
        let c = -r * m1 * m2;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Err(Error::InfeasibleMarginals(format!(
                "negative discriminant {disc}"
            )));
        }
        let s = disc.sqrt();
        vec![(-b + s) / (2.0 * a), (-b - s) / (2.0 * a)]
    };
    // Select by range test: the valid root must give all cells in (0,1).
    for x in roots {
        let cells = [1.0 - m1 - m2 + x, m1 - x, m2 - x, x];
        if cells.iter().all(|&v| v > 0.0 && v < 1.0) {
            return ObservedTable::from_probs(normalize(cells));
        }
    }
    Err(Error::InfeasibleMarginals(format!(
        "no root yields a valid table for R={r}, m1={m1}, m2={m2}"
    )))
}

fn normalize(c: [f64; 4]) -> [f64; 4] {
    let s: f64 = c.iter().sum();
    [c[0] / s, c[1] / s, c[2] / s, c[3] / s]
}

/// Protocol for a coverage study of the confidence-bound procedures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub replications: usize,
    pub n: u64,
    /// Fixed true cell probabilities; when absent each replication draws its
    /// own truth from Dirichlet(1,1,1,1).
    pub true_pi: Option<[f64; 4]>,
    pub params: SensitivityParams,
    pub alpha: f64,
    pub shapes: Vec<SetShape>,
    pub seed: u64,
    /// Monte Carlo draws behind the rectangular-set critical value.
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_mc_draws() -> usize {
    1_000_000
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidInput("replications must be >= 1".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha={} not in (0,1)",
                self.alpha
            )));
        }
        if self.shapes.is_empty() {
            return Err(Error::InvalidInput("no set shapes requested".into()));
        }
        self.solver.validate()
    }
}

/// One replication's record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub shape: SetShape,
    pub covered: bool,
    pub lower: f64,
    #[serde(with = "crate::json_inf")]
    pub upper: f64,
    pub log_width: f64,
    pub seconds: f64,
    /// Present when the replication failed instead of producing bounds.
    pub error: Option<String>,
}

/// Per-shape aggregate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeSummary {
    pub shape: SetShape,
    pub coverage: f64,
    pub mean_log_width: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_shape: Vec<ShapeSummary>,
    pub records: Vec<RepRecord>,
}

/// Replicate sampling plus confidence-bounds computation, recording whether
/// each interval covers the true sharp-bounds interval (both endpoints
/// inside). Replication seeds are counter-derived from the config seed, so
/// parallel and serial runs produce identical reports.
pub fn coverage_study(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;

    let fixed_truth = match cfg.true_pi {
        Some(cells) => Some(ObservedTable::from_probs(cells)?),
        None => None,
    };
    // True sharp bounds for a fixed truth are shared across replications.
    let fixed_true_bounds = match &fixed_truth {
        Some(t) => Some(qcqp::solve_bounds(t, &cfg.params, &cfg.solver)?.interval),
        None => None,
    };

    let records: Vec<RepRecord> = (0..cfg.replications)
        .into_par_iter()
        .flat_map_iter(|rep| {
            let rep_seed = derive_seed(cfg.seed, rep as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
            let truth_and_bounds: Result<(ObservedTable, crate::sharp::BoundsInterval)> =
                match (&fixed_truth, &fixed_true_bounds) {
                    (Some(t), Some(b)) => Ok((t.clone(), b.clone())),
                    _ => sample_dirichlet_with([1.0; 4], &mut rng).and_then(|t| {
                        let mut solver = cfg.solver;
                        solver.seed = derive_seed(rep_seed, 2);
                        let b = qcqp::solve_bounds(&t, &cfg.params, &solver)?.interval;
                        Ok((t, b))
                    }),
                };
            let per_rep: Result<Vec<RepRecord>> = truth_and_bounds.map(|(truth, true_bounds)| {
                let sample = sample_multinomial_with(&truth, cfg.n, &mut rng);
                let counts = *sample.counts().expect("sampled tables are counts-backed");
                cfg.shapes
                    .iter()
                    .map(|&shape| {
                        let start = Instant::now();
                        let mut solver = cfg.solver;
                        solver.seed = derive_seed(rep_seed, 1000 + shape_tag(shape));
                        let outcome = confidence::ci_bounds_opt(
                            counts,
                            cfg.alpha,
                            &cfg.params,
                            shape,
                            cfg.mc_draws,
                            &solver,
                        );
                        let seconds = start.elapsed().as_secs_f64();
                        match outcome {
                            Ok(ci) => {
                                let covered = ci.interval.lower <= true_bounds.lower
                                    && true_bounds.upper <= ci.interval.upper;
                                RepRecord {
                                    rep,
                                    shape,
                                    covered,
                                    lower: ci.interval.lower,
                                    upper: ci.interval.upper,
                                    log_width: ci.interval.width_log(),
                                    seconds,
                                    error: None,
                                }
                            }
                            Err(e) => failed_record(rep, shape, seconds, e.to_string()),
                        }
                    })
                    .collect()
            });
            per_rep.unwrap_or_else(|e| {
                cfg.shapes
                    .iter()
                    .map(|&shape| failed_record(rep, shape, 0.0, e.to_string()))
                    .collect()
            })
        })
        .collect();

    let mut per_shape = Vec::new();
    for &shape in &cfg.shapes {
        let shape_records: Vec<&RepRecord> =
            records.iter().filter(|r| r.shape == shape).collect();
        let failures = shape_records.iter().filter(|r| r.error.is_some()).count();
        let ok: Vec<&&RepRecord> = shape_records.iter().filter(|r| r.error.is_none()).collect();
        let coverage = if shape_records.is_empty() {
            0.0
        } else {
            shape_records.iter().filter(|r| r.covered).count() as f64
                / shape_records.len() as f64
        };
        let mean_log_width = if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| r.log_width).sum::<f64>() / ok.len() as f64
        };
        per_shape.push(ShapeSummary {
            shape,
            coverage,
            mean_log_width,
            failures,
        });
    }
    Ok(CoverageReport { per_shape, records })
}

fn shape_tag(shape: SetShape) -> u64 {
    match shape {
        SetShape::Q => 1,
        SetShape::N => 2,
        SetShape::T => 3,
    }
}

fn failed_record(rep: usize, shape: SetShape, seconds: f64, error: String) -> RepRecord {
    RepRecord {
        rep,
        shape,
        covered: false,
        lower: f64::NAN,
        upper: f64::NAN,
        log_width: f64::NAN,
        seconds,
        error: Some(error),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multinomial_single_draw() {
        let t = ObservedTable::from_probs([0.25; 4]).unwrap();
        let s = sample_multinomial_table(&t, 1, 9);
        let counts = s.counts().unwrap();
        assert_eq!(counts.iter().sum::<u64>(), 1);
        assert_eq!(counts.iter().filter(|&&c| c == 1).count(), 1);
    }

    #[test]
    fn multinomial_law_of_large_numbers() {
        let t = ObservedTable::from_probs([0.1, 0.2, 0.3, 0.4]).unwrap();
        let s = sample_multinomial_table(&t, 1_000_000, 11);
        for (a, b) in s.cells().iter().zip(t.cells()) {
            assert!((a - b).abs() < 0.005, "{a} vs {b}");
        }
        // Chi-square goodness of fit should not reject wildly.
        let n = 1_000_000.0;
        let mut stat = 0.0;
        for i in 0..4 {
            let expect = t.cells()[i] * n;
            let got = s.counts().unwrap()[i] as f64;
            stat += (got - expect).powi(2) / expect;
        }
        // chi2(3) 99.9% quantile is 16.27.
        assert!(stat < 16.27, "gof stat {stat}");
    }

    #[test]
    fn multinomial_deterministic() {
        let t = ObservedTable::from_probs([0.1, 0.2, 0.3, 0.4]).unwrap();
        let a = sample_multinomial_table(&t, 1000, 42);
        let b = sample_multinomial_table(&t, 1000, 42);
        assert_eq!(a.counts(), b.counts());
    }

    #[test]
    fn dirichlet_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mean = [0.0; 4];
        let reps = 100_000;
        for _ in 0..reps {
            let t = sample_dirichlet_with([1.0; 4], &mut rng).unwrap();
            for i in 0..4 {
                mean[i] += t.cells()[i];
            }
        }
        for v in &mut mean {
            *v /= reps as f64;
        }
        for v in mean {
            assert!((v - 0.25).abs() < 0.005, "mean {v}");
        }
    }

    #[test]
    fn dirichlet_concentration_limit() {
        let t = sample_dirichlet_pi([1e6; 4], 5).unwrap();
        for &c in t.cells() {
            assert!((c - 0.25).abs() < 0.002);
        }
        let a = sample_dirichlet_pi([1.0; 4], 7).unwrap();
        let b = sample_dirichlet_pi([1.0; 4], 7).unwrap();
        assert_eq!(a.cells(), b.cells());
    }

    #[test]
    fn continuous_simulation_matches_model() {
        let beta = MnlCoefficients::zeros(1);
        let rows = simulate_continuous(&beta, 100_000, 13);
        let mut freq = [0.0; 4];
        for &(_, z, y) in &rows {
            freq[(z + 2 * y) as usize] += 1.0;
        }
        for f in &mut freq {
            *f /= rows.len() as f64;
        }
        for f in freq {
            assert!((f - 0.25).abs() < 0.01);
        }

        // Near c = 0 the paper's coefficients give a known cell vector.
        let rows = simulate_continuous(&experiment_beta(), 200_000, 17);
        let mut freq = [0.0; 4];
        let mut count = 0.0;
        for &(c, z, y) in &rows {
            if c <= 0.02 {
                freq[(z + 2 * y) as usize] += 1.0;
                count += 1.0;
            }
        }
        for f in &mut freq {
            *f /= count;
        }
        let expect = [0.138_f64, 0.228, 0.508, 0.125];
        for (a, b) in freq.iter().zip(expect) {
            assert!((a - b).abs() < 0.03, "{a} vs {b}");
        }

        let a = simulate_continuous(&experiment_beta(), 100, 19);
        let b = simulate_continuous(&experiment_beta(), 100, 19);
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_or_independence() {
        let t = fixed_or_table(1.0, 0.5, 0.5).unwrap();
        for &c in t.cells() {
            assert!((c - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_or_round_trip() {
        let t = fixed_or_table(0.5, 0.6, 0.7).unwrap();
        assert!((t.observed_or().unwrap() - 0.5).abs() < 1e-10);
        // Margins respected.
        let c = t.cells();
        assert!((c[1] + c[3] - 0.6).abs() < 1e-10);
        assert!((c[2] + c[3] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn fixed_or_negative_association() {
        let t = fixed_or_table(0.5, 0.5, 0.5).unwrap();
        assert!(t.cells()[3] < 0.25);
    }

    #[test]
    fn fixed_or_grid_round_trip() {
        for r in [0.25, 0.5, 2.0] {
            for i in 1..=9 {
                for j in 1..=9 {
                    let m1 = i as f64 / 10.0;
                    let m2 = j as f64 / 10.0;
                    let t = fixed_or_table(r, m1, m2).unwrap();
                    assert!(
                        (t.observed_or().unwrap() - r).abs() < 1e-10,
                        "R={r} m1={m1} m2={m2}"
                    );
                }
            }
        }
    }

    #[test]
    fn coverage_study_smoke() {
        let cfg = ExperimentConfig {
            replications: 4,
            n: 500,
            true_pi: Some([0.1, 0.2, 0.3, 0.4]),
            params: SensitivityParams::new(0.1, 3.0, 2.0).unwrap(),
            alpha: 0.05,
            shapes: vec![SetShape::N, SetShape::Q],
            seed: 21,
            mc_draws: 20_000,
            solver: SolverConfig {
                starts: 6,
                ..SolverConfig::default()
            },
        };
        let report = coverage_study(&cfg).unwrap();
        assert_eq!(report.records.len(), 8);
        assert_eq!(report.per_shape.len(), 2);
        for s in &report.per_shape {
            assert!(s.failures == 0);
            assert!((0.0..=1.0).contains(&s.coverage));
        }
        // Determinism end to end.
        let again = coverage_study(&cfg).unwrap();
        for (a, b) in report.records.iter().zip(&again.records) {
            assert_eq!(a.covered, b.covered);
            assert_eq!(a.lower.to_bits(), b.lower.to_bits());
        }
    }
}
