//! Command-line surface: reproducible analyses over the library.
//!
//! One thin binary (`tnd`) parses arguments and calls [`run_command`];
//! everything else lives here so integration tests can drive the full
//! surface in-process. Every file output is accompanied by a
//! `<file>.manifest.json` sibling recording the command, inputs (by
//! SHA-256), seed, version and wall time; the outputs themselves are
//! byte-identical across reruns with identical inputs and seeds.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure,
//! 4 non-convergence (results are still written, flagged).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::confidence::{self, SetShape};
use crate::covmodel::{self, BandRoute};
use crate::error::{Error, Result};
use crate::io::{self, Stratum};
use crate::json_inf::{format_inf_f64, parse_inf_f64};
use crate::qcqp::{self, SolverConfig};
use crate::sharp::{self, BoundsInterval};
use crate::simlab::{self, ExperimentConfig};
use crate::table::{ObservedTable, SensitivityParams};

/// Provenance record accompanying every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub input_digests: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_ms: u128,
}

impl RunManifest {
    fn new(command: &str, argv: &[String]) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            input_digests: BTreeMap::new(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: 0,
        }
    }

    fn digest_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        let hash = Sha256::digest(&bytes);
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        self.input_digests.insert(path.display().to_string(), hex);
        Ok(())
    }

    fn write_sibling(&self, out: &Path) -> Result<()> {
        let sibling = manifest_path(out);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(sibling, text)?;
        Ok(())
    }
}

/// `<file>.manifest.json` next to an output file.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[derive(Parser)]
#[command(
    name = "tnd",
    version,
    about = "Sensitivity analysis for test-negative designs: bounds and confidence bounds on the causal odds ratio"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-stratum odds ratio, vaccine efficacy, and sensitivity bounds.
    Analyze(AnalyzeArgs),
    /// Long-format CSV of bounds over a (gamma, xi) grid, plus the
    /// nullification contour where the upper bound crosses 1.
    Heatmap(HeatmapArgs),
    /// Confidence bounds from counts or a stratified table.
    Ci(CiArgs),
    /// Fit the multinomial-logit cell-probability model.
    Fit(FitArgs),
    /// Sensitivity band over a covariate grid from a fitted model.
    Band(BandArgs),
    /// Heterogeneity benchmarks (gamma-hat, xi-hat) per stratum pair.
    Calibrate(CalibrateArgs),
    /// Generate datasets from a config file.
    Simulate(SimulateArgs),
    /// Coverage study of the confidence-bound procedures.
    Coverage(CoverageArgs),
    /// Bound widths over the fixed-odds-ratio marginal grid.
    FixedOrScan(FixedOrScanArgs),
}

#[derive(Args)]
struct ParamArgs {
    /// Residual confounder mass bound, in [0,1].
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Confounding strength bound, >= 1; accepts `inf`.
    #[arg(long, default_value = "inf", value_parser = parse_inf_f64)]
    gamma: f64,
    /// Effect heterogeneity bound, >= 1; accepts `inf`.
    #[arg(long, default_value = "inf", value_parser = parse_inf_f64)]
    xi: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<SensitivityParams> {
        SensitivityParams::new(self.delta, self.gamma, self.xi)
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Stratified table file (CSV `stratum,z,y,count` or JSON).
    #[arg(long)]
    table: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    table: PathBuf,
    /// Stratum to analyze (defaults to the only stratum).
    #[arg(long)]
    stratum: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Comma-separated gamma grid, e.g. `1,2,3,4,5`.
    #[arg(long, default_value = "1,2,3,4,5")]
    gamma_grid: String,
    /// Comma-separated xi grid; `inf` allowed.
    #[arg(long, default_value = "1,2,3,4,5")]
    xi_grid: String,
    /// When set, also emit confidence limits at this level.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value = "N")]
    set_shape: SetShape,
    #[arg(long, default_value_t = 100_000)]
    mc_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CiArgs {
    /// Four counts `c00,c10,c01,c11` in canonical order.
    #[arg(long, conflicts_with = "table")]
    counts: Option<String>,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "N")]
    set_shape: SetShape,
    #[command(flatten)]
    params: ParamArgs,
    /// closed | opt | auto (closed form when the shape is rectangular and
    /// xi is infinite, optimization otherwise).
    #[arg(long, default_value = "auto")]
    method: String,
    /// Split the level across strata as 1-(1-alpha)^(1/K).
    #[arg(long, default_value_t = false)]
    simultaneous: bool,
    #[arg(long, default_value_t = 1_000_000)]
    mc_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Individual-level CSV `c1,...,cp,z,y`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BandArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    params: ParamArgs,
    /// box-hull | exact-set
    #[arg(long, default_value = "exact-set")]
    route: String,
    #[arg(long, default_value_t = 0.0)]
    grid_min: f64,
    #[arg(long, default_value_t = 1.0)]
    grid_max: f64,
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config; see `SimulateConfig`.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CoverageArgs {
    /// JSON config; see `ExperimentConfig`.
    #[arg(long)]
    config: PathBuf,
    /// Report CSV path; a `<out>.summary.json` sibling is also written.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FixedOrScanArgs {
    /// Target odds ratio shared by every table in the scan.
    #[arg(long)]
    or_target: f64,
    /// Comma-separated marginal grid used for both m1 and m2.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    grid: String,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Dataset generation request.
#[derive(Debug, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimulateConfig {
    /// Individual-level rows from the continuous-covariate process.
    Continuous {
        n: usize,
        seed: u64,
        /// Defaults to the experiment coefficients when omitted.
        beta: Option<covmodel::MnlCoefficients>,
    },
    /// One multinomial counts table.
    Table { pi: [f64; 4], n: u64, seed: u64 },
    /// One Dirichlet table (probabilities, no counts).
    Dirichlet { concentration: [f64; 4], seed: u64 },
}

/// Run the CLI against an argument vector; returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<String> = argv
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    configure_threads();
    let cli = match Cli::try_parse_from(raw.iter()) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version with special "errors".
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let started = Instant::now();
    let outcome = match cli.command {
        Command::Analyze(a) => cmd_analyze(a, &raw, started),
        Command::Heatmap(a) => cmd_heatmap(a, &raw, started),
        Command::Ci(a) => cmd_ci(a, &raw, started),
        Command::Fit(a) => cmd_fit(a, &raw, started),
        Command::Band(a) => cmd_band(a, &raw, started),
        Command::Calibrate(a) => cmd_calibrate(a, &raw, started),
        Command::Simulate(a) => cmd_simulate(a, &raw, started),
        Command::Coverage(a) => cmd_coverage(a, &raw, started),
        Command::FixedOrScan(a) => cmd_fixed_or_scan(a, &raw, started),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            classify_error(&e)
        }
    }
}

fn classify_error(e: &Error) -> i32 {
    match e {
        Error::InvalidTable(_)
        | Error::InvalidInput(_)
        | Error::InvalidParams(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::NonConverged { .. } => 4,
        _ => 3,
    }
}

fn configure_threads() {
    if let Ok(s) = std::env::var("TND_THREADS") {
        if let Ok(k) = s.parse::<usize>() {
            if k >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
        }
    }
}

fn emit_json<S: Serialize>(
    value: &S,
    out: &Option<PathBuf>,
    manifest: &mut RunManifest,
    started: Instant,
) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => {
            std::fs::write(path, &text)?;
            manifest.wall_time_ms = started.elapsed().as_millis();
            manifest.write_sibling(path)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn finish_csv(out: &Path, manifest: &mut RunManifest, started: Instant) -> Result<()> {
    manifest.wall_time_ms = started.elapsed().as_millis();
    manifest.write_sibling(out)
}

// ---------------------------------------------------------------- analyze

#[derive(Serialize)]
struct AnalyzeResult {
    stratum: String,
    counts: Option<[u64; 4]>,
    n: Option<u64>,
    or: f64,
    ve: f64,
    params: SensitivityParams,
    method: String,
    bounds: BoundsInterval,
    ve_bounds: VeInterval,
    converged: bool,
}

#[derive(Serialize)]
struct VeInterval {
    #[serde(with = "crate::json_inf")]
    lower: f64,
    #[serde(with = "crate::json_inf")]
    upper: f64,
}

impl VeInterval {
    fn from_bounds(b: &BoundsInterval) -> Self {
        VeInterval {
            lower: 1.0 - b.upper,
            upper: 1.0 - b.lower,
        }
    }
}

#[derive(Serialize)]
struct AnalyzeOutput {
    command: String,
    results: Vec<AnalyzeResult>,
}

fn cmd_analyze(args: AnalyzeArgs, raw: &[String], started: Instant) -> Result<i32> {
    let mut manifest = RunManifest::new("analyze", raw);
    manifest.seed = Some(args.seed);
    manifest.digest_input(&args.table)?;
    let params = args.params.params()?;
    let strata = io::read_stratified(&args.table)?;

    let mut results = Vec::new();
    let mut exit = 0;
    for s in strata {
        let or = s.table.observed_or()?;
        let (bounds, method, converged) = if params.xi.is_finite() && params.gamma.is_finite() {
            let cfg = SolverConfig {
                seed: args.seed,
                ..SolverConfig::default()
            };
            let r = qcqp::solve_bounds(&s.table, &params, &cfg)?;
            if !r.converged {
                exit = 4;
            }
            (r.interval, "qcqp".to_string(), r.converged)
        } else if params.gamma.is_finite() {
            (
                sharp::bounds_delta_gamma(&s.table, params.delta, params.gamma)?,
                "closed-form".to_string(),
                true,
            )
        } else {
            (
                sharp::bounds_delta(&s.table, params.delta)?,
                "closed-form".to_string(),
                true,
            )
        };
        results.push(AnalyzeResult {
            stratum: s.name,
            counts: s.table.counts().copied(),
            n: s.table.n(),
            or,
            ve: 1.0 - or,
            params,
            method,
            ve_bounds: VeInterval::from_bounds(&bounds),
            bounds,
            converged,
        });
    }
    let output = AnalyzeOutput {
        command: "analyze".into(),
        results,
    };
    emit_json(&output, &args.out, &mut manifest, started)?;
    Ok(exit)
}

// ---------------------------------------------------------------- heatmap

fn parse_grid(s: &str, allow_inf: bool) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for tok in s.split(',') {
        let v = parse_inf_f64(tok).map_err(Error::InvalidInput)?;
        if v.is_infinite() && !allow_inf {
            return Err(Error::InvalidInput(format!(
                "infinite value not allowed in grid {s:?}"
            )));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(values)
}

fn single_stratum(strata: Vec<Stratum>, wanted: &Option<String>) -> Result<Stratum> {
    match wanted {
        Some(name) => strata
            .into_iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("stratum {name:?} not found"))),
        None => {
            if strata.len() == 1 {
                Ok(strata.into_iter().next().unwrap())
            } else {
                Err(Error::InvalidInput(format!(
                    "table has {} strata; pick one with --stratum",
                    strata.len()
                )))
            }
        }
    }
}

fn cmd_heatmap(args: HeatmapArgs, raw: &[String], started: Instant) -> Result<i32> {
    use rayon::prelude::*;

    let mut manifest = RunManifest::new("heatmap", raw);
    manifest.seed = Some(args.seed);
    manifest.digest_input(&args.table)?;
    let stratum = single_stratum(io::read_stratified(&args.table)?, &args.stratum)?;
    let gammas = parse_grid(&args.gamma_grid, true)?;
    let xis = parse_grid(&args.xi_grid, true)?;
    if let Some(alpha) = args.alpha {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha={alpha} not in (0,1)")));
        }
    }

    let mut cells: Vec<(f64, f64)> = Vec::new();
    for &g in &gammas {
        for &x in &xis {
            cells.push((g, x));
        }
    }
    let counts = stratum.table.counts().copied();
    let rows: Result<Vec<String>> = cells
        .par_iter()
        .map(|&(gamma, xi)| -> Result<String> {
            let params = SensitivityParams::new(args.delta, gamma, xi)?;
            let cfg = SolverConfig {
                seed: crate::derive_seed(args.seed, (gamma.to_bits() ^ xi.to_bits()) as u64),
                ..SolverConfig::default()
            };
            let bounds = if params.gamma.is_finite() && params.xi.is_finite() {
                qcqp::solve_bounds(&stratum.table, &params, &cfg)?.interval
            } else if params.gamma.is_finite() {
                sharp::bounds_delta_gamma(&stratum.table, params.delta, params.gamma)?
            } else {
                sharp::bounds_delta(&stratum.table, params.delta)?
            };
            let mut row = format!(
                "{},{},{},{}",
                format_inf_f64(gamma),
                format_inf_f64(xi),
                format_inf_f64(bounds.lower),
                format_inf_f64(bounds.upper)
            );
            if let Some(alpha) = args.alpha {
                let counts = counts.ok_or_else(|| {
                    Error::InvalidInput("confidence limits need a counts-backed table".into())
                })?;
                let ci = confidence::ci_bounds_opt(
                    counts,
                    alpha,
                    &params,
                    args.set_shape,
                    args.mc_draws,
                    &cfg,
                )?;
                row.push_str(&format!(
                    ",{},{}",
                    format_inf_f64(ci.interval.lower),
                    format_inf_f64(ci.interval.upper)
                ));
            }
            Ok(row)
        })
        .collect();

    let mut text = String::from(if args.alpha.is_some() {
        "gamma,xi,lower,upper,ci_lower,ci_upper\n"
    } else {
        "gamma,xi,lower,upper\n"
    });
    for row in rows? {
        text.push_str(&row);
        text.push('\n');
    }
    std::fs::write(&args.out, &text)?;

    // Nullification contour: for each xi, the smallest gamma in the scanned
    // range at which the upper bound reaches 1.
    let gamma_max = gammas.iter().cloned().fold(1.0_f64, f64::max);
    let contour: Result<Vec<String>> = xis
        .par_iter()
        .map(|&xi| -> Result<String> {
            let gam = nullification_gamma(&stratum.table, args.delta, xi, gamma_max, args.seed)?;
            Ok(match gam {
                Some(g) => format!("{},{g:.6}", format_inf_f64(xi)),
                None => format!("{},", format_inf_f64(xi)),
            })
        })
        .collect();
    let contour_path = contour_sibling(&args.out);
    let mut ctext = String::from("xi,gamma_null\n");
    for row in contour? {
        ctext.push_str(&row);
        ctext.push('\n');
    }
    std::fs::write(&contour_path, &ctext)?;

    finish_csv(&args.out, &mut manifest, started)?;
    Ok(0)
}

fn contour_sibling(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.contour.csv"))
}

fn upper_bound_at(
    table: &ObservedTable,
    delta: f64,
    gamma: f64,
    xi: f64,
    seed: u64,
) -> Result<f64> {
    if gamma.is_finite() && xi.is_finite() && gamma > 1.0 {
        let params = SensitivityParams::new(delta, gamma, xi)?;
        let cfg = SolverConfig {
            seed,
            ..SolverConfig::default()
        };
        Ok(qcqp::solve_bounds(table, &params, &cfg)?.interval.upper)
    } else if gamma.is_finite() {
        Ok(sharp::bounds_delta_gamma(table, delta, gamma)?.upper)
    } else {
        Ok(sharp::bounds_delta(table, delta)?.upper)
    }
}

/// Smallest gamma in [1, gamma_max] whose upper bound crosses 1, by
/// bisection; the upper bound is nondecreasing in gamma.
fn nullification_gamma(
    table: &ObservedTable,
    delta: f64,
    xi: f64,
    gamma_max: f64,
    seed: u64,
) -> Result<Option<f64>> {
    let at_min = upper_bound_at(table, delta, 1.0, xi, seed)?;
    if at_min >= 1.0 {
        return Ok(Some(1.0));
    }
    if !gamma_max.is_finite() {
        return Ok(None);
    }
    let at_max = upper_bound_at(table, delta, gamma_max, xi, seed)?;
    if at_max < 1.0 {
        return Ok(None);
    }
    let mut lo = 1.0;
    let mut hi = gamma_max;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if upper_bound_at(table, delta, mid, xi, seed)? >= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

// ---------------------------------------------------------------- ci

#[derive(Serialize)]
struct CiResult {
    stratum: Option<String>,
    counts: [u64; 4],
    n: u64,
    alpha: f64,
    effective_alpha: f64,
    shape: SetShape,
    params: SensitivityParams,
    method: String,
    interval: BoundsInterval,
    ve_interval: VeInterval,
    converged: bool,
}

#[derive(Serialize)]
struct CiOutput {
    command: String,
    results: Vec<CiResult>,
}

fn parse_counts(s: &str) -> Result<[u64; 4]> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::InvalidInput(format!(
            "expected four comma-separated counts, got {s:?}"
        )));
    }
    let mut counts = [0u64; 4];
    for (i, p) in parts.iter().enumerate() {
        counts[i] = p.trim().parse().map_err(|e| {
            Error::InvalidInput(format!("bad count {p:?}: {e}"))
        })?;
    }
    Ok(counts)
}

fn cmd_ci(args: CiArgs, raw: &[String], started: Instant) -> Result<i32> {
    let mut manifest = RunManifest::new("ci", raw);
    manifest.seed = Some(args.seed);
    let params = args.params.params()?;

    let inputs: Vec<(Option<String>, [u64; 4])> = match (&args.counts, &args.table) {
        (Some(s), None) => vec![(None, parse_counts(s)?)],
        (None, Some(path)) => {
            manifest.digest_input(path)?;
            io::read_stratified(path)?
                .into_iter()
                .map(|s| {
                    let counts = *s.table.counts().expect("stratified input is counts");
                    (Some(s.name), counts)
                })
                .collect()
        }
        _ => {
            return Err(Error::InvalidInput(
                "pass exactly one of --counts or --table".into(),
            ))
        }
    };

    let effective_alpha = if args.simultaneous && inputs.len() > 1 {
        confidence::simultaneous_level(args.alpha, inputs.len())?
    } else {
        args.alpha
    };

    let closed_ok = args.set_shape != SetShape::Q && !params.xi.is_finite();
    let method = match args.method.as_str() {
        "auto" => {
            if closed_ok {
                "closed"
            } else {
                "opt"
            }
        }
        "closed" => "closed",
        "opt" => "opt",
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown method {other:?}; expected auto, closed or opt"
            )))
        }
    };

    let mut results = Vec::new();
    let mut exit = 0;
    for (idx, (stratum, counts)) in inputs.into_iter().enumerate() {
        let n = counts.iter().sum();
        let seed = crate::derive_seed(args.seed, idx as u64);
        let (interval, converged) = match method {
            "closed" => {
                let r = confidence::ci_bounds_closed(
                    counts,
                    effective_alpha,
                    params.delta,
                    params.gamma,
                    args.set_shape,
                    args.mc_draws,
                    seed,
                )?;
                (r.interval, true)
            }
            _ => {
                let cfg = SolverConfig {
                    seed,
                    ..SolverConfig::default()
                };
                let r = confidence::ci_bounds_opt(
                    counts,
                    effective_alpha,
                    &params,
                    args.set_shape,
                    args.mc_draws,
                    &cfg,
                )?;
                if !r.converged {
                    exit = 4;
                }
                (r.interval, r.converged)
            }
        };
        results.push(CiResult {
            stratum,
            counts,
            n,
            alpha: args.alpha,
            effective_alpha,
            shape: args.set_shape,
            params,
            method: method.to_string(),
            ve_interval: VeInterval::from_bounds(&interval),
            interval,
            converged,
        });
    }
    let output = CiOutput {
        command: "ci".into(),
        results,
    };
    emit_json(&output, &args.out, &mut manifest, started)?;
    Ok(exit)
}

// ---------------------------------------------------------------- fit/band

#[derive(Serialize)]
struct FitOutput {
    command: String,
    fit: covmodel::ModelFit,
}

fn cmd_fit(args: FitArgs, raw: &[String], started: Instant) -> Result<i32> {
    let mut manifest = RunManifest::new("fit", raw);
    manifest.digest_input(&args.data)?;
    let rows = io::read_individual_csv(&args.data)?;
    match covmodel::fit_mnl(&rows, args.ridge) {
        Ok(fit) => {
            let output = FitOutput {
                command: "fit".into(),
                fit,
            };
            emit_json(&output, &args.out, &mut manifest, started)?;
            Ok(0)
        }
        Err(Error::NonConverged { last_fit, .. }) => {
            // Still write the last iterate, flagged, and exit 4.
            let output = FitOutput {
                command: "fit".into(),
                fit: *last_fit,
            };
            emit_json(&output, &args.out, &mut manifest, started)?;
            Ok(4)
        }
        Err(e) => Err(e),
    }
}

fn cmd_band(args: BandArgs, raw: &[String], started: Instant) -> Result<i32> {
    let mut manifest = RunManifest::new("band", raw);
    manifest.seed = Some(args.seed);
    manifest.digest_input(&args.data)?;
    let params = args.params.params()?;
    let route = match args.route.as_str() {
        "box-hull" => BandRoute::BoxHull,
        "exact-set" => BandRoute::ExactSet,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown route {other:?}; expected box-hull or exact-set"
            )))
        }
    };
    if args.grid_points < 1 || args.grid_max < args.grid_min {
        return Err(Error::InvalidInput("bad grid".into()));
    }
    let rows = io::read_individual_csv(&args.data)?;
    let fit = covmodel::fit_mnl(&rows, args.ridge)?;
    let grid: Vec<Vec<f64>> = (0..args.grid_points)
        .map(|i| {
            let t = if args.grid_points == 1 {
                0.0
            } else {
                i as f64 / (args.grid_points - 1) as f64
            };
            vec![args.grid_min + t * (args.grid_max - args.grid_min)]
        })
        .collect();
    let cfg = SolverConfig {
        seed: args.seed,
        ..SolverConfig::default()
    };
    let band = covmodel::band_bounds(&fit, &grid, args.alpha, &params, route, &cfg)?;
    io::write_band_csv(&args.out, &band)?;
    finish_csv(&args.out, &mut manifest, started)?;
    Ok(0)
}

// ---------------------------------------------------------------- calibrate

fn cmd_calibrate(args: CalibrateArgs, raw: &[String], started: Instant) -> Result<i32> {
    let mut manifest = RunManifest::new("calibrate", raw);
    manifest.digest_input(&args.table)?;
    let strata = io::read_stratified(&args.table)?;
    if strata.len() < 2 {
        return Err(Error::InvalidInput(
            "calibration needs at least two strata".into(),
        ));
    }
    let mut text = String::from("stratum_a,stratum_b,gamma_hat,xi_hat\n");
    for i in 0..strata.len() {
        for j in (i + 1)..strata.len() {
            let (g, x) = sharp::calibrate_benchmarks(&strata[i].table, &strata[j].table)?;
            text.push_str(&format!(
                "{},{},{g},{x}\n",
                strata[i].name, strata[j].name
            ));
        }
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, &text)?;
            finish_csv(path, &mut manifest, started)?;
        }
        None => print!("{text}"),
    }
    Ok(0)
}

// ---------------------------------------------------------------- simulate

fn cmd_simulate(args: SimulateArgs, raw: &[String], started: Instant) -> Result<i32> {
    let mut manifest = RunManifest::new("simulate", raw);
    manifest.digest_input(&args.config)?;
    let text = std::fs::read_to_string(&args.config)?;
    let config: SimulateConfig = serde_json::from_str(&text)?;
    match config {
        SimulateConfig::Continuous { n, seed, beta } => {
            manifest.seed = Some(seed);
            let beta = beta.unwrap_or_else(simlab::experiment_beta);
            let data = simlab::simulate_continuous(&beta, n, seed);
            let rows = covmodel::univariate_rows(&data);
            io::write_individual_csv(&args.out, &rows)?;
        }
        SimulateConfig::Table { pi, n, seed } => {
            manifest.seed = Some(seed);
            let truth = ObservedTable::from_probs(pi)?;
            let sample = simlab::sample_multinomial_table(&truth, n, seed);
            io::write_stratified_csv(
                &args.out,
                &[Stratum {
                    name: "sample".into(),
                    table: sample,
                }],
            )?;
        }
        SimulateConfig::Dirichlet { concentration, seed } => {
            manifest.seed = Some(seed);
            let t = simlab::sample_dirichlet_pi(concentration, seed)?;
            let mut text = String::from("p00,p10,p01,p11\n");
            let c = t.cells();
            text.push_str(&format!("{},{},{},{}\n", c[0], c[1], c[2], c[3]));
            std::fs::write(&args.out, &text)?;
        }
    }
    finish_csv(&args.out, &mut manifest, started)?;
    Ok(0)
}

// ---------------------------------------------------------------- coverage

#[derive(Serialize)]
struct CoverageSummary {
    command: String,
    config: serde_json::Value,
    per_shape: Vec<simlab::ShapeSummary>,
}

fn cmd_coverage(args: CoverageArgs, raw: &[String], started: Instant) -> Result<i32> {
    let mut manifest = RunManifest::new("coverage", raw);
    manifest.digest_input(&args.config)?;
    let text = std::fs::read_to_string(&args.config)?;
    let config: ExperimentConfig = serde_json::from_str(&text)?;
    manifest.seed = Some(config.seed);
    let report = simlab::coverage_study(&config)?;
    io::write_coverage_csv(&args.out, &report)?;

    let summary = CoverageSummary {
        command: "coverage".into(),
        config: serde_json::from_str(&text)?,
        per_shape: report.per_shape.clone(),
    };
    let summary_path = args.out.with_file_name(format!(
        "{}.summary.json",
        args.out.file_name().unwrap_or_default().to_string_lossy()
    ));
    let mut stext = serde_json::to_string_pretty(&summary)?;
    stext.push('\n');
    std::fs::write(&summary_path, stext)?;
    finish_csv(&args.out, &mut manifest, started)?;
    Ok(0)
}

// ---------------------------------------------------------------- fixed-or

fn cmd_fixed_or_scan(args: FixedOrScanArgs, raw: &[String], started: Instant) -> Result<i32> {
    use rayon::prelude::*;

    let mut manifest = RunManifest::new("fixed-or-scan", raw);
    manifest.seed = Some(args.seed);
    let params = args.params.params()?;
    let grid = parse_grid(&args.grid, false)?;
    let mut cells = Vec::new();
    for &m1 in &grid {
        for &m2 in &grid {
            cells.push((m1, m2));
        }
    }
    let rows: Result<Vec<String>> = cells
        .par_iter()
        .map(|&(m1, m2)| -> Result<String> {
            let table = simlab::fixed_or_table(args.or_target, m1, m2)?;
            let cfg = SolverConfig {
                seed: crate::derive_seed(args.seed, (m1.to_bits() ^ m2.to_bits()) as u64),
                ..SolverConfig::default()
            };
            let bounds = if params.gamma.is_finite() && params.xi.is_finite() {
                qcqp::solve_bounds(&table, &params, &cfg)?.interval
            } else if params.gamma.is_finite() {
                sharp::bounds_delta_gamma(&table, params.delta, params.gamma)?
            } else {
                sharp::bounds_delta(&table, params.delta)?
            };
            Ok(format!(
                "{m1},{m2},{},{},{}",
                format_inf_f64(bounds.lower),
                format_inf_f64(bounds.upper),
                format_inf_f64(bounds.width_log())
            ))
        })
        .collect();
    let mut text = String::from("m1,m2,lower,upper,log_width\n");
    for row in rows? {
        text.push_str(&row);
        text.push('\n');
    }
    std::fs::write(&args.out, &text)?;
    finish_csv(&args.out, &mut manifest, started)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_parse() {
        assert_eq!(parse_counts("1,2,3,4").unwrap(), [1, 2, 3, 4]);
        assert!(parse_counts("1,2,3").is_err());
        assert!(parse_counts("1,2,3,x").is_err());
    }

    #[test]
    fn grids_parse_sorted() {
        let g = parse_grid("5,1,3", true).unwrap();
        assert_eq!(g, vec![1.0, 3.0, 5.0]);
        let g = parse_grid("2,inf", true).unwrap();
        assert!(g[1].is_infinite());
        assert!(parse_grid("2,inf", false).is_err());
        assert!(parse_grid("", true).is_err());
    }

    #[test]
    fn manifest_sibling_name() {
        let p = manifest_path(Path::new("/tmp/out.json"));
        assert_eq!(p, Path::new("/tmp/out.json.manifest.json"));
    }
}
