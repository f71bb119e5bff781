//! Command implementations behind the `signsteer` binary.
//!
//! Every command returns `Ok` on success, [`CliError::Config`] for anything
//! wrong with the inputs (exit code 2) and [`CliError::Runtime`] when a run
//! fails or misses its certificate (exit code 1).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod output;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use signsteer::fixtures;
use signsteer::profile::ProfileSpec;
use signsteer::scenario::{FieldSource, Prepared, Scenario};
use signsteer::solver::{self, ControlSchedule, SeriesRecorder, SolverConfig};
use signsteer::steering::{self, SteeringPlan, SteeringReport};
use signsteer::strategy::{self, RunTrace};
use signsteer::tracker::{self, extract_pattern, TrackConfig, DEFAULT_NOISE_REL};
use signsteer::{Grid, GridFunction, Nonlinearity};

use crate::output::{Audits, Summary};

#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn config(e: impl Into<anyhow::Error>) -> Self {
        CliError::Config(e.into())
    }

    fn runtime(e: impl Into<anyhow::Error>) -> Self {
        CliError::Runtime(e.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e:#}"),
            CliError::Runtime(e) => write!(f, "run failed: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(anyhow::anyhow!("creating {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::runtime(anyhow::anyhow!("writing {}: {e}", path.display())))?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> CliResult<PathBuf> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    write_file(dir, name, &(text + "\n"))
}

pub fn load_scenario(path: &Path) -> CliResult<(Scenario, Prepared)> {
    let sc = Scenario::load(path).map_err(CliError::config)?;
    let prepared = sc.prepare().map_err(CliError::config)?;
    Ok((sc, prepared))
}

fn out_dir(out: Option<&Path>, sc: &Scenario) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| sc.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&sc.name))
}

#[derive(Debug, Clone, Serialize)]
struct FailureReport<'a> {
    scenario: &'a str,
    seed: u64,
    error: String,
    rounds: usize,
    last_zeros: Option<&'a [f64]>,
}

/// Result of a strategy run together with its audits.
#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub summary: Summary,
    pub trace: RunTrace,
    pub dir: PathBuf,
}

/// Runs the strategy on a prepared scenario and writes `trace.csv`,
/// `summary.json` and `curves.dat` into `dir`.
pub fn simulate_prepared(
    sc: &Scenario,
    prepared: &Prepared,
    dir: &Path,
    seed: u64,
) -> CliResult<SimulateOutcome> {
    let cfg = &sc.strategy;
    let out = match strategy::run(&prepared.initial, &prepared.target, cfg, &sc.nonlinearity) {
        Ok(out) => out,
        Err(failure) => {
            write_file(dir, "trace.csv", &failure.trace.to_csv())?;
            let report = FailureReport {
                scenario: &sc.name,
                seed,
                error: failure.error.to_string(),
                rounds: failure.trace.rounds.len(),
                last_zeros: failure.trace.rows.last().map(|r| r.zeros.as_slice()),
            };
            write_json(dir, "failure.json", &report)?;
            return Err(CliError::runtime(failure));
        }
    };
    let trace = out.trace;
    let n = trace.n;
    let fin = trace.final_record.clone();
    let final_l2_error = out.state.l2_distance(&prepared.target);
    let audits = Audits {
        decay: strategy::decay_audit(&trace, cfg, trace.rho0_star),
        inactive_monotone: strategy::inactive_monotone(&trace),
        sign_count_constant: trace.rows.iter().all(|r| r.zeros.len() == n),
        persistence_excess: strategy::persistence_excess(&trace),
        final_within_eta: final_l2_error <= cfg.eta,
    };
    let passed = audits.passed();
    let summary = Summary {
        scenario: sc.name.clone(),
        seed,
        n_cells: prepared.grid.n_cells(),
        epsilon: cfg.epsilon,
        eta: cfg.eta,
        initial_zeros: trace.initial_zeros.clone(),
        targets: trace.targets.clone(),
        final_zeros: fin.as_ref().map_or_else(Vec::new, |f| f.zeros.clone()),
        final_l2_error,
        total_time: fin.as_ref().map_or(0.0, |f| f.time),
        rounds: trace.rounds.len(),
        rho0_star: trace.rho0_star,
        m0_star: trace.m0_star,
        eps_eff: trace.eps_eff,
        reach: trace.reach,
        pilot: trace.pilot.clone(),
        final_record: fin,
        audits,
        passed,
        round_records: output::round_summaries(&trace),
    };
    write_file(dir, "trace.csv", &trace.to_csv())?;
    write_file(dir, "curves.dat", &output::curves_dat(&trace))?;
    write_json(dir, "summary.json", &summary)?;
    if !passed {
        return Err(CliError::runtime(anyhow::anyhow!(
            "audits failed (final L² error {final_l2_error:.3e}, eta {}); see {}",
            cfg.eta,
            dir.join("summary.json").display()
        )));
    }
    Ok(SimulateOutcome {
        summary,
        trace,
        dir: dir.to_path_buf(),
    })
}

pub fn cmd_simulate(config: &Path, out: Option<&Path>, seed: u64) -> CliResult<SimulateOutcome> {
    let (sc, prepared) = load_scenario(config)?;
    let dir = out_dir(out, &sc);
    simulate_prepared(&sc, &prepared, &dir, seed)
}

/// Smooth Dirichlet perturbation `Σ c_j sin(jπx)` scaled to L² norm `amplitude`.
pub fn seeded_perturbation(
    grid: Grid,
    amplitude: f64,
    modes: usize,
    rng: &mut impl Rng,
) -> GridFunction {
    let coeffs: Vec<f64> = (1..=modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p = GridFunction::dirichlet_from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * ((j + 1) as f64 * std::f64::consts::PI * x).sin())
            .sum()
    });
    let norm = p.l2_norm();
    if norm == 0.0 {
        p
    } else {
        &p * (amplitude / norm)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SteerOutput {
    pub seed: u64,
    pub perturbation: f64,
    pub k: f64,
    pub m: f64,
    pub t1: f64,
    pub t_contract: f64,
    pub psi_max: f64,
    pub rho_cut: f64,
    pub cut_error: f64,
    pub report: SteeringReport,
}

impl SteerOutput {
    fn new(seed: u64, perturbation: f64, plan: &SteeringPlan, report: SteeringReport) -> Self {
        Self {
            seed,
            perturbation,
            k: plan.k,
            m: plan.m,
            t1: plan.t1,
            t_contract: plan.t_contract,
            psi_max: plan.psi_max,
            rho_cut: plan.rho_cut,
            cut_error: plan.cut_error,
            report,
        }
    }
}

/// Steers the scenario's initial state onto its target once, starting from
/// `initial + r_in` with a seeded perturbation of norm `perturbation`.
pub fn cmd_steer(
    config: &Path,
    out: Option<&Path>,
    seed: u64,
    perturbation: f64,
) -> CliResult<SteerOutput> {
    if !(perturbation >= 0.0) || !perturbation.is_finite() {
        return Err(CliError::config(anyhow::anyhow!(
            "perturbation {perturbation} must be finite and non-negative"
        )));
    }
    let (sc, p) = load_scenario(config)?;
    p.initial_pattern
        .matches(&p.target_pattern, 2.0 * p.grid.h())
        .map_err(|e| {
            CliError::config(anyhow::anyhow!("steering keeps the zeros fixed, but {e}"))
        })?;
    let dir = out_dir(out, &sc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_in = seeded_perturbation(p.grid, perturbation, 8, &mut rng);
    let start = &p.initial + &r_in;
    let cfg = &sc.strategy.steering;
    let (state, report, plan) = steering::steer(
        &start,
        &p.initial,
        &p.target,
        sc.strategy.eta,
        &sc.nonlinearity,
        r_in.l2_norm(),
        cfg,
    )
    .map_err(CliError::runtime)?;
    let result = SteerOutput::new(seed, perturbation, &plan, report);
    write_file(&dir, "state.csv", &state.to_csv())?;
    write_json(&dir, "steer.json", &result)?;
    if result.report.slack < 0.0 {
        return Err(CliError::runtime(anyhow::anyhow!(
            "negative slack {}",
            result.report.slack
        )));
    }
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffuseOutput {
    pub horizon: f64,
    pub steps: usize,
    pub initial_l2: f64,
    pub final_l2: f64,
    pub final_zeros: Vec<f64>,
}

/// Uncontrolled evolution of the scenario's initial state up to `horizon`.
pub fn cmd_diffuse(
    config: &Path,
    out: Option<&Path>,
    horizon: f64,
    dt: Option<f64>,
) -> CliResult<DiffuseOutput> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(CliError::config(anyhow::anyhow!(
            "horizon {horizon} must be positive"
        )));
    }
    let (sc, p) = load_scenario(config)?;
    let dir = out_dir(out, &sc);
    let mut cfg = sc.strategy.steering.solver;
    if let Some(dt) = dt {
        cfg = SolverConfig { dt_max: dt, ..cfg };
    }
    cfg.validate().map_err(CliError::config)?;
    let schedule = ControlSchedule::free(p.grid, 0.0, horizon).map_err(CliError::config)?;
    let mut rec = SeriesRecorder::new()
        .with("l2", GridFunction::l2_norm)
        .with("sup", GridFunction::sup_norm)
        .with("h1", GridFunction::h1_seminorm);
    let sol = solver::solve(
        &p.initial,
        &schedule,
        &sc.nonlinearity,
        &cfg,
        &mut [&mut rec],
    )
    .map_err(CliError::runtime)?;
    let final_zeros = extract_pattern(&sol.state, DEFAULT_NOISE_REL * sol.state.sup_norm())
        .map(|pat| pat.zeros().to_vec())
        .unwrap_or_default();
    write_file(&dir, "diffuse.csv", &rec.into_series().to_csv())?;
    write_file(&dir, "state.csv", &sol.state.to_csv())?;
    let result = DiffuseOutput {
        horizon,
        steps: sol.steps,
        initial_l2: p.initial.l2_norm(),
        final_l2: sol.state.l2_norm(),
        final_zeros,
    };
    write_json(&dir, "diffuse.json", &result)?;
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileOutput {
    pub spec: ProfileSpec,
    pub sup: f64,
    pub sup_d1: f64,
    pub sup_d2: f64,
    pub path: PathBuf,
}

/// Samples the profile described by `source` and writes `profile.csv` and `profile.json`.
pub fn cmd_build_profile(
    source: &FieldSource,
    n_cells: usize,
    out: &Path,
) -> CliResult<ProfileOutput> {
    let grid = Grid::new(n_cells).map_err(CliError::config)?;
    let spec = source
        .profile_spec("profile")
        .map_err(CliError::config)?
        .ok_or_else(|| {
            CliError::config(anyhow::anyhow!("build-profile needs zeros, not a fixture"))
        })?;
    let values = spec.build(grid).map_err(CliError::config)?;
    let bounds = spec.uniform_bound_check(grid).map_err(CliError::config)?;
    let path = write_file(out, "profile.csv", &values.to_csv())?;
    let result = ProfileOutput {
        spec,
        sup: bounds.sup,
        sup_d1: bounds.sup_d1,
        sup_d2: bounds.sup_d2,
        path,
    };
    write_json(out, "profile.json", &result)?;
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackOutput {
    pub fixture: String,
    pub horizon: f64,
    pub final_zeros: Vec<f64>,
    /// Largest distance to the closed-form curve, when one is known.
    pub max_gap: Option<f64>,
}

/// Tracks the zeros of a fixture under pure diffusion. For `two-mode` the
/// closed-form curve is written next to the numerical one.
pub fn cmd_track(
    fixture: &str,
    n_cells: usize,
    horizon: Option<f64>,
    dt: f64,
    out: &Path,
) -> CliResult<TrackOutput> {
    let grid = Grid::new(n_cells).map_err(CliError::config)?;
    let u0 = fixtures::by_name(fixture, grid)
        .ok_or_else(|| CliError::config(anyhow::anyhow!("unknown fixture `{fixture}`")))?;
    let closed_form = fixture == "two-mode";
    let horizon = horizon.unwrap_or(if closed_form {
        fixtures::two_mode_window()
    } else {
        0.01
    });
    if !(horizon > 0.0) || !(dt > 0.0) {
        return Err(CliError::config(anyhow::anyhow!(
            "horizon and dt must be positive"
        )));
    }
    let n = extract_pattern(&u0, DEFAULT_NOISE_REL * u0.sup_norm())
        .map_err(CliError::config)?
        .len();
    let cfg = TrackConfig {
        solver: SolverConfig::with_dt_max(dt),
        ..TrackConfig::default()
    };
    let outcome = tracker::track_during_solve(
        &u0,
        0.0,
        horizon,
        &Nonlinearity::Zero,
        None,
        &vec![true; n],
        &cfg,
    )
    .map_err(CliError::runtime)?;
    let trace = &outcome.trace;
    write_file(out, "curves.csv", &trace.to_csv())?;
    let mut max_gap = None;
    if closed_form {
        let mut text = String::from("t,xi_numeric,xi_exact\n");
        let mut worst: f64 = 0.0;
        for (t, pos) in trace.times.iter().zip(&trace.positions) {
            let exact = fixtures::two_mode_zero(*t);
            worst = worst.max((pos[0] - exact).abs());
            text.push_str(&format!("{t:.16e},{:.16e},{exact:.16e}\n", pos[0]));
        }
        write_file(out, "overlay.csv", &text)?;
        max_gap = Some(worst);
    }
    let result = TrackOutput {
        fixture: fixture.to_owned(),
        horizon,
        final_zeros: trace.last_positions().to_vec(),
        max_gap,
    };
    write_json(out, "track.json", &result)?;
    Ok(result)
}

/// Axes of a parameter sweep; empty axes keep the base value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepAxes {
    pub n_cells: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub index: usize,
    pub n_cells: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub ok: bool,
    pub final_l2_error: f64,
    pub max_zero_error: f64,
    pub rounds: usize,
    pub total_time: f64,
    pub error: String,
}

pub const SWEEP_HEADER: &str =
    "cell,n_cells,epsilon,eta,ok,final_l2_error,max_zero_error,rounds,total_time,error";

impl SweepCell {
    fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{},{:.16e},{:.16e},{},{:.16e},{}",
            self.index,
            self.n_cells,
            self.epsilon,
            self.eta,
            self.ok,
            self.final_l2_error,
            self.max_zero_error,
            self.rounds,
            self.total_time,
            self.error.replace([',', '\n'], ";")
        )
    }
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for c in cells {
        out.push_str(&c.csv_row());
        out.push('\n');
    }
    out
}

/// Runs every combination of the axes concurrently, each in `out/cell_<i>`,
/// and aggregates the results into `out/sweep.csv`.
pub fn cmd_sweep(
    config: &Path,
    out: Option<&Path>,
    seed: u64,
    axes: &SweepAxes,
) -> CliResult<Vec<SweepCell>> {
    let base = Scenario::load(config).map_err(CliError::config)?;
    let dir = out_dir(out, &base);
    let pick = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    if axes.n_cells.is_empty() && axes.epsilon.is_empty() && axes.eta.is_empty() {
        return Err(CliError::config(anyhow::anyhow!(
            "sweep grid is empty; give at least one axis"
        )));
    }
    let ns = if axes.n_cells.is_empty() {
        vec![base.grid.n_cells]
    } else {
        axes.n_cells.clone()
    };
    let mut scenarios = Vec::new();
    for &n in &ns {
        for &eps in &pick(&axes.epsilon, base.strategy.epsilon) {
            for &eta in &pick(&axes.eta, base.strategy.eta) {
                let mut sc = base.clone();
                sc.grid.n_cells = n;
                sc.strategy.epsilon = eps;
                sc.strategy.eta = eta;
                scenarios.push(sc);
            }
        }
    }
    let cells: Vec<SweepCell> = scenarios
        .par_iter()
        .enumerate()
        .map(|(index, sc)| {
            let mut cell = SweepCell {
                index,
                n_cells: sc.grid.n_cells,
                epsilon: sc.strategy.epsilon,
                eta: sc.strategy.eta,
                ok: false,
                final_l2_error: f64::NAN,
                max_zero_error: f64::NAN,
                rounds: 0,
                total_time: f64::NAN,
                error: String::new(),
            };
            let result = sc
                .prepare()
                .map_err(CliError::config)
                .and_then(|p| simulate_prepared(sc, &p, &dir.join(format!("cell_{index}")), seed));
            match result {
                Ok(o) => {
                    let s = &o.summary;
                    cell.ok = true;
                    cell.final_l2_error = s.final_l2_error;
                    cell.max_zero_error = s
                        .final_zeros
                        .iter()
                        .zip(&s.targets)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    cell.rounds = s.rounds;
                    cell.total_time = s.total_time;
                }
                Err(e) => cell.error = e.to_string(),
            }
            cell
        })
        .collect();
    write_file(&dir, "sweep.csv", &sweep_csv(&cells))?;
    if let Some(bad) = cells.iter().find(|c| !c.ok) {
        return Err(CliError::runtime(anyhow::anyhow!(
            "cell {} failed: {}",
            bad.index,
            bad.error
        )));
    }
    Ok(cells)
}
