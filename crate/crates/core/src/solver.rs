//! Time integration of `u_t = u_xx + v(x,t) u + f(u)` on (0,1) with `u(0) = u(1) = 0`.
//!
//! Crank–Nicolson in time. Diffusion and the bilinear term `v u` enter the
//! implicit tridiagonal system; the reaction `f(u)` uses the trapezoidal rule
//! resolved by a fixed number of Picard sweeps. The control is piecewise
//! static, so the matrix is factored once per schedule piece.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::grid::{Grid, GridFunction};
use crate::nonlinearity::Nonlinearity;

/// One static piece of a bilinear control: `v(x,t) = coeff(x)` on `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPiece {
    pub t_start: f64,
    pub t_end: f64,
    pub coeff: GridFunction,
    /// Optional step cap for this piece, tighter than the solver default.
    pub dt_max: Option<f64>,
}

impl ControlPiece {
    pub fn new(t_start: f64, t_end: f64, coeff: GridFunction) -> Self {
        Self {
            t_start,
            t_end,
            coeff,
            dt_max: None,
        }
    }

    pub fn with_dt_max(mut self, dt_max: f64) -> Self {
        self.dt_max = Some(dt_max);
        self
    }
}

/// Piecewise-static bilinear control.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    pieces: Vec<ControlPiece>,
}

impl ControlSchedule {
    pub fn new(pieces: Vec<ControlPiece>) -> Result<Self, SolverError> {
        if pieces.is_empty() {
            return Err(SolverError::EmptySchedule);
        }
        for (index, p) in pieces.iter().enumerate() {
            if !(p.t_end >= p.t_start) {
                return Err(SolverError::ReversedPiece {
                    index,
                    start: p.t_start,
                    end: p.t_end,
                });
            }
            if !p.coeff.is_finite() {
                return Err(SolverError::UnboundedCoefficient { index });
            }
            if index > 0 {
                let prev_end = pieces[index - 1].t_end;
                if p.t_start != prev_end {
                    return Err(SolverError::NonContiguous {
                        index,
                        start: p.t_start,
                        prev_end,
                    });
                }
            }
        }
        Ok(Self { pieces })
    }

    /// `v(x,t) = coeff(x)` on `[t_start, t_end]`.
    pub fn single(t_start: f64, t_end: f64, coeff: GridFunction) -> Result<Self, SolverError> {
        Self::new(vec![ControlPiece::new(t_start, t_end, coeff)])
    }

    /// Spatially constant control.
    pub fn constant(grid: Grid, value: f64, t_start: f64, t_end: f64) -> Result<Self, SolverError> {
        Self::single(t_start, t_end, GridFunction::constant(grid, value))
    }

    /// No control at all: the pure-diffusion problem.
    pub fn free(grid: Grid, t_start: f64, t_end: f64) -> Result<Self, SolverError> {
        Self::constant(grid, 0.0, t_start, t_end)
    }

    pub fn pieces(&self) -> &[ControlPiece] {
        &self.pieces
    }

    pub fn t_start(&self) -> f64 {
        self.pieces[0].t_start
    }

    pub fn t_end(&self) -> f64 {
        self.pieces[self.pieces.len() - 1].t_end
    }

    /// `‖v‖_∞` over the whole schedule.
    pub fn coeff_max(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.coeff.sup_norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub dt_max: f64,
    pub picard_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt_max: 1e-4,
            picard_iters: 2,
        }
    }
}

impl SolverConfig {
    pub fn with_dt_max(dt_max: f64) -> Self {
        Self {
            dt_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.dt_max > 0.0) || !self.dt_max.is_finite() {
            return Err(SolverError::BadConfig(format!(
                "dt_max = {} must be positive",
                self.dt_max
            )));
        }
        if self.picard_iters < 1 {
            return Err(SolverError::BadConfig(
                "picard_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Receives the state after every accepted step (and once at the initial time).
/// Returning `ControlFlow::Break` halts the solve.
pub trait Observer {
    fn observe(&mut self, t: f64, u: &GridFunction) -> ControlFlow<()>;
}

impl<F> Observer for F
where
    F: FnMut(f64, &GridFunction) -> ControlFlow<()>,
{
    fn observe(&mut self, t: f64, u: &GridFunction) -> ControlFlow<()> {
        self(t, u)
    }
}

type Probe = Box<dyn Fn(&GridFunction) -> f64 + Send + Sync>;

/// Records named scalar functionals of the state over time.
pub struct SeriesRecorder {
    names: Vec<String>,
    probes: Vec<Probe>,
    rows: Vec<Vec<f64>>,
}

impl SeriesRecorder {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            probes: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn with(
        mut self,
        name: &str,
        probe: impl Fn(&GridFunction) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.names.push(name.to_owned());
        self.probes.push(Box::new(probe));
        self
    }

    pub fn into_series(self) -> TimeSeries {
        TimeSeries {
            columns: self.names,
            rows: self.rows,
        }
    }
}

impl Default for SeriesRecorder {
    fn default() -> Self {
        Self::new()
    }
}

impl Observer for SeriesRecorder {
    fn observe(&mut self, t: f64, u: &GridFunction) -> ControlFlow<()> {
        let mut row = Vec::with_capacity(self.probes.len() + 1);
        row.push(t);
        row.extend(self.probes.iter().map(|p| p(u)));
        self.rows.push(row);
        ControlFlow::Continue(())
    }
}

/// Observed quantities; each row starts with `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Option<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next()?.split(',').collect();
        if header.first() != Some(&"t") {
            return None;
        }
        let columns = header[1..].iter().map(|s| s.to_string()).collect();
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|s| s.trim().parse::<f64>().ok())
                    .collect::<Option<Vec<_>>>()
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self { columns, rows })
    }
}

/// End state of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub state: GridFunction,
    pub t: f64,
    /// True when an observer stopped the integration early.
    pub halted: bool,
    pub steps: usize,
}

/// Factored Crank–Nicolson system for a fixed `(coeff, dt)`.
struct Stepper {
    r: f64,
    dt: f64,
    /// Explicit-side diagonal `1 - r + dt v / 2` on interior nodes.
    explicit_diag: Vec<f64>,
    /// Thomas forward-sweep multipliers and pivots.
    upper_prime: Vec<f64>,
    pivots: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl Stepper {
    fn new(coeff: &GridFunction, dt: f64) -> Result<Self, SolverError> {
        let grid = coeff.grid();
        let m = grid.n_cells() - 1;
        let h = grid.h();
        let r = dt / (h * h);
        let off = -0.5 * r;
        let v = &coeff.values()[1..grid.n_cells()];
        let failure = |row| SolverError::TridiagonalFailure {
            dt,
            coeff_max: coeff.sup_norm(),
            row,
        };

        let mut explicit_diag = Vec::with_capacity(m);
        let mut upper_prime = Vec::with_capacity(m);
        let mut pivots = Vec::with_capacity(m);
        for (i, &vi) in v.iter().enumerate() {
            let diag = 1.0 + r - 0.5 * dt * vi;
            if !(diag > r) {
                return Err(failure(i + 1));
            }
            explicit_diag.push(1.0 - r + 0.5 * dt * vi);
            let pivot = if i == 0 {
                diag
            } else {
                diag - off * upper_prime[i - 1]
            };
            if !(pivot.abs() > f64::MIN_POSITIVE) || !pivot.is_finite() {
                return Err(failure(i + 1));
            }
            pivots.push(pivot);
            upper_prime.push(off / pivot);
        }
        Ok(Self {
            r,
            dt,
            explicit_diag,
            upper_prime,
            pivots,
            rhs: vec![0.0; m],
            scratch: vec![0.0; m],
        })
    }

    /// Solves the implicit system for `self.rhs`, writing interior values of `out`.
    fn solve_into(&mut self, out: &mut [f64]) {
        let m = self.pivots.len();
        let off = -0.5 * self.r;
        let y = &mut self.scratch;
        y[0] = self.rhs[0] / self.pivots[0];
        for i in 1..m {
            y[i] = (self.rhs[i] - off * y[i - 1]) / self.pivots[i];
        }
        out[m] = y[m - 1];
        for i in (0..m - 1).rev() {
            out[i + 1] = y[i] - self.upper_prime[i] * out[i + 2];
        }
    }

    fn advance(
        &mut self,
        u: &GridFunction,
        nl: &Nonlinearity,
        picard_iters: usize,
    ) -> GridFunction {
        let vals = u.values();
        let n = vals.len() - 1;
        let half_r = 0.5 * self.r;
        let half_dt = 0.5 * self.dt;
        let reactive = !nl.is_zero();

        let mut base = vec![0.0; n - 1];
        for i in 1..n {
            let mut b = self.explicit_diag[i - 1] * vals[i] + half_r * (vals[i - 1] + vals[i + 1]);
            if reactive {
                b += half_dt * nl.evaluate(vals[i]);
            }
            base[i - 1] = b;
        }

        let mut next = vec![0.0; n + 1];
        if !reactive {
            self.rhs.copy_from_slice(&base);
            self.solve_into(&mut next);
        } else {
            next.copy_from_slice(vals);
            for _ in 0..picard_iters {
                for i in 1..n {
                    self.rhs[i - 1] = base[i - 1] + half_dt * nl.evaluate(next[i]);
                }
                self.solve_into(&mut next);
            }
        }
        next[0] = 0.0;
        next[n] = 0.0;
        GridFunction::from_values(u.grid(), next).expect("length preserved")
    }
}

/// One Crank–Nicolson step of length `dt` with static coefficient `coeff`.
pub fn step(
    u: &GridFunction,
    coeff: &GridFunction,
    dt: f64,
    nl: &Nonlinearity,
    cfg: &SolverConfig,
) -> Result<GridFunction, SolverError> {
    cfg.validate()?;
    if !u.is_dirichlet() {
        return Err(SolverError::NotDirichlet);
    }
    if !(dt > 0.0) || dt > cfg.dt_max {
        return Err(SolverError::BadTimeStep {
            dt,
            dt_max: cfg.dt_max,
        });
    }
    let mut stepper = Stepper::new(coeff, dt)?;
    Ok(stepper.advance(u, nl, cfg.picard_iters))
}

/// Advances `u0` across every piece of `schedule`, landing exactly on each
/// piece boundary. Observers see the initial state and every accepted step.
pub fn solve(
    u0: &GridFunction,
    schedule: &ControlSchedule,
    nl: &Nonlinearity,
    cfg: &SolverConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<Solution, SolverError> {
    cfg.validate()?;
    if !u0.is_dirichlet() {
        return Err(SolverError::NotDirichlet);
    }
    let mut u = u0.clone();
    let mut t = schedule.t_start();
    let mut steps = 0;

    let notify = |t: f64, u: &GridFunction, observers: &mut [&mut dyn Observer]| {
        let mut halt = false;
        for obs in observers.iter_mut() {
            if obs.observe(t, u).is_break() {
                halt = true;
            }
        }
        halt
    };

    if notify(t, &u, observers) {
        return Ok(Solution {
            state: u,
            t,
            halted: true,
            steps,
        });
    }

    for piece in schedule.pieces() {
        let len = piece.t_end - piece.t_start;
        if len <= 0.0 {
            continue;
        }
        let dt_cap = piece.dt_max.map_or(cfg.dt_max, |d| d.min(cfg.dt_max));
        let n_steps = ((len / dt_cap) - 1e-9).ceil().max(1.0) as usize;
        let dt = len / n_steps as f64;
        let mut stepper = Stepper::new(&piece.coeff, dt)?;
        for j in 1..=n_steps {
            u = stepper.advance(&u, nl, cfg.picard_iters);
            t = if j == n_steps {
                piece.t_end
            } else {
                piece.t_start + j as f64 * dt
            };
            steps += 1;
            if !u.is_finite() {
                return Err(SolverError::NonFinite { t });
            }
            if notify(t, &u, observers) {
                return Ok(Solution {
                    state: u,
                    t,
                    halted: true,
                    steps,
                });
            }
        }
    }
    Ok(Solution {
        state: u,
        t,
        halted: false,
        steps,
    })
}

/// Convenience: solve without observers.
pub fn evolve(
    u0: &GridFunction,
    schedule: &ControlSchedule,
    nl: &Nonlinearity,
    cfg: &SolverConfig,
) -> Result<GridFunction, SolverError> {
    solve(u0, schedule, nl, cfg, &mut []).map(|s| s.state)
}

/// Analytic cases with known exact solutions, used for order studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvergenceFixture {
    /// `u0 = sin(πx)`, no control, no reaction.
    Heat,
    /// `u0 = sin(πx)`, `v ≡ c`, `f(u) = a u`.
    LinearReaction { c: f64, a: f64 },
    /// `u0 ≡ 0`.
    ZeroData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `(n_cells, L² error at the final time)` per level, coarse to fine.
    pub levels: Vec<(usize, f64)>,
    /// Least-squares slope of log(error) against log(h); `None` when every error is zero.
    pub order: Option<f64>,
}

/// Coarsest grid of a convergence study; each level halves `h`.
pub const STUDY_COARSEST: usize = 100;
/// Final time of a convergence study.
pub const STUDY_HORIZON: f64 = 0.1;

pub fn convergence_study(
    fixture: ConvergenceFixture,
    levels: usize,
) -> Result<ConvergenceReport, SolverError> {
    if levels < 3 {
        return Err(SolverError::BadConfig(format!(
            "convergence study needs at least 3 levels, got {levels}"
        )));
    }
    let pi = std::f64::consts::PI;
    let (c, nl, amplitude, rate) = match fixture {
        ConvergenceFixture::Heat => (0.0, Nonlinearity::Zero, 1.0, -pi * pi),
        ConvergenceFixture::LinearReaction { c, a } => {
            (c, Nonlinearity::Linear(a), 1.0, c + a - pi * pi)
        }
        ConvergenceFixture::ZeroData => (0.0, Nonlinearity::Zero, 0.0, 0.0),
    };
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        let n = STUDY_COARSEST << level;
        let grid = Grid::new(n).map_err(|e| SolverError::BadConfig(e.to_string()))?;
        let u0 = GridFunction::dirichlet_from_fn(grid, |x| amplitude * (pi * x).sin());
        let cfg = SolverConfig::with_dt_max(grid.h() / 4.0);
        let schedule = ControlSchedule::constant(grid, c, 0.0, STUDY_HORIZON)?;
        let u = evolve(&u0, &schedule, &nl, &cfg)?;
        let factor = (rate * STUDY_HORIZON).exp();
        let exact = GridFunction::dirichlet_from_fn(grid, |x| amplitude * factor * (pi * x).sin());
        out.push((n, u.l2_distance(&exact)));
    }
    let order = if out.iter().all(|&(_, e)| e == 0.0) {
        None
    } else {
        let pts: Vec<(f64, f64)> = out
            .iter()
            .map(|&(n, e)| ((1.0 / n as f64).ln(), e.ln()))
            .collect();
        Some(least_squares_slope(&pts))
    };
    Ok(ConvergenceReport { levels: out, order })
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
