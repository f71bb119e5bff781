//! Sign patterns of sampled functions and the curves traced by their zeros
//! under pure diffusion.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::TrackError;
use crate::grid::GridFunction;
use crate::nonlinearity::Nonlinearity;
use crate::solver::{self, ControlSchedule, Observer, SolverConfig};

/// Interior zeros of a function together with its sign `lambda` on the first interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignPattern {
    zeros: Vec<f64>,
    lambda: f64,
}

impl SignPattern {
    pub fn new(zeros: Vec<f64>, lambda: f64) -> Result<Self, TrackError> {
        if lambda.abs() != 1.0 {
            return Err(TrackError::PatternMismatch(format!(
                "orientation {lambda} is not ±1"
            )));
        }
        if zeros.iter().any(|&z| !(z > 0.0 && z < 1.0)) || zeros.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(TrackError::PatternMismatch(
                "zeros must increase strictly inside (0, 1)".into(),
            ));
        }
        Ok(Self { zeros, lambda })
    }

    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }

    pub fn len(&self) -> usize {
        self.zeros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeros.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Sign on the `l`-th interval (`l = 0` is the leftmost).
    pub fn sign_on(&self, l: usize) -> f64 {
        if l.is_multiple_of(2) {
            self.lambda
        } else {
            -self.lambda
        }
    }

    /// Smallest distance between consecutive zeros and the boundary points.
    pub fn min_gap(&self) -> f64 {
        gaps(&self.zeros).fold(f64::INFINITY, f64::min)
    }

    /// Same count and orientation, and each zero within `tol` of its partner.
    pub fn matches(&self, other: &SignPattern, tol: f64) -> Result<(), String> {
        if self.len() != other.len() {
            return Err(format!("{} zeros against {}", self.len(), other.len()));
        }
        if self.lambda != other.lambda {
            return Err(format!(
                "orientation {} against {}",
                self.lambda, other.lambda
            ));
        }
        for (l, (a, b)) in self.zeros.iter().zip(&other.zeros).enumerate() {
            if (a - b).abs() > tol {
                return Err(format!(
                    "zero {} at {a} against {b} (tolerance {tol})",
                    l + 1
                ));
            }
        }
        Ok(())
    }
}

fn gaps(zeros: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let inner = zeros.windows(2).map(|w| w[1] - w[0]);
    let ends = zeros
        .first()
        .copied()
        .into_iter()
        .chain(zeros.last().map(|&z| 1.0 - z));
    inner.chain(ends)
}

/// Scans the interior nodes for sign changes, ignoring values with
/// `|value| <= noise_floor`. Each change is located by linear interpolation
/// in the cell where the raw samples flip; an exact zero sample is the zero itself.
pub fn extract_pattern(f: &GridFunction, noise_floor: f64) -> Result<SignPattern, TrackError> {
    let grid = f.grid();
    let v = f.values();
    let n = grid.n_cells();
    let significant: Vec<usize> = (1..n).filter(|&i| v[i].abs() > noise_floor).collect();
    let Some(&first) = significant.first() else {
        return Err(TrackError::Degenerate);
    };
    let lambda = v[first].signum();
    let mut zeros = Vec::new();
    for pair in significant.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if v[a].signum() == v[b].signum() {
            continue;
        }
        let mut found = None;
        let mut count = 0;
        for j in a..b {
            if j > a && v[j] == 0.0 {
                count += 1;
                found = Some(grid.x(j));
            } else if v[j] * v[j + 1] < 0.0 {
                count += 1;
                let s = v[j] / (v[j] - v[j + 1]);
                found = Some(grid.x(j) + s * grid.h());
            }
        }
        match (count, found) {
            (1, Some(z)) => zeros.push(z),
            _ => {
                return Err(TrackError::Ambiguous {
                    left: grid.x(a),
                    right: grid.x(b),
                })
            }
        }
    }
    SignPattern::new(zeros, lambda)
}

/// Noise floor relative to the sup norm used while tracking.
pub const DEFAULT_NOISE_REL: f64 = 1e-9;

/// `(-w_xx / w_x, w_x)` at `x`, both interpolated linearly from nodal differences.
pub fn ode_speed(u: &GridFunction, x: f64) -> (f64, f64) {
    let grid = u.grid();
    let n = grid.n_cells();
    let i = grid.cell_of(x).clamp(1, n - 2);
    let s = ((x - grid.x(i)) / grid.h()).clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| a + s * (b - a);
    let wx = lerp(
        u.central_difference(i).unwrap(),
        u.central_difference(i + 1).unwrap(),
    );
    let wxx = lerp(
        u.second_difference(i).unwrap(),
        u.second_difference(i + 1).unwrap(),
    );
    (-wxx / wx, wx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub solver: SolverConfig,
    /// Values below `noise_rel · ‖u‖_∞` carry no sign.
    pub noise_rel: f64,
    /// Gaps below `gap_cells · h` abort the phase.
    pub gap_cells: f64,
    /// Stop the phase once an active curve's speed falls below this fraction of its initial speed.
    pub expiry: Option<f64>,
    pub keep_snapshots: bool,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            noise_rel: DEFAULT_NOISE_REL,
            gap_cells: 2.0,
            expiry: None,
            keep_snapshots: false,
        }
    }
}

/// Curve `index` reached its target at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub index: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseEnd {
    /// An active curve hit its target.
    Event(StopEvent),
    /// The speed monitor flagged curve `index` at `time`.
    Expired { index: usize, time: f64 },
    /// The interval ran out.
    Horizon,
}

/// Positions of the curves of sign change at the recorded times.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveTrace {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub event: Option<StopEvent>,
}

impl CurveTrace {
    pub fn n_curves(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// Minimum over recorded times of the distance between neighbours and to the boundary.
    pub fn gap(&self) -> f64 {
        self.positions
            .iter()
            .flat_map(|p| gaps(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn last_positions(&self) -> &[f64] {
        self.positions.last().map_or(&[], Vec::as_slice)
    }

    /// CSV with columns `t, xi_1, …, xi_n, event`; `event` is the 1-based
    /// index of the curve that stopped the phase on the row where it did.
    pub fn to_csv(&self) -> String {
        let n = self.n_curves();
        let mut out = String::from("t");
        for l in 1..=n {
            let _ = write!(out, ",xi_{l}");
        }
        out.push_str(",event\n");
        for (j, (t, pos)) in self.times.iter().zip(&self.positions).enumerate() {
            let _ = write!(out, "{t:.16e}");
            for p in pos {
                let _ = write!(out, ",{p:.16e}");
            }
            let flag = match self.event {
                Some(e) if j + 1 == self.times.len() => e.index + 1,
                _ => 0,
            };
            let _ = writeln!(out, ",{flag}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Option<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next()?.split(',').collect();
        if header.first() != Some(&"t") || header.last() != Some(&"event") {
            return None;
        }
        let n = header.len() - 2;
        let mut trace = CurveTrace::default();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != n + 2 {
                return None;
            }
            let t: f64 = cells[0].parse().ok()?;
            let pos = cells[1..=n]
                .iter()
                .map(|c| c.parse().ok())
                .collect::<Option<Vec<f64>>>()?;
            let flag: usize = cells[n + 1].parse().ok()?;
            if flag > 0 {
                trace.event = Some(StopEvent {
                    index: flag - 1,
                    time: t,
                });
            }
            trace.times.push(t);
            trace.positions.push(pos);
        }
        Some(trace)
    }
}

/// Result of one tracked diffusion phase.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutcome {
    pub trace: CurveTrace,
    pub state: GridFunction,
    pub end: PhaseEnd,
    /// `-w_xx/w_x` at each curve in the initial state.
    pub initial_speeds: Vec<f64>,
    /// States aligned with `trace.times` when requested.
    pub snapshots: Vec<GridFunction>,
}

impl TrackOutcome {
    pub fn end_time(&self) -> f64 {
        *self
            .trace
            .times
            .last()
            .expect("trace holds the initial time")
    }
}

struct Tracking<'a> {
    cfg: &'a TrackConfig,
    targets: Option<&'a [f64]>,
    active: &'a [bool],
    trace: CurveTrace,
    snapshots: Vec<GridFunction>,
    initial_speeds: Vec<f64>,
    prev: Option<(f64, GridFunction)>,
    count: usize,
    crossing: Option<(StopEvent, f64)>,
    expired: Option<(usize, f64)>,
    error: Option<TrackError>,
}

impl Tracking<'_> {
    fn check(&mut self, t: f64, u: &GridFunction) -> Result<ControlFlow<()>, TrackError> {
        let floor = self.cfg.noise_rel * u.sup_norm();
        let pattern = extract_pattern(u, floor)?;
        let zeros = pattern.zeros().to_vec();
        let first = self.trace.times.is_empty();
        if first {
            self.count = zeros.len();
            self.initial_speeds = zeros.iter().map(|&z| ode_speed(u, z).0).collect();
        } else if zeros.len() != self.count {
            return Err(TrackError::CountChanged {
                before: self.count,
                after: zeros.len(),
                t,
            });
        }
        let limit = self.cfg.gap_cells * u.grid().h();
        check_gaps(&zeros, limit, t)?;

        if !first {
            let prev_pos = self.trace.last_positions();
            if let Some(targets) = self.targets {
                let prev_t = *self.trace.times.last().unwrap();
                let mut best: Option<(StopEvent, f64)> = None;
                for (l, (&p0, &p1)) in prev_pos.iter().zip(&zeros).enumerate() {
                    if !self.active[l] {
                        continue;
                    }
                    let (d0, d1) = (p0 - targets[l], p1 - targets[l]);
                    if d0 != 0.0 && (d1 == 0.0 || d0.signum() != d1.signum()) {
                        let s = d0 / (d0 - d1);
                        let time = prev_t + s * (t - prev_t);
                        if best.is_none_or(|(e, _)| time < e.time) {
                            best = Some((StopEvent { index: l, time }, t));
                        }
                    }
                }
                if best.is_some() {
                    self.crossing = best;
                    return Ok(ControlFlow::Break(()));
                }
            }
            if let Some(ratio) = self.cfg.expiry {
                for (l, &z) in zeros.iter().enumerate() {
                    let v0 = self.initial_speeds[l];
                    if self.active[l] && v0 != 0.0 {
                        let (speed, _) = ode_speed(u, z);
                        if !(speed * v0.signum() >= ratio * v0.abs()) {
                            self.expired = Some((l, t));
                        }
                    }
                }
            }
        }
        self.trace.times.push(t);
        self.trace.positions.push(zeros);
        if self.cfg.keep_snapshots {
            self.snapshots.push(u.clone());
        }
        self.prev = Some((t, u.clone()));
        Ok(if self.expired.is_some() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        })
    }
}

impl Observer for Tracking<'_> {
    fn observe(&mut self, t: f64, u: &GridFunction) -> ControlFlow<()> {
        match self.check(t, u) {
            Ok(flow) => flow,
            Err(e) => {
                self.error = Some(e);
                ControlFlow::Break(())
            }
        }
    }
}

fn check_gaps(zeros: &[f64], limit: f64, t: f64) -> Result<(), TrackError> {
    let n = zeros.len();
    for (l, w) in zeros.windows(2).enumerate() {
        let gap = w[1] - w[0];
        if gap < limit {
            return Err(TrackError::CurveMerge {
                left: l,
                right: l + 1,
                gap,
                limit,
                t,
            });
        }
    }
    if let (Some(&a), Some(&b)) = (zeros.first(), zeros.last()) {
        if a < limit {
            return Err(TrackError::BoundaryExit {
                index: 0,
                gap: a,
                limit,
                t,
            });
        }
        if 1.0 - b < limit {
            return Err(TrackError::BoundaryExit {
                index: n - 1,
                gap: 1.0 - b,
                limit,
                t,
            });
        }
    }
    Ok(())
}

/// Runs pure diffusion on `[t_start, t_end]`, re-extracting the zeros after
/// every step. Stops at the first time an active curve crosses its target
/// (landing on the interpolated crossing time), when the speed monitor fires,
/// or at `t_end`.
pub fn track_during_solve(
    u0: &GridFunction,
    t_start: f64,
    t_end: f64,
    nl: &Nonlinearity,
    targets: Option<&[f64]>,
    active: &[bool],
    cfg: &TrackConfig,
) -> Result<TrackOutcome, TrackError> {
    let floor = cfg.noise_rel * u0.sup_norm();
    let n = extract_pattern(u0, floor)?.len();
    if active.len() != n || targets.is_some_and(|t| t.len() != n) {
        return Err(TrackError::PatternMismatch(format!(
            "{n} zeros but {} activity flags and {} targets",
            active.len(),
            targets.map_or(n, <[f64]>::len)
        )));
    }
    let schedule = ControlSchedule::free(u0.grid(), t_start, t_end)?;
    let mut tracking = Tracking {
        cfg,
        targets,
        active,
        trace: CurveTrace::default(),
        snapshots: Vec::new(),
        initial_speeds: Vec::new(),
        prev: None,
        count: n,
        crossing: None,
        expired: None,
        error: None,
    };
    let solution = solver::solve(u0, &schedule, nl, &cfg.solver, &mut [&mut tracking])?;
    if let Some(e) = tracking.error {
        return Err(e);
    }

    let (state, end) = if let Some((event, _)) = tracking.crossing {
        let (prev_t, prev_u) = tracking
            .prev
            .take()
            .expect("a crossing needs a previous step");
        let landed = if event.time > prev_t {
            let piece = ControlSchedule::free(u0.grid(), prev_t, event.time)?;
            solver::evolve(&prev_u, &piece, nl, &cfg.solver)?
        } else {
            prev_u
        };
        let floor = cfg.noise_rel * landed.sup_norm();
        let zeros = extract_pattern(&landed, floor)?.zeros().to_vec();
        if zeros.len() != n {
            return Err(TrackError::CountChanged {
                before: n,
                after: zeros.len(),
                t: event.time,
            });
        }
        if event.time > prev_t {
            tracking.trace.times.push(event.time);
            tracking.trace.positions.push(zeros);
            if cfg.keep_snapshots {
                tracking.snapshots.push(landed.clone());
            }
        }
        tracking.trace.event = Some(event);
        (landed, PhaseEnd::Event(event))
    } else if let Some((index, time)) = tracking.expired {
        (solution.state, PhaseEnd::Expired { index, time })
    } else {
        (solution.state, PhaseEnd::Horizon)
    };

    Ok(TrackOutcome {
        trace: tracking.trace,
        state,
        end,
        initial_speeds: tracking.initial_speeds,
        snapshots: tracking.snapshots,
    })
}

/// Agreement between the tracked curves and the zero-curve ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    /// Largest `|ξ̇_trace - (-w_xx / w_x)|` over interior times.
    pub max_residual: f64,
    /// Largest `|ξ̇|` predicted by the ODE.
    pub max_speed: f64,
    /// Smallest `|w_x|` seen at a curve.
    pub min_slope: f64,
}

/// Smallest `|w_x|` at a curve for which the ODE comparison is trusted.
pub const MIN_SLOPE: f64 = 0.25;

/// Compares finite differences of the trace with `-w_xx/w_x` at the curves.
#[allow(clippy::needless_range_loop)]
pub fn ode_cross_check(
    trace: &CurveTrace,
    snapshots: &[GridFunction],
) -> Result<CrossCheck, TrackError> {
    if trace.times.len() != snapshots.len() || trace.positions.len() != trace.times.len() {
        return Err(TrackError::Misaligned(format!(
            "{} times, {} positions, {} snapshots",
            trace.times.len(),
            trace.positions.len(),
            snapshots.len()
        )));
    }
    if trace.times.len() < 3 {
        return Err(TrackError::Misaligned(
            "need at least three recorded times".into(),
        ));
    }
    let mut check = CrossCheck {
        max_residual: 0.0,
        max_speed: 0.0,
        min_slope: f64::INFINITY,
    };
    for j in 1..trace.times.len() - 1 {
        let (t0, t1, t2) = (trace.times[j - 1], trace.times[j], trace.times[j + 1]);
        for l in 0..trace.n_curves() {
            let (p0, p1, p2) = (
                trace.positions[j - 1][l],
                trace.positions[j][l],
                trace.positions[j + 1][l],
            );
            // Three-point derivative on a possibly uneven stencil.
            let (a, b) = (t1 - t0, t2 - t1);
            let fd = (a * a * (p2 - p1) + b * b * (p1 - p0)) / (a * b * (a + b));
            let (speed, wx) = ode_speed(&snapshots[j], p1);
            if wx.abs() < MIN_SLOPE {
                return Err(TrackError::SmallDerivative {
                    index: l,
                    t: t1,
                    value: wx.abs(),
                    limit: MIN_SLOPE,
                });
            }
            check.min_slope = check.min_slope.min(wx.abs());
            check.max_speed = check.max_speed.max(speed.abs());
            check.max_residual = check.max_residual.max((fd - speed).abs());
        }
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grid::Grid;
    use crate::profile::ProfileSpec;

    fn cfg(dt: f64) -> TrackConfig {
        TrackConfig {
            solver: SolverConfig::with_dt_max(dt),
            keep_snapshots: true,
            ..TrackConfig::default()
        }
    }

    #[test]
    fn extract_examples() {
        let g = Grid::new(400).unwrap();
        let p = extract_pattern(&fixtures::sin_k(g, 2), 0.0).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p.zeros()[0] - 0.5).abs() < 1e-15);
        assert_eq!(p.lambda(), 1.0);

        let g = Grid::new(100).unwrap();
        let lin = GridFunction::from_fn(g, |x| x - 0.333);
        let p = extract_pattern(&lin, 0.0).unwrap();
        assert!((p.zeros()[0] - 0.333).abs() < 1e-14);
        assert_eq!(p.lambda(), -1.0);

        let g = Grid::new(300).unwrap();
        let w = ProfileSpec::from_interior(&[1.0 / 3.0, 2.0 / 3.0], 1.0, &[0.0, 0.0], None)
            .unwrap()
            .build(g)
            .unwrap();
        let p = extract_pattern(&w, 0.0).unwrap();
        assert_eq!(p.lambda(), 1.0);
        assert!((p.zeros()[0] - 1.0 / 3.0).abs() < g.h());
        assert!((p.zeros()[1] - 2.0 / 3.0).abs() < g.h());
    }

    #[test]
    fn extract_errors() {
        let g = Grid::new(20).unwrap();
        assert_eq!(
            extract_pattern(&GridFunction::zeros(g), 0.0),
            Err(TrackError::Degenerate)
        );
        let mut v = vec![1.0; 21];
        v[5] = -1e-12;
        v[6] = 1e-12;
        v[7] = -1e-12;
        v[8] = -1.0;
        let f = GridFunction::from_values(g, v).unwrap();
        assert!(matches!(
            extract_pattern(&f, 1e-9),
            Err(TrackError::Ambiguous { .. })
        ));
    }

    #[test]
    fn noise_floor_suppresses_flicker() {
        let g = Grid::new(20).unwrap();
        let mut v = vec![1.0; 21];
        v[5] = -1e-12;
        let f = GridFunction::from_values(g, v).unwrap();
        assert_eq!(extract_pattern(&f, 1e-9).unwrap().len(), 0);
        assert_eq!(extract_pattern(&f, 0.0).unwrap().len(), 2);
    }

    #[test]
    fn symmetric_zero_is_stationary() {
        let g = Grid::new(400).unwrap();
        let out = track_during_solve(
            &fixtures::sin_k(g, 2),
            0.0,
            0.02,
            &Nonlinearity::Zero,
            None,
            &[true],
            &cfg(1e-4),
        )
        .unwrap();
        assert_eq!(out.end, PhaseEnd::Horizon);
        assert!(out
            .trace
            .positions
            .iter()
            .all(|p| (p[0] - 0.5).abs() < 1e-6));
        let cc = ode_cross_check(&out.trace, &out.snapshots).unwrap();
        assert!(cc.max_residual < 1e-3);
    }

    #[test]
    fn two_mode_curve_matches_closed_form() {
        let g = Grid::new(400).unwrap();
        let window = fixtures::two_mode_window();
        let out = track_during_solve(
            &fixtures::two_mode(g),
            0.0,
            window,
            &Nonlinearity::Zero,
            None,
            &[true],
            &cfg(1e-5),
        )
        .unwrap();
        let err = out
            .trace
            .times
            .iter()
            .zip(&out.trace.positions)
            .map(|(&t, p)| (p[0] - fixtures::two_mode_zero(t)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "max error {err}");
        let v0 = out.initial_speeds[0];
        assert!(
            (v0 / fixtures::two_mode_speed(0.0) - 1.0).abs() < 0.02,
            "{v0}"
        );
        let cc = ode_cross_check(&out.trace, &out.snapshots).unwrap();
        assert!(cc.max_residual <= 0.05 * cc.max_speed, "{cc:?}");
    }

    #[test]
    fn stopping_event_lands_on_target() {
        let g = Grid::new(400).unwrap();
        let out = track_during_solve(
            &fixtures::two_mode(g),
            0.0,
            0.02,
            &Nonlinearity::Zero,
            Some(&[0.7]),
            &[true],
            &cfg(1e-5),
        )
        .unwrap();
        let PhaseEnd::Event(e) = out.end else {
            panic!("{:?}", out.end)
        };
        assert_eq!(e.index, 0);
        assert!((out.trace.last_positions()[0] - 0.7).abs() <= 1e-4);
        assert!((e.time - fixtures::two_mode_hitting_time(0.7)).abs() < 2e-5);
        assert_eq!(out.end_time(), e.time);
        let back = CurveTrace::from_csv(&out.trace.to_csv()).unwrap();
        assert_eq!(back, out.trace);
    }

    #[test]
    fn inactive_curves_do_not_stop_the_phase() {
        let g = Grid::new(400).unwrap();
        let out = track_during_solve(
            &fixtures::two_mode(g),
            0.0,
            0.01,
            &Nonlinearity::Zero,
            Some(&[0.7]),
            &[false],
            &cfg(1e-4),
        )
        .unwrap();
        assert_eq!(out.end, PhaseEnd::Horizon);
    }

    #[test]
    fn curves_leaving_through_the_boundary_abort() {
        let g = Grid::new(200).unwrap();
        let pi = std::f64::consts::PI;
        let u0 =
            GridFunction::dirichlet_from_fn(g, |x| (pi * x).sin() - 0.6 * (3.0 * pi * x).sin());
        let res = track_during_solve(
            &u0,
            0.0,
            0.05,
            &Nonlinearity::Zero,
            None,
            &[true, true],
            &cfg(1e-5),
        );
        assert!(
            matches!(res, Err(TrackError::BoundaryExit { index: 0, .. })),
            "{res:?}"
        );
    }

    #[test]
    fn speed_monitor_expires_a_phase() {
        let g = Grid::new(400).unwrap();
        let w = ProfileSpec::from_interior(&[0.5], 1.0, &[1.0], None)
            .unwrap()
            .build(g)
            .unwrap();
        let c = TrackConfig {
            expiry: Some(0.5),
            ..cfg(1e-5)
        };
        let out =
            track_during_solve(&w, 0.0, 0.05, &Nonlinearity::Zero, None, &[true], &c).unwrap();
        assert!((out.initial_speeds[0] - 1.0).abs() < 1e-9);
        let PhaseEnd::Expired { index: 0, time } = out.end else {
            panic!("{:?}", out.end)
        };
        assert!(time > 0.0 && time < 0.05);
        assert!(out.trace.last_positions()[0] > 0.5);
    }

    #[test]
    fn flag_count_mismatch() {
        let g = Grid::new(100).unwrap();
        let res = track_during_solve(
            &fixtures::sin_k(g, 2),
            0.0,
            0.01,
            &Nonlinearity::Zero,
            None,
            &[],
            &cfg(1e-3),
        );
        assert!(matches!(res, Err(TrackError::PatternMismatch(_))));
    }

    #[test]
    fn misaligned_cross_check() {
        let trace = CurveTrace {
            times: vec![0.0, 1.0, 2.0],
            positions: vec![vec![0.5]; 3],
            event: None,
        };
        assert!(matches!(
            ode_cross_check(&trace, &[]),
            Err(TrackError::Misaligned(_))
        ));
    }
}
