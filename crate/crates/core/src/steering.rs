//! Two-phase multiplicative steering between profiles with the same sign pattern.
//!
//! Phase one applies the constant control `m = ln K / t1`, amplifying the
//! source `u_in` to roughly `K u_in`. Phase two applies the static control
//! `v0 / T` with `v0 = ln(ū / (K u_in)) <= 0`, which contracts every point
//! onto the target `ū`. For short durations the result is within
//! `η + √2 K e^L ‖r_in‖` of the target, where `r_in` is the part of the start
//! state not accounted for by `u_in`.

use serde::{Deserialize, Serialize};

use crate::error::SteerError;
use crate::grid::GridFunction;
use crate::nonlinearity::Nonlinearity;
use crate::solver::{self, ControlPiece, ControlSchedule, SolverConfig};
use crate::tracker::{extract_pattern, SignPattern, DEFAULT_NOISE_REL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteeringConfig {
    /// First duration tried for both phases.
    pub t_initial: f64,
    /// Back-off gives up below this duration.
    pub t_floor: f64,
    /// Lower clamp of `v0`.
    pub v0_floor: f64,
    /// Each phase takes at least this many steps.
    pub steps_per_phase: usize,
    pub solver: SolverConfig,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        Self {
            t_initial: 1e-2,
            t_floor: 1e-6,
            v0_floor: -50.0,
            steps_per_phase: 50,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringPlan {
    pub k: f64,
    pub t1: f64,
    pub m: f64,
    pub t_contract: f64,
    pub rho_cut: f64,
    /// Static contraction profile, `<= 0` everywhere; `0` off `A_ρ` except at nodes on a zero of `u_in`, where it takes its limit.
    #[serde(skip)]
    pub v0: Option<GridFunction>,
    /// Open intervals `(x_l + ρ, x_{l+1} - ρ)`.
    pub a_rho: Vec<(f64, f64)>,
    /// `ψ = ū / u_in` with its continuous extension at the zeros.
    pub psi_max: f64,
    /// `‖ū - ū_ρ‖` for the chosen cut.
    pub cut_error: f64,
    pub eta: f64,
}

impl SteeringPlan {
    pub fn v0(&self) -> &GridFunction {
        self.v0.as_ref().expect("plan built by `plan`")
    }

    /// Same plan with new phase durations.
    pub fn with_durations(&self, t1: f64, t_contract: f64) -> Self {
        Self {
            t1,
            m: self.k.ln() / t1,
            t_contract,
            ..self.clone()
        }
    }

    pub fn schedule(&self, cfg: &SteeringConfig) -> Result<ControlSchedule, SteerError> {
        let grid = self.v0().grid();
        let steps = cfg.steps_per_phase.max(1) as f64;
        let amplify = ControlPiece::new(0.0, self.t1, GridFunction::constant(grid, self.m))
            .with_dt_max(self.t1 / steps);
        let end = self.t1 + self.t_contract;
        let contract = ControlPiece::new(self.t1, end, self.v0() * (1.0 / self.t_contract))
            .with_dt_max(self.t_contract / steps);
        Ok(ControlSchedule::new(vec![amplify, contract])?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringReport {
    pub achieved_error: f64,
    pub bound: f64,
    pub slack: f64,
    pub phase_durations: (f64, f64),
    pub k: f64,
    pub m: f64,
    pub e_l: f64,
    pub r_in_norm: f64,
    pub eta: f64,
    /// The final sign pattern equals the target's.
    pub pattern_preserved: bool,
    /// Durations tried by the back-off, including the accepted one.
    pub attempts: usize,
}

impl SteeringReport {
    /// `√2 K e^L`, the amplification of the initial residual.
    pub fn residual_gain(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.k * self.e_l
    }
}

fn pattern(f: &GridFunction) -> Result<SignPattern, SteerError> {
    Ok(extract_pattern(f, DEFAULT_NOISE_REL * f.sup_norm())?)
}

/// Slope of `f` in the cell containing `x`.
fn cell_slope(f: &GridFunction, x: f64) -> f64 {
    let g = f.grid();
    let j = g.cell_of(x).min(g.n_cells() - 1);
    (f.values()[j + 1] - f.values()[j]) / g.h()
}

/// Builds the steering plan from `u_in` to `u_bar` with both durations set to `cfg.t_initial`.
pub fn plan(
    u_in: &GridFunction,
    u_bar: &GridFunction,
    eta: f64,
    cfg: &SteeringConfig,
) -> Result<SteeringPlan, SteerError> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(SteerError::BadTolerance(eta));
    }
    let grid = u_in.grid();
    let h = grid.h();
    let n = grid.n_cells();
    let p_in = pattern(u_in)?;
    let p_bar = pattern(u_bar)?;
    p_in.matches(&p_bar, 2.0 * h)
        .map_err(SteerError::PatternMismatch)?;

    // Zeros of the source, with the boundary points as anchors of ψ's extension.
    let mut anchors = vec![0.0];
    anchors.extend_from_slice(p_in.zeros());
    anchors.push(1.0);
    let mut limits = Vec::with_capacity(anchors.len());
    for &a in &anchors {
        let ratio = cell_slope(u_bar, a) / cell_slope(u_in, a);
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Err(SteerError::PsiUnbounded { x: a });
        }
        limits.push(ratio);
    }
    let nearest_anchor = |x: f64| {
        let mut best = 0;
        for (l, &a) in anchors.iter().enumerate() {
            if (x - a).abs() < (x - anchors[best]).abs() {
                best = l;
            }
        }
        best
    };

    let uv = u_in.values();
    let bv = u_bar.values();
    let mut psi_max = limits.iter().copied().fold(0.0, f64::max);
    for i in 1..n {
        let x = grid.x(i);
        let l = nearest_anchor(x);
        if (x - anchors[l]).abs() <= 2.0 * h {
            continue;
        }
        let ratio = bv[i] / uv[i];
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Err(SteerError::PsiUnbounded { x });
        }
        psi_max = psi_max.max(ratio);
    }
    let k = psi_max + 1.0;

    // Cut radius below every node-to-zero distance, so A_ρ holds each node where u_in ≠ 0.
    let mut rho_cut = 0.5 * h;
    for &z in p_in.zeros() {
        for i in 1..n {
            let d = (grid.x(i) - z).abs();
            if d > 0.0 {
                rho_cut = rho_cut.min(0.5 * d);
            }
        }
    }
    let a_rho: Vec<(f64, f64)> = anchors
        .windows(2)
        .map(|w| (w[0] + rho_cut, w[1] - rho_cut))
        .collect();
    let in_a_rho = |x: f64| a_rho.iter().any(|&(a, b)| x > a && x < b);

    let mut v0 = vec![0.0; n + 1];
    let mut cut = vec![0.0; n + 1];
    for i in 1..n {
        let x = grid.x(i);
        if !in_a_rho(x) {
            // A node on a zero of u_in: keep v0 continuous there.
            cut[i] = bv[i];
            v0[i] = (limits[nearest_anchor(x)] / k)
                .ln()
                .clamp(cfg.v0_floor, 0.0);
            continue;
        }
        let mut ratio = bv[i] / (k * uv[i]);
        if !(ratio > 0.0) || !ratio.is_finite() {
            ratio = limits[nearest_anchor(x)] / k;
        }
        v0[i] = ratio.ln().clamp(cfg.v0_floor, 0.0);
    }
    let cut_error = GridFunction::from_values(grid, cut)
        .expect("grid length")
        .l2_norm();
    if cut_error > eta / 2.0 {
        return Err(SteerError::CutTooCoarse {
            missing: cut_error,
            limit: eta / 2.0,
        });
    }
    let t = cfg.t_initial;
    Ok(SteeringPlan {
        k,
        t1: t,
        m: k.ln() / t,
        t_contract: t,
        rho_cut,
        v0: Some(GridFunction::from_values(grid, v0).expect("grid length")),
        a_rho,
        psi_max,
        cut_error,
        eta,
    })
}

/// Runs both phases from `u_start` and compares with `u_bar`.
pub fn execute(
    u_start: &GridFunction,
    u_bar: &GridFunction,
    plan: &SteeringPlan,
    nl: &Nonlinearity,
    r_in_norm: f64,
    cfg: &SteeringConfig,
) -> Result<(GridFunction, SteeringReport), SteerError> {
    let schedule = plan.schedule(cfg)?;
    let u = solver::evolve(u_start, &schedule, nl, &cfg.solver)?;
    let achieved_error = u.l2_distance(u_bar);
    let e_l = nl.lipschitz().exp();
    let bound = plan.eta + std::f64::consts::SQRT_2 * plan.k * e_l * r_in_norm;
    let pattern_preserved = match (pattern(&u), pattern(u_bar)) {
        (Ok(a), Ok(b)) => a.matches(&b, 2.0 * u.grid().h()).is_ok(),
        _ => false,
    };
    let report = SteeringReport {
        achieved_error,
        bound,
        slack: bound - achieved_error,
        phase_durations: (plan.t1, plan.t_contract),
        k: plan.k,
        m: plan.m,
        e_l,
        r_in_norm,
        eta: plan.eta,
        pattern_preserved,
        attempts: 1,
    };
    Ok((u, report))
}

/// Plans and executes, halving both durations from `cfg.t_initial` until the
/// certificate holds.
pub fn steer(
    u_start: &GridFunction,
    u_in: &GridFunction,
    u_bar: &GridFunction,
    eta: f64,
    nl: &Nonlinearity,
    r_in_norm: f64,
    cfg: &SteeringConfig,
) -> Result<(GridFunction, SteeringReport, SteeringPlan), SteerError> {
    steer_with(u_start, u_in, u_bar, eta, nl, r_in_norm, cfg, |_, _| true)
}

/// Like [`steer`], but a duration is only accepted once `accept` also agrees with the result.
#[allow(clippy::too_many_arguments)]
pub fn steer_with(
    u_start: &GridFunction,
    u_in: &GridFunction,
    u_bar: &GridFunction,
    eta: f64,
    nl: &Nonlinearity,
    r_in_norm: f64,
    cfg: &SteeringConfig,
    mut accept: impl FnMut(&GridFunction, &SteeringReport) -> bool,
) -> Result<(GridFunction, SteeringReport, SteeringPlan), SteerError> {
    let base = plan(u_in, u_bar, eta, cfg)?;
    let mut t = cfg.t_initial;
    let mut attempts = 0;
    let mut best_slack = f64::NEG_INFINITY;
    while t >= cfg.t_floor {
        attempts += 1;
        let p = base.with_durations(t, t);
        let (u, mut report) = execute(u_start, u_bar, &p, nl, r_in_norm, cfg)?;
        report.attempts = attempts;
        if report.slack >= 0.0 && accept(&u, &report) {
            return Ok((u, report, p));
        }
        best_slack = best_slack.max(report.slack);
        t *= 0.5;
    }
    Err(SteerError::BackoffExhausted {
        floor: cfg.t_floor,
        best_slack,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplificationCheck {
    /// `‖u(t1) - K u_in‖`.
    pub deviation: f64,
    /// `K [(1 - e^{-π² t1}) + t1 K L e^{L t1}] ‖u_in‖`.
    pub bound: f64,
    /// `deviation <= 1.05 · bound`.
    pub within_bound: bool,
}

/// Runs only the amplification phase from `u_in`.
pub fn amplification_check(
    u_in: &GridFunction,
    plan: &SteeringPlan,
    nl: &Nonlinearity,
    cfg: &SteeringConfig,
) -> Result<AmplificationCheck, SteerError> {
    let grid = u_in.grid();
    let steps = cfg.steps_per_phase.max(1) as f64;
    let piece = ControlPiece::new(0.0, plan.t1, GridFunction::constant(grid, plan.m))
        .with_dt_max(plan.t1 / steps);
    let u = solver::evolve(u_in, &ControlSchedule::new(vec![piece])?, nl, &cfg.solver)?;
    let deviation = u.l2_distance(&(u_in * plan.k));
    let (k, t1, l) = (plan.k, plan.t1, nl.lipschitz());
    let pi2 = std::f64::consts::PI.powi(2);
    let bound = k * ((1.0 - (-pi2 * t1).exp()) + t1 * k * l * (l * t1).exp()) * u_in.l2_norm();
    Ok(AmplificationCheck {
        deviation,
        bound,
        within_bound: deviation <= 1.05 * bound,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::fixtures;
    use crate::grid::Grid;

    fn grid() -> Grid {
        Grid::new(400).unwrap()
    }

    #[test]
    fn constant_ratio_gives_k() {
        let g = grid();
        let u_in = fixtures::sin_k(g, 2);
        let u_bar = &u_in * 0.5;
        let p = plan(&u_in, &u_bar, 0.02, &SteeringConfig::default()).unwrap();
        assert!((p.k - 1.5).abs() < 1e-9);
        assert!(p.v0().values().iter().all(|&v| v <= 0.0));
        let p = p.with_durations(0.01, 0.01);
        assert!((p.m - 40.546).abs() < 1e-3);
        assert!((p.m * p.t1 - p.k.ln()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_zeros_are_rejected() {
        let g = grid();
        let u_in = fixtures::sin_k(g, 2);
        let u_bar = GridFunction::dirichlet_from_fn(g, |x| (PI * x).sin() * (x - 0.6));
        let res = plan(&u_in, &u_bar, 0.02, &SteeringConfig::default());
        assert!(
            matches!(res, Err(SteerError::PatternMismatch(_))),
            "{res:?}"
        );
    }

    #[test]
    fn halving_the_first_mode() {
        let g = grid();
        let u_in = fixtures::sin_k(g, 1);
        let u_bar = &u_in * 0.5;
        let cfg = SteeringConfig::default();
        let (u, report, _) =
            steer(&u_in, &u_in, &u_bar, 0.02, &Nonlinearity::Zero, 0.0, &cfg).unwrap();
        assert!(report.achieved_error <= 0.02);
        assert!(report.slack >= 0.0);
        assert!(report.pattern_preserved);
        assert!(u.is_dirichlet());
    }

    #[test]
    fn identity_target() {
        let g = grid();
        let u_in = fixtures::sin_k(g, 3);
        let cfg = SteeringConfig::default();
        let (_, report, p) = steer(
            &u_in,
            &u_in,
            &u_in,
            0.01,
            &Nonlinearity::Sinusoidal(1.0),
            0.0,
            &cfg,
        )
        .unwrap();
        assert!((p.k - 2.0).abs() < 1e-9);
        assert!(report.achieved_error <= 0.01);
    }

    #[test]
    fn residual_enters_the_bound() {
        let g = grid();
        let u_in = fixtures::sin_k(g, 1);
        let u_bar = &u_in * 0.5;
        let r_in = &fixtures::sin_k(g, 3) * 0.01;
        let start = &u_in + &r_in;
        let cfg = SteeringConfig::default();
        let (_, report, _) = steer(
            &start,
            &u_in,
            &u_bar,
            0.02,
            &Nonlinearity::Zero,
            r_in.l2_norm(),
            &cfg,
        )
        .unwrap();
        assert!((report.bound - (0.02 + report.k * 0.01)).abs() < 1e-6);
        assert!(report.slack >= 0.0);
    }

    #[test]
    fn amplification_of_the_first_mode() {
        let g = grid();
        let u_in = fixtures::sin_k(g, 1);
        let cfg = SteeringConfig::default();
        let p = plan(&u_in, &(&u_in * 0.5), 0.02, &cfg)
            .unwrap()
            .with_durations(1e-3, 1e-3);
        let check = amplification_check(&u_in, &p, &Nonlinearity::Zero, &cfg).unwrap();
        let expected = 1.5 * (1.0 - (-PI * PI * 1e-3).exp()) / 2.0_f64.sqrt();
        assert!((expected - 0.01042).abs() < 1e-5);
        assert!((check.deviation / expected - 1.0).abs() < 0.05, "{check:?}");
        assert!(check.within_bound);

        let devs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&t| {
                amplification_check(&u_in, &p.with_durations(t, t), &Nonlinearity::Zero, &cfg)
                    .unwrap()
                    .deviation
            })
            .collect();
        assert!(devs[0] > devs[1] && devs[1] > devs[2]);

        let zero =
            amplification_check(&GridFunction::zeros(g), &p, &Nonlinearity::Zero, &cfg).unwrap();
        assert_eq!(zero.deviation, 0.0);
    }

    #[test]
    fn bad_tolerance() {
        let g = grid();
        let u = fixtures::sin_k(g, 1);
        assert_eq!(
            plan(&u, &u, 0.0, &SteeringConfig::default()).unwrap_err(),
            SteerError::BadTolerance(0.0)
        );
    }

    #[test]
    fn report_serializes_with_bound_terms() {
        let g = grid();
        let u = fixtures::sin_k(g, 1);
        let (_, report, _) = steer(
            &u,
            &u,
            &u,
            0.05,
            &Nonlinearity::Zero,
            0.0,
            &SteeringConfig::default(),
        )
        .unwrap();
        let json = serde_json::to_value(&report).unwrap();
        for key in [
            "achieved_error",
            "bound",
            "slack",
            "k",
            "e_l",
            "r_in_norm",
            "phase_durations",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
