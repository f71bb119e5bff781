//! Round-based strategy that moves every sign change of the state to its
//! target and finally matches the target profile in L².
//!
//! Each round steers the state onto a profile `w_k` whose zeros sit at the
//! current sign changes, with curvature chosen so the active zeros start
//! moving towards their targets, then lets the state diffuse freely while the
//! zeros are tracked. A zero that reaches its target joins the inactive set
//! and keeps zero curvature from then on.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{SteerError, StrategyError, TrackError};
use crate::grid::{Grid, GridFunction};
use crate::nonlinearity::Nonlinearity;
use crate::profile::ProfileSpec;
use crate::solver::SolverConfig;
use crate::steering::{self, SteeringConfig, SteeringReport};
use crate::tracker::{
    self, extract_pattern, CurveTrace, PhaseEnd, SignPattern, TrackConfig, DEFAULT_NOISE_REL,
};

/// How per-round steering tolerances are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaRule {
    /// `η / (3 · 2^k)`.
    #[default]
    Geometric,
    /// Induction budget over a fixed horizon of `k_max` rounds.
    Induction,
}

/// How long each diffusion phase may run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleRule {
    /// Until the speed monitor fires, capped by the pilot window scaled with `ρ_k²`.
    #[default]
    ValidityWindow,
    /// The harmonic schedule `τ̃_k = c / k`.
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    /// Hölder exponent in (0, 1).
    pub theta: f64,
    /// Zero-placement tolerance.
    pub epsilon: f64,
    /// Final L² tolerance.
    pub eta: f64,
    /// Curve-norm constant; calibrated by a pilot phase when absent.
    pub m0_star: Option<f64>,
    pub k_max: usize,
    pub eta_rule: EtaRule,
    /// Lower bound on per-round tolerances; `0` disables it.
    pub round_eta_floor: f64,
    pub schedule: ScheduleRule,
    /// A diffusion phase expires once an active curve is slower than this fraction of its initial speed.
    pub expiry_ratio: f64,
    /// Phase cap as a multiple of the pilot window.
    pub cap_factor: f64,
    /// Time steps per diffusion phase.
    pub diffusion_steps: usize,
    /// Pilot time step as a multiple of `ρ²`.
    pub pilot_dt_scale: f64,
    /// Relative deviation from `μ` allowed in the initial curve speeds after steering.
    pub speed_tolerance: f64,
    pub steering: SteeringConfig,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            epsilon: 0.01,
            eta: 0.05,
            m0_star: None,
            k_max: 5000,
            eta_rule: EtaRule::Geometric,
            round_eta_floor: 3e-2,
            schedule: ScheduleRule::ValidityWindow,
            expiry_ratio: 0.7,
            cap_factor: 2.0,
            diffusion_steps: 100,
            pilot_dt_scale: 5e-4,
            speed_tolerance: 0.1,
            steering: SteeringConfig::default(),
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<(), StrategyError> {
        let bad = |msg: String| Err(StrategyError::BadConfig(msg));
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta = {} must lie in (0, 1)", self.theta));
        }
        if !(self.epsilon > 0.0) || !(self.eta > 0.0) {
            return bad(format!(
                "epsilon = {} and eta = {} must be positive",
                self.epsilon, self.eta
            ));
        }
        if let Some(m) = self.m0_star {
            if !(m > 0.0) {
                return bad(format!("M0* = {m} must be positive"));
            }
        }
        if !(self.expiry_ratio > 0.0 && self.expiry_ratio < 1.0) || !(self.cap_factor > 0.0) {
            return bad("expiry_ratio must lie in (0, 1) and cap_factor be positive".into());
        }
        if self.diffusion_steps == 0 || !(self.pilot_dt_scale > 0.0) || self.round_eta_floor < 0.0 {
            return bad(
                "diffusion_steps, pilot_dt_scale and round_eta_floor must be positive".into(),
            );
        }
        if !(self.speed_tolerance > 0.0) {
            return bad(format!(
                "speed_tolerance = {} must be positive",
                self.speed_tolerance
            ));
        }
        Ok(())
    }
}

/// `Σ_{j>=1} j^{-(1+θ/2)}` to relative accuracy well below 1e-8.
pub fn s_theta(theta: f64) -> f64 {
    let p = 1.0 + theta / 2.0;
    let n = 1000usize;
    let partial: f64 = (1..=n).rev().map(|j| (j as f64).powf(-p)).sum();
    let nf = n as f64;
    let tail = nf.powf(1.0 - p) / (p - 1.0) - 0.5 * nf.powf(-p) + p * nf.powf(-p - 1.0) / 12.0
        - p * (p + 1.0) * (p + 2.0) * nf.powf(-p - 3.0) / 720.0;
    partial + tail
}

/// `(ε ρ₀* / (4 M₀* s_θ))^{2/(2+θ)}`, the first harmonic schedule value.
pub fn c2(epsilon: f64, rho0_star: f64, m0_star: f64, theta: f64) -> f64 {
    (epsilon * rho0_star / (4.0 * m0_star * s_theta(theta))).powf(2.0 / (2.0 + theta))
}

/// `ε ρ₀* n / (4 s_θ)`.
pub fn c1(epsilon: f64, rho0_star: f64, n: usize, theta: f64) -> f64 {
    epsilon * rho0_star * n as f64 / (4.0 * s_theta(theta))
}

/// Harmonic schedule `τ̃_k = c₂ / k`.
pub fn schedule_tau(epsilon: f64, rho0_star: f64, m0_star: f64, theta: f64, k: usize) -> f64 {
    c2(epsilon, rho0_star, m0_star, theta) / k.max(1) as f64
}

/// Induction tolerance for round `k` of `horizon`:
/// `δ C_k / (2^{N-k} e^{(N-k) L T̃} Π_{h=k..N} C_h)` with `cs[h-1] = C_h`.
pub fn induction_eta(delta: f64, k: usize, cs: &[f64], lipschitz: f64, t_tilde: f64) -> f64 {
    let n = cs.len();
    let gap = (n - k) as f64;
    let prod: f64 = cs[k - 1..].iter().product();
    delta * cs[k - 1] / (2f64.powf(gap) * (gap * lipschitz * t_tilde).exp() * prod)
}

/// Tolerance for the next round given the reports of the rounds so far.
pub fn tolerance_budget(
    cfg: &StrategyConfig,
    reports: &[SteeringReport],
    lipschitz: f64,
    t_tilde: f64,
) -> f64 {
    let k = reports.len() + 1;
    let raw = match cfg.eta_rule {
        EtaRule::Geometric => cfg.eta / (3.0 * 2f64.powi(k.min(1000) as i32)),
        EtaRule::Induction => {
            let horizon = cfg.k_max.max(k);
            let gain = |kk: f64| std::f64::consts::SQRT_2 * kk * lipschitz.exp();
            let guess = reports.iter().map(|r| r.k).fold(2.0, f64::max);
            let cs: Vec<f64> = (1..=horizon)
                .map(|h| reports.get(h - 1).map_or(gain(guess), |r| gain(r.k)))
                .collect();
            induction_eta(cfg.eta / 3.0, k, &cs, lipschitz, t_tilde)
        }
    };
    raw.max(cfg.round_eta_floor)
}

/// `μ_l = sgn(x*_l - ξ_l)` for active zeros, `0` for inactive ones. Zeros
/// within `reach` of their target join the inactive set first.
pub fn choose_directions(
    now: &SignPattern,
    targets: &SignPattern,
    inactive: &mut [bool],
    reach: f64,
) -> Result<Vec<f64>, StrategyError> {
    if now.len() != targets.len() || inactive.len() != now.len() {
        return Err(StrategyError::Hypothesis(format!(
            "{} current zeros, {} targets, {} inactivity flags",
            now.len(),
            targets.len(),
            inactive.len()
        )));
    }
    let mut mu = Vec::with_capacity(now.len());
    for (l, (&x, &target)) in now.zeros().iter().zip(targets.zeros()).enumerate() {
        if (target - x).abs() <= reach {
            inactive[l] = true;
        }
        mu.push(if inactive[l] {
            0.0
        } else {
            (target - x).signum()
        });
    }
    Ok(mu)
}

/// Profile with zeros at the current sign changes, curvature `-α_l μ_l` so
/// that each zero starts with speed `μ_l`, and `ρ` a quarter of the smallest gap.
pub fn build_round_profile(
    now: &SignPattern,
    mu: &[f64],
    h: f64,
    round: usize,
) -> Result<ProfileSpec, StrategyError> {
    let gap = now.min_gap();
    if gap < 8.0 * h {
        return Err(StrategyError::GapTooSmall {
            round,
            gap,
            limit: 8.0 * h,
        });
    }
    let lambda = now.lambda();
    let betas: Vec<f64> = mu
        .iter()
        .enumerate()
        .map(|(l, &m)| {
            let alpha = if (l + 1) % 2 == 0 { lambda } else { -lambda };
            if m == 0.0 {
                0.0
            } else {
                -alpha * m
            }
        })
        .collect();
    Ok(ProfileSpec::from_interior(
        now.zeros(),
        lambda,
        &betas,
        None,
    )?)
}

/// Monotone warp equal to the identity away from `W`-windows around each
/// `from_l`, sending `from_l` to `to_l`.
pub fn warp(x: f64, from: &[f64], to: &[f64], window: f64) -> f64 {
    let mut y = x;
    for (&a, &b) in from.iter().zip(to) {
        let s = ((x - a) / window).abs();
        if s < 1.0 {
            y += (b - a) * (1.0 - s);
        }
    }
    y
}

/// `u* ∘ φ`, which has its sign changes at `achieved` instead of `targets`.
pub fn surrogate_target(
    u_star: &GridFunction,
    achieved: &[f64],
    targets: &[f64],
    window: f64,
) -> Result<GridFunction, StrategyError> {
    for (&a, &b) in achieved.iter().zip(targets) {
        if (b - a).abs() >= 0.9 * window {
            return Err(StrategyError::Surrogate {
                best: (b - a).abs(),
                limit: 0.9 * window,
            });
        }
    }
    Ok(GridFunction::dirichlet_from_fn(u_star.grid(), |x| {
        u_star.interpolate(warp(x, achieved, targets, window))
    }))
}

/// Largest `‖u* - u* ∘ φ‖` over zero displacements of size `shift` in every sign combination.
fn worst_surrogate_distance(
    u_star: &GridFunction,
    targets: &[f64],
    shift: f64,
    window: f64,
) -> Result<f64, StrategyError> {
    let n = targets.len();
    let combos: Vec<u64> = if n <= 10 {
        (0..1u64 << n).collect()
    } else {
        vec![0, (1u64 << n.min(63)) - 1]
    };
    let mut worst: f64 = 0.0;
    for c in combos {
        let achieved: Vec<f64> = targets
            .iter()
            .enumerate()
            .map(|(l, &x)| {
                if c >> l & 1 == 1 {
                    x + shift
                } else {
                    x - shift
                }
            })
            .collect();
        let s = surrogate_target(u_star, &achieved, targets, window)?;
        worst = worst.max(s.l2_distance(u_star));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotRecord {
    pub rho: f64,
    pub window: f64,
    pub sup_speed: f64,
    pub holder: f64,
    pub m0_star: f64,
    pub end: PhaseEnd,
}

/// State at the start of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub k: usize,
    pub current_zeros: SignPattern,
    pub inactive: Vec<bool>,
    pub mu: Vec<f64>,
    /// Accumulated steering time `Σ σ_h` and diffusion time `Σ τ_h` before this round.
    pub elapsed: (f64, f64),
    pub j_star: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub state: RoundState,
    pub profile: ProfileSpec,
    pub eta_k: f64,
    pub steering: SteeringReport,
    /// `‖u - w_k‖` at the end of the steering phase.
    pub residual: f64,
    /// Start and end of the diffusion phase.
    pub diffusion: (f64, f64),
    pub tau_tilde: f64,
    pub cap: f64,
    pub end: PhaseEnd,
    /// `-w_xx/w_x` at each zero when the diffusion phase starts.
    pub initial_speeds: Vec<f64>,
    #[serde(skip)]
    pub curves: CurveTrace,
    pub j_star: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub eps_eff: f64,
    pub surrogate_distance: f64,
    pub steering: SteeringReport,
    pub zeros: Vec<f64>,
    pub l2_error: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Init,
    Steer,
    Diffuse,
    Final,
}

impl PhaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseKind::Init => "init",
            PhaseKind::Steer => "steer",
            PhaseKind::Diffuse => "diffuse",
            PhaseKind::Final => "final",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub phase: PhaseKind,
    pub round: usize,
    pub zeros: Vec<f64>,
    pub j_star: f64,
    pub gap: f64,
    pub l2_err: f64,
    pub inactive: Vec<bool>,
}

/// Audit trail of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub n: usize,
    pub lambda: f64,
    pub initial_zeros: Vec<f64>,
    pub targets: Vec<f64>,
    pub rho0_star: f64,
    pub m0_star: f64,
    pub eps_eff: f64,
    pub reach: f64,
    pub h: f64,
    pub pilot: Option<PilotRecord>,
    #[serde(skip)]
    pub rows: Vec<TraceRow>,
    pub rounds: Vec<RoundRecord>,
    pub final_record: Option<FinalRecord>,
}

impl RunTrace {
    /// CSV with header `t,phase,round,xi_1..xi_n,J_star,gap,l2_err`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,phase,round");
        for l in 1..=self.n {
            let _ = write!(out, ",xi_{l}");
        }
        out.push_str(",J_star,gap,l2_err\n");
        for r in &self.rows {
            let _ = write!(out, "{:.16e},{},{}", r.t, r.phase.as_str(), r.round);
            for z in &r.zeros {
                let _ = write!(out, ",{z:.16e}");
            }
            let _ = writeln!(out, ",{:.16e},{:.16e},{:.16e}", r.j_star, r.gap, r.l2_err);
        }
        out
    }

    /// Parses [`RunTrace::to_csv`] output back into rows (without inactivity flags).
    pub fn rows_from_csv(text: &str) -> Option<Vec<TraceRow>> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next()?.split(',').collect();
        if header.len() < 6 || header[..3] != ["t", "phase", "round"] {
            return None;
        }
        let n = header.len() - 6;
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != n + 6 {
                return None;
            }
            let phase = match c[1] {
                "init" => PhaseKind::Init,
                "steer" => PhaseKind::Steer,
                "diffuse" => PhaseKind::Diffuse,
                "final" => PhaseKind::Final,
                _ => return None,
            };
            let num = |s: &str| s.parse::<f64>().ok();
            rows.push(TraceRow {
                t: num(c[0])?,
                phase,
                round: c[2].parse().ok()?,
                zeros: c[3..3 + n]
                    .iter()
                    .map(|s| num(s))
                    .collect::<Option<Vec<_>>>()?,
                j_star: num(c[3 + n])?,
                gap: num(c[4 + n])?,
                l2_err: num(c[5 + n])?,
                inactive: Vec::new(),
            });
        }
        Some(rows)
    }
}

/// A failed run together with everything recorded up to the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: StrategyError,
    pub trace: RunTrace,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} rounds)",
            self.error,
            self.trace.rounds.len()
        )
    }
}

impl std::error::Error for RunFailure {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub state: GridFunction,
    pub trace: RunTrace,
}

fn pattern(u: &GridFunction) -> Result<SignPattern, TrackError> {
    extract_pattern(u, DEFAULT_NOISE_REL * u.sup_norm())
}

fn j_star(zeros: &[f64], targets: &[f64]) -> f64 {
    zeros.iter().zip(targets).map(|(a, b)| (a - b).abs()).sum()
}

fn gap_of(zeros: &[f64]) -> f64 {
    let mut g = f64::INFINITY;
    let mut prev = 0.0;
    for &z in zeros {
        g = g.min(z - prev);
        prev = z;
    }
    g.min(1.0 - prev)
}

/// Central-difference speeds of each curve and the largest Hölder quotient of
/// those speeds with exponent `θ/2`.
fn speed_statistics(trace: &CurveTrace, theta: f64) -> (f64, f64) {
    let mut sup: f64 = 0.0;
    let mut holder: f64 = 0.0;
    for l in 0..trace.n_curves() {
        let pts: Vec<(f64, f64)> = (1..trace.times.len().saturating_sub(1))
            .map(|j| {
                let (t0, t2) = (trace.times[j - 1], trace.times[j + 1]);
                (
                    trace.times[j],
                    (trace.positions[j + 1][l] - trace.positions[j - 1][l]) / (t2 - t0),
                )
            })
            .collect();
        for (i, &(ti, vi)) in pts.iter().enumerate() {
            sup = sup.max(vi.abs());
            for &(tj, vj) in &pts[i + 1..] {
                holder = holder.max((vj - vi).abs() / (tj - ti).powf(theta / 2.0));
            }
        }
    }
    (sup, holder)
}

/// First active curve whose `-u_xx/u_x` misses its direction `mu` by more than `tol`.
fn speed_mismatch(u: &GridFunction, mu: &[f64], tol: f64) -> Option<StrategyError> {
    let now = pattern(u).ok()?;
    if now.len() != mu.len() {
        return None;
    }
    now.zeros()
        .iter()
        .zip(mu)
        .enumerate()
        .find_map(|(index, (&z, &m))| {
            if m == 0.0 {
                return None;
            }
            let (speed, _) = tracker::ode_speed(u, z);
            ((speed - m).abs() > tol * m.abs()).then_some(StrategyError::SpeedMismatch {
                index,
                speed,
                mu: m,
            })
        })
}

struct Runner<'a> {
    cfg: &'a StrategyConfig,
    nl: &'a Nonlinearity,
    grid: Grid,
    u_star: &'a GridFunction,
    targets: SignPattern,
    trace: RunTrace,
}

impl Runner<'_> {
    fn push_row(
        &mut self,
        t: f64,
        phase: PhaseKind,
        round: usize,
        u: &GridFunction,
        zeros: &[f64],
        inactive: &[bool],
    ) {
        self.trace.rows.push(TraceRow {
            t,
            phase,
            round,
            zeros: zeros.to_vec(),
            j_star: j_star(zeros, self.targets.zeros()),
            gap: gap_of(zeros),
            l2_err: u.l2_distance(self.u_star),
            inactive: inactive.to_vec(),
        });
    }

    fn track_cfg(&self, dt: f64, expiry: bool) -> TrackConfig {
        TrackConfig {
            solver: SolverConfig {
                dt_max: dt,
                ..self.cfg.steering.solver
            },
            expiry: expiry.then_some(self.cfg.expiry_ratio),
            keep_snapshots: true,
            ..TrackConfig::default()
        }
    }

    /// Diffuses the first round profile until the speed monitor fires and
    /// derives the curve-norm constant from the observed speeds.
    fn pilot(
        &mut self,
        now: &SignPattern,
        inactive: &[bool],
    ) -> Result<PilotRecord, StrategyError> {
        let mut scratch = inactive.to_vec();
        let mu = choose_directions(now, &self.targets, &mut scratch, 0.0)?;
        let spec = build_round_profile(now, &mu, self.grid.h(), 0)?;
        let w = spec.build(self.grid)?;
        let rho = spec.rho;
        let horizon = rho * rho;
        let active: Vec<bool> = inactive.iter().map(|&b| !b).collect();
        let tcfg = self.track_cfg(self.cfg.pilot_dt_scale * rho * rho, true);
        let out = tracker::track_during_solve(&w, 0.0, horizon, self.nl, None, &active, &tcfg)?;
        let (sup_speed, holder) = speed_statistics(&out.trace, self.cfg.theta);
        let m0_star = 2.0 * (sup_speed + holder);
        Ok(PilotRecord {
            rho,
            window: out.end_time(),
            sup_speed,
            holder,
            m0_star,
            end: out.end,
        })
    }

    fn choose_eps_eff(&self) -> Result<f64, StrategyError> {
        let h = self.grid.h();
        let window = self.trace.rho0_star / 8.0;
        let limit = self.cfg.eta / 3.0;
        let mut eps = self.cfg.epsilon;
        let mut best = f64::INFINITY;
        if self.targets.is_empty() {
            return Ok(eps);
        }
        loop {
            let shift = eps.max(2.0 * h);
            if shift > self.cfg.epsilon {
                break;
            }
            match worst_surrogate_distance(self.u_star, self.targets.zeros(), shift, window) {
                Ok(d) if d <= limit => return Ok(eps),
                Ok(d) => best = best.min(d),
                Err(_) => {}
            }
            if eps < 2.0 * h {
                break;
            }
            eps /= 2.0;
        }
        Err(StrategyError::Surrogate { best, limit })
    }

    fn run(&mut self, u0: &GridFunction) -> Result<GridFunction, StrategyError> {
        let cfg = self.cfg;
        let h = self.grid.h();
        let start = pattern(u0)?;
        let n = start.len();
        let targets = self.targets.zeros().to_vec();
        self.trace.n = n;
        self.trace.lambda = start.lambda();
        self.trace.initial_zeros = start.zeros().to_vec();
        self.trace.targets = targets.clone();
        self.trace.h = h;
        self.trace.rho0_star = start.min_gap().min(self.targets.min_gap());
        let rho0 = self.trace.rho0_star;

        let eps_eff = self.choose_eps_eff()?;
        let reach = if n == 0 {
            0.0
        } else {
            (eps_eff / (2.0 * n as f64)).max(2.0 * h)
        };
        self.trace.eps_eff = eps_eff;
        self.trace.reach = reach;

        let mut inactive: Vec<bool> = start
            .zeros()
            .iter()
            .zip(&targets)
            .map(|(a, b)| (a - b).abs() <= reach)
            .collect();
        let mut u = u0.clone();
        let mut t = 0.0;
        self.push_row(t, PhaseKind::Init, 0, &u, start.zeros(), &inactive);

        let needs_rounds =
            j_star(start.zeros(), &targets) >= eps_eff && inactive.iter().any(|&b| !b);
        let m0_star = match (cfg.m0_star, needs_rounds) {
            (Some(m), _) => m,
            (None, true) => {
                let pilot = self.pilot(&start, &inactive)?;
                let m = pilot.m0_star;
                self.trace.pilot = Some(pilot);
                m
            }
            (None, false) => 1.0,
        };
        self.trace.m0_star = m0_star;
        let t_tilde = c2(cfg.epsilon, rho0, m0_star, cfg.theta);
        let mut elapsed = (0.0, 0.0);

        let mut k = 0;
        loop {
            let now = pattern(&u)?;
            if now.len() != n {
                return Err(TrackError::CountChanged {
                    before: n,
                    after: now.len(),
                    t,
                }
                .into());
            }
            let mu = choose_directions(&now, &self.targets, &mut inactive, reach)?;
            let js = j_star(now.zeros(), &targets);
            if inactive.iter().all(|&b| b) || js < eps_eff {
                break;
            }
            if k == cfg.k_max {
                return Err(StrategyError::BudgetExhausted(cfg.k_max));
            }
            k += 1;
            let wrap = |e: StrategyError| StrategyError::Round {
                round: k,
                source: Box::new(e),
            };
            let state = RoundState {
                k,
                current_zeros: now.clone(),
                inactive: inactive.clone(),
                mu: mu.clone(),
                elapsed,
                j_star: js,
                gap: now.min_gap(),
            };

            let spec = build_round_profile(&now, &mu, h, k)?;
            let w = spec.build(self.grid).map_err(|e| wrap(e.into()))?;
            let reports: Vec<SteeringReport> = self
                .trace
                .rounds
                .iter()
                .map(|r| r.steering.clone())
                .collect();
            let eta_k = tolerance_budget(cfg, &reports, self.nl.lipschitz(), t_tilde);
            let mut mismatch = None;
            let speeds_ok = |u_s: &GridFunction, _: &SteeringReport| {
                mismatch = speed_mismatch(u_s, &mu, cfg.speed_tolerance);
                mismatch.is_none()
            };
            let (u_s, report, _) =
                steering::steer_with(&u, &u, &w, eta_k, self.nl, 0.0, &cfg.steering, speeds_ok)
                    .map_err(|e| match (e, mismatch) {
                        (SteerError::BackoffExhausted { best_slack, .. }, Some(m))
                            if best_slack >= 0.0 =>
                        {
                            wrap(m)
                        }
                        (e, _) => wrap(e.into()),
                    })?;
            let sigma = report.phase_durations.0 + report.phase_durations.1;
            t += sigma;
            elapsed.0 += sigma;
            let after = pattern(&u_s).map_err(|e| wrap(e.into()))?;
            if after.len() != n {
                return Err(wrap(
                    TrackError::CountChanged {
                        before: n,
                        after: after.len(),
                        t,
                    }
                    .into(),
                ));
            }
            self.push_row(t, PhaseKind::Steer, k, &u_s, after.zeros(), &inactive);
            let residual = u_s.l2_distance(&w);

            let tau_tilde = schedule_tau(cfg.epsilon, rho0, m0_star, cfg.theta, k);
            let cap = match &self.trace.pilot {
                Some(p) => cfg.cap_factor * p.window * (spec.rho / p.rho).powi(2),
                None => tau_tilde,
            };
            let (duration, expiry) = match cfg.schedule {
                ScheduleRule::ValidityWindow => (cap, true),
                ScheduleRule::Harmonic => (tau_tilde, false),
            };
            let active: Vec<bool> = inactive.iter().map(|&b| !b).collect();
            let tcfg = self.track_cfg(duration / cfg.diffusion_steps as f64, expiry);
            let out = tracker::track_during_solve(
                &u_s,
                t,
                t + duration,
                self.nl,
                Some(&targets),
                &active,
                &tcfg,
            )
            .map_err(|e| wrap(e.into()))?;
            for (j, (&tj, zeros)) in out
                .trace
                .times
                .iter()
                .zip(&out.trace.positions)
                .enumerate()
                .skip(1)
            {
                let mut flags = inactive.clone();
                if let (PhaseEnd::Event(e), true) = (out.end, j + 1 == out.trace.times.len()) {
                    flags[e.index] = true;
                }
                self.push_row(tj, PhaseKind::Diffuse, k, &out.snapshots[j], zeros, &flags);
            }
            if let PhaseEnd::Event(e) = out.end {
                inactive[e.index] = true;
            }
            let t_end = out.end_time();
            elapsed.1 += t_end - t;
            let diffusion = (t, t_end);
            t = t_end;
            u = out.state;
            let last = out.trace.last_positions().to_vec();
            self.trace.rounds.push(RoundRecord {
                state,
                profile: spec,
                eta_k,
                steering: report,
                residual,
                diffusion,
                tau_tilde,
                cap,
                end: out.end,
                initial_speeds: out.initial_speeds,
                gap: out.trace.gap(),
                curves: out.trace,
                j_star: j_star(&last, &targets),
            });
        }

        // Final steering onto the target with its zeros moved to where ours are.
        let now = pattern(&u)?;
        let window = rho0 / 8.0;
        let surrogate = if n == 0 {
            self.u_star.clone()
        } else {
            surrogate_target(self.u_star, now.zeros(), &targets, window)?
        };
        let distance = surrogate.l2_distance(self.u_star);
        if distance > cfg.eta / 3.0 {
            return Err(StrategyError::Surrogate {
                best: distance,
                limit: cfg.eta / 3.0,
            });
        }
        let (u_f, report, _) = steering::steer(
            &u,
            &u,
            &surrogate,
            cfg.eta - distance,
            self.nl,
            0.0,
            &cfg.steering,
        )?;
        t += report.phase_durations.0 + report.phase_durations.1;
        let fin = pattern(&u_f)?;
        if fin.len() != n {
            return Err(TrackError::CountChanged {
                before: n,
                after: fin.len(),
                t,
            }
            .into());
        }
        let l2_error = u_f.l2_distance(self.u_star);
        self.push_row(t, PhaseKind::Final, k, &u_f, fin.zeros(), &inactive);
        self.trace.final_record = Some(FinalRecord {
            eps_eff,
            surrogate_distance: distance,
            steering: report,
            zeros: fin.zeros().to_vec(),
            l2_error,
            time: t,
        });
        if l2_error > cfg.eta {
            return Err(StrategyError::FinalBound {
                error: l2_error,
                eta: cfg.eta,
            });
        }
        Ok(u_f)
    }
}

/// A run needs at least one round per zero plus the final steer.
pub fn check_budget(cfg: &StrategyConfig, n: usize) -> Result<(), StrategyError> {
    if cfg.k_max < n + 1 {
        return Err(StrategyError::BadConfig(format!(
            "k_max = {} must be at least n + 1 = {}",
            cfg.k_max,
            n + 1
        )));
    }
    Ok(())
}

/// Runs the full strategy from `u0` towards `u_star`.
pub fn run(
    u0: &GridFunction,
    u_star: &GridFunction,
    cfg: &StrategyConfig,
    nl: &Nonlinearity,
) -> Result<RunOutput, Box<RunFailure>> {
    let fail = |error: StrategyError| {
        Box::new(RunFailure {
            error,
            trace: RunTrace::default(),
        })
    };
    cfg.validate().map_err(fail)?;
    let p0 = pattern(u0).map_err(|e| fail(e.into()))?;
    let p_star = pattern(u_star).map_err(|e| fail(e.into()))?;
    validate_hypothesis(&p0, &p_star).map_err(fail)?;
    check_budget(cfg, p0.len()).map_err(fail)?;
    let mut runner = Runner {
        cfg,
        nl,
        grid: u0.grid(),
        u_star,
        targets: p_star,
        trace: RunTrace::default(),
    };
    match runner.run(u0) {
        Ok(state) => Ok(RunOutput {
            state,
            trace: runner.trace,
        }),
        Err(error) => Err(Box::new(RunFailure {
            error,
            trace: runner.trace,
        })),
    }
}

/// Initial and target states must have the same number of sign changes in the same order.
pub fn validate_hypothesis(
    initial: &SignPattern,
    target: &SignPattern,
) -> Result<(), StrategyError> {
    if initial.len() != target.len() {
        return Err(StrategyError::Hypothesis(format!(
            "initial state has {} sign changes but the target has {}; both need the same number in the same order",
            initial.len(),
            target.len()
        )));
    }
    if initial.lambda() != target.lambda() {
        return Err(StrategyError::Hypothesis(
            "initial state and target change sign in opposite order".into(),
        ));
    }
    Ok(())
}

/// Per-round target distance `J*` and gap `ρ(W)`.
pub fn functionals(trace: &RunTrace) -> (Vec<f64>, Vec<f64>) {
    trace.rounds.iter().map(|r| (r.j_star, r.gap)).unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayAudit {
    pub c1: f64,
    pub c2: f64,
    /// Bound minus recorded `J*`, per round.
    pub slacks: Vec<f64>,
    pub min_slack: f64,
    /// Smallest distance between curves (and to the boundary) over all recorded times.
    pub min_gap: f64,
    pub gap_ok: bool,
    /// Rounds, outside stopping events, whose `J*` decrease fell short of `c₂ / k`.
    pub slow_rounds: Vec<usize>,
}

impl DecayAudit {
    pub fn passed(&self) -> bool {
        self.min_slack >= 0.0 && self.gap_ok
    }
}

/// Checks the recorded `J*` against
/// `J*_k <= Σ|x⁰ - x*| + c₁ Σ_{j<=k} j^{-(1+θ/2)} - c₂ Σ_{n<j<=k} 1/j`
/// and the gap against `ρ₀*/2`.
pub fn decay_audit(trace: &RunTrace, cfg: &StrategyConfig, rho0_star: f64) -> DecayAudit {
    let n = trace.n;
    let c1 = c1(cfg.epsilon, rho0_star, n, cfg.theta);
    let c2 = c2(
        cfg.epsilon,
        rho0_star,
        trace.m0_star.max(f64::MIN_POSITIVE),
        cfg.theta,
    );
    let p = 1.0 + cfg.theta / 2.0;
    let j0 = j_star(&trace.initial_zeros, &trace.targets);
    let mut slacks = Vec::with_capacity(trace.rounds.len());
    let mut grow = 0.0;
    let mut shrink = 0.0;
    let mut slow_rounds = Vec::new();
    let mut prev_j = j0;
    for (i, r) in trace.rounds.iter().enumerate() {
        let k = i + 1;
        grow += (k as f64).powf(-p);
        if k > n {
            shrink += 1.0 / k as f64;
        }
        slacks.push(j0 + c1 * grow - c2 * shrink - r.j_star);
        if !matches!(r.end, PhaseEnd::Event(_)) && prev_j - r.j_star < c2 / k as f64 {
            slow_rounds.push(k);
        }
        prev_j = r.j_star;
    }
    let min_gap = trace
        .rows
        .iter()
        .map(|r| r.gap)
        .fold(f64::INFINITY, f64::min);
    DecayAudit {
        c1,
        c2,
        min_slack: slacks.iter().copied().fold(f64::INFINITY, f64::min),
        slacks,
        min_gap,
        gap_ok: min_gap >= rho0_star / 2.0,
        slow_rounds,
    }
}

/// Largest distance to target of an inactive zero, over every recorded time after it became inactive.
pub fn persistence_excess(trace: &RunTrace) -> f64 {
    let mut worst: f64 = 0.0;
    for row in &trace.rows {
        for (l, (&z, &flag)) in row.zeros.iter().zip(&row.inactive).enumerate() {
            if flag {
                worst = worst.max((z - trace.targets[l]).abs());
            }
        }
    }
    worst
}

/// Whether the inactive set only grows along the trace.
pub fn inactive_monotone(trace: &RunTrace) -> bool {
    trace.rows.windows(2).all(|w| {
        w[0].inactive
            .iter()
            .zip(&w[1].inactive)
            .all(|(&a, &b)| !a || b)
    })
}
