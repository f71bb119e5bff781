//! Files written by `simulate`: `trace.csv`, `summary.json` and `curves.dat`.

use serde::{Deserialize, Serialize};
use signsteer::strategy::{DecayAudit, FinalRecord, PilotRecord, RunTrace};
use signsteer::tracker::PhaseEnd;

/// Per-round digest kept in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub k: usize,
    pub zeros: Vec<f64>,
    pub mu: Vec<f64>,
    pub j_star: f64,
    pub gap: f64,
    pub eta_k: f64,
    /// Amplification factor `K_k` of the steering phase.
    pub k_factor: f64,
    /// Residual gain `C_k = √2 K_k e^L`.
    pub c_k: f64,
    pub steering_slack: f64,
    pub sigma: f64,
    pub residual: f64,
    pub diffusion: (f64, f64),
    pub end: PhaseEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audits {
    pub decay: DecayAudit,
    pub inactive_monotone: bool,
    pub sign_count_constant: bool,
    /// Largest distance of an inactive zero to its target.
    pub persistence_excess: f64,
    pub final_within_eta: bool,
}

impl Audits {
    pub fn passed(&self) -> bool {
        self.decay.passed()
            && self.inactive_monotone
            && self.sign_count_constant
            && self.final_within_eta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub n_cells: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub initial_zeros: Vec<f64>,
    pub targets: Vec<f64>,
    pub final_zeros: Vec<f64>,
    pub final_l2_error: f64,
    pub total_time: f64,
    pub rounds: usize,
    pub rho0_star: f64,
    pub m0_star: f64,
    pub eps_eff: f64,
    pub reach: f64,
    pub pilot: Option<PilotRecord>,
    pub final_record: Option<FinalRecord>,
    pub audits: Audits,
    pub passed: bool,
    pub round_records: Vec<RoundSummary>,
}

pub fn round_summaries(trace: &RunTrace) -> Vec<RoundSummary> {
    trace
        .rounds
        .iter()
        .map(|r| RoundSummary {
            k: r.state.k,
            zeros: r.state.current_zeros.zeros().to_vec(),
            mu: r.state.mu.clone(),
            j_star: r.j_star,
            gap: r.gap,
            eta_k: r.eta_k,
            k_factor: r.steering.k,
            c_k: r.steering.residual_gain(),
            steering_slack: r.steering.slack,
            sigma: r.steering.phase_durations.0 + r.steering.phase_durations.1,
            residual: r.residual,
            diffusion: r.diffusion,
            end: r.end,
        })
        .collect()
}

/// One gnuplot index block per consecutive run of trace rows sharing phase and round.
/// Blocks are separated by two blank lines and headed by `# <phase> <round>`.
pub fn curves_dat(trace: &RunTrace) -> String {
    let mut out = String::new();
    let mut current: Option<(&str, usize)> = None;
    for row in &trace.rows {
        let key = (row.phase.as_str(), row.round);
        if current != Some(key) {
            if current.is_some() {
                out.push_str("\n\n");
            }
            out.push_str(&format!("# {} {}\n", key.0, key.1));
            current = Some(key);
        }
        out.push_str(&format!("{:.16e}", row.t));
        for z in &row.zeros {
            out.push_str(&format!(" {z:.16e}"));
        }
        out.push('\n');
    }
    out
}

/// A block of `curves.dat`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBlock {
    pub phase: String,
    pub round: usize,
    pub rows: Vec<(f64, Vec<f64>)>,
}

pub fn parse_curves_dat(text: &str) -> Option<Vec<CurveBlock>> {
    let mut blocks: Vec<CurveBlock> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(head) = line.strip_prefix('#') {
            let mut parts = head.split_whitespace();
            let phase = parts.next()?.to_owned();
            let round = parts.next()?.parse().ok()?;
            blocks.push(CurveBlock {
                phase,
                round,
                rows: Vec::new(),
            });
            continue;
        }
        let mut nums = line.split_whitespace().map(|s| s.parse::<f64>().ok());
        let t = nums.next()??;
        let zeros = nums.collect::<Option<Vec<f64>>>()?;
        blocks.last_mut()?.rows.push((t, zeros));
    }
    Some(blocks)
}
