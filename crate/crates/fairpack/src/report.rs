//! Solve reports shared by the solvers and the CLI.
//!
//! The JSON schema is fixed: every report carries the same key set and
//! fields that do not apply to a solver are `null`.

use serde::{Deserialize, Serialize};

/// Per-phase record emitted by the dual solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub t: usize,
    pub eps_t: f64,
    pub filtered_rows: usize,
    pub k_t: u64,
    pub sigma: f64,
    pub tau_w: f64,
    pub ghat_after: f64,
}

/// Outcome summary of a solver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Which solver produced the report: "primal", "dual", "distsim" or "yl".
    pub solver: String,
    pub eps: Option<f64>,
    /// Closed-form iteration budget actually executed (T, sum of K_t, or
    /// the YL loop count).
    pub iterations: u64,
    pub wall_time_s: f64,
    /// Objective value with the normalization offset applied back.
    pub objective: f64,
    /// Objective on the normalized instance, before the offset.
    pub objective_normalized: f64,
    /// max_i <A_i, x> - 1 for the reported point.
    pub feasibility_residual: f64,
    /// Final value of the regularized objective (primal runs only).
    pub final_fr: Option<f64>,
    /// Proxy value ghat(p) of the returned dual point (dual/yl runs only).
    pub ghat: Option<f64>,
    pub duality_gap: Option<f64>,
    pub phases: Option<Vec<PhaseRecord>>,
    /// Rounds executed (distributed runs only).
    pub rounds: Option<u64>,
    /// Slack messages delivered per round (distributed runs only).
    pub messages_per_round: Option<u64>,
}

impl SolveReport {
    pub(crate) fn new(solver: &str) -> Self {
        SolveReport {
            solver: solver.to_string(),
            eps: None,
            iterations: 0,
            wall_time_s: 0.0,
            objective: 0.0,
            objective_normalized: 0.0,
            feasibility_residual: 0.0,
            final_fr: None,
            ghat: None,
            duality_gap: None,
            phases: None,
            rounds: None,
            messages_per_round: None,
        }
    }
}
