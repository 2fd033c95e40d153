//! Round-based simulation of the distributed execution model: one agent per
//! variable, seeing only its own matrix column, the global scalars, and the
//! per-round aggregate load of each constraint it participates in.
//!
//! The "network" is an in-process queue with deterministic delivery order;
//! constraint-owned aggregators sum agent contributions in fixed agent
//! order, so the output is bitwise identical to [`crate::primal::solve_primal`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use thiserror::Error;

use crate::instance::ProblemInstance;
use crate::primal::{
    self, alpha_of, column_gbar, couple_x, couple_y, inv_eta_l, mirror_coord, next_eta,
    postprocess, PrimalError,
};
use crate::report::SolveReport;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("run needs {needed} rounds but the cap is {cap}")]
    RoundsCapExceeded { needed: u64, cap: u64 },
    #[error(transparent)]
    Primal(#[from] PrimalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Global scalars every agent receives before the first round.
#[derive(Debug, Clone, Copy)]
pub struct Globals {
    pub m: usize,
    pub n: usize,
    pub eps: f64,
    pub beta: f64,
    pub omega: f64,
    pub l: f64,
    pub tau: f64,
}

/// Slack notification for one constraint, delivered to every agent that
/// participates in it. Carries the raw aggregate load `(A exp(x))_i`; the
/// slack is the load minus one.
#[derive(Debug, Clone, Copy)]
pub struct RoundMessage {
    pub constraint: usize,
    pub load: f64,
}

impl RoundMessage {
    pub fn slack(&self) -> f64 {
        self.load - 1.0
    }
}

/// Counts matrix entry accesses per (agent, column) pair.
#[derive(Debug, Clone)]
pub struct AccessCounts {
    n: usize,
    counts: Vec<u64>,
}

impl AccessCounts {
    fn new(n: usize) -> Self {
        AccessCounts {
            n,
            counts: vec![0; n * n],
        }
    }

    fn record(&mut self, agent: usize, col: usize, entries: u64) {
        self.counts[agent * self.n + col] += entries;
    }

    pub fn accesses(&self, agent: usize, col: usize) -> u64 {
        self.counts[agent * self.n + col]
    }

    /// Total entry accesses an agent made outside its own column.
    pub fn out_of_column(&self) -> u64 {
        let mut total = 0;
        for agent in 0..self.n {
            for col in 0..self.n {
                if agent != col {
                    total += self.counts[agent * self.n + col];
                }
            }
        }
        total
    }
}

/// One agent: owns variable `j`, holds its local iterates and, transiently,
/// the column entries fetched for the current round.
pub struct AgentView {
    pub agent_id: usize,
    globals: Globals,
    column: Vec<(usize, f64, f64)>,
    loads: Vec<f64>,
    terms: Vec<f64>,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub eta_k: f64,
    ex: f64,
}

impl AgentView {
    fn new(agent_id: usize, globals: Globals, eta0: f64) -> Self {
        AgentView {
            agent_id,
            globals,
            column: Vec::new(),
            loads: Vec::new(),
            terms: Vec::new(),
            x: -globals.omega,
            y: -globals.omega,
            z: -globals.omega,
            eta_k: eta0,
            ex: 0.0,
        }
    }

    /// First half of a round: advance the schedule, form the coupled point,
    /// and emit one contribution per owned non-zero.
    fn begin_round(&mut self, inst: &ProblemInstance, access: &mut AccessCounts) {
        self.eta_k = next_eta(self.eta_k, self.globals.tau);
        self.x = couple_x(self.globals.tau, self.z, self.y, self.globals.omega);
        self.ex = self.x.exp();

        self.column.clear();
        let mut fetched = 0;
        for (i, v, ln_a) in inst.col_with_logs(self.agent_id) {
            self.column.push((i, v, ln_a));
            fetched += 1;
        }
        access.record(self.agent_id, self.agent_id, fetched);
    }

    fn contributions(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.column.iter().map(|&(i, v, _)| (i, v * self.ex))
    }

    /// Second half: consume the slack messages and apply the local mirror
    /// and coupling updates.
    fn finish_round(&mut self) {
        let inv_beta = 1.0 / self.globals.beta;
        self.terms.clear();
        for (idx, &(_, _, ln_a)) in self.column.iter().enumerate() {
            let alpha = alpha_of(self.loads[idx], inv_beta);
            self.terms.push(alpha + ln_a + self.x);
        }
        let g = column_gbar(&self.terms);
        let z_new = mirror_coord(self.z, g, self.globals.omega, self.eta_k);
        self.y = couple_y(
            self.x,
            z_new - self.z,
            inv_eta_l(self.eta_k, self.globals.l),
            self.globals.omega,
        );
        self.z = z_new;
    }
}

#[derive(Debug, Clone, Default)]
pub struct DistConfig {
    /// Stream rows `round,constraint,slack` to this CSV path.
    pub trace_path: Option<PathBuf>,
}

pub struct DistOutcome {
    pub xbar: Vec<f64>,
    pub report: SolveReport,
    pub access: AccessCounts,
}

/// Runs the primal iteration in the distributed model. The output is
/// bitwise identical to `solve_primal` on the same instance.
pub fn run_distributed(
    inst: &ProblemInstance,
    eps: f64,
    rounds_cap: u64,
) -> Result<(Vec<f64>, SolveReport), DistError> {
    let outcome = run_distributed_with(inst, eps, rounds_cap, &DistConfig::default())?;
    Ok((outcome.xbar, outcome.report))
}

pub fn run_distributed_with(
    inst: &ProblemInstance,
    eps: f64,
    rounds_cap: u64,
    cfg: &DistConfig,
) -> Result<DistOutcome, DistError> {
    let start = Instant::now();
    let params = primal::derive_params(inst, eps)?;
    if params.iterations > rounds_cap {
        return Err(DistError::RoundsCapExceeded {
            needed: params.iterations,
            cap: rounds_cap,
        });
    }
    let n = inst.cols();
    let m = inst.rows();
    let globals = Globals {
        m,
        n,
        eps,
        beta: params.beta,
        omega: params.omega,
        l: params.l,
        tau: params.tau,
    };
    let mut agents: Vec<AgentView> = (0..n)
        .map(|j| AgentView::new(j, globals, params.eta0))
        .collect();
    let mut access = AccessCounts::new(n);
    let mut trace = match &cfg.trace_path {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "round,constraint,slack")?;
            Some(w)
        }
        None => None,
    };

    let mut loads = vec![0.0f64; m];
    let mut messages_per_round = 0u64;
    for round in 1..=params.iterations {
        // Constraint aggregators sum contributions in fixed agent order.
        loads.fill(0.0);
        for agent in agents.iter_mut() {
            agent.begin_round(inst, &mut access);
        }
        for agent in agents.iter() {
            for (i, c) in agent.contributions() {
                loads[i] += c;
            }
        }
        // Deliver one message per stored non-zero.
        messages_per_round = 0;
        for agent in agents.iter_mut() {
            agent.loads.clear();
            for &(i, _, _) in agent.column.iter() {
                let msg = RoundMessage {
                    constraint: i,
                    load: loads[i],
                };
                agent.loads.push(msg.load);
                messages_per_round += 1;
            }
        }
        for agent in agents.iter_mut() {
            agent.finish_round();
        }
        if let Some(w) = trace.as_mut() {
            for (i, &load) in loads.iter().enumerate() {
                let msg = RoundMessage {
                    constraint: i,
                    load,
                };
                writeln!(w, "{},{},{}", round, i, msg.slack())?;
            }
        }
    }
    if let Some(w) = trace.as_mut() {
        w.flush()?;
    }

    let y_final: Vec<f64> = agents.iter().map(|a| a.y).collect();
    let xbar = postprocess(&y_final, eps, n);
    let mut sx = vec![0.0; m];
    inst.mat_vec(&xbar, &mut sx);
    let residual = sx.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - 1.0;
    let f_norm: f64 = xbar.iter().map(|v| v.ln()).sum();

    let mut report = SolveReport::new("distsim");
    report.eps = Some(eps);
    report.iterations = params.iterations;
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.objective_normalized = f_norm;
    report.objective = f_norm + inst.objective_offset();
    report.feasibility_residual = residual;
    report.final_fr = primal::regularized_objective(inst, &y_final, params.beta).finite();
    report.rounds = Some(params.iterations);
    report.messages_per_round = Some(messages_per_round);
    Ok(DistOutcome {
        xbar,
        report,
        access,
    })
}
