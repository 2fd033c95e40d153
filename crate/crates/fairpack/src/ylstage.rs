//! One fixed-corner Yamnitsky-Levin stage: repeatedly mix the most violated
//! row into the current bounding constraint until its centroid is
//! (1 + 1/n)-covered, shrinking the bounding-simplex volume every step.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use thiserror::Error;

use crate::instance::ProblemInstance;
use crate::report::SolveReport;

#[derive(Debug, Error)]
pub enum YlError {
    #[error("stage did not terminate within {cap} iterations")]
    IterCapExceeded { cap: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Bounding-simplex state: weights, constraint, centroid, and the log of
/// the simplex volume `-sum_i log h_i - log(n!)`.
#[derive(Debug, Clone)]
pub struct YlState {
    pub k: u64,
    pub lambda: Vec<f64>,
    pub h: Vec<f64>,
    pub p: Vec<f64>,
    pub log_volume: f64,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn log_volume(h: &[f64]) -> f64 {
    -h.iter().map(|v| v.ln()).sum::<f64>() - ln_factorial(h.len())
}

fn state_from_lambda(inst: &ProblemInstance, k: u64, lambda: Vec<f64>) -> YlState {
    let n = inst.cols();
    let mut h = vec![0.0; n];
    inst.t_mat_vec(&lambda, &mut h);
    let p: Vec<f64> = h.iter().map(|&v| 1.0 / (n as f64 * v)).collect();
    let log_volume = log_volume(&h);
    YlState {
        k,
        lambda,
        h,
        p,
        log_volume,
    }
}

/// Initial simplex: average of one maximal row per column, ties broken by
/// the smallest row index. Its volume is at most `n^n / n!`.
pub fn yl_initial(inst: &ProblemInstance) -> YlState {
    let n = inst.cols();
    let m = inst.rows();
    let mut lambda = vec![0.0; m];
    for j in 0..n {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, v) in inst.col(j) {
            if v > best {
                best = v;
                arg = i;
            }
        }
        lambda[arg] += 1.0 / n as f64;
    }
    state_from_lambda(inst, 0, lambda)
}

/// Default iteration cap, ceil(2 (n+1)^2 n log n) + 1.
pub fn default_iter_cap(n: usize) -> u64 {
    let nf = n as f64;
    (2.0 * (nf + 1.0) * (nf + 1.0) * nf * nf.ln()).ceil() as u64 + 1
}

/// One mixing step: fold the most violated row (smallest index on ties)
/// into the weights with weight 1/n^2.
pub fn yl_step(inst: &ProblemInstance, state: &YlState) -> YlState {
    let nf = inst.cols() as f64;
    let mix = 1.0 / (nf * nf);
    let (_, j_max) = inst.max_row_dot(&state.p);
    let mut lambda = state.lambda.clone();
    for v in lambda.iter_mut() {
        *v *= 1.0 - mix;
    }
    lambda[j_max] += mix;
    state_from_lambda(inst, state.k + 1, lambda)
}

#[derive(Debug, Clone, Default)]
pub struct YlConfig {
    /// Stream rows `k,j,ghat,log_volume` to this CSV path.
    pub trace_path: Option<PathBuf>,
}

/// Runs the stage until `ghat(p) <= 1 + 1/n` or the iteration cap fires.
pub fn yl_stage(inst: &ProblemInstance, iter_cap: u64) -> Result<(YlState, SolveReport), YlError> {
    yl_stage_with(inst, iter_cap, &YlConfig::default())
}

pub fn yl_stage_with(
    inst: &ProblemInstance,
    iter_cap: u64,
    cfg: &YlConfig,
) -> Result<(YlState, SolveReport), YlError> {
    let start = Instant::now();
    let n = inst.cols();
    let nf = n as f64;
    let mut state = yl_initial(inst);
    let mut trace = match &cfg.trace_path {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "k,j,ghat,log_volume")?;
            Some(w)
        }
        None => None,
    };

    loop {
        let (ghat, j_max) = inst.max_row_dot(&state.p);
        if let Some(w) = trace.as_mut() {
            writeln!(w, "{},{},{},{}", state.k, j_max, ghat, state.log_volume)?;
        }
        if ghat <= 1.0 + 1.0 / nf {
            if let Some(w) = trace.as_mut() {
                w.flush()?;
            }
            let g_norm: f64 = -state.h.iter().map(|v| v.ln()).sum::<f64>() - nf * nf.ln();
            let mut report = SolveReport::new("yl");
            report.iterations = state.k;
            report.wall_time_s = start.elapsed().as_secs_f64();
            report.objective_normalized = g_norm;
            report.objective = g_norm + inst.objective_offset();
            report.feasibility_residual = ghat - 1.0;
            report.ghat = Some(ghat);
            return Ok((state, report));
        }
        if state.k >= iter_cap {
            return Err(YlError::IterCapExceeded { cap: iter_cap });
        }

        let next = yl_step(inst, &state);
        debug_assert!(
            next.log_volume - state.log_volume <= -1.0 / (2.0 * (nf + 1.0) * (nf + 1.0)) + 1e-10,
            "volume ratio bound violated at k = {}",
            state.k
        );
        state = next;
    }
}
