//! Dual solver: restarted multiplicative weights over the filtered
//! constraint set, driven by a lens-based geometric feasibility oracle with
//! bisection. Produces a simplex point whose centroid nearly packs the
//! matrix, which bounds the dual optimality gap.

use std::time::Instant;

use thiserror::Error;

use crate::instance::ProblemInstance;
use crate::report::{PhaseRecord, SolveReport};

#[derive(Debug, Error)]
pub enum DualError {
    #[error("eps = {eps} outside (0, n(n-1)] for n = {n}")]
    EpsOutOfRange { eps: f64, n: usize },
    #[error("constraint coordinate {0} is not positive")]
    NonPositiveConstraint(usize),
    #[error("multiplicative weight {0} dropped to zero or below (width violation upstream)")]
    NonPositiveWeight(usize),
    #[error("bisection did not land in the target interval within {cap} iterations")]
    BisectionStall { cap: u64 },
    #[error("instance must be augmented with box rows first")]
    NotAugmented,
    #[error("bad parameter: {0}")]
    BadParam(String),
}

/// Self-inverse centroid map: `h -> (1/(n h_1), ..., 1/(n h_n))`.
pub fn centroid(h: &[f64]) -> Result<Vec<f64>, DualError> {
    if let Some(i) = h.iter().position(|&v| v <= 0.0) {
        return Err(DualError::NonPositiveConstraint(i));
    }
    Ok(centroid_unchecked(h))
}

/// Centroid without the positivity check; zero coordinates map to infinity.
fn centroid_unchecked(h: &[f64]) -> Vec<f64> {
    let n = h.len() as f64;
    h.iter().map(|&v| 1.0 / (n * v)).collect()
}

/// A simplex weight vector with its derived constraint `h = A^T lambda` and
/// centroid `p = c(h)`. Construction is permissive (a zero constraint
/// coordinate yields an infinite centroid coordinate); [`DualPoint::validate`]
/// enforces the invariants where they are required.
#[derive(Debug, Clone)]
pub struct DualPoint {
    pub lambda: Vec<f64>,
    pub h: Vec<f64>,
    pub p: Vec<f64>,
}

impl DualPoint {
    pub fn from_lambda(inst: &ProblemInstance, lambda: Vec<f64>) -> Self {
        debug_assert_eq!(lambda.len(), inst.rows());
        let mut h = vec![0.0; inst.cols()];
        inst.t_mat_vec(&lambda, &mut h);
        let p = centroid_unchecked(&h);
        DualPoint { lambda, h, p }
    }

    pub fn validate(&self) -> Result<(), DualError> {
        let sum: f64 = self.lambda.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || self.lambda.iter().any(|&v| v < 0.0) {
            return Err(DualError::BadParam(format!(
                "lambda is not in the simplex (sum = {sum})"
            )));
        }
        if let Some(i) = self.h.iter().position(|&v| v <= 0.0) {
            return Err(DualError::NonPositiveConstraint(i));
        }
        let n = self.h.len() as f64;
        for (hi, pi) in self.h.iter().zip(&self.p) {
            if (pi * n * hi - 1.0).abs() > 1e-12 {
                return Err(DualError::BadParam("p is not the centroid of h".into()));
            }
        }
        Ok(())
    }
}

/// Proxy objective `ghat(p) = max_i <A_i, p>`.
pub fn proxy_value(inst: &ProblemInstance, p: &[f64]) -> f64 {
    inst.max_row_dot(p).0
}

/// Width parameters `(sigma, tau)` of the oracle for accuracy `delta`,
/// with the lens parameter fixed at 2. `h_s` is the constraint of the
/// current solution, used by the large-delta branch.
pub fn width_params(delta: f64, n: usize, h_s: &[f64]) -> (f64, f64) {
    let nf = n as f64;
    let sigma = if delta <= 2.0 {
        (2.0 * delta * nf).sqrt() + 2.0 * delta * nf
    } else {
        let max_inv = h_s.iter().fold(0.0f64, |a, &v| a.max(1.0 / v));
        (1.0 + 2.0 * delta) / (1.0 + delta) * max_inv - 1.0
    };
    let tau_w = (3.0 * (2.0 * delta * nf).sqrt()).min(1.0);
    (sigma, tau_w)
}

/// Indices of the rows that may still bind near the lens: rows whose inner
/// product with the incumbent centroid reaches the filtering threshold.
/// Rows below it cannot cover the lens bounding box and are redundant for
/// the next phase.
pub fn filter_constraints(inst: &ProblemInstance, p_current: &[f64], eps_prev: f64) -> Vec<usize> {
    let nf = inst.cols() as f64;
    let threshold = (1.0 + eps_prev) / (1.0 + 2.0 * eps_prev * nf + (2.0 * eps_prev * nf).sqrt());
    (0..inst.rows())
        .filter(|&i| inst.row_dot(i, p_current) >= threshold)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleBranch {
    /// The query's own centroid is close enough to the incumbent constraint.
    QueryCentroid,
    /// The incumbent centroid already satisfies the query.
    CurrentSolution,
    /// A convex combination found by bisection.
    Bisection,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub lambda_o: Vec<f64>,
    /// Output point `o = c(A^T lambda_o)`.
    pub o: Vec<f64>,
    /// Constraint of the output point, `c^{-1}(o)`.
    pub h: Vec<f64>,
    pub branch: OracleBranch,
    pub bisect_iters: u64,
    /// Bisection probe values of mu, in probe order.
    pub probes: Vec<f64>,
}

/// `(pi_s, pi_q)` at blend weight `mu`: inner products of `s` and `q` with
/// the centroid of `(1-mu) s + mu q`.
pub fn pi_values(s_h: &[f64], q_h: &[f64], mu: f64) -> (f64, f64) {
    let n = s_h.len() as f64;
    let mut pi_s = 0.0;
    let mut pi_q = 0.0;
    for j in 0..s_h.len() {
        let mix = (1.0 - mu) * s_h[j] + mu * q_h[j];
        let c = 1.0 / (n * mix);
        pi_s += s_h[j] * c;
        pi_q += q_h[j] * c;
    }
    (pi_s, pi_q)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Iteration cap of the bisection: the target interval's preimage has
/// length at least 1/(n/((w-1)d) + 4n/(w-1)), plus slack.
pub fn bisection_cap(n: usize, delta: f64, lens_omega: f64) -> u64 {
    let nf = n as f64;
    let w = lens_omega - 1.0;
    (nf / (w * delta) + 4.0 * nf / w).log2().ceil() as u64 + 4
}

/// Feasibility oracle: given the incumbent solution `s` (a delta-approximate
/// minimizer of the proxy) and a query constraint `q`, returns a dual point
/// covered by the query and contained in the lens around the incumbent.
pub fn oracle(
    inst: &ProblemInstance,
    s: &DualPoint,
    delta: f64,
    q: &DualPoint,
    lens_omega: f64,
) -> Result<OracleResult, DualError> {
    if !(lens_omega > 1.0 && lens_omega <= 2.0) {
        return Err(DualError::BadParam(format!(
            "lens omega = {lens_omega} outside (1, 2]"
        )));
    }
    if delta <= 0.0 {
        return Err(DualError::BadParam(format!("delta = {delta} must be > 0")));
    }
    debug_assert!(s.h.iter().all(|&v| v > 0.0));
    let _ = inst;
    let bound = (1.0 + lens_omega * delta) / (1.0 + delta);

    // Case 1: the query centroid is inside the widened incumbent constraint.
    let s_dot_cq = dot(&s.h, &q.p);
    if s_dot_cq <= bound {
        return Ok(OracleResult {
            lambda_o: q.lambda.clone(),
            o: q.p.clone(),
            h: q.h.clone(),
            branch: OracleBranch::QueryCentroid,
            bisect_iters: 0,
            probes: Vec::new(),
        });
    }
    // Case 2: the incumbent centroid satisfies the query.
    if dot(&q.h, &s.p) <= 1.0 {
        return Ok(OracleResult {
            lambda_o: s.lambda.clone(),
            o: s.p.clone(),
            h: s.h.clone(),
            branch: OracleBranch::CurrentSolution,
            bisect_iters: 0,
            probes: Vec::new(),
        });
    }
    // Case 3: bisect mu until pi_s((1-mu)s + mu q) lands in (1, bound).
    let cap = bisection_cap(s.h.len(), delta, lens_omega);
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut probes = Vec::new();
    for iter in 1..=cap {
        let mu = 0.5 * (lo + hi);
        probes.push(mu);
        let (pi_s, _) = pi_values(&s.h, &q.h, mu);
        if pi_s > 1.0 && pi_s < bound {
            let n = s.h.len();
            let mut h = vec![0.0; n];
            for j in 0..n {
                h[j] = (1.0 - mu) * s.h[j] + mu * q.h[j];
            }
            let o = centroid_unchecked(&h);
            let lambda_o: Vec<f64> = s
                .lambda
                .iter()
                .zip(&q.lambda)
                .map(|(a, b)| (1.0 - mu) * a + mu * b)
                .collect();
            return Ok(OracleResult {
                lambda_o,
                o,
                h,
                branch: OracleBranch::Bisection,
                bisect_iters: iter,
                probes,
            });
        }
        if pi_s <= 1.0 {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    Err(DualError::BisectionStall { cap })
}

/// One multiplicative-weights update `L_i <- L_i (1 - rate * loss_i)`.
/// Fails, leaving the weights untouched, if any factor would drop to zero.
pub fn mw_step(weights: &mut [f64], loss: &[f64], rate: f64) -> Result<(), DualError> {
    debug_assert_eq!(weights.len(), loss.len());
    for (i, &l) in loss.iter().enumerate() {
        if 1.0 - rate * l <= 0.0 {
            return Err(DualError::NonPositiveWeight(i));
        }
    }
    for (w, &l) in weights.iter_mut().zip(loss) {
        *w *= 1.0 - rate * l;
    }
    Ok(())
}

/// Dual objective `g(lambda) = -sum_j log (A^T lambda)_j - n log n`.
pub fn dual_objective(inst: &ProblemInstance, lambda: &[f64]) -> Result<f64, DualError> {
    let mut h = vec![0.0; inst.cols()];
    inst.t_mat_vec(lambda, &mut h);
    if let Some(j) = h.iter().position(|&v| v <= 0.0) {
        return Err(DualError::NonPositiveConstraint(j));
    }
    let nf = inst.cols() as f64;
    Ok(-h.iter().map(|v| v.ln()).sum::<f64>() - nf * nf.ln())
}

#[derive(Debug, Clone)]
pub struct DualConfig {
    /// Lens parameter in (1, 2].
    pub lens_omega: f64,
    /// MW rate is eps_t / (mw_rate_denom * tau * sigma): 4 is the
    /// aggressive schedule, 8 the conservative one backed by the regret
    /// bound.
    pub mw_rate_denom: f64,
    /// When set, record the first oracle call at which the running-average
    /// dual point reaches this proxy value.
    pub ghat_target: Option<f64>,
}

impl Default for DualConfig {
    fn default() -> Self {
        DualConfig {
            lens_omega: 2.0,
            mw_rate_denom: 4.0,
            ghat_target: None,
        }
    }
}

pub struct DualOutcome {
    pub lambda: Vec<f64>,
    pub report: SolveReport,
    /// Oracle calls until the running average first reached
    /// `DualConfig::ghat_target`, if it did.
    pub oracle_calls_to_target: Option<u64>,
}

/// Runs the restarted scheme and returns a simplex point with
/// `ghat(p) <= 1 + eps/n`, hence a dual optimality gap of at most `eps`.
pub fn solve_dual(inst: &ProblemInstance, eps: f64) -> Result<(Vec<f64>, SolveReport), DualError> {
    let outcome = solve_dual_with(inst, eps, &DualConfig::default())?;
    Ok((outcome.lambda, outcome.report))
}

pub fn solve_dual_with(
    inst: &ProblemInstance,
    eps: f64,
    cfg: &DualConfig,
) -> Result<DualOutcome, DualError> {
    let start = Instant::now();
    let n = inst.cols();
    let m = inst.rows();
    let nf = n as f64;
    if !(eps > 0.0 && eps <= nf * (nf - 1.0)) {
        return Err(DualError::EpsOutOfRange { eps, n });
    }
    if !inst.has_box_rows() {
        return Err(DualError::NotAugmented);
    }

    // Initial point: uniform weight on the box rows, so h = 1_n/n, p = 1_n.
    let mut lambda_bar = vec![0.0; m];
    for item in lambda_bar.iter_mut().take(n) {
        *item = 1.0 / nf;
    }
    let mut bar = DualPoint::from_lambda(inst, lambda_bar);

    let fast_path = eps / nf > 2.0;
    let phases_after_first = if fast_path {
        0
    } else {
        (2.0 / (eps / nf)).log2().ceil().max(0.0) as usize
    };
    let mut eps_prev = nf - 1.0;
    let mut phases = Vec::with_capacity(phases_after_first + 1);
    let mut total_iterations = 0u64;
    let mut oracle_calls_to_target = None;

    let mut loss = Vec::new();
    let mut h_running = vec![0.0; n];

    for t in 0..=phases_after_first {
        let indices = filter_constraints(inst, &bar.p, eps_prev);
        debug_assert!(!indices.is_empty());
        let (sigma, mut tau_w) = width_params(eps_prev, n, &bar.h);
        let eps_t = if t == 0 {
            (eps / nf).max(2.0)
        } else {
            eps_prev / 2.0
        };
        if fast_path {
            // Single oversized phase: stretch tau so the condition
            // eps_0 <= 4 min{sigma, tau} holds trivially.
            tau_w = eps / nf;
        }
        let k_t = ((32.0 * tau_w * sigma * (indices.len() as f64).ln() / (eps_t * eps_t)).ceil()
            as u64)
            .max(1);
        let rate = eps_t / (cfg.mw_rate_denom * tau_w * sigma);

        let mut weights = vec![1.0f64; indices.len()];
        let mut lambda_sum = vec![0.0f64; m];
        h_running.fill(0.0);

        for k in 1..=k_t {
            let wsum: f64 = weights.iter().sum();
            let mut lambda_q = vec![0.0; m];
            for (idx, &i) in indices.iter().enumerate() {
                lambda_q[i] = weights[idx] / wsum;
            }
            let q = DualPoint::from_lambda(inst, lambda_q);
            let res = oracle(inst, &bar, eps_prev, &q, cfg.lens_omega)?;

            loss.clear();
            for &i in &indices {
                loss.push(1.0 - inst.row_dot(i, &res.o));
            }
            mw_step(&mut weights, &loss, rate)?;

            for (acc, v) in lambda_sum.iter_mut().zip(&res.lambda_o) {
                *acc += v;
            }
            total_iterations += 1;

            if let Some(target) = cfg.ghat_target {
                if oracle_calls_to_target.is_none() {
                    for (acc, v) in h_running.iter_mut().zip(&res.h) {
                        *acc += v;
                    }
                    let p_run: Vec<f64> = h_running
                        .iter()
                        .map(|&v| 1.0 / (nf * v / k as f64))
                        .collect();
                    if proxy_value(inst, &p_run) <= target {
                        oracle_calls_to_target = Some(total_iterations);
                    }
                }
            }
        }

        let lambda_avg: Vec<f64> = lambda_sum.iter().map(|v| v / k_t as f64).collect();
        bar = DualPoint::from_lambda(inst, lambda_avg);
        let ghat_after = proxy_value(inst, &bar.p);
        debug_assert!(
            ghat_after <= 1.0 + eps_t + 1e-9,
            "phase {t} missed its target: ghat = {ghat_after}, eps_t = {eps_t}"
        );
        phases.push(PhaseRecord {
            t,
            eps_t,
            filtered_rows: indices.len(),
            k_t,
            sigma,
            tau_w,
            ghat_after,
        });
        eps_prev = eps_t;
    }

    let ghat = proxy_value(inst, &bar.p);
    let g_norm = dual_objective(inst, &bar.lambda)?;
    let mut report = SolveReport::new("dual");
    report.eps = Some(eps);
    report.iterations = total_iterations;
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.objective_normalized = g_norm;
    report.objective = g_norm + inst.objective_offset();
    report.feasibility_residual = ghat - 1.0;
    report.ghat = Some(ghat);
    report.phases = Some(phases);
    Ok(DualOutcome {
        lambda: bar.lambda,
        report,
        oracle_calls_to_target,
    })
}
