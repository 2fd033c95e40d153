//! Accelerated solver for the 1-fair packing problem.
//!
//! The problem is reparametrized through `x -> exp(x)` and regularized with
//! a fast-growing barrier; the resulting objective `f_r` is minimized over
//! the box `B = [-omega, 0]^n` by a coupled mirror-descent / gradient-descent
//! iteration driven by the truncated gradient. The iteration budget depends
//! only on `(n, m, eps)`, never on the entry ratio of the matrix.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use thiserror::Error;

use crate::instance::ProblemInstance;
use crate::report::SolveReport;

#[derive(Debug, Error)]
pub enum PrimalError {
    #[error("eps = {eps} outside (0, n/2] for n = {n}")]
    EpsOutOfRange { eps: f64, n: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Constant schedule of the accelerated iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalParams {
    pub eps: f64,
    /// Barrier exponent control: eps / (6 n log(2 m n^2 / eps)).
    pub beta: f64,
    /// Box radius: log(m n / (1 - eps/n)).
    pub omega: f64,
    /// Step-size constant: max{4w(1+b)/b, 16 n log(2 m n)/(3 eps) + 1/3}.
    pub l: f64,
    /// Coupling weight 1/(3L).
    pub tau: f64,
    /// Initial mirror rate 1/(3L).
    pub eta0: f64,
    /// Iteration count T.
    pub iterations: u64,
}

/// Coupled iterates; every coordinate of `x`, `y`, `z` stays in `[-omega, 0]`.
#[derive(Debug, Clone)]
pub struct PrimalState {
    pub k: u64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub eta_k: f64,
    pub c_k: f64,
}

/// Value of the regularized objective; the barrier overflows for points far
/// outside the feasible region, which only matters to reporting and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrValue {
    Finite(f64),
    Saturated,
}

impl FrValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            FrValue::Finite(v) => Some(v),
            FrValue::Saturated => None,
        }
    }

    pub fn is_saturated(self) -> bool {
        matches!(self, FrValue::Saturated)
    }

    /// Finite value, or +inf when saturated.
    pub fn or_infinity(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

/// Derives the full constant schedule from the instance shape and accuracy.
/// Takes no width information: the budget is width-independent by
/// construction.
pub fn derive_params(inst: &ProblemInstance, eps: f64) -> Result<PrimalParams, PrimalError> {
    derive_params_for_shape(inst.rows(), inst.cols(), eps)
}

pub(crate) fn derive_params_for_shape(
    m: usize,
    n: usize,
    eps: f64,
) -> Result<PrimalParams, PrimalError> {
    let nf = n as f64;
    let mf = m as f64;
    if !(eps > 0.0 && eps <= nf / 2.0) {
        return Err(PrimalError::EpsOutOfRange { eps, n });
    }
    let beta = eps / (6.0 * nf * (2.0 * mf * nf * nf / eps).ln());
    let omega = (mf * nf / (1.0 - eps / nf)).ln();
    let l = (4.0 * omega * (1.0 + beta) / beta)
        .max(16.0 * nf * (2.0 * mf * nf).ln() / (3.0 * eps) + 1.0 / 3.0);
    let tau = 1.0 / (3.0 * l);
    let eta0 = 1.0 / (3.0 * l);
    // T = ceil(log(4 n log(2 m n) / eps) / log(1/(1 - tau)))
    let numer = (4.0 * nf * (2.0 * mf * nf).ln() / eps).ln();
    let denom = -(-tau).ln_1p();
    let iterations = (numer / denom).ceil() as u64;
    Ok(PrimalParams {
        eps,
        beta,
        omega,
        l,
        tau,
        eta0,
        iterations: iterations.max(1),
    })
}

// Scalar update helpers. The distributed simulation reuses these so both
// execution paths perform identical floating-point operations. The coupled
// points are convex combinations of box points in exact arithmetic; the
// clamps only remove accumulated rounding dust so the box invariant holds
// verbatim.

pub(crate) fn couple_x(tau: f64, z: f64, y: f64, omega: f64) -> f64 {
    (tau * z + (1.0 - tau) * y).clamp(-omega, 0.0)
}

pub(crate) fn alpha_of(load: f64, inv_beta: f64) -> f64 {
    inv_beta * load.ln()
}

pub(crate) fn mirror_coord(z: f64, gbar: f64, omega: f64, eta: f64) -> f64 {
    (z - omega * eta * gbar).clamp(-omega, 0.0)
}

pub(crate) fn couple_y(x: f64, dz: f64, inv_eta_l: f64, omega: f64) -> f64 {
    (x + dz * inv_eta_l).clamp(-omega, 0.0)
}

pub(crate) fn next_eta(eta: f64, tau: f64) -> f64 {
    eta / (1.0 - tau)
}

pub(crate) fn inv_eta_l(eta: f64, l: f64) -> f64 {
    1.0 / (eta * l)
}

// Above this term maximum the truncated gradient is exactly 1, so the
// log-sum-exp never has to be exponentiated (the exponent 1/beta can exceed
// 1e4). 0.72 > ln 2 keeps the shortcut bit-identical to the full evaluation.
const GBAR_HIGH: f64 = 0.72;
// Below this bound on max + ln(count) the gradient rounds to exactly -1.
const GBAR_LOW: f64 = -42.0;

/// Truncated gradient of one coordinate from its log-domain terms
/// `t_i = (1/beta) ln s_i + ln a_ij + x_j`.
pub(crate) fn column_gbar(terms: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &t in terms {
        if t > max {
            max = t;
        }
    }
    if max >= GBAR_HIGH {
        return 1.0;
    }
    if max + (terms.len() as f64).ln() < GBAR_LOW {
        return -1.0;
    }
    let mut sum = 0.0;
    for &t in terms {
        sum += (t - max).exp();
    }
    let lse = max + sum.ln();
    let g = -1.0 + lse.exp();
    if g > 1.0 {
        1.0
    } else {
        g
    }
}

fn fill_terms(inst: &ProblemInstance, j: usize, x_j: f64, alpha: &[f64], terms: &mut Vec<f64>) {
    terms.clear();
    for (i, _, ln_a) in inst.col_with_logs(j) {
        terms.push(alpha[i] + ln_a + x_j);
    }
}

/// Truncated gradient `min{1, grad f_r}` of the regularized objective,
/// always in `[-1, 1]^n`. Evaluated in the log domain so no intermediate
/// overflows regardless of `beta`.
pub fn truncated_gradient(inst: &ProblemInstance, x: &[f64], beta: f64) -> Vec<f64> {
    let inv_beta = 1.0 / beta;
    let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let mut s = vec![0.0; inst.rows()];
    inst.mat_vec(&ex, &mut s);
    let alpha: Vec<f64> = s.iter().map(|&si| alpha_of(si, inv_beta)).collect();
    let mut terms = Vec::new();
    (0..inst.cols())
        .map(|j| {
            fill_terms(inst, j, x[j], &alpha, &mut terms);
            column_gbar(&terms)
        })
        .collect()
}

/// Full (untruncated) gradient of `f_r`; coordinates may be arbitrarily
/// large or overflow to infinity. Used by the descent and finite-difference
/// checks, never by the iteration.
pub fn gradient(inst: &ProblemInstance, x: &[f64], beta: f64) -> Vec<f64> {
    let inv_beta = 1.0 / beta;
    let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let mut s = vec![0.0; inst.rows()];
    inst.mat_vec(&ex, &mut s);
    let alpha: Vec<f64> = s.iter().map(|&si| alpha_of(si, inv_beta)).collect();
    let mut out = vec![0.0; inst.cols()];
    let mut terms = Vec::new();
    for j in 0..inst.cols() {
        fill_terms(inst, j, x[j], &alpha, &mut terms);
        let mut max = f64::NEG_INFINITY;
        for &t in &terms {
            if t > max {
                max = t;
            }
        }
        if max == f64::NEG_INFINITY {
            out[j] = -1.0;
            continue;
        }
        let sum: f64 = terms.iter().map(|&t| (t - max).exp()).sum();
        out[j] = -1.0 + (max + sum.ln()).exp();
    }
    out
}

/// Regularized objective `f_r(x) = -<1, x> + b/(1+b) sum_i s_i^{(1+b)/b}`.
/// Saturates once a barrier exponent leaves the representable range.
pub fn regularized_objective(inst: &ProblemInstance, x: &[f64], beta: f64) -> FrValue {
    let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let mut s = vec![0.0; inst.rows()];
    inst.mat_vec(&ex, &mut s);
    let exponent = (1.0 + beta) / beta;
    let mut barrier = 0.0;
    for &si in &s {
        if si == 0.0 {
            continue;
        }
        let log_term = exponent * si.ln();
        if log_term > 700.0 {
            return FrValue::Saturated;
        }
        barrier += log_term.exp();
    }
    let linear: f64 = x.iter().sum();
    FrValue::Finite(-linear + beta / (1.0 + beta) * barrier)
}

/// One mirror-descent step in closed form: projection onto the box is a
/// per-coordinate clip.
pub fn mirror_step(z_prev: &[f64], gbar: &[f64], eta_k: f64, omega: f64) -> Vec<f64> {
    z_prev
        .iter()
        .zip(gbar)
        .map(|(&z, &g)| mirror_coord(z, g, omega, eta_k))
        .collect()
}

/// Maps the final box iterate to a feasible point: exp then divide by
/// `1 + eps/n`.
pub fn postprocess(y_t: &[f64], eps: f64, n: usize) -> Vec<f64> {
    let scale = 1.0 + eps / n as f64;
    y_t.iter().map(|v| v.exp() / scale).collect()
}

#[derive(Debug, Clone, Default)]
pub struct PrimalConfig {
    /// Worker threads for the per-coordinate maps; 0 or 1 means sequential.
    /// Results are identical regardless of the thread count.
    pub threads: usize,
    /// Stream per-iteration rows `k,fr,residual` to this CSV path.
    pub trace_path: Option<PathBuf>,
}

/// A stepwise primal run, exposing the iterates for instrumentation.
pub struct PrimalRun<'a> {
    inst: &'a ProblemInstance,
    params: PrimalParams,
    state: PrimalState,
    ex: Vec<f64>,
    s: Vec<f64>,
    alpha: Vec<f64>,
    terms: Vec<f64>,
}

impl<'a> PrimalRun<'a> {
    pub fn new(inst: &'a ProblemInstance, eps: f64) -> Result<Self, PrimalError> {
        let params = derive_params(inst, eps)?;
        let n = inst.cols();
        let state = PrimalState {
            k: 0,
            x: vec![-params.omega; n],
            y: vec![-params.omega; n],
            z: vec![-params.omega; n],
            eta_k: params.eta0,
            c_k: 3.0 * params.eta0 * params.l,
        };
        Ok(PrimalRun {
            inst,
            params,
            state,
            ex: vec![0.0; n],
            s: vec![0.0; inst.rows()],
            alpha: vec![0.0; inst.rows()],
            terms: Vec::new(),
        })
    }

    pub fn params(&self) -> &PrimalParams {
        &self.params
    }

    pub fn state(&self) -> &PrimalState {
        &self.state
    }

    pub fn done(&self) -> bool {
        self.state.k >= self.params.iterations
    }

    /// Executes one coupled iteration.
    pub fn step(&mut self) {
        self.step_with_pool(None);
    }

    fn step_with_pool(&mut self, pool: Option<&rayon::ThreadPool>) {
        let p = &self.params;
        let inst = self.inst;
        let st = &mut self.state;
        let inv_beta = 1.0 / p.beta;

        st.k += 1;
        st.eta_k = next_eta(st.eta_k, p.tau);
        st.c_k = 3.0 * st.eta_k * p.l;
        debug_assert!(st.eta_k <= 0.25 * (1.0 + 1e-12), "eta_k exceeded 1/4");

        for j in 0..inst.cols() {
            st.x[j] = couple_x(p.tau, st.z[j], st.y[j], p.omega);
            self.ex[j] = st.x[j].exp();
        }
        inst.mat_vec(&self.ex, &mut self.s);
        for i in 0..inst.rows() {
            self.alpha[i] = alpha_of(self.s[i], inv_beta);
        }
        let scale = inv_eta_l(st.eta_k, p.l);
        let (omega, eta) = (p.omega, st.eta_k);
        match pool {
            None => {
                for j in 0..inst.cols() {
                    fill_terms(inst, j, st.x[j], &self.alpha, &mut self.terms);
                    let g = column_gbar(&self.terms);
                    debug_assert!((-1.0..=1.0).contains(&g));
                    let z_new = mirror_coord(st.z[j], g, omega, eta);
                    st.y[j] = couple_y(st.x[j], z_new - st.z[j], scale, omega);
                    st.z[j] = z_new;
                }
            }
            Some(pool) => {
                // Pure per-coordinate map; scheduling cannot change results.
                let x = &st.x;
                let alpha = &self.alpha;
                let y = &mut st.y;
                let z = &mut st.z;
                pool.install(|| {
                    use rayon::prelude::*;
                    y.par_iter_mut()
                        .zip(z.par_iter_mut())
                        .enumerate()
                        .for_each_init(Vec::new, |scratch, (j, (y_j, z_j))| {
                            fill_terms(inst, j, x[j], alpha, scratch);
                            let g = column_gbar(scratch);
                            let z_new = mirror_coord(*z_j, g, omega, eta);
                            *y_j = couple_y(x[j], z_new - *z_j, scale, omega);
                            *z_j = z_new;
                        });
                });
            }
        }
        debug_assert!(st
            .y
            .iter()
            .chain(st.z.iter())
            .chain(st.x.iter())
            .all(|&v| (-p.omega..=0.0).contains(&v)));
    }
}

/// Runs the full iteration and returns the feasible point
/// `exp(y_T)/(1 + eps/n)` together with a report.
pub fn solve_primal(
    inst: &ProblemInstance,
    eps: f64,
) -> Result<(Vec<f64>, SolveReport), PrimalError> {
    solve_primal_with(inst, eps, &PrimalConfig::default())
}

pub fn solve_primal_with(
    inst: &ProblemInstance,
    eps: f64,
    cfg: &PrimalConfig,
) -> Result<(Vec<f64>, SolveReport), PrimalError> {
    let start = Instant::now();
    let mut run = PrimalRun::new(inst, eps)?;
    let params = run.params().clone();
    let n = inst.cols();
    let mut trace = match &cfg.trace_path {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "k,fr,residual")?;
            Some(w)
        }
        None => None,
    };
    let pool = if cfg.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .expect("thread pool"),
        )
    } else {
        None
    };

    while !run.done() {
        run.step_with_pool(pool.as_ref());
        if let Some(w) = trace.as_mut() {
            let st = run.state();
            let fr = regularized_objective(inst, &st.y, params.beta).or_infinity();
            let ey: Vec<f64> = st.y.iter().map(|v| v.exp()).collect();
            let mut sy = vec![0.0; inst.rows()];
            inst.mat_vec(&ey, &mut sy);
            let residual = sy.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - 1.0;
            writeln!(w, "{},{},{}", st.k, fr, residual)?;
        }
    }
    if let Some(w) = trace.as_mut() {
        w.flush()?;
    }

    let y_final = &run.state().y;
    let xbar = postprocess(y_final, eps, n);
    let mut sx = vec![0.0; inst.rows()];
    inst.mat_vec(&xbar, &mut sx);
    let residual = sx.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - 1.0;
    let f_norm: f64 = xbar.iter().map(|v| v.ln()).sum();

    let mut report = SolveReport::new("primal");
    report.eps = Some(eps);
    report.iterations = params.iterations;
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.objective_normalized = f_norm;
    report.objective = f_norm + inst.objective_offset();
    report.feasibility_residual = residual;
    report.final_fr = regularized_objective(inst, y_final, params.beta).finite();
    Ok((xbar, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{from_dense, generate_random, normalize_columns};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn single_row_ones(n: usize) -> ProblemInstance {
        let triplets: Vec<_> = (0..n).map(|j| (0, j, 1.0)).collect();
        normalize_columns(1, n, &triplets).unwrap()
    }

    fn identity(n: usize) -> ProblemInstance {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        normalize_columns(n, n, &triplets).unwrap()
    }

    #[test]
    fn derive_params_formulas() {
        // n = 2, m = 3, eps = 1: beta = 1/(12 log 24), omega = log 12.
        let inst = from_dense(&[&[1.0, 0.2], &[0.3, 1.0], &[0.5, 0.5]]);
        let p = derive_params(&inst, 1.0).unwrap();
        let beta_expected = 1.0 / (12.0 * 24.0f64.ln());
        let omega_expected = 12.0f64.ln();
        assert!((p.beta - beta_expected).abs() / beta_expected < 1e-14);
        assert!((p.omega - omega_expected).abs() / omega_expected < 1e-14);
        // tau and eta0 are the same expression by definition; the product
        // tau * 3L is 1 up to one rounding.
        assert_eq!(p.tau, p.eta0);
        assert!((p.tau * (3.0 * p.l) - 1.0).abs() <= f64::EPSILON);
        assert!(p.l >= 4.0 * p.omega * (1.0 + p.beta) / p.beta);
        assert!(p.iterations >= 1);
    }

    #[test]
    fn eta_schedule_stays_below_one_fourth() {
        let inst = from_dense(&[&[1.0, 0.2], &[0.3, 1.0], &[0.5, 0.5]]);
        let p = derive_params(&inst, 1.0).unwrap();
        let mut eta = p.eta0;
        for _ in 0..p.iterations {
            eta = next_eta(eta, p.tau);
            assert!(eta <= 0.25 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn eps_out_of_range_is_rejected() {
        let inst = identity(2);
        assert!(matches!(
            derive_params(&inst, 1.5),
            Err(PrimalError::EpsOutOfRange { .. })
        ));
        assert!(matches!(
            derive_params(&inst, 0.0),
            Err(PrimalError::EpsOutOfRange { .. })
        ));
        assert!(derive_params(&inst, 1.0).is_ok());
    }

    #[test]
    fn truncated_gradient_zero_at_origin_of_unit_instance() {
        let inst = identity(1);
        let g = truncated_gradient(&inst, &[0.0], 0.5);
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn truncated_gradient_caps_at_one_under_violation() {
        let inst = single_row_ones(2);
        // A exp(x) = 2 at x = 0; with beta = 0.01 the power term explodes.
        let g = truncated_gradient(&inst, &[0.0, 0.0], 0.01);
        assert_eq!(g, vec![1.0, 1.0]);
    }

    #[test]
    fn truncated_gradient_scalar_value() {
        let inst = identity(1);
        let x = [-(2.0f64.ln())];
        let g = truncated_gradient(&inst, &x, 0.1);
        let expected = -1.0 + 0.5f64.powi(10) * 0.5;
        assert!((g[0] - expected).abs() < 1e-12, "{} vs {expected}", g[0]);
    }

    #[test]
    fn truncated_gradient_range_on_random_points() {
        let mut rng = StdRng::seed_from_u64(5);
        let inst = generate_random(5, 8, 1e4, 2).unwrap();
        let p = derive_params(&inst, 0.5).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| -rng.gen::<f64>() * p.omega).collect();
            for g in truncated_gradient(&inst, &x, p.beta) {
                assert!((-1.0..=1.0).contains(&g));
            }
        }
    }

    #[test]
    fn truncation_remainder_is_nonnegative() {
        // nu = grad f_r - truncated grad lives in [0, inf) and vanishes
        // wherever the gradient is below the cap.
        let mut rng = StdRng::seed_from_u64(21);
        let inst = generate_random(4, 6, 100.0, 12).unwrap();
        let beta = 0.07;
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| -rng.gen::<f64>() * 3.0).collect();
            let full = gradient(&inst, &x, beta);
            let capped = truncated_gradient(&inst, &x, beta);
            for (g, gbar) in full.iter().zip(&capped) {
                let nu = g - gbar;
                assert!(nu >= -1e-12);
                if *g < 1.0 {
                    assert!(nu.abs() <= 1e-12 * g.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn regularized_objective_values() {
        let inst = identity(1);
        let v = regularized_objective(&inst, &[0.0], 0.5).finite().unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);

        let x = [-(2.0f64.ln())];
        let v = regularized_objective(&inst, &x, 0.5).finite().unwrap();
        let expected = 2.0f64.ln() + (1.0 / 3.0) * 0.125;
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn regularized_objective_nonnegative_in_box() {
        let mut rng = StdRng::seed_from_u64(11);
        let inst = generate_random(4, 6, 100.0, 9).unwrap();
        let p = derive_params(&inst, 0.5).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..4).map(|_| -rng.gen::<f64>() * p.omega).collect();
            match regularized_objective(&inst, &x, p.beta) {
                FrValue::Finite(v) => assert!(v >= -1e-12),
                FrValue::Saturated => {}
            }
        }
    }

    #[test]
    fn mirror_step_clips_to_box() {
        // Zero loss leaves the point unchanged.
        let z = vec![-0.3, -1.0];
        assert_eq!(mirror_step(&z, &[0.0, 0.0], 0.1, 2.0), z);
        // Pushing down at the lower edge stays at the edge.
        let z = vec![-2.0];
        assert_eq!(mirror_step(&z, &[1.0], 0.1, 2.0), vec![-2.0]);
        // Upward step clips at zero: -0.1 + 0.2 -> 0.
        let z = vec![-0.1];
        assert_eq!(mirror_step(&z, &[-1.0], 0.1, 2.0), vec![0.0]);
    }

    #[test]
    fn postprocess_values() {
        let out = postprocess(&[0.0, 0.0, 0.0], 1.5, 3);
        for v in out {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
        let out = postprocess(&[-(2.0f64.ln()), -(4.0f64.ln())], 1.0, 2);
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((out[1] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn solve_single_constraint_instance() {
        let inst = single_row_ones(2);
        let eps = 0.05;
        let (xbar, report) = solve_primal(&inst, eps).unwrap();
        let f_star = -2.0 * 2.0f64.ln();
        let f: f64 = xbar.iter().map(|v| v.ln()).sum();
        assert!(report.feasibility_residual <= 1e-12);
        assert!(f_star - f <= 5.0 * eps + 1e-9, "gap {}", f_star - f);
        assert!(f <= f_star + 1e-9);
    }

    #[test]
    fn solve_identity_instance() {
        let inst = identity(3);
        let (xbar, report) = solve_primal(&inst, 0.5).unwrap();
        let f: f64 = xbar.iter().map(|v| v.ln()).sum();
        assert!(f >= -5.0 * 0.5 - 1e-9);
        assert!(xbar.iter().all(|&v| v <= 1.0 + 1e-12));
        assert_eq!(
            report.iterations,
            derive_params(&inst, 0.5).unwrap().iterations
        );
    }

    #[test]
    fn iterates_remain_in_box() {
        let inst = generate_random(3, 5, 100.0, 17).unwrap();
        let mut run = PrimalRun::new(&inst, 0.5).unwrap();
        let omega = run.params().omega;
        while !run.done() {
            run.step();
            let st = run.state();
            for v in st.x.iter().chain(st.y.iter()).chain(st.z.iter()) {
                assert!((-omega..=0.0).contains(v));
            }
            assert_eq!(st.c_k, 3.0 * st.eta_k * run.params().l);
        }
    }

    #[test]
    fn width_does_not_change_iteration_count() {
        let eps = 0.4;
        let t: Vec<u64> = [10.0, 1e3, 1e6]
            .iter()
            .map(|&rho| {
                let inst = generate_random(4, 8, rho, 23).unwrap();
                derive_params(&inst, eps).unwrap().iterations
            })
            .collect();
        assert_eq!(t[0], t[1]);
        assert_eq!(t[1], t[2]);
    }

    #[test]
    fn threads_do_not_change_the_result() {
        let inst = generate_random(4, 7, 1e3, 31).unwrap();
        let (a, _) = solve_primal(&inst, 0.5).unwrap();
        let cfg = PrimalConfig {
            threads: 3,
            trace_path: None,
        };
        let (b, _) = solve_primal_with(&inst, 0.5, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn descent_condition_and_monotone_potential() {
        let inst = generate_random(4, 6, 50.0, 3).unwrap();
        let mut run = PrimalRun::new(&inst, 0.5).unwrap();
        let beta = run.params().beta;
        let mut prev_fr: Option<f64> = None;
        while !run.done() {
            run.step();
            let st = run.state();
            if st.k % 25 != 0 {
                continue;
            }
            let fx = regularized_objective(&inst, &st.x, beta);
            let fy = regularized_objective(&inst, &st.y, beta);
            if let (Some(fx), Some(fy)) = (fx.finite(), fy.finite()) {
                let grad = gradient(&inst, &st.x, beta);
                let dot: f64 = grad
                    .iter()
                    .zip(st.x.iter().zip(st.y.iter()))
                    .map(|(g, (x, y))| g * (x - y))
                    .sum();
                assert!(fx - fy >= 0.5 * dot - 1e-9, "descent violated");
                assert!(dot >= -1e-12);
                if let Some(prev) = prev_fr {
                    assert!(fy <= prev + 1e-9, "potential increased");
                }
                prev_fr = Some(fy);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(77);
        let inst = generate_random(4, 5, 10.0, 13).unwrap();
        let beta = 0.08;
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| -rng.gen::<f64>() * 2.0).collect();
            if regularized_objective(&inst, &x, beta).is_saturated() {
                continue;
            }
            let grad = gradient(&inst, &x, beta);
            for j in 0..4 {
                let h = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fp = regularized_objective(&inst, &xp, beta).finite().unwrap();
                let fm = regularized_objective(&inst, &xm, beta).finite().unwrap();
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    (fd - grad[j]).abs() <= 1e-4 * (grad[j].abs() + 1e-6),
                    "fd {fd} vs {}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn damped_step_descent_inequality_spot_check() {
        let mut rng = StdRng::seed_from_u64(29);
        let inst = generate_random(4, 5, 20.0, 19).unwrap();
        let beta = 0.08;
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| -rng.gen::<f64>() * 1.5).collect();
            if regularized_objective(&inst, &x, beta).is_saturated() {
                continue;
            }
            let c: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let gbar = truncated_gradient(&inst, &x, beta);
            let delta: Vec<f64> = c
                .iter()
                .zip(&gbar)
                .map(|(cj, g)| -cj * beta / (4.0 * (1.0 + beta)) * g)
                .collect();
            let x_new: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let f0 = regularized_objective(&inst, &x, beta).finite().unwrap();
            let f1 = match regularized_objective(&inst, &x_new, beta).finite() {
                Some(v) => v,
                None => continue,
            };
            let grad = gradient(&inst, &x, beta);
            let bound: f64 = (0..4)
                .map(|j| (1.0 - c[j] / 2.0) * delta[j] * grad[j])
                .sum();
            assert!(f1 - f0 <= bound + 1e-9, "lhs {} rhs {}", f1 - f0, bound);
        }
    }
}
