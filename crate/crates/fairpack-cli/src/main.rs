//! `fairpack` command line: instance I/O, the primal/dual/YL solvers, the
//! certified duality check, and synthetic benchmark generation.
//!
//! Exit codes: 0 success, 2 input error, 3 parameter error, 4 iteration-cap
//! error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fairpack::dual::{self, DualError};
use fairpack::instance::{self, InstanceError, ProblemInstance};
use fairpack::primal::{self, PrimalConfig, PrimalError};
use fairpack::refsolver::{self, RefError};
use fairpack::report::SolveReport;
use fairpack::ylstage::{self, YlConfig, YlError};

const EXIT_INPUT: u8 = 2;
const EXIT_PARAM: u8 = 3;
const EXIT_CAP: u8 = 4;

#[derive(Parser)]
#[command(
    name = "fairpack",
    version,
    about = "Solvers for 1-fair packing and its dual"
)]
struct Cli {
    /// Solver worker threads (default 1, or FAIRPACK_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long = "json-out")]
    json_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the primal problem to a feasible 5-eps-optimal point.
    SolvePrimal {
        path: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Stream per-iteration rows `k,fr,residual` to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve the dual problem to an eps-optimal simplex point.
    SolveDual {
        path: PathBuf,
        #[arg(long)]
        eps: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run one Yamnitsky-Levin volume-reduction stage.
    Yl {
        path: PathBuf,
        /// Iteration cap; defaults to the n^3 log n stage bound.
        #[arg(long = "iter-cap")]
        iter_cap: Option<u64>,
        /// Stream per-iteration rows `k,j,ghat,log_volume` to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve both sides and report the certified duality gap; on desk-scale
    /// instances also cross-check against the reference solver.
    Check {
        path: PathBuf,
        #[arg(long)]
        eps: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Generate a seeded random instance and write it in Matrix Market
    /// format (plus JSON sidecar).
    Gen {
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = instance::DEFAULT_DENSITY)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<InstanceError> for Failure {
    fn from(e: InstanceError) -> Self {
        let code = match e {
            InstanceError::BadParam(_) => EXIT_PARAM,
            _ => EXIT_INPUT,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<PrimalError> for Failure {
    fn from(e: PrimalError) -> Self {
        let code = match e {
            PrimalError::EpsOutOfRange { .. } => EXIT_PARAM,
            PrimalError::Io(_) => EXIT_INPUT,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<DualError> for Failure {
    fn from(e: DualError) -> Self {
        let code = match e {
            DualError::EpsOutOfRange { .. } | DualError::BadParam(_) => EXIT_PARAM,
            DualError::BisectionStall { .. } => EXIT_CAP,
            _ => EXIT_INPUT,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<YlError> for Failure {
    fn from(e: YlError) -> Self {
        let code = match e {
            YlError::IterCapExceeded { .. } => EXIT_CAP,
            YlError::Io(_) => EXIT_INPUT,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<RefError> for Failure {
    fn from(e: RefError) -> Self {
        let code = match e {
            RefError::NotConverged => EXIT_CAP,
            _ => EXIT_INPUT,
        };
        Failure::new(code, e.to_string())
    }
}

fn emit<T: Serialize>(report: &T, json_out: &Option<PathBuf>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    match json_out {
        Some(path) => {
            let mut w = BufWriter::new(
                File::create(path).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?,
            );
            writeln!(w, "{text}").map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn load(path: &Path) -> Result<ProblemInstance, Failure> {
    Ok(instance::read_matrix_market(path)?)
}

fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("FAIRPACK_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(1)
}

#[derive(Serialize)]
struct CheckReport {
    primal: SolveReport,
    dual: SolveReport,
    duality: DualityGapReport,
    reference: Option<ReferenceReport>,
}

#[derive(Serialize)]
struct DualityGapReport {
    f: f64,
    g: f64,
    gap: f64,
    primal_residual: f64,
}

#[derive(Serialize)]
struct ReferenceReport {
    f_star: f64,
    g_star: f64,
    kkt_residual: f64,
    primal_gap_vs_reference: f64,
    dual_gap_vs_reference: f64,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = thread_count(cli.threads);
    match cli.command {
        Command::SolvePrimal {
            path,
            eps,
            trace,
            output,
        } => {
            let inst = load(&path)?;
            let cfg = PrimalConfig {
                threads,
                trace_path: trace,
            };
            let (_, report) = primal::solve_primal_with(&inst, eps, &cfg)?;
            emit(&report, &output.json_out)
        }
        Command::SolveDual { path, eps, output } => {
            let inst = load(&path)?;
            let (aug, _) = instance::augment_with_box_rows(&inst);
            let (_, report) = dual::solve_dual(&aug, eps)?;
            emit(&report, &output.json_out)
        }
        Command::Yl {
            path,
            iter_cap,
            trace,
            output,
        } => {
            let inst = load(&path)?;
            let cap = iter_cap.unwrap_or_else(|| ylstage::default_iter_cap(inst.cols()));
            let cfg = YlConfig { trace_path: trace };
            let (_, report) = ylstage::yl_stage_with(&inst, cap, &cfg)?;
            emit(&report, &output.json_out)
        }
        Command::Check { path, eps, output } => {
            let inst = load(&path)?;
            let cfg = PrimalConfig {
                threads,
                trace_path: None,
            };
            let (xbar, primal_report) = primal::solve_primal_with(&inst, eps, &cfg)?;
            let (aug, _) = instance::augment_with_box_rows(&inst);
            let (lambda, dual_report) = dual::solve_dual(&aug, eps)?;
            let duality = refsolver::duality_report(&aug, &xbar, &lambda)?;
            let reference = match refsolver::reference_solve(&inst) {
                Ok(sol) => Some(ReferenceReport {
                    f_star: sol.f_star,
                    g_star: sol.g_star,
                    kkt_residual: sol.kkt_residual,
                    primal_gap_vs_reference: sol.f_star - duality.f,
                    dual_gap_vs_reference: duality.g - sol.g_star,
                }),
                Err(RefError::ScaleTooLarge { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            let report = CheckReport {
                primal: primal_report,
                dual: dual_report,
                duality: DualityGapReport {
                    f: duality.f,
                    g: duality.g,
                    gap: duality.gap,
                    primal_residual: duality.primal_residual,
                },
                reference,
            };
            emit(&report, &output.json_out)
        }
        Command::Gen {
            out,
            n,
            m,
            rho,
            density,
            seed,
        } => {
            let inst = instance::generate_random_with_density(n, m, rho, density, seed)?;
            instance::write_matrix_market(&inst, &out)?;
            let sidecar = instance::InstanceSidecar {
                m: inst.rows(),
                n: inst.cols(),
                nnz: inst.nnz(),
                width: inst.width(),
                col_scale: inst.col_scale().to_vec(),
                objective_offset: inst.objective_offset(),
            };
            emit(&sidecar, &None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
