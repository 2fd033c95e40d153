//! Solvers for the packing proportional-fairness problem
//! `max { sum_i log x_i : Ax <= 1, x >= 0 }` with non-negative `A`, and for
//! its Lagrange dual over the probability simplex.
//!
//! The crate provides:
//! - [`instance`]: sparse problem representation, column normalization,
//!   box-row augmentation, synthetic generation and Matrix Market I/O;
//! - [`primal`]: an accelerated mirror/gradient-coupled method on the
//!   reparametrized, barrier-regularized objective, with width-independent
//!   iteration counts;
//! - [`distsim`]: a round-based simulation showing the primal method runs
//!   in a distributed model where each agent sees only its own column;
//! - [`dual`]: a restarted multiplicative-weights scheme with a geometric
//!   feasibility oracle for the dual problem;
//! - [`ylstage`]: a single fixed-corner Yamnitsky-Levin volume-reduction
//!   stage solving the same problem, for head-to-head comparison;
//! - [`refsolver`]: an independent barrier-Newton reference solver and the
//!   strong/weak duality cross-checks.

pub mod distsim;
pub mod dual;
pub mod instance;
pub mod primal;
pub mod refsolver;
pub mod report;
pub mod ylstage;

pub use instance::{
    augment_with_box_rows, generate_random, generate_random_with_density, normalize_columns,
    read_matrix_market, write_matrix_market, InstanceError, ProblemInstance,
};
pub use report::{PhaseRecord, SolveReport};
