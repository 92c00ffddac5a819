//! DC linearization of the rate terms, assembly of the convex subproblems of each
//! alternating step, a conic solver backend and time-sharing rounding.

mod allocation;
pub mod convex;
pub mod pieces;
mod rounding;
pub mod subproblems;

use thiserror::Error;

pub use allocation::Allocation;
pub use convex::{solve_convex, ConvexSolution, ConvexStatus, ConvexSubproblem, SolveOptions};
pub use pieces::{
    dc_decompose_access, dc_decompose_fronthaul, linearize_concave, AccessLink, Block, DcPieces,
    FronthaulLink, VarKey,
};
pub use rounding::{cover_starved_users, round_timesharing, ROUNDING_THRESHOLD};
pub use subproblems::{
    assemble_power_subproblem, assemble_subcarrier_subproblem, solve_alpha_lp, solve_delay_lp,
};

use crate::phy_rates::PhyError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("degenerate expansion point: {0}")]
    DegeneratePoint(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("iteration limit reached after {0} iterations")]
    IterLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("constraint {0} is not convex")]
    NotConvex(String),
    #[error(transparent)]
    Phy(#[from] PhyError),
}
