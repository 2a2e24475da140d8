//! High-SNR outage exponents.
//!
//! An outage probability behaves like `rho^{-d}` where `d` is the infimum
//! of a sum of exponential orders over the outage region. This module
//! builds those regions and finds the infimum on a grid, which gives an
//! independent check of the closed forms in [`crate::dmt`].

mod expr;
mod region;
mod solver;
mod verify;

pub use expr::{c, one_minus, var, Expr, Pred};
pub use region::{build_region, Listen, ModeProtocol, OutageRegion, RegionId, RegionParams, Variable};
pub use solver::{solve_inf, SolveResult, BOX_WIDTH};
pub use verify::{
    default_checks, optimize_time_split, verify_catalog, CatalogCheck, SolverSettings, SolverTarget,
    TimeSplitFamily, TimeSplitResult, VerifyReport, VerifyRow,
};
