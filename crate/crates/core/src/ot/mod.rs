//! Reference optimal transport: an exact LP solver and entropic Sinkhorn.

pub mod exact;
pub mod sinkhorn;

pub use exact::{
    solve_exact_ot, solve_exact_ot_capped, squared_cost, transport_lp, w2_squared, w2_squared_capped,
    LpSolution, DEFAULT_MAX_ENTRIES,
};
pub use sinkhorn::{sinkhorn, sinkhorn_with_cost, SinkhornConfig, SinkhornDomain, SinkhornSolution};
