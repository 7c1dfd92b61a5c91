//! Operations-based siting and sizing of grid energy storage.
//!
//! The pipeline runs from a validated [`grid::Grid`] through DC power flow
//! and a least-cost base dispatch to an optimal storage schedule against
//! random renewable fluctuations, and finally to an iterative reduction of
//! the set of storage nodes.

pub mod dcopf;
pub mod dispatch;
mod error;
pub mod grid;
pub mod horizon;
pub mod matpower;
pub mod metrics;
pub mod penalty;
pub mod placement;
pub mod powerflow;
pub mod profile;
pub mod trial;

pub use error::{Error, ErrorKind};

// The guide's code blocks run as doctests, one module per chapter so a
// failure points at its source.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../docs/grid-format.md")]
    mod grid_format {}
    #[doc = include_str!("../../../book/src/power-flow.md")]
    mod power_flow {}
    #[doc = include_str!("../../../book/src/penalties.md")]
    mod penalties {}
    #[doc = include_str!("../../../book/src/dispatch.md")]
    mod dispatch {}
    #[doc = include_str!("../../../book/src/profiles.md")]
    mod profiles {}
    #[doc = include_str!("../../../book/src/placement.md")]
    mod placement {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
