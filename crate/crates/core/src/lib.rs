//! Block-structured adaptive mesh refinement with geometric multigrid.
//!
//! The crate is organized bottom-up:
//!
//! - [`blockforest`]: a 2:1-balanced forest of octree (quadtree in 2D) leaf blocks,
//!   face-neighbor topology and Morton-ordered rank assignment.
//! - [`fields`]: cell-centered block fields with one ghost layer, index ranges and
//!   per-level geometry.
//! - [`interp`]: linear fine-to-coarse averaging and constant/linear/quadratic
//!   coarse-to-fine Lagrange extrapolation, together with the pack/unpack ordering.
//! - [`comm`]: exchange plans, segment-tagged envelopes routed between simulated
//!   ranks, and communication-volume accounting.
//! - [`mg`]: cell-centered finite-volume Poisson operator and a V-cycle
//!   multigrid solver that performs the refined exchange on every level.
//! - [`harness`]: run configuration, presets and report generation shared by the
//!   command-line tool and the Python bindings.

pub mod blockforest;
pub mod comm;
pub mod error;
pub mod fields;
pub mod harness;
pub mod interp;
pub mod mg;

pub use blockforest::{
    n_neigh, Aabb, BlockId, Blockforest, Direction, NeighborCase, NeighborInfo, RankMap,
    RefineStep, RATIO,
};
pub use comm::{ExchangePlan, Envelope, Exchanger, VolumeReport};
pub use error::{Error, Result};
pub use fields::{BlockField, Cell, CellRange, Geometry};
pub use interp::{OrthogonalFrame, SchemeOrder};
pub use mg::{BoundarySpec, MgHierarchy, SolverConfig};
