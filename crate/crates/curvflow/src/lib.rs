//! Numerical engine for extrinsic curvature flows of graph hypersurfaces
//! in catalogued semi-Riemannian warped-product manifolds: prescribed
//! curvature flows with stationary detection and Newton refinement, CMC
//! foliations with ordering and time-function certificates, the inverse
//! mean curvature flow with its exact volume decay law, evolution-identity
//! validation, and a property-test battery for the concavity structure of
//! curvature functions.
//!
//! The crate is organized bottom-up: `ambient` (model catalog with
//! analytic tensor closures) and `grid` (periodic finite differences)
//! carry `geometry` (graph hypersurface data), which feeds `curvfunc`
//! (curvature functions and deformations), `flow` (time stepping and
//! diagnostics), `identities` (evolution-identity probes), `foliation`
//! (linearization, Newton, CMC sweeps) and `battery` (seeded structural
//! checks). `config`/`report`/`cli` form the batch front end.

// tensor contractions read better with explicit index loops
#![allow(clippy::needless_range_loop)]

pub mod ambient;
pub mod battery;
pub mod cli;
pub mod config;
pub mod curvfunc;
pub mod flow;
pub mod foliation;
pub mod geometry;
pub mod grid;
pub mod identities;
mod linalg;
pub mod report;
