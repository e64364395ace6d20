//! Resilience simulation for iterative stencil codes.
//!
//! The crate has three layers:
//!
//! * a discrete-event simulator ([`engine`]) that executes the unrolled data-flow
//!   graph of a 1D stencil ([`graph`]) on a star-network platform ([`platform`]),
//!   injects seeded exponential failures ([`failure`]) and recovers through one of
//!   the rollback planners in [`strategy`];
//! * the closed-form energy-savings model in [`energy`];
//! * an application-level 2D Jacobi solver over emulated ranks ([`jacobi`]) that
//!   runs global and data-flow rollback on real values and checks that they agree
//!   bit for bit with a fault-free run.

pub mod energy;
pub mod engine;
pub mod error;
pub mod failure;
pub mod graph;
pub mod jacobi;
pub mod platform;
pub mod stats;
pub mod strategy;
pub mod topology;

pub use error::{Error, Result};
