//! Voltage stability assessment of unbalanced polyphase power grids.
//!
//! The grid is described by compound (per-phase-block) admittance matrices,
//! slack nodes by Thévenin equivalents and resources by ZIP polynomial models.
//! [`vsi`] computes a generalized L-index from a known operating point;
//! [`power_flow`] and [`continuation`] trace the nose curve used to validate it.

pub mod bench;
pub mod continuation;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod newton;
pub mod node_models;
pub mod power_flow;
pub mod vsi;

pub use error::{Error, Result};
