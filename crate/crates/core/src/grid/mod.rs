//! Polyphase grid model, compound admittance assembly, Kron reduction and
//! hybrid parameters.

mod block;
mod model;
mod reduction;

pub use block::{BlockMatrix, NodeKey};
pub use model::{
    assemble_admittance, build_incidence, build_polyphase_incidence, parse_phase_label, phase_label,
    validate_parameters, Branch, Element, GridModel, Node, NodeId, NodeRole, PhaseIndex, Shunt, Violation,
    ViolationKind, DEFAULT_TOLERANCE,
};
pub use reduction::{hybrid_partition, kron_reduce, HybridPartition};
