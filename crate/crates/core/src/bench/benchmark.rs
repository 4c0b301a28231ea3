use crate::error::{Error, Result};
use crate::grid::NodeId;

use super::gridfile::{parse_grid_text, GridBundle, GridDescription};

/// Canonical benchmark grid file.
pub const BENCHMARK_GRID: &str = include_str!("../../data/benchmark.grid");

/// Nodes hosting the loads.
pub const LOAD_NODES: [NodeId; 6] = [9, 14, 17, 20, 23, 25];

/// Lines whose currents are reported, with their rated currents in A.
pub const MONITORED_LINES: [(NodeId, NodeId, f64); 7] = [
    (1, 2, 300.0),
    (5, 6, 230.0),
    (8, 10, 230.0),
    (12, 15, 180.0),
    (16, 18, 180.0),
    (19, 21, 180.0),
    (22, 24, 180.0),
];

pub fn benchmark_description() -> Result<GridDescription> {
    let desc = parse_grid_text(BENCHMARK_GRID)?;
    for name in ["300", "301"] {
        if desc.config(name).is_none() {
            return Err(Error::MissingData(format!("IEEE line configuration {name}")));
        }
    }
    Ok(desc)
}

pub fn build_benchmark() -> Result<GridBundle> {
    benchmark_description()?.to_models()
}
