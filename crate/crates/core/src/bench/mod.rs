//! Grid description files, the bundled benchmark feeder and CSV output.

mod benchmark;
mod gridfile;
mod output;

pub use benchmark::{build_benchmark, benchmark_description, BENCHMARK_GRID, MONITORED_LINES, LOAD_NODES};
pub use gridfile::{
    parse_grid, parse_grid_text, phase_to_sequence, sequence_to_phase, ConfigData, GridBundle, GridDescription,
    LengthUnit, LineConfig, LineSpec, NodeSpec, ResourceSpec, SlackImpedance, SlackSpec, TransformerSpec, MILE_KM,
};
pub use output::{
    fmt_sci, read_snapshot, write_atomic, write_currents, write_power_flow, write_snapshot, write_trace,
    write_vsi_report, CURRENT_HEADER, POWER_FLOW_HEADER, SNAPSHOT_HEADER, TRACE_HEADER, VSI_HEADER,
};
