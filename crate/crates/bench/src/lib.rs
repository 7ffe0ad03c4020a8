//! Benchmark harness for the `cbgraph` engine: edge-list loading, workload
//! runs, update-stream replay, configuration sweeps and counter capture.
//!
//! Every run produces one [`RunReport`], written as a JSON line and, for
//! sweeps, as a CSV row.

pub mod counters;
mod error;
pub mod load;
pub mod report;
pub mod stream;
pub mod sweep;
pub mod workload;

pub use counters::{HardwareCounters, SoftwareCounters};
pub use error::BenchError;
pub use load::{load_graph, load_graph_from_reader, synthetic_graph, LoadOptions, LoadStats};
pub use report::{mode_label, RunConfig, RunReport, RunStatus};
pub use stream::{graph_checksum, update_stream_driver, StreamParams, UpdateStream};
pub use sweep::{sweep, SweepMatrix, SweepOutcome};
pub use workload::{execute, run_workload, Workload, WorkloadOutput};
