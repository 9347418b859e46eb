//! Simulator of a unitary branching-record model and its extreme-order
//! statistics.

pub mod params;
pub mod pareto;
pub mod topology;
pub mod evolution;
pub mod oracle;
pub mod ks;
pub mod statistics;
pub mod born;

pub use params::{ModelParams, ParamError, RecordScope};
pub use topology::{build_topology, build_recall_sets, build_topology_seeded, OrbitTopology, TopologyError};
