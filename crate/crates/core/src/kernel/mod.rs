//! Nearest-neighbor fitted Q-evaluation and its exact influence functions.

pub mod fqe;
pub mod graph;
pub mod influence;

pub use fqe::{
    compute_propagation, resolve_horizon, run_kernel_fqe, FqeResult, PropagationMatrices,
};
pub use graph::{build_neighbor_graph, NeighborGraph};
pub use influence::{
    cutoff_count, individual_influence, influence_report, InitialPropagation, KernelInfluence,
};
