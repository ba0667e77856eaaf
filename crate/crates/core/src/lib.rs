//! Steiner point removal: exact-distance minor preprocessing, randomized
//! ball-growing terminal partitions, minor contraction with distortion
//! measurement, run instrumentation, and exponential tail-bound numerics.

// `!(x >= 0.0)` rejects NaN on purpose; index loops walk pair matrices
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod ball_growing;
pub mod experiment;
pub mod generate;
pub mod graph;
pub mod io;
pub mod partition;
pub mod preprocess;
pub mod tail_bounds;

pub use ball_growing::{run, GrowthParams, RunTrace};
pub use graph::{Instance, VertexId, WeightedGraph};
pub use partition::{contract, distortion, TerminalMinor, TerminalPartition};
pub use preprocess::exact_minor;
