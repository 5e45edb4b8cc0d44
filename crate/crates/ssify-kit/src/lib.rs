//! A compiler middle-end toolkit that converts a small CFG-based IR into
//! static single information flavors by parameterizable live range
//! splitting, then solves per-variable lattice problems sparsely over
//! def-use chains. Dense solvers, a concrete interpreter and a sparse
//! evaluation graph builder serve as independent correctness oracles.

pub mod clients;
pub mod corpus;
pub mod dataflow;
pub mod dot;
pub mod graph;
pub mod interp;
pub mod ir;
pub mod points;
pub mod seg;
pub mod ssi_check;
pub mod ssify;
pub mod strategy;
pub mod text;
pub mod verify;
