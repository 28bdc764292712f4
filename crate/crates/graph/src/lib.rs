//! Graphs, exact counting oracles, synthetic graph families and the
//! deterministic walk agents used to check expressiveness results.

pub mod datasets;
pub mod error;
pub mod graph;
pub mod io;
pub mod iso;
pub mod oracles;
pub mod protocols;
pub mod rng;
pub mod theory;
pub mod walks;

pub use error::{GraphError, WalkError};
pub use graph::{AnchoredPattern, Graph, NodeId};
