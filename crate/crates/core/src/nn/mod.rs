//! Neural substrate: tensors, the autodiff graph, layers, optimizer and
//! checkpoint IO.

pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod params;
pub mod tensor;

pub use graph::{Graph, NodeId};
pub use layers::{Activation, Dense, Embedding, GruCell, LstmCell, LstmState};
pub use params::{Adam, ParameterStore};
pub use tensor::{Shape, Tensor};
