//! Minimal dense-tensor numerical core: tensors, a reverse-mode tape,
//! gated recurrent layers, Adam, finite-difference checking and binary
//! checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod tensor;

pub use adam::{scheduled_lr, AdamState};
pub use gradcheck::HasParams;
pub use graph::{Gradients, Graph, NodeRef};
pub use layers::{Attention, CellKind, Embedding, Linear, ParamRegistry, RnnStack};
pub use tensor::{Scalar, Tensor};
