//! Reverse-mode differentiable numerics: dense tensors, the recording graph,
//! special functions, finite-difference gradient checks and the Adam update.

mod adam;
mod gradcheck;
mod graph;
pub mod special;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{check_gradients, GradCheckReport};
pub use graph::{softmax_rows, Graph, Var};
pub use special::{digamma, lgamma, trigamma};
pub use tensor::Tensor;
