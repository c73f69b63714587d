//! Dense tensors, a reverse-mode tape over a fixed operator set, Adam, and a
//! finite-difference gradient checker.

mod adam;
mod gradcheck;
mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use adam::Adam;
pub use gradcheck::{grad_check, grad_check_subset, GradCheck};
pub use graph::{Graph, Var};
pub use params::ParamStore;
pub use tensor::Tensor;
