//! Deterministic numeric core: dense matrices, a reverse-mode tape over
//! them, the losses the models need, and first-order optimisers.

mod loss;
mod matrix;
mod optim;
mod params;
mod sparse;
mod tape;

pub use loss::{dropout, loss, LossKind};
pub use matrix::{relu, sigmoid, Matrix};
pub use optim::{Adam, AdamConfig, Optimizer, Sgd};
pub use params::{ParamId, ParamStore};
pub use sparse::SparseMatrix;
pub use tape::{Gradients, Tape, Var};
