//! Dense numeric core: matrices, a feed-forward classifier with manual backpropagation,
//! temperature softmax, plain SGD and a central-difference gradient checker.

pub mod checkpoint;
pub mod extended;
mod gradcheck;
mod matrix;
mod network;
mod prob;

pub use gradcheck::grad_check;
pub use matrix::Matrix;
pub use network::{Activation, ForwardTrace, Gradients, Layer, LayerGradient, Network};
pub use prob::{argmax, log_softmax_rows, softmax, softmax_rows, ProbVector, SUM_TOLERANCE};
