//! Dense tensors and a small reverse-mode autodiff tape.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, rel_err, GradCheckReport, REL_ERR_FLOOR};
pub use graph::{Gradients, Graph, NodeId, ParamId, ParamStore, LAYER_NORM_EPS, MASK_FILL};
pub use tensor::{cross_entropy_probs, cst, gelu, gelu_grad, Float, Tensor};

#[cfg(test)]
mod tests;
