//! Dense tensors, tape-based reverse-mode differentiation, seeded randomness
//! and gradient checking.

mod check;
pub mod linalg;
mod param;
mod rng;
mod tape;
mod tensor;

pub use check::{evaluate, finite_diff_check, finite_diff_check_five_point, gradient, jacobian, relative_error, REL_ERR_FLOOR};
pub use param::ParamVector;
pub use rng::Seed;
pub use tape::{Gradients, Tape, Var, COSINE_EPS};
pub use tensor::{
    dot, elementwise, log_softmax, matmul, matvec, matvec_t, sigmoid, softmax, ElemOp, Tensor,
};
