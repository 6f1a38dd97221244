//! Minimal reverse-mode differentiation over the operations the surrogate
//! networks need.

mod ops;
mod optim;
mod param;
mod real;
mod spectral;
mod tape;

pub use ops::{broadcast_shape, conv_out, gelu, gelu_grad, BatchStats};
pub use optim::{AdamW, AdamWConfig};
pub use param::{Param, ParamStore};
pub use real::{gemm, Real};
pub use spectral::kept_rows;
pub use tape::{Backward, Ctx, Grads, Tape, Tensor, Var};
