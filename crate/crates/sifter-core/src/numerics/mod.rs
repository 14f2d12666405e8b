//! Dense vector/matrix kernels, the seeded RNG, and dropout.
//!
//! Everything here is deliberately small: row-major storage, rank 1 or 2,
//! sequential left-to-right reductions so results are reproducible down to
//! the bit on any platform. No broadcasting, no autodiff, no SIMD heroics.

mod rng;
mod tensor;

pub use rng::{DropoutMask, Rng};
pub use tensor::{
    add, add_assign, dot, dropout, hadamard, l2_normalize, matmul, matvec_t, norm, outer, scale,
    sigmoid, softmax, sub, tanh, Dtype, Scalar, Shape, Tensor,
};
