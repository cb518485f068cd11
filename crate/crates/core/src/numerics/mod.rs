//! Dense tensors, reverse-mode autodiff, and the Adam optimizer.

mod adam;
pub mod checkpoint;
mod params;
mod real;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use params::{truncated_normal, Bound, ParamId, ParamStore};
pub use real::{matmul_raw, Real};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Standard deviation of the truncated-normal weight initializer.
pub const INIT_STD: f64 = 0.02;

/// Stand-alone activation/normalization helpers over plain tensors.
pub mod ops {
    use super::{Real, Tape, Tensor};

    pub fn gelu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
        let tape = Tape::new();
        tape.constant(x.clone()).gelu().value().as_ref().clone()
    }

    /// Softmax along the last axis.
    pub fn softmax<T: Real>(x: &Tensor<T>) -> Tensor<T> {
        let tape = Tape::new();
        tape.constant(x.clone()).softmax_rows().value().as_ref().clone()
    }

    pub fn layer_norm<T: Real>(x: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>, eps: f64) -> Tensor<T> {
        let tape = Tape::new();
        let (x, g, b) = (
            tape.constant(x.clone()),
            tape.constant(gain.clone()),
            tape.constant(bias.clone()),
        );
        x.layer_norm(g, b, T::from_f64_lossy(eps))
            .value()
            .as_ref()
            .clone()
    }
}
