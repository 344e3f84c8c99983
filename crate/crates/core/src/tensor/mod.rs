//! Dense tensors and minimal reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: it supplies exactly the operations the
//! question-generation model needs (matmul, elementwise nonlinearities,
//! softmax, concat, gather/scatter, dropout) recorded on a [`Graph`] arena
//! and replayed in reverse for gradients. All arithmetic is 64-bit; forward
//! results are bit-identical across runs given the same seed.
//!
//! Contract split:
//! - Shape and index violations are programmer errors and panic with both
//!   shapes in the message.
//! - NaN/Inf are never silently accepted as *valid* results: ops propagate
//!   them, and callers detect via [`Graph::assert_finite`] or by checking
//!   scalar losses (the training loop does). `log` of a non-positive finite
//!   value panics (domain error).
//! - Gradients accumulate across `backward` calls until [`Graph::zero_grads`].

mod gradcheck;
mod graph;
mod init;
pub(crate) mod store;


pub use gradcheck::grad_check;
pub use graph::{Graph, Op, TensorRef};
pub use init::{clip_gradients, glorot_init, sgd_step};
pub use store::{read_tensors, write_tensors, Dtype, NamedTensor, TENSOR_STORE_VERSION};

/// Plain dense tensor: shape plus row-major values. This is the boundary
/// type (checkpoints, fixtures); differentiable computation happens on
/// [`Graph`] nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Self {
        assert!(
            shape.iter().all(|&d| d > 0),
            "tensor dimensions must be positive, got {shape:?}"
        );
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            values.len(),
            "shape {:?} implies {} values, got {}",
            shape,
            numel,
            values.len()
        );
        Tensor { shape, values }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel])
    }

    /// 1 x n row vector.
    pub fn row(values: Vec<f64>) -> Self {
        let n = values.len();
        Tensor::new(vec![1, n], values)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![1, 1], vec![v])
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    /// NaN/Inf detection. Returns the flat index of the first non-finite
    /// value, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }
}
