//! Minimal dense-tensor engine with tape-based reverse-mode differentiation.
//!
//! The op set is deliberately narrow: 2D/3D convolutions, transposed 2D
//! convolution, the handful of elementwise and recurrent-cell ops an LSTM
//! needs, and a fused log-softmax negative log-likelihood over a spatial grid.
//! There is no broadcasting.
//!
//! A [`Graph`] records every op applied to its [`Var`]s. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and returns
//! a [`Gradients`] buffer with one entry per node that requires a gradient.
//!
//! ```
//! use stcnn_tensor::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.leaf(Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap(), true);
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 6.0]);
//! ```

pub mod check;
mod conv;
mod error;
mod graph;
mod init;
mod optim;
mod params;
mod real;
mod tensor;

pub use conv::{conv_output_len, conv_transpose_output_len};
pub use error::TensorError;
pub use graph::{Gradients, Graph, Var};
pub use init::glorot_uniform;
pub use optim::{Adam, AdamConfig};
pub use params::{Bindings, ParameterStore};
pub use real::Real;
pub use tensor::Tensor;

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
