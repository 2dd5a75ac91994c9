//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! The engine provides exactly the layer set the learned estimator needs:
//! 3×3 convolutions, 2×2 stride-2 transposed convolutions, 2×2 max pooling,
//! fully connected layers, ReLU/sigmoid, global average pooling, channel
//! concatenation/scaling/dropout, elementwise addition, mean-squared-error
//! loss, and small shape plumbing (reshape and flat slicing). Each
//! operation computes eagerly on
//! a [`Graph`] and records a tape entry when gradients are being tracked;
//! [`Graph::backward`] replays the tape once in reverse.
//!
//! The network path runs in `f32`. Everything is generic over [`Scalar`] so
//! [`grad_check`] can run the identical code in `f64`, separating backward
//! implementation errors from rounding effects. [`adam_step`] implements
//! the bias-corrected Adam update, and [`Checkpoint`] persists parameters
//! (and optionally optimizer moments) in a self-describing binary file.
//!
//! ## Example
//!
//! ```rust
//! use hyperce_core::nn::{Graph, Tensor};
//!
//! let mut g = Graph::<f32>::new();
//! let x = g.leaf(Tensor::from_vec(vec![1, 2], vec![1.0, -2.0]).unwrap().with_requires_grad());
//! let target = g.leaf(Tensor::zeros(vec![1, 2]));
//! let y = g.relu(x);
//! let loss = g.mse_loss(y, target).unwrap();
//! g.backward(loss).unwrap();
//! // d/dx of relu(x)^2 is 2x where x > 0, and 0 where the unit is dead.
//! assert_eq!(g.grad(x).unwrap(), &[2.0, 0.0]);
//! ```

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub(crate) mod kernels;
pub mod optim;
pub mod tensor;

pub use checkpoint::{Checkpoint, CheckpointEntry};
pub use gradcheck::{grad_check, standard_op_checks, GradCheckReport};
pub use graph::{Graph, TensorId};
pub use optim::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tensor::{Scalar, Tensor};
