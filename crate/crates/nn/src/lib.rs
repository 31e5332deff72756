//! Minimal differentiable tensor core: eager ops recorded on a [`Graph`],
//! reverse-mode gradients, SGD with momentum, finite-difference checking and
//! JSON checkpoints. Everything is `f64` and single-threaded per graph.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod optim;
pub mod param;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use graph::{Activation, BatchNormParams, Gradients, Graph, Mode, NodeId, Padding};
pub use optim::sgd_step;
pub use param::{ParamId, ParamKind, ParamStore, Parameter};
pub use tensor::Tensor;
