//! Hand-differentiated neural building blocks: a keypoint-velocity temporal CNN
//! and a dual (spatial + temporal) attention recurrent network over a small
//! convolutional encoder, with optimizers, clip sampling and gradient checking.

pub mod attention;
pub mod checkpoint;
pub mod clips;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod lstm;
pub mod optim;
pub mod params;
pub mod tcn;
pub mod tensor;
pub mod train;

pub use error::{NeuralError, Result};
pub use graph::{Graph, NodeId};
pub use params::ParamStore;
pub use tensor::{Scalar, Tensor};
