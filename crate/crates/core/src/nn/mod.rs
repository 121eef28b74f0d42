//! Dense tensors and the forward/backward layer kernels used by both
//! networks.

pub mod activation;
pub mod conv;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod named;
pub mod optim;
pub mod pool;
pub mod tensor;

pub use activation::{activation, activation_backward, sigmoid, Activation};
pub use conv::{
    conv2d, conv2d_backward, transposed_conv2d, transposed_conv2d_backward, ConvGrads, ConvSpec,
};
pub use gradcheck::{
    grad_check, grad_check_directional, grad_check_sampled, Differentiable, GradCheckReport,
    LayerCatalog,
};
pub use loss::{bce_loss, BceOutput, BCE_EPS};
pub use named::{Gradients, NamedTensors};
pub use optim::{optimizer_step, OptState, OptimizerHyper, OptimizerRegistry, UpdateRule};
pub use pool::{
    adaptive_avg_pool2d, adaptive_avg_pool2d_backward, concat_channels, maxpool2d,
    maxpool2d_backward, split_channels, upsample_nearest, upsample_nearest_backward, MaxPoolOutput,
};
pub use tensor::{Scalar, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("unknown optimizer `{0}`")]
    UnknownOptimizer(String),
}
