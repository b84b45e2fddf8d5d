//! Differentiable building blocks: convolution, activations, batch norm, loss,
//! and initializers.

pub mod activation;
pub mod batchnorm;
pub mod conv;
mod gemm;
pub mod init;
pub mod loss;

pub use activation::{relu, relu_backward, selu, selu_backward, SELU_ALPHA, SELU_LAMBDA};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormGrads, BatchNormLayer, NormMode,
};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvLayer};
pub use init::{init_gaussian, init_msra, init_msra_with, MsraScale};
pub use loss::l2_loss;
