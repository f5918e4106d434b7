//! Dense 4-D tensors, convolution layers and the pansharpening network.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod loss;
pub mod network;
pub mod tensor;

pub use activation::Activation;
pub use batchnorm::{BatchNormParams, Mode};
pub use conv::{conv_backward, conv_forward, ConvGrads, Padding};
pub use loss::{loss_eval, LossKind, LossSpec};
pub use network::{
    network_backward, network_backward_with_input, network_forward, network_forward_cached, ForwardCache, Grads,
    InputLayout, LayerSpec, NetworkParams, NetworkSpec,
};
pub use tensor::Tensor4;
