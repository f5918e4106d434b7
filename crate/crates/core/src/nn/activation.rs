use super::Tensor4;
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

pub fn relu(x: &Tensor4) -> Tensor4 {
    Tensor4 {
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
        ..*x
    }
}

/// Passes the gradient where `x > 0`; the kink at 0 gets 0.
pub fn relu_backward(x: &Tensor4, grad_out: &Tensor4) -> Result<Tensor4> {
    ensure!(
        x.shape() == grad_out.shape(),
        ShapeMismatch,
        "relu input {:?} vs grad {:?}",
        x.shape(),
        grad_out.shape()
    );
    Ok(Tensor4 {
        data: x
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
        ..*x
    })
}

impl Activation {
    pub fn forward(self, x: &Tensor4) -> Tensor4 {
        match self {
            Activation::Relu => relu(x),
            Activation::Identity => x.clone(),
        }
    }

    pub fn backward(self, x: &Tensor4, grad_out: Tensor4) -> Result<Tensor4> {
        match self {
            Activation::Relu => relu_backward(x, &grad_out),
            Activation::Identity => Ok(grad_out),
        }
    }
}
