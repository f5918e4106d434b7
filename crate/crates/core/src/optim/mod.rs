//! Mini-batch SGD with momentum, training loop and checkpoints.

pub mod checkpoint;
pub mod dataset;
pub mod train;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint};
pub use dataset::{Dataset, EpochSampler};
pub use train::{train, train_from, validate, History, HistoryRow, TrainConfig, TrainOutcome};

use crate::error::{ensure, Error, Result};
use crate::nn::{Grads, NetworkParams, NetworkSpec};

pub const DEFAULT_MOMENTUM: f32 = 0.9;
pub const DEFAULT_RATE: f32 = 1e-4;

/// Per-layer rates: `1e-4, 1e-4, 1e-5` for three-layer nets, uniform `1e-4` otherwise.
pub fn default_rates(spec: &NetworkSpec) -> Vec<f32> {
    if spec.layers.len() == 3 {
        vec![1e-4, 1e-4, 1e-5]
    } else {
        vec![DEFAULT_RATE; spec.layers.len()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Grads,
    pub momentum: f32,
    pub rates: Vec<f32>,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, momentum: f32, rates: Vec<f32>) -> Result<Self> {
        ensure!(
            (0.0..1.0).contains(&momentum),
            InvalidArgument,
            "momentum {} outside [0, 1)",
            momentum
        );
        ensure!(
            rates.len() == params.layers.len(),
            InvalidArgument,
            "{} learning rates for {} layers",
            rates.len(),
            params.layers.len()
        );
        ensure!(
            rates.iter().all(|&r| r > 0.0 && r.is_finite()),
            InvalidArgument,
            "learning rates must be positive: {:?}",
            rates
        );
        Ok(OptimizerState {
            velocity: Grads::zeros_like(params),
            momentum,
            rates,
        })
    }
}

/// `v <- mu * v + alpha_l * g`, then `params <- params - v`.
pub fn sgd_momentum_step(params: &mut NetworkParams, grads: &Grads, state: &mut OptimizerState) -> Result<()> {
    let g = grads.tensors();
    let v_shapes: Vec<usize> = state.velocity.tensors().iter().map(|(_, t)| t.len()).collect();
    let p_shapes: Vec<usize> = params.trainable_mut().iter().map(|(_, t)| t.len()).collect();
    let g_shapes: Vec<usize> = g.iter().map(|(_, t)| t.len()).collect();
    ensure!(
        g_shapes == p_shapes && v_shapes == p_shapes,
        ShapeMismatch,
        "gradient/velocity/parameter layouts differ"
    );
    for (k, (layer, t)) in g.iter().enumerate() {
        if let Some(i) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of layer {} tensor {} has {} at element {}",
                layer, k, t[i], i
            )));
        }
    }
    let mu = state.momentum;
    let mut velocity = state.velocity.tensors_mut();
    for ((layer, p), (v, (_, g))) in params.trainable_mut().into_iter().zip(velocity.iter_mut().map(|(_, v)| v).zip(g)) {
        let alpha = state.rates[layer];
        for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
            *vi = mu * *vi + alpha * gi;
            *pi -= *vi;
        }
    }
    Ok(())
}
