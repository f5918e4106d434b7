//! Per-channel batch normalization over batch and spatial dimensions.

use super::Tensor4;
use crate::error::{ensure, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    /// `running = momentum * running + (1 - momentum) * batch`, unbiased batch variance.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        let m = cache.count as f32;
        let unbias = if cache.count > 1 { m / (m - 1.0) } else { 1.0 };
        for c in 0..self.channels() {
            self.running_mean[c] = BN_MOMENTUM * self.running_mean[c] + (1.0 - BN_MOMENTUM) * cache.mean[c];
            self.running_var[c] =
                BN_MOMENTUM * self.running_var[c] + (1.0 - BN_MOMENTUM) * cache.var[c] * unbias;
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub mode: Mode,
    pub x_hat: Tensor4,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub inv_std: Vec<f32>,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub grad_x: Tensor4,
    pub grad_scale: Vec<f32>,
    pub grad_shift: Vec<f32>,
}

fn channel_values(x: &Tensor4, c: usize) -> impl Iterator<Item = f32> + '_ {
    let plane = x.plane();
    (0..x.n).flat_map(move |n| x.sample(n)[c * plane..(c + 1) * plane].iter().copied())
}

pub fn batchnorm_forward(x: &Tensor4, params: &BatchNormParams, mode: Mode) -> Result<(Tensor4, BatchNormCache)> {
    ensure!(
        x.c == params.channels(),
        ShapeMismatch,
        "batch norm over {} channels, input has {}",
        params.channels(),
        x.c
    );
    let count = x.n * x.plane();
    let (mean, var): (Vec<f32>, Vec<f32>) = match mode {
        Mode::Train => {
            ensure!(
                count >= 2,
                Degenerate,
                "batch norm needs at least 2 values per channel in train mode, got {}",
                count
            );
            (0..x.c)
                .map(|c| {
                    let mu = channel_values(x, c).map(|v| v as f64).sum::<f64>() / count as f64;
                    let var = channel_values(x, c)
                        .map(|v| (v as f64 - mu).powi(2))
                        .sum::<f64>()
                        / count as f64;
                    (mu as f32, var as f32)
                })
                .unzip()
        }
        Mode::Eval => (params.running_mean.clone(), params.running_var.clone()),
    };
    let inv_std: Vec<f32> = var.iter().map(|&v| (1.0 / (v as f64 + BN_EPS).sqrt()) as f32).collect();
    let plane = x.plane();
    let mut x_hat = x.clone();
    let mut y = x.clone();
    for n in 0..x.n {
        for c in 0..x.c {
            let off = (n * x.c + c) * plane;
            for i in off..off + plane {
                let h = (x.data[i] - mean[c]) * inv_std[c];
                x_hat.data[i] = h;
                y.data[i] = params.scale[c] * h + params.shift[c];
            }
        }
    }
    Ok((
        y,
        BatchNormCache {
            mode,
            x_hat,
            mean,
            var,
            inv_std,
            count,
        },
    ))
}

pub fn batchnorm_backward(
    grad_out: &Tensor4,
    params: &BatchNormParams,
    cache: &BatchNormCache,
) -> Result<BatchNormGrads> {
    ensure!(
        grad_out.shape() == cache.x_hat.shape(),
        ShapeMismatch,
        "grad {:?} vs cached {:?}",
        grad_out.shape(),
        cache.x_hat.shape()
    );
    let plane = grad_out.plane();
    let channels = grad_out.c;
    let mut grad_scale = vec![0.0f32; channels];
    let mut grad_shift = vec![0.0f32; channels];
    for c in 0..channels {
        let (mut gs, mut gb) = (0.0f64, 0.0f64);
        for n in 0..grad_out.n {
            let off = (n * channels + c) * plane;
            for i in off..off + plane {
                gs += grad_out.data[i] as f64 * cache.x_hat.data[i] as f64;
                gb += grad_out.data[i] as f64;
            }
        }
        grad_scale[c] = gs as f32;
        grad_shift[c] = gb as f32;
    }
    let mut grad_x = grad_out.clone();
    let m = cache.count as f64;
    for c in 0..channels {
        let g = params.scale[c] as f64 * cache.inv_std[c] as f64;
        let (sum_dy, sum_dy_xhat) = (grad_shift[c] as f64, grad_scale[c] as f64);
        for n in 0..grad_out.n {
            let off = (n * channels + c) * plane;
            for i in off..off + plane {
                let dy = grad_out.data[i] as f64;
                grad_x.data[i] = match cache.mode {
                    Mode::Train => (g * (dy - sum_dy / m - cache.x_hat.data[i] as f64 * sum_dy_xhat / m)) as f32,
                    Mode::Eval => (g * dy) as f32,
                };
            }
        }
    }
    Ok(BatchNormGrads {
        grad_x,
        grad_scale,
        grad_shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, shape: [usize; 4], lo: f32, hi: f32) -> Tensor4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor4::from_vec(shape[0], shape[1], shape[2], shape[3], (0..n).map(|_| rng.random_range(lo..hi)).collect())
            .unwrap()
    }

    #[test]
    fn train_output_is_standardized() {
        let x = random(0, [4, 3, 5, 5], 2.0, 9.0);
        let p = BatchNormParams::new(3);
        let (y, cache) = batchnorm_forward(&x, &p, Mode::Train).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = channel_values(&y, c).map(|v| v as f64).collect();
            let mu = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mu.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
        assert_eq!(cache.count, 100);
    }

    #[test]
    fn normalized_input_is_left_alone() {
        let raw = random(1, [2, 2, 6, 6], -1.0, 1.0);
        let p = BatchNormParams::new(2);
        let (z, _) = batchnorm_forward(&raw, &p, Mode::Train).unwrap();
        let (y, _) = batchnorm_forward(&z, &p, Mode::Train).unwrap();
        for (a, b) in y.data.iter().zip(&z.data) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn single_value_train_batch_is_degenerate() {
        let x = Tensor4::zeros(1, 2, 1, 1);
        assert!(batchnorm_forward(&x, &BatchNormParams::new(2), Mode::Train).is_err());
        assert!(batchnorm_forward(&x, &BatchNormParams::new(2), Mode::Eval).is_ok());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = random(2, [2, 1, 4, 4], 5.0, 6.0);
        let mut p = BatchNormParams::new(1);
        let (_, cache) = batchnorm_forward(&x, &p, Mode::Train).unwrap();
        p.update_running(&cache);
        assert!((p.running_mean[0] - 0.1 * cache.mean[0]).abs() < 1e-6);
        let (y, _) = batchnorm_forward(&x, &p, Mode::Eval).unwrap();
        let expect = (x.data[0] - p.running_mean[0]) / (p.running_var[0] + 1e-5).sqrt();
        assert!((y.data[0] - expect).abs() < 1e-4);
    }
}
