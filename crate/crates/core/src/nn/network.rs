//! Layer topology, learned parameters and the chained forward/backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::activation::Activation;
use super::batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormParams, Mode};
use super::conv::{conv_backward, conv_forward, Padding};
use super::Tensor4;
use crate::error::{ensure, Error, Result};

/// Standard deviation of the linear output layer at initialization.
const OUTPUT_INIT_STD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

/// Channel layout of the network input: PAN, then upsampled MS, then indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputLayout {
    pub ms_bands: usize,
    pub index_channels: usize,
}

impl InputLayout {
    pub fn channels(&self) -> usize {
        1 + self.ms_bands + self.index_channels
    }

    /// Offset of the first MS channel in the stack.
    pub fn ms_offset(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub residual: bool,
    pub layout: InputLayout,
    /// Radiometric full scale; PAN/MS inputs and targets are divided by it.
    pub value_scale: f32,
}

fn layer(in_channels: usize, out_channels: usize, kernel: usize, activation: Activation, batch_norm: bool) -> LayerSpec {
    LayerSpec {
        in_channels,
        out_channels,
        kernel,
        activation,
        batch_norm,
    }
}

/// Full scale of an unsigned `bits`-bit sensor.
pub fn full_scale(bits: u16) -> f32 {
    ((1u64 << bits.min(31)) - 1) as f32
}

impl NetworkSpec {
    /// Three-layer nets of the reference hyper-parameter table:
    /// 48 x (5|7 or 9|13) x K1, ReLU, 32 x 48 x 5 x 5, ReLU, B x 32 x 5 x 5.
    /// `augment` adds the radiometric-index channels to the input.
    pub fn table_one(sensor: &str, augment: bool, residual: bool) -> Result<Self> {
        let (bands, first_kernel) = match sensor {
            "ik" => (4, 5),
            "ge1" => (4, 9),
            "wv2" | "wv3" => (8, 9),
            other => return Err(Error::Config(format!("no network preset for sensor {:?}", other))),
        };
        let layout = InputLayout {
            ms_bands: bands,
            index_channels: if augment { bands / 2 } else { 0 },
        };
        let spec = NetworkSpec {
            layers: vec![
                layer(layout.channels(), 48, first_kernel, Activation::Relu, false),
                layer(48, 32, 5, Activation::Relu, false),
                layer(32, bands, 5, Activation::Identity, false),
            ],
            residual,
            layout,
            value_scale: full_scale(11),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `depth` identical hidden layers with batch normalization, plus input and output layers.
    pub fn deep(ms_bands: usize, index_channels: usize, depth: usize, features: usize, kernel: usize, residual: bool) -> Result<Self> {
        ensure!(depth >= 2, InvalidArgument, "a deep net needs at least 2 layers");
        let layout = InputLayout {
            ms_bands,
            index_channels,
        };
        let mut layers = vec![layer(layout.channels(), features, kernel, Activation::Relu, true)];
        for _ in 0..depth - 2 {
            layers.push(layer(features, features, kernel, Activation::Relu, true));
        }
        layers.push(layer(features, ms_bands, kernel, Activation::Identity, false));
        let spec = NetworkSpec {
            layers,
            residual,
            layout,
            value_scale: full_scale(11),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.layers.is_empty(), Config, "network has no layers");
        ensure!(
            self.layers[0].in_channels == self.layout.channels(),
            Config,
            "first layer takes {} channels, layout provides {}",
            self.layers[0].in_channels,
            self.layout.channels()
        );
        for (i, l) in self.layers.iter().enumerate() {
            ensure!(l.kernel % 2 == 1, Config, "layer {} kernel {} is not odd", i, l.kernel);
            ensure!(l.in_channels > 0 && l.out_channels > 0, Config, "layer {} has no channels", i);
            if let Some(next) = self.layers.get(i + 1) {
                ensure!(
                    l.out_channels == next.in_channels,
                    Config,
                    "layer {} emits {} channels, layer {} takes {}",
                    i,
                    l.out_channels,
                    i + 1,
                    next.in_channels
                );
            }
        }
        let last = self.layers.last().unwrap();
        ensure!(
            last.activation == Activation::Identity,
            Config,
            "output layer must be linear"
        );
        ensure!(
            last.out_channels == self.layout.ms_bands,
            Config,
            "output has {} channels for {} MS bands",
            last.out_channels,
            self.layout.ms_bands
        );
        ensure!(self.value_scale > 0.0, Config, "value scale must be positive");
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        self.layout.channels()
    }

    pub fn output_channels(&self) -> usize {
        self.layout.ms_bands
    }

    /// Half-width of the receptive field: `sum (K_l - 1) / 2`.
    pub fn receptive_radius(&self) -> usize {
        self.layers.iter().map(|l| (l.kernel - 1) / 2).sum()
    }

    /// Scales the PAN and MS channels of a network input in place.
    pub fn normalize_input(&self, x: &mut Tensor4) {
        let plane = x.plane();
        let radiometric = 1 + self.layout.ms_bands;
        let inv = 1.0 / self.value_scale;
        for n in 0..x.n {
            let s = x.sample_mut(n);
            s[..radiometric * plane].iter_mut().for_each(|v| *v *= inv);
        }
    }

    pub fn normalize_target(&self, t: &mut Tensor4) {
        let inv = 1.0 / self.value_scale;
        t.data.iter_mut().for_each(|v| *v *= inv);
    }

    pub fn denormalize_output(&self, t: &mut Tensor4) {
        let s = self.value_scale;
        t.data.iter_mut().for_each(|v| *v *= s);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor4,
    pub bias: Vec<f32>,
    pub bn: Option<BatchNormParams>,
}

/// Learned parameters, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        NetworkParams {
            layers: spec
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: Tensor4::zeros(l.out_channels, l.in_channels, l.kernel, l.kernel),
                    bias: vec![0.0; l.out_channels],
                    bn: l.batch_norm.then(|| BatchNormParams::new(l.out_channels)),
                })
                .collect(),
        }
    }

    /// He-normal weights for ReLU layers, a small Gaussian for the linear
    /// output layer, zero biases. Deterministic under `seed`.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(spec);
        for (l, p) in spec.layers.iter().zip(params.layers.iter_mut()) {
            let fan_in = (l.in_channels * l.kernel * l.kernel) as f64;
            let std = match l.activation {
                Activation::Relu => (2.0 / fan_in).sqrt(),
                Activation::Identity => OUTPUT_INIT_STD,
            };
            let normal = Normal::new(0.0, std).expect("finite std");
            p.weight.data.iter_mut().for_each(|w| *w = normal.sample(&mut rng) as f32);
        }
        params
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        ensure!(
            self.layers.len() == spec.layers.len(),
            ShapeMismatch,
            "{} parameter layers for a {}-layer spec",
            self.layers.len(),
            spec.layers.len()
        );
        for (i, (l, p)) in spec.layers.iter().zip(&self.layers).enumerate() {
            ensure!(
                p.weight.shape() == [l.out_channels, l.in_channels, l.kernel, l.kernel],
                ShapeMismatch,
                "layer {} weights {:?}, spec wants {:?}",
                i,
                p.weight.shape(),
                [l.out_channels, l.in_channels, l.kernel, l.kernel]
            );
            ensure!(p.bias.len() == l.out_channels, ShapeMismatch, "layer {} bias length", i);
            ensure!(
                p.bn.is_some() == l.batch_norm,
                ShapeMismatch,
                "layer {} batch-norm presence differs from spec",
                i
            );
            if let Some(bn) = &p.bn {
                ensure!(
                    bn.channels() == l.out_channels
                        && bn.shift.len() == l.out_channels
                        && bn.running_mean.len() == l.out_channels
                        && bn.running_var.len() == l.out_channels,
                    ShapeMismatch,
                    "layer {} batch-norm shapes",
                    i
                );
            }
        }
        ensure!(self.all_finite(), NonFinite, "network parameters contain non-finite values");
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|p| {
            p.weight.all_finite()
                && p.bias.iter().all(|v| v.is_finite())
                && p.bn.as_ref().is_none_or(|bn| {
                    bn.scale
                        .iter()
                        .chain(&bn.shift)
                        .chain(&bn.running_mean)
                        .chain(&bn.running_var)
                        .all(|v| v.is_finite())
                })
        })
    }

    /// Zeroes the output layer so the net emits exactly zero.
    pub fn zero_output_layer(&mut self) {
        if let Some(last) = self.layers.last_mut() {
            last.weight.data.iter_mut().for_each(|w| *w = 0.0);
            last.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    /// Trainable tensors as `(layer, values)` in a fixed order:
    /// weights, biases, then batch-norm scale and shift.
    pub fn trainable_mut(&mut self) -> Vec<(usize, &mut [f32])> {
        let mut out: Vec<(usize, &mut [f32])> = Vec::new();
        for (i, p) in self.layers.iter_mut().enumerate() {
            out.push((i, &mut p.weight.data));
            out.push((i, &mut p.bias));
            if let Some(bn) = p.bn.as_mut() {
                out.push((i, &mut bn.scale));
                out.push((i, &mut bn.shift));
            }
        }
        out
    }

    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (p, c) in self.layers.iter_mut().zip(&cache.bn) {
            if let (Some(bn), Some(c)) = (p.bn.as_mut(), c) {
                if c.mode == Mode::Train {
                    bn.update_running(c);
                }
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|p| p.weight.len() + p.bias.len() + p.bn.as_ref().map_or(0, |b| 2 * b.channels()))
            .sum()
    }
}

/// Gradients (or any same-shaped quantity, e.g. velocity) of the trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub bn_scale: Option<Vec<f32>>,
    pub bn_shift: Option<Vec<f32>>,
}

impl Grads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Grads {
            layers: params
                .layers
                .iter()
                .map(|p| LayerGrads {
                    weight: vec![0.0; p.weight.len()],
                    bias: vec![0.0; p.bias.len()],
                    bn_scale: p.bn.as_ref().map(|b| vec![0.0; b.channels()]),
                    bn_shift: p.bn.as_ref().map(|b| vec![0.0; b.channels()]),
                })
                .collect(),
        }
    }

    /// Same order as [`NetworkParams::trainable_mut`].
    pub fn tensors(&self) -> Vec<(usize, &[f32])> {
        let mut out: Vec<(usize, &[f32])> = Vec::new();
        for (i, g) in self.layers.iter().enumerate() {
            out.push((i, &g.weight));
            out.push((i, &g.bias));
            if let (Some(s), Some(t)) = (&g.bn_scale, &g.bn_shift) {
                out.push((i, s));
                out.push((i, t));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(usize, &mut [f32])> {
        let mut out: Vec<(usize, &mut [f32])> = Vec::new();
        for (i, g) in self.layers.iter_mut().enumerate() {
            out.push((i, &mut g.weight));
            out.push((i, &mut g.bias));
            if let (Some(s), Some(t)) = (g.bn_scale.as_mut(), g.bn_shift.as_mut()) {
                out.push((i, s));
                out.push((i, t));
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate tensors kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    padding: Padding,
    layer_inputs: Vec<Tensor4>,
    activation_inputs: Vec<Tensor4>,
    bn: Vec<Option<BatchNormCache>>,
}

fn forward_impl(
    x: &Tensor4,
    spec: &NetworkSpec,
    params: &NetworkParams,
    mode: Mode,
    padding: Padding,
    keep: bool,
) -> Result<(Tensor4, Option<ForwardCache>)> {
    ensure!(
        x.c == spec.input_channels(),
        ShapeMismatch,
        "input has {} channels, network expects {}",
        x.c,
        spec.input_channels()
    );
    params.check(spec)?;
    let mut cache = keep.then(|| ForwardCache {
        padding,
        layer_inputs: Vec::with_capacity(spec.layers.len()),
        activation_inputs: Vec::with_capacity(spec.layers.len()),
        bn: Vec::with_capacity(spec.layers.len()),
    });
    let mut current = x.clone();
    for (i, (l, p)) in spec.layers.iter().zip(&params.layers).enumerate() {
        let mut z = conv_forward(&current, &p.weight, &p.bias, padding)?;
        if padding == Padding::SameMirror {
            ensure!(
                z.h == current.h && z.w == current.w,
                ShapeMismatch,
                "layer {} changed spatial size {}x{} -> {}x{}",
                i,
                current.h,
                current.w,
                z.h,
                z.w
            );
        }
        let mut bn_cache = None;
        if let Some(bn) = &p.bn {
            let (y, c) = batchnorm_forward(&z, bn, mode)?;
            z = y;
            bn_cache = Some(c);
        }
        let out = l.activation.forward(&z);
        if let Some(cache) = cache.as_mut() {
            cache.layer_inputs.push(std::mem::replace(&mut current, out));
            cache.activation_inputs.push(z);
            cache.bn.push(bn_cache);
        } else {
            current = out;
        }
    }
    Ok((current, cache))
}

/// Chained layers; for residual specs this is the detail branch only.
pub fn network_forward(x: &Tensor4, spec: &NetworkSpec, params: &NetworkParams, mode: Mode, padding: Padding) -> Result<Tensor4> {
    forward_impl(x, spec, params, mode, padding, false).map(|(y, _)| y)
}

pub fn network_forward_cached(
    x: &Tensor4,
    spec: &NetworkSpec,
    params: &NetworkParams,
    mode: Mode,
    padding: Padding,
) -> Result<(Tensor4, ForwardCache)> {
    forward_impl(x, spec, params, mode, padding, true).map(|(y, c)| (y, c.expect("cache requested")))
}

/// Gradients of all trainable tensors given `d loss / d output`.
pub fn network_backward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    cache: &ForwardCache,
    grad_out: Tensor4,
) -> Result<Grads> {
    network_backward_with_input(spec, params, cache, grad_out, false).map(|(g, _)| g)
}

/// As [`network_backward`], optionally also returning `d loss / d input`.
pub fn network_backward_with_input(
    spec: &NetworkSpec,
    params: &NetworkParams,
    cache: &ForwardCache,
    grad_out: Tensor4,
    need_input_grad: bool,
) -> Result<(Grads, Option<Tensor4>)> {
    ensure!(
        cache.layer_inputs.len() == spec.layers.len(),
        ShapeMismatch,
        "cache holds {} layers, spec has {}",
        cache.layer_inputs.len(),
        spec.layers.len()
    );
    let mut grads = Grads::zeros_like(params);
    let mut g = grad_out;
    for i in (0..spec.layers.len()).rev() {
        let l = &spec.layers[i];
        let p = &params.layers[i];
        g = l.activation.backward(&cache.activation_inputs[i], g)?;
        if let (Some(bn), Some(bc)) = (&p.bn, &cache.bn[i]) {
            let bg = batchnorm_backward(&g, bn, bc)?;
            grads.layers[i].bn_scale = Some(bg.grad_scale);
            grads.layers[i].bn_shift = Some(bg.grad_shift);
            g = bg.grad_x;
        }
        let need_x = i > 0 || need_input_grad;
        let cg = conv_backward(&cache.layer_inputs[i], &p.weight, &g, cache.padding, need_x)?;
        grads.layers[i].weight = cg.grad_w.data;
        grads.layers[i].bias = cg.grad_b;
        if let Some(gx) = cg.grad_x {
            g = gx;
        }
    }
    Ok((grads, need_input_grad.then_some(g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn table_one_shapes() {
        let ge = NetworkSpec::table_one("ge1", false, true).unwrap();
        assert_eq!(ge.input_channels(), 5);
        assert_eq!(ge.layers[0].kernel, 9);
        assert_eq!(ge.layers[0].out_channels, 48);
        assert_eq!(ge.layers[1].out_channels, 32);
        assert_eq!(ge.receptive_radius(), 8);
        assert_eq!(NetworkSpec::table_one("ge1", true, false).unwrap().input_channels(), 7);
        let ik = NetworkSpec::table_one("ik", false, true).unwrap();
        assert_eq!(ik.layers[0].kernel, 5);
        let wv = NetworkSpec::table_one("wv2", true, true).unwrap();
        assert_eq!(wv.input_channels(), 13);
        assert_eq!(wv.output_channels(), 8);
    }

    #[test]
    fn ge1_forward_keeps_tile_size() {
        let spec = NetworkSpec::table_one("ge1", false, true).unwrap();
        let params = NetworkParams::init(&spec, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor4::from_vec(1, 5, 33, 33, (0..5 * 33 * 33).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let y = network_forward(&x, &spec, &params, Mode::Eval, Padding::SameMirror).unwrap();
        assert_eq!(y.shape(), [1, 4, 33, 33]);
        let v = network_forward(&x, &spec, &params, Mode::Eval, Padding::Valid).unwrap();
        assert_eq!(v.shape(), [1, 4, 17, 17]);
    }

    #[test]
    fn zero_output_layer_gives_zero_output() {
        let spec = NetworkSpec::table_one("ik", false, true).unwrap();
        let mut params = NetworkParams::init(&spec, 3);
        params.zero_output_layer();
        let x = Tensor4::from_vec(2, 5, 12, 12, vec![0.7; 2 * 5 * 144]).unwrap();
        let y = network_forward(&x, &spec, &params, Mode::Eval, Padding::SameMirror).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spec_validation() {
        let mut spec = NetworkSpec::table_one("ge1", false, true).unwrap();
        spec.layers[1].in_channels = 47;
        assert!(spec.validate().is_err());
        let mut spec = NetworkSpec::table_one("ge1", false, true).unwrap();
        spec.layers[2].activation = Activation::Relu;
        assert!(spec.validate().is_err());
        let mut spec = NetworkSpec::table_one("ge1", false, true).unwrap();
        spec.layers[0].kernel = 4;
        assert!(spec.validate().is_err());
        assert!(NetworkSpec::table_one("spot", false, true).is_err());
    }

    #[test]
    fn deep_spec_has_batch_norm_on_hidden_layers() {
        let d10 = NetworkSpec::deep(4, 0, 10, 32, 3, true).unwrap();
        assert_eq!(d10.layers.len(), 10);
        assert!(d10.layers[..9].iter().all(|l| l.batch_norm));
        assert!(!d10.layers[9].batch_norm);
        assert_eq!(d10.receptive_radius(), 10);
        let p = NetworkParams::init(&d10, 0);
        p.check(&d10).unwrap();
    }

    #[test]
    fn params_shape_check_rejects_other_sensor() {
        let ge = NetworkSpec::table_one("ge1", false, true).unwrap();
        let wv = NetworkSpec::table_one("wv2", false, true).unwrap();
        assert!(NetworkParams::init(&ge, 0).check(&wv).is_err());
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let spec = NetworkSpec::table_one("ge1", false, true).unwrap();
        let a = NetworkParams::init(&spec, 9);
        assert_eq!(a, NetworkParams::init(&spec, 9));
        assert_ne!(a, NetworkParams::init(&spec, 10));
        let out = &a.layers[2].weight.data;
        let rms = (out.iter().map(|v| (v * v) as f64).sum::<f64>() / out.len() as f64).sqrt();
        assert!(rms < 2e-3);
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn input_normalization_leaves_indices() {
        let spec = NetworkSpec::table_one("ge1", true, true).unwrap();
        let mut x = Tensor4::from_vec(1, 7, 1, 1, vec![2047.0, 2047.0, 2047.0, 2047.0, 2047.0, 0.5, -0.5]).unwrap();
        spec.normalize_input(&mut x);
        assert_eq!(x.data, vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.5, -0.5]);
    }
}
