//! Independent oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use pansharp::nn::activation::{relu, relu_backward};
use pansharp::nn::batchnorm::{batchnorm_backward, batchnorm_forward};
use pansharp::nn::{
    conv_backward, conv_forward, loss_eval, network_backward_with_input, network_forward_cached, BatchNormParams,
    Activation, LossKind, LossSpec, Mode, NetworkParams, NetworkSpec, Padding, Tensor4,
};
use pansharp::raster::MultibandImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(r: &mut ChaCha8Rng, shape: [usize; 4], lo: f32, hi: f32) -> Tensor4 {
    let [n, c, h, w] = shape;
    Tensor4::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// Half-sample symmetric extension, periodic with period 2n.
pub fn reflect(i: isize, n: usize) -> usize {
    let p = 2 * n as isize;
    let m = i.rem_euclid(p);
    if m < n as isize {
        m as usize
    } else {
        (p - 1 - m) as usize
    }
}

/// Direct quadruple loop in f64. Also returns, per output, the sum of |x w| + |b|
/// (the scale against which rounding error is judged).
pub fn naive_conv(x: &Tensor4, w: &Tensor4, b: &[f32], same: bool) -> (Vec<f64>, Vec<f64>, [usize; 4]) {
    let k = w.h;
    let pad = if same { k / 2 } else { 0 };
    let (oh, ow) = if same { (x.h, x.w) } else { (x.h + 1 - k, x.w + 1 - k) };
    let mut out = Vec::with_capacity(x.n * w.n * oh * ow);
    let mut mag = Vec::with_capacity(out.capacity());
    for n in 0..x.n {
        for o in 0..w.n {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = b[o] as f64;
                    let mut m = (b[o] as f64).abs();
                    for c in 0..x.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = reflect(y as isize + ky as isize - pad as isize, x.h);
                                let ix = reflect(xx as isize + kx as isize - pad as isize, x.w);
                                let t = x.at(n, c, iy, ix) as f64 * w.at(o, c, ky, kx) as f64;
                                s += t;
                                m += t.abs();
                            }
                        }
                    }
                    out.push(s);
                    mag.push(m);
                }
            }
        }
    }
    (out, mag, [x.n, w.n, oh, ow])
}

pub struct SweepResult {
    pub cases: usize,
    pub worst: f64,
}

/// Every shape up to 2 x 4 x 9 x 9 (batch, channels in/out, height, width) with
/// kernels 1, 3, 5, 9 and both paddings. `integer` draws small integers, for
/// which every partial sum is exact in f32.
pub fn conv_sweep(seed: u64, integer: bool) -> SweepResult {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for &k in &[1usize, 3, 5, 9] {
        for n in 1..=2 {
            for cin in 1..=4 {
                for cout in 1..=4 {
                    for h in 1..=9 {
                        for wd in 1..=9 {
                            for same in [false, true] {
                                if !same && (h < k || wd < k) {
                                    continue;
                                }
                                let draw = |r: &mut ChaCha8Rng| -> f32 {
                                    if integer {
                                        r.random_range(-8i32..=8) as f32
                                    } else {
                                        r.random_range(-1.0f32..1.0)
                                    }
                                };
                                let x = Tensor4::from_vec(n, cin, h, wd, (0..n * cin * h * wd).map(|_| draw(&mut r)).collect())
                                    .unwrap();
                                let w = Tensor4::from_vec(cout, cin, k, k, (0..cout * cin * k * k).map(|_| draw(&mut r)).collect())
                                    .unwrap();
                                let b: Vec<f32> = (0..cout).map(|_| draw(&mut r)).collect();
                                let padding = if same { Padding::SameMirror } else { Padding::Valid };
                                let y = conv_forward(&x, &w, &b, padding).unwrap();
                                let (want, mag, shape) = naive_conv(&x, &w, &b, same);
                                assert_eq!(y.shape(), shape, "shape for k={} {:?}", k, x.shape());
                                for ((&got, &exp), &m) in y.data.iter().zip(&want).zip(&mag) {
                                    let denom = if integer { exp.abs().max(1.0) } else { m.max(1e-30) };
                                    worst = worst.max((got as f64 - exp).abs() / denom);
                                }
                                cases += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    SweepResult { cases, worst }
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// `sum |a_i b_i|`, the scale of a dot product's rounding error.
pub fn abs_dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 * y as f64).abs()).sum()
}

/// `|fd - an| / max(|fd|, |an|, floor)`; the floor (1% of the largest analytic
/// entry) keeps near-zero entries from being judged on pure rounding noise.
pub fn rel_err(fd: f64, an: f64, floor: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(floor).max(1e-300)
}

/// Worst relative error between `an` and Richardson-extrapolated central differences of `f` around `x`,
/// over up to `max_coords` coordinates (all if fewer). `skip` excludes points
/// where the function is not smooth within the step.
pub fn check_gradient(
    x: &[f32],
    an: &[f32],
    h: f32,
    max_coords: usize,
    seed: u64,
    mut f: impl FnMut(&[f32]) -> f64,
    skip: impl Fn(usize, &[f32]) -> bool,
) -> (f64, usize) {
    let floor = 1e-2 * an.iter().fold(0.0f64, |m, &g| m.max(g.abs() as f64));
    let mut r = rng(seed);
    let coords: Vec<usize> = if x.len() <= max_coords {
        (0..x.len()).collect()
    } else {
        (0..max_coords).map(|_| r.random_range(0..x.len())).collect()
    };
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in coords {
        if skip(i, x) {
            continue;
        }
        let orig = probe[i];
        // central differences at h and h/2, Richardson-combined; steps are
        // the ones actually taken in f32
        let mut central = |h: f32| {
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (((orig + h) as f64) - ((orig - h) as f64))
        };
        let (d_h, d_half) = (central(h), central(h / 2.0));
        let fd = (4.0 * d_half - d_h) / 3.0;
        worst = worst.max(rel_err(fd, an[i] as f64, floor));
        checked += 1;
    }
    (worst, checked)
}

/// Result of a family of gradient checks.
#[derive(Debug, Default, Clone, Copy)]
pub struct GradReport {
    pub instances: usize,
    pub worst: f64,
}

impl GradReport {
    fn add(&mut self, (worst, checked): (f64, usize)) {
        assert!(checked > 0, "no coordinates checked");
        self.worst = self.worst.max(worst);
    }
}

/// Convolution is linear in each argument, so a large step carries no
/// truncation error and keeps f32 rounding out of the difference.
pub fn gradcheck_conv(instances: usize, seed: u64) -> GradReport {
    let mut rep = GradReport::default();
    let mut r = rng(seed);
    for inst in 0..instances {
        let k = [1usize, 3, 5][inst % 3];
        let padding = if inst % 2 == 0 { Padding::Valid } else { Padding::SameMirror };
        let (n, cin, cout) = (r.random_range(1..=2), r.random_range(1..=3), r.random_range(1..=3));
        let (h, w) = (r.random_range(k..k + 5), r.random_range(k..k + 5));
        let x = random_tensor(&mut r, [n, cin, h, w], -1.0, 1.0);
        let wt = random_tensor(&mut r, [cout, cin, k, k], -1.0, 1.0);
        let b: Vec<f32> = (0..cout).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = conv_forward(&x, &wt, &b, padding).unwrap();
        let rr = random_tensor(&mut r, y.shape(), -1.0, 1.0);
        let g = conv_backward(&x, &wt, &rr, padding, true).unwrap();
        let obj = |x: &Tensor4, wt: &Tensor4, b: &[f32]| dot(&conv_forward(x, wt, b, padding).unwrap().data, &rr.data);
        let s = seed.wrapping_add(inst as u64);
        rep.add(check_gradient(&x.data, &g.grad_x.as_ref().unwrap().data, 1e-1, 40, s, |v| {
            obj(&Tensor4 { data: v.to_vec(), ..x }, &wt, &b)
        }, |_, _| false));
        rep.add(check_gradient(&wt.data, &g.grad_w.data, 1e-1, 40, s + 1, |v| {
            obj(&x, &Tensor4 { data: v.to_vec(), ..wt }, &b)
        }, |_, _| false));
        rep.add(check_gradient(&b, &g.grad_b, 1e-1, 40, s + 2, |v| obj(&x, &wt, v), |_, _| false));
        rep.instances += 1;
    }
    rep
}

pub fn gradcheck_relu(instances: usize, seed: u64) -> GradReport {
    let mut rep = GradReport::default();
    let mut r = rng(seed);
    let h = 1e-3f32;
    for inst in 0..instances {
        let x = random_tensor(&mut r, [2, 3, 4, 5], -1.0, 1.0);
        let rr = random_tensor(&mut r, x.shape(), -1.0, 1.0);
        let g = relu_backward(&x, &rr).unwrap();
        rep.add(check_gradient(
            &x.data,
            &g.data,
            h,
            usize::MAX,
            seed + inst as u64,
            |v| dot(&relu(&Tensor4 { data: v.to_vec(), ..x }).data, &rr.data),
            |i, x| x[i].abs() < 10.0 * h,
        ));
        rep.instances += 1;
    }
    rep
}

/// Batch norm is evaluated in f32 and its input gradient cancels heavily, so
/// rounding dominates small steps; a wide step with Richardson keeps both
/// truncation and rounding well under tolerance.
pub fn gradcheck_batchnorm(instances: usize, seed: u64) -> GradReport {
    let mut rep = GradReport::default();
    let mut r = rng(seed);
    for inst in 0..instances {
        let c = r.random_range(1..=3);
        let n = r.random_range(2..=3);
        let x = random_tensor(&mut r, [n, c, 3, 4], -2.0, 2.0);
        let mut p = BatchNormParams::new(c);
        p.scale = (0..c).map(|_| r.random_range(0.5..1.5)).collect();
        p.shift = (0..c).map(|_| r.random_range(-0.5..0.5)).collect();
        let (y, cache) = batchnorm_forward(&x, &p, Mode::Train).unwrap();
        let rr = random_tensor(&mut r, y.shape(), -1.0, 1.0);
        let g = batchnorm_backward(&rr, &p, &cache).unwrap();
        let obj = |x: &Tensor4, p: &BatchNormParams| dot(&batchnorm_forward(x, p, Mode::Train).unwrap().0.data, &rr.data);
        let s = seed + 3 * inst as u64;
        rep.add(check_gradient(&x.data, &g.grad_x.data, 2e-1, 40, s, |v| {
            obj(&Tensor4 { data: v.to_vec(), ..x }, &p)
        }, |_, _| false));
        rep.add(check_gradient(&p.scale, &g.grad_scale, 1e-1, 40, s + 1, |v| {
            obj(&x, &BatchNormParams { scale: v.to_vec(), ..p.clone() })
        }, |_, _| false));
        rep.add(check_gradient(&p.shift, &g.grad_shift, 1e-1, 40, s + 2, |v| {
            obj(&x, &BatchNormParams { shift: v.to_vec(), ..p.clone() })
        }, |_, _| false));
        rep.instances += 1;
    }
    rep
}

pub fn gradcheck_loss(kind: LossKind, instances: usize, seed: u64) -> GradReport {
    let mut rep = GradReport::default();
    let mut r = rng(seed);
    let h = 1e-3f32;
    for inst in 0..instances {
        let margin = inst % 2;
        let bands = r.random_range(2..=4);
        let (lo, hi) = match kind {
            // spectral losses want positive spectra
            LossKind::Sam | LossKind::Sid => (0.5, 1.5),
            _ => (-1.0, 1.0),
        };
        let pred = random_tensor(&mut r, [2, bands, 5, 5], lo, hi);
        let reference = random_tensor(&mut r, [2, bands, 5, 5], lo, hi);
        let spec = LossSpec::new(kind, margin);
        let (_, g) = loss_eval(&pred, &reference, &spec).unwrap();
        let refd = reference.clone();
        rep.add(check_gradient(
            &pred.data,
            &g.data,
            h,
            usize::MAX,
            seed + inst as u64,
            |v| loss_eval(&Tensor4 { data: v.to_vec(), ..pred }, &refd, &spec).unwrap().0,
            |i, p| match kind {
                LossKind::L1 => (p[i] - reference.data[i]).abs() < 10.0 * h,
                // acos is singular where the spectra are parallel
                LossKind::Sam => pixel_angle(p, &reference.data, i, bands, 25) < 0.05,
                _ => false,
            },
        ));
        rep.instances += 1;
    }
    rep
}

/// Angle between the spectra of `a` and `b` at the pixel holding flat index `i`
/// (NCHW layout with `plane` pixels per band).
fn pixel_angle(a: &[f32], b: &[f32], i: usize, bands: usize, plane: usize) -> f64 {
    let (n, px) = (i / (bands * plane), i % plane);
    let at = |v: &[f32], c: usize| v[(n * bands + c) * plane + px] as f64;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for c in 0..bands {
        ab += at(a, c) * at(b, c);
        aa += at(a, c) * at(a, c);
        bb += at(b, c) * at(b, c);
    }
    (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0).acos()
}

/// Inputs of every ReLU, recomputed layer by layer from the primitives.
pub fn relu_inputs(spec: &NetworkSpec, params: &NetworkParams, x: &Tensor4, padding: Padding) -> Vec<f32> {
    let mut out = Vec::new();
    let mut a = x.clone();
    for (l, p) in spec.layers.iter().zip(&params.layers) {
        let mut z = conv_forward(&a, &p.weight, &p.bias, padding).unwrap();
        if let Some(bn) = &p.bn {
            z = batchnorm_forward(&z, bn, Mode::Train).unwrap().0;
        }
        if l.activation == Activation::Relu {
            out.extend_from_slice(&z.data);
            a = relu(&z);
        } else {
            a = z;
        }
    }
    out
}

/// True when no ReLU input changes sign between the probe points.
fn same_pattern(points: &[Vec<f32>]) -> bool {
    points.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(u, v)| (*u > 0.0) == (*v > 0.0)))
}

/// Richardson-extrapolated central difference along a line `t -> (f(t), relu inputs at t)`;
/// `None` when the probes straddle a ReLU kink.
fn line_derivative(h: f64, mut at: impl FnMut(f64) -> (f64, Vec<f32>)) -> Option<f64> {
    // shrink the step until no probe crosses a kink
    for h in [h, h / 4.0, h / 16.0] {
        let probes: Vec<(f64, Vec<f32>)> = [-h, -h / 2.0, h / 2.0, h].iter().map(|&t| at(t)).collect();
        let patterns: Vec<Vec<f32>> = probes.iter().map(|p| p.1.clone()).collect();
        if same_pattern(&patterns) {
            let d_h = (probes[3].0 - probes[0].0) / (2.0 * h);
            let d_half = (probes[2].0 - probes[1].0) / h;
            return Some((4.0 * d_half - d_h) / 3.0);
        }
    }
    None
}

/// Whole-network check: derivatives along random sparse directions in parameter
/// space (three entries per tensor) and a dense direction in input space.
/// Lines whose probes cross a ReLU kink are redrawn or skipped, as those
/// points are not smooth.
pub fn gradcheck_network(instances: usize, seed: u64) -> GradReport {
    let mut rep = GradReport::default();
    let mut r = rng(seed);
    let h = 3e-3;
    for inst in 0..instances {
        let (spec, padding, size) = match inst % 3 {
            0 => (NetworkSpec::deep(4, 2, 3, 6, 3, true).unwrap(), Padding::Valid, 7),
            1 => (NetworkSpec::table_one("ik", false, true).unwrap(), Padding::SameMirror, 5),
            _ => (NetworkSpec::deep(4, 0, 3, 5, 3, false).unwrap(), Padding::SameMirror, 5),
        };
        let mut params = NetworkParams::init(&spec, seed + inst as u64);
        // give the output layer a real signal so every path contributes; the
        // wide net gets less, keeping its loss (and f32 rounding) small
        let w = if inst % 3 == 1 { 0.03 } else { 0.2 };
        for v in params.layers.last_mut().unwrap().weight.data.iter_mut() {
            *v = r.random_range(-w..w);
        }
        let batch = if inst % 3 == 1 { 2 } else { 3 };
        let x = random_tensor(&mut r, [batch, spec.input_channels(), size, size], 0.0, 1.0);
        let (y, cache) = network_forward_cached(&x, &spec, &params, Mode::Train, padding).unwrap();
        let target = random_tensor(&mut r, y.shape(), -0.5, 0.5);
        let loss = LossSpec::new(LossKind::L2, 0);
        let (_, gy) = loss_eval(&y, &target, &loss).unwrap();
        let (grads, gx) = network_backward_with_input(&spec, &params, &cache, gy, true).unwrap();
        let gx = gx.unwrap();
        let eval = |p: &NetworkParams, x: &Tensor4| {
            let (y, _) = network_forward_cached(x, &spec, p, Mode::Train, padding).unwrap();
            (loss_eval(&y, &target, &loss).unwrap().0, relu_inputs(&spec, p, x, padding))
        };
        let mut checks = 0;

        // parameter space
        let mut found = 0;
        for _ in 0..100 {
            if found == 3 {
                break;
            }
            let dirs: Vec<Vec<f32>> = grads
                .tensors()
                .iter()
                .map(|(_, g)| {
                    let mut d = vec![0.0f32; g.len()];
                    for _ in 0..3 {
                        d[r.random_range(0..g.len())] = r.random_range(-1.0f32..1.0);
                    }
                    d
                })
                .collect();
            let fd = line_derivative(h, |t| {
                let mut p = params.clone();
                for ((_, v), d) in p.trainable_mut().into_iter().zip(&dirs) {
                    for (a, b) in v.iter_mut().zip(d) {
                        *a = (*a as f64 + t * *b as f64) as f32;
                    }
                }
                eval(&p, &x)
            });
            let Some(fd) = fd else { continue };
            let an: f64 = grads.tensors().iter().zip(&dirs).map(|((_, g), d)| dot(g, d)).sum();
            let scale: f64 = grads.tensors().iter().zip(&dirs).map(|((_, g), d)| abs_dot(g, d)).sum();
            rep.worst = rep.worst.max(rel_err(fd, an, scale));
            found += 1;
        }
        checks += found;

        // input space
        for _ in 0..100 {
            let d: Vec<f32> = (0..x.len()).map(|_| r.random_range(-1.0f32..1.0)).collect();
            let fd = line_derivative(h, |t| {
                let data = x.data.iter().zip(&d).map(|(v, dv)| (*v as f64 + t * *dv as f64) as f32).collect();
                eval(&params, &Tensor4 { data, ..x })
            });
            if let Some(fd) = fd {
                rep.worst = rep.worst.max(rel_err(fd, dot(&gx.data, &d), abs_dot(&gx.data, &d)));
                checks += 1;
                break;
            }
        }
        rep.add((0.0, checks));
        rep.instances += 1;
    }
    rep
}

// --- hypercomplex oracle ---------------------------------------------------

/// Hamilton product of quaternions `[w, i, j, k]`.
pub fn hamilton(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

pub fn qconj(a: [f64; 4]) -> [f64; 4] {
    [a[0], -a[1], -a[2], -a[3]]
}

fn qnorm(a: [f64; 4]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Q4 of one block from explicit quaternion arithmetic; `x`, `y` are per-pixel quaternions.
pub fn q4_oracle(x: &[[f64; 4]], y: &[[f64; 4]]) -> f64 {
    let m = x.len() as f64;
    let mean = |v: &[[f64; 4]]| {
        let mut s = [0.0; 4];
        for q in v {
            for c in 0..4 {
                s[c] += q[c] / m;
            }
        }
        s
    };
    let (mx, my) = (mean(x), mean(y));
    let mut exy = [0.0; 4];
    for (a, b) in x.iter().zip(y) {
        let p = hamilton(*a, qconj(*b));
        for c in 0..4 {
            exy[c] += p[c] / m;
        }
    }
    let mm = hamilton(mx, qconj(my));
    let cov = [exy[0] - mm[0], exy[1] - mm[1], exy[2] - mm[2], exy[3] - mm[3]];
    let var = |v: &[[f64; 4]], mu: [f64; 4]| v.iter().map(|q| qnorm(*q).powi(2)).sum::<f64>() / m - qnorm(mu).powi(2);
    let (vx, vy) = (var(x, mx), var(y, my));
    4.0 * qnorm(cov) * qnorm(mx) * qnorm(my) / ((vx + vy) * (qnorm(mx).powi(2) + qnorm(my).powi(2)))
}

/// A random 32 x 32 four-band block and a noisy, rescaled copy of it.
pub fn block_pair(seed: u64) -> (MultibandImage, MultibandImage) {
    let mut r = rng(seed);
    let n = 32 * 32;
    let mut x = Vec::with_capacity(4 * n);
    let mut y = Vec::with_capacity(4 * n);
    for _ in 0..4 {
        let base = r.random_range(100.0f32..1500.0);
        let gain = r.random_range(0.7f32..1.3);
        let noise = r.random_range(5.0f32..200.0);
        for _ in 0..n {
            let v = base + r.random_range(-300.0f32..300.0);
            x.push(v);
            y.push(gain * v + r.random_range(-noise..noise));
        }
    }
    (
        MultibandImage::from_data(32, 32, 4, 11, x).unwrap(),
        MultibandImage::from_data(32, 32, 4, 11, y).unwrap(),
    )
}

pub fn quaternions(img: &MultibandImage) -> Vec<[f64; 4]> {
    (0..img.plane_len())
        .map(|i| [0, 1, 2, 3].map(|b| img.band(b)[i] as f64))
        .collect()
}

/// Real DTFT of a symmetric kernel, written out independently of the library.
pub fn dtft(taps: &[f64], f: f64) -> f64 {
    let r = (taps.len() / 2) as f64;
    taps.iter()
        .enumerate()
        .map(|(i, t)| t * (2.0 * std::f64::consts::PI * f * (i as f64 - r)).cos())
        .sum()
}
