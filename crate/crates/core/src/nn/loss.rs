//! Training losses with analytic gradients.
//!
//! Every loss is a mean over the evaluated region. The region is the
//! reference with `crop_margin` pixels removed on each side; the prediction
//! must either already have that size (valid-padding nets) or the size of the
//! uncropped reference, in which case it is cropped the same way.

use std::fmt;
use std::str::FromStr;

use super::Tensor4;
use crate::error::{ensure, Error, Result};

const SID_FLOOR: f64 = 1e-12;
const ANGLE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    L2,
    L1,
    Sam,
    Sid,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::L2 => "l2",
            LossKind::L1 => "l1",
            LossKind::Sam => "sam",
            LossKind::Sid => "sid",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "mse" => Ok(LossKind::L2),
            "l1" | "mae" => Ok(LossKind::L1),
            "sam" => Ok(LossKind::Sam),
            "sid" => Ok(LossKind::Sid),
            other => Err(Error::InvalidArgument(format!("unknown loss {:?}", other))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub crop_margin: usize,
}

impl LossSpec {
    pub fn new(kind: LossKind, crop_margin: usize) -> Self {
        LossSpec { kind, crop_margin }
    }
}

/// Brings prediction and reference onto the evaluated region. Returns the
/// cropped pair and the margin applied to the prediction.
pub fn loss_region(pred: &Tensor4, reference: &Tensor4, crop_margin: usize) -> Result<(Tensor4, Tensor4, usize)> {
    ensure!(
        pred.n == reference.n && pred.c == reference.c,
        ShapeMismatch,
        "prediction {:?} vs reference {:?}",
        pred.shape(),
        reference.shape()
    );
    let r = if crop_margin == 0 {
        reference.clone()
    } else {
        reference.crop_center(crop_margin)?
    };
    if pred.h == r.h && pred.w == r.w {
        Ok((pred.clone(), r, 0))
    } else if pred.h == reference.h && pred.w == reference.w {
        Ok((pred.crop_center(crop_margin)?, r, crop_margin))
    } else {
        Err(Error::ShapeMismatch(format!(
            "prediction {}x{} matches neither reference {}x{} nor its {}-pixel crop",
            pred.h, pred.w, reference.h, reference.w, crop_margin
        )))
    }
}

/// Loss value and gradient with respect to `pred` (same shape as `pred`).
pub fn loss_eval(pred: &Tensor4, reference: &Tensor4, spec: &LossSpec) -> Result<(f64, Tensor4)> {
    let (p, r, pred_margin) = loss_region(pred, reference, spec.crop_margin)?;
    let (value, grad) = match spec.kind {
        LossKind::L2 => l2(&p, &r),
        LossKind::L1 => l1(&p, &r),
        LossKind::Sam => {
            ensure!(p.c >= 2, InvalidArgument, "SAM needs at least 2 bands");
            sam(&p, &r)
        }
        LossKind::Sid => {
            ensure!(p.c >= 2, InvalidArgument, "SID needs at least 2 bands");
            sid(&p, &r)
        }
    };
    let grad = if pred_margin == 0 { grad } else { grad.pad_zeros(pred_margin) };
    Ok((value, grad))
}

fn l2(p: &Tensor4, r: &Tensor4) -> (f64, Tensor4) {
    let n = p.len() as f64;
    let mut sum = 0.0f64;
    let mut grad = p.clone();
    for ((g, &a), &b) in grad.data.iter_mut().zip(&p.data).zip(&r.data) {
        let d = a as f64 - b as f64;
        sum += d * d;
        *g = (2.0 * d / n) as f32;
    }
    (sum / n, grad)
}

fn l1(p: &Tensor4, r: &Tensor4) -> (f64, Tensor4) {
    let n = p.len() as f64;
    let mut sum = 0.0f64;
    let mut grad = p.clone();
    for ((g, &a), &b) in grad.data.iter_mut().zip(&p.data).zip(&r.data) {
        let d = a as f64 - b as f64;
        sum += d.abs();
        *g = if d > 0.0 {
            (1.0 / n) as f32
        } else if d < 0.0 {
            (-1.0 / n) as f32
        } else {
            0.0
        };
    }
    (sum / n, grad)
}

/// Visits every pixel's spectral vector: `f(sample, offset, plane)`.
fn for_each_pixel(t: &Tensor4, mut f: impl FnMut(usize, usize)) {
    let plane = t.plane();
    for n in 0..t.n {
        for i in 0..plane {
            f(n * t.sample_len() + i, plane);
        }
    }
}

fn sam(p: &Tensor4, r: &Tensor4) -> (f64, Tensor4) {
    let bands = p.c;
    let mut grad = Tensor4::zeros(p.n, p.c, p.h, p.w);
    let mut total = 0.0f64;
    let mut counted = 0usize;
    let mut pixel_grads: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for_each_pixel(p, |base, plane| {
        let (mut dot, mut pp, mut rr) = (0.0f64, 0.0f64, 0.0f64);
        for b in 0..bands {
            let (x, y) = (p.data[base + b * plane] as f64, r.data[base + b * plane] as f64);
            dot += x * y;
            pp += x * x;
            rr += y * y;
        }
        if pp <= 0.0 || rr <= 0.0 {
            return;
        }
        let (np, nr) = (pp.sqrt(), rr.sqrt());
        let cos = (dot / (np * nr)).clamp(-1.0, 1.0);
        total += cos.acos();
        counted += 1;
        let sin = (1.0 - cos * cos).sqrt();
        if sin < ANGLE_EPS {
            return;
        }
        // d acos(c) / dp = -(r / (|p||r|) - c p / |p|^2) / sin
        let g: Vec<f64> = (0..bands)
            .map(|b| {
                let (x, y) = (p.data[base + b * plane] as f64, r.data[base + b * plane] as f64);
                -(y / (np * nr) - cos * x / pp) / sin
            })
            .collect();
        pixel_grads.push((base, plane, g));
    });
    if counted == 0 {
        return (0.0, grad);
    }
    let inv = 1.0 / counted as f64;
    for (base, plane, g) in pixel_grads {
        for (b, v) in g.into_iter().enumerate() {
            grad.data[base + b * plane] = (v * inv) as f32;
        }
    }
    (total * inv, grad)
}

fn sid(p: &Tensor4, r: &Tensor4) -> (f64, Tensor4) {
    let bands = p.c;
    let mut grad = Tensor4::zeros(p.n, p.c, p.h, p.w);
    let pixels = (p.n * p.plane()) as f64;
    let mut total = 0.0f64;
    let mut xs = vec![0.0f64; bands];
    let mut ys = vec![0.0f64; bands];
    for_each_pixel(p, |base, plane| {
        for b in 0..bands {
            xs[b] = (p.data[base + b * plane] as f64).max(SID_FLOOR);
            ys[b] = (r.data[base + b * plane] as f64).max(SID_FLOOR);
        }
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let mut value = 0.0;
        // d SID / d p_i = ln(p_i / q_i) + 1 - q_i / p_i
        let mut dp = vec![0.0f64; bands];
        for b in 0..bands {
            let (pi, qi) = (xs[b] / sx, ys[b] / sy);
            value += (pi - qi) * (pi / qi).ln();
            dp[b] = (pi / qi).ln() + 1.0 - qi / pi;
        }
        total += value;
        let weighted: f64 = (0..bands).map(|b| dp[b] * xs[b] / sx).sum();
        for b in 0..bands {
            let clamped = (p.data[base + b * plane] as f64) < SID_FLOOR;
            if !clamped {
                grad.data[base + b * plane] = ((dp[b] - weighted) / sx / pixels) as f32;
            }
        }
    });
    (total / pixels, grad)
}
