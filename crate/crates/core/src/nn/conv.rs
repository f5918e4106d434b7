//! 2D convolution (cross-correlation, no kernel flip) via im2col + sgemm.

use std::borrow::Cow;

use rayon::prelude::*;

use super::Tensor4;
use crate::dsp::mirror_index;
use crate::error::{ensure, Result};

/// Upper bound on the im2col buffer, in floats. Large images are processed in row bands.
const COLS_BUDGET: usize = 1 << 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Mirror-extend the input by `K / 2` so the output keeps the input size.
    SameMirror,
    /// No padding; the output shrinks by `K - 1`.
    Valid,
}

impl Padding {
    pub fn amount(self, kernel: usize) -> usize {
        match self {
            Padding::SameMirror => kernel / 2,
            Padding::Valid => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub grad_x: Option<Tensor4>,
    pub grad_w: Tensor4,
    pub grad_b: Vec<f32>,
}

fn check_shapes(x: &Tensor4, w: &Tensor4, padding: Padding) -> Result<(usize, usize)> {
    ensure!(
        w.h == w.w && w.h % 2 == 1,
        ShapeMismatch,
        "kernel must be square and odd, got {}x{}",
        w.h,
        w.w
    );
    ensure!(
        x.c == w.c,
        ShapeMismatch,
        "input has {} channels, kernel expects {}",
        x.c,
        w.c
    );
    let p = padding.amount(w.h);
    ensure!(
        x.h + 2 * p >= w.h && x.w + 2 * p >= w.w,
        ShapeMismatch,
        "input {}x{} smaller than kernel {}",
        x.h,
        x.w,
        w.h
    );
    Ok((x.h + 2 * p - w.h + 1, x.w + 2 * p - w.w + 1))
}

fn pad_mirror(sample: &[f32], c: usize, h: usize, w: usize, p: usize) -> Vec<f32> {
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = vec![0.0; c * hp * wp];
    for ci in 0..c {
        for y in 0..hp {
            let sy = mirror_index(y as isize - p as isize, h);
            let src = &sample[(ci * h + sy) * w..(ci * h + sy + 1) * w];
            let dst = &mut out[(ci * hp + y) * wp..(ci * hp + y + 1) * wp];
            for (x, d) in dst.iter_mut().enumerate() {
                *d = src[mirror_index(x as isize - p as isize, w)];
            }
        }
    }
    out
}

/// Adjoint of [`pad_mirror`].
fn fold_mirror(padded: &[f32], c: usize, h: usize, w: usize, p: usize) -> Vec<f32> {
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        for y in 0..hp {
            let sy = mirror_index(y as isize - p as isize, h);
            for x in 0..wp {
                let sx = mirror_index(x as isize - p as isize, w);
                out[(ci * h + sy) * w + sx] += padded[(ci * hp + y) * wp + x];
            }
        }
    }
    out
}

struct Geometry {
    c: usize,
    hp: usize,
    wp: usize,
    k: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }

    fn rows_per_chunk(&self) -> usize {
        (COLS_BUDGET / (self.ckk() * self.ow).max(1)).clamp(1, self.oh)
    }
}

fn im2col(xp: &[f32], g: &Geometry, r0: usize, r1: usize, cols: &mut [f32]) {
    let pc = (r1 - r0) * g.ow;
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * pc..(row + 1) * pc];
                for r in r0..r1 {
                    let src = (ci * g.hp + r + ky) * g.wp + kx;
                    dst[(r - r0) * g.ow..(r - r0 + 1) * g.ow].copy_from_slice(&xp[src..src + g.ow]);
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: &Geometry, r0: usize, r1: usize, xp: &mut [f32]) {
    let pc = (r1 - r0) * g.ow;
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * pc..(row + 1) * pc];
                for r in r0..r1 {
                    let dst = (ci * g.hp + r + ky) * g.wp + kx;
                    let s = &src[(r - r0) * g.ow..(r - r0 + 1) * g.ow];
                    for (d, v) in xp[dst..dst + g.ow].iter_mut().zip(s) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// `C (m x n) = alpha * A (m x k) * B (k x n) + beta * C` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    beta: f32,
    c: &mut [f32],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    // the slices cover every addressed element
    debug_assert!(a.len() > (m - 1) * rsa + (k.max(1) - 1) * csa || k == 0);
    debug_assert!(c.len() > (m - 1) * rsc + (n - 1));
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

fn padded_input<'a>(x: &'a [f32], c: usize, h: usize, w: usize, p: usize) -> Cow<'a, [f32]> {
    if p == 0 {
        Cow::Borrowed(x)
    } else {
        Cow::Owned(pad_mirror(x, c, h, w, p))
    }
}

fn forward_sample(x: &[f32], in_h: usize, in_w: usize, w: &Tensor4, b: &[f32], p: usize, out: &mut [f32]) {
    let g = Geometry {
        c: w.c,
        hp: in_h + 2 * p,
        wp: in_w + 2 * p,
        k: w.h,
        oh: in_h + 2 * p - w.h + 1,
        ow: in_w + 2 * p - w.w + 1,
    };
    let xp = padded_input(x, g.c, in_h, in_w, p);
    let ckk = g.ckk();
    let plane = g.oh * g.ow;
    let rows = g.rows_per_chunk();
    let mut cols = vec![0.0; ckk * rows * g.ow];
    let mut r0 = 0;
    while r0 < g.oh {
        let r1 = (r0 + rows).min(g.oh);
        let pc = (r1 - r0) * g.ow;
        im2col(&xp, &g, r0, r1, &mut cols);
        gemm(w.n, ckk, pc, &w.data, ckk, 1, &cols, pc, 1, 0.0, &mut out[r0 * g.ow..], plane);
        r0 = r1;
    }
    for (m, &bias) in b.iter().enumerate() {
        out[m * plane..(m + 1) * plane].iter_mut().for_each(|v| *v += bias);
    }
}

/// `z(m) = sum_n w(m, n) * x(n) + b(m)` for every batch item.
pub fn conv_forward(x: &Tensor4, w: &Tensor4, b: &[f32], padding: Padding) -> Result<Tensor4> {
    let (oh, ow) = check_shapes(x, w, padding)?;
    ensure!(b.len() == w.n, ShapeMismatch, "{} biases for {} filters", b.len(), w.n);
    let p = padding.amount(w.h);
    let mut out = Tensor4::zeros(x.n, w.n, oh, ow);
    let out_len = out.sample_len();
    out.data
        .par_chunks_mut(out_len.max(1))
        .enumerate()
        .for_each(|(i, o)| forward_sample(x.sample(i), x.h, x.w, w, b, p, o));
    Ok(out)
}

fn backward_sample(
    x: &[f32],
    in_h: usize,
    in_w: usize,
    w: &Tensor4,
    grad_out: &[f32],
    p: usize,
    need_grad_x: bool,
) -> (Vec<f32>, Option<Vec<f32>>) {
    let g = Geometry {
        c: w.c,
        hp: in_h + 2 * p,
        wp: in_w + 2 * p,
        k: w.h,
        oh: in_h + 2 * p - w.h + 1,
        ow: in_w + 2 * p - w.w + 1,
    };
    let xp = padded_input(x, g.c, in_h, in_w, p);
    let ckk = g.ckk();
    let plane = g.oh * g.ow;
    let rows = g.rows_per_chunk();
    let mut cols = vec![0.0; ckk * rows * g.ow];
    let mut grad_cols = if need_grad_x { vec![0.0; ckk * rows * g.ow] } else { Vec::new() };
    let mut grad_w = vec![0.0; w.n * ckk];
    let mut grad_xp = if need_grad_x { vec![0.0; g.c * g.hp * g.wp] } else { Vec::new() };
    let mut r0 = 0;
    while r0 < g.oh {
        let r1 = (r0 + rows).min(g.oh);
        let pc = (r1 - r0) * g.ow;
        im2col(&xp, &g, r0, r1, &mut cols);
        let go = &grad_out[r0 * g.ow..];
        // dW += G * cols^T
        gemm(w.n, pc, ckk, go, plane, 1, &cols, 1, pc, 1.0, &mut grad_w, ckk);
        if need_grad_x {
            // dcols = W^T * G
            gemm(ckk, w.n, pc, &w.data, 1, ckk, go, plane, 1, 0.0, &mut grad_cols, pc);
            col2im(&grad_cols, &g, r0, r1, &mut grad_xp);
        }
        r0 = r1;
    }
    let grad_x = need_grad_x.then(|| {
        if p == 0 {
            grad_xp
        } else {
            fold_mirror(&grad_xp, g.c, in_h, in_w, p)
        }
    });
    (grad_w, grad_x)
}

/// Exact gradients of [`conv_forward`] with respect to input, weights and biases.
/// The input gradient is skipped when `need_grad_x` is false.
pub fn conv_backward(
    x: &Tensor4,
    w: &Tensor4,
    grad_out: &Tensor4,
    padding: Padding,
    need_grad_x: bool,
) -> Result<ConvGrads> {
    let (oh, ow) = check_shapes(x, w, padding)?;
    ensure!(
        grad_out.shape() == [x.n, w.n, oh, ow],
        ShapeMismatch,
        "grad_out shape {:?}, expected {:?}",
        grad_out.shape(),
        [x.n, w.n, oh, ow]
    );
    let p = padding.amount(w.h);
    let per_sample: Vec<(Vec<f32>, Option<Vec<f32>>)> = (0..x.n)
        .into_par_iter()
        .map(|i| backward_sample(x.sample(i), x.h, x.w, w, grad_out.sample(i), p, need_grad_x))
        .collect();

    // fixed-order reduction over the batch
    let mut acc = vec![0.0f64; w.len()];
    for (gw, _) in &per_sample {
        for (a, &v) in acc.iter_mut().zip(gw) {
            *a += v as f64;
        }
    }
    let grad_w = Tensor4::from_vec(w.n, w.c, w.h, w.w, acc.into_iter().map(|v| v as f32).collect())?;

    let plane = oh * ow;
    let mut grad_b = vec![0.0f32; w.n];
    for (m, gb) in grad_b.iter_mut().enumerate() {
        let mut s = 0.0f64;
        for i in 0..x.n {
            s += grad_out.sample(i)[m * plane..(m + 1) * plane]
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>();
        }
        *gb = s as f32;
    }

    let grad_x = if need_grad_x {
        let mut data = Vec::with_capacity(x.len());
        for (_, gx) in per_sample {
            data.extend(gx.expect("input gradient requested"));
        }
        Some(Tensor4::from_vec(x.n, x.c, x.h, x.w, data)?)
    } else {
        None
    };
    Ok(ConvGrads {
        grad_x,
        grad_w,
        grad_b,
    })
}
