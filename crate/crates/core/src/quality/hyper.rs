//! Cayley–Dickson hypercomplex arithmetic and the Q2^n index built on it.
//!
//! A number of dimension 2^n is stored as a flat `[f64]`; the first half and
//! the second half are the pair `(a, b)` of the recursive construction.

use crate::error::{ensure, Result};
use crate::raster::MultibandImage;

use super::uiqi_q;

pub fn conj(x: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = x.iter().map(|v| -v).collect();
    out[0] = x[0];
    out
}

/// `(a, b)(c, d) = (ac - d* b, d a + b c*)`.
pub fn mul(x: &[f64], y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len();
    if n == 1 {
        return vec![x[0] * y[0]];
    }
    let h = n / 2;
    let (a, b) = x.split_at(h);
    let (c, d) = y.split_at(h);
    let ac = mul(a, c);
    let db = mul(&conj(d), b);
    let da = mul(d, a);
    let bc = mul(b, &conj(c));
    let mut out = Vec::with_capacity(n);
    out.extend(ac.iter().zip(&db).map(|(p, q)| p - q));
    out.extend(da.iter().zip(&bc).map(|(p, q)| p + q));
    out
}

pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Q2^n of a single block of `len` pixels, each a `dim`-vector (pixel-major).
/// `None` when the block is degenerate (zero denominator).
pub fn q2n_block(x: &[f64], y: &[f64], dim: usize) -> Option<f64> {
    let m = x.len() / dim;
    let inv = 1.0 / m as f64;
    let mut mu_x = vec![0.0; dim];
    let mut mu_y = vec![0.0; dim];
    let mut cross = vec![0.0; dim];
    let (mut ex2, mut ey2) = (0.0, 0.0);
    for (px, py) in x.chunks_exact(dim).zip(y.chunks_exact(dim)) {
        let prod = mul(px, &conj(py));
        for k in 0..dim {
            mu_x[k] += px[k];
            mu_y[k] += py[k];
            cross[k] += prod[k];
        }
        ex2 += norm_sq(px);
        ey2 += norm_sq(py);
    }
    mu_x.iter_mut().chain(mu_y.iter_mut()).chain(cross.iter_mut()).for_each(|v| *v *= inv);
    let mm = mul(&mu_x, &conj(&mu_y));
    let cov: Vec<f64> = cross.iter().zip(&mm).map(|(c, m)| c - m).collect();
    let (mx2, my2) = (norm_sq(&mu_x), norm_sq(&mu_y));
    let var_x = ex2 * inv - mx2;
    let var_y = ey2 * inv - my2;
    let den = (var_x + var_y) * (mx2 + my2);
    if den == 0.0 {
        return None;
    }
    Some(4.0 * norm_sq(&cov).sqrt() * (mx2 * my2).sqrt() / den)
}

/// Hypercomplex quality index over non-overlapping `block` x `block` windows.
/// Bands are zero-padded up to the next power of two; one band falls back to
/// the real-valued index.
pub fn q2n(pred: &MultibandImage, reference: &MultibandImage, block: usize) -> Result<f64> {
    ensure!(
        pred.bands() == reference.bands() && pred.dims() == reference.dims(),
        ShapeMismatch,
        "q2n operands differ: {}x{}x{} vs {}x{}x{}",
        pred.width(),
        pred.height(),
        pred.bands(),
        reference.width(),
        reference.height(),
        reference.bands()
    );
    let (w, h) = pred.dims();
    ensure!(block >= 1, InvalidArgument, "block must be positive");
    ensure!(
        block <= w && block <= h,
        InvalidArgument,
        "block {} larger than image {}x{}",
        block,
        w,
        h
    );
    if pred.bands() == 1 {
        return uiqi_q(pred, reference, block);
    }
    let dim = pred.bands().next_power_of_two();
    let mut bx = vec![0.0; block * block * dim];
    let mut by = vec![0.0; block * block * dim];
    let (mut sum, mut count) = (0.0, 0usize);
    for y0 in (0..=h - block).step_by(block) {
        for x0 in (0..=w - block).step_by(block) {
            for yy in 0..block {
                for xx in 0..block {
                    let p = (yy * block + xx) * dim;
                    let src = (y0 + yy) * w + x0 + xx;
                    for b in 0..pred.bands() {
                        bx[p + b] = pred.band(b)[src] as f64;
                        by[p + b] = reference.band(b)[src] as f64;
                    }
                }
            }
            if let Some(q) = q2n_block(&bx, &by, dim) {
                sum += q;
                count += 1;
            }
        }
    }
    ensure!(count > 0, Degenerate, "every q2n block is degenerate");
    Ok(sum / count as f64)
}
