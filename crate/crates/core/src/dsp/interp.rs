//! 23-tap dyadic interpolation (the EXP upsampler).
//!
//! Each stage doubles the grid. Input samples are copied through unchanged
//! and the in-between samples are filled from the odd taps of a symmetric
//! half-band kernel, so the stage is equivalent to zero-interleaving and
//! filtering with a DC gain of 2. The kernel is a Kaiser-windowed (beta = 8)
//! ideal half-band sinc whose even taps are then pinned to exactly 1 (center)
//! and 0, and whose odd taps are renormalized to sum to 1.

use super::{decimation_offset, mirror_index};
use crate::error::{ensure, Result};
use crate::raster::MultibandImage;

pub const INTERP_TAPS: usize = 23;
const KAISER_BETA: f64 = 8.0;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// The 23 coefficients of one interpolation stage on the zero-interleaved grid.
pub fn interp23_kernel() -> [f64; INTERP_TAPS] {
    let c = (INTERP_TAPS / 2) as isize;
    let mut h = [0.0; INTERP_TAPS];
    for (i, tap) in h.iter_mut().enumerate() {
        let t = i as isize - c;
        if t == 0 {
            *tap = 1.0;
        } else if t % 2 == 0 {
            *tap = 0.0;
        } else {
            let x = std::f64::consts::PI * t as f64 / 2.0;
            let sinc = x.sin() / x;
            let ratio = t as f64 / c as f64;
            let window = bessel_i0(KAISER_BETA * (1.0 - ratio * ratio).sqrt()) / bessel_i0(KAISER_BETA);
            *tap = sinc * window;
        }
    }
    let odd_sum: f64 = h.iter().enumerate().filter(|(i, _)| (*i as isize - c) % 2 != 0).map(|(_, v)| v).sum();
    for (i, tap) in h.iter_mut().enumerate() {
        if (i as isize - c) % 2 != 0 {
            *tap /= odd_sum;
        }
    }
    for i in 0..INTERP_TAPS / 2 {
        h[INTERP_TAPS - 1 - i] = h[i];
    }
    h
}

/// One dyadic stage on a 1D signal: `out[2k + phase] = x[k]`, the rest interpolated.
pub fn upsample_1d(x: &[f64], phase: usize, kernel: &[f64; INTERP_TAPS]) -> Vec<f64> {
    let n = x.len();
    let c = (INTERP_TAPS / 2) as isize;
    let mut out = vec![0.0; 2 * n];
    for (i, o) in out.iter_mut().enumerate() {
        let d = i as isize - phase as isize;
        if d.rem_euclid(2) == 0 {
            *o = x[(d / 2) as usize];
        } else {
            // between low-res samples k and k + 1
            let k = (d - 1).div_euclid(2);
            let mut acc = 0.0;
            for t in (-c..=c).filter(|t| t.rem_euclid(2) == 1) {
                let src = k + (1 - t) / 2;
                acc += kernel[(t + c) as usize] * x[mirror_index(src, n)];
            }
            *o = acc;
        }
    }
    out
}

fn upsample_plane(plane: &[f64], width: usize, height: usize, phase: usize, kernel: &[f64; INTERP_TAPS]) -> Vec<f64> {
    let w2 = 2 * width;
    let mut rows = Vec::with_capacity(w2 * height);
    for y in 0..height {
        rows.extend(upsample_1d(&plane[y * width..(y + 1) * width], phase, kernel));
    }
    let h2 = 2 * height;
    let mut out = vec![0.0; w2 * h2];
    let mut col = vec![0.0; height];
    for x in 0..w2 {
        for y in 0..height {
            col[y] = rows[y * w2 + x];
        }
        for (y, v) in upsample_1d(&col, phase, kernel).into_iter().enumerate() {
            out[y * w2 + x] = v;
        }
    }
    out
}

/// Per-stage phases whose composition places low-res sample `k` at
/// `decimation_offset(ratio) + k * ratio`.
fn stage_phases(ratio: usize) -> Vec<usize> {
    let stages = ratio.trailing_zeros() as usize;
    let offset = decimation_offset(ratio);
    (0..stages).map(|s| (offset >> (stages - 1 - s)) & 1).collect()
}

/// Upsamples every band by `ratio` (a power of two) with cascaded 23-tap stages.
pub fn interp23(img: &MultibandImage, ratio: usize) -> Result<MultibandImage> {
    ensure!(
        ratio >= 1 && ratio.is_power_of_two(),
        InvalidArgument,
        "interpolation ratio must be a power of two, got {}",
        ratio
    );
    let kernel = interp23_kernel();
    let phases = stage_phases(ratio);
    let (w, h) = img.dims();
    let mut data = Vec::with_capacity(img.plane_len() * ratio * ratio * img.bands());
    for b in 0..img.bands() {
        let mut plane: Vec<f64> = img.band(b).iter().map(|&v| v as f64).collect();
        let (mut cw, mut ch) = (w, h);
        for &p in &phases {
            plane = upsample_plane(&plane, cw, ch, p, &kernel);
            cw *= 2;
            ch *= 2;
        }
        data.extend(plane.into_iter().map(|v| v as f32));
    }
    MultibandImage::from_data(w * ratio, h * ratio, img.bands(), img.bit_depth(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_structure() {
        let h = interp23_kernel();
        assert_eq!(h[11], 1.0);
        for i in 0..23 {
            assert_eq!(h[i], h[22 - i]);
            if i != 11 && (i as isize - 11) % 2 == 0 {
                assert_eq!(h[i], 0.0);
            }
        }
        let dc: f64 = h.iter().sum();
        assert!((dc - 2.0).abs() < 1e-12);
        // first side lobe is negative, nearest neighbours dominate
        assert!(h[10] > 0.6 && h[8] < 0.0);
    }

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-12);
        assert!((bessel_i0(8.0) - 427.564_115_721_804_7).abs() < 1e-9);
    }

    #[test]
    fn constants_are_reproduced() {
        let img = MultibandImage::filled(8, 6, 2, 11, 123.5);
        let up = interp23(&img, 4).unwrap();
        assert_eq!(up.dims(), (32, 24));
        assert!(up.data().iter().all(|&v| (v - 123.5).abs() < 1e-5));
    }

    #[test]
    fn shape_arithmetic_and_errors() {
        let img = MultibandImage::zeros(32, 32, 4, 11);
        assert_eq!(interp23(&img, 4).unwrap().dims(), (128, 128));
        assert!(interp23(&img, 3).is_err());
        assert_eq!(interp23(&img, 1).unwrap(), img);
    }

    #[test]
    fn stage_preserves_even_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..37).map(|_| rng.random_range(-5.0..5.0)).collect();
        let h = interp23_kernel();
        for phase in [0, 1] {
            let y = upsample_1d(&x, phase, &h);
            for (k, &v) in x.iter().enumerate() {
                assert_eq!(y[2 * k + phase], v);
            }
        }
    }

    #[test]
    fn stage_matches_zero_interleave_filter_in_the_interior() {
        // direct convolution of the zero-interleaved signal, away from borders
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
        let h = interp23_kernel();
        let y = upsample_1d(&x, 0, &h);
        let mut z = vec![0.0; 80];
        for (k, &v) in x.iter().enumerate() {
            z[2 * k] = v;
        }
        for i in 12..68 {
            let direct: f64 = (0..23).map(|j| h[j] * z[i + j - 11]).sum();
            assert!((direct - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_reappear_at_decimation_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = (0..12 * 10).map(|_| rng.random_range(0.0..2047.0)).collect();
        let img = MultibandImage::from_data(12, 10, 1, 11, data).unwrap();
        for ratio in [2, 4, 8] {
            let up = interp23(&img, ratio).unwrap();
            let off = decimation_offset(ratio);
            for y in 0..10 {
                for x in 0..12 {
                    let v = up.get(0, off + x * ratio, off + y * ratio);
                    assert!((v - img.get(0, x, y)).abs() < 1e-5);
                }
            }
        }
    }
}
