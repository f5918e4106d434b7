//! Multiresolution machinery: MTF-matched low-pass filters, decimation,
//! dyadic polynomial upsampling and Wald-protocol degradation.

mod interp;
mod profile;

pub use interp::{interp23, interp23_kernel, upsample_1d, INTERP_TAPS};
pub use profile::{radiometric_indices, IndexPair, SensorProfile};

use crate::error::{ensure, Result};
use crate::raster::MultibandImage;

pub const DEFAULT_KERNEL_SIZE: usize = 41;

/// Half-sample symmetric extension: `... c b a | a b c | c b a ...`.
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Separable symmetric 2D filter, stored as its odd-length 1D profile.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableKernel {
    taps: Vec<f64>,
}

impl SeparableKernel {
    pub fn from_taps(taps: Vec<f64>) -> Result<Self> {
        ensure!(
            taps.len() % 2 == 1,
            InvalidArgument,
            "kernel length must be odd, got {}",
            taps.len()
        );
        Ok(SeparableKernel { taps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn size(&self) -> usize {
        self.taps.len()
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    /// Coefficient `(row, col)` of the equivalent 2D kernel.
    pub fn coefficient(&self, row: usize, col: usize) -> f64 {
        self.taps[row] * self.taps[col]
    }

    /// Full `size x size` matrix, row-major.
    pub fn to_2d(&self) -> Vec<f64> {
        let n = self.size();
        (0..n * n).map(|i| self.coefficient(i / n, i % n)).collect()
    }

    /// Magnitude of the 1D discrete-time Fourier transform at normalized
    /// frequency `f` (cycles/sample). For the separable 2D kernel this is the
    /// response along either axis.
    pub fn frequency_response(&self, f: f64) -> f64 {
        let r = self.radius() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &t) in self.taps.iter().enumerate() {
            let phase = -2.0 * std::f64::consts::PI * f * (i as f64 - r);
            re += t * phase.cos();
            im += t * phase.sin();
        }
        re.hypot(im)
    }
}

/// Standard deviation (in fine-grid samples) of the Gaussian whose frequency
/// response equals `gnyq` at the coarse-grid Nyquist frequency `1 / (2 ratio)`.
pub fn mtf_sigma(ratio: usize, gnyq: f64) -> f64 {
    (ratio as f64 / std::f64::consts::PI) * (-2.0 * gnyq.ln()).sqrt()
}

/// Gaussian MTF approximation, truncated to `size` taps and renormalized to unit DC gain.
pub fn mtf_gaussian_kernel(ratio: usize, gnyq: f64, size: usize) -> Result<SeparableKernel> {
    ensure!(size % 2 == 1, InvalidArgument, "kernel size must be odd, got {}", size);
    ensure!(
        gnyq > 0.0 && gnyq < 1.0,
        InvalidArgument,
        "Nyquist gain must lie in (0, 1), got {}",
        gnyq
    );
    ensure!(ratio >= 1, InvalidArgument, "ratio must be positive");
    let sigma = mtf_sigma(ratio, gnyq);
    let r = (size / 2) as f64;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    // exact symmetry regardless of rounding in the exponentials
    for i in 0..size / 2 {
        taps[size - 1 - i] = taps[i];
    }
    SeparableKernel::from_taps(taps)
}

/// Sampling phase of decimation by `ratio`: `(ratio - 1) / 2` rounded down.
pub fn decimation_offset(ratio: usize) -> usize {
    (ratio - 1) / 2
}

fn filter_decimate_plane(
    src: &[f32],
    width: usize,
    height: usize,
    taps: &[f64],
    ratio: usize,
) -> Vec<f32> {
    let off = decimation_offset(ratio);
    let (ow, oh) = (width / ratio, height / ratio);
    let r = (taps.len() / 2) as isize;
    // horizontal pass, only at retained columns
    let mut tmp = vec![0.0f64; height * ow];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for j in 0..ow {
            let xc = (off + j * ratio) as isize;
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * row[mirror_index(xc + k as isize - r, width)] as f64;
            }
            tmp[y * ow + j] = acc;
        }
    }
    let mut out = vec![0.0f32; ow * oh];
    for i in 0..oh {
        let yc = (off + i * ratio) as isize;
        for j in 0..ow {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * tmp[mirror_index(yc + k as isize - r, height) * ow + j];
            }
            out[i * ow + j] = acc as f32;
        }
    }
    out
}

/// Low-pass filters every band with `kernel` (mirror boundaries) and keeps
/// samples at `offset + k * ratio`.
pub fn lowpass_decimate(
    img: &MultibandImage,
    kernel: &SeparableKernel,
    ratio: usize,
) -> Result<MultibandImage> {
    let kernels = vec![kernel.clone(); img.bands()];
    lowpass_decimate_bands(img, &kernels, ratio)
}

/// As [`lowpass_decimate`] with one kernel per band.
pub fn lowpass_decimate_bands(
    img: &MultibandImage,
    kernels: &[SeparableKernel],
    ratio: usize,
) -> Result<MultibandImage> {
    ensure!(ratio >= 1, InvalidArgument, "ratio must be positive");
    ensure!(
        img.width() % ratio == 0 && img.height() % ratio == 0,
        InvalidArgument,
        "image {}x{} not divisible by ratio {}",
        img.width(),
        img.height(),
        ratio
    );
    ensure!(
        kernels.len() == img.bands(),
        InvalidArgument,
        "{} kernels for {} bands",
        kernels.len(),
        img.bands()
    );
    let (w, h) = img.dims();
    let mut data = Vec::with_capacity(img.plane_len() / (ratio * ratio) * img.bands());
    for (b, k) in kernels.iter().enumerate() {
        data.extend(filter_decimate_plane(img.band(b), w, h, k.taps(), ratio));
    }
    MultibandImage::from_data(w / ratio, h / ratio, img.bands(), img.bit_depth(), data)
}

/// Output of [`wald_degrade`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaldTriplet {
    pub ms_lr: MultibandImage,
    pub pan_lr: MultibandImage,
    pub reference: MultibandImage,
}

/// MTF-matched kernels for each MS band.
pub fn ms_kernels(profile: &SensorProfile) -> Result<Vec<SeparableKernel>> {
    profile
        .gnyq_ms
        .iter()
        .map(|&g| mtf_gaussian_kernel(profile.ratio, g, DEFAULT_KERNEL_SIZE))
        .collect()
}

pub fn pan_kernel(profile: &SensorProfile) -> Result<SeparableKernel> {
    mtf_gaussian_kernel(profile.ratio, profile.gnyq_pan, DEFAULT_KERNEL_SIZE)
}

/// Degrades PAN by the sensor's PAN MTF and decimates by the profile ratio.
pub fn degrade_pan(pan: &MultibandImage, profile: &SensorProfile) -> Result<MultibandImage> {
    ensure!(pan.bands() == 1, ShapeMismatch, "PAN must have one band, has {}", pan.bands());
    lowpass_decimate(pan, &pan_kernel(profile)?, profile.ratio)
}

/// Degrades MS band-wise by the matched MTF kernels.
pub fn degrade_ms(ms: &MultibandImage, profile: &SensorProfile) -> Result<MultibandImage> {
    ensure!(
        ms.bands() == profile.bands,
        ShapeMismatch,
        "MS has {} bands, profile {} expects {}",
        ms.bands(),
        profile.name,
        profile.bands
    );
    lowpass_decimate_bands(ms, &ms_kernels(profile)?, profile.ratio)
}

/// Wald protocol: both components are degraded by the sensor ratio and the
/// original MS becomes the reference.
pub fn wald_degrade(
    ms: &MultibandImage,
    pan: &MultibandImage,
    profile: &SensorProfile,
) -> Result<WaldTriplet> {
    let r = profile.ratio;
    ensure!(
        pan.width() == ms.width() * r && pan.height() == ms.height() * r,
        ShapeMismatch,
        "PAN {}x{} is not MS {}x{} times {}",
        pan.width(),
        pan.height(),
        ms.width(),
        ms.height(),
        r
    );
    Ok(WaldTriplet {
        ms_lr: degrade_ms(ms, profile)?,
        pan_lr: degrade_pan(pan, profile)?,
        reference: ms.clone(),
    })
}
