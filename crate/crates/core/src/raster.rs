//! Planar multiband rasters, the MBIR on-disk format, PPM previews and
//! training-tile extraction.
//!
//! MBIR layout (all integers little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `b"MBIR"`               |
//! | 4      | 2    | version (`u16`, currently 1)  |
//! | 6      | 4    | width (`u32`)                 |
//! | 10     | 4    | height (`u32`)                |
//! | 14     | 4    | bands (`u32`)                 |
//! | 18     | 2    | nominal bit depth (`u16`)     |
//! | 20     | ...  | band-sequential `f32` samples |

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};

pub const MBIR_MAGIC: [u8; 4] = *b"MBIR";
pub const MBIR_VERSION: u16 = 1;
pub const MBIR_HEADER_LEN: usize = 20;

/// Planar (band-sequential) multiband image of `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MultibandImage {
    width: usize,
    height: usize,
    bands: usize,
    bit_depth: u16,
    data: Vec<f32>,
}

impl MultibandImage {
    pub fn zeros(width: usize, height: usize, bands: usize, bit_depth: u16) -> Self {
        MultibandImage {
            width,
            height,
            bands,
            bit_depth,
            data: vec![0.0; width * height * bands],
        }
    }

    pub fn filled(width: usize, height: usize, bands: usize, bit_depth: u16, value: f32) -> Self {
        MultibandImage {
            width,
            height,
            bands,
            bit_depth,
            data: vec![value; width * height * bands],
        }
    }

    /// Builds an image from planar data, enforcing the length and finiteness invariants.
    pub fn from_data(
        width: usize,
        height: usize,
        bands: usize,
        bit_depth: u16,
        data: Vec<f32>,
    ) -> Result<Self> {
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(bands))
            .ok_or(Error::DimensionOverflow {
                width: width as u64,
                height: height as u64,
                bands: bands as u64,
            })?;
        ensure!(
            data.len() == expected,
            InvalidImage,
            "data length {} != {}x{}x{}",
            data.len(),
            width,
            height,
            bands
        );
        let img = MultibandImage {
            width,
            height,
            bands,
            bit_depth,
            data,
        };
        img.validate()?;
        Ok(img)
    }

    /// Stacks single- or multi-band images of identical size along the band axis.
    pub fn stack(parts: &[&MultibandImage]) -> Result<Self> {
        ensure!(!parts.is_empty(), InvalidArgument, "nothing to stack");
        let (w, h) = parts[0].dims();
        let mut data = Vec::with_capacity(w * h * parts.iter().map(|p| p.bands).sum::<usize>());
        for p in parts {
            ensure!(
                p.dims() == (w, h),
                ShapeMismatch,
                "cannot stack {}x{} with {}x{}",
                p.width,
                p.height,
                w,
                h
            );
            data.extend_from_slice(&p.data);
        }
        let bands = data.len() / (w * h).max(1);
        Ok(MultibandImage {
            width: w,
            height: h,
            bands,
            bit_depth: parts[0].bit_depth,
            data,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            let plane = (self.width * self.height).max(1);
            return Err(Error::InvalidImage(format!(
                "non-finite sample {} at band {}, pixel {}",
                self.data[i],
                i / plane,
                i % plane
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bit_depth(&self) -> u16 {
        self.bit_depth
    }

    pub fn set_bit_depth(&mut self, bits: u16) {
        self.bit_depth = bits;
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    #[inline]
    pub fn get(&self, band: usize, x: usize, y: usize) -> f32 {
        self.data[(band * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, band: usize, x: usize, y: usize, v: f32) {
        self.data[(band * self.height + y) * self.width + x] = v;
    }

    /// Copies the single band `b` into a new one-band image.
    pub fn band_image(&self, b: usize) -> MultibandImage {
        MultibandImage {
            width: self.width,
            height: self.height,
            bands: 1,
            bit_depth: self.bit_depth,
            data: self.band(b).to_vec(),
        }
    }

    /// Copies the contiguous band range `[start, start + count)`.
    pub fn band_range(&self, start: usize, count: usize) -> Result<MultibandImage> {
        ensure!(
            start + count <= self.bands,
            InvalidArgument,
            "band range {}..{} exceeds {} bands",
            start,
            start + count,
            self.bands
        );
        let n = self.plane_len();
        Ok(MultibandImage {
            width: self.width,
            height: self.height,
            bands: count,
            bit_depth: self.bit_depth,
            data: self.data[start * n..(start + count) * n].to_vec(),
        })
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<MultibandImage> {
        ensure!(
            x0 + w <= self.width && y0 + h <= self.height,
            InvalidArgument,
            "crop {}x{}+{}+{} outside {}x{}",
            w,
            h,
            x0,
            y0,
            self.width,
            self.height
        );
        let mut data = Vec::with_capacity(w * h * self.bands);
        for b in 0..self.bands {
            let plane = self.band(b);
            for y in y0..y0 + h {
                let row = y * self.width;
                data.extend_from_slice(&plane[row + x0..row + x0 + w]);
            }
        }
        Ok(MultibandImage {
            width: w,
            height: h,
            bands: self.bands,
            bit_depth: self.bit_depth,
            data,
        })
    }

    /// Writes `src` into this image with its top-left corner at `(x0, y0)`.
    pub fn paste(&mut self, src: &MultibandImage, x0: usize, y0: usize) -> Result<()> {
        ensure!(
            src.bands == self.bands && x0 + src.width <= self.width && y0 + src.height <= self.height,
            ShapeMismatch,
            "cannot paste {}x{}x{} at ({}, {}) into {}x{}x{}",
            src.width,
            src.height,
            src.bands,
            x0,
            y0,
            self.width,
            self.height,
            self.bands
        );
        for b in 0..self.bands {
            for y in 0..src.height {
                let s = &src.band(b)[y * src.width..(y + 1) * src.width];
                let off = (b * self.height + y0 + y) * self.width + x0;
                self.data[off..off + src.width].copy_from_slice(s);
            }
        }
        Ok(())
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &MultibandImage) -> Result<MultibandImage> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &MultibandImage) -> Result<MultibandImage> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &MultibandImage, f: impl Fn(f32, f32) -> f32) -> Result<MultibandImage> {
        ensure!(
            self.width == other.width && self.height == other.height && self.bands == other.bands,
            ShapeMismatch,
            "{}x{}x{} vs {}x{}x{}",
            self.width,
            self.height,
            self.bands,
            other.width,
            other.height,
            other.bands
        );
        Ok(MultibandImage {
            width: self.width,
            height: self.height,
            bands: self.bands,
            bit_depth: self.bit_depth,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> MultibandImage {
        MultibandImage {
            width: self.width,
            height: self.height,
            bands: self.bands,
            bit_depth: self.bit_depth,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(MBIR_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&MBIR_MAGIC);
        out.extend_from_slice(&MBIR_VERSION.to_le_bytes());
        for d in [self.width, self.height, self.bands] {
            let d = u32::try_from(d).map_err(|_| Error::DimensionOverflow {
                width: self.width as u64,
                height: self.height as u64,
                bands: self.bands as u64,
            })?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.bit_depth.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MBIR_HEADER_LEN {
            return Err(Error::Truncated {
                expected: MBIR_HEADER_LEN,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MBIR_MAGIC {
            return Err(Error::BadMagic {
                expected: MBIR_MAGIC,
                found: magic,
            });
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MBIR_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: MBIR_VERSION,
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as u64;
        let (width, height, bands) = (u32_at(6), u32_at(10), u32_at(14));
        let bit_depth = u16::from_le_bytes([bytes[18], bytes[19]]);
        let overflow = Error::DimensionOverflow {
            width,
            height,
            bands,
        };
        let payload = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(bands))
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| usize::try_from(n).ok())
            .ok_or(overflow)?;
        let expected = MBIR_HEADER_LEN + payload;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::TrailingData {
                expected,
                found: bytes.len(),
            });
        }
        let data = bytes[MBIR_HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        MultibandImage::from_data(width as usize, height as usize, bands as usize, bit_depth, data)
    }
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<MultibandImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    MultibandImage::from_bytes(&bytes)
}

pub fn write_raster(img: &MultibandImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = img.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Nearest-rank percentile of `values` (`pct` in `[0, 100]`).
pub fn nearest_rank_percentile(sorted: &[f32], pct: f64) -> f32 {
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Linear percentile stretch of one band to 8 bits. Constant bands map to 128.
pub fn stretch_band(values: &[f32], low_pct: f64, high_pct: f64) -> Vec<u8> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let lo = nearest_rank_percentile(&sorted, low_pct) as f64;
    let hi = nearest_rank_percentile(&sorted, high_pct) as f64;
    if hi <= lo {
        return vec![128; values.len()];
    }
    let scale = 255.0 / (hi - lo);
    values
        .iter()
        .map(|&v| ((v as f64 - lo) * scale).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Renders three bands as an 8-bit RGB binary PPM (P6).
pub fn render_rgb_preview(
    img: &MultibandImage,
    band_triplet: [usize; 3],
    low_pct: f64,
    high_pct: f64,
) -> Result<Vec<u8>> {
    for &b in &band_triplet {
        ensure!(
            b < img.bands(),
            InvalidArgument,
            "band index {} out of range for {} bands",
            b,
            img.bands()
        );
    }
    ensure!(
        (0.0..100.0).contains(&low_pct) && low_pct < high_pct && high_pct <= 100.0,
        InvalidArgument,
        "invalid percentiles {}..{}",
        low_pct,
        high_pct
    );
    let channels: Vec<Vec<u8>> = band_triplet
        .iter()
        .map(|&b| stretch_band(img.band(b), low_pct, high_pct))
        .collect();
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.reserve(img.plane_len() * 3);
    for i in 0..img.plane_len() {
        out.extend_from_slice(&[channels[0][i], channels[1][i], channels[2][i]]);
    }
    Ok(out)
}

pub fn export_rgb_preview(
    img: &MultibandImage,
    band_triplet: [usize; 3],
    low_pct: f64,
    high_pct: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = render_rgb_preview(img, band_triplet, low_pct, high_pct)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Full,
    Residual,
}

/// One training pair: stacked network input and its regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: MultibandImage,
    pub target: MultibandImage,
    pub target_kind: TargetKind,
}

impl TrainingSample {
    pub fn new(input: MultibandImage, target: MultibandImage, target_kind: TargetKind) -> Result<Self> {
        ensure!(
            input.dims() == target.dims(),
            ShapeMismatch,
            "input {:?} vs target {:?}",
            input.dims(),
            target.dims()
        );
        Ok(TrainingSample {
            input,
            target,
            target_kind,
        })
    }

    /// Re-expresses a full-reference sample as a residual one by subtracting the
    /// upsampled MS channels found at `ms_offset` in the input stack.
    pub fn into_residual(self, ms_offset: usize) -> Result<Self> {
        if self.target_kind == TargetKind::Residual {
            return Ok(self);
        }
        let ms = self.input.band_range(ms_offset, self.target.bands())?;
        let target = self.target.sub(&ms)?;
        Ok(TrainingSample {
            input: self.input,
            target,
            target_kind: TargetKind::Residual,
        })
    }
}

/// Top-left corners of `count` tiles drawn uniformly with replacement.
pub fn tile_positions(
    width: usize,
    height: usize,
    tile_size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    ensure!(tile_size > 0, InvalidArgument, "tile size must be positive");
    ensure!(
        tile_size <= width && tile_size <= height,
        InvalidArgument,
        "tile size {} larger than image {}x{}",
        tile_size,
        width,
        height
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            (
                rng.random_range(0..=width - tile_size),
                rng.random_range(0..=height - tile_size),
            )
        })
        .collect())
}

/// Cuts `count` aligned tiles out of an input stack and a target image.
pub fn extract_tiles_from(
    input: &MultibandImage,
    target: &MultibandImage,
    target_kind: TargetKind,
    tile_size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    ensure!(
        input.dims() == target.dims(),
        ShapeMismatch,
        "input {:?} and target {:?} are not aligned",
        input.dims(),
        target.dims()
    );
    let positions = tile_positions(input.width(), input.height(), tile_size, count, seed)?;
    positions
        .into_iter()
        .map(|(x, y)| {
            TrainingSample::new(
                input.crop(x, y, tile_size, tile_size)?,
                target.crop(x, y, tile_size, tile_size)?,
                target_kind,
            )
        })
        .collect()
}

/// Extracts training tiles with input stack `(PAN, upsampled MS)` and the
/// reference MS as target. All three images live on the PAN grid.
pub fn extract_tiles(
    ms_lr: &MultibandImage,
    pan: &MultibandImage,
    reference: &MultibandImage,
    tile_size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    ensure!(pan.bands() == 1, InvalidArgument, "PAN must have one band");
    let input = MultibandImage::stack(&[pan, ms_lr])?;
    extract_tiles_from(&input, reference, TargetKind::Full, tile_size, count, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn ramp(w: usize, h: usize, b: usize) -> MultibandImage {
        let data = (0..w * h * b).map(|i| i as f32 * 0.5).collect();
        MultibandImage::from_data(w, h, b, 11, data).unwrap()
    }

    #[test]
    fn tile_file_size_matches_format_arithmetic() {
        let img = MultibandImage::zeros(33, 33, 4, 11);
        let bytes = img.to_bytes().unwrap();
        assert_eq!(bytes.len() - MBIR_HEADER_LEN, 17_424);
        let back = MultibandImage::from_bytes(&bytes).unwrap();
        assert_eq!(back.bands(), 4);
        assert_eq!(back.dims(), (33, 33));
    }

    #[test]
    fn zero_image_payload_is_zero_bytes() {
        let bytes = MultibandImage::zeros(4, 4, 1, 11).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"MBIR");
        assert_eq!(bytes.len(), MBIR_HEADER_LEN + 64);
        assert!(bytes[MBIR_HEADER_LEN..].iter().all(|&b| b == 0));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = MultibandImage::zeros(10, 10, 1, 11).to_bytes().unwrap();
        // rewrite the header to claim 4 bands; the payload only holds 100 values
        bytes[14..18].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(
            MultibandImage::from_bytes(&bytes),
            Err(Error::Truncated { expected: 1620, found: 420 })
        ));
    }

    #[test]
    fn bad_magic_and_overflow_are_distinct() {
        let mut bytes = MultibandImage::zeros(2, 2, 1, 11).to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(MultibandImage::from_bytes(&bytes), Err(Error::BadMagic { .. })));

        let mut bytes = MultibandImage::zeros(2, 2, 1, 11).to_bytes().unwrap();
        for o in [6, 10, 14] {
            bytes[o..o + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(
            MultibandImage::from_bytes(&bytes),
            Err(Error::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn nan_refused() {
        let mut img = MultibandImage::zeros(2, 2, 1, 11);
        img.data_mut()[3] = f32::NAN;
        assert!(matches!(img.to_bytes(), Err(Error::InvalidImage(_))));
        assert!(MultibandImage::from_data(1, 1, 1, 11, vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mbir");
        let img = ramp(7, 5, 3);
        write_raster(&img, &p).unwrap();
        assert_eq!(read_raster(&p).unwrap(), img);
        assert!(matches!(read_raster(dir.path().join("missing.mbir")), Err(Error::Io { .. })));
    }

    #[test]
    fn constant_band_previews_as_mid_gray() {
        let out = stretch_band(&[42.0; 16], 2.0, 98.0);
        assert!(out.iter().all(|&v| v == 128));
    }

    #[test]
    fn full_range_stretch_is_identity() {
        let values: Vec<f32> = (0..=255).map(|v| v as f32).collect();
        let out = stretch_band(&values, 0.0, 100.0);
        assert!(out.iter().enumerate().all(|(i, &v)| v as usize == i));
    }

    #[test]
    fn high_percentile_pixel_saturates() {
        // ten values, 80th percentile by nearest rank is the 8th smallest (= 17)
        let values = [3.0, 1.0, 9.0, 12.0, 5.0, 17.0, 25.0, 11.0, 30.0, 2.0];
        let mut sorted = values.to_vec();
        sorted.sort_by(f32::total_cmp);
        assert_eq!(nearest_rank_percentile(&sorted, 80.0), 17.0);
        assert_eq!(nearest_rank_percentile(&sorted, 10.0), 1.0);
        let out = stretch_band(&values, 10.0, 80.0);
        assert_eq!(out[5], 255);
        assert_eq!(out[1], 0);
        assert_eq!(out[6], 255);
        // 5 -> (5 - 1) / 16 * 255
        assert_eq!(out[4], 64);
    }

    #[test]
    fn preview_rejects_bad_arguments() {
        let img = ramp(4, 4, 3);
        assert!(render_rgb_preview(&img, [0, 1, 3], 2.0, 98.0).is_err());
        assert!(render_rgb_preview(&img, [0, 1, 2], 50.0, 50.0).is_err());
        assert!(render_rgb_preview(&img, [0, 1, 2], 2.0, 101.0).is_err());
        let ppm = render_rgb_preview(&img, [2, 1, 0], 2.0, 98.0).unwrap();
        assert!(ppm.starts_with(b"P6\n4 4\n255\n"));
        assert_eq!(ppm.len(), 11 + 48);
    }

    #[test]
    fn tiles_are_exact_crops_and_reproducible() {
        let ms = ramp(40, 36, 4);
        let pan = ramp(40, 36, 1).map(|v| v + 1000.0);
        let reference = ms.map(|v| v * 2.0);
        let tiles = extract_tiles(&ms, &pan, &reference, 9, 25, 3).unwrap();
        let positions = tile_positions(40, 36, 9, 25, 3).unwrap();
        assert_eq!(tiles.len(), 25);
        for (t, &(x0, y0)) in tiles.iter().zip(&positions) {
            assert!(x0 + 9 <= 40 && y0 + 9 <= 36);
            assert_eq!(t.input.bands(), 5);
            for y in 0..9 {
                for x in 0..9 {
                    assert_eq!(t.input.get(0, x, y), pan.get(0, x0 + x, y0 + y));
                    for b in 0..4 {
                        assert_eq!(t.input.get(b + 1, x, y), ms.get(b, x0 + x, y0 + y));
                        assert_eq!(t.target.get(b, x, y), reference.get(b, x0 + x, y0 + y));
                    }
                }
            }
        }
        assert_eq!(tiles, extract_tiles(&ms, &pan, &reference, 9, 25, 3).unwrap());
    }

    #[test]
    fn tile_equal_to_image_is_whole_image() {
        let ms = ramp(8, 8, 2);
        let pan = ramp(8, 8, 1);
        let t = extract_tiles(&ms, &pan, &ms, 8, 1, 0).unwrap();
        assert_eq!(t[0].target, ms);
        assert!(extract_tiles(&ms, &pan, &ms, 9, 1, 0).is_err());
    }

    #[test]
    fn residual_conversion_subtracts_ms_channels() {
        let ms = ramp(6, 6, 2);
        let pan = ramp(6, 6, 1);
        let reference = ms.map(|v| v + 3.0);
        let t = extract_tiles(&ms, &pan, &reference, 6, 1, 0).unwrap().remove(0);
        let r = t.into_residual(1).unwrap();
        assert_eq!(r.target_kind, TargetKind::Residual);
        assert!(r.target.data().iter().all(|&v| v == 3.0));
    }

    proptest! {
        #[test]
        fn serialization_round_trip(w in 1usize..9, h in 1usize..9, b in 1usize..4, bits in 1u16..16,
                                    seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..w * h * b).map(|_| rng.random_range(-1e6f32..1e6)).collect();
            let img = MultibandImage::from_data(w, h, b, bits, data).unwrap();
            let back = MultibandImage::from_bytes(&img.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back, img);
        }

        #[test]
        fn stretch_is_monotone(values in proptest::collection::vec(-100f32..100.0, 2..64),
                               lo in 0f64..50.0, span in 1f64..50.0) {
            let out = stretch_band(&values, lo, lo + span);
            for i in 0..values.len() {
                for j in 0..values.len() {
                    if values[i] < values[j] {
                        prop_assert!(out[i] <= out[j]);
                    }
                }
            }
        }
    }
}
