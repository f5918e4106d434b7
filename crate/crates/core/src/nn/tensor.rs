use crate::error::{ensure, Result};
use crate::raster::MultibandImage;

/// Dense NCHW tensor of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(
            data.len() == n * c * h * w,
            ShapeMismatch,
            "{} values for shape {}x{}x{}x{}",
            data.len(),
            n,
            c,
            h,
            w
        );
        Ok(Tensor4 { n, c, h, w, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let s = self.sample_len();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f32] {
        let s = self.sample_len();
        &mut self.data[i * s..(i + 1) * s]
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.idx(n, c, y, x)]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Removes `margin` pixels from every spatial side.
    pub fn crop_center(&self, margin: usize) -> Result<Tensor4> {
        ensure!(
            2 * margin < self.h && 2 * margin < self.w,
            ShapeMismatch,
            "margin {} too large for {}x{}",
            margin,
            self.h,
            self.w
        );
        let (h, w) = (self.h - 2 * margin, self.w - 2 * margin);
        let mut out = Tensor4::zeros(self.n, self.c, h, w);
        for n in 0..self.n {
            for c in 0..self.c {
                for y in 0..h {
                    let src = self.idx(n, c, y + margin, margin);
                    let dst = out.idx(n, c, y, 0);
                    out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor4::crop_center`] for gradients: zero-pads by `margin`.
    pub fn pad_zeros(&self, margin: usize) -> Tensor4 {
        let (h, w) = (self.h + 2 * margin, self.w + 2 * margin);
        let mut out = Tensor4::zeros(self.n, self.c, h, w);
        for n in 0..self.n {
            for c in 0..self.c {
                for y in 0..self.h {
                    let src = self.idx(n, c, y, 0);
                    let dst = out.idx(n, c, y + margin, margin);
                    out.data[dst..dst + self.w].copy_from_slice(&self.data[src..src + self.w]);
                }
            }
        }
        out
    }

    /// Stacks single-sample images into a batch.
    pub fn from_images(images: &[&MultibandImage]) -> Result<Tensor4> {
        ensure!(!images.is_empty(), InvalidArgument, "empty batch");
        let (w, h) = images[0].dims();
        let c = images[0].bands();
        let mut data = Vec::with_capacity(images.len() * c * w * h);
        for img in images {
            ensure!(
                img.dims() == (w, h) && img.bands() == c,
                ShapeMismatch,
                "batch images differ in shape"
            );
            data.extend_from_slice(img.data());
        }
        Tensor4::from_vec(images.len(), c, h, w, data)
    }

    pub fn from_image(img: &MultibandImage) -> Tensor4 {
        Tensor4 {
            n: 1,
            c: img.bands(),
            h: img.height(),
            w: img.width(),
            data: img.data().to_vec(),
        }
    }

    /// Sample `i` as a multiband image.
    pub fn to_image(&self, i: usize, bit_depth: u16) -> Result<MultibandImage> {
        MultibandImage::from_data(self.w, self.h, self.c, bit_depth, self.sample(i).to_vec())
    }
}
