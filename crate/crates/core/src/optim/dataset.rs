//! In-memory training set and its on-disk form.
//!
//! On disk a dataset is a directory holding `input.mbir` and `target.mbir`,
//! each with all tiles stacked vertically, plus a `dataset.txt` header.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::error::{ensure, Error, Result};
use crate::nn::Tensor4;
use crate::raster::{read_raster, write_raster, MultibandImage, TargetKind, TrainingSample};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor4,
    pub targets: Tensor4,
    pub target_kind: TargetKind,
    pub bit_depth: u16,
}

fn kind_name(kind: TargetKind) -> &'static str {
    match kind {
        TargetKind::Full => "full",
        TargetKind::Residual => "residual",
    }
}

impl Dataset {
    pub fn from_samples(samples: &[TrainingSample]) -> Result<Self> {
        ensure!(!samples.is_empty(), InvalidArgument, "no training samples");
        let kind = samples[0].target_kind;
        ensure!(
            samples.iter().all(|s| s.target_kind == kind),
            InvalidArgument,
            "mixed full and residual targets"
        );
        let inputs: Vec<&MultibandImage> = samples.iter().map(|s| &s.input).collect();
        let targets: Vec<&MultibandImage> = samples.iter().map(|s| &s.target).collect();
        Ok(Dataset {
            inputs: Tensor4::from_images(&inputs)?,
            targets: Tensor4::from_images(&targets)?,
            target_kind: kind,
            bit_depth: samples[0].input.bit_depth(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.n
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.n == 0
    }

    pub fn tile_size(&self) -> usize {
        self.inputs.h
    }

    /// Copies the listed samples into a fresh batch pair.
    pub fn gather(&self, indices: &[usize]) -> (Tensor4, Tensor4) {
        let pick = |t: &Tensor4| {
            let mut data = Vec::with_capacity(indices.len() * t.sample_len());
            for &i in indices {
                data.extend_from_slice(t.sample(i));
            }
            Tensor4 {
                n: indices.len(),
                data,
                ..*t
            }
        };
        (pick(&self.inputs), pick(&self.targets))
    }

    /// Joins datasets of identical tile geometry and target kind.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        ensure!(!parts.is_empty(), InvalidArgument, "nothing to concatenate");
        let first = &parts[0];
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for p in parts {
            ensure!(
                p.inputs.shape()[1..] == first.inputs.shape()[1..]
                    && p.targets.shape()[1..] == first.targets.shape()[1..]
                    && p.target_kind == first.target_kind,
                ShapeMismatch,
                "datasets differ in tile geometry or target kind"
            );
            inputs.extend_from_slice(&p.inputs.data);
            targets.extend_from_slice(&p.targets.data);
        }
        let n = parts.iter().map(Dataset::len).sum();
        Ok(Dataset {
            inputs: Tensor4 {
                n,
                data: inputs,
                ..first.inputs
            },
            targets: Tensor4 {
                n,
                data: targets,
                ..first.targets
            },
            target_kind: first.target_kind,
            bit_depth: first.bit_depth,
        })
    }

    /// Turns full targets into residuals against the input channels starting at `ms_offset`.
    pub fn into_residual(mut self, ms_offset: usize) -> Result<Dataset> {
        if self.target_kind == TargetKind::Residual {
            return Ok(self);
        }
        let bands = self.targets.c;
        ensure!(
            ms_offset + bands <= self.inputs.c,
            ShapeMismatch,
            "inputs have no {} MS channels at offset {}",
            bands,
            ms_offset
        );
        let plane = self.inputs.plane();
        for n in 0..self.len() {
            let ms = &self.inputs.sample(n)[ms_offset * plane..(ms_offset + bands) * plane];
            for (t, m) in self.targets.data[n * bands * plane..(n + 1) * bands * plane].iter_mut().zip(ms) {
                *t -= m;
            }
        }
        self.target_kind = TargetKind::Residual;
        Ok(self)
    }

    /// Deterministic split into `(train, validation)` with `val_count` held-out samples.
    pub fn split(&self, val_count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        ensure!(
            val_count > 0 && val_count < self.len(),
            InvalidArgument,
            "cannot hold out {} of {} samples",
            val_count,
            self.len()
        );
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (val, train) = order.split_at(val_count);
        let build = |idx: &[usize]| {
            let (inputs, targets) = self.gather(idx);
            Dataset {
                inputs,
                targets,
                target_kind: self.target_kind,
                bit_depth: self.bit_depth,
            }
        };
        Ok((build(train), build(val)))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stack = |t: &Tensor4| {
            // NCHW with all samples stacked along H is a (C, N*H, W) planar image
            let mut img = MultibandImage::zeros(t.w, t.n * t.h, t.c, self.bit_depth);
            for n in 0..t.n {
                for c in 0..t.c {
                    let src = &t.sample(n)[c * t.plane()..(c + 1) * t.plane()];
                    img.band_mut(c)[n * t.plane()..(n + 1) * t.plane()].copy_from_slice(src);
                }
            }
            img
        };
        write_raster(&stack(&self.inputs), dir.join("input.mbir"))?;
        write_raster(&stack(&self.targets), dir.join("target.mbir"))?;
        let mut kv = KeyValues::default();
        kv.insert("tiles", self.len());
        kv.insert("tile_size", self.tile_size());
        kv.insert("target_kind", kind_name(self.target_kind));
        let path = dir.join("dataset.txt");
        std::fs::write(&path, kv.to_text()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let kv = KeyValues::load(dir.join("dataset.txt"))?;
        let tiles: usize = kv.require("tiles")?;
        let tile: usize = kv.require("tile_size")?;
        let target_kind = match kv.require_str("target_kind")? {
            "full" => TargetKind::Full,
            "residual" => TargetKind::Residual,
            other => return Err(Error::Config(format!("unknown target_kind {:?}", other))),
        };
        let unstack = |img: MultibandImage| -> Result<Tensor4> {
            ensure!(
                img.width() == tile && img.height() == tiles * tile,
                ShapeMismatch,
                "stack is {}x{}, header says {} tiles of {}",
                img.width(),
                img.height(),
                tiles,
                tile
            );
            let plane = tile * tile;
            let mut t = Tensor4::zeros(tiles, img.bands(), tile, tile);
            for n in 0..tiles {
                for c in 0..img.bands() {
                    let src = &img.band(c)[n * plane..(n + 1) * plane];
                    t.sample_mut(n)[c * plane..(c + 1) * plane].copy_from_slice(src);
                }
            }
            Ok(t)
        };
        let input_img = read_raster(dir.join("input.mbir"))?;
        let bit_depth = input_img.bit_depth();
        Ok(Dataset {
            inputs: unstack(input_img)?,
            targets: unstack(read_raster(dir.join("target.mbir"))?)?,
            target_kind,
            bit_depth,
        })
    }
}

/// Draws batches without replacement, reshuffling at each epoch boundary.
/// A remainder shorter than the batch is skipped.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        EpochSampler { order, pos: 0, rng }
    }

    pub fn next_batch(&mut self, batch: usize) -> &[usize] {
        let batch = batch.min(self.order.len());
        if self.pos + batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = &self.order[self.pos..self.pos + batch];
        self.pos += batch;
        out
    }
}
