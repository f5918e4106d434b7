//! Target-adaptive fine-tuning and (tiled) pansharpening.

use crate::dsp::{interp23, radiometric_indices, wald_degrade, SensorProfile};
use crate::error::{ensure, Result};
use crate::nn::{LossKind, LossSpec, NetworkParams, NetworkSpec, Padding, Tensor4};
use crate::optim::train::predict;
use crate::optim::{train_from, Dataset, History, TrainConfig, DEFAULT_MOMENTUM};
use crate::quality::{evaluate_reduced, QualityReport};
use crate::raster::{extract_tiles_from, MultibandImage, TargetKind};

pub const DEFAULT_TILE: usize = 33;

fn check_pair(ms: &MultibandImage, pan: &MultibandImage, profile: &SensorProfile) -> Result<()> {
    ensure!(pan.bands() == 1, ShapeMismatch, "PAN has {} bands", pan.bands());
    ensure!(
        ms.bands() == profile.bands,
        ShapeMismatch,
        "MS has {} bands, profile {} expects {}",
        ms.bands(),
        profile.name,
        profile.bands
    );
    ensure!(
        pan.width() == ms.width() * profile.ratio && pan.height() == ms.height() * profile.ratio,
        ShapeMismatch,
        "PAN {}x{} is not MS {}x{} times {}",
        pan.width(),
        pan.height(),
        ms.width(),
        ms.height(),
        profile.ratio
    );
    Ok(())
}

/// Network input on the PAN grid: PAN, interp23(MS), then indices if the spec asks for them.
/// Also returns the upsampled MS used by the skip connection.
pub fn input_stack(
    ms: &MultibandImage,
    pan: &MultibandImage,
    profile: &SensorProfile,
    spec: &NetworkSpec,
) -> Result<(MultibandImage, MultibandImage)> {
    check_pair(ms, pan, profile)?;
    ensure!(
        spec.layout.ms_bands == ms.bands(),
        ShapeMismatch,
        "network expects {} MS bands, image has {}",
        spec.layout.ms_bands,
        ms.bands()
    );
    let up = interp23(ms, profile.ratio)?;
    let stack = if spec.layout.index_channels > 0 {
        let idx = radiometric_indices(&up, profile)?;
        ensure!(
            idx.bands() == spec.layout.index_channels,
            ShapeMismatch,
            "profile yields {} indices, network expects {}",
            idx.bands(),
            spec.layout.index_channels
        );
        MultibandImage::stack(&[pan, &up, &idx])?
    } else {
        MultibandImage::stack(&[pan, &up])?
    };
    Ok((stack, up))
}

/// Number of distinct tile positions in a `w` x `h` image.
pub fn tile_position_count(w: usize, h: usize, tile: usize) -> usize {
    if tile > w || tile > h {
        0
    } else {
        (w - tile + 1) * (h - tile + 1)
    }
}

/// Wald-degrades a full-resolution pair and cuts training tiles whose target is
/// the original MS (as a residual when the spec is residual).
pub fn make_training_set(
    ms: &MultibandImage,
    pan: &MultibandImage,
    profile: &SensorProfile,
    spec: &NetworkSpec,
    tile: usize,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    let triplet = wald_degrade(ms, pan, profile)?;
    let (stack, _) = input_stack(&triplet.ms_lr, &triplet.pan_lr, profile, spec)?;
    let (w, h) = stack.dims();
    ensure!(
        tile_position_count(w, h, tile) > 0,
        InvalidArgument,
        "degraded target {}x{} is too small for one {}-pixel tile",
        w,
        h,
        tile
    );
    let mut samples = extract_tiles_from(&stack, &triplet.reference, TargetKind::Full, tile, count, seed)?;
    if spec.residual {
        samples = samples
            .into_iter()
            .map(|s| s.into_residual(spec.layout.ms_offset()))
            .collect::<Result<_>>()?;
    }
    Dataset::from_samples(&samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub max_tiles: usize,
    pub tile_size: usize,
    pub loss: LossKind,
    pub padding: Padding,
    pub momentum: f32,
    pub rates: Option<Vec<f32>>,
    pub seed: u64,
    pub deterministic: bool,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            iterations: 50,
            batch_size: 128,
            max_tiles: 4096,
            tile_size: DEFAULT_TILE,
            loss: LossKind::L1,
            padding: Padding::SameMirror,
            momentum: DEFAULT_MOMENTUM,
            rates: None,
            seed: 0,
            deterministic: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FineTuneOutcome {
    pub params: NetworkParams,
    pub history: History,
    pub tiles: usize,
}

/// Adapts pre-trained weights to one target: degrade it once, cut at most
/// `max_tiles` tiles, run exactly `iterations` SGD steps.
pub fn finetune(
    params: &NetworkParams,
    spec: &NetworkSpec,
    ms: &MultibandImage,
    pan: &MultibandImage,
    profile: &SensorProfile,
    config: &FineTuneConfig,
) -> Result<FineTuneOutcome> {
    params.check(spec)?;
    check_pair(ms, pan, profile)?;
    if config.iterations == 0 {
        return Ok(FineTuneOutcome {
            params: params.clone(),
            history: History::default(),
            tiles: 0,
        });
    }
    let (w, h) = (pan.width() / profile.ratio, pan.height() / profile.ratio);
    let positions = tile_position_count(w, h, config.tile_size);
    ensure!(
        positions > 0,
        InvalidArgument,
        "target too small: degraded size {}x{} cannot hold a {}-pixel tile",
        w,
        h,
        config.tile_size
    );
    let count = config.max_tiles.min(positions);
    let data = make_training_set(ms, pan, profile, spec, config.tile_size, count, config.seed)?;
    let train_cfg = TrainConfig {
        batch_size: config.batch_size,
        iterations: config.iterations,
        max_seconds: None,
        loss: LossSpec::new(config.loss, spec.receptive_radius()),
        padding: config.padding,
        momentum: config.momentum,
        rates: config.rates.clone(),
        validate_every: 0,
        seed: config.seed,
        deterministic: config.deterministic,
    };
    let out = train_from(params.clone(), &data, None, spec, &train_cfg)?;
    Ok(FineTuneOutcome {
        params: out.params,
        history: out.history,
        tiles: data.len(),
    })
}

fn fuse(stack: &MultibandImage, up: &MultibandImage, params: &NetworkParams, spec: &NetworkSpec) -> Result<MultibandImage> {
    let y = predict(params, spec, &Tensor4::from_image(stack), Padding::SameMirror)?;
    let out = y.to_image(0, up.bit_depth())?;
    if spec.residual {
        out.add(up)
    } else {
        Ok(out)
    }
}

/// Fuses a full MS/PAN pair in one pass.
pub fn pansharpen(
    params: &NetworkParams,
    spec: &NetworkSpec,
    ms: &MultibandImage,
    pan: &MultibandImage,
    profile: &SensorProfile,
) -> Result<MultibandImage> {
    params.check(spec)?;
    let (stack, up) = input_stack(ms, pan, profile, spec)?;
    fuse(&stack, &up, params, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileStats {
    pub tiles: usize,
    /// Largest network input window processed at once, in pixels.
    pub max_buffer_pixels: usize,
}

/// Tile-by-tile variant of [`pansharpen`] with bounded network working set:
/// each `tile` x `tile` core is processed with `overlap` extra context pixels
/// per side, and only the core is kept.
pub fn pansharpen_tiled(
    params: &NetworkParams,
    spec: &NetworkSpec,
    ms: &MultibandImage,
    pan: &MultibandImage,
    profile: &SensorProfile,
    tile: usize,
    overlap: usize,
) -> Result<(MultibandImage, TileStats)> {
    params.check(spec)?;
    ensure!(tile > 0, InvalidArgument, "tile size must be positive");
    ensure!(
        overlap >= spec.receptive_radius(),
        InvalidArgument,
        "overlap {} is below the receptive-field radius {}",
        overlap,
        spec.receptive_radius()
    );
    let (stack, up) = input_stack(ms, pan, profile, spec)?;
    let (w, h) = stack.dims();
    let mut out = MultibandImage::zeros(w, h, ms.bands(), up.bit_depth());
    let mut stats = TileStats {
        tiles: 0,
        max_buffer_pixels: 0,
    };
    for y0 in (0..h).step_by(tile) {
        for x0 in (0..w).step_by(tile) {
            let (cw, ch) = (tile.min(w - x0), tile.min(h - y0));
            let (ex0, ey0) = (x0.saturating_sub(overlap), y0.saturating_sub(overlap));
            let (ex1, ey1) = ((x0 + cw + overlap).min(w), (y0 + ch + overlap).min(h));
            let s = stack.crop(ex0, ey0, ex1 - ex0, ey1 - ey0)?;
            let u = up.crop(ex0, ey0, ex1 - ex0, ey1 - ey0)?;
            let fused = fuse(&s, &u, params, spec)?;
            out.paste(&fused.crop(x0 - ex0, y0 - ey0, cw, ch)?, x0, y0)?;
            stats.tiles += 1;
            stats.max_buffer_pixels = stats.max_buffer_pixels.max(s.plane_len());
        }
    }
    Ok((out, stats))
}

/// Reduced-resolution protocol: fuse the Wald-degraded pair and score it
/// against the original MS.
pub fn reduced_resolution_report(
    params: &NetworkParams,
    spec: &NetworkSpec,
    ms: &MultibandImage,
    pan: &MultibandImage,
    profile: &SensorProfile,
) -> Result<QualityReport> {
    let t = wald_degrade(ms, pan, profile)?;
    let fused = pansharpen(params, spec, &t.ms_lr, &t.pan_lr, profile)?;
    evaluate_reduced(&fused, &t.reference, profile.ratio)
}
