//! Synthetic scenes with a known high-resolution ground truth.
//!
//! A world model fixes the spectral behaviour (material spectra, PAN response,
//! MTF gains); a scene seed fixes the spatial layout. Latent material
//! abundances are built at PAN resolution from Voronoi regions, Gaussian blobs
//! and fine texture; the ground-truth MS is a linear mix of the abundances and
//! the emitted MS is that ground truth degraded by the sensor MTF.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dsp::{degrade_ms, SensorProfile};
use crate::error::{ensure, Error, Result};
use crate::raster::MultibandImage;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub name: String,
    pub profile: SensorProfile,
    pub materials: usize,
    /// `bands x materials`, row-major.
    pub spectra: Vec<f64>,
    pub pan_response: Vec<f64>,
    pub regions: usize,
    pub blobs: usize,
    pub texture: f64,
    /// Digital numbers per unit radiance, and dark offset.
    pub gain: f64,
    pub offset: f64,
}

impl WorldModel {
    /// Random spectral family drawn from `family_seed`.
    pub fn family(name: &str, family_seed: u64, profile: SensorProfile) -> Result<Self> {
        profile.validate()?;
        let materials = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(family_seed);
        let spectra = (0..profile.bands * materials).map(|_| rng.random_range(0.05..1.0)).collect();
        let pan_response = (0..materials).map(|_| rng.random_range(0.2..1.0)).collect();
        Ok(WorldModel {
            name: name.to_string(),
            profile,
            materials,
            spectra,
            pan_response,
            regions: 160,
            blobs: 12,
            texture: 0.08,
            gain: 900.0,
            offset: 60.0,
        })
    }

    /// Built-in worlds: `a` and `b` share a sensor but differ in spectra and
    /// texture; `c` also changes the sensor MTF.
    pub fn preset(name: &str, sensor: &str) -> Result<Self> {
        let profile = SensorProfile::preset(sensor)?;
        match name {
            "a" => Self::family("a", 101, profile),
            "b" => {
                let mut w = Self::family("b", 202, profile)?;
                w.regions = 240;
                w.texture = 0.12;
                Ok(w)
            }
            "c" => {
                let mut p = profile;
                let n = p.bands;
                p.gnyq_ms = (0..n).map(|b| 0.22 + 0.1 * b as f64 / n.max(2) as f64).collect();
                p.gnyq_pan = 0.11;
                let mut w = Self::family("c", 303, p)?;
                w.regions = 200;
                w.blobs = 20;
                w.texture = 0.1;
                Ok(w)
            }
            other => Err(Error::Config(format!("unknown world model {:?} (a, b, c)", other))),
        }
    }

    pub fn bands(&self) -> usize {
        self.profile.bands
    }
}

/// A generated scene: MS at low resolution, PAN and the ground-truth MS at full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ms: MultibandImage,
    pub pan: MultibandImage,
    pub gt: MultibandImage,
}

fn abundances(seed: u64, size: usize, world: &WorldModel) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = world.materials;
    let s = size as f64;
    // Voronoi regions, each a random material mixture
    let sites: Vec<(f64, f64, Vec<f64>)> = (0..world.regions)
        .map(|_| {
            let x = rng.random_range(0.0..s);
            let y = rng.random_range(0.0..s);
            // one dominant material with traces of the others
            let mut mix: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..0.15)).collect();
            mix[rng.random_range(0..l)] += rng.random_range(0.6..1.0);
            (x, y, mix)
        })
        .collect();
    let blobs: Vec<(usize, f64, f64, f64, f64)> = (0..world.blobs)
        .map(|_| {
            (
                rng.random_range(0..l),
                rng.random_range(0.0..s),
                rng.random_range(0.0..s),
                rng.random_range(s / 40.0..s / 8.0),
                rng.random_range(0.2..0.8),
            )
        })
        .collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut a = vec![vec![0.0; size * size]; l];
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let nearest = sites
                .iter()
                .min_by(|p, q| {
                    let dp = (p.0 - fx).powi(2) + (p.1 - fy).powi(2);
                    let dq = (q.0 - fx).powi(2) + (q.1 - fy).powi(2);
                    dp.total_cmp(&dq)
                })
                .expect("at least one region");
            for m in 0..l {
                a[m][y * size + x] = nearest.2[m];
            }
        }
    }
    for &(m, cx, cy, sigma, amp) in &blobs {
        let r = (4.0 * sigma).ceil() as isize;
        let (x0, y0) = (cx as isize, cy as isize);
        for y in (y0 - r).max(0)..(y0 + r).min(size as isize) {
            for x in (x0 - r).max(0)..(x0 + r).min(size as isize) {
                let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                a[m][y as usize * size + x as usize] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    for plane in a.iter_mut() {
        for v in plane.iter_mut() {
            *v = (*v + world.texture * noise.sample(&mut rng)).max(0.0);
        }
    }
    a
}

/// Generates a scene whose PAN is `size` x `size`.
pub fn synth_scene(seed: u64, size: usize, world: &WorldModel) -> Result<Scene> {
    let ratio = world.profile.ratio;
    ensure!(
        size > 0 && size % ratio == 0,
        InvalidArgument,
        "scene size {} is not a multiple of the ratio {}",
        size,
        ratio
    );
    let a = abundances(seed, size, world);
    let bands = world.bands();
    let l = world.materials;
    let bits = world.profile.bit_depth;
    let mut gt = MultibandImage::zeros(size, size, bands, bits);
    let mut pan = MultibandImage::zeros(size, size, 1, bits);
    let pan_total: f64 = world.pan_response.iter().sum();
    for i in 0..size * size {
        let mut p = 0.0;
        for m in 0..l {
            p += world.pan_response[m] * a[m][i];
        }
        pan.band_mut(0)[i] = (world.offset + world.gain * p / pan_total * l as f64 * 0.5) as f32;
        for b in 0..bands {
            let mut v = 0.0;
            for m in 0..l {
                v += world.spectra[b * l + m] * a[m][i];
            }
            gt.band_mut(b)[i] = (world.offset + world.gain * v) as f32;
        }
    }
    let ms = degrade_ms(&gt, &world.profile)?;
    Ok(Scene { ms, pan, gt })
}

/// Generalized IHS: adds `PAN - mean_b(interp23(MS))` to every upsampled band.
pub fn gihs_pansharpen(ms: &MultibandImage, pan: &MultibandImage, ratio: usize) -> Result<MultibandImage> {
    ensure!(pan.bands() == 1, ShapeMismatch, "PAN has {} bands", pan.bands());
    let up = crate::dsp::interp23(ms, ratio)?;
    ensure!(
        up.dims() == pan.dims(),
        ShapeMismatch,
        "PAN {}x{} does not match upsampled MS {}x{}",
        pan.width(),
        pan.height(),
        up.width(),
        up.height()
    );
    let n = up.plane_len();
    let bands = up.bands();
    let mut detail = vec![0.0f64; n];
    for (i, d) in detail.iter_mut().enumerate() {
        let intensity = (0..bands).map(|b| up.band(b)[i] as f64).sum::<f64>() / bands as f64;
        *d = pan.band(0)[i] as f64 - intensity;
    }
    let mut out = up;
    for b in 0..bands {
        for (v, d) in out.band_mut(b).iter_mut().zip(&detail) {
            *v = (*v as f64 + d) as f32;
        }
    }
    Ok(out)
}
