//! Recipe-driven experiment runs: pre-training, fine-tuning, baselines,
//! two-regime evaluation, previews and per-phase timing.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::world::{gihs_pansharpen, synth_scene, Scene, WorldModel};
use crate::adapt::{finetune, make_training_set, pansharpen, FineTuneConfig};
use crate::config::KeyValues;
use crate::dsp::{interp23, wald_degrade, SensorProfile};
use crate::error::{ensure, Error, Result};
use crate::nn::{LossKind, NetworkParams, NetworkSpec};
use crate::optim::{save_checkpoint, train, Dataset, History, TrainConfig, DEFAULT_MOMENTUM};
use crate::quality::{evaluate_full, evaluate_reduced, report_table, QualityReport};
use crate::raster::{export_rgb_preview, write_raster, MultibandImage};

/// Desk-scale per-layer rates for the three-layer nets (pixel-mean losses on
/// normalized data need far larger steps than the full-scale defaults).
pub const DESK_RATES: [f32; 3] = [0.2, 0.2, 0.02];

/// Per-phase wall-clock log; a deterministic timer records zeros.
#[derive(Debug, Clone, Default)]
pub struct Timer {
    deterministic: bool,
    rows: Vec<(String, f64)>,
}

impl Timer {
    pub fn new(deterministic: bool) -> Self {
        Timer {
            deterministic,
            rows: Vec::new(),
        }
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        let secs = if self.deterministic {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        };
        self.rows.push((phase.to_string(), secs));
        Ok(out)
    }

    pub fn rows(&self) -> &[(String, f64)] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase,seconds\n");
        for (p, t) in &self.rows {
            let _ = writeln!(s, "{},{:.6}", p, t);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Target drawn from the training world.
    Favourable,
    /// Target from a world with other spectra and layout statistics.
    Typical,
    /// Target from a world that also has another sensor MTF.
    Challenging,
}

impl std::str::FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "favourable" => Ok(Condition::Favourable),
            "typical" => Ok(Condition::Typical),
            "challenging" => Ok(Condition::Challenging),
            other => Err(Error::Config(format!(
                "unknown condition {:?} (favourable, typical, challenging)",
                other
            ))),
        }
    }
}

impl Condition {
    fn default_target_world(self) -> &'static str {
        match self {
            Condition::Favourable => "a",
            Condition::Typical => "b",
            Condition::Challenging => "c",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub name: String,
    pub condition: Condition,
    pub seed: u64,
    pub sensor: String,
    pub train_world: String,
    pub target_world: String,
    /// Number and PAN size of the pre-training scenes.
    pub train_scenes: usize,
    pub train_size: usize,
    pub target_size: usize,
    pub tiles: usize,
    pub val_tiles: usize,
    pub tile: usize,
    pub iterations: usize,
    pub batch: usize,
    pub loss: LossKind,
    pub residual: bool,
    pub augment: bool,
    pub rates: Option<Vec<f32>>,
    pub momentum: f32,
    pub validate_every: usize,
    pub finetune_iters: usize,
    pub ft_batch: usize,
    pub max_tiles: usize,
    pub ft_rates: Option<Vec<f32>>,
    pub preview_bands: [usize; 3],
    /// Loss-study variants, e.g. `l2`, `l1`, `l1_rl`, `sam_rl`.
    pub variants: Vec<String>,
}

impl Recipe {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let known = [
            "name", "condition", "seed", "sensor", "train_world", "target_world", "train_scenes", "train_size",
            "target_size", "tiles", "val_tiles", "tile", "iterations", "batch", "loss", "residual", "augment",
            "rates", "momentum", "validate_every", "finetune_iters", "ft_batch", "max_tiles", "ft_rates",
            "preview_bands", "variants",
        ];
        if let Some(k) = kv.keys().find(|k| !known.contains(k)) {
            return Err(Error::Config(format!("unknown recipe key {:?}", k)));
        }
        let condition: Condition = kv.get_or("condition", Condition::Favourable)?;
        let sensor = kv.get_str("sensor").unwrap_or("ge1").to_string();
        let bands = SensorProfile::preset(&sensor)?.bands;
        let preview: Vec<usize> = kv
            .get_list("preview_bands")?
            .unwrap_or_else(|| if bands == 8 { vec![4, 2, 1] } else { vec![2, 1, 0] });
        ensure!(preview.len() == 3, Config, "preview_bands needs three entries");
        let recipe = Recipe {
            name: kv.get_str("name").unwrap_or("experiment").to_string(),
            condition,
            seed: kv.get_or("seed", 1)?,
            sensor,
            train_world: kv.get_str("train_world").unwrap_or("a").to_string(),
            target_world: kv
                .get_str("target_world")
                .unwrap_or(condition.default_target_world())
                .to_string(),
            train_scenes: kv.get_or("train_scenes", 2)?,
            train_size: kv.get_or("train_size", 512)?,
            target_size: kv.get_or("target_size", 512)?,
            tiles: kv.get_or("tiles", 2000)?,
            val_tiles: kv.get_or("val_tiles", 200)?,
            tile: kv.get_or("tile", 33)?,
            iterations: kv.get_or("iterations", 400)?,
            batch: kv.get_or("batch", 32)?,
            loss: kv.get_or("loss", LossKind::L1)?,
            residual: kv.get_or("residual", true)?,
            augment: kv.get_or("augment", false)?,
            rates: Some(kv.get_list("rates")?.unwrap_or_else(|| DESK_RATES.to_vec())),
            momentum: kv.get_or("momentum", DEFAULT_MOMENTUM)?,
            validate_every: kv.get_or("validate_every", 50)?,
            finetune_iters: kv.get_or("finetune_iters", 50)?,
            ft_batch: kv.get_or("ft_batch", 128)?,
            max_tiles: kv.get_or("max_tiles", 4096)?,
            ft_rates: kv.get_list("ft_rates")?,
            preview_bands: [preview[0], preview[1], preview[2]],
            variants: kv
                .get_list("variants")?
                .unwrap_or_else(|| vec!["l2".to_string(), "l1".to_string(), "l1_rl".to_string()]),
        };
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    /// Built-in recipes named after their condition.
    pub fn preset(name: &str) -> Result<Self> {
        let mut kv = KeyValues::default();
        kv.insert("name", name);
        kv.insert("condition", name);
        Self::from_key_values(&kv)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.train_scenes >= 1, Config, "train_scenes must be at least 1");
        ensure!(self.tiles >= 1 && self.val_tiles >= 1, Config, "tile counts must be positive");
        ensure!(self.tile % 2 == 1, Config, "tile size should be odd, got {}", self.tile);
        ensure!(self.batch >= 1 && self.ft_batch >= 1, Config, "batch sizes must be positive");
        Ok(())
    }

    pub fn spec(&self, residual: bool) -> Result<NetworkSpec> {
        let mut spec = NetworkSpec::table_one(&self.sensor, self.augment, residual)?;
        spec.value_scale = crate::nn::network::full_scale(SensorProfile::preset(&self.sensor)?.bit_depth);
        Ok(spec)
    }

    fn world(&self, name: &str) -> Result<WorldModel> {
        WorldModel::preset(name, &self.sensor)
    }

    pub fn train_config(&self, spec: &NetworkSpec, loss: LossKind, deterministic: bool) -> TrainConfig {
        let mut cfg = TrainConfig::pretraining(spec, loss, self.iterations);
        cfg.batch_size = self.batch;
        cfg.rates = self.rates.clone();
        cfg.momentum = self.momentum;
        cfg.validate_every = self.validate_every;
        cfg.seed = self.seed;
        cfg.deterministic = deterministic;
        cfg
    }

    pub fn finetune_config(&self, deterministic: bool) -> FineTuneConfig {
        FineTuneConfig {
            iterations: self.finetune_iters,
            batch_size: self.ft_batch,
            max_tiles: self.max_tiles,
            tile_size: self.tile,
            loss: self.loss,
            momentum: self.momentum,
            rates: self.ft_rates.clone().or_else(|| self.rates.clone()),
            seed: self.seed.wrapping_add(77),
            deterministic,
            ..FineTuneConfig::default()
        }
    }
}

/// Seeds for scenes: pre-training scenes, validation scene and target are disjoint.
fn scene_seed(recipe: &Recipe, role: u64, index: u64) -> u64 {
    recipe.seed.wrapping_mul(1_000_003).wrapping_add(role * 1000 + index)
}

/// Pre-training and validation corpora cut from Wald-degraded training-world scenes.
pub fn build_corpus(recipe: &Recipe, spec: &NetworkSpec) -> Result<(Dataset, Dataset)> {
    let world = recipe.world(&recipe.train_world)?;
    let mut parts = Vec::with_capacity(recipe.train_scenes);
    for i in 0..recipe.train_scenes {
        let scene = synth_scene(scene_seed(recipe, 1, i as u64), recipe.train_size, &world)?;
        let share = recipe.tiles / recipe.train_scenes + usize::from(i < recipe.tiles % recipe.train_scenes);
        parts.push(make_training_set(
            &scene.ms,
            &scene.pan,
            &world.profile,
            spec,
            recipe.tile,
            share,
            scene_seed(recipe, 2, i as u64),
        )?);
    }
    let val_scene = synth_scene(scene_seed(recipe, 3, 0), recipe.train_size, &world)?;
    let val = make_training_set(
        &val_scene.ms,
        &val_scene.pan,
        &world.profile,
        spec,
        recipe.tile,
        recipe.val_tiles,
        scene_seed(recipe, 4, 0),
    )?;
    Ok((Dataset::concat(&parts)?, val))
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub spec: NetworkSpec,
    pub params: NetworkParams,
    pub history: History,
}

pub fn pretrain(recipe: &Recipe, timer: &mut Timer, deterministic: bool) -> Result<Pretrained> {
    let spec = recipe.spec(recipe.residual)?;
    let (data, val) = timer.time("make_dataset", || build_corpus(recipe, &spec))?;
    let cfg = recipe.train_config(&spec, recipe.loss, deterministic);
    let out = timer.time("pretrain", || train(&data, Some(&val), &spec, &cfg))?;
    Ok(Pretrained {
        spec,
        params: out.params,
        history: out.history,
    })
}

pub fn target_scene(recipe: &Recipe) -> Result<(Scene, WorldModel)> {
    let world = recipe.world(&recipe.target_world)?;
    Ok((synth_scene(scene_seed(recipe, 5, 0), recipe.target_size, &world)?, world))
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub name: String,
    /// Full-reference scores of the reduced-resolution product against the original MS.
    pub reduced: QualityReport,
    /// No-reference scores of the full-resolution product.
    pub full: QualityReport,
    /// Full-reference scores of the full-resolution product against the synthetic truth.
    pub truth: QualityReport,
    pub fused: MultibandImage,
}

/// Runs one fusion method in both regimes.
pub fn assess<F>(name: &str, scene: &Scene, profile: &SensorProfile, fuse: F) -> Result<MethodResult>
where
    F: Fn(&MultibandImage, &MultibandImage) -> Result<MultibandImage>,
{
    let t = wald_degrade(&scene.ms, &scene.pan, profile)?;
    let fused_lr = fuse(&t.ms_lr, &t.pan_lr)?;
    let reduced = evaluate_reduced(&fused_lr, &t.reference, profile.ratio)?;
    let fused = fuse(&scene.ms, &scene.pan)?;
    let full = evaluate_full(&fused, &scene.ms, &scene.pan, profile)?;
    let truth = evaluate_reduced(&fused, &scene.gt, profile.ratio)?;
    Ok(MethodResult {
        name: name.to_string(),
        reduced,
        full,
        truth,
        fused,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub methods: Vec<MethodResult>,
    pub pretrain_history: History,
    pub finetune_history: History,
    pub timer: Timer,
}

impl ExperimentOutcome {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.name == name)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pre-train, fine-tune on the target, fuse with every method, score, and
/// write `report_*.csv`, `history_*.csv`, `preview_*.ppm`, `timing.csv` under `out_dir`.
pub fn run_experiment(recipe: &Recipe, out_dir: Option<&Path>, deterministic: bool) -> Result<ExperimentOutcome> {
    let mut timer = Timer::new(deterministic);
    let pre = pretrain(recipe, &mut timer, deterministic)?;
    let (scene, world) = timer.time("synth_target", || target_scene(recipe))?;
    let profile = &world.profile;
    let ft = timer.time("finetune", || {
        finetune(
            &pre.params,
            &pre.spec,
            &scene.ms,
            &scene.pan,
            profile,
            &recipe.finetune_config(deterministic),
        )
    })?;
    let ratio = profile.ratio;
    let mut methods = Vec::new();
    methods.push(timer.time("exp", || assess("EXP", &scene, profile, |ms, _| interp23(ms, ratio)))?);
    methods.push(timer.time("gihs", || {
        assess("GIHS", &scene, profile, |ms, pan| gihs_pansharpen(ms, pan, ratio))
    })?);
    methods.push(timer.time("cnn", || {
        assess("CNN", &scene, profile, |ms, pan| pansharpen(&pre.params, &pre.spec, ms, pan, profile))
    })?);
    methods.push(timer.time("cnn_ft", || {
        assess("CNN-FT", &scene, profile, |ms, pan| pansharpen(&ft.params, &pre.spec, ms, pan, profile))
    })?);

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let table = |pick: fn(&MethodResult) -> QualityReport| {
            report_table(&methods.iter().map(|m| (m.name.clone(), pick(m))).collect::<Vec<_>>())
        };
        write_text(&dir.join("report_reduced.csv"), &table(|m| m.reduced))?;
        write_text(&dir.join("report_full.csv"), &table(|m| m.full))?;
        write_text(&dir.join("report_truth.csv"), &table(|m| m.truth))?;
        write_text(&dir.join("history_pretrain.csv"), &pre.history.to_csv())?;
        write_text(&dir.join("history_finetune.csv"), &ft.history.to_csv())?;
        save_checkpoint(&pre.params, &pre.spec, dir.join("pretrained.pnnw"))?;
        save_checkpoint(&ft.params, &pre.spec, dir.join("finetuned.pnnw"))?;
        write_raster(&scene.ms, dir.join("target_ms.mbir"))?;
        write_raster(&scene.pan, dir.join("target_pan.mbir"))?;
        write_raster(&scene.gt, dir.join("target_gt.mbir"))?;
        let b = recipe.preview_bands;
        export_rgb_preview(&scene.gt, b, 1.0, 99.0, dir.join("preview_truth.ppm"))?;
        export_rgb_preview(&scene.pan.band_image(0), [0, 0, 0], 1.0, 99.0, dir.join("preview_pan.ppm"))?;
        for m in &methods {
            let name = format!("preview_{}.ppm", m.name.to_lowercase().replace('-', "_"));
            export_rgb_preview(&m.fused, b, 1.0, 99.0, dir.join(name))?;
        }
        write_text(&dir.join("timing.csv"), &timer.to_csv())?;
    }
    Ok(ExperimentOutcome {
        methods,
        pretrain_history: pre.history,
        finetune_history: ft.history,
        timer,
    })
}

fn parse_variant(v: &str) -> Result<(LossKind, bool)> {
    let (loss, residual) = match v.strip_suffix("_rl") {
        Some(base) => (base, true),
        None => (v, false),
    };
    Ok((loss.parse()?, residual))
}

#[derive(Debug, Clone)]
pub struct StudyRun {
    pub variant: String,
    pub history: History,
}

/// Trains the same architecture under each recipe variant on one shared corpus
/// and writes `history_<variant>.csv` plus a `loss_study.csv` summary.
pub fn loss_study(recipe: &Recipe, out_dir: Option<&Path>, deterministic: bool) -> Result<Vec<StudyRun>> {
    let plain = recipe.spec(false)?;
    let (data, val) = build_corpus(recipe, &plain)?;
    let mut runs = Vec::new();
    for v in &recipe.variants {
        let (loss, residual) = parse_variant(v)?;
        let spec = recipe.spec(residual)?;
        let (d, vd) = if residual {
            let off = spec.layout.ms_offset();
            (data.clone().into_residual(off)?, val.clone().into_residual(off)?)
        } else {
            (data.clone(), val.clone())
        };
        let cfg = recipe.train_config(&spec, loss, deterministic);
        let out = train(&d, Some(&vd), &spec, &cfg)?;
        runs.push(StudyRun {
            variant: v.clone(),
            history: out.history,
        });
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut summary = String::from("variant,iterations,seconds,final_loss,val_mse,val_mae\n");
        for r in &runs {
            write_text(&dir.join(format!("history_{}.csv", r.variant)), &r.history.to_csv())?;
            let last = r.history.rows.last();
            let (mse, mae) = r.history.last_validation().unwrap_or((f64::NAN, f64::NAN));
            let _ = writeln!(
                summary,
                "{},{},{},{},{},{}",
                r.variant,
                last.map_or(0, |l| l.iteration),
                last.map_or(0.0, |l| l.seconds),
                last.map_or(f64::NAN, |l| l.loss),
                mse,
                mae
            );
        }
        write_text(&dir.join("loss_study.csv"), &summary)?;
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_recipe() -> Recipe {
        let mut kv = KeyValues::default();
        for (k, v) in [
            ("condition", "typical"),
            ("sensor", "ik"),
            ("train_scenes", "1"),
            ("train_size", "192"),
            ("target_size", "192"),
            ("tiles", "12"),
            ("val_tiles", "4"),
            ("tile", "17"),
            ("iterations", "3"),
            ("batch", "4"),
            ("validate_every", "2"),
            ("finetune_iters", "2"),
            ("ft_batch", "4"),
            ("max_tiles", "8"),
            ("rates", "0.001,0.001,0.0001"),
        ] {
            kv.insert(k, v);
        }
        Recipe::from_key_values(&kv).unwrap()
    }

    #[test]
    fn recipe_defaults_and_conditions() {
        let r = Recipe::preset("challenging").unwrap();
        assert_eq!(r.target_world, "c");
        assert_eq!(r.finetune_iters, 50);
        assert_eq!(Recipe::preset("favourable").unwrap().target_world, "a");
        let mut kv = KeyValues::default();
        kv.insert("bogus", 1);
        assert!(Recipe::from_key_values(&kv).is_err());
    }

    #[test]
    fn variant_names() {
        assert_eq!(parse_variant("l1_rl").unwrap(), (LossKind::L1, true));
        assert_eq!(parse_variant("l2").unwrap(), (LossKind::L2, false));
        assert!(parse_variant("huber").is_err());
    }

    #[test]
    fn experiment_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&small_recipe(), Some(dir.path()), true).unwrap();
        assert_eq!(out.methods.len(), 4);
        for f in ["report_reduced.csv", "report_full.csv", "history_pretrain.csv", "timing.csv", "preview_cnn_ft.ppm"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let timing = std::fs::read_to_string(dir.path().join("timing.csv")).unwrap();
        assert!(timing.contains("finetune,0.000000"));
    }

    #[test]
    fn loss_study_histories() {
        let dir = tempfile::tempdir().unwrap();
        let runs = loss_study(&small_recipe(), Some(dir.path()), false).unwrap();
        assert_eq!(runs.len(), 3);
        for r in &runs {
            assert!(r.history.rows.windows(2).all(|w| w[0].seconds <= w[1].seconds));
            assert!(dir.path().join(format!("history_{}.csv", r.variant)).exists());
        }
    }
}
