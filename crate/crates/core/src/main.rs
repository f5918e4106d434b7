use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pansharp::adapt::{finetune, make_training_set, pansharpen, pansharpen_tiled, FineTuneConfig, DEFAULT_TILE};
use pansharp::bench::{gihs_pansharpen, loss_study, run_experiment, synth_scene, Recipe, WorldModel};
use pansharp::config::KeyValues;
use pansharp::dsp::{interp23, interp23_kernel, mtf_gaussian_kernel, wald_degrade, SensorProfile, DEFAULT_KERNEL_SIZE};
use pansharp::nn::network::full_scale;
use pansharp::nn::{LossKind, LossSpec, NetworkSpec, Padding};
use pansharp::optim::{load_checkpoint, save_checkpoint, train, Dataset, TrainConfig, DEFAULT_MOMENTUM};
use pansharp::quality::{
    evaluate_full_with, evaluate_reduced_with, report_table, QnrParams, QualityReport, CSV_HEADER, DEFAULT_BLOCK,
};
use pansharp::raster::{export_rgb_preview, read_raster, write_raster, MultibandImage, TargetKind};

/// Residual CNN pansharpening with target-adaptive fine-tuning.
#[derive(Debug, Parser)]
#[command(name = "pansharp", version)]
struct Cli {
    /// Seed for every random stream (scenes, tiles, init, batches)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bit-reproducible run: timing columns are written as zero
    #[arg(long, global = true)]
    deterministic: bool,
    /// Sensor profile file (key=value) overriding the built-in preset
    #[arg(long, global = true, value_name = "FILE")]
    profile: Option<PathBuf>,
    /// Cap on worker threads
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene (ms.mbir, pan.mbir, gt.mbir)
    Synth(SynthArgs),
    /// Cut Wald-degraded training tiles from a full-resolution pair
    MakeDataset(MakeDatasetArgs),
    /// Pre-train a network on a tile dataset
    Train(TrainArgs),
    /// Adapt a checkpoint to one target image
    Finetune(FinetuneArgs),
    /// Fuse an MS/PAN pair with a checkpoint
    Pansharpen(PansharpenArgs),
    /// Score a fused product (CSV on stdout)
    Evaluate(EvaluateArgs),
    /// Score EXP, GIHS and checkpoints on one pair in both regimes
    Compare(CompareArgs),
    /// Train one architecture under several losses and compare histories
    LossStudy(RecipeArgs),
    /// Pre-train, fine-tune, fuse and score one experimental condition
    RunExperiment(RecipeArgs),
    /// Write an 8-bit RGB preview (PPM)
    Preview(PreviewArgs),
    /// Print filter coefficients, one per line
    Kernel(KernelArgs),
    /// Print a sensor profile as key=value text
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// PAN side length in pixels (multiple of the ratio)
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// MS band count (4 or 8); picks ge1 or wv2 unless --sensor is given
    #[arg(long, default_value_t = 4)]
    bands: usize,
    #[arg(long)]
    sensor: Option<String>,
    /// World model: a, b or c
    #[arg(long, default_value = "a")]
    world: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MakeDatasetArgs {
    #[arg(long)]
    ms: PathBuf,
    #[arg(long)]
    pan: PathBuf,
    #[arg(long)]
    sensor: Option<String>,
    #[arg(long, default_value_t = 2000)]
    tiles: usize,
    #[arg(long, default_value_t = DEFAULT_TILE)]
    tile: usize,
    /// Store residual targets
    #[arg(long)]
    residual: bool,
    /// Add radiometric-index input channels
    #[arg(long)]
    augment: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PaddingArg {
    Valid,
    SameMirror,
}

impl From<PaddingArg> for Padding {
    fn from(p: PaddingArg) -> Self {
        match p {
            PaddingArg::Valid => Padding::Valid,
            PaddingArg::SameMirror => Padding::SameMirror,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Validation dataset
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, default_value = "ge1")]
    sensor: String,
    /// l2, l1, sam or sid
    #[arg(long, default_value = "l1")]
    loss: LossKind,
    #[arg(long)]
    residual: bool,
    #[arg(long)]
    augment: bool,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    /// Per-layer learning rates, comma separated
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f32>>,
    #[arg(long, default_value_t = DEFAULT_MOMENTUM)]
    momentum: f32,
    #[arg(long, value_enum, default_value = "valid")]
    padding: PaddingArg,
    #[arg(long, default_value_t = 100)]
    validate_every: usize,
    /// Wall-time budget in seconds (not allowed with --deterministic)
    #[arg(long)]
    max_seconds: Option<f64>,
    /// Training history CSV
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    target_ms: PathBuf,
    #[arg(long)]
    target_pan: PathBuf,
    #[arg(long)]
    sensor: Option<String>,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 4096)]
    max_tiles: usize,
    #[arg(long, default_value_t = DEFAULT_TILE)]
    tile: usize,
    #[arg(long, default_value = "l1")]
    loss: LossKind,
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f32>>,
    #[arg(long, default_value_t = DEFAULT_MOMENTUM)]
    momentum: f32,
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PansharpenArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    ms: PathBuf,
    #[arg(long)]
    pan: PathBuf,
    #[arg(long)]
    sensor: Option<String>,
    /// Process in tiles of this size
    #[arg(long)]
    tile: Option<usize>,
    /// Context pixels around each tile (default: receptive-field radius)
    #[arg(long)]
    overlap: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Reduced,
    Full,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    fused: PathBuf,
    /// Reference MS (reduced mode)
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    ratio: usize,
    /// Original low-resolution MS (full mode)
    #[arg(long)]
    ms: Option<PathBuf>,
    /// PAN (full mode)
    #[arg(long)]
    pan: Option<PathBuf>,
    #[arg(long)]
    sensor: Option<String>,
    /// Q block size
    #[arg(long, default_value_t = DEFAULT_BLOCK)]
    block: usize,
    /// Print only the data row
    #[arg(long)]
    no_header: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    ms: PathBuf,
    #[arg(long)]
    pan: PathBuf,
    /// Ground-truth MS at PAN resolution, if known
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Checkpoints to score alongside EXP and GIHS (repeatable)
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    sensor: Option<String>,
    /// Directory for report_*.csv
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RecipeArgs {
    /// Recipe file (key=value)
    #[arg(long)]
    recipe: Option<PathBuf>,
    /// Built-in recipe when no file is given: favourable, typical or challenging
    #[arg(long, default_value = "favourable")]
    condition: String,
    /// Override a recipe entry (repeatable), e.g. --set iterations=100
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PreviewArgs {
    #[arg(long)]
    input: PathBuf,
    /// Band triplet for R,G,B
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "2,1,0")]
    bands: Vec<usize>,
    /// Lower stretch percentile
    #[arg(long, default_value_t = 1.0)]
    low: f64,
    /// Upper stretch percentile
    #[arg(long, default_value_t = 99.0)]
    high: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelKind {
    /// Separable Gaussian MTF taps
    Mtf,
    /// 23-tap interpolation filter
    Interp,
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[arg(long, value_enum, default_value = "mtf")]
    kind: KernelKind,
    #[arg(long, default_value_t = 4)]
    ratio: usize,
    /// Gain at the Nyquist frequency of the coarse grid
    #[arg(long, default_value_t = 0.3)]
    gnyq: f64,
    #[arg(long, default_value_t = DEFAULT_KERNEL_SIZE)]
    size: usize,
    /// Write to a file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[arg(long, default_value = "ge1")]
    sensor: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Globals {
    seed: Option<u64>,
    deterministic: bool,
    profile: Option<PathBuf>,
}

impl Globals {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Profile from `--profile`, else the named preset, else one picked by band count.
    fn sensor_profile(&self, sensor: Option<&str>, bands: usize) -> anyhow::Result<SensorProfile> {
        let p = match (&self.profile, sensor) {
            (Some(path), _) => SensorProfile::load(path)?,
            (None, Some(name)) => SensorProfile::preset(name)?,
            (None, None) => SensorProfile::preset(default_sensor(bands)?)?,
        };
        if p.bands != bands {
            bail!("profile {} has {} bands, data has {}", p.name, p.bands, bands);
        }
        Ok(p)
    }
}

fn default_sensor(bands: usize) -> anyhow::Result<&'static str> {
    match bands {
        4 => Ok("ge1"),
        8 => Ok("wv2"),
        b => bail!("no sensor preset with {} bands", b),
    }
}

/// Network preset matching a profile (its own name when it is a preset).
fn network_spec(profile: &SensorProfile, augment: bool, residual: bool) -> anyhow::Result<NetworkSpec> {
    let mut spec = match NetworkSpec::table_one(&profile.name, augment, residual) {
        Ok(s) => s,
        Err(_) => NetworkSpec::table_one(default_sensor(profile.bands)?, augment, residual)?,
    };
    spec.value_scale = full_scale(profile.bit_depth);
    Ok(spec)
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn load_recipe(args: &RecipeArgs, g: &Globals) -> anyhow::Result<Recipe> {
    let mut kv = match &args.recipe {
        Some(path) => KeyValues::load(path)?,
        None => {
            let mut kv = KeyValues::default();
            kv.insert("name", &args.condition);
            kv.insert("condition", &args.condition);
            kv
        }
    };
    for o in &args.overrides {
        let Some((k, v)) = o.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {:?}", o);
        };
        kv.insert(k.trim(), v.trim());
    }
    if let Some(seed) = g.seed {
        kv.insert("seed", seed);
    }
    Ok(Recipe::from_key_values(&kv)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let g = Globals {
        seed: cli.seed,
        deterministic: cli.deterministic,
        profile: cli.profile,
    };
    match cli.command {
        Command::Synth(a) => {
            let sensor = match &a.sensor {
                Some(s) => s.clone(),
                None => default_sensor(a.bands)?.to_string(),
            };
            let mut world = WorldModel::preset(&a.world, &sensor)?;
            if g.profile.is_some() {
                world.profile = g.sensor_profile(None, world.bands())?;
            }
            if world.bands() != a.bands {
                bail!("sensor {} has {} bands, --bands is {}", sensor, world.bands(), a.bands);
            }
            let scene = synth_scene(g.seed(), a.size, &world)?;
            create_dir(&a.out)?;
            write_raster(&scene.ms, a.out.join("ms.mbir"))?;
            write_raster(&scene.pan, a.out.join("pan.mbir"))?;
            write_raster(&scene.gt, a.out.join("gt.mbir"))?;
            world.profile.save(a.out.join("profile.txt"))?;
        }
        Command::MakeDataset(a) => {
            let ms = read_raster(&a.ms)?;
            let pan = read_raster(&a.pan)?;
            let profile = g.sensor_profile(a.sensor.as_deref(), ms.bands())?;
            let spec = network_spec(&profile, a.augment, a.residual)?;
            let data = make_training_set(&ms, &pan, &profile, &spec, a.tile, a.tiles, g.seed())?;
            data.save(&a.out)?;
        }
        Command::Train(a) => {
            let mut spec = NetworkSpec::table_one(&a.sensor, a.augment, a.residual)?;
            if g.profile.is_some() {
                spec.value_scale = full_scale(g.sensor_profile(None, spec.layout.ms_bands)?.bit_depth);
            }
            let prepare = |path: &Path| -> anyhow::Result<Dataset> {
                let d = Dataset::load(path)?;
                Ok(match (d.target_kind, spec.residual) {
                    (TargetKind::Full, true) => d.into_residual(spec.layout.ms_offset())?,
                    (TargetKind::Residual, false) => {
                        bail!("{} holds residual targets; pass --residual", path.display())
                    }
                    _ => d,
                })
            };
            let data = prepare(&a.dataset)?;
            let val = a.val.as_deref().map(prepare).transpose()?;
            let cfg = TrainConfig {
                batch_size: a.batch,
                iterations: a.iters,
                max_seconds: a.max_seconds,
                loss: LossSpec::new(a.loss, spec.receptive_radius()),
                padding: a.padding.into(),
                momentum: a.momentum,
                rates: a.rates,
                validate_every: if val.is_some() { a.validate_every } else { 0 },
                seed: g.seed(),
                deterministic: g.deterministic,
            };
            let out = train(&data, val.as_ref(), &spec, &cfg)?;
            save_checkpoint(&out.params, &spec, &a.out)?;
            if let Some(h) = &a.history {
                write_text(h, &out.history.to_csv())?;
            }
        }
        Command::Finetune(a) => {
            let (params, spec) = load_checkpoint(&a.checkpoint)?;
            let ms = read_raster(&a.target_ms)?;
            let pan = read_raster(&a.target_pan)?;
            let profile = g.sensor_profile(a.sensor.as_deref(), ms.bands())?;
            let cfg = FineTuneConfig {
                iterations: a.iters,
                batch_size: a.batch,
                max_tiles: a.max_tiles,
                tile_size: a.tile,
                loss: a.loss,
                momentum: a.momentum,
                rates: a.rates,
                seed: g.seed(),
                deterministic: g.deterministic,
                ..FineTuneConfig::default()
            };
            let out = finetune(&params, &spec, &ms, &pan, &profile, &cfg)?;
            save_checkpoint(&out.params, &spec, &a.out)?;
            if let Some(h) = &a.history {
                write_text(h, &out.history.to_csv())?;
            }
        }
        Command::Pansharpen(a) => {
            let (params, spec) = load_checkpoint(&a.checkpoint)?;
            let ms = read_raster(&a.ms)?;
            let pan = read_raster(&a.pan)?;
            let profile = g.sensor_profile(a.sensor.as_deref(), ms.bands())?;
            let fused = match a.tile {
                Some(t) => {
                    let overlap = a.overlap.unwrap_or(spec.receptive_radius());
                    pansharpen_tiled(&params, &spec, &ms, &pan, &profile, t, overlap)?.0
                }
                None => {
                    if a.overlap.is_some() {
                        bail!("--overlap needs --tile");
                    }
                    pansharpen(&params, &spec, &ms, &pan, &profile)?
                }
            };
            write_raster(&fused, &a.out)?;
        }
        Command::Evaluate(a) => {
            let fused = read_raster(&a.fused)?;
            let report = match a.mode {
                Mode::Reduced => {
                    let Some(r) = &a.reference else { bail!("--mode reduced needs --ref") };
                    evaluate_reduced_with(&fused, &read_raster(r)?, a.ratio, a.block)?
                }
                Mode::Full => {
                    let (Some(ms), Some(pan)) = (&a.ms, &a.pan) else {
                        bail!("--mode full needs --ms and --pan")
                    };
                    let ms = read_raster(ms)?;
                    let profile = g.sensor_profile(a.sensor.as_deref(), ms.bands())?;
                    let params = QnrParams {
                        block: a.block,
                        ..QnrParams::default()
                    };
                    evaluate_full_with(&fused, &ms, &read_raster(pan)?, &profile, &params)?
                }
            };
            if !a.no_header {
                println!("{}", CSV_HEADER);
            }
            println!("{}", report.csv_row());
        }
        Command::Compare(a) => compare(&a, &g)?,
        Command::LossStudy(a) => {
            let recipe = load_recipe(&a, &g)?;
            let runs = loss_study(&recipe, Some(&a.out), g.deterministic)?;
            for r in runs {
                let (mse, mae) = r.history.last_validation().unwrap_or((f64::NAN, f64::NAN));
                println!("{},{:.6},{:.6}", r.variant, mse, mae);
            }
        }
        Command::RunExperiment(a) => {
            let recipe = load_recipe(&a, &g)?;
            let out = run_experiment(&recipe, Some(&a.out), g.deterministic)?;
            let rows: Vec<(String, QualityReport)> =
                out.methods.iter().map(|m| (m.name.clone(), m.reduced.merge(&m.full))).collect();
            print!("{}", report_table(&rows));
        }
        Command::Preview(a) => {
            let img = read_raster(&a.input)?;
            let bands: [usize; 3] = match a.bands.as_slice() {
                [b] => [*b; 3],
                [r, g, b] => [*r, *g, *b],
                _ => bail!("--bands takes one or three band indices"),
            };
            export_rgb_preview(&img, bands, a.low, a.high, &a.out)?;
        }
        Command::Kernel(a) => {
            let taps: Vec<f64> = match a.kind {
                KernelKind::Mtf => mtf_gaussian_kernel(a.ratio, a.gnyq, a.size)?.taps().to_vec(),
                KernelKind::Interp => interp23_kernel().to_vec(),
            };
            let text: String = taps.iter().map(|t| format!("{:e}\n", t)).collect();
            match &a.out {
                Some(p) => write_text(p, &text)?,
                None => print!("{}", text),
            }
        }
        Command::Profile(a) => {
            let p = match &g.profile {
                Some(path) => SensorProfile::load(path)?,
                None => SensorProfile::preset(&a.sensor)?,
            };
            let text = p.to_key_values().to_text();
            match &a.out {
                Some(path) => write_text(path, &text)?,
                None => print!("{}", text),
            }
        }
    }
    Ok(())
}

fn compare(a: &CompareArgs, g: &Globals) -> anyhow::Result<()> {
    let ms = read_raster(&a.ms)?;
    let pan = read_raster(&a.pan)?;
    let gt = a.gt.as_deref().map(read_raster).transpose()?;
    let profile = g.sensor_profile(a.sensor.as_deref(), ms.bands())?;
    let ratio = profile.ratio;
    let nets = a
        .checkpoint
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            load_checkpoint(p).map(|(params, spec)| (name, params, spec))
        })
        .collect::<pansharp::Result<Vec<_>>>()?;

    type Fuse<'a> = Box<dyn Fn(&MultibandImage, &MultibandImage) -> pansharp::Result<MultibandImage> + 'a>;
    let mut methods: Vec<(String, Fuse)> = vec![
        ("EXP".to_string(), Box::new(|m: &MultibandImage, _: &MultibandImage| interp23(m, ratio))),
        ("GIHS".to_string(), Box::new(|m: &MultibandImage, p: &MultibandImage| gihs_pansharpen(m, p, ratio))),
    ];
    for (name, params, spec) in &nets {
        let profile = &profile;
        methods.push((
            name.clone(),
            Box::new(move |m: &MultibandImage, p: &MultibandImage| pansharpen(params, spec, m, p, profile)),
        ));
    }

    let t = wald_degrade(&ms, &pan, &profile)?;
    let qnr = QnrParams::default();
    let (mut reduced, mut full, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    for (name, fuse) in &methods {
        reduced.push((name.clone(), evaluate_reduced_with(&fuse(&t.ms_lr, &t.pan_lr)?, &t.reference, ratio, DEFAULT_BLOCK)?));
        let fused = fuse(&ms, &pan)?;
        full.push((name.clone(), evaluate_full_with(&fused, &ms, &pan, &profile, &qnr)?));
        if let Some(gt) = &gt {
            truth.push((name.clone(), evaluate_reduced_with(&fused, gt, ratio, DEFAULT_BLOCK)?));
        }
    }
    println!("# reduced resolution");
    print!("{}", report_table(&reduced));
    println!("# full resolution");
    print!("{}", report_table(&full));
    if gt.is_some() {
        println!("# ground truth");
        print!("{}", report_table(&truth));
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_text(&dir.join("report_reduced.csv"), &report_table(&reduced))?;
        write_text(&dir.join("report_full.csv"), &report_table(&full))?;
        if gt.is_some() {
            write_text(&dir.join("report_truth.csv"), &report_table(&truth))?;
        }
    }
    Ok(())
}

/// One line, `key=value` fields, message quoted.
fn error_line(kind: &str, message: &str) -> String {
    let flat = message.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ");
    format!("error kind={} message={:?}", kind, flat)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.chain().find_map(|c| c.downcast_ref::<pansharp::Error>()).map_or("cli", |p| p.kind());
            let mut parts: Vec<String> = Vec::new();
            for c in e.chain() {
                let s = c.to_string();
                // library errors already embed their source in the message
                if !parts.last().is_some_and(|p| p.ends_with(&s)) {
                    parts.push(s);
                }
            }
            let message = parts.join(": ");
            eprintln!("{}", error_line(kind, &message));
            ExitCode::FAILURE
        }
    }
}
