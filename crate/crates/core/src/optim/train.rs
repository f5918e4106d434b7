use std::fmt::Write as _;
use std::time::Instant;

use super::dataset::{Dataset, EpochSampler};
use super::{default_rates, sgd_momentum_step, OptimizerState, DEFAULT_MOMENTUM};
use crate::error::{ensure, Error, Result};
use crate::nn::batchnorm::Mode;
use crate::nn::loss::loss_region;
use crate::nn::{
    loss_eval, network_backward, network_forward, network_forward_cached, LossKind, LossSpec, NetworkParams,
    NetworkSpec, Padding, Tensor4,
};
use crate::raster::TargetKind;

/// Batch size used when evaluating many tiles at once.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    /// Optional wall-clock budget; not allowed in deterministic mode.
    pub max_seconds: Option<f64>,
    pub loss: LossSpec,
    pub padding: Padding,
    pub momentum: f32,
    /// Per-layer learning rates; `None` picks [`default_rates`].
    pub rates: Option<Vec<f32>>,
    /// Validate every this many iterations (0: only after the last one).
    pub validate_every: usize,
    pub seed: u64,
    /// Report a logical clock (always 0 s) so histories are byte-reproducible.
    pub deterministic: bool,
}

impl TrainConfig {
    /// Pre-training setup: unpadded convolutions, loss on the margin-cropped reference.
    pub fn pretraining(spec: &NetworkSpec, loss: LossKind, iterations: usize) -> Self {
        TrainConfig {
            batch_size: 128,
            iterations,
            max_seconds: None,
            loss: LossSpec::new(loss, spec.receptive_radius()),
            padding: Padding::Valid,
            momentum: DEFAULT_MOMENTUM,
            rates: None,
            validate_every: 0,
            seed: 0,
            deterministic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.batch_size >= 1, Config, "batch_size must be at least 1");
        ensure!(
            !(self.deterministic && self.max_seconds.is_some()),
            Config,
            "a wall-time budget cannot be deterministic"
        );
        ensure!(
            self.iterations > 0 || self.max_seconds.is_some(),
            Config,
            "no iteration or time budget"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub seconds: f64,
    pub loss: f64,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,seconds,loss,mse,mae\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.iteration, r.seconds, r.loss, opt(r.mse), opt(r.mae));
        }
        s
    }

    pub fn last_validation(&self) -> Option<(f64, f64)> {
        self.rows.iter().rev().find_map(|r| Some((r.mse?, r.mae?)))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub history: History,
    pub state: OptimizerState,
}

fn check_dataset(data: &Dataset, spec: &NetworkSpec) -> Result<()> {
    ensure!(
        data.inputs.c == spec.input_channels(),
        ShapeMismatch,
        "samples carry {} input channels, network expects {}",
        data.inputs.c,
        spec.input_channels()
    );
    ensure!(
        data.targets.c == spec.output_channels(),
        ShapeMismatch,
        "targets have {} bands, network emits {}",
        data.targets.c,
        spec.output_channels()
    );
    let want = if spec.residual {
        TargetKind::Residual
    } else {
        TargetKind::Full
    };
    ensure!(
        data.target_kind == want,
        InvalidArgument,
        "{:?} targets for a {} network",
        data.target_kind,
        if spec.residual { "residual" } else { "plain" }
    );
    Ok(())
}

/// Trains from a fresh seeded initialization.
pub fn train(data: &Dataset, val: Option<&Dataset>, spec: &NetworkSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    train_from(NetworkParams::init(spec, config.seed), data, val, spec, config)
}

/// Continues training `params` (fresh optimizer state).
pub fn train_from(
    mut params: NetworkParams,
    data: &Dataset,
    val: Option<&Dataset>,
    spec: &NetworkSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    spec.validate()?;
    params.check(spec)?;
    check_dataset(data, spec)?;
    if let Some(v) = val {
        check_dataset(v, spec)?;
    }
    let rates = config.rates.clone().unwrap_or_else(|| default_rates(spec));
    let mut state = OptimizerState::new(&params, config.momentum, rates)?;
    // Sampling stream is separate from the initialization stream.
    let mut sampler = EpochSampler::new(data.len(), config.seed ^ 0x5eed_ba7c);
    let mut history = History::default();
    let start = Instant::now();
    let clock = |start: &Instant| if config.deterministic { 0.0 } else { start.elapsed().as_secs_f64() };

    let mut iteration = 0;
    loop {
        if config.iterations > 0 && iteration >= config.iterations {
            break;
        }
        if let Some(limit) = config.max_seconds {
            if start.elapsed().as_secs_f64() >= limit {
                break;
            }
        }
        iteration += 1;
        let (mut x, mut t) = data.gather(sampler.next_batch(config.batch_size));
        spec.normalize_input(&mut x);
        spec.normalize_target(&mut t);
        let (y, cache) = network_forward_cached(&x, spec, &params, Mode::Train, config.padding)?;
        let (loss, grad) = loss_eval(&y, &t, &config.loss)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training diverged at iteration {}: loss {}", iteration, loss)));
        }
        let grads = network_backward(spec, &params, &cache, grad)?;
        params.update_running_stats(&cache);
        sgd_momentum_step(&mut params, &grads, &mut state)
            .map_err(|e| Error::NonFinite(format!("training diverged at iteration {}: {}", iteration, e)))?;
        ensure!(
            params.all_finite(),
            NonFinite,
            "training diverged at iteration {}: parameters are no longer finite",
            iteration
        );

        let last = config.iterations > 0 && iteration == config.iterations;
        let due = config.validate_every > 0 && iteration % config.validate_every == 0;
        let (mse, mae) = match val {
            Some(v) if due || last => {
                let (mse, mae) = validate(&params, spec, v, config.padding)?;
                (Some(mse), Some(mae))
            }
            _ => (None, None),
        };
        history.rows.push(HistoryRow {
            iteration,
            seconds: clock(&start),
            loss,
            mse,
            mae,
        });
    }
    Ok(TrainOutcome {
        params,
        history,
        state,
    })
}

/// Network output for a batch in target units (residual space for residual nets).
pub fn predict(params: &NetworkParams, spec: &NetworkSpec, inputs: &Tensor4, padding: Padding) -> Result<Tensor4> {
    let mut x = inputs.clone();
    spec.normalize_input(&mut x);
    let mut y = network_forward(&x, spec, params, Mode::Eval, padding)?;
    spec.denormalize_output(&mut y);
    Ok(y)
}

/// Mean squared and mean absolute error over every validation pixel, in target units.
pub fn validate(params: &NetworkParams, spec: &NetworkSpec, val: &Dataset, padding: Padding) -> Result<(f64, f64)> {
    check_dataset(val, spec)?;
    let (mut se, mut ae, mut count) = (0.0f64, 0.0f64, 0usize);
    let all: Vec<usize> = (0..val.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let (x, t) = val.gather(chunk);
        let y = predict(params, spec, &x, padding)?;
        let margin = (t.h - y.h.min(t.h)) / 2;
        let (p, r, _) = loss_region(&y, &t, margin)?;
        for (a, b) in p.data.iter().zip(&r.data) {
            let d = *a as f64 - *b as f64;
            se += d * d;
            ae += d.abs();
        }
        count += p.len();
    }
    Ok((se / count as f64, ae / count as f64))
}
