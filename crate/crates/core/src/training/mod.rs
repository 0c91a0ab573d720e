//! Adam, the warm-restart cosine schedule and the training loop.
//!
//! Each iteration samples a batch of training pairs, maps LR and HR through
//! the preprocessor, and minimizes the mean squared error between the
//! network output and the transformed HR target. Validation SSIM (in the
//! training transform's domain) selects the retained checkpoint.

mod adam;
mod schedule;

pub use adam::{adam_step, OptimState};
pub use schedule::{cosine_lr, ScheduleConfig, REFERENCE_ITERATIONS};

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DatasetSplit, PatchPair};
use crate::error::{Error, Result};
use crate::evaluation::{nmse_db, ssim, to_emission_grid, Pipeline};
use crate::neuralnet::{checkpoint, ops, Model, Tensor4};
use crate::transforms::Preprocessor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub schedule: ScheduleConfig,
    pub batch_size: usize,
    pub seed: u64,
    /// Iterations between validation passes; 0 validates only at the end.
    pub validation_interval: usize,
    /// Validation uses at most this many pairs (the first ones); 0 means all.
    pub max_validation_pairs: usize,
    /// Where the best-validation model is written.
    pub checkpoint_path: Option<PathBuf>,
    /// Training log, one line per validation pass.
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleConfig::default(),
            batch_size: 16,
            seed: 0,
            validation_interval: 1_000,
            max_validation_pairs: 256,
            checkpoint_path: None,
            log_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        self.schedule.validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub iteration: usize,
    pub lr: f64,
    /// Mean training loss since the previous record.
    pub train_loss: f64,
    pub val_ssim: f64,
    pub val_nmse_db: f64,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {:e}, {:.6e}, {:.6}, {:.4}",
            self.iteration, self.lr, self.train_loss, self.val_ssim, self.val_nmse_db
        )
    }
}

pub const LOG_HEADER: &str = "iter, lr, train_loss, val_ssim, val_nmse_db";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation model (the final one when nothing was validated).
    pub model: Model,
    pub final_model: Model,
    pub log: Vec<LogRecord>,
    /// Loss of every iteration, in order.
    pub losses: Vec<f64>,
    pub best_iteration: Option<usize>,
    /// Training pairs the preprocessor could not map (e.g. all-zero LR
    /// under max scaling).
    pub skipped_pairs: usize,
}

/// Uniform sampling with replacement, reproducible from a seed.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_batch(&mut self, population: usize, batch_size: usize) -> Vec<usize> {
        (0..batch_size).map(|_| self.rng.random_range(0..population)).collect()
    }
}

/// A pair mapped into the preprocessor's domain.
#[derive(Debug, Clone)]
pub struct TransformedPair {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Maps each pair's LR and HR grid through the preprocessor. Pairs whose
/// transform is undefined are skipped; the second value counts them.
pub fn transform_pairs(
    pairs: &[&PatchPair],
    preprocessor: &dyn Preprocessor,
) -> Result<(Vec<TransformedPair>, usize)> {
    let mut out = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    for p in pairs {
        let mapped = (|| -> Result<TransformedPair> {
            let input = preprocessor.transform_for(&p.lr)?.apply(&p.lr)?.into_values();
            let target = preprocessor.transform_for(&p.hr)?.apply(&p.hr)?.into_values();
            Ok(TransformedPair { input, target })
        })();
        match mapped {
            Ok(t) => out.push(t),
            Err(Error::DegenerateInput(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, skipped))
}

/// Stacks the selected pairs into input and target tensors.
pub fn make_batch(
    data: &[TransformedPair],
    idx: &[usize],
    lr_dims: (usize, usize),
    hr_dims: (usize, usize),
) -> Result<(Tensor4, Tensor4)> {
    let mut x = Vec::with_capacity(idx.len() * lr_dims.0 * lr_dims.1);
    let mut y = Vec::with_capacity(idx.len() * hr_dims.0 * hr_dims.1);
    for &i in idx {
        x.extend_from_slice(&data[i].input);
        y.extend_from_slice(&data[i].target);
    }
    Ok((
        Tensor4::new([idx.len(), 1, lr_dims.0, lr_dims.1], x)?,
        Tensor4::new([idx.len(), 1, hr_dims.0, hr_dims.1], y)?,
    ))
}

/// Mean validation SSIM (training transform domain) and NMSE (physical).
pub fn validate(
    model: &Model,
    pairs: &[&PatchPair],
    preprocessor: &Arc<dyn Preprocessor>,
) -> Result<(f64, f64)> {
    let usable: Vec<&PatchPair> = pairs
        .iter()
        .copied()
        .filter(|p| preprocessor.transform_for(&p.lr).is_ok() && preprocessor.transform_for(&p.hr).is_ok())
        .collect();
    if usable.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let pipeline = Pipeline::new(model.clone(), preprocessor.clone(), "validation");
    let lr: Vec<_> = usable.iter().map(|p| &p.lr).collect();
    let predicted = pipeline.predict_transformed(&lr)?;
    let (mut s_sum, mut n_sum) = (0.0, 0.0);
    for (p, (tg, t)) in usable.iter().zip(predicted) {
        let (h, w) = p.hr.dims();
        let target = preprocessor.transform_for(&p.hr)?.apply(&p.hr)?;
        s_sum += ssim(tg.values(), target.values(), h, w)?;
        let phys = t.invert(&tg, p.lr.meta())?.into_values();
        n_sum += nmse_db(&p.hr, &to_emission_grid(&p.hr, h, w, phys)?)?;
    }
    let n = usable.len() as f64;
    Ok((s_sum / n, n_sum / n))
}

fn open_log(cfg: &TrainConfig) -> Result<Option<File>> {
    let Some(path) = &cfg.log_path else { return Ok(None) };
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{LOG_HEADER}").map_err(|e| Error::io(path, e))?;
    Ok(Some(f))
}

/// Trains `model` on `split.train` and returns the best-validation model.
pub fn train(
    mut model: Model,
    pairs: &[PatchPair],
    split: &DatasetSplit,
    preprocessor: Arc<dyn Preprocessor>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let total = cfg.schedule.total_iterations;
    let train_pairs: Vec<&PatchPair> = split.train.iter().map(|&i| &pairs[i]).collect();
    let mut val_pairs: Vec<&PatchPair> = split.validation.iter().map(|&i| &pairs[i]).collect();
    if cfg.max_validation_pairs > 0 {
        val_pairs.truncate(cfg.max_validation_pairs);
    }
    if let Some(p) = train_pairs.iter().find(|p| p.alpha != model.alpha()) {
        return Err(Error::config(
            "alpha",
            format!("model upscales by {}, pair {} by {}", model.alpha(), p.id(), p.alpha),
        ));
    }
    let (data, skipped_pairs) = transform_pairs(&train_pairs, preprocessor.as_ref())?;
    if total > 0 && data.is_empty() {
        return Err(Error::State("no usable training pairs".into()));
    }
    let lr_dims = train_pairs.first().map(|p| p.lr.dims()).unwrap_or((0, 0));
    let hr_dims = train_pairs.first().map(|p| p.hr.dims()).unwrap_or((0, 0));

    let mut log_file = open_log(cfg)?;
    let mut state = OptimState::new(model.params());
    let mut sampler = BatchSampler::new(cfg.seed);
    let mut losses = Vec::with_capacity(total);
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut since_log = 0.0;
    let mut since_count = 0usize;

    for t in 0..total {
        let lr = cosine_lr(&cfg.schedule, t)?;
        let idx = sampler.next_batch(data.len(), cfg.batch_size);
        let (x, y) = make_batch(&data, &idx, lr_dims, hr_dims)?;
        model.zero_grads();
        let (out, trace) = model.forward_train(&x)?;
        let (loss, grad) = ops::mse_loss(&out, &y)?;
        if !loss.is_finite() {
            return Err(Error::Numerics {
                iteration: t,
                detail: format!("training loss is {loss}"),
            });
        }
        model.backward(&trace, &grad)?;
        adam_step(model.params_mut(), &mut state, lr).map_err(|e| match e {
            Error::Numerics { detail, .. } => Error::Numerics { iteration: t, detail },
            other => other,
        })?;
        losses.push(loss);
        since_log += loss;
        since_count += 1;

        let due = cfg.validation_interval > 0 && (t + 1) % cfg.validation_interval == 0;
        if due || t + 1 == total {
            let (val_ssim, val_nmse_db) = validate(&model, &val_pairs, &preprocessor)?;
            let rec = LogRecord {
                iteration: t + 1,
                lr,
                train_loss: since_log / since_count as f64,
                val_ssim,
                val_nmse_db,
            };
            if let (Some(f), Some(path)) = (log_file.as_mut(), cfg.log_path.as_ref()) {
                writeln!(f, "{rec}").map_err(|e| Error::io(path, e))?;
            }
            log.push(rec);
            since_log = 0.0;
            since_count = 0;
            let better = match &best {
                None => !val_ssim.is_nan(),
                Some((s, _, _)) => val_ssim > *s,
            };
            if better {
                best = Some((val_ssim, t + 1, model.clone()));
                if let Some(path) = &cfg.checkpoint_path {
                    checkpoint::save(&model, path)?;
                }
            }
        }
    }

    let (best_model, best_iteration) = match best {
        Some((_, it, m)) => (m, Some(it)),
        None => {
            if let Some(path) = &cfg.checkpoint_path {
                checkpoint::save(&model, path)?;
            }
            (model.clone(), None)
        }
    };
    Ok(TrainOutcome {
        model: best_model,
        final_model: model,
        log,
        losses,
        best_iteration,
        skipped_pairs,
    })
}
