//! Mini-batch gradient descent and finite-difference gradient verification.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::loss::{loss, loss_grad};
use super::network::{backward, forward_cached, forward_raw, RefinerModel};
use super::{RefinerInput, RefinerOutput};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Leading epochs during which the branch convolutions stay fixed.
    pub backbone_freeze_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 16,
            epochs: 20,
            lr_start: 0.05,
            lr_end: 0.0001,
            backbone_freeze_epochs: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("batch and epochs must be at least 1".into()));
        }
        if !(self.lr_start > self.lr_end && self.lr_end > 0.0) {
            return Err(Error::Config(
                "learning rates must satisfy lr_start > lr_end > 0".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate at optimizer step `step` of `total_steps`, linear from
    /// `lr_start` on the first step to `lr_end` on the last.
    pub fn learning_rate(&self, step: usize, total_steps: usize) -> f64 {
        if total_steps <= 1 {
            return self.lr_start;
        }
        let t = step as f64 / (total_steps - 1) as f64;
        self.lr_start + (self.lr_end - self.lr_start) * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr_first: f64,
    pub lr_last: f64,
    pub backbone_frozen: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: RefinerModel,
    pub trace: Vec<EpochStats>,
}

/// Loss and parameter gradients for one sample.
pub fn gradients(
    model: &RefinerModel,
    input: &RefinerInput,
    gt: &RefinerOutput,
    include_backbone: bool,
) -> Result<(f64, RefinerModel)> {
    let cache = forward_cached(model, input)?;
    let pred = RefinerOutput::from_array(cache.output);
    let value = loss(&pred, gt)?;
    let d_out = loss_grad(&pred, gt)?;
    let mut grads = RefinerModel::zeros();
    backward(model, &cache, &d_out, &mut grads, include_backbone);
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            layer: "gradient".into(),
        });
    }
    Ok((value, grads))
}

pub fn train(
    model: RefinerModel,
    dataset: &[(RefinerInput, RefinerOutput)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_progress(model, dataset, cfg, |_| {})
}

/// Trains with plain mini-batch gradient descent. Each step follows the
/// gradient of the loss summed over the batch (not averaged), so the
/// learning rate acts per sample. Samples are reshuffled every epoch from
/// `cfg.seed`; a trailing partial batch is kept.
pub fn train_with_progress(
    mut model: RefinerModel,
    dataset: &[(RefinerInput, RefinerOutput)],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let batches_per_epoch = dataset.len().div_ceil(cfg.batch);
    let total_steps = batches_per_epoch * cfg.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        let frozen = epoch <= cfg.backbone_freeze_epochs;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let lr_first = cfg.learning_rate(step, total_steps);
        let mut lr = lr_first;
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            let mut acc = RefinerModel::zeros();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let (input, gt) = &dataset[i];
                let (value, grads) = gradients(&model, input, gt, !frozen).map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Diverged { epoch, batch: b + 1 },
                    other => other,
                })?;
                batch_loss += value;
                acc.add_scaled(&grads, 1.0, !frozen);
            }
            batch_loss /= chunk.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b + 1 });
            }
            lr = cfg.learning_rate(step, total_steps);
            model.add_scaled(&acc, -lr, !frozen);
            if !model.is_finite() {
                return Err(Error::Diverged { epoch, batch: b + 1 });
            }
            epoch_loss += batch_loss * chunk.len() as f64;
            step += 1;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: epoch_loss / dataset.len() as f64,
            lr_first,
            lr_last: lr,
            backbone_frozen: frozen,
        };
        on_epoch(&stats);
        trace.push(stats);
    }
    Ok(TrainOutcome { model, trace })
}

/// Finite-difference step of the default gradient check.
pub const GRAD_CHECK_EPS: f64 = 1e-5;
/// Seed of the default gradient check.
pub const GRAD_CHECK_SEED: u64 = 42;

/// Parameters probed per gradient check.
pub const GRAD_CHECK_SAMPLES: usize = 240;

/// Below this magnitude gradients are compared absolutely rather than
/// relatively; finite-difference round-off at `eps = 1e-5` is around 1e-11.
const GRAD_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Tensor name and flat index of the worst parameter.
    pub worst: (String, usize),
}

/// Compares analytic gradients against central finite differences on a
/// seeded sample of parameters drawn evenly from every tensor.
pub fn grad_check(
    model: &RefinerModel,
    input: &RefinerInput,
    gt: &RefinerOutput,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, analytic) = gradients(model, input, gt, true)?;
    compare_gradients(model, input, gt, &analytic, eps, seed)
}

/// Relative error is `|a - n| / max(|a|, |n|, 1e-7)`.
pub fn compare_gradients(
    model: &RefinerModel,
    input: &RefinerInput,
    gt: &RefinerOutput,
    analytic: &RefinerModel,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::invalid(format!("eps must lie in [1e-6, 1e-3], got {eps}")));
    }
    let specs = RefinerModel::architecture();
    let per_tensor = GRAD_CHECK_SAMPLES.div_ceil(specs.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let analytic_tensors = analytic.tensors();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: (String::new(), 0),
    };

    let eval = |m: &RefinerModel| -> Result<f64> { loss(&RefinerOutput::from_array(forward_raw(m, input)?), gt) };

    for (t, spec) in specs.iter().enumerate() {
        let picks: Vec<usize> = if spec.len() <= per_tensor {
            (0..spec.len()).collect()
        } else {
            rand::seq::index::sample(&mut rng, spec.len(), per_tensor).into_vec()
        };
        for idx in picks {
            let original = model.tensors()[t].1[idx];
            probe.tensors_mut()[t].1[idx] = original + eps;
            let up = eval(&probe)?;
            probe.tensors_mut()[t].1[idx] = original - eps;
            let down = eval(&probe)?;
            probe.tensors_mut()[t].1[idx] = original;

            let numeric = (up - down) / (2.0 * eps);
            let exact = analytic_tensors[t].1[idx];
            if !numeric.is_finite() || !exact.is_finite() {
                return Err(Error::NonFinite {
                    layer: spec.name.clone(),
                });
            }
            let denom = exact.abs().max(numeric.abs()).max(GRAD_FLOOR);
            let rel = (exact - numeric).abs() / denom;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (spec.name.clone(), idx);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Gradient check of a freshly initialized model on one synthetic sample,
/// both drawn from `seed`.
pub fn seeded_grad_check(seed: u64) -> Result<GradCheckReport> {
    let model = RefinerModel::init(seed);
    let (input, gt) = crate::synth::make_refiner_dataset(1, seed)?
        .pop()
        .expect("one sample requested");
    grad_check(&model, &input, &gt, GRAD_CHECK_EPS, seed)
}

/// Trains a fresh model on `n` synthetic crops with the default schedule.
/// Data, initialization and shuffling each get their own stream of `seed`.
pub fn train_synthetic(n: usize, seed: u64, on_epoch: impl FnMut(&EpochStats)) -> Result<TrainOutcome> {
    use crate::kvfile::derive_seed;
    let data = crate::synth::make_refiner_dataset(n, derive_seed(seed, 1))?;
    let cfg = TrainConfig {
        seed: derive_seed(seed, 3),
        ..TrainConfig::default()
    };
    train_with_progress(RefinerModel::init(derive_seed(seed, 2)), &data, &cfg, on_epoch)
}
