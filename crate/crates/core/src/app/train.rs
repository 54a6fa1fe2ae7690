//! The training loop: shuffled epochs, micro-batches inside 12-sample
//! accumulation windows, cosine-decayed SGD and per-epoch validation.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::Level;
use crate::nets::{Checkpoint, CheckpointMeta, Res3dNet};
use crate::preproc::Index;
use crate::synth::Split;
use crate::tensor::{bce_loss, Parameters, Reduction, Sgd, SgdConfig, StepReport};

use super::config::RunConfig;
use super::data::{load_batch, samples, LoadOptions, Sample};
use super::eval::evaluate;
use super::{BEST_CHECKPOINT, FINAL_CHECKPOINT};

/// `epochs × ceil(n / accumulation)`: the cosine horizon, fixed up front.
pub fn total_steps(n_train: usize, accumulation: usize, epochs: usize) -> u64 {
    (epochs * n_train.div_ceil(accumulation)) as u64
}

/// Visiting order of the training samples in `epoch`.
pub fn epoch_order(n: usize, data_seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample BCE over the epoch.
    pub train_loss: f64,
    pub val_slice_accuracy: Option<f64>,
    pub val_lesion_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub train_samples: usize,
    pub total_steps: u64,
    pub steps: Vec<StepReport>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose validation lesion accuracy was highest (first on ties).
    pub best_epoch: Option<usize>,
}

/// Train `cfg.variant` on the `train` split of a preprocessed dataset at
/// `root`. Progress goes to `log`; checkpoints land in `out` when given.
pub fn train(
    cfg: &RunConfig,
    index: &Index,
    root: &Path,
    out: Option<&Path>,
    log: &mut dyn Write,
) -> Result<(Res3dNet<f32>, TrainReport)> {
    cfg.validate()?;
    let variant = cfg.variant;
    let train_set = samples(index, root, Split::Train, variant);
    if train_set.is_empty() {
        return Err(Error::Variant {
            variant: variant.name(),
            detail: "has no training slices in this dataset".into(),
        });
    }
    let has_val = !samples(index, root, cfg.eval_split, variant).is_empty();
    let total = total_steps(train_set.len(), cfg.accumulation, cfg.epochs);
    let mut model = Res3dNet::<f32>::new(cfg.model_config(), cfg.init_seed())?;
    let mut sgd = Sgd::<f32>::new(SgdConfig {
        accumulation: cfg.accumulation,
        momentum: cfg.momentum,
        ..SgdConfig::new(cfg.lr0, total)?
    })?;
    let augment = cfg.augment_config();
    let shuffle_seed = cfg.shuffle_frames.then(|| cfg.data_seed());
    let mut say = |line: String| -> Result<()> {
        writeln!(log, "{line}").map_err(|e| Error::io("<train log>", e))
    };
    say(format!(
        "# {variant}: {} train slices, {} parameters, {total} steps",
        train_set.len(),
        model.parameter_count()
    ))?;

    let n = train_set.len();
    let mut report = TrainReport {
        train_samples: n,
        total_steps: total,
        steps: Vec::new(),
        epochs: Vec::new(),
        best_epoch: None,
    };
    let mut best = f64::NEG_INFINITY;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(n, cfg.data_seed(), epoch);
        let mut loss_sum = 0.0;
        for (w, window) in order.chunks(cfg.accumulation).enumerate() {
            for (m, micro) in window.chunks(cfg.micro_batch).enumerate() {
                let batch_samples: Vec<&Sample> = micro.iter().map(|&i| &train_set[i]).collect();
                let pos = (w * cfg.accumulation + m * cfg.micro_batch) as u64;
                let opts = LoadOptions {
                    augment: Some((&augment, (epoch * n) as u64 + pos)),
                    shuffle_seed,
                };
                let batch = load_batch(&batch_samples, variant, opts)?;
                let labels: Vec<f32> = batch_samples.iter().map(|s| s.label.target() as f32).collect();
                let scores = model.forward(&batch, true)?;
                let loss = bce_loss(&scores, &labels, Reduction::Sum)?;
                let value = loss.item()? as f64;
                if !value.is_finite() {
                    return Err(Error::NonFinite { step: sgd.schedule().step() });
                }
                loss_sum += value;
                loss.backward()?;
                sgd.accumulate(micro.len());
            }
            let step = sgd.step(&mut model)?;
            let mut finite = true;
            model.visit_params(&mut |_, p| finite &= p.value().all_finite());
            if !finite {
                return Err(Error::NonFinite { step: step.step });
            }
            say(format!("step {} lr {:.9e} samples {}", step.step, step.lr, step.samples))?;
            report.steps.push(step);
        }
        let mut record = EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            val_slice_accuracy: None,
            val_lesion_accuracy: None,
        };
        if has_val && ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
            let ev = evaluate(&model, index, root, cfg.eval_split, cfg.threshold, cfg.micro_batch, shuffle_seed)?;
            let lesion = ev.row(Level::Lesion).accuracy;
            record.val_slice_accuracy = Some(ev.row(Level::Slice).accuracy);
            record.val_lesion_accuracy = Some(lesion);
            if lesion > best {
                best = lesion;
                report.best_epoch = Some(epoch);
                if let Some(dir) = out {
                    checkpoint(&model, &sgd, cfg, total).save(dir.join(BEST_CHECKPOINT))?;
                }
            }
        }
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".into(), |a| format!("{a:.4}"));
        say(format!(
            "epoch {epoch} train_loss {:.6} val_slice_acc {} val_lesion_acc {}",
            record.train_loss,
            fmt(record.val_slice_accuracy),
            fmt(record.val_lesion_accuracy)
        ))?;
        report.epochs.push(record);
    }
    if let Some(dir) = out {
        checkpoint(&model, &sgd, cfg, total).save(dir.join(FINAL_CHECKPOINT))?;
    }
    Ok((model, report))
}

fn checkpoint(model: &Res3dNet<f32>, sgd: &Sgd<f32>, cfg: &RunConfig, total: u64) -> Checkpoint {
    Checkpoint::capture(
        model,
        CheckpointMeta {
            step: sgd.schedule().step(),
            total_steps: total,
            seed: cfg.seed,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_counts_partial_windows() {
        assert_eq!(total_steps(24, 12, 1), 2);
        assert_eq!(total_steps(25, 12, 3), 9);
        assert_eq!(total_steps(1, 12, 30), 30);
    }

    #[test]
    fn epoch_orders_are_seeded_permutations() {
        let a = epoch_order(10, 7, 0);
        assert_eq!(a, epoch_order(10, 7, 0));
        assert_ne!(a, epoch_order(10, 7, 1));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
    }
}
