//! Training loop with the three stopping rules (loss threshold, patience,
//! epoch cap), per-epoch metrics, and best-checkpoint tracking.
//!
//! Batch members run forward/backward in parallel; gradients are reduced in
//! fixed sample order, so results are bit-identical regardless of worker
//! count.

use crate::dataset::{Label, Manifest, Sample, Split};
use crate::error::{Error, Result};
use crate::metrics::{ConfusionCounter, Metrics};
use crate::nn::loss::softmax_cross_entropy;
use crate::nn::network::{backward_full, forward_full, Network, POSITIVE_CLASS};
use crate::nn::{adam_step, AdamState, Mode, NetworkTopology};
use crate::preprocess::{prepare, read_image, Layout};
use crate::seed::derive_seed;
use crate::tensor::{Tensor, TensorOf};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// Which loss series the stopping rules watch. The rules speak of "the loss";
/// training loss is the default reading, validation loss is available behind
/// this switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorSeries {
    TrainLoss,
    ValLoss,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub loss_threshold: f64,
    /// Epochs in a row without strict improvement before stopping.
    pub patience: usize,
    pub lr: f32,
    pub seed: u64,
    pub monitor: MonitorSeries,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 24,
            max_epochs: 200,
            loss_threshold: 0.001,
            patience: 30,
            lr: 1e-4,
            seed: 0,
            monitor: MonitorSeries::TrainLoss,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and patience must be positive".into(),
            ));
        }
        if self.loss_threshold <= 0.0 || self.lr <= 0.0 {
            return Err(Error::Config("loss_threshold and lr must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
    pub seconds: f64,
}

impl EpochRecord {
    /// Equality on everything except wall-clock time, for reproducibility checks.
    pub fn same_numbers(&self, other: &EpochRecord) -> bool {
        self.epoch == other.epoch
            && self.train_loss == other.train_loss
            && self.train_accuracy == other.train_accuracy
            && self.val_accuracy == other.val_accuracy
            && self.val_precision == other.val_precision
            && self.val_recall == other.val_recall
            && self.val_f1 == other.val_f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    LossThreshold,
    Patience,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::LossThreshold => "loss_threshold",
            StopReason::Patience => "patience",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop(StopReason),
}

/// Apply the stopping rules to the monitored loss series (one entry per
/// completed epoch), in priority order:
///
/// 1. the latest loss is below the threshold;
/// 2. each of the last `patience` epochs failed to strictly improve on the
///    best loss seen before it (the first epoch always counts as improving);
/// 3. the epoch cap is reached.
pub fn early_stop_check(losses: &[f64], config: &TrainConfig) -> StopDecision {
    let n = losses.len();
    if n == 0 {
        return StopDecision::Continue;
    }
    if losses[n - 1] < config.loss_threshold {
        return StopDecision::Stop(StopReason::LossThreshold);
    }
    if n > config.patience {
        let window = n - config.patience..n;
        let mut best_before = losses[..window.start]
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        let mut all_stale = true;
        for &l in &losses[window] {
            if l < best_before {
                all_stale = false;
                break;
            }
            best_before = best_before.min(l);
        }
        if all_stale {
            return StopDecision::Stop(StopReason::Patience);
        }
    }
    if n >= config.max_epochs {
        return StopDecision::Stop(StopReason::MaxEpochs);
    }
    StopDecision::Continue
}

/// An in-memory dataset: preprocessed input tensors paired with weak labels.
pub struct LoadedDataset {
    pub concept: String,
    pub train: Vec<(Tensor, Label)>,
    pub val: Vec<(Tensor, Label)>,
    pub test: Vec<(Tensor, Label)>,
}

/// Load every sample of a manifest, preprocessing images to the network
/// input side. Paths are resolved relative to `base_dir`.
pub fn load_dataset(
    manifest: &Manifest,
    base_dir: &Path,
    layout: Layout,
    input_side: usize,
) -> Result<LoadedDataset> {
    let concept = manifest
        .samples
        .first()
        .map(|s| s.concept.clone())
        .unwrap_or_default();
    let load_split = |split: Split| -> Result<Vec<(Tensor, Label)>> {
        let samples: Vec<&Sample> = manifest.of_split(split);
        let loaded: Vec<Result<(Tensor, Label)>> = samples
            .par_iter()
            .map(|s| {
                let img = read_image(&base_dir.join(&s.image_path))
                    .map_err(|e| Error::Data(format!("sample {}: {e}", s.id)))?;
                let tensor = prepare(&img, layout, input_side)
                    .map_err(|e| Error::Data(format!("sample {}: {e}", s.id)))?;
                Ok((tensor, s.label))
            })
            .collect();
        loaded.into_iter().collect()
    };
    Ok(LoadedDataset {
        concept,
        train: load_split(Split::Train)?,
        val: load_split(Split::Val)?,
        test: load_split(Split::Test)?,
    })
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy
    /// (ties keep the earlier epoch).
    pub network: Network<f32>,
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
    pub best_epoch: usize,
}

/// Run the full training loop on the train split, recording per-epoch
/// metrics on the validation split. Aborts with a numeric error naming
/// epoch, batch and layer if the loss goes non-finite.
pub fn train(
    config: &TrainConfig,
    data: &LoadedDataset,
    topology: NetworkTopology,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Data(format!(
            "concept {:?}: train and validation splits must be non-empty",
            data.concept
        )));
    }

    let mut net = Network::init(topology, config.seed)?;
    let mut adam = AdamState::new(config.lr);
    let mut history: Vec<EpochRecord> = Vec::new();
    let mut monitored: Vec<f64> = Vec::new();
    let mut best: Option<(f64, usize, Network<f32>)> = None;

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        let order = crate::dataset::batches(data.train.len(), config.batch_size, config.seed, epoch)?;

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (batch_idx, batch) in order.iter().enumerate() {
            let per_sample: Vec<Result<(f64, bool, Vec<TensorOf<f32>>)>> = batch
                .par_iter()
                .map(|&idx| {
                    let (input, label) = &data.train[idx];
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        config.seed,
                        &[0xd801, epoch as u64, idx as u64],
                    ));
                    let cache = forward_full(&net, input, Mode::Train, &mut rng)?;
                    let (loss, grad_logits) =
                        softmax_cross_entropy(&cache.logits, label.class_index())?;
                    if !loss.is_finite() {
                        let layer = net
                            .first_non_finite_layer(input)
                            .map(|(i, kind)| format!("layer {i} ({kind})"))
                            .unwrap_or_else(|| "loss".to_string());
                        return Err(Error::Numeric(format!(
                            "non-finite loss at epoch {epoch}, batch {batch_idx}, first non-finite value in {layer}"
                        )));
                    }
                    let predicted = argmax_class(&cache.probs);
                    let grads = backward_full(&net, &cache, &grad_logits)?;
                    Ok((loss as f64, predicted == label.class_index(), grads))
                })
                .collect();

            // fixed-order reduction: sum in batch position order
            let mut acc: Option<Vec<TensorOf<f32>>> = None;
            let mut batch_loss = 0.0f64;
            for r in per_sample {
                let (loss, is_correct, grads) = r?;
                batch_loss += loss;
                if is_correct {
                    correct += 1;
                }
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(grads.iter()) {
                            a.add_assign(g)?;
                        }
                    }
                }
            }
            let mut grads = acc.expect("batches are non-empty");
            let scale = 1.0 / batch.len() as f32;
            for g in grads.iter_mut() {
                g.scale(scale);
            }
            loss_sum += batch_loss;

            let mut params = net.param_vec_mut();
            adam_step(&mut params, &grads, &mut adam)?;
        }

        let train_loss = loss_sum / data.train.len() as f64;
        let train_accuracy = correct as f64 / data.train.len() as f64;
        let (val_metrics, val_loss) = evaluate_with_loss(&net, &data.val)?;

        let record = EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            val_accuracy: val_metrics.accuracy,
            val_precision: val_metrics.precision,
            val_recall: val_metrics.recall,
            val_f1: val_metrics.f1,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, train acc {train_accuracy:.4}, val acc {:.4}",
            val_metrics.accuracy
        );
        history.push(record);
        monitored.push(match config.monitor {
            MonitorSeries::TrainLoss => train_loss,
            MonitorSeries::ValLoss => val_loss,
        });

        let is_better = match &best {
            None => true,
            Some((best_acc, _, _)) => val_metrics.accuracy > *best_acc,
        };
        if is_better {
            best = Some((val_metrics.accuracy, epoch, net.clone()));
        }

        if let StopDecision::Stop(reason) = early_stop_check(&monitored, config) {
            let (_, best_epoch, network) = best.expect("at least one epoch ran");
            log::info!("stopping after epoch {epoch}: {}", reason.as_str());
            return Ok(TrainOutcome {
                network,
                history,
                stop: reason,
                best_epoch,
            });
        }
    }
    unreachable!("early_stop_check fires at max_epochs");
}

fn argmax_class(probs: &Tensor) -> usize {
    // tie -> negative class (index 0)
    if probs.data()[POSITIVE_CLASS] > probs.data()[1 - POSITIVE_CLASS] {
        POSITIVE_CLASS
    } else {
        1 - POSITIVE_CLASS
    }
}

/// Eval-mode metrics over a split; argmax decision with ties going negative.
pub fn evaluate(net: &Network<f32>, samples: &[(Tensor, Label)]) -> Result<Metrics> {
    evaluate_with_loss(net, samples).map(|(m, _)| m)
}

fn evaluate_with_loss(net: &Network<f32>, samples: &[(Tensor, Label)]) -> Result<(Metrics, f64)> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let results: Vec<Result<(bool, bool, f64)>> = samples
        .par_iter()
        .map(|(input, label)| {
            let probs = net.infer(input)?;
            let logits_loss = {
                // loss over probabilities is monotone in logits; recompute via CE on logits
                let cache_loss = -(probs.data()[label.class_index()].max(f32::MIN_POSITIVE)).ln();
                cache_loss as f64
            };
            Ok((
                argmax_class(&probs) == POSITIVE_CLASS,
                *label == Label::Positive,
                logits_loss,
            ))
        })
        .collect();
    let mut counter = ConfusionCounter::new();
    let mut loss_sum = 0.0;
    for r in results {
        let (pred_pos, actual_pos, loss) = r?;
        counter.record(pred_pos, actual_pos);
        loss_sum += loss;
    }
    Ok((counter.metrics(), loss_sum / samples.len() as f64))
}

/// History TSV: one epoch per row.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from(
        "epoch\ttrain_loss\ttrain_accuracy\tval_accuracy\tval_precision\tval_recall\tval_f1\tseconds\n",
    );
    for r in history {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\n",
            r.epoch,
            r.train_loss,
            r.train_accuracy,
            r.val_accuracy,
            r.val_precision,
            r.val_recall,
            r.val_f1,
            r.seconds
        ));
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating history {}", path.display()), e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| Error::io(format!("writing history {}", path.display()), e))
}
