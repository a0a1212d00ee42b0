//! Epoch loop: shuffled mini-batches, augmentation, AdamW, plateau decay,
//! early stopping, checkpoints and a per-epoch metric log.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{ParamEntry, ParamStore};
use crate::data::augment::{augment, AugmentConfig};
use crate::data::{derive_seed, SliceSample};
use crate::error::{Error, Result};
use crate::loss::{composite_loss, GroundTruthPyramid};
use crate::metrics::{confusion, Aggregate, EvalReport};
use crate::network::{threshold_logits, HesUnet};
use crate::tensor::{Real, Tensor};

use super::checkpoint::{Checkpoint, TensorRecord};
use super::config::RunConfig;
use super::optim::{clip_global_norm, AdamWConfig, OptimState};
use super::schedule::{EarlyStopper, Plateau};

pub const METRICS_LOG: &str = "metrics.tsv";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const METRICS_HEADER: &str = "epoch\ttrain_loss\tval_loss\tlr\tval_dsc";

const SHUFFLE_STREAM: u64 = 1;
const AUGMENT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub val_dsc: f64,
}

impl EpochRecord {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.epoch, self.train_loss, self.val_loss, self.lr, self.val_dsc
        )
    }
}

/// Loss and overlap of a model over a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// sample-weighted mean composite loss
    pub loss: f64,
    pub per_sample: Vec<(String, EvalReport)>,
    pub aggregate: Aggregate,
}

/// Stack samples into `(N, 1, H, W)` tensors of element type `T`.
pub fn batch<T: Real>(samples: &[&SliceSample]) -> Result<(Tensor<T>, Tensor<T>)> {
    let (x, y) = crate::data::batch_tensors(samples)?;
    let cast = |t: &Tensor<f32>| {
        Tensor::from_vec(
            t.shape(),
            t.data().iter().map(|&v| T::lit(v as f64)).collect(),
        )
    };
    Ok((cast(&x)?, cast(&y)?))
}

pub struct Trainer<T: Real> {
    pub model: HesUnet,
    pub config: RunConfig,
    pub store: ParamStore<T>,
    pub optim: OptimState<T>,
    pub plateau: Plateau,
    pub stopper: EarlyStopper,
    pub augment: AugmentConfig,
    /// completed epochs
    pub epoch: usize,
    /// batches already taken from the current epoch
    pub batch_cursor: usize,
    epoch_loss_sum: f64,
    epoch_loss_count: usize,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    /// parameters at the best validation loss so far
    pub best_store: Option<ParamStore<T>>,
    pub stopped: bool,
    pub history: Vec<EpochRecord>,
    /// loss of every optimizer step taken by this instance
    pub step_losses: Vec<f64>,
}

impl<T: Real> Trainer<T> {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let model = HesUnet::new(config.model.clone())?;
        let store = model.init_params()?;
        let t = &config.train;
        let optim = OptimState::new(AdamWConfig {
            lr: t.lr,
            weight_decay: t.weight_decay,
            ..Default::default()
        });
        let plateau = Plateau::new(t.plateau_patience, t.plateau_factor);
        let stopper = EarlyStopper::new(t.early_stop_patience);
        Ok(Trainer {
            model,
            config,
            store,
            optim,
            plateau,
            stopper,
            augment: AugmentConfig::default(),
            epoch: 0,
            batch_cursor: 0,
            epoch_loss_sum: 0.0,
            epoch_loss_count: 0,
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            best_store: None,
            stopped: false,
            history: Vec::new(),
            step_losses: Vec::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.optim.lr()
    }

    /// Optimizer steps taken, including those before a resume.
    pub fn global_step(&self) -> u64 {
        self.optim.step
    }

    /// One optimizer step on `samples`; returns the composite loss.
    pub fn train_step(&mut self, samples: &[&SliceSample]) -> Result<f64> {
        let (x, y) = batch::<T>(samples)?;
        let out = self.model.forward(&self.store, &x, true, true, false)?;
        let pyramid = GroundTruthPyramid::build(&y)?;
        let loss = composite_loss(&pyramid, &out.logits, &self.model.config.lambda)?;
        let value = loss.item()?.as_f64();
        loss.backward()?;
        let mut grads: HashMap<String, Vec<T>> = out
            .leaves
            .iter()
            .filter_map(|(name, leaf)| leaf.grad().map(|g| (name.clone(), g)))
            .collect();
        if let Some(max) = self.config.train.grad_clip {
            clip_global_norm(&mut grads, max);
        }
        self.optim.step(&mut self.store, &grads)?;
        self.store.apply_updates(out.updates)?;
        self.step_losses.push(value);
        Ok(value)
    }

    fn epoch_order(&self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            self.config.train.seed,
            &[SHUFFLE_STREAM, self.epoch as u64],
        ));
        order.shuffle(&mut rng);
        order
    }

    fn prepared(&self, sample: &SliceSample, index: usize) -> SliceSample {
        if !self.config.train.augment {
            return sample.clone();
        }
        let seed = derive_seed(
            self.config.train.seed,
            &[AUGMENT_STREAM, self.epoch as u64, index as u64],
        );
        augment(sample, &mut ChaCha8Rng::seed_from_u64(seed), &self.augment)
    }

    fn steps_exhausted(&self) -> bool {
        matches!(self.config.train.max_steps, Some(m) if self.optim.step >= m as u64)
    }

    /// Train until the epoch budget, early stop or step budget is reached.
    ///
    /// Returns the records of the epochs completed by this call.
    pub fn fit(&mut self, train: &[SliceSample], val: &[SliceSample]) -> Result<Vec<EpochRecord>> {
        if train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let start = self.history.len();
        if let Some(dir) = &self.config.train.checkpoint_dir {
            fs::create_dir_all(dir)?;
            let log = dir.join(METRICS_LOG);
            if self.epoch == 0 && self.batch_cursor == 0 || !log.exists() {
                fs::write(&log, format!("{METRICS_HEADER}\n"))?;
            }
        }
        while !self.stopped && self.epoch < self.config.train.epochs && !self.steps_exhausted() {
            let complete = self.run_epoch(train)?;
            if !complete {
                break;
            }
            self.end_epoch(val)?;
        }
        Ok(self.history[start..].to_vec())
    }

    /// Continue the current epoch; `false` when the step budget cut it short.
    fn run_epoch(&mut self, train: &[SliceSample]) -> Result<bool> {
        let order = self.epoch_order(train.len());
        let bs = self.config.train.batch_size;
        let chunks: Vec<&[usize]> = order.chunks(bs).collect();
        while self.batch_cursor < chunks.len() {
            if self.steps_exhausted() {
                return Ok(false);
            }
            let idx = chunks[self.batch_cursor];
            let prepared: Vec<SliceSample> =
                idx.iter().map(|&i| self.prepared(&train[i], i)).collect();
            let refs: Vec<&SliceSample> = prepared.iter().collect();
            let loss = self.train_step(&refs)?;
            self.epoch_loss_sum += loss * idx.len() as f64;
            self.epoch_loss_count += idx.len();
            self.batch_cursor += 1;
            log::debug!(
                "epoch {} step {} loss {loss:.6}",
                self.epoch + 1,
                self.optim.step
            );
        }
        Ok(true)
    }

    fn end_epoch(&mut self, val: &[SliceSample]) -> Result<()> {
        let train_loss = self.epoch_loss_sum / self.epoch_loss_count.max(1) as f64;
        let (val_loss, val_dsc) = if val.is_empty() {
            (train_loss, f64::NAN)
        } else {
            let ev = self.evaluate(val)?;
            (ev.loss, ev.aggregate.micro().dsc)
        };
        let lr_used = self.lr();
        self.epoch += 1;
        self.batch_cursor = 0;
        self.epoch_loss_sum = 0.0;
        self.epoch_loss_count = 0;
        let record = EpochRecord {
            epoch: self.epoch,
            train_loss,
            val_loss,
            lr: lr_used,
            val_dsc,
        };
        self.history.push(record);
        log::info!(
            "epoch {} train_loss {train_loss:.5} val_loss {val_loss:.5} val_dsc {val_dsc:.4} lr {lr_used:.2e}",
            self.epoch
        );

        let improved = val_loss < self.best_val_loss;
        if improved {
            self.best_val_loss = val_loss;
            self.best_epoch = self.epoch;
            self.best_store = Some(self.store.clone());
        }
        let next_lr = self.plateau.step(val_loss, lr_used);
        self.optim.set_lr(next_lr);
        self.stopped = self.stopper.step(val_loss);

        if let Some(dir) = self.config.train.checkpoint_dir.clone() {
            let mut log = OpenOptions::new()
                .append(true)
                .create(true)
                .open(dir.join(METRICS_LOG))?;
            writeln!(log, "{}", record.to_tsv())?;
            self.save_checkpoint(&dir.join(LAST_CHECKPOINT))?;
            if improved {
                self.save_checkpoint(&dir.join(BEST_CHECKPOINT))?;
            }
        }
        Ok(())
    }

    /// Eval-mode loss and per-sample overlap of the current parameters at
    /// the configured threshold.
    pub fn evaluate(&self, samples: &[SliceSample]) -> Result<Evaluation> {
        evaluate_samples(
            &self.model,
            &self.store,
            samples,
            self.config.train.batch_size,
            self.config.train.threshold,
        )
    }

    /// Parameters selected by validation loss, or the current ones before
    /// any epoch has finished.
    pub fn best_params(&self) -> &ParamStore<T> {
        self.best_store.as_ref().unwrap_or(&self.store)
    }

    /// Like [`Trainer::evaluate`] with the selected parameters.
    pub fn evaluate_best(&self, samples: &[SliceSample]) -> Result<Evaluation> {
        evaluate_samples(
            &self.model,
            self.best_params(),
            samples,
            self.config.train.batch_size,
            self.config.train.threshold,
        )
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut records = Vec::new();
        for e in self.store.entries() {
            records.push(TensorRecord::from_values(
                format!("param/{}", e.name),
                &e.shape,
                &e.value,
            ));
        }
        if let Some(best) = &self.best_store {
            for e in best.entries() {
                records.push(TensorRecord::from_values(
                    format!("best/{}", e.name),
                    &e.shape,
                    &e.value,
                ));
            }
        }
        for (prefix, moments) in [("adam.m", &self.optim.m), ("adam.v", &self.optim.v)] {
            for (name, values) in moments {
                records.push(TensorRecord::from_values(
                    format!("{prefix}/{name}"),
                    &[values.len()],
                    values,
                ));
            }
        }
        let meta = [
            ("epoch", self.epoch.to_string()),
            ("batch_cursor", self.batch_cursor.to_string()),
            ("epoch_loss_sum", self.epoch_loss_sum.to_string()),
            ("epoch_loss_count", self.epoch_loss_count.to_string()),
            ("step", self.optim.step.to_string()),
            ("lr", self.optim.lr().to_string()),
            ("best_val_loss", self.best_val_loss.to_string()),
            ("best_epoch", self.best_epoch.to_string()),
            ("stopped", self.stopped.to_string()),
            ("plateau_best", self.plateau.best.to_string()),
            ("plateau_bad", self.plateau.bad_epochs.to_string()),
            ("stopper_best", self.stopper.best.to_string()),
            ("stopper_bad", self.stopper.bad_epochs.to_string()),
            ("dtype", format!("{:?}", T::DTYPE)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Checkpoint {
            fingerprint: self.config.fingerprint(),
            config_text: self.config.to_text(),
            meta,
            records,
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    /// Rebuild a trainer from a checkpoint; training settings come from
    /// `config`, whose architecture must match the stored fingerprint.
    pub fn from_checkpoint(config: RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.fingerprint != config.fingerprint() {
            return Err(Error::Config(
                "checkpoint was written for a different architecture".into(),
            ));
        }
        let mut tr = Trainer::new(config)?;
        tr.store = load_params(&tr.model, ckpt, "param/")?;
        if ckpt.records.iter().any(|r| r.name.starts_with("best/")) {
            tr.best_store = Some(load_params(&tr.model, ckpt, "best/")?);
        }
        for (prefix, target) in [("adam.m/", &mut tr.optim.m), ("adam.v/", &mut tr.optim.v)] {
            for r in ckpt.records.iter().filter(|r| r.name.starts_with(prefix)) {
                target.insert(r.name[prefix.len()..].to_string(), r.values::<T>());
            }
        }
        tr.epoch = ckpt.meta_value("epoch")?;
        tr.batch_cursor = ckpt.meta_value("batch_cursor")?;
        tr.epoch_loss_sum = ckpt.meta_value("epoch_loss_sum")?;
        tr.epoch_loss_count = ckpt.meta_value("epoch_loss_count")?;
        tr.optim.step = ckpt.meta_value("step")?;
        tr.optim.set_lr(ckpt.meta_value("lr")?);
        tr.best_val_loss = ckpt.meta_value("best_val_loss")?;
        tr.best_epoch = ckpt.meta_value("best_epoch")?;
        tr.stopped = ckpt.meta_value("stopped")?;
        tr.plateau.best = ckpt.meta_value("plateau_best")?;
        tr.plateau.bad_epochs = ckpt.meta_value("plateau_bad")?;
        tr.stopper.best = ckpt.meta_value("stopper_best")?;
        tr.stopper.bad_epochs = ckpt.meta_value("stopper_bad")?;
        Ok(tr)
    }

    pub fn resume(config: RunConfig, path: &Path) -> Result<Self> {
        Self::from_checkpoint(config, &Checkpoint::load(path)?)
    }
}

/// Parameters stored under `prefix` in `ckpt`, checked against the
/// model's declarations.
pub fn load_params<T: Real>(
    model: &HesUnet,
    ckpt: &Checkpoint,
    prefix: &str,
) -> Result<ParamStore<T>> {
    let mut store = ParamStore::empty();
    for spec in model.specs() {
        let key = format!("{prefix}{}", spec.name);
        let r = ckpt
            .record(&key)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks {}", spec.name)))?;
        if r.shape != spec.shape {
            return Err(Error::Format(format!(
                "{}: stored shape {:?}, expected {:?}",
                spec.name, r.shape, spec.shape
            )));
        }
        store.insert(ParamEntry {
            name: spec.name.clone(),
            shape: spec.shape.clone(),
            trainable: spec.trainable,
            value: std::sync::Arc::new(r.values::<T>()),
        })?;
    }
    Ok(store)
}

/// Model and parameters from a checkpoint file, with its configuration.
pub fn load_model<T: Real>(path: &Path) -> Result<(RunConfig, HesUnet, ParamStore<T>)> {
    let ckpt = Checkpoint::load(path)?;
    let config = RunConfig::parse(&ckpt.config_text)?;
    if config.fingerprint() != ckpt.fingerprint {
        return Err(Error::Format(
            "checkpoint fingerprint does not match its configuration".into(),
        ));
    }
    let model = HesUnet::new(config.model.clone())?;
    let store = load_params(&model, &ckpt, "param/")?;
    Ok((config, model, store))
}

/// Eval-mode loss and overlap of `samples`, processed in batches.
pub fn evaluate_samples<T: Real>(
    model: &HesUnet,
    store: &ParamStore<T>,
    samples: &[SliceSample],
    batch_size: usize,
    threshold: f64,
) -> Result<Evaluation> {
    let mut loss_sum = 0.0;
    let mut per_sample = Vec::with_capacity(samples.len());
    let mut aggregate = Aggregate::default();
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&SliceSample> = chunk.iter().collect();
        let (x, y) = batch::<T>(&refs)?;
        let out = model.forward(store, &x, false, false, false)?;
        let pyramid = GroundTruthPyramid::build(&y)?;
        loss_sum += composite_loss(&pyramid, &out.logits, &model.config.lambda)?
            .item()?
            .as_f64()
            * chunk.len() as f64;
        let pred = threshold_logits(&out.logits[0], threshold)?;
        let plane = pred.numel() / chunk.len();
        for (i, s) in chunk.iter().enumerate() {
            let range = i * plane..(i + 1) * plane;
            let (tp, fp, fn_) = confusion(&pred.data()[range.clone()], &y.data()[range])?;
            let report = EvalReport::from_counts(tp, fp, fn_);
            aggregate.push(report);
            per_sample.push((s.name(), report));
        }
    }
    Ok(Evaluation {
        loss: loss_sum / samples.len().max(1) as f64,
        per_sample,
        aggregate,
    })
}

/// Paths written by a training run with a checkpoint directory.
pub fn run_artifacts(dir: &Path) -> Vec<PathBuf> {
    [LAST_CHECKPOINT, BEST_CHECKPOINT, METRICS_LOG]
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| p.exists())
        .collect()
}
