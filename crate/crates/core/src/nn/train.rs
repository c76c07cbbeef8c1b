use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{accumulate, predict};
use super::{NetShape, NetworkParams, NnError, Real};
use crate::datagen::{derive_seed, Dataset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 50,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            val_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("adam epsilon must be positive");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Adam with bias correction; `t` counts steps from 1.
pub fn adam_step<T: Real>(
    params: &mut NetworkParams<T>,
    grads: &NetworkParams<T>,
    m: &mut NetworkParams<T>,
    v: &mut NetworkParams<T>,
    t: u64,
    cfg: &TrainConfig,
) {
    assert!(t >= 1, "adam step index starts at 1");
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let (b1t, b2t) = (T::of(b1), T::of(b2));
    let (one_b1, one_b2) = (T::of(1.0 - b1), T::of(1.0 - b2));
    let (inv_c1, inv_c2) = (T::of(1.0 / c1), T::of(1.0 / c2));
    let (lr, eps) = (T::of(cfg.learning_rate), T::of(cfg.epsilon));
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(m.tensors_mut().into_iter().zip(v.tensors_mut()));
    for ((p, g), (mt, vt)) in tensors {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            let mi = b1t * mt.data[i] + one_b1 * gi;
            let vi = b2t * vt.data[i] + one_b2 * gi * gi;
            mt.data[i] = mi;
            vt.data[i] = vi;
            p.data[i] = p.data[i] - lr * (mi * inv_c1) / ((vi * inv_c2).sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample loss seen during the epoch.
    pub train_loss: f64,
    pub val_accuracy: f64,
}

fn channels<T: Real>(ds: &Dataset) -> Vec<Vec<T>> {
    ds.samples
        .iter()
        .map(|s| s.channel.iter().map(|&v| T::of(v as f64)).collect())
        .collect()
}

pub(crate) fn accuracy_on<T: Real>(
    params: &NetworkParams<T>,
    xs: &[Vec<T>],
    labels: &[usize],
) -> Result<f64, NnError> {
    let mut hits = 0usize;
    for (x, &l) in xs.iter().zip(labels) {
        if predict(params, x)?.0.index() == l {
            hits += 1;
        }
    }
    Ok(hits as f64 / xs.len() as f64)
}

/// Mini-batch Adam over `max_epochs` epochs with a seeded reshuffle per
/// epoch. Returns the final-epoch parameters and the per-epoch history.
/// `on_epoch` sees every record as soon as it is complete.
pub fn train<T: Real>(
    train_ds: &Dataset,
    val_ds: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(NetworkParams<T>, Vec<EpochRecord>), NnError> {
    cfg.validate()?;
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(NnError::Empty);
    }
    if train_ds.pipeline.kind != val_ds.pipeline.kind {
        return Err(NnError::InvalidConfig(
            "training and validation sets use different pipelines".into(),
        ));
    }
    let xs = channels::<T>(train_ds);
    let ys: Vec<usize> = train_ds.samples.iter().map(|s| s.label.index()).collect();
    let vxs = channels::<T>(val_ds);
    let vys: Vec<usize> = val_ds.samples.iter().map(|s| s.label.index()).collect();

    let shape = NetShape::default();
    let mut params = NetworkParams::<T>::init(shape, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut m = NetworkParams::zeros(shape);
    let mut v = NetworkParams::zeros(shape);
    let mut grads = NetworkParams::zeros(shape);
    let mut step = 0u64;
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut order: Vec<usize> = (0..xs.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for g in grads.tensors_mut() {
                g.data.fill(T::zero());
            }
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                loss_sum += accumulate(&params, &xs[i], ys[i], scale, &mut grads)?;
            }
            step += 1;
            adam_step(&mut params, &grads, &mut m, &mut v, step, cfg);
        }
        let train_loss = loss_sum / xs.len() as f64;
        if !train_loss.is_finite() || params.validate().is_err() {
            return Err(NnError::NonFinite { epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_accuracy: accuracy_on(&params, &vxs, &vys)?,
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok((params, history))
}

/// History as CSV: epoch, train_loss, val_accuracy.
pub fn write_history(history: &[EpochRecord], path: &Path) -> Result<(), NnError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(["epoch", "train_loss", "val_accuracy"])
        .map_err(csv_io)?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_accuracy.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> NnError {
    NnError::Io(std::io::Error::other(e))
}
