//! Mini-batch SGD training loop shared by the domain and gesture CNNs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::argmax;
use crate::nn::{sgd_step, Network, OptimState};
use crate::rng;
use crate::signal::{batch_tensor, AmplitudeSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    /// Seeds weight init and per-epoch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.01,
            momentum: 0.9,
            batch: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(Error::config("batch size must be at least 2 (batch norm)"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must be in [0,1), got {}", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// mean training-mode loss over the epoch's batches
    pub loss: f64,
    /// training-mode accuracy over the epoch's batches
    pub accuracy: f64,
}

/// Trains `net` in place on `(samples, labels)` with cross-entropy. A
/// trailing batch of one sample is skipped for that epoch.
pub fn fit(
    net: &mut Network<f32>,
    samples: &[&AmplitudeSample],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if samples.len() != labels.len() {
        return Err(Error::shape("sample and label counts differ"));
    }
    if samples.len() < 2 {
        return Err(Error::Empty(format!(
            "training needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut state = OptimState::new(cfg.lr, cfg.momentum, net.params())?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut stream = rng::stream(cfg.seed, &[0xe90c, epoch as u64]);
        rng::shuffle(&mut stream, &mut order);
        let (mut loss_sum, mut batches, mut correct, mut seen) = (0.0, 0usize, 0usize, 0usize);
        for chunk in order.chunks(cfg.batch) {
            if chunk.len() < 2 {
                continue;
            }
            let x = batch_tensor(chunk.iter().map(|&i| samples[i]))?;
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (logits, tape, upd) = net.forward_tape(&x, crate::nn::BnMode::Train)?;
            let (loss, grad) = crate::nn::ops::softmax_cross_entropy(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let classes = logits.shape()[1];
            correct += logits
                .data()
                .chunks(classes)
                .zip(&y)
                .filter(|(row, &t)| argmax(row) == t)
                .count();
            seen += y.len();
            let (_, grads) = net.backward(tape, grad, true)?;
            sgd_step(net.params_mut(), &grads, &mut state)?;
            net.apply_bn_updates(upd)?;
            if !net.params().iter().all(|(_, t)| t.all_finite()) {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += loss;
            batches += 1;
        }
        trace.push(EpochStats {
            epoch,
            loss: loss_sum / batches.max(1) as f64,
            accuracy: correct as f64 / seen.max(1) as f64,
        });
    }
    Ok(trace)
}

/// Inference-mode logits for every sample, `chunk` samples per forward pass.
pub fn logits(net: &Network<f32>, samples: &[&AmplitudeSample], chunk: usize) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(samples.len());
    for part in samples.chunks(chunk.max(1)) {
        let z = net.forward(&batch_tensor(part.iter().copied())?)?;
        let c = z.shape()[1];
        out.extend(z.data().chunks(c).map(<[f32]>::to_vec));
    }
    Ok(out)
}

pub fn predict(net: &Network<f32>, samples: &[&AmplitudeSample]) -> Result<Vec<usize>> {
    Ok(logits(net, samples, 64)?.iter().map(|z| argmax(z)).collect())
}
