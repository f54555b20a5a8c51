//! SMGD training loop for the quantized MLP: epoch shuffles, mini-batches
//! without replacement, saturated per-layer flips, deterministic curves.

use serde::{Deserialize, Serialize};

use crate::data::{epoch_permutation, Dataset};
use crate::error::{Result, SmgdError};
use crate::qnn::mlp::QuantizedMlp;
use crate::rng::substream;
use crate::step::draw_flips;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u64,
    /// Mini-batch size k of the gradient estimator.
    pub batch_size: usize,
    /// Shared lattice resolution used when the caller builds the net.
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
    /// Record a curve point (and test accuracy, if a test set is given)
    /// every this many steps.
    pub eval_stride: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(SmgdError::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(SmgdError::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(SmgdError::InvalidArgument(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(SmgdError::InvalidArgument(format!(
                "eta must be positive and finite, got {}",
                self.eta
            )));
        }
        if self.eval_stride < 1 {
            return Err(SmgdError::InvalidArgument("eval_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// One learning-curve record; train_loss is the mean mini-batch loss since
/// the previous record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub epoch: u64,
    pub train_loss: f64,
    pub test_acc: Option<f64>,
    /// Fraction of parameters flipped at the recorded step (after
    /// saturation suppression).
    pub flip_fraction: f64,
    /// Fraction of steps so far on which the clip event failed.
    pub clip_failure_rate: f64,
    /// Divergence / saturation warnings; training continues regardless.
    pub warning: Option<String>,
}

/// Train by SMGD. Each step draws one substream keyed by (seed, step);
/// flips are drawn layer by layer, weights before biases, in ascending
/// index order, so curves are bit-identical for identical inputs.
pub fn train_smgd(
    mut net: QuantizedMlp,
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(QuantizedMlp, Vec<CurvePoint>)> {
    config.validate()?;
    if net.layer_dims()[0] != train.n_features {
        return Err(SmgdError::DimensionMismatch {
            expected: net.layer_dims()[0],
            got: train.n_features,
        });
    }
    if train.num_classes > *net.layer_dims().last().unwrap() {
        return Err(SmgdError::InvalidArgument(format!(
            "{} classes but only {} outputs",
            train.num_classes,
            net.layer_dims().last().unwrap()
        )));
    }

    let total_params = net.num_params() as f64;
    let mut curve = Vec::new();
    let mut step = 0u64;
    let mut clip_failures = 0u64;
    let mut window_loss = 0.0;
    let mut window_count = 0u64;
    let last_step = config.epochs * train.n_samples.div_ceil(config.batch_size) as u64;

    for epoch in 0..config.epochs {
        let perm = epoch_permutation(train.n_samples, config.seed, epoch);
        for chunk in perm.chunks(config.batch_size) {
            step += 1;
            let mut batch = Vec::with_capacity(chunk.len() * train.n_features);
            let mut labels = Vec::with_capacity(chunk.len());
            for &s in chunk {
                batch.extend_from_slice(train.sample(s));
                labels.push(train.labels[s]);
            }
            let (_, cache) = net.forward(&batch).map_err(|e| e.at_step(step))?;
            let (loss, grad) = net.backward(&cache, &labels).map_err(|e| e.at_step(step))?;
            window_loss += loss;
            window_count += 1;
            clip_failures += (grad.max_abs() > config.eta) as u64;

            let mut rng = substream(config.seed, step, 6);
            let mut applied = 0usize;
            for l in 0..net.num_layers() {
                let mut uw = vec![0i8; grad.weights[l].len()];
                draw_flips(&grad.weights[l], config.eta, &mut rng, &mut uw);
                let mut ub = vec![0i8; grad.biases[l].len()];
                draw_flips(&grad.biases[l], config.eta, &mut rng, &mut ub);
                applied += net.apply_update(l, &uw, &ub);
            }

            if step % config.eval_stride == 0 || step == last_step {
                let test_acc = match test {
                    Some(t) => Some(net.accuracy(t).map_err(|e| e.at_step(step))?),
                    None => None,
                };
                let mut warning = None;
                if !loss.is_finite() {
                    warning = Some(format!("non-finite training loss at step {step}"));
                } else if let Some(l) = net.any_layer_saturated() {
                    warning = Some(format!("layer {l} fully saturated at step {step}"));
                }
                curve.push(CurvePoint {
                    step,
                    epoch,
                    train_loss: window_loss / window_count as f64,
                    test_acc,
                    flip_fraction: applied as f64 / total_params,
                    clip_failure_rate: clip_failures as f64 / step as f64,
                    warning,
                });
                window_loss = 0.0;
                window_count = 0;
            }
        }
    }
    Ok((net, curve))
}
