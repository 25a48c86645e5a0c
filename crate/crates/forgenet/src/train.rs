//! Minibatch SGD training (standard and adversarial) and threshold-layer
//! calibration.

use crate::attack::{attack_sample, AttackConfig};
use crate::autodiff::Tape;
use crate::counters;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{ForgeMode, Model};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    /// Classical momentum with the given coefficient.
    SgdMomentum(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// When set, every batch is replaced by adversaries generated against
    /// the current weights with this inner attack.
    pub adversarial: Option<AttackConfig>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Contract(
                "epochs and batch size must be positive".into(),
            ));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Contract(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if let Optimizer::SgdMomentum(m) = self.optimizer {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::Contract(format!(
                    "momentum must lie in [0,1), got {m}"
                )));
            }
        }
        if let Some(inner) = &self.adversarial {
            inner.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Trains a copy of the model and returns it with per-epoch statistics.
pub fn train(
    model: &Model,
    data: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(Model, Vec<EpochStats>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Contract("training on an empty dataset".into()));
    }
    if model.meta.classes != data.classes {
        return Err(Error::Contract(format!(
            "model expects {} classes but dataset has {}",
            model.meta.classes, data.classes
        )));
    }

    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // One velocity pair per linear layer, allocated lazily on first update.
    let mut velocity: Vec<Option<(Tensor, Tensor)>> = vec![None; model.layers.len()];
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let mut inputs: Vec<Tensor> =
                batch.iter().map(|&i| data.inputs[i].clone()).collect();

            if let Some(inner) = &config.adversarial {
                let mut cfg = inner.clone();
                cfg.seed = mix_seed(config.seed, epoch as u64, batch_idx as u64);
                for (k, x) in inputs.iter_mut().enumerate() {
                    let out = attack_sample(&model, x, labels[k], &cfg, &[], batch[k])?;
                    *x = out.adversarial;
                }
            }

            let refs: Vec<&Tensor> = inputs.iter().collect();
            let batch_tensor = Tensor::stack(&refs)?;
            let mut tape = Tape::new();
            let leaf = tape.leaf(batch_tensor);
            let fwd = model.forward_on_tape(&mut tape, leaf)?;
            let loss_id = tape.softmax_cross_entropy(fwd.output, &labels)?;
            let loss = tape.value(loss_id).scalar_value()?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("loss became {loss}"),
                });
            }
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();

            let grads = tape.backward(loss_id)?;
            let lr = config.learning_rate;
            for &(layer_idx, wid, bid) in &fwd.params {
                let gw = grads.wrt(wid).cloned();
                let gb = grads.wrt(bid).cloned();
                let (weight, bias) = model.layers[layer_idx]
                    .params_mut()
                    .expect("tape params map to linear layers");
                match config.optimizer {
                    Optimizer::Sgd => {
                        if let Some(g) = &gw {
                            sgd_step(weight, g, lr);
                        }
                        if let Some(g) = &gb {
                            sgd_step(bias, g, lr);
                        }
                    }
                    Optimizer::SgdMomentum(mu) => {
                        let slot = velocity[layer_idx].get_or_insert_with(|| {
                            (
                                Tensor::zeros(weight.shape().to_vec()),
                                Tensor::zeros(bias.shape().to_vec()),
                            )
                        });
                        if let Some(g) = &gw {
                            momentum_step(weight, &mut slot.0, g, lr, mu);
                        }
                        if let Some(g) = &gb {
                            momentum_step(bias, &mut slot.1, g, lr, mu);
                        }
                    }
                }
            }
        }

        let train_accuracy = model.accuracy(&data.inputs, &data.labels)?;
        let test_accuracy = match test {
            Some(t) if !t.is_empty() => Some(model.accuracy(&t.inputs, &t.labels)?),
            _ => None,
        };
        curve.push(EpochStats {
            epoch,
            mean_loss: loss_sum / seen as f64,
            train_accuracy,
            test_accuracy,
        });
    }

    Ok((model, curve))
}

fn sgd_step(param: &mut Tensor, grad: &Tensor, lr: f64) {
    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
        *p -= lr * g;
    }
}

fn momentum_step(param: &mut Tensor, vel: &mut Tensor, grad: &Tensor, lr: f64, mu: f64) {
    for ((p, v), g) in param
        .data_mut()
        .iter_mut()
        .zip(vel.data_mut())
        .zip(grad.data())
    {
        *v = mu * *v + g;
        *p -= lr * *v;
    }
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e3779b97f4a7c15) ^ b.wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Summary of one calibration pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationStats {
    /// Model forward passes performed (one per sample).
    pub forward_passes: u64,
    /// Gradient-tape backward passes performed (always zero).
    pub backward_passes: u64,
    /// `(layer_index, tracked_max, threshold)` per threshold layer.
    pub per_layer: Vec<(usize, f64, f64)>,
}

/// Calibrates every threshold layer: switches them to tracking mode, runs
/// one forward pass per sample (no gradients), freezes the tracked maxima,
/// and returns the model to inference mode.
pub fn calibrate_forge(model: &mut Model, data: &Dataset) -> Result<CalibrationStats> {
    if model.forge_count() == 0 {
        return Err(Error::Contract("model has no forge layers".into()));
    }
    let fwd_before = counters::forward_passes();
    let bwd_before = counters::backward_passes();

    model.set_forge_mode(ForgeMode::Tracking);
    for x in &data.inputs {
        let batch = Tensor::stack(&[x])?;
        model.forward_tracking(&batch)?;
    }
    model.set_forge_mode(ForgeMode::Inference);

    let per_layer = model
        .forge_states()
        .into_iter()
        .map(|(i, s)| (i, s.tracked_max(), s.threshold()))
        .collect();
    Ok(CalibrationStats {
        forward_passes: counters::forward_passes() - fwd_before,
        backward_passes: counters::backward_passes() - bwd_before,
        per_layer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, Split};
    use crate::net::{presets, InsertPolicy};

    fn quick_config(epochs: usize, lr: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            learning_rate: lr,
            optimizer: Optimizer::Sgd,
            adversarial: None,
            seed,
        }
    }

    #[test]
    fn linear_model_separates_blobs() {
        let data = synth_blobs(3, 2, 150, 8.0, 1, Split::Train).unwrap();
        let model = presets::linear(2, 3, 1).unwrap();
        let (trained, curve) = train(&model, &data, None, &quick_config(40, 0.5, 2)).unwrap();
        let final_acc = trained.accuracy(&data.inputs, &data.labels).unwrap();
        assert!(final_acc >= 0.99, "got {final_acc}");
        assert_eq!(curve.len(), 40);
    }

    #[test]
    fn zero_learning_rate_keeps_weights_bit_identical() {
        let data = synth_blobs(3, 2, 30, 6.0, 1, Split::Train).unwrap();
        let model = presets::mlp_blobs(2, 3, 7).unwrap();
        let (trained, _) = train(&model, &data, None, &quick_config(3, 0.0, 2)).unwrap();
        assert_eq!(trained, model);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let data = synth_blobs(3, 2, 60, 6.0, 1, Split::Train).unwrap();
        let model = presets::mlp_blobs(2, 3, 7).unwrap();
        let (a, _) = train(&model, &data, None, &quick_config(5, 0.2, 9)).unwrap();
        let (b, _) = train(&model, &data, None, &quick_config(5, 0.2, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn class_count_mismatch_is_contract_error() {
        let data = synth_blobs(3, 2, 30, 6.0, 1, Split::Train).unwrap();
        let model = presets::linear(2, 4, 1).unwrap();
        assert!(matches!(
            train(&model, &data, None, &quick_config(1, 0.1, 0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn calibration_worked_example_and_idempotence() {
        // Single sample whose layer-1 activation max is 4.0.
        let model = presets::linear(2, 3, 1).unwrap();
        let mut forged = model.insert_forge(&InsertPolicy::All).unwrap();
        forged.set_c_ratio((2.0f64).powi(-7)).unwrap();
        let data = Dataset::new(
            vec![Tensor::vector(vec![1.0, 0.25])],
            vec![0],
            3,
            Split::Train,
            "fixture".into(),
        )
        .unwrap();
        // The forge layer sits before the dense layer, so it tracks the raw
        // input; scale the tracked max by hand instead: feed an input whose
        // max is 1.0, then verify the threshold formula against it.
        let stats = calibrate_forge(&mut forged, &data).unwrap();
        assert_eq!(stats.per_layer.len(), 1);
        let (_, b, c_th) = stats.per_layer[0];
        assert_eq!(b, 1.0);
        assert_eq!(c_th, 1.0 * (2.0f64).powi(-7));
        assert_eq!(stats.backward_passes, 0);
        assert_eq!(stats.forward_passes, 1);

        // calibrating again on the same data is a no-op
        let again = calibrate_forge(&mut forged, &data).unwrap();
        assert_eq!(again.per_layer[0].1, b);
    }

    #[test]
    fn calibration_threshold_arithmetic_hits_exact_power_of_two() {
        // b = 4.0 and c_ratio = 2^-7 must give exactly 0.03125.
        let mut state = crate::net::ForgeState::with_parts(0.0, (2.0f64).powi(-7), ForgeMode::Tracking).unwrap();
        state.track(&Tensor::vector(vec![4.0, 1.0]));
        assert_eq!(state.tracked_max(), 4.0);
        assert_eq!(state.c_ratio() * state.tracked_max(), 0.03125);
    }

    #[test]
    fn calibration_is_order_invariant_and_monotone_in_supersets() {
        let model = presets::mlp_blobs(2, 3, 3).unwrap();
        let data = synth_blobs(3, 2, 40, 6.0, 5, Split::Train).unwrap();

        let mut forward = model.insert_forge(&InsertPolicy::All).unwrap();
        calibrate_forge(&mut forward, &data).unwrap();

        let mut reversed_data = data.clone();
        reversed_data.inputs.reverse();
        reversed_data.labels.reverse();
        let mut backward = model.insert_forge(&InsertPolicy::All).unwrap();
        calibrate_forge(&mut backward, &reversed_data).unwrap();
        assert_eq!(forward, backward, "calibration must not depend on order");

        // superset: b values can only grow
        let superset = synth_blobs(3, 2, 80, 6.0, 5, Split::Train).unwrap();
        let mut on_superset = model.insert_forge(&InsertPolicy::All).unwrap();
        calibrate_forge(&mut on_superset, &superset).unwrap();
        for ((_, small), (_, big)) in forward
            .forge_states()
            .iter()
            .zip(on_superset.forge_states().iter())
        {
            assert!(big.tracked_max() >= small.tracked_max());
        }
    }

    #[test]
    fn calibration_without_forge_layers_is_contract_error() {
        let mut model = presets::linear(2, 3, 1).unwrap();
        let data = synth_blobs(3, 2, 5, 6.0, 1, Split::Train).unwrap();
        assert!(matches!(
            calibrate_forge(&mut model, &data),
            Err(Error::Contract(_))
        ));
    }
}
