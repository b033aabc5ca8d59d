//! Mini-batch training for classifiers and autoencoders.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::autoencoder::Autoencoder;
use super::network::{Head, MlpSpec, Sequential};
use crate::autodiff::{evaluate, NodeId, Tape};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub weight_decay: f64,
    pub seed: u64,
    pub held_out_fraction: f64,
    /// Classifier training fails below this held-out accuracy.
    pub accuracy_floor: Option<f64>,
    /// Autoencoder training fails above this held-out reconstruction MSE.
    pub mse_ceiling: Option<f64>,
    /// Standard deviation of Gaussian noise added to latents while training autoencoders.
    pub latent_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            batch_size: 32,
            epochs: 50,
            optimizer: Optimizer::Adam,
            weight_decay: 0.0,
            seed: 0,
            held_out_fraction: 0.2,
            accuracy_floor: Some(0.9),
            mse_ceiling: Some(1e-2),
            latent_noise: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.weight_decay < 0.0 || self.latent_noise < 0.0 {
            return Err(Error::invalid("weight decay and latent noise must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.held_out_fraction) {
            return Err(Error::invalid("held-out fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Optimizer state over a flat list of parameter tensors.
struct OptState {
    kind: Optimizer,
    lr: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptState {
    fn new(cfg: &TrainConfig, sizes: &[usize]) -> Self {
        Self {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn begin_step(&mut self) {
        self.step += 1;
    }

    fn apply(&mut self, slot: usize, params: &mut [f64], grad: &[f64]) {
        let wd = self.weight_decay;
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * (g + wd * *p);
                }
            }
            Optimizer::Adam => {
                let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
                let bc1 = 1.0 - BETA1.powi(self.step);
                let bc2 = 1.0 - BETA2.powi(self.step);
                for i in 0..params.len() {
                    let g = grad[i] + wd * params[i];
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                    let mh = m[i] / bc1;
                    let vh = v[i] / bc2;
                    params[i] -= self.lr * mh / (vh.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

fn param_sizes(net: &Sequential) -> Vec<usize> {
    net.parameters().iter().map(|(_, p)| p.len()).collect()
}

/// Metrics reported with a trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub held_out_accuracy: f64,
    pub train_accuracy: f64,
    pub final_loss: f64,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model: Sequential,
    pub report: ClassifierReport,
}

/// Predicted class of one sample.
pub fn predict(net: &Sequential, x: &[f64]) -> Result<usize> {
    let y = evaluate(net, &Tensor::vector(x.to_vec()))?;
    Ok(match net.head() {
        Head::SigmoidScalar | Head::Linear if y.len() == 1 => usize::from(y.data()[0] >= 0.5),
        _ => argmax(y.data()),
    })
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

pub fn accuracy(net: &Sequential, data: &Dataset, indices: &[usize]) -> Result<f64> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Dataset("accuracy needs labels".into()))?;
    if indices.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0;
    for &i in indices {
        if predict(net, data.row(i))? == labels[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / indices.len() as f64)
}

/// Records the classification loss of a batch and returns its node.
fn classifier_loss(
    net: &Sequential,
    tape: &mut Tape,
    batch: NodeId,
    labels: &[usize],
) -> Result<NodeId> {
    let logits = net.record_with(tape, batch, Some(0), true)?;
    match net.head() {
        Head::Softmax => {
            let logp = tape.log_softmax(logits);
            let picked = tape.pick(logp, labels)?;
            let mean = tape.mean(picked);
            Ok(tape.scale(mean, -1.0))
        }
        Head::SigmoidScalar => {
            // log σ(l) = log_softmax([0, l])[1]
            let zeros = tape.input(Tensor::zeros(vec![labels.len(), 1]));
            let pair = tape.concat(&[zeros, logits])?;
            let logp = tape.log_softmax(pair);
            let picked = tape.pick(logp, labels)?;
            let mean = tape.mean(picked);
            Ok(tape.scale(mean, -1.0))
        }
        Head::Linear => {
            let n_out = net.output_dim();
            let mut target = vec![0.0; labels.len() * n_out];
            for (r, &l) in labels.iter().enumerate() {
                if n_out == 1 {
                    target[r] = l as f64;
                } else {
                    target[r * n_out + l] = 1.0;
                }
            }
            let t = tape.input(Tensor::from_raw(vec![labels.len(), n_out], target)?);
            let diff = tape.sub(logits, t)?;
            let sq = tape.unary(diff, crate::autodiff::Unary::Square);
            Ok(tape.mean(sq))
        }
    }
}

fn check_loss(loss: f64, epoch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Diverged { epoch, loss });
    }
    Ok(())
}

/// Trains a classifier with the given architecture.
///
/// A held-out split is carved off first; when `accuracy_floor` is set and the
/// held-out accuracy falls short, the error carries the final metrics.
pub fn train_classifier(
    data: &Dataset,
    spec: &MlpSpec,
    cfg: &TrainConfig,
) -> Result<TrainedClassifier> {
    cfg.validate()?;
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    let labels = data
        .labels()
        .ok_or_else(|| Error::Dataset("classifier training needs labels".into()))?;
    if spec.input_dim() != data.dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![spec.input_dim()],
            actual: vec![data.dim()],
        });
    }
    let classes = data.num_classes();
    let head_classes = match spec.head {
        Head::SigmoidScalar => 2,
        Head::Linear if spec.output_dim() == 1 => 2,
        _ => spec.output_dim(),
    };
    if classes > head_classes {
        return Err(Error::invalid(format!(
            "{classes} label values but the head has {head_classes} classes"
        )));
    }

    let mut net = spec.build(cfg.seed)?;
    let (mut train_idx, test_idx) = data.split_indices(cfg.held_out_fraction, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut opt = OptState::new(cfg, &param_sizes(&net));
    let mut final_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let x = tape.input(data.batch(chunk));
            let loss = classifier_loss(&net, &mut tape, x, &batch_labels)?;
            let value = tape.value(loss).data()[0];
            check_loss(value, epoch)?;
            epoch_loss += value * chunk.len() as f64;
            let adj = tape.backward(loss, &Tensor::scalar(1.0))?;
            opt.begin_step();
            net.update_parameters(|slot, p| {
                if let Some(g) = adj.param_grad(slot) {
                    opt.apply(slot, p, g);
                }
            });
        }
        final_loss = epoch_loss / train_idx.len() as f64;
        log::debug!("classifier epoch {epoch}: loss {final_loss:.6}");
    }

    let report = ClassifierReport {
        held_out_accuracy: accuracy(&net, data, &test_idx)?,
        train_accuracy: accuracy(&net, data, &train_idx)?,
        final_loss,
        epochs: cfg.epochs,
        seed: cfg.seed,
    };
    if let Some(floor) = cfg.accuracy_floor {
        if !(report.held_out_accuracy >= floor) {
            return Err(Error::AccuracyFloorUnmet {
                accuracy: report.held_out_accuracy,
                floor,
                loss: final_loss,
            });
        }
    }
    Ok(TrainedClassifier { model: net, report })
}

/// Metrics reported with a trained autoencoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderReport {
    pub held_out_mse: f64,
    pub train_mse: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// Mean squared reconstruction error over the given rows.
pub fn reconstruction_mse(ae: &Autoencoder, data: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for &i in indices {
        let x = data.sample(i);
        let r = ae.reconstruct(&x)?;
        total += r.sub(&x)?.data().iter().map(|d| d * d).sum::<f64>();
    }
    Ok(total / (indices.len() * data.dim()) as f64)
}

/// Encoder and decoder specs for a symmetric autoencoder: the encoder maps
/// `n → hidden… → d` and the decoder mirrors it, both with linear outputs.
pub fn autoencoder_specs(
    ambient: usize,
    hidden: &[usize],
    latent_dim: usize,
    activation: super::network::Activation,
) -> Result<(MlpSpec, MlpSpec)> {
    let mut enc = vec![ambient];
    enc.extend_from_slice(hidden);
    enc.push(latent_dim);
    let mut dec: Vec<usize> = enc.clone();
    dec.reverse();
    Ok((
        MlpSpec::new(enc, activation, Head::Linear)?,
        MlpSpec::new(dec, activation, Head::Linear)?,
    ))
}

/// Trains a deterministic autoencoder with latent dimension `latent_dim`.
///
/// `latent_dim` must be below the ambient dimension, except for a purely
/// linear autoencoder (no hidden layers) where `latent_dim == ambient` is
/// accepted as the identity-capable case.
pub fn train_autoencoder(
    data: &Dataset,
    latent_dim: usize,
    hidden: &[usize],
    activation: super::network::Activation,
    cfg: &TrainConfig,
) -> Result<Autoencoder> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    let n = data.dim();
    let linear = hidden.is_empty();
    if latent_dim == 0 || latent_dim > n || (latent_dim == n && !linear) {
        return Err(Error::invalid(format!(
            "latent dimension {latent_dim} must be below the ambient dimension {n}"
        )));
    }
    let (enc_spec, dec_spec) = autoencoder_specs(n, hidden, latent_dim, activation)?;
    let mut encoder = enc_spec.build(cfg.seed)?;
    let mut decoder = dec_spec.build(cfg.seed.wrapping_add(1))?;
    let enc_slots = encoder.parameter_count();
    let (mut train_idx, test_idx) = data.split_indices(cfg.held_out_fraction, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xae);
    let mut sizes = param_sizes(&encoder);
    sizes.extend(param_sizes(&decoder));
    let mut opt = OptState::new(cfg, &sizes);

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let batch = data.batch(chunk);
            let x = tape.input(batch.clone());
            let mut z = encoder.record_with(&mut tape, x, Some(0), false)?;
            if cfg.latent_noise > 0.0 {
                let noise: Vec<f64> = (0..chunk.len() * latent_dim)
                    .map(|_| cfg.latent_noise * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let nz = tape.input(Tensor::from_raw(vec![chunk.len(), latent_dim], noise)?);
                z = tape.add(z, nz)?;
            }
            let recon = decoder.record_with(&mut tape, z, Some(enc_slots), false)?;
            let target = tape.input(batch);
            let diff = tape.sub(recon, target)?;
            let sq = tape.unary(diff, crate::autodiff::Unary::Square);
            let loss = tape.mean(sq);
            let value = tape.value(loss).data()[0];
            check_loss(value, epoch)?;
            epoch_loss += value * chunk.len() as f64;
            let adj = tape.backward(loss, &Tensor::scalar(1.0))?;
            opt.begin_step();
            encoder.update_parameters(|slot, p| {
                if let Some(g) = adj.param_grad(slot) {
                    opt.apply(slot, p, g);
                }
            });
            decoder.update_parameters(|slot, p| {
                if let Some(g) = adj.param_grad(enc_slots + slot) {
                    opt.apply(enc_slots + slot, p, g);
                }
            });
        }
        log::debug!(
            "autoencoder epoch {epoch}: loss {:.6}",
            epoch_loss / train_idx.len() as f64
        );
    }

    let mut ae = Autoencoder::trained(encoder, decoder)?;
    let report = AutoencoderReport {
        held_out_mse: reconstruction_mse(&ae, data, &test_idx)?,
        train_mse: reconstruction_mse(&ae, data, &train_idx)?,
        epochs: cfg.epochs,
        seed: cfg.seed,
    };
    if let Some(ceiling) = cfg.mse_ceiling {
        if !(report.held_out_mse <= ceiling) {
            return Err(Error::MseCeilingUnmet {
                mse: report.held_out_mse,
                ceiling,
            });
        }
    }
    ae.set_report(report);
    Ok(ae)
}
