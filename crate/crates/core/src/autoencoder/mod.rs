//! Convolutional autoencoder trained on masked food images, spliced before
//! its final 1×1 convolution into a frozen per-pixel feature extractor.

mod augment;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use augment::{build_training_corpus, AugmentConfig, TrainingImage};

use crate::dataset::Rgb;
use crate::grid::{Grid, Mask};
use crate::nn::store::{self, NamedTensor};
use crate::nn::{
    masked_mse, run_training, Adam, EarlyStopRule, EpochRecord, Layer, LayerSpec, NnError, Objective,
    Sequential, Tensor4,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutoencoderError {
    #[error("corpus has {size} images, fewer than the batch size {batch}")]
    CorpusTooSmall { size: usize, batch: usize },
    #[error("corpus image {index} has an empty food mask")]
    EmptyMask { index: usize },
    #[error("image dimensions {found:?} differ from {expected:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("invalid autoencoder config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderConfig {
    /// Full reconstruction network; the extractor is every layer before the
    /// last, which must be a 1×1 convolution to 3 channels.
    pub layers: Vec<LayerSpec>,
    pub latent_channels: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub min_delta: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            layers: vec![
                LayerSpec::conv3x3(16),
                LayerSpec::Relu,
                LayerSpec::conv3x3(16),
                LayerSpec::Relu,
                LayerSpec::conv3x3(16),
                LayerSpec::Relu,
                LayerSpec::conv1x1(3),
            ],
            latent_channels: 16,
            learning_rate: 1e-4,
            batch_size: 32,
            min_delta: 1e-4,
            patience: 5,
            max_epochs: 200,
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

impl AutoencoderConfig {
    /// Checks the architecture against an `height × width` input.
    pub fn validate(&self, height: usize, width: usize) -> Result<(), AutoencoderError> {
        let bad = |m: String| Err(AutoencoderError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train_fraction {} outside (0, 1]", self.train_fraction));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        EarlyStopRule::new(self.min_delta, self.patience)?;
        match self.layers.last() {
            Some(LayerSpec::Conv { out_channels: 3, kernel: 1, .. }) => {}
            _ => return bad("last layer must be a 1x1 convolution to 3 channels".into()),
        }
        let mut shape = (3, height, width);
        for (i, spec) in self.layers.iter().enumerate() {
            if i == self.layers.len() - 1 && shape != (self.latent_channels, height, width) {
                return bad(format!(
                    "splice activation is {shape:?}, expected {:?}",
                    (self.latent_channels, height, width)
                ));
            }
            shape = spec.output_shape(shape.0, shape.1, shape.2)?;
        }
        if shape != (3, height, width) {
            return bad(format!("output {shape:?} does not match input {:?}", (3, height, width)));
        }
        Ok(())
    }

    pub fn splice_index(&self) -> usize {
        self.layers.len() - 1
    }
}

/// Network input for one image: color scaled to [0, 1] and zeroed outside
/// the food mask, as a `[1, 3, H, W]` tensor.
pub fn masked_input(color: &Grid<Rgb>, mask: &Mask) -> Result<Tensor4, AutoencoderError> {
    if !color.same_dims(mask) {
        return Err(AutoencoderError::ShapeMismatch { expected: color.dims(), found: mask.dims() });
    }
    let (h, w) = color.dims();
    let mut data = vec![0.0; 3 * h * w];
    for (i, (px, &m)) in color.iter().zip(mask.iter()).enumerate() {
        if m {
            for ch in 0..3 {
                data[ch * h * w + i] = px[ch] as f64 / 255.0;
            }
        }
    }
    Ok(Tensor4::from_vec([1, 3, h, w], data)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Hash of the training images and masks.
    pub corpus_id: String,
    pub seed: u64,
    /// Epoch whose weights were kept.
    pub stop_epoch: usize,
}

/// Frozen layers up to the splice point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    net: Sequential,
    channels: usize,
    provenance: Provenance,
}

impl FeatureExtractor {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn network(&self) -> &Sequential {
        &self.net
    }

    /// `[1, channels, H, W]` features of the masked image.
    pub fn encode(&self, color: &Grid<Rgb>, mask: &Mask) -> Result<Tensor4, AutoencoderError> {
        self.encode_tensor(&masked_input(color, mask)?)
    }

    pub fn encode_tensor(&self, input: &Tensor4) -> Result<Tensor4, AutoencoderError> {
        Ok(self.net.forward(input)?)
    }

    pub fn checksum(&self) -> String {
        net_checksum(&self.net)
    }
}

fn param_names(net: &Sequential) -> Vec<String> {
    let mut names = Vec::new();
    for (i, layer) in net.layers.iter().enumerate() {
        if matches!(layer, Layer::Conv(_)) {
            names.push(format!("layer{i}.weight"));
            names.push(format!("layer{i}.bias"));
        }
    }
    names
}

pub(crate) fn net_checksum(net: &Sequential) -> String {
    let names = param_names(net);
    store::checksum(names.iter().map(String::as_str).zip(net.params()))
}

/// The full reconstruction network with its training record.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub net: Sequential,
    pub config: AutoencoderConfig,
    pub provenance: Provenance,
    pub best_validation_loss: f64,
    pub history: Vec<EpochRecord>,
}

impl Autoencoder {
    pub fn extractor(&self) -> FeatureExtractor {
        let splice = self.config.splice_index();
        FeatureExtractor {
            net: Sequential { layers: self.net.layers[..splice].to_vec() },
            channels: self.config.latent_channels,
            provenance: self.provenance.clone(),
        }
    }

    pub fn reconstruct(&self, color: &Grid<Rgb>, mask: &Mask) -> Result<Tensor4, AutoencoderError> {
        Ok(self.net.forward(&masked_input(color, mask)?)?)
    }

    /// Masked MSE of the reconstruction of one image.
    pub fn reconstruction_error(&self, color: &Grid<Rgb>, mask: &Mask) -> Result<f64, AutoencoderError> {
        let x = masked_input(color, mask)?;
        let y = self.net.forward(&x)?;
        Ok(masked_mse(&y, &x, mask.as_slice())?.loss)
    }

    pub fn save(&self, path: &Path) -> Result<(), AutoencoderError> {
        let names = param_names(&self.net);
        let tensors: Vec<NamedTensor> = names
            .into_iter()
            .zip(self.net.layers.iter().filter_map(|l| match l {
                Layer::Conv(c) => Some(c),
                _ => None,
            }).flat_map(|c| {
                [(c.weight.shape().to_vec(), c.weight.data().to_vec()), (vec![c.bias.len()], c.bias.clone())]
            }))
            .map(|(name, (shape, values))| NamedTensor::new(name, shape, values))
            .collect();
        let meta = AutoencoderMeta {
            kind: "autoencoder".into(),
            config: self.config.clone(),
            provenance: self.provenance.clone(),
            best_validation_loss: self.best_validation_loss,
            history: self.history.clone(),
            adam: AdamMeta::default(),
        };
        store::save_weights(path, &tensors, &meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AutoencoderError> {
        let (tensors, meta): (Vec<NamedTensor>, AutoencoderMeta) = store::load_weights(path)?;
        if meta.kind != "autoencoder" {
            return Err(NnError::Format(format!("expected autoencoder weights, found `{}`", meta.kind)).into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Sequential::build(3, &meta.config.layers, &mut rng);
        let names = param_names(&net);
        if tensors.len() != names.len() {
            return Err(NnError::Format(format!("expected {} tensors, found {}", names.len(), tensors.len())).into());
        }
        for ((slot, name), t) in net.params_mut().into_iter().zip(&names).zip(&tensors) {
            if &t.name != name || t.values.len() != slot.len() {
                return Err(NnError::Format(format!("tensor `{}` does not fit `{name}`", t.name)).into());
            }
            slot.copy_from_slice(&t.values);
        }
        Ok(Self {
            net,
            config: meta.config,
            provenance: meta.provenance,
            best_validation_loss: meta.best_validation_loss,
            history: meta.history,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdamMeta {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Default for AdamMeta {
    fn default() -> Self {
        let a = Adam::new(1.0);
        Self { beta1: a.beta1, beta2: a.beta2, epsilon: a.epsilon }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AutoencoderMeta {
    kind: String,
    config: AutoencoderConfig,
    provenance: Provenance,
    best_validation_loss: f64,
    history: Vec<EpochRecord>,
    adam: AdamMeta,
}

pub fn corpus_id(corpus: &[TrainingImage]) -> String {
    let mut h = Sha256::new();
    for img in corpus {
        let (rows, cols) = img.color.dims();
        h.update((rows as u64).to_le_bytes());
        h.update((cols as u64).to_le_bytes());
        for px in img.color.iter() {
            h.update(px);
        }
        h.update(img.mask.iter().map(|&m| m as u8).collect::<Vec<_>>());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Seeded split of `n` indices into training and validation parts. An empty
/// validation part falls back to the training indices.
pub fn split_indices(n: usize, train_fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n);
    let val = idx.split_off(n_train);
    if val.is_empty() {
        (idx.clone(), idx)
    } else {
        (idx, val)
    }
}

struct Reconstruction {
    inputs: Vec<Tensor4>,
    masks: Vec<Vec<bool>>,
    train: Vec<usize>,
    val: Vec<usize>,
    batch: usize,
    rng: ChaCha8Rng,
}

impl Reconstruction {
    fn batch_loss(&self, model: &Sequential, ids: &[usize]) -> Result<(Tensor4, Vec<bool>, crate::nn::ForwardCache), NnError> {
        let x = Tensor4::stack(&ids.iter().map(|&i| &self.inputs[i]).collect::<Vec<_>>())?;
        let mask: Vec<bool> = ids.iter().flat_map(|&i| self.masks[i].iter().copied()).collect();
        let cache = model.forward_cached(&x)?;
        Ok((x, mask, cache))
    }
}

impl Objective for Reconstruction {
    type Model = Sequential;

    fn train_epoch(&mut self, model: &mut Sequential, optimizer: &mut Adam, _epoch: usize) -> Result<f64, NnError> {
        let mut order = self.train.clone();
        order.shuffle(&mut self.rng);
        let (mut total, mut batches) = (0.0, 0);
        for ids in order.chunks(self.batch) {
            let (x, mask, cache) = self.batch_loss(model, ids)?;
            let lg = masked_mse(cache.output(), &x, &mask)?;
            let (_, grads) = model.backward(&cache, &lg.grad)?;
            optimizer.step(&mut model.params_mut(), &grads)?;
            total += lg.loss;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    fn validation_loss(&self, model: &Sequential) -> Result<f64, NnError> {
        // mean over all selected values of the split
        let (mut sum, mut count) = (0.0, 0usize);
        for ids in self.val.chunks(self.batch) {
            let x = Tensor4::stack(&ids.iter().map(|&i| &self.inputs[i]).collect::<Vec<_>>())?;
            let mask: Vec<bool> = ids.iter().flat_map(|&i| self.masks[i].iter().copied()).collect();
            let y = model.forward(&x)?;
            let n = mask.iter().filter(|&&m| m).count() * x.channels();
            sum += masked_mse(&y, &x, &mask)?.loss * n as f64;
            count += n;
        }
        Ok(sum / count as f64)
    }
}

/// Masked-MSE training of the reconstruction network on `corpus`.
pub fn train_autoencoder(corpus: &[TrainingImage], config: &AutoencoderConfig) -> Result<Autoencoder, AutoencoderError> {
    if corpus.len() < config.batch_size || corpus.is_empty() {
        return Err(AutoencoderError::CorpusTooSmall { size: corpus.len(), batch: config.batch_size });
    }
    let dims = corpus[0].color.dims();
    config.validate(dims.0, dims.1)?;
    let mut inputs = Vec::with_capacity(corpus.len());
    let mut masks = Vec::with_capacity(corpus.len());
    for (index, img) in corpus.iter().enumerate() {
        if img.color.dims() != dims {
            return Err(AutoencoderError::ShapeMismatch { expected: dims, found: img.color.dims() });
        }
        if img.mask.count() == 0 {
            return Err(AutoencoderError::EmptyMask { index });
        }
        inputs.push(masked_input(&img.color, &img.mask)?);
        masks.push(img.mask.as_slice().to_vec());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net = Sequential::build(3, &config.layers, &mut rng);
    let (train, val) = split_indices(corpus.len(), config.train_fraction, &mut rng);
    let mut objective = Reconstruction { inputs, masks, train, val, batch: config.batch_size, rng };
    let mut adam = Adam::new(config.learning_rate);
    let rule = EarlyStopRule::new(config.min_delta, config.patience)?;
    let outcome = run_training(net, &mut objective, &mut adam, rule, config.max_epochs)?;
    Ok(Autoencoder {
        net: outcome.best,
        config: config.clone(),
        provenance: Provenance { corpus_id: corpus_id(corpus), seed: config.seed, stop_epoch: outcome.best_epoch },
        best_validation_loss: outcome.best_validation_loss,
        history: outcome.history,
    })
}
