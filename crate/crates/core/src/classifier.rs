//! Per-meal classification heads: 1×1 convolutions over frozen extractor
//! features, trained with cross-entropy on food pixels only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autoencoder::{build_training_corpus, split_indices, AugmentConfig, FeatureExtractor, TrainingImage};
use crate::autoencoder::AutoencoderError;
use crate::dataset::{MealPlan, RgbdPlate};
use crate::grid::{Grid, LabelGrid, Mask};
use crate::nn::store::{self, NamedTensor};
use crate::nn::{
    masked_cross_entropy, run_training, Adam, EarlyStopRule, Layer, LayerSpec, NnError, Objective, Sequential,
    Tensor4,
};
use crate::nutrient::Texture;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("class {class} (`{name}`) has no labelled pixels in the reference plates")]
    MissingClassExample { class: usize, name: String },
    #[error("no reference plates with class labels")]
    NoReferencePlates,
    #[error("dimensions {found:?} do not match {expected:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("predicted and true food footprints differ in {pixels} pixels")]
    MaskDisagreement { pixels: usize },
    #[error("no food pixels to score")]
    NoFoodPixels,
    #[error("unknown meal `{0}`")]
    UnknownMeal(String),
    #[error("meal `{meal}` has no classes with texture {texture}")]
    EmptyAfterTextureFilter { meal: String, texture: Texture },
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("extractor weights changed during head training")]
    ExtractorModified,
    #[error("extractor checksum {found} does not match the head's {expected}")]
    ExtractorMismatch { expected: String, found: String },
    #[error(transparent)]
    Features(#[from] AutoencoderError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{path}: {message}")]
    Registry { path: PathBuf, message: String },
}

/// Per-pixel class ids (indices into the meal plan) with background where
/// the food mask is false.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub labels: LabelGrid,
    pub n_classes: usize,
}

impl LabelMask {
    pub fn new(labels: LabelGrid, n_classes: usize) -> Result<Self, ClassifierError> {
        if let Some(&Some(l)) = labels.iter().find(|l| l.is_some_and(|v| v as usize >= n_classes)) {
            return Err(ClassifierError::ClassOutOfRange { class: l as usize, classes: n_classes });
        }
        Ok(Self { labels, n_classes })
    }

    pub fn food_mask(&self) -> Mask {
        self.labels.map(|l| l.is_some())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for l in self.labels.iter().flatten() {
            counts[*l as usize] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    pub learning_rate: f64,
    pub min_delta: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub train_fraction: f64,
    /// Pixels per optimizer step.
    pub batch_pixels: usize,
    pub bias: bool,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            min_delta: 1e-5,
            patience: 5,
            max_epochs: 200,
            train_fraction: 0.7,
            batch_pixels: 4096,
            bias: true,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTraining {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub final_train_loss: f64,
    pub best_validation_loss: f64,
    /// Top-1 accuracy of the kept weights on held-out pixels.
    pub validation_accuracy: f64,
    pub seed: u64,
}

/// `n_c` 1×1 kernels over the extractor's features, plus optional biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MealHead {
    pub meal_id: String,
    /// Plan class index for each head output.
    pub class_indices: Vec<usize>,
    pub class_names: Vec<String>,
    pub class_textures: Vec<Option<Texture>>,
    /// Number of classes in the full meal plan.
    pub plan_classes: usize,
    /// Row-major `n_c × channels`.
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    pub channels: usize,
    pub extractor_checksum: String,
    pub texture: Option<Texture>,
    pub training: Option<HeadTraining>,
}

impl MealHead {
    pub fn n_classes(&self) -> usize {
        self.class_indices.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    fn logit(&self, j: usize, f: impl Fn(usize) -> f64) -> f64 {
        let row = &self.weights[j * self.channels..(j + 1) * self.channels];
        let mut z = self.bias.as_ref().map_or(0.0, |b| b[j]);
        for (ch, w) in row.iter().enumerate() {
            z += w * f(ch);
        }
        z
    }

    /// Head restricted to classes of `texture`.
    pub fn restrict(&self, texture: Texture) -> Result<Self, ClassifierError> {
        let keep: Vec<usize> = (0..self.n_classes()).filter(|&j| self.class_textures[j] == Some(texture)).collect();
        if keep.is_empty() {
            return Err(ClassifierError::EmptyAfterTextureFilter { meal: self.meal_id.clone(), texture });
        }
        let c = self.channels;
        Ok(Self {
            class_indices: keep.iter().map(|&j| self.class_indices[j]).collect(),
            class_names: keep.iter().map(|&j| self.class_names[j].clone()).collect(),
            class_textures: keep.iter().map(|&j| self.class_textures[j]).collect(),
            weights: keep.iter().flat_map(|&j| self.weights[j * c..(j + 1) * c].iter().copied()).collect(),
            bias: self.bias.as_ref().map(|b| keep.iter().map(|&j| b[j]).collect()),
            texture: Some(texture),
            ..self.clone()
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        let mut tensors = vec![NamedTensor::new("head.weight", vec![self.n_classes(), self.channels, 1, 1], self.weights.clone())];
        if let Some(b) = &self.bias {
            tensors.push(NamedTensor::new("head.bias", vec![b.len()], b.clone()));
        }
        let meta = HeadMeta {
            kind: "meal_head".into(),
            meal_id: self.meal_id.clone(),
            class_indices: self.class_indices.clone(),
            class_names: self.class_names.clone(),
            class_textures: self.class_textures.clone(),
            plan_classes: self.plan_classes,
            channels: self.channels,
            extractor_checksum: self.extractor_checksum.clone(),
            texture: self.texture,
            parameter_count: self.parameter_count(),
            training: self.training.clone(),
        };
        store::save_weights(path, &tensors, &meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let (mut tensors, meta): (Vec<NamedTensor>, HeadMeta) = store::load_weights(path)?;
        let format = |m: String| ClassifierError::Nn(NnError::Format(m));
        if meta.kind != "meal_head" {
            return Err(format(format!("expected meal head weights, found `{}`", meta.kind)));
        }
        let n = meta.class_indices.len();
        let bias = match tensors.len() {
            2 => Some(tensors.pop().unwrap().values),
            1 => None,
            k => return Err(format(format!("expected 1 or 2 tensors, found {k}"))),
        };
        let weights = tensors.pop().unwrap().values;
        if weights.len() != n * meta.channels || bias.as_ref().is_some_and(|b| b.len() != n) {
            return Err(format("head tensor sizes do not match the class count".into()));
        }
        Ok(Self {
            meal_id: meta.meal_id,
            class_indices: meta.class_indices,
            class_names: meta.class_names,
            class_textures: meta.class_textures,
            plan_classes: meta.plan_classes,
            weights,
            bias,
            channels: meta.channels,
            extractor_checksum: meta.extractor_checksum,
            texture: meta.texture,
            training: meta.training,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HeadMeta {
    kind: String,
    meal_id: String,
    class_indices: Vec<usize>,
    class_names: Vec<String>,
    class_textures: Vec<Option<Texture>>,
    plan_classes: usize,
    channels: usize,
    extractor_checksum: String,
    texture: Option<Texture>,
    parameter_count: usize,
    training: Option<HeadTraining>,
}

/// Food-pixel features as `[P, channels, 1, 1]` with head-index labels.
struct PixelSet {
    features: Vec<f64>,
    labels: Vec<u8>,
    channels: usize,
}

impl PixelSet {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn gather(&self, ids: &[usize]) -> Result<(Tensor4, Vec<Option<u8>>), NnError> {
        let c = self.channels;
        let data = ids.iter().flat_map(|&i| self.features[i * c..(i + 1) * c].iter().copied()).collect();
        let x = Tensor4::from_vec([ids.len(), c, 1, 1], data)?;
        Ok((x, ids.iter().map(|&i| Some(self.labels[i])).collect()))
    }
}

fn collect_pixels(
    extractor: &FeatureExtractor,
    images: &[&TrainingImage],
    to_head: &BTreeMap<u8, u8>,
) -> Result<PixelSet, ClassifierError> {
    let c = extractor.channels();
    let per_image: Vec<Result<(Vec<f64>, Vec<u8>), ClassifierError>> = images
        .par_iter()
        .map(|img| {
            let feats = extractor.encode(&img.color, &img.mask)?;
            let (h, w) = img.color.dims();
            let plane = h * w;
            let labels = img.labels.as_ref().expect("training images carry labels");
            let (mut f, mut l) = (Vec::new(), Vec::new());
            for (i, (&m, lab)) in img.mask.iter().zip(labels.iter()).enumerate() {
                let Some(&j) = lab.and_then(|k| to_head.get(&k)) else { continue };
                if m {
                    f.extend((0..c).map(|ch| feats.data()[ch * plane + i]));
                    l.push(j);
                }
            }
            Ok((f, l))
        })
        .collect();
    let mut set = PixelSet { features: Vec::new(), labels: Vec::new(), channels: c };
    for r in per_image {
        let (f, l) = r?;
        set.features.extend(f);
        set.labels.extend(l);
    }
    Ok(set)
}

struct HeadObjective {
    train: PixelSet,
    val: PixelSet,
    batch: usize,
    bias: bool,
    rng: ChaCha8Rng,
}

impl HeadObjective {
    fn accuracy(&self, model: &Sequential) -> Result<f64, NnError> {
        let ids: Vec<usize> = (0..self.val.len()).collect();
        let (x, labels) = self.val.gather(&ids)?;
        let y = model.forward(&x)?;
        let c = y.channels();
        let mut hit = 0;
        for (i, l) in labels.iter().enumerate() {
            let row = &y.data()[i * c..(i + 1) * c];
            let mut best = 0;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            hit += (Some(best as u8) == *l) as usize;
        }
        Ok(hit as f64 / labels.len() as f64)
    }
}

impl Objective for HeadObjective {
    type Model = Sequential;

    fn train_epoch(&mut self, model: &mut Sequential, optimizer: &mut Adam, _epoch: usize) -> Result<f64, NnError> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut total, mut steps) = (0.0, 0);
        for ids in order.chunks(self.batch) {
            let (x, labels) = self.train.gather(ids)?;
            let mask = vec![true; ids.len()];
            let cache = model.forward_cached(&x)?;
            let lg = masked_cross_entropy(cache.output(), &labels, &mask)?;
            let (_, mut grads) = model.backward(&cache, &lg.grad)?;
            if !self.bias {
                grads[1].fill(0.0);
            }
            optimizer.step(&mut model.params_mut(), &grads)?;
            total += lg.loss;
            steps += 1;
        }
        Ok(total / steps as f64)
    }

    fn validation_loss(&self, model: &Sequential) -> Result<f64, NnError> {
        let ids: Vec<usize> = (0..self.val.len()).collect();
        let (x, labels) = self.val.gather(&ids)?;
        let y = model.forward(&x)?;
        Ok(masked_cross_entropy(&y, &labels, &vec![true; ids.len()])?.loss)
    }
}

/// Trains a head for `plan` on augmented copies of the labelled reference
/// plates. Only classes passing the plan's texture filter get outputs.
pub fn train_meal_head(
    extractor: &FeatureExtractor,
    reference_plates: &[&RgbdPlate],
    plan: &MealPlan,
    config: &HeadConfig,
) -> Result<MealHead, ClassifierError> {
    let classes = plan.filtered_indices(plan.texture_filter);
    if classes.is_empty() {
        let texture = plan.texture_filter.expect("unfiltered plans are non-empty");
        return Err(ClassifierError::EmptyAfterTextureFilter { meal: plan.meal_id.clone(), texture });
    }
    let base: Vec<TrainingImage> = reference_plates
        .iter()
        .filter(|p| p.class_labels().is_some())
        .map(|p| TrainingImage::from_plate(p))
        .collect();
    if base.is_empty() {
        return Err(ClassifierError::NoReferencePlates);
    }
    for &k in &classes {
        let present = base.iter().any(|img| {
            img.labels.as_ref().unwrap().iter().zip(img.mask.iter()).any(|(l, &m)| m && *l == Some(k as u8))
        });
        if !present {
            return Err(ClassifierError::MissingClassExample { class: k, name: plan.classes[k].food_name.clone() });
        }
    }
    let to_head: BTreeMap<u8, u8> = classes.iter().enumerate().map(|(j, &k)| (k as u8, j as u8)).collect();

    let before = extractor.checksum();
    let corpus = build_training_corpus(&base, &config.augment, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let (train_ids, val_ids) = split_indices(corpus.len(), config.train_fraction, &mut rng);
    let pick = |ids: &[usize]| ids.iter().map(|&i| &corpus[i]).collect::<Vec<_>>();
    let train = collect_pixels(extractor, &pick(&train_ids), &to_head)?;
    let val = collect_pixels(extractor, &pick(&val_ids), &to_head)?;

    let channels = extractor.channels();
    let mut net = Sequential::build(channels, &[LayerSpec::conv1x1(classes.len())], &mut rng);
    if !config.bias {
        net.params_mut()[1].fill(0.0);
    }
    let mut objective = HeadObjective { train, val, batch: config.batch_pixels.max(1), bias: config.bias, rng };
    let mut adam = Adam::new(config.learning_rate);
    let rule = EarlyStopRule::new(config.min_delta, config.patience)?;
    let outcome = run_training(net, &mut objective, &mut adam, rule, config.max_epochs)?;
    if extractor.checksum() != before {
        return Err(ClassifierError::ExtractorModified);
    }

    let Layer::Conv(conv) = &outcome.best.layers[0] else { unreachable!("head is a single convolution") };
    let validation_accuracy = objective.accuracy(&outcome.best)?;
    Ok(MealHead {
        meal_id: plan.meal_id.clone(),
        class_names: classes.iter().map(|&k| plan.classes[k].food_name.clone()).collect(),
        class_textures: classes.iter().map(|&k| plan.classes[k].texture).collect(),
        class_indices: classes,
        plan_classes: plan.n_classes(),
        weights: conv.weight.data().to_vec(),
        bias: config.bias.then(|| conv.bias.clone()),
        channels,
        extractor_checksum: before,
        texture: plan.texture_filter,
        training: Some(HeadTraining {
            epochs_run: outcome.epochs_run(),
            best_epoch: outcome.best_epoch,
            final_train_loss: outcome.history.last().map_or(f64::NAN, |r| r.train_loss),
            best_validation_loss: outcome.best_validation_loss,
            validation_accuracy,
            seed: config.seed,
        }),
    })
}

/// Argmax class per food pixel; ties go to the lowest class index.
pub fn classify_pixels(
    extractor: &FeatureExtractor,
    head: &MealHead,
    color: &Grid<crate::dataset::Rgb>,
    mask: &Mask,
) -> Result<LabelMask, ClassifierError> {
    if extractor.checksum() != head.extractor_checksum {
        return Err(ClassifierError::ExtractorMismatch {
            expected: head.extractor_checksum.clone(),
            found: extractor.checksum(),
        });
    }
    if !color.same_dims(mask) {
        return Err(ClassifierError::ShapeMismatch { expected: color.dims(), found: mask.dims() });
    }
    let (h, w) = color.dims();
    if mask.count() == 0 {
        return LabelMask::new(Grid::filled(h, w, None), head.plan_classes);
    }
    let feats = extractor.encode(color, mask)?;
    let plane = h * w;
    let data = feats.data();
    let labels = Grid::from_fn(h, w, |r, c| {
        if !*mask.get(r, c) {
            return None;
        }
        let i = r * w + c;
        let mut best = (0, f64::NEG_INFINITY);
        for j in 0..head.n_classes() {
            let z = head.logit(j, |ch| data[ch * plane + i]);
            if z > best.1 {
                best = (j, z);
            }
        }
        Some(head.class_indices[best.0] as u8)
    });
    LabelMask::new(labels, head.plan_classes)
}

pub fn classify_plate(extractor: &FeatureExtractor, head: &MealHead, plate: &RgbdPlate) -> Result<LabelMask, ClassifierError> {
    classify_pixels(extractor, head, plate.color(), plate.food_mask())
}

/// Fraction of food pixels whose predicted class matches the truth. With
/// `intersect`, only pixels that are food in both are scored; otherwise the
/// footprints must agree.
pub fn top1_accuracy(predicted: &LabelGrid, truth: &LabelGrid, intersect: bool) -> Result<f64, ClassifierError> {
    if !predicted.same_dims(truth) {
        return Err(ClassifierError::ShapeMismatch { expected: truth.dims(), found: predicted.dims() });
    }
    let disagree = predicted.iter().zip(truth.iter()).filter(|(p, t)| p.is_some() != t.is_some()).count();
    if disagree > 0 && !intersect {
        return Err(ClassifierError::MaskDisagreement { pixels: disagree });
    }
    let (mut hit, mut total) = (0usize, 0usize);
    for (p, t) in predicted.iter().zip(truth.iter()) {
        if let (Some(p), Some(t)) = (p, t) {
            total += 1;
            hit += (p == t) as usize;
        }
    }
    if total == 0 {
        return Err(ClassifierError::NoFoodPixels);
    }
    Ok(hit as f64 / total as f64)
}

/// Sets every food pixel inside `region` to `class`; background stays.
pub fn relabel_region(mask: &LabelMask, region: &Mask, class: usize) -> Result<LabelMask, ClassifierError> {
    if class >= mask.n_classes {
        return Err(ClassifierError::ClassOutOfRange { class, classes: mask.n_classes });
    }
    if !mask.labels.same_dims(region) {
        return Err(ClassifierError::ShapeMismatch { expected: mask.labels.dims(), found: region.dims() });
    }
    let (h, w) = region.dims();
    let labels = Grid::from_fn(h, w, |r, c| {
        let l = *mask.labels.get(r, c);
        if l.is_some() && *region.get(r, c) {
            Some(class as u8)
        } else {
            l
        }
    });
    Ok(LabelMask { labels, n_classes: mask.n_classes })
}

/// Heads keyed by meal and optional texture.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeadRegistry {
    heads: BTreeMap<(String, Option<Texture>), MealHead>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegistryEntry {
    meal_id: String,
    texture: Option<Texture>,
    weights: PathBuf,
}

impl HeadRegistry {
    pub fn insert(&mut self, head: MealHead) {
        self.heads.insert((head.meal_id.clone(), head.texture), head);
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn heads(&self) -> impl Iterator<Item = &MealHead> {
        self.heads.values()
    }

    /// Writes every head into `dir` plus a `heads.json` index.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, ClassifierError> {
        let reg_err = |p: &Path, e: &dyn std::fmt::Display| ClassifierError::Registry { path: p.to_path_buf(), message: e.to_string() };
        std::fs::create_dir_all(dir).map_err(|e| reg_err(dir, &e))?;
        let mut entries = Vec::new();
        for ((meal, texture), head) in &self.heads {
            let file = match texture {
                Some(t) => format!("{meal}-{t}.head"),
                None => format!("{meal}.head"),
            };
            head.save(&dir.join(&file))?;
            entries.push(RegistryEntry { meal_id: meal.clone(), texture: *texture, weights: file.into() });
        }
        let index = dir.join("heads.json");
        let json = serde_json::to_string_pretty(&entries).map_err(|e| reg_err(&index, &e))?;
        std::fs::write(&index, json + "\n").map_err(|e| reg_err(&index, &e))?;
        Ok(index)
    }

    /// Reads an index written by [`HeadRegistry::save`]; weight paths are
    /// relative to the index file.
    pub fn load(index: &Path) -> Result<Self, ClassifierError> {
        let reg_err = |e: &dyn std::fmt::Display| ClassifierError::Registry { path: index.to_path_buf(), message: e.to_string() };
        let text = std::fs::read_to_string(index).map_err(|e| reg_err(&e))?;
        let entries: Vec<RegistryEntry> = serde_json::from_str(&text).map_err(|e| reg_err(&e))?;
        let base = index.parent().unwrap_or(Path::new("."));
        let mut reg = Self::default();
        for e in entries {
            let head = MealHead::load(&base.join(&e.weights))?;
            if head.meal_id != e.meal_id || head.texture != e.texture {
                return Err(reg_err(&format!("{} does not hold the head for `{}`", e.weights.display(), e.meal_id)));
            }
            reg.insert(head);
        }
        Ok(reg)
    }
}

/// The head for `meal_id` restricted to `texture`: an exact texture entry if
/// present, otherwise the full meal head with non-matching rows removed.
pub fn select_head(meal_id: &str, texture: Option<Texture>, registry: &HeadRegistry) -> Result<MealHead, ClassifierError> {
    if let Some(h) = registry.heads.get(&(meal_id.to_string(), texture)) {
        return Ok(h.clone());
    }
    let full = registry
        .heads
        .get(&(meal_id.to_string(), None))
        .ok_or_else(|| ClassifierError::UnknownMeal(meal_id.to_string()))?;
    match texture {
        Some(t) => full.restrict(t),
        None => Ok(full.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head(weights: Vec<f64>, bias: Option<Vec<f64>>, textures: Vec<Option<Texture>>) -> MealHead {
        let n = textures.len();
        MealHead {
            meal_id: "m".into(),
            class_indices: (0..n).collect(),
            class_names: (0..n).map(|k| format!("f{k}")).collect(),
            class_textures: textures,
            plan_classes: n,
            channels: weights.len() / n,
            weights,
            bias,
            extractor_checksum: String::new(),
            texture: None,
            training: None,
        }
    }

    #[test]
    fn parameter_count_with_and_without_bias() {
        let h = head(vec![0.0; 48], Some(vec![0.0; 3]), vec![None; 3]);
        assert_eq!(h.parameter_count(), 51);
        let h = head(vec![0.0; 48], None, vec![None; 3]);
        assert_eq!(h.parameter_count(), 48);
    }

    #[test]
    fn accuracy_arithmetic() {
        let truth: LabelGrid = Grid::from_fn(10, 20, |_, c| Some((c % 2) as u8));
        assert_eq!(top1_accuracy(&truth, &truth, false).unwrap(), 1.0);
        let wrong = truth.map(|l| l.map(|v| 1 - v));
        assert_eq!(top1_accuracy(&wrong, &truth, false).unwrap(), 0.0);
        let half = Grid::from_fn(10, 20, |r, c| Some(if r < 5 { (c % 2) as u8 } else { 1 - (c % 2) as u8 }));
        assert_eq!(top1_accuracy(&half, &truth, false).unwrap(), 0.5);
    }

    #[test]
    fn footprint_disagreement_needs_the_flag() {
        let truth: LabelGrid = Grid::from_fn(4, 4, |r, _| (r < 2).then_some(0));
        let pred: LabelGrid = Grid::from_fn(4, 4, |r, _| (r < 3).then_some(0));
        assert_eq!(top1_accuracy(&pred, &truth, false), Err(ClassifierError::MaskDisagreement { pixels: 4 }));
        assert_eq!(top1_accuracy(&pred, &truth, true).unwrap(), 1.0);
    }

    #[test]
    fn texture_restriction_and_registry_lookup() {
        let textures = vec![Some(Texture::Regular), Some(Texture::Minced), Some(Texture::Pureed), Some(Texture::Pureed)];
        let h = head((0..32).map(f64::from).collect(), Some(vec![1.0, 2.0, 3.0, 4.0]), textures);
        let mut reg = HeadRegistry::default();
        reg.insert(h.clone());
        let p = select_head("m", Some(Texture::Pureed), &reg).unwrap();
        assert_eq!(p.class_indices, vec![2, 3]);
        assert_eq!(p.weights, (16..32).map(f64::from).collect::<Vec<_>>());
        assert_eq!(p.bias, Some(vec![3.0, 4.0]));
        assert_eq!(select_head("m", None, &reg).unwrap(), h);
        assert!(matches!(select_head("x", None, &reg), Err(ClassifierError::UnknownMeal(_))));
        let mut only_regular = h.clone();
        only_regular.class_textures = vec![Some(Texture::Regular); 4];
        let mut reg2 = HeadRegistry::default();
        reg2.insert(only_regular);
        assert!(matches!(
            select_head("m", Some(Texture::Pureed), &reg2),
            Err(ClassifierError::EmptyAfterTextureFilter { .. })
        ));
    }

    #[test]
    fn relabel_keeps_background() {
        let labels: LabelGrid = Grid::from_fn(4, 4, |_, c| (c < 2).then_some(0));
        let m = LabelMask::new(labels, 2).unwrap();
        let region = Grid::filled(4, 4, true);
        let out = relabel_region(&m, &region, 1).unwrap();
        assert_eq!(out.class_counts(), vec![0, 8]);
        assert_eq!(out.food_mask(), m.food_mask());
        assert!(relabel_region(&m, &region, 2).is_err());
    }

    #[test]
    fn head_round_trip() {
        let h = head((0..32).map(f64::from).collect(), None, vec![Some(Texture::Minced), None]);
        let dir = tempfile::tempdir().unwrap();
        let mut reg = HeadRegistry::default();
        reg.insert(h.clone());
        let index = reg.save(dir.path()).unwrap();
        assert_eq!(HeadRegistry::load(&index).unwrap(), reg);
    }
}
