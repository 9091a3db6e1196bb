//! Image augmentation: flips, rotations and contrast changes applied to a
//! color image together with its mask and labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{RgbdPlate, Rgb};
use crate::grid::{Grid, LabelGrid, Mask};

/// A color image with its food mask and, optionally, class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingImage {
    pub color: Grid<Rgb>,
    pub mask: Mask,
    pub labels: Option<LabelGrid>,
}

impl TrainingImage {
    pub fn from_plate(plate: &RgbdPlate) -> Self {
        Self {
            color: plate.color().clone(),
            mask: plate.food_mask().clone(),
            labels: plate.class_labels().cloned(),
        }
    }

    fn remap(&self, height: usize, width: usize, src: impl Fn(usize, usize) -> Option<(usize, usize)>) -> Self {
        let color = Grid::from_fn(height, width, |r, c| src(r, c).map_or([0; 3], |(y, x)| *self.color.get(y, x)));
        let mask = Grid::from_fn(height, width, |r, c| src(r, c).is_some_and(|(y, x)| *self.mask.get(y, x)));
        let labels = self.labels.as_ref().map(|l| {
            Grid::from_fn(height, width, |r, c| src(r, c).and_then(|(y, x)| *l.get(y, x)))
        });
        Self { color, mask, labels }
    }

    pub fn flip_horizontal(&self) -> Self {
        let (h, w) = self.color.dims();
        self.remap(h, w, |r, c| Some((r, w - 1 - c)))
    }

    pub fn flip_vertical(&self) -> Self {
        let (h, w) = self.color.dims();
        self.remap(h, w, |r, c| Some((h - 1 - r, c)))
    }

    /// Rotates clockwise by `quarter_turns × 90°`.
    pub fn rotate90(&self, quarter_turns: usize) -> Self {
        let (h, w) = self.color.dims();
        match quarter_turns % 4 {
            0 => self.clone(),
            1 => self.remap(w, h, |r, c| Some((h - 1 - c, r))),
            2 => self.remap(h, w, |r, c| Some((h - 1 - r, w - 1 - c))),
            _ => self.remap(w, h, |r, c| Some((c, w - 1 - r))),
        }
    }

    /// Rotates about the image center by `degrees` with nearest-neighbor
    /// sampling; pixels whose source falls outside the frame become
    /// background with black color.
    pub fn rotate_free(&self, degrees: f64) -> Self {
        let (h, w) = self.color.dims();
        let (s, c) = degrees.to_radians().sin_cos();
        let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
        self.remap(h, w, |r, col| {
            let (y, x) = (r as f64 + 0.5 - cy, col as f64 + 0.5 - cx);
            // inverse rotation
            let sy = c * y - s * x + cy;
            let sx = s * y + c * x + cx;
            (sy >= 0.0 && sx >= 0.0 && sy < h as f64 && sx < w as f64)
                .then(|| (sy.floor() as usize, sx.floor() as usize))
        })
    }

    /// Scales each channel's deviation from its image mean by `scale`.
    pub fn adjust_contrast(&self, scale: f64) -> Self {
        let n = self.color.len().max(1) as f64;
        let mut mean = [0.0; 3];
        for px in self.color.iter() {
            for (m, v) in mean.iter_mut().zip(px) {
                *m += *v as f64 / n;
            }
        }
        let color = self.color.map(|px| {
            let mut out = [0u8; 3];
            for ch in 0..3 {
                out[ch] = (mean[ch] + scale * (px[ch] as f64 - mean[ch])).round().clamp(0.0, 255.0) as u8;
            }
            out
        });
        Self { color, mask: self.mask.clone(), labels: self.labels.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Number of images produced.
    pub count: usize,
    pub flips: bool,
    /// Quarter-turn rotations (half turns only for non-square images).
    pub rotate90: bool,
    /// Largest free rotation angle in degrees; 0 disables it.
    pub max_free_angle_deg: f64,
    pub contrast_min: f64,
    pub contrast_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            count: 300,
            flips: true,
            rotate90: true,
            max_free_angle_deg: 0.0,
            contrast_min: 0.7,
            contrast_max: 1.3,
        }
    }
}

/// Produces exactly `config.count` images, cycling through `base` and
/// applying independent random transforms to each.
pub fn build_training_corpus(base: &[TrainingImage], config: &AugmentConfig, seed: u64) -> Vec<TrainingImage> {
    if base.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..config.count)
        .map(|i| {
            let mut img = base[i % base.len()].clone();
            if config.flips {
                if rng.gen_bool(0.5) {
                    img = img.flip_horizontal();
                }
                if rng.gen_bool(0.5) {
                    img = img.flip_vertical();
                }
            }
            if config.rotate90 {
                let (h, w) = img.color.dims();
                let turns = if h == w { rng.gen_range(0..4) } else { 2 * rng.gen_range(0..2) };
                img = img.rotate90(turns);
            }
            if config.max_free_angle_deg > 0.0 {
                let a = config.max_free_angle_deg;
                img = img.rotate_free(rng.gen_range(-a..=a));
            }
            if config.contrast_max > config.contrast_min {
                img = img.adjust_contrast(rng.gen_range(config.contrast_min..=config.contrast_max));
            } else if config.contrast_min != 1.0 {
                img = img.adjust_contrast(config.contrast_min);
            }
            img
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrainingImage {
        let color = Grid::from_fn(4, 4, |r, c| [r as u8 * 40, c as u8 * 40, 7]);
        let labels = Grid::from_fn(4, 4, |r, c| (r > c).then_some(((r + c) % 2) as u8));
        TrainingImage { color, mask: labels.map(|l| l.is_some()), labels: Some(labels) }
    }

    #[test]
    fn flips_are_involutions() {
        let img = sample();
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_vertical().flip_vertical(), img);
        assert_ne!(img.flip_horizontal(), img);
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let img = sample();
        let mut r = img.clone();
        for _ in 0..4 {
            r = r.rotate90(1);
        }
        assert_eq!(r, img);
        assert_eq!(img.rotate90(1).rotate90(3), img);
        assert_eq!(img.rotate90(2), img.flip_horizontal().flip_vertical());
    }

    #[test]
    fn identity_config_leaves_images_alone() {
        let cfg = AugmentConfig {
            count: 3,
            flips: false,
            rotate90: false,
            max_free_angle_deg: 0.0,
            contrast_min: 1.0,
            contrast_max: 1.0,
        };
        let out = build_training_corpus(&[sample()], &cfg, 1);
        assert_eq!(out, vec![sample(); 3]);
    }

    #[test]
    fn corpus_has_requested_size() {
        let out = build_training_corpus(&[sample(), sample().flip_vertical()], &AugmentConfig::default(), 4);
        assert_eq!(out.len(), 300);
    }

    #[test]
    fn zero_angle_free_rotation_is_identity() {
        let img = sample();
        assert_eq!(img.rotate_free(0.0), img);
    }
}
