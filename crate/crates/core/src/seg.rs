//! Food masks: IOU scoring and a color-threshold baseline segmenter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Rgb;
use crate::grid::{Grid, Mask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegError {
    #[error("mask dimensions differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
}

/// `|A∩B| / |A∪B|`; 1 when both masks are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64, SegError> {
    if !a.same_dims(b) {
        return Err(SegError::ShapeMismatch { a: a.dims(), b: b.dims() });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b.iter()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Circular plate region in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateRegion {
    pub center_row: f64,
    pub center_col: f64,
    pub radius_px: f64,
}

impl PlateRegion {
    /// A circle centered on the image.
    pub fn centered(height: usize, width: usize, radius_px: f64) -> Self {
        Self { center_row: height as f64 / 2.0, center_col: width as f64 / 2.0, radius_px }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        let dr = row as f64 + 0.5 - self.center_row;
        let dc = col as f64 + 0.5 - self.center_col;
        dr * dr + dc * dc <= self.radius_px * self.radius_px
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineParams {
    /// Euclidean RGB distance from the plate color above which a pixel is food.
    pub threshold: f64,
    pub open_radius: usize,
    pub close_radius: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { threshold: 40.0, open_radius: 1, close_radius: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegMethod {
    GroundTruth,
    Baseline,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegDiagnostic {
    EmptyPrediction,
    /// IOU against truth below 0.5.
    LowIou,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub mask: Mask,
    pub iou: Option<f64>,
    pub method: SegMethod,
    pub diagnostics: Vec<SegDiagnostic>,
}

impl SegmentationResult {
    /// Scores `mask` against `truth` when given and records diagnostics.
    pub fn new(mask: Mask, truth: Option<&Mask>, method: SegMethod) -> Result<Self, SegError> {
        let iou = truth.map(|t| iou(&mask, t)).transpose()?;
        let mut diagnostics = Vec::new();
        if mask.count() == 0 {
            diagnostics.push(SegDiagnostic::EmptyPrediction);
        }
        if iou.is_some_and(|v| v < 0.5) {
            diagnostics.push(SegDiagnostic::LowIou);
        }
        Ok(Self { mask, iou, method, diagnostics })
    }
}

fn median(values: &mut [u8]) -> u8 {
    values.sort_unstable();
    values[values.len() / 2]
}

/// Per-channel median color inside the plate region.
pub fn plate_color(color: &Grid<Rgb>, region: &PlateRegion) -> Option<Rgb> {
    let mut channels: [Vec<u8>; 3] = Default::default();
    for (r, c, px) in color.indexed() {
        if region.contains(r, c) {
            for (ch, v) in channels.iter_mut().zip(px) {
                ch.push(*v);
            }
        }
    }
    if channels[0].is_empty() {
        return None;
    }
    Some([median(&mut channels[0]), median(&mut channels[1]), median(&mut channels[2])])
}

fn disc_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r * r {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Disc erosion (`erode = true`) or dilation; pixels outside the image are
/// ignored.
fn morph(mask: &Mask, radius: usize, erode: bool) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let offsets = disc_offsets(radius);
    let (h, w) = mask.dims();
    Grid::from_fn(h, w, |r, c| {
        let mut neighbors = offsets.iter().filter_map(|&(dr, dc)| {
            let (rr, cc) = (r as isize + dr, c as isize + dc);
            (rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w)
                .then(|| *mask.get(rr as usize, cc as usize))
        });
        if erode {
            neighbors.all(|v| v)
        } else {
            neighbors.any(|v| v)
        }
    })
}

pub fn open(mask: &Mask, radius: usize) -> Mask {
    morph(&morph(mask, radius, true), radius, false)
}

pub fn close(mask: &Mask, radius: usize) -> Mask {
    morph(&morph(mask, radius, false), radius, true)
}

/// Pixels inside the plate that differ from the plate's median color by more
/// than the threshold, cleaned by opening then closing. Restricted to the
/// plate region throughout.
pub fn baseline_segment(color: &Grid<Rgb>, region: &PlateRegion, params: &BaselineParams) -> Mask {
    let (h, w) = color.dims();
    let Some(bg) = plate_color(color, region) else {
        return Grid::filled(h, w, false);
    };
    let raw = Grid::from_fn(h, w, |r, c| {
        if !region.contains(r, c) {
            return false;
        }
        let px = color.get(r, c);
        let d2: f64 = px.iter().zip(bg).map(|(a, b)| (*a as f64 - b as f64).powi(2)).sum();
        d2.sqrt() > params.threshold
    });
    let cleaned = close(&open(&raw, params.open_radius), params.close_radius);
    Grid::from_fn(h, w, |r, c| *cleaned.get(r, c) && region.contains(r, c))
}
