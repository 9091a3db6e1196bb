//! RGB-D plate data: the plate and series types, a synthetic generator with
//! ground truth, simulated consumption, and the on-disk manifest format.

mod consume;
mod generate;
mod manifest;
mod plan;
mod png_io;
pub mod shapes;

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, LabelGrid, Mask};
use crate::nutrient::{PortionSpec, Texture};

pub use consume::simulate_consumption;
pub use generate::{
    generate_plate_series, Appearance, ClassGeometry, GenerateOptions, Pattern, PlateLayout,
};
pub use manifest::{
    load_manifest, load_series, read_manifest_records, write_manifest, ManifestRecord,
    SeriesRecords,
};
pub use plan::{read_plan_file, MealDesign, PlanFile};
pub use png_io::{read_depth_png, read_labels_png, read_mask_png, read_rgb_png};
pub use png_io::{write_depth_png, write_labels_png, write_mask_png, write_rgb_png};
pub use shapes::{PlacedShape, ShapeKind};

pub type Rgb = [u8; 3];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{file}: dimensions {found:?} do not match {expected:?}")]
    DimensionMismatch { file: PathBuf, expected: (usize, usize), found: (usize, usize) },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: {message}")]
    Image { file: PathBuf, message: String },
    #[error("invalid plate: {0}")]
    InvalidPlate(String),
    #[error("invalid series `{series}`: {message}")]
    InvalidSeries { series: String, message: String },
    #[error("invalid meal plan: {0}")]
    InvalidPlan(String),
    #[error("cannot place {classes} food footprints disjointly on the plate for meal `{meal}`")]
    OverlapInfeasible { meal: String, classes: usize },
    #[error("class {class} not present (plate has {classes} classes)")]
    UnknownClass { class: usize, classes: usize },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl DatasetError {
    /// The file this error is about, when there is one.
    pub fn path(&self) -> Option<&std::path::Path> {
        match self {
            DatasetError::Parse { path, .. } | DatasetError::Io { path, .. } => Some(path),
            DatasetError::DimensionMismatch { file, .. } | DatasetError::Image { file, .. } => {
                Some(file)
            }
            DatasetError::MissingFile(p) => Some(p),
            _ => None,
        }
    }
}

/// One top-down capture: co-registered color, depth (camera-to-surface
/// distance in cm, smaller is taller), food mask, optional per-pixel class
/// labels, and ground-truth mass per class.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdPlate {
    color: Grid<Rgb>,
    depth: Grid<f64>,
    food_mask: Mask,
    class_labels: Option<LabelGrid>,
    pub true_mass_g: Vec<f64>,
    /// Fraction of the reference portion consumed (0 for the reference).
    pub intake_level: f64,
}

impl RgbdPlate {
    pub fn new(
        color: Grid<Rgb>,
        depth: Grid<f64>,
        food_mask: Mask,
        class_labels: Option<LabelGrid>,
        true_mass_g: Vec<f64>,
        intake_level: f64,
    ) -> Result<Self, DatasetError> {
        let dims = color.dims();
        if depth.dims() != dims || food_mask.dims() != dims {
            return Err(DatasetError::InvalidPlate(format!(
                "grid dimensions differ: color {:?}, depth {:?}, mask {:?}",
                dims,
                depth.dims(),
                food_mask.dims()
            )));
        }
        if let Some((r, c, d)) = depth.indexed().find(|(_, _, d)| !(**d > 0.0 && d.is_finite())) {
            return Err(DatasetError::InvalidPlate(format!("depth {d} at ({r}, {c}) is not positive")));
        }
        if let Some(labels) = &class_labels {
            if labels.dims() != dims {
                return Err(DatasetError::InvalidPlate(format!(
                    "label grid {:?} vs color {:?}",
                    labels.dims(),
                    dims
                )));
            }
            if let Some((r, c, _)) = labels
                .indexed()
                .find(|(r, c, l)| l.is_some() != *food_mask.get(*r, *c))
            {
                return Err(DatasetError::InvalidPlate(format!(
                    "labels and food mask disagree at ({r}, {c})"
                )));
            }
        }
        if true_mass_g.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(DatasetError::InvalidPlate("masses must be finite and non-negative".into()));
        }
        Ok(Self { color, depth, food_mask, class_labels, true_mass_g, intake_level })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.color.dims()
    }

    pub fn color(&self) -> &Grid<Rgb> {
        &self.color
    }

    pub fn depth(&self) -> &Grid<f64> {
        &self.depth
    }

    pub fn food_mask(&self) -> &Mask {
        &self.food_mask
    }

    pub fn class_labels(&self) -> Option<&LabelGrid> {
        self.class_labels.as_ref()
    }

    pub fn n_classes(&self) -> usize {
        self.true_mass_g.len()
    }

    /// Replaces the depth grid (same dimensions, positive values).
    pub fn with_depth(mut self, depth: Grid<f64>) -> Result<Self, DatasetError> {
        if depth.dims() != self.dims() {
            return Err(DatasetError::InvalidPlate("depth dimensions changed".into()));
        }
        self.depth = depth;
        Self::new(
            self.color,
            self.depth,
            self.food_mask,
            self.class_labels,
            self.true_mass_g,
            self.intake_level,
        )
    }

    pub(crate) fn into_parts(self) -> (Grid<Rgb>, Grid<f64>, Mask, Option<LabelGrid>, Vec<f64>, f64) {
        (
            self.color,
            self.depth,
            self.food_mask,
            self.class_labels,
            self.true_mass_g,
            self.intake_level,
        )
    }
}

/// Plates of one served sample, reference (intake 0) first.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateSeries {
    pub series_id: String,
    pub meal_id: String,
    pub plates: Vec<RgbdPlate>,
}

impl PlateSeries {
    pub fn new(
        series_id: impl Into<String>,
        meal_id: impl Into<String>,
        plates: Vec<RgbdPlate>,
    ) -> Result<Self, DatasetError> {
        let series_id = series_id.into();
        let invalid = |message: String| DatasetError::InvalidSeries {
            series: series_id.clone(),
            message,
        };
        let first = plates.first().ok_or_else(|| invalid("no plates".into()))?;
        if first.intake_level != 0.0 {
            return Err(invalid(format!("reference intake level is {}", first.intake_level)));
        }
        let n = first.n_classes();
        if plates.iter().any(|p| p.n_classes() != n) {
            return Err(invalid("plates disagree on class count".into()));
        }
        for w in plates.windows(2) {
            if w[0].dims() != w[1].dims() {
                return Err(invalid("plates have different dimensions".into()));
            }
            for k in 0..n {
                if w[1].true_mass_g[k] > w[0].true_mass_g[k] * (1.0 + 1e-12) + 1e-12 {
                    return Err(invalid(format!("class {k} mass increases along the series")));
                }
            }
        }
        Ok(Self { series_id, meal_id: meal_id.into(), plates })
    }

    pub fn reference(&self) -> &RgbdPlate {
        &self.plates[0]
    }
}

/// The a-priori menu for one meal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MealPlan {
    pub meal_id: String,
    pub classes: Vec<PortionSpec>,
    #[serde(default)]
    pub texture_filter: Option<Texture>,
    /// Dataset family used for report subtotals.
    #[serde(default)]
    pub group: Option<String>,
}

impl MealPlan {
    pub fn new(meal_id: impl Into<String>, classes: Vec<PortionSpec>) -> Result<Self, DatasetError> {
        let plan = Self { meal_id: meal_id.into(), classes, texture_filter: None, group: None };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.classes.is_empty() {
            return Err(DatasetError::InvalidPlan(format!("meal `{}` has no classes", self.meal_id)));
        }
        let mut seen = HashSet::new();
        for c in &self.classes {
            if !seen.insert(c.food_name.as_str()) {
                return Err(DatasetError::InvalidPlan(format!(
                    "meal `{}` lists `{}` twice",
                    self.meal_id, c.food_name
                )));
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Indices of classes matching `texture` (all classes for `None`).
    pub fn filtered_indices(&self, texture: Option<Texture>) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| texture.map_or(true, |t| c.texture == Some(t)))
            .map(|(i, _)| i)
            .collect()
    }
}
