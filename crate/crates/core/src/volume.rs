//! Depth-grid volume integration and relative intake.
//!
//! Each food pixel contributes a column `h · Δx²`, where `h` is the height of
//! the surface above the table plane and `Δx` is the pixel's footprint at the
//! surface. Under a pinhole model the footprint grows linearly with distance,
//! so a pixel width measured at one reference distance is rescaled per pixel:
//!
//! ```text
//! h_i  = table_distance − d_i          (clamped at 0)
//! Δx_i = reference_pixel_width · d_i / reference_distance
//! V    = Σ h_i · Δx_i²                 (cm³ = mL)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, LabelGrid, Mask};

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("grid shape mismatch: depth {depth:?}, mask {mask:?}")]
    ShapeMismatch { depth: (usize, usize), mask: (usize, usize) },
    #[error("non-positive depth {value} at ({row}, {col})")]
    NonPositiveDepth { row: usize, col: usize, value: f64 },
    #[error("reference volume for class {0} is zero")]
    ZeroReferenceVolume(usize),
    #[error("class {class} out of range for {classes} classes")]
    UnknownClass { class: usize, classes: usize },
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
}

/// Depth-camera calibration shared by the synthetic renderer and the
/// integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    /// cm per pixel at `reference_distance_cm`.
    pub reference_pixel_width_cm: f64,
    pub reference_distance_cm: f64,
    /// Camera to empty table plane.
    pub table_distance_cm: f64,
}

impl Default for CalibrationProfile {
    fn default() -> Self {
        Self {
            reference_pixel_width_cm: 0.35,
            reference_distance_cm: 40.0,
            table_distance_cm: 40.0,
        }
    }
}

impl CalibrationProfile {
    pub fn new(
        reference_pixel_width_cm: f64,
        reference_distance_cm: f64,
        table_distance_cm: f64,
    ) -> Result<Self, VolumeError> {
        let cal = Self { reference_pixel_width_cm, reference_distance_cm, table_distance_cm };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        let fields = [
            self.reference_pixel_width_cm,
            self.reference_distance_cm,
            self.table_distance_cm,
        ];
        if fields.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(VolumeError::InvalidCalibration("all fields must be positive".into()));
        }
        if self.reference_distance_cm > self.table_distance_cm {
            return Err(VolumeError::InvalidCalibration(
                "reference distance exceeds table distance".into(),
            ));
        }
        Ok(())
    }

    /// Pixel footprint width (cm) for a surface at `distance_cm`.
    pub fn pixel_width_at(&self, distance_cm: f64) -> f64 {
        self.reference_pixel_width_cm * distance_cm / self.reference_distance_cm
    }

    /// Volume (mL) of one pixel column at the given depth, and whether the
    /// height had to be clamped.
    pub fn column_volume(&self, depth_cm: f64) -> (f64, bool) {
        let h = self.table_distance_cm - depth_cm;
        let dx = self.pixel_width_at(depth_cm);
        if h < 0.0 {
            (0.0, true)
        } else {
            (h * dx * dx, false)
        }
    }
}

/// Result of integrating one mask.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Integrated {
    pub volume_ml: f64,
    pub pixel_count: usize,
    /// Mask pixels whose depth lay beyond the table plane.
    pub clamped_pixels: usize,
}

fn check_depth(depth: &Grid<f64>) -> Result<(), VolumeError> {
    for (row, col, &value) in depth.indexed() {
        if !(value > 0.0) {
            return Err(VolumeError::NonPositiveDepth { row, col, value });
        }
    }
    Ok(())
}

pub fn integrate_volume(
    depth: &Grid<f64>,
    mask: &Mask,
    cal: &CalibrationProfile,
) -> Result<Integrated, VolumeError> {
    if !depth.same_dims(mask) {
        return Err(VolumeError::ShapeMismatch { depth: depth.dims(), mask: mask.dims() });
    }
    check_depth(depth)?;
    let mut out = Integrated::default();
    for (&d, &m) in depth.iter().zip(mask.iter()) {
        if !m {
            continue;
        }
        let (v, clamped) = cal.column_volume(d);
        out.volume_ml += v;
        out.pixel_count += 1;
        out.clamped_pixels += clamped as usize;
    }
    Ok(out)
}

/// Per-class and whole-plate volumes for one plate.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeEstimate {
    pub per_class_ml: Vec<f64>,
    pub pixel_count: Vec<usize>,
    pub whole_plate_ml: f64,
    pub clamped_pixels: usize,
}

impl VolumeEstimate {
    pub fn class_volume(&self, class: usize) -> Result<f64, VolumeError> {
        self.per_class_ml
            .get(class)
            .copied()
            .ok_or(VolumeError::UnknownClass { class, classes: self.per_class_ml.len() })
    }
}

/// Integrates every class of a label grid. Pixels labelled with a class id
/// `>= n_classes` are an error.
pub fn estimate_volumes(
    depth: &Grid<f64>,
    labels: &LabelGrid,
    n_classes: usize,
    cal: &CalibrationProfile,
) -> Result<VolumeEstimate, VolumeError> {
    if !depth.same_dims(labels) {
        return Err(VolumeError::ShapeMismatch { depth: depth.dims(), mask: labels.dims() });
    }
    check_depth(depth)?;
    let mut per_class_ml = vec![0.0; n_classes];
    let mut pixel_count = vec![0; n_classes];
    let mut clamped_pixels = 0;
    for (&d, label) in depth.iter().zip(labels.iter()) {
        let Some(class) = *label else { continue };
        let class = class as usize;
        if class >= n_classes {
            return Err(VolumeError::UnknownClass { class, classes: n_classes });
        }
        let (v, clamped) = cal.column_volume(d);
        per_class_ml[class] += v;
        pixel_count[class] += 1;
        clamped_pixels += clamped as usize;
    }
    let whole_plate_ml = per_class_ml.iter().sum();
    Ok(VolumeEstimate { per_class_ml, pixel_count, whole_plate_ml, clamped_pixels })
}

/// Signed consumed fraction `(V_ref − V_after) / V_ref`; never clamped, so
/// over-estimated leftovers yield negative intake.
pub fn relative_intake(
    reference: &VolumeEstimate,
    after: &VolumeEstimate,
    class: usize,
) -> Result<f64, VolumeError> {
    let v_ref = reference.class_volume(class)?;
    let v_after = after.class_volume(class)?;
    if v_ref <= 0.0 {
        return Err(VolumeError::ZeroReferenceVolume(class));
    }
    Ok((v_ref - v_after) / v_ref)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_cal(width: f64) -> CalibrationProfile {
        CalibrationProfile::new(width, 40.0, 40.0).unwrap()
    }

    #[test]
    fn empty_mask_is_zero() {
        let depth = Grid::filled(8, 8, 39.0);
        let mask = Grid::filled(8, 8, false);
        let v = integrate_volume(&depth, &mask, &flat_cal(0.1)).unwrap();
        assert_eq!(v.volume_ml, 0.0);
        assert_eq!(v.pixel_count, 0);
    }

    #[test]
    fn uniform_slab_of_one_cm() {
        // Δx = 0.1 cm at the slab surface: reference distance equals the
        // surface distance.
        let cal = CalibrationProfile::new(0.1, 39.0, 40.0).unwrap();
        let depth = Grid::filled(10, 10, 39.0);
        let mask = Grid::filled(10, 10, true);
        let v = integrate_volume(&depth, &mask, &cal).unwrap();
        assert!((v.volume_ml - 1.0).abs() < 1e-12, "{}", v.volume_ml);
    }

    #[test]
    fn pixel_size_compensation_by_hand() {
        // Surface at half the table distance: footprint width halves, so each
        // column's area term is a quarter of the reference one.
        let cal = CalibrationProfile::new(0.2, 40.0, 40.0).unwrap();
        let (v, _) = cal.column_volume(20.0);
        assert!((v - 20.0 * 0.1 * 0.1).abs() < 1e-15);
        let (v_ref_area, _) = CalibrationProfile::new(0.2, 20.0, 40.0).unwrap().column_volume(20.0);
        assert!((v / v_ref_area - 0.25).abs() < 1e-15);
    }

    #[test]
    fn beyond_table_is_clamped_and_counted() {
        let cal = flat_cal(0.1);
        let depth = Grid::from_vec(1, 3, vec![40.5, 39.0, 41.0]).unwrap();
        let mask = Grid::filled(1, 3, true);
        let v = integrate_volume(&depth, &mask, &cal).unwrap();
        assert_eq!(v.clamped_pixels, 2);
        assert!(v.volume_ml > 0.0);
    }

    #[test]
    fn errors() {
        let cal = flat_cal(0.1);
        let depth = Grid::filled(2, 2, 30.0);
        let mask = Grid::filled(2, 3, true);
        assert!(matches!(
            integrate_volume(&depth, &mask, &cal),
            Err(VolumeError::ShapeMismatch { .. })
        ));
        let depth = Grid::from_vec(1, 2, vec![30.0, 0.0]).unwrap();
        let mask = Grid::filled(1, 2, false);
        assert!(matches!(
            integrate_volume(&depth, &mask, &cal),
            Err(VolumeError::NonPositiveDepth { col: 1, .. })
        ));
        assert!(CalibrationProfile::new(0.1, 50.0, 40.0).is_err());
        assert!(CalibrationProfile::new(0.0, 40.0, 40.0).is_err());
    }

    fn estimate(vols: &[f64]) -> VolumeEstimate {
        VolumeEstimate {
            per_class_ml: vols.to_vec(),
            pixel_count: vec![1; vols.len()],
            whole_plate_ml: vols.iter().sum(),
            clamped_pixels: 0,
        }
    }

    #[test]
    fn relative_intake_cases() {
        let r = estimate(&[200.0]);
        assert_eq!(relative_intake(&r, &estimate(&[50.0]), 0).unwrap(), 0.75);
        assert_eq!(relative_intake(&r, &estimate(&[200.0]), 0).unwrap(), 0.0);
        let over = relative_intake(&r, &estimate(&[210.0]), 0).unwrap();
        assert!((over + 0.05).abs() < 1e-15);
        assert_eq!(
            relative_intake(&estimate(&[0.0]), &estimate(&[0.0]), 0),
            Err(VolumeError::ZeroReferenceVolume(0))
        );
        assert!(relative_intake(&r, &r, 3).is_err());
    }

    #[test]
    fn per_class_partition_sums_to_whole() {
        let cal = flat_cal(0.3);
        let depth = Grid::from_fn(6, 6, |r, c| 37.0 + 0.1 * (r + c) as f64);
        let labels = Grid::from_fn(6, 6, |r, c| match (r + 2 * c) % 4 {
            0 => None,
            k => Some((k - 1) as u8),
        });
        let est = estimate_volumes(&depth, &labels, 3, &cal).unwrap();
        let mask = labels.map(|l| l.is_some());
        let whole = integrate_volume(&depth, &mask, &cal).unwrap().volume_ml;
        assert!((est.whole_plate_ml - whole).abs() <= 1e-9 * whole);
    }

    proptest! {
        #[test]
        fn disjoint_masks_add(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let depth = Grid::from_fn(12, 12, |_, _| rng.gen_range(35.0..40.5));
            let which: Vec<u8> = (0..144).map(|_| rng.gen_range(0..3)).collect();
            let a = Grid::from_fn(12, 12, |r, c| which[r * 12 + c] == 1);
            let b = Grid::from_fn(12, 12, |r, c| which[r * 12 + c] == 2);
            let ab = Grid::from_fn(12, 12, |r, c| which[r * 12 + c] != 0);
            let cal = flat_cal(0.25);
            let va = integrate_volume(&depth, &a, &cal).unwrap().volume_ml;
            let vb = integrate_volume(&depth, &b, &cal).unwrap().volume_ml;
            let vab = integrate_volume(&depth, &ab, &cal).unwrap().volume_ml;
            prop_assert!((va + vb - vab).abs() <= 1e-12 * vab.max(1e-12));
        }
    }
}
