use super::{DatasetError, RgbdPlate, Rgb};
use crate::volume::CalibrationProfile;

/// Depth at which one pixel column holds `target` mL, searched on
/// `[from, table]` where the column volume falls with depth.
fn depth_for_column_volume(cal: &CalibrationProfile, from: f64, target: f64) -> f64 {
    let table = cal.table_distance_cm;
    let mut lo = from.max(2.0 * table / 3.0);
    let mut hi = table;
    if cal.column_volume(lo).0 <= target {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cal.column_volume(mid).0 > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Removes `fraction` of one class's integrated volume, eating pixel columns
/// in column-major order. Whole columns drop to the table and turn into
/// background colored with the mean background color; the last column is
/// partially lowered so the remaining volume is exact. The class's true mass
/// scales by `1 − fraction`; `intake_level` is left unchanged.
pub fn simulate_consumption(
    plate: &RgbdPlate,
    class_id: usize,
    fraction: f64,
    cal: &CalibrationProfile,
) -> Result<RgbdPlate, DatasetError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DatasetError::InvalidPlate(format!("fraction {fraction} outside [0, 1]")));
    }
    if class_id >= plate.n_classes() {
        return Err(DatasetError::UnknownClass { class: class_id, classes: plate.n_classes() });
    }
    cal.validate().map_err(|e| DatasetError::InvalidPlate(e.to_string()))?;
    let labels = plate
        .class_labels()
        .ok_or_else(|| DatasetError::InvalidPlate("plate has no class labels".into()))?;
    let (h, w) = plate.dims();

    let mut sum = [0.0f64; 3];
    let mut n_bg = 0usize;
    for (px, m) in plate.color().iter().zip(plate.food_mask().iter()) {
        if !m {
            for (s, v) in sum.iter_mut().zip(px) {
                *s += *v as f64;
            }
            n_bg += 1;
        }
    }
    let background: Rgb = if n_bg == 0 {
        [0, 0, 0]
    } else {
        sum.map(|s| (s / n_bg as f64).round() as u8)
    };

    let mut order = Vec::new();
    for c in 0..w {
        for r in 0..h {
            if *labels.get(r, c) == Some(class_id as u8) {
                order.push((r, c));
            }
        }
    }
    let vols: Vec<f64> = order.iter().map(|&(r, c)| cal.column_volume(*plate.depth().get(r, c)).0).collect();
    let total: f64 = vols.iter().sum();
    let mut to_remove = fraction * total;
    let tol = 1e-12 * total;

    let (mut color, mut depth, mut mask, labels, mut masses, level) = plate.clone().into_parts();
    let mut labels = labels.expect("checked above");
    for (&(r, c), &v) in order.iter().zip(&vols) {
        if to_remove <= tol {
            break;
        }
        if fraction == 1.0 || v <= to_remove + tol {
            depth.set(r, c, cal.table_distance_cm);
            mask.set(r, c, false);
            labels.set(r, c, None);
            color.set(r, c, background);
            to_remove -= v;
        } else {
            let d = depth_for_column_volume(cal, *depth.get(r, c), v - to_remove);
            depth.set(r, c, d);
            to_remove = 0.0;
        }
    }
    masses[class_id] *= 1.0 - fraction;
    RgbdPlate::new(color, depth, mask, Some(labels), masses, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::volume::estimate_volumes;

    fn slab_plate() -> RgbdPlate {
        // 10×10 block of class 0 standing 1 cm above the table, one column of class 1.
        let labels = Grid::from_fn(12, 12, |r, c| match (r, c) {
            (1..=10, 1..=10) => Some(0u8),
            (_, 11) => Some(1u8),
            _ => None,
        });
        let depth = labels.map(|l| if l.is_some() { 39.0 } else { 40.0 });
        let color = labels.map(|l| match l {
            Some(0) => [200, 50, 50],
            Some(_) => [50, 200, 50],
            None => [230, 230, 230],
        });
        let mask = labels.map(|l| l.is_some());
        RgbdPlate::new(color, depth, mask, Some(labels), vec![100.0, 20.0], 0.0).unwrap()
    }

    #[test]
    fn quarter_of_uniform_slab() {
        let cal = CalibrationProfile::default();
        let plate = slab_plate();
        let before = estimate_volumes(plate.depth(), plate.class_labels().unwrap(), 2, &cal).unwrap();
        let after_plate = simulate_consumption(&plate, 0, 0.25, &cal).unwrap();
        let after = estimate_volumes(after_plate.depth(), after_plate.class_labels().unwrap(), 2, &cal).unwrap();
        let rel = (after.per_class_ml[0] - 0.75 * before.per_class_ml[0]).abs() / before.per_class_ml[0];
        assert!(rel < 1e-9, "{rel}");
        assert_eq!(after.per_class_ml[1], before.per_class_ml[1]);
        assert_eq!(after_plate.true_mass_g, vec![75.0, 20.0]);
        // 25 whole columns of 100 are gone: the first two columns and 5 pixels of the third.
        assert_eq!(after_plate.food_mask().count(), plate.food_mask().count() - 25);
        assert_eq!(*after_plate.color().get(1, 1), [230, 230, 230]);
        assert_eq!(*after_plate.class_labels().unwrap().get(1, 3), None);
    }

    #[test]
    fn edges() {
        let cal = CalibrationProfile::default();
        let plate = slab_plate();
        assert_eq!(simulate_consumption(&plate, 0, 0.0, &cal).unwrap(), plate);
        let gone = simulate_consumption(&plate, 0, 1.0, &cal).unwrap();
        assert!(gone.class_labels().unwrap().iter().all(|l| *l != Some(0)));
        assert!(matches!(
            simulate_consumption(&plate, 2, 0.5, &cal),
            Err(DatasetError::UnknownClass { class: 2, classes: 2 })
        ));
        assert!(simulate_consumption(&plate, 0, 1.5, &cal).is_err());
    }

    #[test]
    fn partial_column_is_exact() {
        let cal = CalibrationProfile::default();
        let d = depth_for_column_volume(&cal, 38.0, 0.05);
        assert!((cal.column_volume(d).0 - 0.05).abs() < 1e-12);
    }
}
