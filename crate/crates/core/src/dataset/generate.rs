//! Synthetic RGB-D plates with exact ground truth.
//!
//! Foods are analytic height profiles on disjoint circular footprints placed
//! on a flat plate. Pixel `(r, c)` looks at table point
//! `x_img · w_ref · D / d_ref` and reports the food top there; see
//! [`PlacedShape`] for the matching volume model.
//!
//! Consumption removes food from one side of each footprint with a straight
//! cut placed so that exactly the requested fraction of the true volume is
//! gone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::shapes::{radius_for_volume, PlacedShape, ShapeKind};
use super::{DatasetError, MealPlan, PlateSeries, RgbdPlate, Rgb};
use crate::grid::Grid;
use crate::volume::CalibrationProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    Plain,
    Speckle { amplitude: f64 },
    Stripes { period_px: usize, amplitude: f64 },
    Checker { period_px: usize, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub base: Rgb,
    pub pattern: Pattern,
}

impl Appearance {
    /// Palette entry for class `k`; hues are spaced to stay distinguishable
    /// from each other and from the plate.
    pub fn palette(k: usize) -> Self {
        const BASES: [Rgb; 8] = [
            [205, 60, 45],
            [240, 200, 70],
            [110, 70, 40],
            [70, 150, 60],
            [150, 90, 170],
            [235, 135, 50],
            [60, 95, 165],
            [175, 155, 115],
        ];
        let pattern = match k % 3 {
            0 => Pattern::Plain,
            1 => Pattern::Speckle { amplitude: 18.0 },
            _ => Pattern::Stripes { period_px: 4, amplitude: 14.0 },
        };
        Self { base: BASES[k % BASES.len()], pattern }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassGeometry {
    pub shape: ShapeKind,
    #[serde(default)]
    pub appearance: Option<Appearance>,
}

impl ClassGeometry {
    pub fn new(shape: ShapeKind) -> Self {
        Self { shape, appearance: None }
    }
}

pub const PLATE_COLOR: Rgb = [236, 234, 228];
pub const TABLE_COLOR: Rgb = [120, 86, 58];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub height: usize,
    pub width: usize,
    pub calibration: CalibrationProfile,
    pub plate_radius_cm: f64,
    /// Zero-mean Gaussian depth noise, cm.
    pub noise_sigma_cm: f64,
    /// Half-width of uniform per-channel color noise.
    pub color_noise: f64,
    pub placement_attempts: usize,
    /// Subsamples per pixel side when averaging food columns.
    pub supersample: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            height: 80,
            width: 80,
            calibration: CalibrationProfile::default(),
            plate_radius_cm: 13.0,
            noise_sigma_cm: 0.1,
            color_noise: 8.0,
            placement_attempts: 4000,
            supersample: 6,
        }
    }
}

impl GenerateOptions {
    pub fn noise_free(mut self) -> Self {
        self.noise_sigma_cm = 0.0;
        self
    }

    /// Plate disc radius in pixels at table level.
    pub fn plate_radius_px(&self) -> f64 {
        self.plate_radius_cm / self.calibration.pixel_width_at(self.calibration.table_distance_cm)
    }
}

/// Where each class sits, plus the cut offsets for each level.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateLayout {
    pub shapes: Vec<PlacedShape>,
    /// `cuts[level][class]`
    pub cuts: Vec<Vec<f64>>,
    /// True food volume per level and class, mL.
    pub true_volume_ml: Vec<Vec<f64>>,
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn validate_levels(levels: &[f64]) -> Result<(), DatasetError> {
    let bad = |m: &str| DatasetError::InvalidPlan(format!("levels {levels:?}: {m}"));
    if levels.is_empty() {
        return Err(bad("empty"));
    }
    if levels[0] != 0.0 {
        return Err(bad("first level must be 0"));
    }
    if levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(bad("levels must lie in [0, 1]"));
    }
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(bad("levels must be ascending"));
    }
    Ok(())
}

fn place(
    plan: &MealPlan,
    geometry: &[ClassGeometry],
    opts: &GenerateOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PlacedShape>, DatasetError> {
    let d_table = opts.calibration.table_distance_cm;
    let radii: Vec<f64> = plan
        .classes
        .iter()
        .zip(geometry)
        .map(|(c, g)| radius_for_volume(&g.shape, c.portion_volume_ml(), d_table))
        .collect();
    let usable = opts.plate_radius_cm - 0.4;
    // No pixel may straddle two foods.
    let gap = 2.0 * opts.calibration.pixel_width_at(d_table);
    // Image half-extent at table level, cm.
    let half_w = 0.5 * opts.width as f64 * opts.calibration.pixel_width_at(d_table);
    let half_h = 0.5 * opts.height as f64 * opts.calibration.pixel_width_at(d_table);

    'attempt: for _ in 0..opts.placement_attempts {
        let mut placed: Vec<PlacedShape> = Vec::with_capacity(radii.len());
        for (&r, g) in radii.iter().zip(geometry) {
            let max_off = usable - r;
            if max_off < 0.0 {
                return Err(DatasetError::OverlapInfeasible {
                    meal: plan.meal_id.clone(),
                    classes: plan.n_classes(),
                });
            }
            let rho = max_off * rng.gen::<f64>().sqrt();
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let center = [rho * phi.cos(), rho * phi.sin()];
            if center[0].abs() + r > half_w || center[1].abs() + r > half_h {
                continue 'attempt;
            }
            for other in &placed {
                let dist = (center[0] - other.center[0]).hypot(center[1] - other.center[1]);
                if dist < r + other.radius_cm + gap {
                    continue 'attempt;
                }
            }
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            placed.push(PlacedShape {
                kind: g.shape,
                radius_cm: r,
                center,
                eat_direction: [theta.cos(), theta.sin()],
                table_distance_cm: d_table,
            });
        }
        return Ok(placed);
    }
    Err(DatasetError::OverlapInfeasible { meal: plan.meal_id.clone(), classes: plan.n_classes() })
}

fn pattern_offset(pattern: Pattern, r: usize, c: usize, rng: &mut ChaCha8Rng) -> f64 {
    match pattern {
        Pattern::Plain => 0.0,
        Pattern::Speckle { amplitude } => rng.gen_range(-amplitude..=amplitude),
        Pattern::Stripes { period_px, amplitude } => {
            if (c / period_px.max(1)) % 2 == 0 {
                amplitude
            } else {
                -amplitude
            }
        }
        Pattern::Checker { period_px, amplitude } => {
            let p = period_px.max(1);
            if (r / p + c / p) % 2 == 0 {
                amplitude
            } else {
                -amplitude
            }
        }
    }
}

fn shade(base: Rgb, offset: f64, noise: f64, rng: &mut ChaCha8Rng) -> Rgb {
    let mut out = [0u8; 3];
    for (o, b) in out.iter_mut().zip(base) {
        let n = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
        *o = (b as f64 + offset + n).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Relative column volume `h (1 − h/D)²` of a food top at height `h`.
fn column_weight(h: f64, d_table: f64) -> f64 {
    h * (1.0 - h / d_table).powi(2)
}

/// Inverse of [`column_weight`] on `[0, D/3]`, where it increases.
fn height_for_column(w: f64, d_table: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, d_table / 3.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if column_weight(mid, d_table) < w {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Quantizes a distance to the 0.01 cm steps of the 16-bit depth format.
pub(crate) fn quantize_depth(d: f64) -> f64 {
    ((d * 100.0).round().clamp(1.0, u16::MAX as f64) as u16) as f64 / 100.0
}

fn render(
    layout: &PlateLayout,
    level: usize,
    appearances: &[Appearance],
    opts: &GenerateOptions,
    seed: u64,
) -> (Grid<Rgb>, Grid<f64>, Grid<Option<u8>>) {
    let (hgt, wid) = (opts.height, opts.width);
    let cal = &opts.calibration;
    let d_table = cal.table_distance_cm;
    let mut heights = Grid::filled(hgt, wid, 0.0);
    let mut labels: Grid<Option<u8>> = Grid::filled(hgt, wid, None);
    let du = cal.pixel_width_at(d_table);
    for (k, shape) in layout.shapes.iter().enumerate() {
        let cut = layout.cuts[level][k];
        if cut >= shape.radius_cm {
            continue;
        }
        let span = |center: f64, n: usize| {
            let half = n as f64 / 2.0;
            let lo = ((center - shape.radius_cm) / du + half - 1.0).floor().max(0.0) as usize;
            let hi = ((center + shape.radius_cm) / du + half + 1.0).ceil().max(0.0) as usize;
            (lo, hi.min(n))
        };
        let (c0, c1) = span(shape.center[0], wid);
        let (r0, r1) = span(shape.center[1], hgt);
        let n = opts.supersample.max(1);
        for r in r0..r1 {
            for c in c0..c1 {
                let mut column = 0.0;
                let mut covered = false;
                for i in 0..n {
                    for j in 0..n {
                        let x = c as f64 + (j as f64 + 0.5) / n as f64 - wid as f64 / 2.0;
                        let y = r as f64 + (i as f64 + 0.5) / n as f64 - hgt as f64 / 2.0;
                        if let Some((h, _)) = shape.surface([x * du, y * du], cut) {
                            column += column_weight(h, d_table);
                            covered = true;
                        }
                    }
                }
                if covered {
                    heights.set(r, c, height_for_column(column / (n * n) as f64, d_table));
                    labels.set(r, c, Some(k as u8));
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (opts.noise_sigma_cm > 0.0)
        .then(|| Normal::new(0.0, opts.noise_sigma_cm).expect("sigma is positive"));
    let plate_r_px = opts.plate_radius_px();
    let mut color = Grid::filled(hgt, wid, [0u8; 3]);
    let mut depth = Grid::filled(hgt, wid, d_table);
    for r in 0..hgt {
        for c in 0..wid {
            let mut d = d_table - *heights.get(r, c);
            if let Some(n) = &noise {
                d += n.sample(&mut rng);
            }
            depth.set(r, c, quantize_depth(d.min(d_table)));
            let x_img = c as f64 + 0.5 - wid as f64 / 2.0;
            let y_img = r as f64 + 0.5 - hgt as f64 / 2.0;
            let px = match labels.get(r, c) {
                Some(k) => {
                    let app = appearances[*k as usize];
                    let off = pattern_offset(app.pattern, r, c, &mut rng);
                    shade(app.base, off, opts.color_noise, &mut rng)
                }
                None if x_img.hypot(y_img) <= plate_r_px => {
                    shade(PLATE_COLOR, 0.0, opts.color_noise * 0.5, &mut rng)
                }
                None => shade(TABLE_COLOR, 0.0, opts.color_noise, &mut rng),
            };
            color.set(r, c, px);
        }
    }
    (color, depth, labels)
}

/// Synthesizes one series with ground truth; see the module docs for the
/// geometry model. Returns the series and the layout used.
pub fn generate_plate_series_with_layout(
    plan: &MealPlan,
    geometry: &[ClassGeometry],
    levels: &[f64],
    seed: u64,
    opts: &GenerateOptions,
) -> Result<(PlateSeries, PlateLayout), DatasetError> {
    plan.validate()?;
    validate_levels(levels)?;
    opts.calibration
        .validate()
        .map_err(|e| DatasetError::InvalidPlan(e.to_string()))?;
    if geometry.len() != plan.n_classes() {
        return Err(DatasetError::InvalidPlan(format!(
            "meal `{}` has {} classes but {} geometries",
            plan.meal_id,
            plan.n_classes(),
            geometry.len()
        )));
    }
    if plan.n_classes() > u8::MAX as usize {
        return Err(DatasetError::InvalidPlan("too many classes for 8-bit labels".into()));
    }
    for g in geometry {
        g.shape.validate().map_err(DatasetError::InvalidPlan)?;
        if g.shape.top() >= opts.calibration.table_distance_cm * 0.25 {
            return Err(DatasetError::InvalidPlan("food taller than a quarter of the camera distance".into()));
        }
        let pixel = opts.calibration.pixel_width_at(opts.calibration.table_distance_cm);
        if let ShapeKind::RoughSlab { wavelength_cm, .. } = g.shape {
            if wavelength_cm < 8.0 * pixel {
                return Err(DatasetError::InvalidPlan(format!(
                    "ripple wavelength {wavelength_cm} cm is under 8 pixels ({} cm)",
                    8.0 * pixel
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0));
    let shapes = place(plan, geometry, opts, &mut rng)?;
    let mut cuts = Vec::with_capacity(levels.len());
    let mut true_volume_ml = Vec::with_capacity(levels.len());
    for &level in levels {
        let keep = 1.0 - level;
        cuts.push(shapes.iter().map(|s| s.cut_for_fraction(keep)).collect::<Vec<_>>());
        true_volume_ml.push(plan.classes.iter().map(|c| keep * c.portion_volume_ml()).collect::<Vec<_>>());
    }
    let layout = PlateLayout { shapes, cuts, true_volume_ml };
    let appearances: Vec<Appearance> = geometry
        .iter()
        .enumerate()
        .map(|(k, g)| g.appearance.unwrap_or_else(|| Appearance::palette(k)))
        .collect();

    let mut plates = Vec::with_capacity(levels.len());
    for (li, &level) in levels.iter().enumerate() {
        let (color, depth, labels) =
            render(&layout, li, &appearances, opts, mix_seed(seed, 1 + li as u64));
        let mask = labels.map(|l| l.is_some());
        let masses = plan
            .classes
            .iter()
            .zip(&layout.true_volume_ml[li])
            .map(|(c, v)| c.density() * v)
            .collect();
        plates.push(RgbdPlate::new(color, depth, mask, Some(labels), masses, level)?);
    }
    let series = PlateSeries::new(format!("{}-s{seed}", plan.meal_id), &plan.meal_id, plates)?;
    Ok((series, layout))
}

pub fn generate_plate_series(
    plan: &MealPlan,
    geometry: &[ClassGeometry],
    levels: &[f64],
    seed: u64,
    opts: &GenerateOptions,
) -> Result<PlateSeries, DatasetError> {
    generate_plate_series_with_layout(plan, geometry, levels, seed, opts).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nutrient::{NutrientVector, PortionSpec};
    use crate::volume::estimate_volumes;

    fn plan(volumes: &[f64]) -> MealPlan {
        let classes = volumes
            .iter()
            .enumerate()
            .map(|(i, v)| PortionSpec::new(format!("food{i}"), NutrientVector::zero(), v * 0.9, *v).unwrap())
            .collect();
        MealPlan::new("m", classes).unwrap()
    }

    #[test]
    fn single_slab_half_eaten() {
        // 100 cm² footprint, 1 cm tall.
        let p = plan(&[100.0]);
        let g = [ClassGeometry::new(ShapeKind::Slab { height_cm: 1.0 })];
        let opts = GenerateOptions::default().noise_free();
        let s = generate_plate_series(&p, &g, &[0.0, 0.5], 3, &opts).unwrap();
        assert_eq!(s.plates.len(), 2);
        let v = s.plates[1].true_mass_g[0] / p.classes[0].density();
        assert!((v - 50.0).abs() < 1e-9);
    }

    #[test]
    fn reference_only() {
        let p = plan(&[80.0, 120.0]);
        let g = [
            ClassGeometry::new(ShapeKind::Slab { height_cm: 1.5 }),
            ClassGeometry::new(ShapeKind::Dome { height_cm: 3.0 }),
        ];
        let s = generate_plate_series(&p, &g, &[0.0], 1, &GenerateOptions::default()).unwrap();
        assert_eq!(s.plates.len(), 1);
        assert_eq!(s.reference().intake_level, 0.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let p = plan(&[90.0, 120.0, 70.0]);
        let g = [
            ClassGeometry::new(ShapeKind::Slab { height_cm: 2.2 }),
            ClassGeometry::new(ShapeKind::Dome { height_cm: 4.0 }),
            ClassGeometry::new(ShapeKind::RoughSlab { height_cm: 2.0, amplitude_cm: 0.3, wavelength_cm: 3.0 }),
        ];
        let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
        let opts = GenerateOptions::default();
        let a = generate_plate_series(&p, &g, &levels, 7, &opts).unwrap();
        let b = generate_plate_series(&p, &g, &levels, 7, &opts).unwrap();
        assert_eq!(a, b);
        let c = generate_plate_series(&p, &g, &levels, 8, &opts).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fully_eaten_class_is_absent() {
        let p = plan(&[100.0, 100.0]);
        let g = [ClassGeometry::new(ShapeKind::Slab { height_cm: 1.0 }); 2];
        let s = generate_plate_series(&p, &g, &[0.0, 1.0], 4, &GenerateOptions::default()).unwrap();
        let labels = s.plates[1].class_labels().unwrap();
        assert!(labels.iter().all(|l| l.is_none()));
        assert_eq!(s.plates[1].true_mass_g, vec![0.0, 0.0]);
    }

    #[test]
    fn overlapping_plan_is_infeasible() {
        let p = plan(&[400.0, 400.0, 400.0]);
        let g = [ClassGeometry::new(ShapeKind::Slab { height_cm: 1.0 }); 3];
        let err = generate_plate_series(&p, &g, &[0.0], 1, &GenerateOptions::default()).unwrap_err();
        assert!(matches!(err, DatasetError::OverlapInfeasible { .. }));
    }

    #[test]
    fn levels_are_validated() {
        let p = plan(&[100.0]);
        let g = [ClassGeometry::new(ShapeKind::Slab { height_cm: 1.0 })];
        let opts = GenerateOptions::default();
        for bad in [&[][..], &[0.5][..], &[0.0, 0.6, 0.3][..], &[0.0, 1.2][..]] {
            assert!(generate_plate_series(&p, &g, bad, 1, &opts).is_err());
        }
    }

    #[test]
    fn rendered_volumes_track_truth() {
        let p = plan(&[90.0, 120.0, 70.0]);
        let g = [
            ClassGeometry::new(ShapeKind::Slab { height_cm: 2.2 }),
            ClassGeometry::new(ShapeKind::Dome { height_cm: 4.0 }),
            ClassGeometry::new(ShapeKind::RoughSlab { height_cm: 2.0, amplitude_cm: 0.3, wavelength_cm: 3.0 }),
        ];
        let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
        let opts = GenerateOptions::default().noise_free();
        for seed in 0..4 {
            let s = generate_plate_series(&p, &g, &levels, seed, &opts).unwrap();
            for plate in &s.plates {
                let est =
                    estimate_volumes(plate.depth(), plate.class_labels().unwrap(), 3, &opts.calibration)
                        .unwrap();
                for k in 0..3 {
                    let target = p.classes[k].portion_volume_ml() * (1.0 - plate.intake_level);
                    let got = est.per_class_ml[k];
                    if target == 0.0 {
                        assert_eq!(got, 0.0);
                    } else {
                        assert!(
                            (got - target).abs() <= 0.01 * target,
                            "seed {seed} level {} class {k}: {got} vs {target}",
                            plate.intake_level
                        );
                    }
                }
            }
        }
    }
}
