use std::fs;

use plate_intake::dataset::{
    generate_plate_series, load_manifest, load_series, read_manifest_records, write_manifest,
    ClassGeometry, DatasetError, GenerateOptions, MealPlan, ShapeKind,
};
use plate_intake::nutrient::{NutrientVector, PortionSpec};
use plate_intake::volume::estimate_volumes;

fn plan(id: &str, portions: &[(f64, f64)]) -> MealPlan {
    let classes = portions
        .iter()
        .enumerate()
        .map(|(i, &(mass, vol))| {
            PortionSpec::new(format!("{id}-food{i}"), NutrientVector::zero(), mass, vol).unwrap()
        })
        .collect();
    MealPlan::new(id, classes).unwrap()
}

fn mixed_meal() -> (MealPlan, Vec<ClassGeometry>) {
    let p = plan("mixed", &[(95.0, 90.0), (130.0, 120.0), (40.0, 75.0)]);
    let g = vec![
        ClassGeometry::new(ShapeKind::Dome { height_cm: 3.5 }),
        ClassGeometry::new(ShapeKind::RoughSlab { height_cm: 2.0, amplitude_cm: 0.3, wavelength_cm: 3.2 }),
        ClassGeometry::new(ShapeKind::ToastOverhang { thickness_cm: 1.5, lift_cm: 0.0 }),
    ];
    (p, g)
}

const LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[test]
fn integrated_label_volume_within_one_percent_of_target() {
    let (p, g) = mixed_meal();
    let slab = plan("slab", &[(100.0, 100.0), (60.0, 80.0)]);
    let slab_g = vec![
        ClassGeometry::new(ShapeKind::Slab { height_cm: 2.5 }),
        ClassGeometry::new(ShapeKind::Slab { height_cm: 1.8 }),
    ];
    let opts = GenerateOptions::default().noise_free();
    let mut worst: f64 = 0.0;
    for (plan, geometry) in [(&p, &g), (&slab, &slab_g)] {
        for seed in 0..12 {
            let s = generate_plate_series(plan, geometry, &LEVELS, seed, &opts).unwrap();
            for plate in &s.plates {
                let est = estimate_volumes(
                    plate.depth(),
                    plate.class_labels().unwrap(),
                    plan.n_classes(),
                    &opts.calibration,
                )
                .unwrap();
                for (k, class) in plan.classes.iter().enumerate() {
                    let target = class.portion_volume_ml() * (1.0 - plate.intake_level);
                    let got = est.per_class_ml[k];
                    if target == 0.0 {
                        assert_eq!(got, 0.0);
                        continue;
                    }
                    let rel = (got - target).abs() / target;
                    worst = worst.max(rel);
                    assert!(rel <= 0.01, "{} seed {seed} level {} class {k}: {got} vs {target}", plan.meal_id, plate.intake_level);
                }
            }
        }
    }
    eprintln!("worst relative volume error {worst:.5}");
}

#[test]
fn flat_toast_matches_and_tilted_toast_overestimates() {
    let p = plan("toast", &[(30.0, 80.0)]);
    let opts = GenerateOptions::default().noise_free();
    let flat = [ClassGeometry::new(ShapeKind::ToastOverhang { thickness_cm: 1.2, lift_cm: 0.0 })];
    let tilted = [ClassGeometry::new(ShapeKind::ToastOverhang { thickness_cm: 1.2, lift_cm: 1.5 })];
    let volume = |g: &[ClassGeometry]| {
        let s = generate_plate_series(&p, g, &[0.0], 5, &opts).unwrap();
        let plate = s.reference();
        estimate_volumes(plate.depth(), plate.class_labels().unwrap(), 1, &opts.calibration)
            .unwrap()
            .per_class_ml[0]
    };
    let v_flat = volume(&flat);
    assert!((v_flat - 80.0).abs() <= 0.8, "{v_flat}");
    let v_tilted = volume(&tilted);
    assert!(v_tilted > 1.3 * 80.0, "{v_tilted}");
}

#[test]
fn mass_over_volume_is_class_density() {
    let (p, g) = mixed_meal();
    let s = generate_plate_series(&p, &g, &LEVELS, 3, &GenerateOptions::default()).unwrap();
    for plate in &s.plates {
        for (k, class) in p.classes.iter().enumerate() {
            let volume = class.portion_volume_ml() * (1.0 - plate.intake_level);
            if volume > 0.0 {
                let density = plate.true_mass_g[k] / volume;
                assert!((density - class.density()).abs() <= 1e-9 * class.density());
            }
        }
    }
}

#[test]
fn depth_never_below_table() {
    let (p, g) = mixed_meal();
    let opts = GenerateOptions { noise_sigma_cm: 0.5, ..GenerateOptions::default() };
    let s = generate_plate_series(&p, &g, &LEVELS, 9, &opts).unwrap();
    for plate in &s.plates {
        assert!(plate.depth().iter().all(|d| *d <= opts.calibration.table_distance_cm));
    }
}

#[test]
fn manifest_round_trip_is_bit_identical() {
    let (p, g) = mixed_meal();
    let opts = GenerateOptions::default();
    let series: Vec<_> = (0..2)
        .map(|seed| generate_plate_series(&p, &g, &LEVELS, seed, &opts).unwrap())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &series).unwrap();
    let loaded = load_manifest(&manifest).unwrap();
    assert_eq!(loaded.len(), series.len());
    for (a, b) in loaded.iter().zip(&series) {
        assert_eq!(a.series_id, b.series_id);
        assert_eq!(a.meal_id, b.meal_id);
        for (pa, pb) in a.plates.iter().zip(&b.plates) {
            assert_eq!(pa.color(), pb.color());
            assert_eq!(pa.food_mask(), pb.food_mask());
            assert_eq!(pa.class_labels(), pb.class_labels());
            let bits = |p: &plate_intake::dataset::RgbdPlate| {
                p.depth().iter().map(|d| d.to_bits()).collect::<Vec<_>>()
            };
            assert_eq!(bits(pa), bits(pb));
            assert_eq!(pa.true_mass_g, pb.true_mass_g);
            assert_eq!(pa.intake_level.to_bits(), pb.intake_level.to_bits());
        }
    }
}

fn two_plate_manifest() -> (tempfile::TempDir, std::path::PathBuf) {
    let p = plan("m", &[(100.0, 100.0)]);
    let g = [ClassGeometry::new(ShapeKind::Slab { height_cm: 2.0 })];
    let s = generate_plate_series(&p, &g, &[0.0, 0.5], 1, &GenerateOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &[s]).unwrap();
    (dir, manifest)
}

#[test]
fn two_plate_manifest_is_one_series() {
    let (_dir, manifest) = two_plate_manifest();
    let loaded = load_manifest(&manifest).unwrap();
    assert_eq!(loaded.len(), 1);
    assert_eq!(loaded[0].plates.len(), 2);
}

#[test]
fn empty_manifest_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.jsonl");
    fs::write(&path, "").unwrap();
    assert!(load_manifest(&path).unwrap().is_empty());
}

#[test]
fn wrong_size_depth_names_the_file() {
    let (dir, manifest) = two_plate_manifest();
    let records = read_manifest_records(&manifest).unwrap();
    let depth = dir.path().join(&records[0].records[1].depth_path);
    let small = plate_intake::grid::Grid::filled(5, 5, 40.0);
    plate_intake::dataset::write_depth_png(&depth, &small).unwrap();
    match load_manifest(&manifest) {
        Err(DatasetError::DimensionMismatch { file, .. }) => assert_eq!(file, depth),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_image_and_bad_line() {
    let (dir, manifest) = two_plate_manifest();
    let records = read_manifest_records(&manifest).unwrap();
    let color = dir.path().join(&records[0].records[0].color_path);
    fs::remove_file(&color).unwrap();
    match load_manifest(&manifest) {
        Err(DatasetError::MissingFile(p)) => assert_eq!(p, color),
        other => panic!("{other:?}"),
    }

    let mut text = fs::read_to_string(&manifest).unwrap();
    text.push_str("{not json\n");
    fs::write(&manifest, text).unwrap();
    match read_manifest_records(&manifest) {
        Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn series_load_independently() {
    let p = plan("m", &[(100.0, 100.0)]);
    let g = [ClassGeometry::new(ShapeKind::Slab { height_cm: 2.0 })];
    let opts = GenerateOptions::default();
    let series: Vec<_> = (0..2).map(|s| generate_plate_series(&p, &g, &[0.0, 0.5], s, &opts).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), &series).unwrap();
    let records = read_manifest_records(&manifest).unwrap();
    fs::remove_file(dir.path().join(&records[0].records[1].mask_path)).unwrap();
    assert!(load_series(dir.path(), &records[0]).is_err());
    assert_eq!(load_series(dir.path(), &records[1]).unwrap(), series[1]);
}
