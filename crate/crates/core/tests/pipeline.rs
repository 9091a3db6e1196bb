use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use plate_intake::autoencoder::{train_autoencoder, AutoencoderConfig, FeatureExtractor, TrainingImage};
use plate_intake::classifier::{train_meal_head, HeadConfig, HeadRegistry};
use plate_intake::dataset::{
    generate_plate_series, load_manifest, read_manifest_records, write_manifest, Appearance, ClassGeometry,
    GenerateOptions, MealPlan, Pattern, PlateSeries, Rgb, ShapeKind,
};
use plate_intake::nutrient::{Nutrient, NutrientVector, PortionSpec};
use plate_intake::pipeline::{evaluate_manifest, time_stages, EvalSettings, Models, PipelineError, Stage};
use plate_intake::report::{self, ReportMeta, INTAKE_TABLE_COLUMNS};
use plate_intake::stats::MeanSd;
use plate_intake::volume::CalibrationProfile;

const COLORS: [Rgb; 2] = [[205, 60, 45], [60, 95, 165]];
const LEVELS: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

fn plan() -> MealPlan {
    let nutrients = |kcal: f64, protein: f64| {
        NutrientVector::from_pairs(&[(Nutrient::Calories, kcal), (Nutrient::Protein, protein), (Nutrient::Calcium, 40.0)]).unwrap()
    };
    MealPlan::new(
        "pair",
        vec![
            PortionSpec::new("stew", nutrients(180.0, 14.0), 110.0, 100.0).unwrap(),
            PortionSpec::new("rice", nutrients(150.0, 3.0), 90.0, 120.0).unwrap(),
        ],
    )
    .unwrap()
}

fn geometry() -> Vec<ClassGeometry> {
    COLORS
        .iter()
        .map(|&base| ClassGeometry {
            shape: ShapeKind::Slab { height_cm: 2.0 },
            appearance: Some(Appearance { base, pattern: Pattern::Plain }),
        })
        .collect()
}

fn series(seeds: std::ops::Range<u64>, opts: &GenerateOptions) -> Vec<PlateSeries> {
    let (p, g) = (plan(), geometry());
    seeds.map(|s| generate_plate_series(&p, &g, &LEVELS, s, opts).unwrap()).collect()
}

fn small_opts() -> GenerateOptions {
    GenerateOptions { height: 32, width: 32, calibration: CalibrationProfile::new(28.0 / 32.0, 40.0, 40.0).unwrap(), ..GenerateOptions::default() }
}

struct Fixture {
    extractor: FeatureExtractor,
    heads: HeadRegistry,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus: Vec<TrainingImage> = series(100..108, &small_opts()).iter().map(|s| TrainingImage::from_plate(s.reference())).collect();
        let cfg = AutoencoderConfig { batch_size: 4, max_epochs: 40, learning_rate: 1e-3, seed: 11, ..AutoencoderConfig::default() };
        let extractor = train_autoencoder(&corpus, &cfg).unwrap().extractor();
        let refs = series(200..202, &GenerateOptions::default());
        let plates: Vec<_> = refs.iter().map(|s| s.reference()).collect();
        let head = train_meal_head(&extractor, &plates, &plan(), &HeadConfig { seed: 5, ..HeadConfig::default() }).unwrap();
        let mut heads = HeadRegistry::default();
        heads.insert(head);
        Fixture { extractor, heads }
    })
}

fn models() -> Models {
    let f = fixture();
    Models { extractor: f.extractor.clone(), heads: f.heads.clone() }
}

fn meta() -> ReportMeta {
    ReportMeta { config_hash: "0123456789abcdef".into(), seed: 7 }
}

fn manifest(dir: &Path, opts: &GenerateOptions) -> std::path::PathBuf {
    write_manifest(dir, &series(0..3, opts)).unwrap()
}

#[test]
fn noise_free_ground_truth_intake_is_near_exact() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), &GenerateOptions::default().noise_free());
    let eval = evaluate_manifest(&m, &[plan()], &models(), &EvalSettings::default()).unwrap();
    assert_eq!(eval.failures().count(), 0);
    let rows = eval.intake_rows().unwrap();
    assert_eq!(rows.len(), 1);
    let row = &rows[0].row;
    assert_eq!(row.n_images, 3 * (LEVELS.len() - 1));
    assert!(row.intake.absolute.mean <= 1.0, "intake MAE {:?}", row.intake.absolute);
    assert!(rows[0].top1.mean >= 0.99, "{:?}", rows[0].top1);

    // oracle: per-plate intake straight from the stored masses
    let p = plan();
    for (s, plate) in eval.after_plates() {
        let loaded = load_manifest(&m).unwrap().into_iter().find(|x| x.series_id == s.series_id).unwrap();
        let (r, a) = (&loaded.plates[0], &loaded.plates[plate.index]);
        let truth: f64 = (0..2).map(|k| (r.true_mass_g[k] - a.true_mass_g[k]) / p.classes[k].density()).sum();
        assert!((plate.true_intake_ml - truth).abs() < 1e-9);
        let kcal = plate.mass_method.get(Nutrient::Calories).unwrap();
        let oracle: f64 = (0..2)
            .map(|k| (r.true_mass_g[k] - a.true_mass_g[k]) / r.true_mass_g[k] * p.classes[k].nutrients_per_portion.get(Nutrient::Calories).unwrap())
            .sum();
        assert!((kcal - oracle).abs() < 1e-9);
    }
}

#[test]
fn reports_are_identical_across_thread_counts_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), &GenerateOptions::default());
    let run = |threads: usize, out: &str| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let eval = pool.install(|| evaluate_manifest(&m, &[plan()], &models(), &EvalSettings::default()).unwrap());
        report::write_evaluation(&eval, &dir.path().join(out), &meta()).unwrap()
    };
    let a = run(1, "a");
    let b = run(4, "b");
    let c = run(4, "c");
    for ((x, y), z) in a.iter().zip(&b).zip(&c) {
        let bytes = fs::read(x).unwrap();
        assert!(bytes.starts_with(b"# config_hash=0123456789abcdef seed=7\n"));
        assert_eq!(bytes, fs::read(y).unwrap(), "{}", x.display());
        assert_eq!(bytes, fs::read(z).unwrap(), "{}", x.display());
    }
}

#[test]
fn empty_manifest_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.jsonl");
    fs::write(&m, "").unwrap();
    let eval = evaluate_manifest(&m, &[plan()], &models(), &EvalSettings::default()).unwrap();
    let files = report::write_evaluation(&eval, &dir.path().join("out"), &meta()).unwrap();
    assert_eq!(files.len(), 6);
    for f in files {
        let text = fs::read_to_string(&f).unwrap();
        let lines: Vec<_> = text.lines().collect();
        // nutrient rows are always listed, with empty statistics
        if f.ends_with(report::AGREEMENT_CSV) || f.ends_with(report::NUTRIENT_ERRORS_CSV) {
            assert_eq!(lines.len(), 2 + 13, "{}", f.display());
        } else {
            assert_eq!(lines.len(), 2, "{}: {text}", f.display());
        }
        assert!(lines[0].starts_with("# config_hash="));
    }
}

#[test]
fn missing_depth_file_fails_only_its_series_and_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), &GenerateOptions::default());
    let records = read_manifest_records(&m).unwrap();
    let gone = dir.path().join(&records[1].records[2].depth_path);
    fs::remove_file(&gone).unwrap();
    let eval = evaluate_manifest(&m, &[plan()], &models(), &EvalSettings::default()).unwrap();
    assert_eq!(eval.outcomes().count(), 2);
    let failures: Vec<_> = eval.failures().collect();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0].series_id, records[1].series_id);
    assert_eq!(failures[0].error.file(), Some(gone.as_path()));
    assert!(!failures[0].error.is_model_error());

    let out = dir.path().join("out");
    report::write_evaluation(&eval, &out, &meta()).unwrap();
    let plates = fs::read_to_string(out.join(report::PLATES_CSV)).unwrap();
    let error_rows: Vec<_> = plates.lines().skip(2).filter(|l| l.split(',').nth(4) == Some("error")).collect();
    assert_eq!(error_rows.len(), 1);
    assert!(error_rows[0].contains(&gone.display().to_string()));
}

#[test]
fn meal_without_head_is_a_model_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), &GenerateOptions::default());
    let models = Models { extractor: fixture().extractor.clone(), heads: HeadRegistry::default() };
    let eval = evaluate_manifest(&m, &[plan()], &models, &EvalSettings::default()).unwrap();
    assert_eq!(eval.failures().count(), 3);
    assert!(eval.failures().all(|f| f.error.is_model_error()));
    let unknown = evaluate_manifest(&m, &[], &models, &EvalSettings::default()).unwrap();
    assert!(unknown.failures().all(|f| matches!(f.error, PipelineError::UnknownMeal(_))));
}

#[test]
fn timing_covers_three_stages() {
    let s = series(0..1, &GenerateOptions::default());
    let t = time_stages(&s, &[plan()], &models(), &EvalSettings::default()).unwrap();
    let stages: Vec<Stage> = t.iter().map(|x| x.stage).collect();
    assert_eq!(stages, [Stage::Segmentation, Stage::Classification, Stage::VolumeAndNutrients]);
    assert!(t.iter().all(|x| x.plates == LEVELS.len() - 1 && x.total_seconds >= 0.0));
}

const INTAKE_HEADER: &str = "meal_id,group,n_classes,n_images,volume_abs_error_ml_mean,volume_abs_error_ml_sd,volume_abs_error_ml_n,volume_error_ml_mean,volume_error_ml_sd,volume_error_ml_n,intake_abs_error_ml_mean,intake_abs_error_ml_sd,intake_abs_error_ml_n,intake_error_ml_mean,intake_error_ml_sd,intake_error_ml_n,intake_abs_error_pct_mean,intake_abs_error_pct_sd,intake_abs_error_pct_n,intake_error_pct_mean,intake_error_pct_sd,intake_error_pct_n";

fn intake_line(meal: &str, group: &str, values: &[f64], n: usize) -> String {
    let m = MeanSd::of(values);
    let cells = format!("{},{},{n}", m.mean, m.sd);
    format!("{meal},{group},3,{n},{}", vec![cells; 6].join(","))
}

fn write_inputs(dir: &Path, meals: &[String]) {
    fs::write(dir.join(report::INTAKE_CSV), format!("# config_hash=x seed=1\n{INTAKE_HEADER}\n{}\n", meals.join("\n"))).unwrap();
    fs::write(
        dir.join(report::SEGMENTATION_CSV),
        "# config_hash=x seed=1\nmeal_id,group,n_classes,n_images,iou_mean,iou_sd,iou_n,top1_mean,top1_sd,top1_n\n",
    )
    .unwrap();
    fs::write(dir.join(report::AGREEMENT_CSV), "# config_hash=x seed=1\nnutrient,status\n").unwrap();
    fs::write(dir.join(report::POINTS_CSV), "# config_hash=x seed=1\nnutrient\n").unwrap();
}

#[test]
fn single_meal_total_equals_meal_row() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), &[intake_line("b", "", &[1.0, 4.0, 2.5], 3)]);
    let (_, rows) = report::summarize(dir.path()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].label, "Total");
    assert_eq!(rows[1].intake.intake.absolute, rows[0].intake.intake.absolute);
    assert_eq!(rows[1].intake.n_images, 3);
}

#[test]
fn equal_count_meals_average_into_total_and_subtotals_pool_raw_values() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = ([1.0, 3.0, 8.0], [2.0, 2.0, 11.0], [0.5, 7.0, 6.0]);
    write_inputs(
        dir.path(),
        &[intake_line("b", "rtf", &a, 3), intake_line("l", "rtf", &b, 3), intake_line("d1", "mtf", &c, 3)],
    );
    let (meta, rows) = report::summarize(dir.path()).unwrap();
    assert_eq!(meta, "# config_hash=x seed=1");
    let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["rtf: b", "rtf: l", "rtf subtotal", "mtf: d1", "mtf subtotal", "Total"]);
    let sub = rows[2].intake.intake.absolute;
    let raw: Vec<f64> = a.iter().chain(&b).copied().collect();
    let oracle = MeanSd::of(&raw);
    assert!((sub.mean - oracle.mean).abs() < 1e-12 && (sub.sd - oracle.sd).abs() < 1e-12);
    assert_eq!(rows[2].intake.n_classes, 6);
    let total = rows[5].intake.intake.absolute;
    let means = [MeanSd::of(&a).mean, MeanSd::of(&b).mean, MeanSd::of(&c).mean];
    assert!((total.mean - means.iter().sum::<f64>() / 3.0).abs() < 1e-12);

    let written = report::write_summary(dir.path()).unwrap();
    let table = fs::read_to_string(&written[0]).unwrap();
    let header = table.lines().nth(1).unwrap();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(header.as_bytes());
    let cols: Vec<String> = rdr.records().next().unwrap().unwrap().iter().map(String::from).collect();
    assert_eq!(cols, INTAKE_TABLE_COLUMNS);
    assert!(table.contains("rtf subtotal,6 (6),"));
}

#[test]
fn summary_without_rows_is_no_data() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), &[]);
    fs::write(dir.path().join(report::INTAKE_CSV), format!("# config_hash=x seed=1\n{INTAKE_HEADER}\n")).unwrap();
    assert!(matches!(report::summarize(dir.path()), Err(report::ReportError::NoData(_))));
}
