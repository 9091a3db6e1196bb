//! End-to-end evaluation: mask, classify, integrate volumes, turn relative
//! volume change into nutrient intake and compare with the mass oracle.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::autoencoder::FeatureExtractor;
use crate::classifier::{classify_pixels, select_head, top1_accuracy, ClassifierError, HeadRegistry, MealHead};
use crate::config::MaskSource;
use crate::dataset::{load_series, read_manifest_records, DatasetError, MealPlan, PlateSeries, RgbdPlate};
use crate::grid::{LabelGrid, Mask};
use crate::nutrient::{scale_portion, sum_plate, Nutrient, NutrientError, NutrientVector, RdaTable, Texture};
use crate::seg::{baseline_segment, iou, BaselineParams, PlateRegion, SegError};
use crate::stats::{nutrient_agreement, AgreementReport, IntakeErrorRow, IntakeSample, MeanSd, MetricsError};
use crate::volume::{estimate_volumes, CalibrationProfile, VolumeError, VolumeEstimate};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ClassifierError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Segmentation(#[from] SegError),
    #[error(transparent)]
    Nutrient(#[from] NutrientError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no meal plan for `{0}`")]
    UnknownMeal(String),
    #[error("reference plate of series `{0}` has no class labels")]
    UnlabelledReference(String),
}

impl PipelineError {
    /// Model problems (missing or mismatched heads) as opposed to data ones.
    pub fn is_model_error(&self) -> bool {
        matches!(self, PipelineError::Model(_))
    }

    pub fn file(&self) -> Option<&Path> {
        match self {
            PipelineError::Dataset(e) => e.path(),
            _ => None,
        }
    }
}

pub struct Models {
    pub extractor: FeatureExtractor,
    pub heads: HeadRegistry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub calibration: CalibrationProfile,
    pub mask_source: MaskSource,
    pub baseline: BaselineParams,
    /// Plate radius on the table, for the baseline segmenter's region.
    pub plate_radius_cm: f64,
    /// Replaces each meal's own prescription when set.
    pub texture: Option<Texture>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            calibration: CalibrationProfile::default(),
            mask_source: MaskSource::GroundTruth,
            baseline: BaselineParams::default(),
            plate_radius_cm: 13.0,
            texture: None,
        }
    }
}

impl EvalSettings {
    fn plate_region(&self, h: usize, w: usize) -> PlateRegion {
        let px = self.calibration.pixel_width_at(self.calibration.table_distance_cm);
        PlateRegion::centered(h, w, self.plate_radius_cm / px)
    }
}

/// Per-plate result. Intake fields are zero on the reference plate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlateOutcome {
    pub index: usize,
    pub intake_level: f64,
    pub iou: Option<f64>,
    /// Classification accuracy on food pixels; `None` on the reference plate,
    /// which uses its own labels.
    pub top1: Option<f64>,
    pub estimated_volume_ml: f64,
    pub true_volume_ml: f64,
    pub estimated_intake_ml: f64,
    pub true_intake_ml: f64,
    /// Full-portion volume of the evaluated classes.
    pub reference_ml: f64,
    #[serde(skip)]
    pub volume_method: NutrientVector,
    #[serde(skip)]
    pub mass_method: NutrientVector,
    /// Nutrient content of the full portions of the evaluated classes.
    #[serde(skip)]
    pub portion_content: NutrientVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesOutcome {
    pub series_id: String,
    pub meal_id: String,
    pub group: Option<String>,
    /// Classes evaluated (after any texture filter).
    pub n_classes: usize,
    pub plates: Vec<PlateOutcome>,
}

impl SeriesOutcome {
    pub fn after_plates(&self) -> impl Iterator<Item = &PlateOutcome> {
        self.plates.iter().filter(|p| p.index > 0)
    }
}

fn mask_for(plate: &RgbdPlate, settings: &EvalSettings) -> Result<(Mask, Option<f64>), PipelineError> {
    match settings.mask_source {
        MaskSource::GroundTruth => Ok((plate.food_mask().clone(), None)),
        MaskSource::Baseline => {
            let (h, w) = plate.dims();
            let m = baseline_segment(plate.color(), &settings.plate_region(h, w), &settings.baseline);
            let score = iou(&m, plate.food_mask())?;
            Ok((m, Some(score)))
        }
    }
}

/// Keeps only labels of classes the head covers.
fn restrict_labels(labels: &LabelGrid, head: &MealHead) -> LabelGrid {
    labels.map(|l| l.filter(|k| head.class_indices.contains(&(*k as usize))))
}

fn true_class_volume(plate: &RgbdPlate, plan: &MealPlan, k: usize) -> f64 {
    plate.true_mass_g[k] / plan.classes[k].density()
}

pub fn evaluate_series(
    series: &PlateSeries,
    plan: &MealPlan,
    models: &Models,
    settings: &EvalSettings,
) -> Result<SeriesOutcome, PipelineError> {
    let texture = settings.texture.or(plan.texture_filter);
    let head = select_head(&plan.meal_id, texture, &models.heads)?;
    let reference = series.reference();
    let ref_labels = reference
        .class_labels()
        .ok_or_else(|| PipelineError::UnlabelledReference(series.series_id.clone()))?;
    let ref_labels = restrict_labels(ref_labels, &head);
    let n = plan.n_classes();
    let ref_volumes = estimate_volumes(reference.depth(), &ref_labels, n, &settings.calibration)?;
    let classes = &head.class_indices;
    let reference_ml: f64 = classes.iter().map(|&k| plan.classes[k].portion_volume_ml()).sum();
    let portion_content = sum_plate(&classes.iter().map(|&k| plan.classes[k].nutrients_per_portion).collect::<Vec<_>>());

    let mut plates = Vec::with_capacity(series.plates.len());
    for (index, plate) in series.plates.iter().enumerate() {
        let true_volume_ml: f64 = classes.iter().map(|&k| true_class_volume(plate, plan, k)).sum();
        if index == 0 {
            let iou = match settings.mask_source {
                MaskSource::GroundTruth => None,
                MaskSource::Baseline => Some(mask_for(plate, settings)?.1.expect("baseline scores its mask")),
            };
            plates.push(PlateOutcome {
                index,
                intake_level: plate.intake_level,
                iou,
                top1: None,
                estimated_volume_ml: ref_volumes.whole_plate_ml,
                true_volume_ml,
                estimated_intake_ml: 0.0,
                true_intake_ml: 0.0,
                reference_ml,
                volume_method: scale_portion(&portion_content, 0.0)?,
                mass_method: scale_portion(&portion_content, 0.0)?,
                portion_content,
            });
            continue;
        }
        let (mask, iou) = mask_for(plate, settings)?;
        let predicted = classify_pixels(&models.extractor, &head, plate.color(), &mask)?;
        let top1 = match plate.class_labels() {
            Some(truth) if truth.iter().any(Option::is_some) && predicted.labels.iter().any(Option::is_some) => {
                let truth = restrict_labels(truth, &head);
                match top1_accuracy(&predicted.labels, &truth, settings.mask_source == MaskSource::Baseline) {
                    Ok(a) => Some(a),
                    Err(ClassifierError::NoFoodPixels) => None,
                    Err(e) => return Err(e.into()),
                }
            }
            _ => None,
        };
        let after = estimate_volumes(plate.depth(), &predicted.labels, n, &settings.calibration)?;
        let (mut est_items, mut mass_items) = (Vec::new(), Vec::new());
        let (mut est_ml, mut true_ml) = (0.0, 0.0);
        for &k in classes {
            let portion = &plan.classes[k];
            let f_est = class_fraction(&ref_volumes, &after, k)?;
            let m_ref = reference.true_mass_g[k];
            let f_true = (m_ref - plate.true_mass_g[k]) / m_ref;
            est_ml += f_est * portion.portion_volume_ml();
            true_ml += f_true * portion.portion_volume_ml();
            est_items.push(scale_portion(&portion.nutrients_per_portion, f_est)?);
            mass_items.push(scale_portion(&portion.nutrients_per_portion, f_true)?);
        }
        plates.push(PlateOutcome {
            index,
            intake_level: plate.intake_level,
            iou,
            top1,
            estimated_volume_ml: after.whole_plate_ml,
            true_volume_ml,
            estimated_intake_ml: est_ml,
            true_intake_ml: true_ml,
            reference_ml,
            volume_method: sum_plate(&est_items),
            mass_method: sum_plate(&mass_items),
            portion_content,
        });
    }
    Ok(SeriesOutcome {
        series_id: series.series_id.clone(),
        meal_id: plan.meal_id.clone(),
        group: plan.group.clone(),
        n_classes: classes.len(),
        plates,
    })
}

fn class_fraction(reference: &VolumeEstimate, after: &VolumeEstimate, k: usize) -> Result<f64, PipelineError> {
    Ok(crate::volume::relative_intake(reference, after, k)?)
}

#[derive(Debug)]
pub struct SeriesFailure {
    pub series_id: String,
    pub error: PipelineError,
}

/// Outcome of every series in manifest order.
#[derive(Debug, Default)]
pub struct Evaluation {
    pub series: Vec<Result<SeriesOutcome, SeriesFailure>>,
}

impl Evaluation {
    pub fn outcomes(&self) -> impl Iterator<Item = &SeriesOutcome> {
        self.series.iter().filter_map(|r| r.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = &SeriesFailure> {
        self.series.iter().filter_map(|r| r.as_ref().err())
    }

    /// Meal ids in order of first appearance.
    fn meals(&self) -> Vec<(String, Option<String>)> {
        let mut out: Vec<(String, Option<String>)> = Vec::new();
        for s in self.outcomes() {
            if !out.iter().any(|(m, _)| *m == s.meal_id) {
                out.push((s.meal_id.clone(), s.group.clone()));
            }
        }
        out
    }

    /// One bulk-intake row per meal over its non-reference plates.
    pub fn intake_rows(&self) -> Result<Vec<MealRow>, PipelineError> {
        let mut rows = Vec::new();
        for (meal, group) in self.meals() {
            let series: Vec<&SeriesOutcome> = self.outcomes().filter(|s| s.meal_id == meal).collect();
            let plates: Vec<&PlateOutcome> = series.iter().flat_map(|s| s.after_plates()).collect();
            let volumes: Vec<(f64, f64)> = plates.iter().map(|p| (p.estimated_volume_ml, p.true_volume_ml)).collect();
            let intakes: Vec<IntakeSample> = plates
                .iter()
                .map(|p| IntakeSample { estimate: p.estimated_intake_ml, truth: p.true_intake_ml, reference: p.reference_ml })
                .collect();
            let n_classes = series.first().map_or(0, |s| s.n_classes);
            let row = IntakeErrorRow::new(meal.clone(), n_classes, plates.len(), &volumes, &intakes)?;
            let iou = MeanSd::of(&plates.iter().filter_map(|p| p.iou).collect::<Vec<_>>());
            let top1 = MeanSd::of(&plates.iter().filter_map(|p| p.top1).collect::<Vec<_>>());
            rows.push(MealRow { group, row, iou, top1 });
        }
        Ok(rows)
    }

    /// Non-reference plates of every successful series, in order.
    pub fn after_plates(&self) -> Vec<(&SeriesOutcome, &PlateOutcome)> {
        self.outcomes().flat_map(|s| s.after_plates().map(move |p| (s, p))).collect()
    }

    pub fn agreement(&self) -> Result<Vec<(Nutrient, Result<AgreementReport, MetricsError>)>, PipelineError> {
        let plates = self.after_plates();
        let v: Vec<NutrientVector> = plates.iter().map(|(_, p)| p.volume_method).collect();
        let m: Vec<NutrientVector> = plates.iter().map(|(_, p)| p.mass_method).collect();
        Ok(nutrient_agreement(&v, &m)?)
    }

    /// Per-nutrient intake error, in absolute units and normalized both by
    /// the plate's portion content and by the daily value.
    pub fn nutrient_errors(&self, rda: &RdaTable) -> Vec<NutrientErrorRow> {
        let plates = self.after_plates();
        Nutrient::ALL
            .iter()
            .map(|&nutrient| {
                let (mut abs, mut pct_portion, mut pct_dv) = (Vec::new(), Vec::new(), Vec::new());
                let mut mass_content = Vec::new();
                for (_, p) in &plates {
                    let (Some(v), Some(m), Some(full)) =
                        (p.volume_method.get(nutrient), p.mass_method.get(nutrient), p.portion_content.get(nutrient))
                    else {
                        continue;
                    };
                    abs.push(v - m);
                    mass_content.push(m);
                    if full > 0.0 {
                        pct_portion.push(100.0 * (v - m) / full);
                    }
                    if let Some(dv) = rda.daily_value(nutrient) {
                        pct_dv.push(100.0 * (v - m) / dv.amount);
                    }
                }
                let abs_of = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
                NutrientErrorRow {
                    nutrient,
                    error: MeanSd::of(&abs),
                    absolute_error: MeanSd::of(&abs_of(&abs)),
                    percent_of_portion: MeanSd::of(&pct_portion),
                    percent_of_daily_value: MeanSd::of(&pct_dv),
                    mean_mass_method: MeanSd::of(&mass_content).mean,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MealRow {
    pub group: Option<String>,
    pub row: IntakeErrorRow,
    pub iou: MeanSd,
    pub top1: MeanSd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NutrientErrorRow {
    pub nutrient: Nutrient,
    /// Volume method minus mass method, nutrient units.
    pub error: MeanSd,
    pub absolute_error: MeanSd,
    pub percent_of_portion: MeanSd,
    /// Empty when the nutrient has no daily-value basis.
    pub percent_of_daily_value: MeanSd,
    pub mean_mass_method: f64,
}

/// Loads and evaluates every series of `manifest` on the current rayon pool.
/// A series that fails to load or evaluate is recorded and the rest go on;
/// only an unreadable manifest is an error.
pub fn evaluate_manifest(
    manifest: &Path,
    plans: &[MealPlan],
    models: &Models,
    settings: &EvalSettings,
) -> Result<Evaluation, PipelineError> {
    let records = read_manifest_records(manifest)?;
    let base = manifest.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let series = records
        .par_iter()
        .map(|rec| {
            let run = || -> Result<SeriesOutcome, PipelineError> {
                let s = load_series(&base, rec)?;
                let plan = plans
                    .iter()
                    .find(|p| p.meal_id == s.meal_id)
                    .ok_or_else(|| PipelineError::UnknownMeal(s.meal_id.clone()))?;
                evaluate_series(&s, plan, models, settings)
            };
            run().map_err(|error| SeriesFailure { series_id: rec.series_id.clone(), error })
        })
        .collect();
    Ok(Evaluation { series })
}

/// Reference plates (index 0) of every series whose meal is `meal_id`.
pub fn reference_plates(series: &[PlateSeries], meal_id: &str) -> Vec<RgbdPlate> {
    series.iter().filter(|s| s.meal_id == meal_id).map(|s| s.reference().clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Segmentation,
    Classification,
    VolumeAndNutrients,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Segmentation => "segmentation",
            Stage::Classification => "classification",
            Stage::VolumeAndNutrients => "volume_nutrients",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: Stage,
    pub plates: usize,
    pub total_seconds: f64,
}

impl StageTiming {
    pub fn mean_seconds(&self) -> f64 {
        if self.plates == 0 {
            0.0
        } else {
            self.total_seconds / self.plates as f64
        }
    }
}

/// Wall-clock time per stage over every non-reference plate, single threaded.
/// Segmentation always runs the baseline segmenter so its cost is measured
/// even when evaluation uses stored masks.
pub fn time_stages(
    series: &[PlateSeries],
    plans: &[MealPlan],
    models: &Models,
    settings: &EvalSettings,
) -> Result<Vec<StageTiming>, PipelineError> {
    use std::time::Instant;
    let mut totals = [0.0f64; 3];
    let mut plates = 0;
    for s in series {
        let plan = plans.iter().find(|p| p.meal_id == s.meal_id).ok_or_else(|| PipelineError::UnknownMeal(s.meal_id.clone()))?;
        let head = select_head(&plan.meal_id, settings.texture.or(plan.texture_filter), &models.heads)?;
        let reference = s.reference();
        let ref_labels = reference.class_labels().ok_or_else(|| PipelineError::UnlabelledReference(s.series_id.clone()))?;
        let ref_volumes = estimate_volumes(reference.depth(), &restrict_labels(ref_labels, &head), plan.n_classes(), &settings.calibration)?;
        for plate in s.plates.iter().skip(1) {
            let (h, w) = plate.dims();
            let t = Instant::now();
            let segmented = baseline_segment(plate.color(), &settings.plate_region(h, w), &settings.baseline);
            totals[0] += t.elapsed().as_secs_f64();
            let mask = match settings.mask_source {
                MaskSource::GroundTruth => plate.food_mask().clone(),
                MaskSource::Baseline => segmented,
            };

            let t = Instant::now();
            let predicted = classify_pixels(&models.extractor, &head, plate.color(), &mask)?;
            totals[1] += t.elapsed().as_secs_f64();

            let t = Instant::now();
            let after = estimate_volumes(plate.depth(), &predicted.labels, plan.n_classes(), &settings.calibration)?;
            let mut items = Vec::new();
            for &k in &head.class_indices {
                // classes missing from the reference are skipped, not timed as errors
                if let Ok(f) = crate::volume::relative_intake(&ref_volumes, &after, k) {
                    items.push(scale_portion(&plan.classes[k].nutrients_per_portion, f)?);
                }
            }
            std::hint::black_box(sum_plate(&items));
            totals[2] += t.elapsed().as_secs_f64();
            plates += 1;
        }
    }
    Ok([Stage::Segmentation, Stage::Classification, Stage::VolumeAndNutrients]
        .into_iter()
        .zip(totals)
        .map(|(stage, total_seconds)| StageTiming { stage, plates, total_seconds })
        .collect())
}
