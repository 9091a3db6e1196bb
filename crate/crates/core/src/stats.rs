//! Intake-error metrics and method agreement: OLS with r², Bland-Altman,
//! signed/absolute errors relative to the full portion, and pooling of
//! per-meal summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nutrient::{Nutrient, NutrientVector};

/// Limits-of-agreement multiplier.
pub const LOA_Z: f64 = 1.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("x values are constant")]
    DegenerateX,
    #[error("reference volume must be positive (row {row})")]
    ZeroReference { row: usize },
    #[error("{0} is absent on every plate")]
    NoOverlap(Nutrient),
    #[error("non-finite input")]
    NonFinite,
}

/// Mean ± sample SD (n − 1 denominator; SD is 0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, sd, n }
    }

    /// Combines groups as if their raw values had been pooled.
    pub fn pool(groups: &[MeanSd]) -> Self {
        let groups: Vec<&MeanSd> = groups.iter().filter(|g| g.n > 0).collect();
        let total: usize = groups.iter().map(|g| g.n).sum();
        if total == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN, n: 0 };
        }
        let mean = groups.iter().map(|g| g.n as f64 * g.mean).sum::<f64>() / total as f64;
        let ss: f64 = groups
            .iter()
            .map(|g| (g.n as f64 - 1.0) * g.sd * g.sd + g.n as f64 * (g.mean - mean).powi(2))
            .sum();
        let sd = if total < 2 { 0.0 } else { (ss / (total - 1) as f64).sqrt() };
        Self { mean, sd, n: total }
    }
}

fn check(x: &[f64], y: &[f64], needed: usize) -> Result<(), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < needed {
        return Err(MetricsError::TooFewPoints { needed, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
    /// y had zero variance; r² is reported as 0.
    pub constant_y: bool,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<Regression, MetricsError> {
    check(x, y, 2)?;
    let n = x.len();
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(MetricsError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if syy == 0.0 {
        return Ok(Regression { slope, intercept, r_squared: 0.0, n, constant_y: true });
    }
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - (intercept + slope * a)).powi(2)).sum();
    let r_squared = (1.0 - ss_res / syy).clamp(0.0, 1.0);
    Ok(Regression { slope, intercept, r_squared, n, constant_y: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    /// Mean of `a − b`.
    pub bias: f64,
    /// Sample SD of `a − b`.
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    /// `(mean of pair, difference)` per point.
    pub points: Vec<(f64, f64)>,
}

impl BlandAltman {
    pub fn zero_within_limits(&self) -> bool {
        self.lower <= 0.0 && 0.0 <= self.upper
    }
}

pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<BlandAltman, MetricsError> {
    check(a, b, 2)?;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let MeanSd { mean: bias, sd, n } = MeanSd::of(&diffs);
    let points = a.iter().zip(b).zip(&diffs).map(|((x, y), d)| (0.5 * (x + y), *d)).collect();
    Ok(BlandAltman { bias, sd, lower: bias - LOA_Z * sd, upper: bias + LOA_Z * sd, n, points })
}

/// One plate-class comparison, all in mL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntakeSample {
    pub estimate: f64,
    pub truth: f64,
    /// Full reference portion the percentage is taken against.
    pub reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntakeErrorStats {
    pub signed: MeanSd,
    pub absolute: MeanSd,
    /// `100·(est − true)/ref`
    pub percent_signed: MeanSd,
    pub percent_absolute: MeanSd,
}

pub fn intake_error_metrics(samples: &[IntakeSample]) -> Result<IntakeErrorStats, MetricsError> {
    let mut signed = Vec::with_capacity(samples.len());
    let mut pct = Vec::with_capacity(samples.len());
    for (row, s) in samples.iter().enumerate() {
        if ![s.estimate, s.truth, s.reference].iter().all(|v| v.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        if !(s.reference > 0.0) {
            return Err(MetricsError::ZeroReference { row });
        }
        signed.push(s.estimate - s.truth);
        pct.push(100.0 * (s.estimate - s.truth) / s.reference);
    }
    let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
    Ok(IntakeErrorStats {
        signed: MeanSd::of(&signed),
        absolute: MeanSd::of(&abs(&signed)),
        percent_signed: MeanSd::of(&pct),
        percent_absolute: MeanSd::of(&abs(&pct)),
    })
}

/// Per-meal (or pooled) bulk-intake summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntakeErrorRow {
    pub meal_id: String,
    pub n_classes: usize,
    pub n_images: usize,
    pub volume_absolute: MeanSd,
    pub volume_signed: MeanSd,
    pub intake: IntakeErrorStats,
}

impl IntakeErrorRow {
    /// `volumes` are `(estimated, true)` food volumes; `intakes` the intake
    /// samples of the same plates.
    pub fn new(
        meal_id: impl Into<String>,
        n_classes: usize,
        n_images: usize,
        volumes: &[(f64, f64)],
        intakes: &[IntakeSample],
    ) -> Result<Self, MetricsError> {
        let signed: Vec<f64> = volumes.iter().map(|(e, t)| e - t).collect();
        let abs: Vec<f64> = signed.iter().map(|v| v.abs()).collect();
        Ok(Self {
            meal_id: meal_id.into(),
            n_classes,
            n_images,
            volume_absolute: MeanSd::of(&abs),
            volume_signed: MeanSd::of(&signed),
            intake: intake_error_metrics(intakes)?,
        })
    }

    /// Pools rows into one summary; class counts add, image counts add.
    pub fn pool(meal_id: impl Into<String>, rows: &[IntakeErrorRow]) -> Self {
        let p = |f: fn(&IntakeErrorRow) -> MeanSd| MeanSd::pool(&rows.iter().map(f).collect::<Vec<_>>());
        Self {
            meal_id: meal_id.into(),
            n_classes: rows.iter().map(|r| r.n_classes).sum(),
            n_images: rows.iter().map(|r| r.n_images).sum(),
            volume_absolute: p(|r| r.volume_absolute),
            volume_signed: p(|r| r.volume_signed),
            intake: IntakeErrorStats {
                signed: p(|r| r.intake.signed),
                absolute: p(|r| r.intake.absolute),
                percent_signed: p(|r| r.intake.percent_signed),
                percent_absolute: p(|r| r.intake.percent_absolute),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub nutrient: Nutrient,
    /// Volume method regressed on the mass method.
    pub regression: Regression,
    /// Differences are volume minus mass.
    pub bland_altman: BlandAltman,
}

/// Pairs of plates where the nutrient is present in both lists.
fn paired(nutrient: Nutrient, a: &[NutrientVector], b: &[NutrientVector]) -> (Vec<f64>, Vec<f64>) {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x.get(nutrient)?, y.get(nutrient)?)))
        .unzip()
}

pub fn nutrient_agreement_for(
    nutrient: Nutrient,
    volume_method: &[NutrientVector],
    mass_method: &[NutrientVector],
) -> Result<AgreementReport, MetricsError> {
    if volume_method.len() != mass_method.len() {
        return Err(MetricsError::LengthMismatch(volume_method.len(), mass_method.len()));
    }
    let (v, m) = paired(nutrient, volume_method, mass_method);
    if v.is_empty() {
        return Err(MetricsError::NoOverlap(nutrient));
    }
    Ok(AgreementReport {
        nutrient,
        regression: linear_regression(&m, &v)?,
        bland_altman: bland_altman(&v, &m)?,
    })
}

/// One report (or the reason there is none) per nutrient, in
/// [`Nutrient::ALL`] order.
pub fn nutrient_agreement(
    volume_method: &[NutrientVector],
    mass_method: &[NutrientVector],
) -> Result<Vec<(Nutrient, Result<AgreementReport, MetricsError>)>, MetricsError> {
    if volume_method.len() != mass_method.len() {
        return Err(MetricsError::LengthMismatch(volume_method.len(), mass_method.len()));
    }
    Ok(Nutrient::ALL
        .iter()
        .map(|&n| (n, nutrient_agreement_for(n, volume_method, mass_method)))
        .collect())
}
