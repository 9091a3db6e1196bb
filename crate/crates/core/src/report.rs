//! CSV and SVG report files. Every CSV starts with a `#` metadata line
//! carrying the config hash and seed; numbers use Rust's shortest
//! round-trip formatting so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::nutrient::{Nutrient, RdaTable};
use crate::pipeline::{Evaluation, MealRow, PipelineError, StageTiming};
use crate::stats::{IntakeErrorRow, IntakeErrorStats, MeanSd, MetricsError};

pub const PLATES_CSV: &str = "plates.csv";
pub const INTAKE_CSV: &str = "intake_errors.csv";
pub const SEGMENTATION_CSV: &str = "segmentation.csv";
pub const AGREEMENT_CSV: &str = "agreement.csv";
pub const POINTS_CSV: &str = "agreement_points.csv";
pub const NUTRIENT_ERRORS_CSV: &str = "nutrient_errors.csv";
pub const TABLE_INTAKE_CSV: &str = "table_intake.csv";
pub const TABLE_SEGMENTATION_CSV: &str = "table_segmentation.csv";
pub const TIMING_CSV: &str = "timing.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("no evaluation data in {0}")]
    NoData(PathBuf),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Written as the first line of every CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportMeta {
    pub config_hash: String,
    pub seed: u64,
}

impl ReportMeta {
    pub fn line(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn mean_sd_cells(m: &MeanSd) -> [String; 3] {
    [num(m.mean), num(m.sd), m.n.to_string()]
}

fn mean_sd_header(prefix: &str) -> [String; 3] {
    [format!("{prefix}_mean"), format!("{prefix}_sd"), format!("{prefix}_n")]
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, path: &Path, meta: &ReportMeta) -> Result<(), ReportError> {
        let io = |source| ReportError::Io { path: path.to_path_buf(), source };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| io(e.into()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| io(e.into()))?;
        }
        let body = w.into_inner().map_err(|e| io(e.into_error()))?;
        let mut f = fs::File::create(path).map_err(io)?;
        writeln!(f, "{}", meta.line()).map_err(io)?;
        f.write_all(&body).map_err(io)
    }
}

/// Reads a CSV written by this module: metadata line, header, rows keyed by
/// column name.
struct ReadTable {
    path: PathBuf,
    meta: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl ReadTable {
    fn read(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
        let (meta, body) = match text.split_once('\n') {
            Some((first, rest)) if first.starts_with('#') => (first.to_owned(), rest),
            _ => (String::new(), text.as_str()),
        };
        let parse = |line: usize, e: csv::Error| ReportError::Parse { path: path.to_path_buf(), line, message: e.to_string() };
        let mut r = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let header = r.headers().map_err(|e| parse(2, e))?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            rows.push(rec.map_err(|e| parse(i + 3, e))?.iter().map(str::to_owned).collect());
        }
        Ok(Self { path: path.to_path_buf(), meta, header, rows })
    }

    fn col(&self, name: &str) -> Result<usize, ReportError> {
        self.header.iter().position(|h| h == name).ok_or_else(|| ReportError::Parse {
            path: self.path.clone(),
            line: 2,
            message: format!("missing column `{name}`"),
        })
    }

    fn get<'a>(&self, row: &'a [String], name: &str) -> Result<&'a str, ReportError> {
        Ok(&row[self.col(name)?])
    }

    fn float(&self, i: usize, row: &[String], name: &str) -> Result<f64, ReportError> {
        let s = self.get(row, name)?;
        if s.is_empty() {
            return Ok(f64::NAN);
        }
        s.parse().map_err(|_| ReportError::Parse { path: self.path.clone(), line: i + 3, message: format!("`{name}`: not a number: {s}") })
    }

    fn count(&self, i: usize, row: &[String], name: &str) -> Result<usize, ReportError> {
        let s = self.get(row, name)?;
        s.parse().map_err(|_| ReportError::Parse { path: self.path.clone(), line: i + 3, message: format!("`{name}`: not a count: {s}") })
    }

    fn mean_sd(&self, i: usize, row: &[String], prefix: &str) -> Result<MeanSd, ReportError> {
        Ok(MeanSd {
            mean: self.float(i, row, &format!("{prefix}_mean"))?,
            sd: self.float(i, row, &format!("{prefix}_sd"))?,
            n: self.count(i, row, &format!("{prefix}_n"))?,
        })
    }
}

const INTAKE_METRICS: [&str; 6] = [
    "volume_abs_error_ml",
    "volume_error_ml",
    "intake_abs_error_ml",
    "intake_error_ml",
    "intake_abs_error_pct",
    "intake_error_pct",
];

fn intake_metrics(r: &IntakeErrorRow) -> [MeanSd; 6] {
    let i = &r.intake;
    [r.volume_absolute, r.volume_signed, i.absolute, i.signed, i.percent_absolute, i.percent_signed]
}

fn write_plates(eval: &Evaluation, path: &Path, meta: &ReportMeta) -> Result<(), ReportError> {
    let mut t = Table::new([
        "series_id",
        "meal_id",
        "plate",
        "intake_level",
        "status",
        "iou",
        "top1",
        "est_volume_ml",
        "true_volume_ml",
        "est_intake_ml",
        "true_intake_ml",
        "reference_ml",
        "error",
        "file",
    ]);
    for s in &eval.series {
        match s {
            Ok(s) => {
                for p in &s.plates {
                    t.push(vec![
                        s.series_id.clone(),
                        s.meal_id.clone(),
                        p.index.to_string(),
                        num(p.intake_level),
                        "ok".into(),
                        opt(p.iou),
                        opt(p.top1),
                        num(p.estimated_volume_ml),
                        num(p.true_volume_ml),
                        num(p.estimated_intake_ml),
                        num(p.true_intake_ml),
                        num(p.reference_ml),
                        String::new(),
                        String::new(),
                    ]);
                }
            }
            Err(f) => {
                let mut row = vec![String::new(); 14];
                row[0] = f.series_id.clone();
                row[4] = "error".into();
                row[12] = f.error.to_string();
                row[13] = f.error.file().map(|p| p.display().to_string()).unwrap_or_default();
                t.push(row);
            }
        }
    }
    t.write(path, meta)
}

fn write_intake(rows: &[MealRow], path: &Path, meta: &ReportMeta) -> Result<(), ReportError> {
    let mut header: Vec<String> = ["meal_id", "group", "n_classes", "n_images"].map(String::from).to_vec();
    for m in INTAKE_METRICS {
        header.extend(mean_sd_header(m));
    }
    let mut t = Table::new(header);
    for r in rows {
        let mut row = vec![r.row.meal_id.clone(), r.group.clone().unwrap_or_default(), r.row.n_classes.to_string(), r.row.n_images.to_string()];
        for m in intake_metrics(&r.row) {
            row.extend(mean_sd_cells(&m));
        }
        t.push(row);
    }
    t.write(path, meta)
}

fn write_segmentation(rows: &[MealRow], path: &Path, meta: &ReportMeta) -> Result<(), ReportError> {
    let mut header: Vec<String> = ["meal_id", "group", "n_classes", "n_images"].map(String::from).to_vec();
    header.extend(mean_sd_header("iou"));
    header.extend(mean_sd_header("top1"));
    let mut t = Table::new(header);
    for r in rows {
        let mut row = vec![r.row.meal_id.clone(), r.group.clone().unwrap_or_default(), r.row.n_classes.to_string(), r.row.n_images.to_string()];
        row.extend(mean_sd_cells(&r.iou));
        row.extend(mean_sd_cells(&r.top1));
        t.push(row);
    }
    t.write(path, meta)
}

fn write_agreement(eval: &Evaluation, dir: &Path, meta: &ReportMeta) -> Result<(), ReportError> {
    let plates = eval.after_plates();
    let mut summary = Table::new([
        "nutrient",
        "unit",
        "n",
        "slope",
        "intercept",
        "r_squared",
        "constant_y",
        "bias",
        "sd",
        "loa_lower",
        "loa_upper",
        "zero_within_loa",
        "mean_portion_content",
        "bias_pct_of_content",
        "status",
    ]);
    let mut points = Table::new(["nutrient", "series_id", "plate", "volume_method", "mass_method", "pair_mean", "difference"]);
    for (nutrient, result) in eval.agreement()? {
        let content: Vec<f64> = plates.iter().filter_map(|(_, p)| p.portion_content.get(nutrient)).collect();
        let mean_content = MeanSd::of(&content).mean;
        let unit = nutrient.unit().symbol().to_owned();
        match result {
            Ok(a) => {
                let (r, ba) = (&a.regression, &a.bland_altman);
                summary.push(vec![
                    nutrient.name().into(),
                    unit,
                    ba.n.to_string(),
                    num(r.slope),
                    num(r.intercept),
                    num(r.r_squared),
                    r.constant_y.to_string(),
                    num(ba.bias),
                    num(ba.sd),
                    num(ba.lower),
                    num(ba.upper),
                    ba.zero_within_limits().to_string(),
                    num(mean_content),
                    num(100.0 * ba.bias / mean_content),
                    "ok".into(),
                ]);
                let present = plates.iter().filter(|(_, p)| {
                    p.volume_method.get(nutrient).is_some() && p.mass_method.get(nutrient).is_some()
                });
                for ((s, p), (mean, diff)) in present.zip(&ba.points) {
                    points.push(vec![
                        nutrient.name().into(),
                        s.series_id.clone(),
                        p.index.to_string(),
                        opt(p.volume_method.get(nutrient)),
                        opt(p.mass_method.get(nutrient)),
                        num(*mean),
                        num(*diff),
                    ]);
                }
            }
            Err(e) => {
                let mut row = vec![String::new(); 15];
                row[0] = nutrient.name().into();
                row[1] = unit;
                row[2] = "0".into();
                row[12] = num(mean_content);
                row[14] = status_of(&e);
                summary.push(row);
            }
        }
    }
    summary.write(&dir.join(AGREEMENT_CSV), meta)?;
    points.write(&dir.join(POINTS_CSV), meta)
}

fn status_of(e: &MetricsError) -> String {
    match e {
        MetricsError::NoOverlap(_) => "n/a".into(),
        other => other.to_string(),
    }
}

fn write_nutrient_errors(eval: &Evaluation, path: &Path, meta: &ReportMeta) -> Result<(), ReportError> {
    let mut header: Vec<String> = vec!["nutrient".into(), "unit".into()];
    for m in ["error", "abs_error", "error_pct_of_portion", "error_pct_of_daily_value"] {
        header.extend(mean_sd_header(m));
    }
    header.push("mean_mass_method".into());
    let mut t = Table::new(header);
    for r in eval.nutrient_errors(&RdaTable::over_seventy()) {
        let mut row = vec![r.nutrient.name().to_owned(), r.nutrient.unit().symbol().to_owned()];
        for m in [&r.error, &r.absolute_error, &r.percent_of_portion, &r.percent_of_daily_value] {
            row.extend(mean_sd_cells(m));
        }
        row.push(num(r.mean_mass_method));
        t.push(row);
    }
    t.write(path, meta)
}

/// Writes every evaluation CSV into `dir` and returns their paths.
pub fn write_evaluation(eval: &Evaluation, dir: &Path, meta: &ReportMeta) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    let rows = eval.intake_rows()?;
    write_plates(eval, &dir.join(PLATES_CSV), meta)?;
    write_intake(&rows, &dir.join(INTAKE_CSV), meta)?;
    write_segmentation(&rows, &dir.join(SEGMENTATION_CSV), meta)?;
    write_agreement(eval, dir, meta)?;
    write_nutrient_errors(eval, &dir.join(NUTRIENT_ERRORS_CSV), meta)?;
    Ok([PLATES_CSV, INTAKE_CSV, SEGMENTATION_CSV, AGREEMENT_CSV, POINTS_CSV, NUTRIENT_ERRORS_CSV]
        .iter()
        .map(|f| dir.join(f))
        .collect())
}

pub fn write_timing(timings: &[StageTiming], path: &Path, meta: &ReportMeta) -> Result<(), ReportError> {
    let mut t = Table::new(["stage", "plates", "mean_seconds", "total_seconds"]);
    for s in timings {
        t.push(vec![s.stage.to_string(), s.plates.to_string(), num(s.mean_seconds()), num(s.total_seconds)]);
    }
    t.write(path, meta)
}

/// A summary-table line: a meal, a group subtotal, or the overall total.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub intake: IntakeErrorRow,
    pub iou: MeanSd,
    pub top1: MeanSd,
}

fn read_intake_rows(dir: &Path) -> Result<(String, Vec<(Option<String>, IntakeErrorRow)>), ReportError> {
    let t = ReadTable::read(&dir.join(INTAKE_CSV))?;
    let mut out = Vec::new();
    for (i, row) in t.rows.iter().enumerate() {
        let m: Vec<MeanSd> = INTAKE_METRICS.iter().map(|p| t.mean_sd(i, row, p)).collect::<Result<_, _>>()?;
        let group = t.get(row, "group")?;
        out.push((
            (!group.is_empty()).then(|| group.to_owned()),
            IntakeErrorRow {
                meal_id: t.get(row, "meal_id")?.to_owned(),
                n_classes: t.count(i, row, "n_classes")?,
                n_images: t.count(i, row, "n_images")?,
                volume_absolute: m[0],
                volume_signed: m[1],
                intake: IntakeErrorStats { absolute: m[2], signed: m[3], percent_absolute: m[4], percent_signed: m[5] },
            },
        ));
    }
    Ok((t.meta, out))
}

fn read_segmentation_rows(dir: &Path) -> Result<BTreeMap<String, (MeanSd, MeanSd)>, ReportError> {
    let t = ReadTable::read(&dir.join(SEGMENTATION_CSV))?;
    let mut out = BTreeMap::new();
    for (i, row) in t.rows.iter().enumerate() {
        out.insert(t.get(row, "meal_id")?.to_owned(), (t.mean_sd(i, row, "iou")?, t.mean_sd(i, row, "top1")?));
    }
    Ok(out)
}

/// Meal rows in file order, each group followed by its subtotal, then the
/// total over all meals. Pooling weights every plate equally.
pub fn summarize(dir: &Path) -> Result<(String, Vec<SummaryRow>), ReportError> {
    let (meta, meals) = read_intake_rows(dir)?;
    if meals.is_empty() {
        return Err(ReportError::NoData(dir.join(INTAKE_CSV)));
    }
    let seg = read_segmentation_rows(dir)?;
    let seg_of = |meal: &str| seg.get(meal).copied().unwrap_or_default();
    let pooled = |label: String, rows: &[&(Option<String>, IntakeErrorRow)]| {
        let intake: Vec<IntakeErrorRow> = rows.iter().map(|(_, r)| r.clone()).collect();
        let (ious, tops): (Vec<MeanSd>, Vec<MeanSd>) = rows.iter().map(|(_, r)| seg_of(&r.meal_id)).unzip();
        SummaryRow { intake: IntakeErrorRow::pool(label.clone(), &intake), label, iou: MeanSd::pool(&ious), top1: MeanSd::pool(&tops) }
    };
    let mut groups: Vec<Option<String>> = Vec::new();
    for (g, _) in &meals {
        if !groups.contains(g) {
            groups.push(g.clone());
        }
    }
    let mut out = Vec::new();
    for g in &groups {
        let members: Vec<&(Option<String>, IntakeErrorRow)> = meals.iter().filter(|(mg, _)| mg == g).collect();
        for (_, r) in &members {
            let (iou, top1) = seg_of(&r.meal_id);
            let label = match g {
                Some(g) => format!("{g}: {}", r.meal_id),
                None => r.meal_id.clone(),
            };
            out.push(SummaryRow { label, intake: r.clone(), iou, top1 });
        }
        if let Some(g) = g {
            out.push(pooled(format!("{g} subtotal"), &members));
        }
    }
    out.push(pooled("Total".into(), &meals.iter().collect::<Vec<_>>()));
    Ok((meta, out))
}

fn pm(m: &MeanSd) -> String {
    if m.n == 0 || !m.mean.is_finite() {
        "n/a".into()
    } else {
        format!("{:.1} ± {:.1}", m.mean, m.sd)
    }
}

/// Column headers of the bulk-intake summary table.
pub const INTAKE_TABLE_COLUMNS: [&str; 8] = [
    "meal",
    "classes (images)",
    "mean absolute error, food volume (mL)",
    "food volume error (mL)",
    "mean absolute error, intake (mL)",
    "error, intake (mL)",
    "3D % absolute intake error",
    "3D % intake error",
];

/// Aggregates the evaluation CSVs in `dir` into the two summary tables and
/// one agreement plot per nutrient. Returns the written paths.
pub fn write_summary(dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let (meta_line, rows) = summarize(dir)?;
    let mut intake = Table::new(INTAKE_TABLE_COLUMNS);
    let mut seg = Table::new(["meal", "classes (images)", "IOU", "top-1"]);
    for r in &rows {
        let counts = format!("{} ({})", r.intake.n_classes, r.intake.n_images);
        let mut line = vec![r.label.clone(), counts.clone()];
        line.extend(intake_metrics(&r.intake).iter().map(pm));
        intake.push(line);
        let top1 = if r.top1.n == 0 || !r.top1.mean.is_finite() { "n/a".into() } else { format!("{:.1}%", 100.0 * r.top1.mean) };
        let iou = if r.iou.n == 0 || !r.iou.mean.is_finite() { "n/a".into() } else { format!("{:.3} ± {:.3}", r.iou.mean, r.iou.sd) };
        seg.push(vec![r.label.clone(), counts, iou, top1]);
    }
    let write_raw = |t: &Table, name: &str| -> Result<PathBuf, ReportError> {
        let path = dir.join(name);
        let io = |source| ReportError::Io { path: path.clone(), source };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&t.header).map_err(|e| io(e.into()))?;
        for r in &t.rows {
            w.write_record(r).map_err(|e| io(e.into()))?;
        }
        let mut bytes = format!("{meta_line}\n").into_bytes();
        bytes.extend(w.into_inner().map_err(|e| io(e.into_error()))?);
        fs::write(&path, bytes).map_err(io)?;
        Ok(path)
    };
    let mut written = vec![write_raw(&intake, TABLE_INTAKE_CSV)?, write_raw(&seg, TABLE_SEGMENTATION_CSV)?];
    written.extend(write_plots(dir)?);
    Ok(written)
}

struct Agreement {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    bias: f64,
    lower: f64,
    upper: f64,
}

fn write_plots(dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let summary = ReadTable::read(&dir.join(AGREEMENT_CSV))?;
    let points = ReadTable::read(&dir.join(POINTS_CSV))?;
    let mut written = Vec::new();
    for (i, row) in summary.rows.iter().enumerate() {
        if summary.get(row, "status")? != "ok" {
            continue;
        }
        let name = summary.get(row, "nutrient")?;
        let nutrient: Nutrient = name.parse().map_err(|_| ReportError::Parse {
            path: summary.path.clone(),
            line: i + 3,
            message: format!("unknown nutrient {name}"),
        })?;
        let a = Agreement {
            slope: summary.float(i, row, "slope")?,
            intercept: summary.float(i, row, "intercept")?,
            r_squared: summary.float(i, row, "r_squared")?,
            bias: summary.float(i, row, "bias")?,
            lower: summary.float(i, row, "loa_lower")?,
            upper: summary.float(i, row, "loa_upper")?,
        };
        let mut pairs = Vec::new();
        let mut ba = Vec::new();
        for (j, p) in points.rows.iter().enumerate() {
            if points.get(p, "nutrient")? == name {
                pairs.push((points.float(j, p, "mass_method")?, points.float(j, p, "volume_method")?));
                ba.push((points.float(j, p, "pair_mean")?, points.float(j, p, "difference")?));
            }
        }
        let path = dir.join(format!("agreement_{name}.svg"));
        fs::write(&path, agreement_svg(nutrient, &a, &pairs, &ba)).map_err(|source| ReportError::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}

struct Axis {
    lo: f64,
    hi: f64,
    px0: f64,
    px1: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, px0: f64, px1: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        let pad = ((hi - lo) * 0.05).max(1e-9);
        Self { lo: lo - pad, hi: hi + pad, px0, px1 }
    }

    fn at(&self, v: f64) -> f64 {
        self.px0 + (v - self.lo) / (self.hi - self.lo) * (self.px1 - self.px0)
    }
}

fn panel(svg: &mut String, x: &Axis, y: &Axis, title: &str, xlabel: &str, ylabel: &str) {
    let (l, r) = (x.px0.min(x.px1), x.px0.max(x.px1));
    let (t, b) = (y.px0.min(y.px1), y.px0.max(y.px1));
    let _ = writeln!(svg, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{title}</text>"#, (l + r) / 2.0, t - 10.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{xlabel}</text>"#, (l + r) / 2.0, b + 35.0);
    let _ = writeln!(
        svg,
        r#"<text x="{0}" y="{1}" text-anchor="middle" font-size="12" transform="rotate(-90 {0} {1})">{ylabel}</text>"#,
        l - 40.0,
        (t + b) / 2.0
    );
    for (axis, horizontal) in [(x, true), (y, false)] {
        for k in 0..=4 {
            let v = axis.lo + (axis.hi - axis.lo) * k as f64 / 4.0;
            let p = axis.at(v);
            if horizontal {
                let _ = writeln!(svg, r#"<text x="{p:.1}" y="{}" text-anchor="middle" font-size="10">{v:.3}</text>"#, b + 15.0);
            } else {
                let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end" font-size="10">{v:.3}</text>"#, l - 5.0, p + 3.0);
            }
        }
    }
}

fn hline(svg: &mut String, x: &Axis, y: &Axis, v: f64, dash: bool) {
    let style = if dash { r#" stroke-dasharray="5,4""# } else { "" };
    let _ = writeln!(svg, r#"<line x1="{}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="gray"{style}/>"#, x.px0, y.at(v), x.px1, y.at(v));
}

/// Two panels: volume method against mass method with the fitted line, and
/// the Bland-Altman difference plot with bias and limits of agreement.
fn agreement_svg(nutrient: Nutrient, a: &Agreement, pairs: &[(f64, f64)], ba: &[(f64, f64)]) -> String {
    let unit = nutrient.unit().symbol();
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="900" height="420" font-family="sans-serif">"#);
    let _ = writeln!(svg, r#"<rect width="900" height="420" fill="white"/>"#);

    let all = || pairs.iter().flat_map(|(m, v)| [*m, *v]);
    let x = Axis::fit(all(), 80.0, 420.0);
    let y = Axis::fit(all(), 360.0, 40.0);
    panel(&mut svg, &x, &y, &format!("{} (r² = {:.3})", nutrient.name(), a.r_squared), &format!("mass method ({unit})"), &format!("volume method ({unit})"));
    let _ = writeln!(
        svg,
        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="2,3"/>"#,
        x.at(x.lo.max(y.lo)),
        y.at(x.lo.max(y.lo)),
        x.at(x.hi.min(y.hi)),
        y.at(x.hi.min(y.hi))
    );
    let fit = |v: f64| a.intercept + a.slope * v;
    let _ = writeln!(
        svg,
        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="firebrick"/>"#,
        x.at(x.lo),
        y.at(fit(x.lo).clamp(y.lo, y.hi)),
        x.at(x.hi),
        y.at(fit(x.hi).clamp(y.lo, y.hi))
    );
    for (m, v) in pairs {
        let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="steelblue"/>"#, x.at(*m), y.at(*v));
    }

    let bx = Axis::fit(ba.iter().map(|p| p.0), 520.0, 860.0);
    let by = Axis::fit(ba.iter().map(|p| p.1).chain([a.lower, a.upper, 0.0]), 360.0, 40.0);
    panel(&mut svg, &bx, &by, &format!("bias {:.3} {unit}", a.bias), &format!("mean of methods ({unit})"), &format!("volume − mass ({unit})"));
    hline(&mut svg, &bx, &by, a.bias, false);
    hline(&mut svg, &bx, &by, a.lower, true);
    hline(&mut svg, &bx, &by, a.upper, true);
    for (m, d) in ba {
        let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="steelblue"/>"#, bx.at(*m), by.at(*d));
    }
    svg.push_str("</svg>\n");
    svg
}
