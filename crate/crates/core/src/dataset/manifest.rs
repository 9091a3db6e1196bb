//! JSON-lines manifest: one record per plate, image paths relative to the
//! manifest's directory.
//!
//! ```text
//! {"series_id":"s1","meal_id":"m","intake_index":0,"color_path":"images/s1_0_color.png",
//!  "depth_path":"images/s1_0_depth.png","mask_path":"images/s1_0_mask.png",
//!  "labels_path":"images/s1_0_labels.png","mass_g":[120.0,80.5],"intake_level":0.0}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::png_io::{
    read_depth_png, read_labels_png, read_mask_png, read_rgb_png, write_depth_png,
    write_labels_png, write_mask_png, write_rgb_png,
};
use super::{DatasetError, PlateSeries, RgbdPlate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub series_id: String,
    pub meal_id: String,
    pub intake_index: usize,
    pub color_path: PathBuf,
    pub depth_path: PathBuf,
    pub mask_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    pub mass_g: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intake_level: Option<f64>,
}

/// Records of one series, sorted by `intake_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecords {
    pub series_id: String,
    pub records: Vec<ManifestRecord>,
}

/// Parses the manifest and groups records by series, in order of first
/// appearance. Image files are not touched.
pub fn read_manifest_records(path: &Path) -> Result<Vec<SeriesRecords>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            DatasetError::MissingFile(path.to_path_buf())
        } else {
            DatasetError::Io { path: path.to_path_buf(), source: e }
        }
    })?;
    let mut groups: Vec<SeriesRecords> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io { path: path.to_path_buf(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        match groups.iter_mut().find(|g| g.series_id == record.series_id) {
            Some(g) => g.records.push(record),
            None => groups.push(SeriesRecords {
                series_id: record.series_id.clone(),
                records: vec![record],
            }),
        }
    }
    for g in &mut groups {
        g.records.sort_by_key(|r| r.intake_index);
    }
    Ok(groups)
}

fn check_dims(file: &Path, expected: (usize, usize), found: (usize, usize)) -> Result<(), DatasetError> {
    if expected != found {
        return Err(DatasetError::DimensionMismatch { file: file.to_path_buf(), expected, found });
    }
    Ok(())
}

/// Loads the images of one series. `base` is the manifest's directory.
pub fn load_series(base: &Path, series: &SeriesRecords) -> Result<PlateSeries, DatasetError> {
    let invalid = |message: String| DatasetError::InvalidSeries {
        series: series.series_id.clone(),
        message,
    };
    let first = series.records.first().ok_or_else(|| invalid("no records".into()))?;
    if first.intake_index != 0 {
        return Err(invalid("no reference plate (intake_index 0)".into()));
    }
    if let Some(w) = series.records.windows(2).find(|w| w[0].intake_index == w[1].intake_index) {
        return Err(invalid(format!("intake_index {} appears twice", w[0].intake_index)));
    }
    if series.records.iter().any(|r| r.meal_id != first.meal_id) {
        return Err(invalid("records disagree on meal_id".into()));
    }
    let ref_mass: f64 = first.mass_g.iter().sum();
    let mut plates = Vec::with_capacity(series.records.len());
    for rec in &series.records {
        let color_path = base.join(&rec.color_path);
        let color = read_rgb_png(&color_path)?;
        let dims = color.dims();
        let depth_path = base.join(&rec.depth_path);
        let depth = read_depth_png(&depth_path)?;
        check_dims(&depth_path, dims, depth.dims())?;
        let mask_path = base.join(&rec.mask_path);
        let mask = read_mask_png(&mask_path)?;
        check_dims(&mask_path, dims, mask.dims())?;
        let labels = match &rec.labels_path {
            Some(p) => {
                let p = base.join(p);
                let l = read_labels_png(&p)?;
                check_dims(&p, dims, l.dims())?;
                if let Some(k) = l.iter().flatten().find(|k| **k as usize >= rec.mass_g.len()) {
                    return Err(DatasetError::UnknownClass { class: *k as usize, classes: rec.mass_g.len() });
                }
                Some(l)
            }
            None => None,
        };
        let level = match rec.intake_level {
            Some(l) => l,
            None if rec.intake_index == 0 => 0.0,
            None if ref_mass > 0.0 => 1.0 - rec.mass_g.iter().sum::<f64>() / ref_mass,
            None => 0.0,
        };
        let plate = RgbdPlate::new(color, depth, mask, labels, rec.mass_g.clone(), level)
            .map_err(|e| invalid(format!("intake_index {}: {e}", rec.intake_index)))?;
        plates.push(plate);
    }
    PlateSeries::new(&series.series_id, &first.meal_id, plates)
}

/// Loads every series; the first failure aborts the whole load.
pub fn load_manifest(path: &Path) -> Result<Vec<PlateSeries>, DatasetError> {
    let base = path.parent().unwrap_or(Path::new("."));
    read_manifest_records(path)?.iter().map(|s| load_series(base, s)).collect()
}

/// Writes images under `dir/images/` and `dir/manifest.jsonl`; returns the
/// manifest path.
pub fn write_manifest(dir: &Path, series: &[PlateSeries]) -> Result<PathBuf, DatasetError> {
    let io = |path: &Path, e: std::io::Error| DatasetError::Io { path: path.to_path_buf(), source: e };
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| io(&images, e))?;
    let manifest = dir.join("manifest.jsonl");
    let mut out = Vec::new();
    for s in series {
        for (i, plate) in s.plates.iter().enumerate() {
            let rel = |kind: &str| PathBuf::from("images").join(format!("{}_{i}_{kind}.png", s.series_id));
            let record = ManifestRecord {
                series_id: s.series_id.clone(),
                meal_id: s.meal_id.clone(),
                intake_index: i,
                color_path: rel("color"),
                depth_path: rel("depth"),
                mask_path: rel("mask"),
                labels_path: plate.class_labels().map(|_| rel("labels")),
                mass_g: plate.true_mass_g.clone(),
                intake_level: Some(plate.intake_level),
            };
            write_rgb_png(&dir.join(&record.color_path), plate.color())?;
            write_depth_png(&dir.join(&record.depth_path), plate.depth())?;
            write_mask_png(&dir.join(&record.mask_path), plate.food_mask())?;
            if let (Some(p), Some(l)) = (&record.labels_path, plate.class_labels()) {
                write_labels_png(&dir.join(p), l)?;
            }
            serde_json::to_writer(&mut out, &record).expect("records serialize");
            out.push(b'\n');
        }
    }
    std::fs::File::create(&manifest)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| io(&manifest, e))?;
    Ok(manifest)
}
