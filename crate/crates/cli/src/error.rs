use std::path::{Path, PathBuf};

use plate_intake::autoencoder::AutoencoderError;
use plate_intake::classifier::ClassifierError;
use plate_intake::config::ConfigError;
use plate_intake::dataset::DatasetError;
use plate_intake::pipeline::{PipelineError, SeriesFailure};
use plate_intake::report::ReportError;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Model,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Model => 3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Model => "model",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
    pub file: Option<PathBuf>,
    /// Per-series failures of an evaluation that still wrote its reports.
    pub series: Vec<(String, Kind, String, Option<PathBuf>)>,
}

impl Failure {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), file: None, series: Vec::new() }
    }

    pub fn at(mut self, file: Option<&Path>) -> Self {
        self.file = file.map(Path::to_path_buf);
        self
    }

    pub fn partial(failures: &[&SeriesFailure]) -> Self {
        let series: Vec<_> = failures
            .iter()
            .map(|f| (f.series_id.clone(), pipeline_kind(&f.error), f.error.to_string(), f.error.file().map(Path::to_path_buf)))
            .collect();
        // a missing model anywhere outranks data problems
        let kind = if series.iter().any(|s| s.1 == Kind::Model) { Kind::Model } else { Kind::Data };
        Self { kind, message: format!("{} series failed", series.len()), file: None, series }
    }

    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.kind.name(), "message": self.message });
        if let Some(f) = &self.file {
            v["file"] = json!(f.display().to_string());
        }
        if !self.series.is_empty() {
            v["series"] = self
                .series
                .iter()
                .map(|(id, kind, message, file)| {
                    json!({
                        "series_id": id,
                        "error": kind.name(),
                        "message": message,
                        "file": file.as_ref().map(|f| f.display().to_string()),
                    })
                })
                .collect();
        }
        v.to_string()
    }
}

fn classifier_kind(e: &ClassifierError) -> Kind {
    match e {
        ClassifierError::MissingClassExample { .. }
        | ClassifierError::NoReferencePlates
        | ClassifierError::MaskDisagreement { .. }
        | ClassifierError::NoFoodPixels
        | ClassifierError::ShapeMismatch { .. } => Kind::Data,
        _ => Kind::Model,
    }
}

fn pipeline_kind(e: &PipelineError) -> Kind {
    match e {
        PipelineError::Model(m) => classifier_kind(m),
        _ => Kind::Data,
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let file = match &e {
            ConfigError::Parse { path, .. } | ConfigError::Io { path, .. } => Some(path.clone()),
            ConfigError::Invalid(_) => None,
        };
        Failure { file, ..Failure::new(Kind::Usage, e.to_string()) }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::new(Kind::Data, e.to_string()).at(e.path())
    }
}

impl From<AutoencoderError> for Failure {
    fn from(e: AutoencoderError) -> Self {
        let kind = match e {
            AutoencoderError::CorpusTooSmall { .. } | AutoencoderError::EmptyMask { .. } | AutoencoderError::ShapeMismatch { .. } => Kind::Data,
            _ => Kind::Model,
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<ClassifierError> for Failure {
    fn from(e: ClassifierError) -> Self {
        let file = match &e {
            ClassifierError::Registry { path, .. } => Some(path.clone()),
            _ => None,
        };
        Failure { file, ..Failure::new(classifier_kind(&e), e.to_string()) }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::new(pipeline_kind(&e), e.to_string()).at(e.file())
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Pipeline(p) => p.into(),
            ReportError::Io { ref path, .. } | ReportError::Parse { ref path, .. } | ReportError::NoData(ref path) => {
                let path = path.clone();
                Failure::new(Kind::Data, e.to_string()).at(Some(&path))
            }
        }
    }
}
