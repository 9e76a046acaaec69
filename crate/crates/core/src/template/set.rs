use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::schema::parse_slot;
use super::{validate_template, ParseError, Template, TemplateViolation, Vocabulary};
use crate::model::{Level, SensorKind};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("{file}: {source}")]
    Parse { file: String, source: ParseError },
    #[error("template file name {0:?} is not <level>.<sensor_kind|any>.tmpl")]
    BadFileName(String),
    #[error("missing template for {0}")]
    Missing(String),
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Templates keyed by `(level, sensor kind)`; `None` is the `any` fallback.
#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    templates: BTreeMap<(Level, Option<SensorKind>), Template>,
}

const BUILTIN: &[(&str, &str)] = &[
    ("fused.any.tmpl", include_str!("../../templates/fused.any.tmpl")),
    ("warning.any.tmpl", include_str!("../../templates/warning.any.tmpl")),
    ("sensor.scorer.tmpl", include_str!("../../templates/sensor.scorer.tmpl")),
    ("sensor.counter.tmpl", include_str!("../../templates/sensor.counter.tmpl")),
    ("sensor.event_detector.tmpl", include_str!("../../templates/sensor.event_detector.tmpl")),
    ("sensor.repository.tmpl", include_str!("../../templates/sensor.repository.tmpl")),
    ("trigger.any.tmpl", include_str!("../../templates/trigger.any.tmpl")),
    ("data.any.tmpl", include_str!("../../templates/data.any.tmpl")),
    ("method.any.tmpl", include_str!("../../templates/method.any.tmpl")),
    ("method.scorer.tmpl", include_str!("../../templates/method.scorer.tmpl")),
];

const BUILTIN_VOCABULARY: &str = include_str!("../../templates/vocabulary.txt");

impl TemplateSet {
    /// The shipped template set.
    pub fn builtin() -> Self {
        Self::from_sources(BUILTIN.iter().copied()).expect("shipped templates parse")
    }

    pub fn builtin_vocabulary() -> Vocabulary {
        Vocabulary::parse(BUILTIN_VOCABULARY).expect("shipped vocabulary parses")
    }

    /// Builds a set from `(file name, source)` pairs. One trailing newline is
    /// stripped from each source so files may end with a newline.
    pub fn from_sources<'a>(files: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, TemplateError> {
        let mut set = TemplateSet::default();
        for (file, source) in files {
            let slot = file
                .strip_suffix(".tmpl")
                .and_then(parse_slot)
                .ok_or_else(|| TemplateError::BadFileName(file.to_owned()))?;
            let source = source.strip_suffix('\n').unwrap_or(source);
            let template = Template::new(slot.0, slot.1, source).map_err(|source| TemplateError::Parse {
                file: file.to_owned(),
                source,
            })?;
            set.insert(template);
        }
        Ok(set)
    }

    /// Loads every `*.tmpl` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut files = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "tmpl") {
                let name = path.file_name().unwrap().to_string_lossy().into_owned();
                files.push((name, fs::read_to_string(&path)?));
            }
        }
        files.sort();
        Self::from_sources(files.iter().map(|(n, s)| (n.as_str(), s.as_str())))
    }

    pub fn load_vocabulary(path: &Path) -> Result<Vocabulary, TemplateError> {
        Vocabulary::parse(&fs::read_to_string(path)?).map_err(TemplateError::Vocabulary)
    }

    pub fn insert(&mut self, template: Template) {
        self.templates.insert((template.level, template.sensor_kind), template);
    }

    /// Exact `(level, kind)` match first, then the level's `any` template.
    pub fn get(&self, level: Level, sensor_kind: Option<SensorKind>) -> Result<&Template, TemplateError> {
        sensor_kind
            .and_then(|k| self.templates.get(&(level, Some(k))))
            .or_else(|| self.templates.get(&(level, None)))
            .ok_or_else(|| TemplateError::Missing(super::slot_name(level, sensor_kind)))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Template> {
        self.templates.values()
    }

    pub fn validate(&self, vocabulary: &Vocabulary) -> Vec<TemplateViolation> {
        self.iter().flat_map(|t| validate_template(t, vocabulary)).collect()
    }
}
