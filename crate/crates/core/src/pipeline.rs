//! Batch pipeline: data items → sensors → warnings → fusion → frozen store,
//! plus the on-disk artifact layout served to readers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Deserialize;
use thiserror::Error;

use crate::explain::{build_explanation, ExplainError, ExplanationNode, ExplanationTree};
use crate::fusion::{fuse, generate_warning, FusionError, GenerationPolicy, Metric};
use crate::id::{EntityKind, IdTag};
use crate::model::{utc_seconds, DataItem, DataKind, FusedWarning, MethodReference, SensorDescriptor, SensorKind, SensorSignal};
use crate::outrage::{load_lexicon, run_outrage_sensor, LexiconEntry, OutrageError};
use crate::sensor::{
    repository_signal, run_chained_counter, run_counter, run_event_detector, run_repository, SensorConfig,
    SensorError,
};
use crate::store::{validate_store, EntityStore, StoreError, Violation};
use crate::template::{TemplateError, TemplateSet, TemplateViolation, Vocabulary};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("startup error: {0}")]
    Startup(String),
    #[error("input line {line}: {reason}")]
    Input { line: usize, reason: String },
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Outrage(#[from] OutrageError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("store failed validation: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn startup(msg: impl Into<String>) -> PipelineError {
    PipelineError::Startup(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorEntry {
    pub name: String,
    pub kind: SensorKind,
    pub target: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub threshold_count: Option<u64>,
    #[serde(default)]
    pub predicate: Vec<String>,
    /// Lexicon file for scorers.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    /// Earlier repository sensor whose retained items replace the full input.
    #[serde(default)]
    pub input: Option<String>,
    /// Earlier sensor whose signal this counter consumes.
    #[serde(default)]
    pub chain_from: Option<String>,
    /// Overrides the pipeline policy for this sensor's warnings.
    #[serde(default)]
    pub policy: Option<GenerationPolicy>,
    /// Marks the sensor as not causally traceable.
    #[serde(default)]
    pub methodology: Option<MethodReference>,
}

/// Pipeline configuration file (TOML). Relative paths resolve against the
/// file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Template directory; the shipped set when absent.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    /// Vocabulary schema file; the shipped vocabulary when absent.
    #[serde(default)]
    pub vocabulary: Option<PathBuf>,
    #[serde(default)]
    pub targets: Vec<String>,
    pub policy: GenerationPolicy,
    pub sensors: Vec<SensorEntry>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| startup(format!("config: {e}")))
    }
}

struct ResolvedSensor {
    entry: SensorEntry,
    descriptor: SensorDescriptor,
    config: SensorConfig,
    lexicon: Vec<LexiconEntry>,
    policy: GenerationPolicy,
}

/// A validated configuration with lexicons and templates loaded.
pub struct Pipeline {
    sensors: Vec<ResolvedSensor>,
    policy: GenerationPolicy,
    pub templates: TemplateSet,
    pub vocabulary: Vocabulary,
}

impl Pipeline {
    pub fn load(config_path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(config_path)
            .map_err(|e| startup(format!("cannot read {}: {e}", config_path.display())))?;
        let base = config_path.parent().unwrap_or(Path::new("."));
        Self::from_config(PipelineConfig::parse(&text)?, base)
    }

    pub fn from_config(config: PipelineConfig, base: &Path) -> Result<Self, PipelineError> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_owned() } else { base.join(p) };
        let templates = match &config.templates {
            Some(dir) => TemplateSet::load_dir(&resolve(dir)).map_err(|e| startup(e.to_string()))?,
            None => TemplateSet::builtin(),
        };
        let vocabulary = match &config.vocabulary {
            Some(file) => TemplateSet::load_vocabulary(&resolve(file)).map_err(|e| startup(e.to_string()))?,
            None => TemplateSet::builtin_vocabulary(),
        };
        if let Some(v) = templates.validate(&vocabulary).first() {
            return Err(startup(format!("template vocabulary: {v}")));
        }
        config.policy.validate().map_err(|e| startup(e.to_string()))?;
        if config.sensors.is_empty() {
            return Err(startup("at least one sensor is required"));
        }

        let mut sensors: Vec<ResolvedSensor> = Vec::new();
        for entry in config.sensors {
            let name = entry.name.clone();
            if sensors.iter().any(|s| s.entry.name == name) {
                return Err(startup(format!("duplicate sensor name {name:?}")));
            }
            if !config.targets.is_empty() && !config.targets.contains(&entry.target) {
                return Err(startup(format!("sensor {name}: target {:?} is not declared", entry.target)));
            }
            let earlier = |other: &str| sensors.iter().find(|s| s.entry.name == other);
            if let Some(input) = &entry.input {
                match earlier(input) {
                    Some(s) if s.entry.kind == SensorKind::Repository => {}
                    _ => return Err(startup(format!("sensor {name}: input {input:?} is not an earlier repository"))),
                }
            }
            if let Some(up) = &entry.chain_from {
                if entry.kind != SensorKind::Counter {
                    return Err(startup(format!("sensor {name}: only counters can be chained")));
                }
                match earlier(up) {
                    Some(s) if s.entry.chain_from.is_none() => {}
                    Some(_) => return Err(startup(format!("sensor {name}: chains are limited to depth 2"))),
                    None => return Err(startup(format!("sensor {name}: chain_from {up:?} is not an earlier sensor"))),
                }
            }
            let lexicon = match (entry.kind, &entry.lexicon) {
                (SensorKind::Scorer, Some(path)) => load_lexicon(&resolve(path))
                    .map_err(|e| startup(format!("sensor {name}: lexicon {}: {e}", path.display())))?,
                (SensorKind::Scorer, None) => return Err(startup(format!("sensor {name}: scorers need a lexicon"))),
                _ => Vec::new(),
            };
            let config_keywords_needed = matches!(entry.kind, SensorKind::Counter | SensorKind::EventDetector);
            if config_keywords_needed && entry.keywords.is_empty() {
                return Err(startup(format!("sensor {name}: keywords are required")));
            }
            if entry.kind == SensorKind::Repository && entry.predicate.is_empty() {
                return Err(startup(format!("sensor {name}: predicate is required")));
            }
            if entry.kind == SensorKind::EventDetector && !entry.threshold_count.is_some_and(|t| t >= 1) {
                return Err(startup(format!("sensor {name}: threshold_count >= 1 is required")));
            }
            let policy = entry.policy.clone().unwrap_or_else(|| config.policy.clone());
            policy.validate().map_err(|e| startup(format!("sensor {name}: {e}")))?;
            if policy.metric == Metric::OutrageAvg && entry.kind != SensorKind::Scorer {
                return Err(startup(format!("sensor {name}: outrage_avg applies to scorers only")));
            }
            let mut descriptor = SensorDescriptor::new(&name, entry.kind);
            if let Some(method) = &entry.methodology {
                if method.model_name.is_empty() {
                    return Err(startup(format!("sensor {name}: methodology needs a model_name")));
                }
                descriptor = descriptor.with_methodology(method.clone());
            }
            let config = SensorConfig {
                keywords: entry.keywords.clone(),
                threshold_count: entry.threshold_count,
                predicate: entry.predicate.clone(),
                target: entry.target.clone(),
            };
            sensors.push(ResolvedSensor {
                entry,
                descriptor,
                config,
                lexicon,
                policy,
            });
        }

        Ok(Pipeline {
            sensors,
            policy: config.policy,
            templates,
            vocabulary,
        })
    }

    pub fn fusion_policy(&self) -> &GenerationPolicy {
        &self.policy
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputRecord {
    #[serde(default)]
    id: Option<IdTag>,
    source: String,
    kind: DataKind,
    timestamp: String,
    text: String,
}

/// Reads newline-delimited input records; ids are minted when absent.
pub fn read_items<R: BufRead>(input: R) -> Result<Vec<DataItem>, PipelineError> {
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| PipelineError::Input { line: i + 1, reason };
        let rec: InputRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let timestamp = utc_seconds::parse(&rec.timestamp).map_err(|e| bad(format!("timestamp: {e}")))?;
        if rec.text.is_empty() {
            return Err(bad("text is empty".into()));
        }
        let mut item = DataItem::new(&rec.source, rec.kind, timestamp, &rec.text);
        if let Some(id) = rec.id {
            if id.kind() != EntityKind::Data {
                return Err(bad(format!("id {id} is not a data tag")));
            }
            item.id = id;
        }
        items.push(item);
    }
    Ok(items)
}

pub struct PipelineOutput {
    pub store: EntityStore,
    pub fused: Vec<FusedWarning>,
}

/// Runs every sensor, generates and fuses warnings, and returns the
/// validated store.
pub fn run_pipeline(pipeline: &Pipeline, items: &[DataItem]) -> Result<PipelineOutput, PipelineError> {
    let mut items = items.to_vec();
    items.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
    items.dedup_by(|a, b| a.id == b.id);

    let mut store = EntityStore::new();
    for item in &items {
        store.insert(item.clone())?;
    }

    let mut filtered: HashMap<&str, Vec<DataItem>> = HashMap::new();
    let mut signals: HashMap<&str, SensorSignal> = HashMap::new();
    let mut warnings = Vec::new();

    for sensor in &pipeline.sensors {
        let name = sensor.entry.name.as_str();
        let input: &[DataItem] = match &sensor.entry.input {
            Some(repo) => filtered.get(repo.as_str()).map(Vec::as_slice).unwrap_or(&[]),
            None => &items,
        };
        let mut retained = None;
        let signal = match (sensor.entry.kind, &sensor.entry.chain_from) {
            (SensorKind::Counter, Some(up)) => match signals.get(up.as_str()) {
                Some(upstream) => Some(run_chained_counter(&sensor.descriptor, &sensor.config, upstream)?),
                None => None,
            },
            (SensorKind::Counter, None) => Some(run_counter(&sensor.descriptor, &sensor.config, input)?),
            (SensorKind::EventDetector, _) => run_event_detector(&sensor.descriptor, &sensor.config, input)?,
            (SensorKind::Repository, _) => {
                retained = Some(run_repository(&sensor.descriptor, &sensor.config, input)?);
                Some(repository_signal(&sensor.descriptor, &sensor.config, input)?)
            }
            (SensorKind::Scorer, _) => {
                run_outrage_sensor(&sensor.descriptor, &sensor.lexicon, input, &sensor.config.target)?
            }
        };
        if let Some(kept) = retained {
            filtered.insert(name, kept);
        }
        let Some(signal) = signal.filter(|s| !s.consumed_ids.is_empty()) else {
            continue;
        };
        store.insert(sensor.descriptor.clone())?;
        store.insert(signal.clone())?;
        if let Some(w) = generate_warning(&sensor.policy, &signal)? {
            store.insert(w.clone())?;
            warnings.push(w);
        }
        signals.insert(name, signal);
    }

    let fused = fuse(&warnings, &pipeline.policy);
    for f in &fused {
        store.insert(f.clone())?;
    }
    let report = validate_store(&store);
    if !report.is_empty() {
        return Err(PipelineError::Invalid(report));
    }
    Ok(PipelineOutput { store, fused })
}

/// A frozen run: the store plus one explanation tree per fused warning.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub store: EntityStore,
    pub trees: IndexMap<IdTag, ExplanationTree>,
}

pub const EXPLANATIONS_DIR: &str = "explanations";

impl Artifacts {
    pub fn build(store: EntityStore, templates: &TemplateSet) -> Result<Self, PipelineError> {
        let mut trees = IndexMap::new();
        for f in store.fused_warnings() {
            trees.insert(f.id.clone(), build_explanation(&store, &f.id, templates)?);
        }
        Ok(Self { store, trees })
    }

    pub fn fused_warnings(&self) -> impl Iterator<Item = &FusedWarning> {
        self.store.fused_warnings()
    }

    /// Finds a node in any tree.
    pub fn node(&self, id: &IdTag) -> Option<(&ExplanationTree, &ExplanationNode)> {
        self.trees.values().find_map(|t| t.nodes.get(id).map(|n| (t, n)))
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), PipelineError> {
        self.store.write_dir(dir)?;
        let exp = dir.join(EXPLANATIONS_DIR);
        if exp.exists() {
            fs::remove_dir_all(&exp)?;
        }
        fs::create_dir_all(&exp)?;
        for (id, tree) in &self.trees {
            let mut out = BufWriter::new(File::create(exp.join(format!("{id}.ndjson")))?);
            tree.write_ndjson(&mut out)?;
            out.flush()?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, PipelineError> {
        if !dir.is_dir() {
            return Err(startup(format!("artifact directory {} not found", dir.display())));
        }
        let store = EntityStore::read_dir(dir)?;
        let mut loaded: BTreeMap<IdTag, ExplanationTree> = BTreeMap::new();
        let exp = dir.join(EXPLANATIONS_DIR);
        if exp.is_dir() {
            for entry in fs::read_dir(&exp)? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "ndjson") {
                    let tree = ExplanationTree::read_ndjson(BufReader::new(File::open(&path)?))?;
                    loaded.insert(tree.fused_id.clone(), tree);
                }
            }
        }
        // store order, so listings are stable
        let mut trees = IndexMap::new();
        let mut seen = HashSet::new();
        for f in store.fused_warnings() {
            if let Some(tree) = loaded.remove(&f.id) {
                seen.insert(f.id.clone());
                trees.insert(f.id.clone(), tree);
            }
        }
        if let Some(orphan) = loaded.keys().next() {
            return Err(startup(format!("explanation for unknown fused warning {orphan}")));
        }
        Ok(Self { store, trees })
    }
}

/// Checks a store and a template set; returns store violations and template
/// vocabulary violations.
pub fn validate_all(store: &EntityStore, templates: &TemplateSet, vocabulary: &Vocabulary) -> (Vec<Violation>, Vec<TemplateViolation>) {
    (validate_store(store), templates.validate(vocabulary))
}

impl From<TemplateError> for PipelineError {
    fn from(e: TemplateError) -> Self {
        startup(e.to_string())
    }
}
