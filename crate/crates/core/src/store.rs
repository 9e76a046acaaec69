//! Append-only entity store keyed by id tag.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::id::{EntityKind, IdTag};
use crate::model::{DataItem, Entity, FusedWarning, SensorDescriptor, SensorSignal, Warning};
use crate::sensor::normalize_token;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not found: {0}")]
    NotFound(IdTag),
    #[error("corrupt reference: {id} holds a {found} entity")]
    CorruptReference { id: IdTag, found: EntityKind },
    #[error("duplicate id {0} with different content")]
    Duplicate(IdTag),
    #[error("{path}:{line}: {source}")]
    Decode {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Entities of every kind, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityStore {
    entities: IndexMap<IdTag, Entity>,
}

macro_rules! typed_getter {
    ($name:ident, $variant:ident, $ty:ty, $kind:ident) => {
        pub fn $name(&self, id: &IdTag) -> Result<&$ty, StoreError> {
            match self.resolve(id)? {
                Entity::$variant(e) => Ok(e),
                other => Err(StoreError::CorruptReference {
                    id: id.clone(),
                    found: other.kind(),
                }),
            }
        }
    };
}

impl EntityStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Appends an entity under its own id. Re-inserting identical content is a no-op.
    pub fn insert(&mut self, entity: impl Into<Entity>) -> Result<IdTag, StoreError> {
        let entity = entity.into();
        let id = entity.id().clone();
        match self.entities.get(&id) {
            Some(existing) if *existing == entity => Ok(id),
            Some(_) => Err(StoreError::Duplicate(id)),
            None => {
                self.entities.insert(id.clone(), entity);
                Ok(id)
            }
        }
    }

    /// Stores `entity` under `key` without checking that the two agree.
    /// Used to import foreign stores; [`validate_store`] reports mismatches.
    pub fn insert_under(&mut self, key: IdTag, entity: Entity) {
        self.entities.insert(key, entity);
    }

    pub fn contains(&self, id: &IdTag) -> bool {
        self.entities.contains_key(id)
    }

    pub fn resolve(&self, id: &IdTag) -> Result<&Entity, StoreError> {
        let entity = self
            .entities
            .get(id)
            .ok_or_else(|| StoreError::NotFound(id.clone()))?;
        if entity.kind() != id.kind() {
            return Err(StoreError::CorruptReference {
                id: id.clone(),
                found: entity.kind(),
            });
        }
        Ok(entity)
    }

    typed_getter!(data, Data, DataItem, Data);
    typed_getter!(sensor, Sensor, SensorDescriptor, Sensor);
    typed_getter!(signal, Signal, SensorSignal, Signal);
    typed_getter!(warning, Warning, Warning, Warning);
    typed_getter!(fused, Fused, FusedWarning, Fused);

    /// `(key, entity)` pairs in insertion order.
    pub fn entries(&self) -> impl Iterator<Item = (&IdTag, &Entity)> {
        self.entities.iter()
    }

    pub fn fused_warnings(&self) -> impl Iterator<Item = &FusedWarning> {
        self.entities.values().filter_map(|e| match e {
            Entity::Fused(f) => Some(f),
            _ => None,
        })
    }

    pub fn data_items(&self) -> impl Iterator<Item = &DataItem> {
        self.entities.values().filter_map(|e| match e {
            Entity::Data(d) => Some(d),
            _ => None,
        })
    }

    pub fn signals(&self) -> impl Iterator<Item = &SensorSignal> {
        self.entities.values().filter_map(|e| match e {
            Entity::Signal(s) => Some(s),
            _ => None,
        })
    }

    /// Writes one newline-delimited JSON file per entity kind into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir)?;
        for (file, kind) in STORE_FILES {
            let mut out = BufWriter::new(File::create(dir.join(file))?);
            for entity in self.entities.values().filter(|e| e.kind() == kind) {
                match entity {
                    Entity::Data(e) => write_record(&mut out, e)?,
                    Entity::Sensor(e) => write_record(&mut out, e)?,
                    Entity::Signal(e) => write_record(&mut out, e)?,
                    Entity::Warning(e) => write_record(&mut out, e)?,
                    Entity::Fused(e) => write_record(&mut out, e)?,
                }
            }
            out.flush()?;
        }
        Ok(())
    }

    /// Reads a store written by [`EntityStore::write_dir`]. Missing files are empty.
    pub fn read_dir(dir: &Path) -> Result<Self, StoreError> {
        let mut store = EntityStore::new();
        for (file, kind) in STORE_FILES {
            let path = dir.join(file);
            if !path.exists() {
                continue;
            }
            match kind {
                EntityKind::Data => read_records::<DataItem>(&path, &mut store)?,
                EntityKind::Sensor => read_records::<SensorDescriptor>(&path, &mut store)?,
                EntityKind::Signal => read_records::<SensorSignal>(&path, &mut store)?,
                EntityKind::Warning => read_records::<Warning>(&path, &mut store)?,
                EntityKind::Fused => read_records::<FusedWarning>(&path, &mut store)?,
                EntityKind::Node => unreachable!("nodes are not stored"),
            }
        }
        Ok(store)
    }
}

pub const STORE_FILES: [(&str, EntityKind); 5] = [
    ("data.ndjson", EntityKind::Data),
    ("sensors.ndjson", EntityKind::Sensor),
    ("signals.ndjson", EntityKind::Signal),
    ("warnings.ndjson", EntityKind::Warning),
    ("fused.ndjson", EntityKind::Fused),
];

fn write_record<W: Write, T: Serialize>(out: &mut W, record: &T) -> Result<(), StoreError> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn read_records<T>(path: &Path, store: &mut EntityStore) -> Result<(), StoreError>
where
    T: DeserializeOwned + Into<Entity>,
{
    let reader = BufReader::new(File::open(path)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|source| StoreError::Decode {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        store.insert(record)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Entity stored under a key other than its own id.
    KeyMismatch,
    /// Reference to an id the store does not hold.
    DanglingReference,
    /// Reference to an entity kind not allowed for that field.
    EdgeDirection,
    /// Signal consumes a signal that itself consumes signals.
    ChainDepth,
    TriggerNotConsumed,
    TriggerSpan,
    CountMismatch,
    TargetMismatch,
    EmptyFused,
    MissingMethod,
    EmptyText,
    OutOfRange,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Rule::KeyMismatch => "key-mismatch",
            Rule::DanglingReference => "dangling-reference",
            Rule::EdgeDirection => "edge-direction",
            Rule::ChainDepth => "chain-depth",
            Rule::TriggerNotConsumed => "trigger-not-consumed",
            Rule::TriggerSpan => "trigger-span",
            Rule::CountMismatch => "count-mismatch",
            Rule::TargetMismatch => "target-mismatch",
            Rule::EmptyFused => "empty-fused",
            Rule::MissingMethod => "missing-method",
            Rule::EmptyText => "empty-text",
            Rule::OutOfRange => "out-of-range",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub id: IdTag,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}", self.id, self.rule, self.detail)
    }
}

/// Checks referential integrity and the downstream-only edge discipline.
/// An empty report means every navigation from a fused warning terminates
/// at data or sensor entities.
pub fn validate_store(store: &EntityStore) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut push = |id: &IdTag, rule: Rule, detail: String| {
        report.push(Violation {
            id: id.clone(),
            rule,
            detail,
        })
    };

    for (key, entity) in store.entries() {
        let id = entity.id();
        if key != id {
            push(key, Rule::KeyMismatch, format!("holds entity {id}"));
            continue;
        }

        // (reference, allowed kinds)
        let edges: Vec<(&IdTag, &[EntityKind])> = match entity {
            Entity::Data(d) => {
                if d.text.is_empty() {
                    push(id, Rule::EmptyText, "data item text is empty".into());
                }
                Vec::new()
            }
            Entity::Sensor(s) => {
                if !s.causal_traceable && s.method_note.is_none() {
                    push(id, Rule::MissingMethod, "non-traceable sensor lacks a method note".into());
                }
                Vec::new()
            }
            Entity::Signal(s) => {
                check_signal(store, s, &mut push);
                std::iter::once((&s.sensor_id, &[EntityKind::Sensor][..]))
                    .chain(
                        s.consumed_ids
                            .iter()
                            .map(|c| (c, &[EntityKind::Data, EntityKind::Signal][..])),
                    )
                    .chain(s.triggers.iter().map(|t| (&t.data_id, &[EntityKind::Data][..])))
                    .collect()
            }
            Entity::Warning(w) => {
                if !(0.0..=1.0).contains(&w.confidence) {
                    push(id, Rule::OutOfRange, format!("confidence {}", w.confidence));
                }
                if let Ok(Entity::Signal(s)) = store.resolve(&w.signal_id) {
                    if s.target != w.target {
                        push(id, Rule::TargetMismatch, format!("signal {} targets {:?}", s.id, s.target));
                    }
                }
                vec![(&w.signal_id, &[EntityKind::Signal][..])]
            }
            Entity::Fused(f) => {
                if f.warning_ids.is_empty() {
                    push(id, Rule::EmptyFused, "fused warning has no members".into());
                }
                if !(0.0..=1.0).contains(&f.confidence) {
                    push(id, Rule::OutOfRange, format!("confidence {}", f.confidence));
                }
                for wid in &f.warning_ids {
                    if let Ok(Entity::Warning(w)) = store.resolve(wid) {
                        if w.target != f.target {
                            push(id, Rule::TargetMismatch, format!("member {wid} targets {:?}", w.target));
                        }
                    }
                }
                f.warning_ids.iter().map(|w| (w, &[EntityKind::Warning][..])).collect()
            }
        };

        for (reference, allowed) in edges {
            if !allowed.contains(&reference.kind()) {
                push(id, Rule::EdgeDirection, format!("{} may not reference {reference}", entity.kind()));
            } else if !store.contains(reference) {
                push(id, Rule::DanglingReference, format!("{reference} is missing"));
            } else if let Err(StoreError::CorruptReference { found, .. }) = store.resolve(reference) {
                push(id, Rule::EdgeDirection, format!("{reference} holds a {found} entity"));
            }
        }
    }
    report
}

fn check_signal(store: &EntityStore, s: &SensorSignal, push: &mut impl FnMut(&IdTag, Rule, String)) {
    let consumed: HashSet<&IdTag> = s.consumed_ids.iter().collect();
    if !s.triggers.is_empty() && s.count != s.triggers.len() as u64 {
        push(&s.id, Rule::CountMismatch, format!("count {} but {} triggers", s.count, s.triggers.len()));
    }
    for t in &s.triggers {
        if !consumed.contains(&t.data_id) {
            push(&s.id, Rule::TriggerNotConsumed, format!("trigger data {} not consumed", t.data_id));
        }
        if let Ok(item) = store.data(&t.data_id) {
            let slice: String = item
                .text
                .chars()
                .skip(t.span.start)
                .take(t.span.end.saturating_sub(t.span.start))
                .collect();
            if normalize_token(&slice) != t.term {
                push(&s.id, Rule::TriggerSpan, format!("span {:?} of {} is not {:?}", t.span, t.data_id, t.term));
            }
        }
        if let Some(sc) = t.scores {
            if [sc.affect, sc.intensity, sc.outrage].iter().any(|v| !(0.0..=1.0).contains(v)) {
                push(&s.id, Rule::OutOfRange, format!("trigger {:?} scores out of [0,1]", t.term));
            }
        }
    }
    for upstream in s.consumed_ids.iter().filter(|c| c.kind() == EntityKind::Signal) {
        if upstream == &s.id {
            push(&s.id, Rule::ChainDepth, "signal consumes itself".into());
            continue;
        }
        if let Ok(up) = store.signal(upstream) {
            if up.consumed_ids.iter().any(|c| c.kind() == EntityKind::Signal) {
                push(&s.id, Rule::ChainDepth, format!("upstream {upstream} is itself chained"));
            }
        }
    }
}
