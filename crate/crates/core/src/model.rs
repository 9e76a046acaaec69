//! Entities linked by id tags: data items, sensors, signals, warnings and
//! fused warnings.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::id::{EntityKind, IdTag};

/// Second-precision ISO-8601 UTC timestamps (`2019-06-01T12:00:00Z`).
pub mod utc_seconds {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn format(ts: &DateTime<Utc>) -> String {
        ts.to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn parse(raw: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
        let parsed = DateTime::parse_from_rfc3339(raw)?.with_timezone(&Utc);
        // truncate to whole seconds
        Ok(DateTime::from_timestamp(parsed.timestamp(), 0).unwrap_or(parsed))
    }

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Tweet,
    File,
    Website,
}

impl DataKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DataKind::Tweet => "tweet",
            DataKind::File => "file",
            DataKind::Website => "website",
        }
    }
}

/// A raw observable: the leaves of every explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataItem {
    pub id: IdTag,
    pub source: String,
    pub kind: DataKind,
    #[serde(with = "utc_seconds")]
    pub timestamp: DateTime<Utc>,
    pub text: String,
}

impl DataItem {
    /// Builds an item whose id is minted from its content.
    pub fn new(source: &str, kind: DataKind, timestamp: DateTime<Utc>, text: &str) -> Self {
        let seed = format!(
            "{source}\u{1f}{}\u{1f}{}\u{1f}{text}",
            kind.as_str(),
            utc_seconds::format(&timestamp)
        );
        let id = crate::id::mint_id(EntityKind::Data, seed.as_bytes())
            .expect("seed contains separators and is never empty");
        Self {
            id,
            source: source.to_owned(),
            kind,
            timestamp,
            text: text.to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Counter,
    Scorer,
    EventDetector,
    Repository,
}

impl SensorKind {
    pub const ALL: [SensorKind; 4] = [
        SensorKind::Counter,
        SensorKind::Scorer,
        SensorKind::EventDetector,
        SensorKind::Repository,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::Counter => "counter",
            SensorKind::Scorer => "scorer",
            SensorKind::EventDetector => "event_detector",
            SensorKind::Repository => "repository",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }

    /// Controlled-vocabulary description of how this kind of sensor works.
    pub fn mechanism(self) -> &'static str {
        match self {
            SensorKind::Counter => "a counter that tallies whole-word keyword matches",
            SensorKind::Scorer => "a scorer that rates lexicon terms on affect and intensity",
            SensorKind::EventDetector => {
                "an event detector that flags a target once keyword matches reach a threshold"
            }
            SensorKind::Repository => "a repository that keeps only items mentioning its keywords",
        }
    }
}

/// Describes a model when a sensor's outputs cannot be traced to its inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodReference {
    pub model_name: String,
    pub citation: String,
    pub training_data_note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorDescriptor {
    pub id: IdTag,
    pub name: String,
    pub kind: SensorKind,
    pub causal_traceable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method_note: Option<MethodReference>,
}

impl SensorDescriptor {
    pub fn new(name: &str, kind: SensorKind) -> Self {
        let seed = format!("{}\u{1f}{name}", kind.as_str());
        Self {
            id: crate::id::mint_id(EntityKind::Sensor, seed.as_bytes()).expect("non-empty seed"),
            name: name.to_owned(),
            kind,
            causal_traceable: true,
            method_note: None,
        }
    }

    /// Marks the sensor as not causally traceable, explained by `method` only.
    pub fn with_methodology(mut self, method: MethodReference) -> Self {
        self.causal_traceable = false;
        self.method_note = Some(method);
        self
    }
}

/// Inclusive `[start, end]` interval of UTC instants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    #[serde(with = "utc_seconds")]
    pub start: DateTime<Utc>,
    #[serde(with = "utc_seconds")]
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn instant(at: DateTime<Utc>) -> Self {
        Self { start: at, end: at }
    }

    pub fn hull(self, other: TimeWindow) -> Self {
        Self {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }

    /// Hull of a set of instants; `None` when empty.
    pub fn spanning<I: IntoIterator<Item = DateTime<Utc>>>(instants: I) -> Option<Self> {
        instants
            .into_iter()
            .map(TimeWindow::instant)
            .reduce(TimeWindow::hull)
    }
}

/// Half-open `[start, end)` character offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerScores {
    pub affect: f64,
    pub intensity: f64,
    pub outrage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageScores {
    pub affect: f64,
    pub intensity: f64,
    pub outrage: f64,
    pub n: u64,
}

/// One keyword or lexicon match inside one data item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub term: String,
    pub data_id: IdTag,
    pub span: Span,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<TriggerScores>,
    /// Scoring model named by the lexicon entry that produced this trigger.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodReference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSignal {
    pub id: IdTag,
    pub sensor_id: IdTag,
    pub target: String,
    /// Hull of the consumed items' timestamps; absent when nothing was consumed.
    pub window: Option<TimeWindow>,
    pub count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub averages: Option<AverageScores>,
    pub triggers: Vec<Trigger>,
    pub consumed_ids: Vec<IdTag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ThreatLevel {
    Low,
    Medium,
    High,
}

impl ThreatLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ThreatLevel::Low => "LOW",
            ThreatLevel::Medium => "MEDIUM",
            ThreatLevel::High => "HIGH",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub id: IdTag,
    pub signal_id: IdTag,
    pub target: String,
    pub threat_level: ThreatLevel,
    pub confidence: f64,
    #[serde(with = "utc_seconds")]
    pub issued_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedWarning {
    pub id: IdTag,
    pub warning_ids: Vec<IdTag>,
    pub target: String,
    pub threat_level: ThreatLevel,
    pub confidence: f64,
    pub window: TimeWindow,
}

/// Any entity the store can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Entity {
    Data(DataItem),
    Sensor(SensorDescriptor),
    Signal(SensorSignal),
    Warning(Warning),
    Fused(FusedWarning),
}

impl Entity {
    pub fn id(&self) -> &IdTag {
        match self {
            Entity::Data(e) => &e.id,
            Entity::Sensor(e) => &e.id,
            Entity::Signal(e) => &e.id,
            Entity::Warning(e) => &e.id,
            Entity::Fused(e) => &e.id,
        }
    }

    pub fn kind(&self) -> EntityKind {
        match self {
            Entity::Data(_) => EntityKind::Data,
            Entity::Sensor(_) => EntityKind::Sensor,
            Entity::Signal(_) => EntityKind::Signal,
            Entity::Warning(_) => EntityKind::Warning,
            Entity::Fused(_) => EntityKind::Fused,
        }
    }

    /// Outgoing references, in field order.
    pub fn references(&self) -> Vec<&IdTag> {
        match self {
            Entity::Data(_) | Entity::Sensor(_) => Vec::new(),
            Entity::Signal(s) => std::iter::once(&s.sensor_id)
                .chain(s.consumed_ids.iter())
                .chain(s.triggers.iter().map(|t| &t.data_id))
                .collect(),
            Entity::Warning(w) => vec![&w.signal_id],
            Entity::Fused(f) => f.warning_ids.iter().collect(),
        }
    }
}

macro_rules! entity_from {
    ($($variant:ident($ty:ty)),*) => {
        $(impl From<$ty> for Entity {
            fn from(value: $ty) -> Self {
                Entity::$variant(value)
            }
        })*
    };
}

entity_from!(
    Data(DataItem),
    Sensor(SensorDescriptor),
    Signal(SensorSignal),
    Warning(Warning),
    Fused(FusedWarning)
);

/// Depth levels of an explanation, from the fused warning down to evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Level {
    Fused,
    Warning,
    Sensor,
    Trigger,
    Data,
    Method,
}

impl Level {
    pub const ALL: [Level; 6] = [
        Level::Fused,
        Level::Warning,
        Level::Sensor,
        Level::Trigger,
        Level::Data,
        Level::Method,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Fused => "fused",
            Level::Warning => "warning",
            Level::Sensor => "sensor",
            Level::Trigger => "trigger",
            Level::Data => "data",
            Level::Method => "method",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == name)
    }

    /// Rank in the parent→child order; DATA and METHOD share the lowest rank.
    pub fn rank(self) -> u8 {
        match self {
            Level::Fused => 4,
            Level::Warning => 3,
            Level::Sensor => 2,
            Level::Trigger => 1,
            Level::Data | Level::Method => 0,
        }
    }
}
