//! Typed, content-derived identifiers.
//!
//! Every entity in a pipeline run carries an [`IdTag`] of the form
//! `<prefix>-<suffix>`, where the prefix names the entity kind and the suffix
//! is the first 12 hex characters of `SHA-256(prefix ‖ seed)`. Tags are
//! deterministic, so rebuilding from the same input reproduces the same ids.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SUFFIX_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityKind {
    Data,
    Sensor,
    Signal,
    Warning,
    Fused,
    Node,
}

impl EntityKind {
    pub const ALL: [EntityKind; 6] = [
        EntityKind::Data,
        EntityKind::Sensor,
        EntityKind::Signal,
        EntityKind::Warning,
        EntityKind::Fused,
        EntityKind::Node,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            EntityKind::Data => "dat",
            EntityKind::Sensor => "sen",
            EntityKind::Signal => "sig",
            EntityKind::Warning => "wrn",
            EntityKind::Fused => "fus",
            EntityKind::Node => "exp",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.prefix() == prefix)
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EntityKind::Data => "DATA",
            EntityKind::Sensor => "SENSOR",
            EntityKind::Signal => "SIGNAL",
            EntityKind::Warning => "WARNING",
            EntityKind::Fused => "FUSED",
            EntityKind::Node => "NODE",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdError {
    #[error("invalid argument: seed must be non-empty")]
    EmptySeed,
    #[error("malformed id tag {0:?}")]
    Malformed(String),
}

/// A typed identifier, rendered as `<prefix>-<12 lowercase hex chars>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IdTag {
    kind: EntityKind,
    suffix: String,
}

impl IdTag {
    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn suffix(&self) -> &str {
        &self.suffix
    }

    /// Builds a tag from parts. The suffix must be exactly 12 lowercase hex chars.
    pub fn from_parts(kind: EntityKind, suffix: &str) -> Result<Self, IdError> {
        let ok = suffix.len() == SUFFIX_LEN
            && suffix
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !ok {
            return Err(IdError::Malformed(format!("{}-{}", kind.prefix(), suffix)));
        }
        Ok(Self {
            kind,
            suffix: suffix.to_owned(),
        })
    }
}

/// Mints a deterministic tag for `(kind, seed)`.
pub fn mint_id(kind: EntityKind, seed: &[u8]) -> Result<IdTag, IdError> {
    if seed.is_empty() {
        return Err(IdError::EmptySeed);
    }
    let mut hasher = Sha256::new();
    hasher.update(kind.prefix().as_bytes());
    hasher.update(seed);
    let digest = hex::encode(hasher.finalize());
    Ok(IdTag {
        kind,
        suffix: digest[..SUFFIX_LEN].to_owned(),
    })
}

impl fmt::Display for IdTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind.prefix(), self.suffix)
    }
}

impl FromStr for IdTag {
    type Err = IdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (prefix, suffix) = s
            .split_once('-')
            .ok_or_else(|| IdError::Malformed(s.to_owned()))?;
        let kind = EntityKind::from_prefix(prefix).ok_or_else(|| IdError::Malformed(s.to_owned()))?;
        IdTag::from_parts(kind, suffix).map_err(|_| IdError::Malformed(s.to_owned()))
    }
}

impl Serialize for IdTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IdTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}
