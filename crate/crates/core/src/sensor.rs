//! Counter, event-detector and repository sensors over data items.
//!
//! Matching is whole-token and case-insensitive: a token is a maximal run of
//! alphanumeric characters, so `insanity!` matches the keyword `insanity`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::id::{mint_id, EntityKind, IdTag};
use crate::model::{
    AverageScores, DataItem, SensorDescriptor, SensorKind, SensorSignal, Span, TimeWindow, Trigger,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SensorError {
    #[error("sensor {sensor} needs at least one keyword")]
    NoKeywords { sensor: String },
    #[error("sensor {sensor} needs a threshold_count of at least 1")]
    InvalidThreshold { sensor: String },
    #[error("sensor {sensor} is a {actual:?}, expected {expected:?}")]
    WrongKind {
        sensor: String,
        expected: SensorKind,
        actual: SensorKind,
    },
    #[error("signal {0} already consumes a signal; chains are limited to depth 2")]
    ChainTooDeep(IdTag),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorConfig {
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub threshold_count: Option<u64>,
    #[serde(default)]
    pub predicate: Vec<String>,
    pub target: String,
}

/// Lowercases and drops every non-alphanumeric character.
pub fn normalize_token(raw: &str) -> String {
    raw.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Splits `text` into lowercased alphanumeric runs with their character spans.
pub fn tokenize(text: &str) -> Vec<(String, Span)> {
    let mut tokens = Vec::new();
    let mut current: Option<(String, usize)> = None;
    let mut pos = 0;
    for (pos_here, c) in text.chars().enumerate() {
        pos = pos_here + 1;
        if c.is_alphanumeric() {
            let (buf, _) = current.get_or_insert_with(|| (String::new(), pos_here));
            buf.extend(c.to_lowercase());
        } else if let Some((buf, start)) = current.take() {
            tokens.push((buf, Span { start, end: pos_here }));
        }
    }
    if let Some((buf, start)) = current {
        tokens.push((buf, Span { start, end: pos }));
    }
    tokens
}

fn keyword_set(words: &[String]) -> BTreeSet<String> {
    words
        .iter()
        .map(|w| normalize_token(w))
        .filter(|w| !w.is_empty())
        .collect()
}

/// Items in canonical `(timestamp, id)` order.
pub(crate) fn canonical_order(items: &[DataItem]) -> Vec<&DataItem> {
    let mut sorted: Vec<&DataItem> = items.iter().collect();
    sorted.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
    sorted
}

fn keyword_triggers(keywords: &BTreeSet<String>, items: &[&DataItem]) -> Vec<Trigger> {
    items
        .iter()
        .flat_map(|item| {
            tokenize(&item.text)
                .into_iter()
                .filter(|(tok, _)| keywords.contains(tok))
                .map(|(term, span)| Trigger {
                    term,
                    data_id: item.id.clone(),
                    span,
                    scores: None,
                    method: None,
                })
        })
        .collect()
}

/// Assembles a signal with a content-derived id.
pub(crate) fn assemble_signal(
    sensor: &SensorDescriptor,
    target: &str,
    window: Option<TimeWindow>,
    count: u64,
    averages: Option<AverageScores>,
    triggers: Vec<Trigger>,
    consumed_ids: Vec<IdTag>,
) -> SensorSignal {
    let mut seed = format!("{}\u{1f}{target}", sensor.id);
    for id in &consumed_ids {
        seed.push('\u{1f}');
        seed.push_str(&id.to_string());
    }
    SensorSignal {
        id: mint_id(EntityKind::Signal, seed.as_bytes()).expect("non-empty seed"),
        sensor_id: sensor.id.clone(),
        target: target.to_owned(),
        window,
        count,
        averages,
        triggers,
        consumed_ids,
    }
}

fn expect_kind(sensor: &SensorDescriptor, expected: SensorKind) -> Result<(), SensorError> {
    if sensor.kind != expected {
        return Err(SensorError::WrongKind {
            sensor: sensor.name.clone(),
            expected,
            actual: sensor.kind,
        });
    }
    Ok(())
}

fn require_keywords(sensor: &SensorDescriptor, words: &[String]) -> Result<BTreeSet<String>, SensorError> {
    let set = keyword_set(words);
    if set.is_empty() {
        return Err(SensorError::NoKeywords {
            sensor: sensor.name.clone(),
        });
    }
    Ok(set)
}

fn examined_signal(
    sensor: &SensorDescriptor,
    target: &str,
    items: &[&DataItem],
    triggers: Vec<Trigger>,
) -> SensorSignal {
    assemble_signal(
        sensor,
        target,
        TimeWindow::spanning(items.iter().map(|i| i.timestamp)),
        triggers.len() as u64,
        None,
        triggers,
        items.iter().map(|i| i.id.clone()).collect(),
    )
}

/// Counts keyword matches. Every examined item is recorded as consumed.
pub fn run_counter(
    sensor: &SensorDescriptor,
    config: &SensorConfig,
    items: &[DataItem],
) -> Result<SensorSignal, SensorError> {
    expect_kind(sensor, SensorKind::Counter)?;
    let keywords = require_keywords(sensor, &config.keywords)?;
    let ordered = canonical_order(items);
    let triggers = keyword_triggers(&keywords, &ordered);
    Ok(examined_signal(sensor, &config.target, &ordered, triggers))
}

/// Flags the target when keyword matches reach `threshold_count`.
pub fn run_event_detector(
    sensor: &SensorDescriptor,
    config: &SensorConfig,
    items: &[DataItem],
) -> Result<Option<SensorSignal>, SensorError> {
    expect_kind(sensor, SensorKind::EventDetector)?;
    let keywords = require_keywords(sensor, &config.keywords)?;
    let threshold = match config.threshold_count {
        Some(t) if t >= 1 => t,
        _ => {
            return Err(SensorError::InvalidThreshold {
                sensor: sensor.name.clone(),
            })
        }
    };
    let ordered = canonical_order(items);
    let triggers = keyword_triggers(&keywords, &ordered);
    if (triggers.len() as u64) < threshold {
        return Ok(None);
    }
    Ok(Some(examined_signal(sensor, &config.target, &ordered, triggers)))
}

/// Keeps the items containing at least one predicate keyword, in input order.
pub fn run_repository(
    sensor: &SensorDescriptor,
    config: &SensorConfig,
    items: &[DataItem],
) -> Result<Vec<DataItem>, SensorError> {
    expect_kind(sensor, SensorKind::Repository)?;
    let predicate = require_keywords(sensor, &config.predicate)?;
    Ok(items
        .iter()
        .filter(|item| tokenize(&item.text).iter().any(|(tok, _)| predicate.contains(tok)))
        .cloned()
        .collect())
}

/// Provenance record for a repository pass: the retained items are the
/// consumed ids and each predicate match is a trigger.
pub fn repository_signal(
    sensor: &SensorDescriptor,
    config: &SensorConfig,
    items: &[DataItem],
) -> Result<SensorSignal, SensorError> {
    let kept = run_repository(sensor, config, items)?;
    let predicate = keyword_set(&config.predicate);
    let ordered = canonical_order(&kept);
    let triggers = keyword_triggers(&predicate, &ordered);
    Ok(examined_signal(sensor, &config.target, &ordered, triggers))
}

/// Counter fed by another sensor's signal: the upstream trigger terms are its
/// token stream. The upstream signal must consume only data items.
pub fn run_chained_counter(
    sensor: &SensorDescriptor,
    config: &SensorConfig,
    upstream: &SensorSignal,
) -> Result<SensorSignal, SensorError> {
    expect_kind(sensor, SensorKind::Counter)?;
    let keywords = require_keywords(sensor, &config.keywords)?;
    if upstream.consumed_ids.iter().any(|c| c.kind() == EntityKind::Signal) {
        return Err(SensorError::ChainTooDeep(upstream.id.clone()));
    }
    let triggers: Vec<Trigger> = upstream
        .triggers
        .iter()
        .filter(|t| keywords.contains(&t.term))
        .map(|t| Trigger {
            scores: None,
            method: None,
            ..t.clone()
        })
        .collect();
    let mut consumed = vec![upstream.id.clone()];
    for t in &triggers {
        if !consumed.contains(&t.data_id) {
            consumed.push(t.data_id.clone());
        }
    }
    Ok(assemble_signal(
        sensor,
        &config.target,
        upstream.window,
        triggers.len() as u64,
        None,
        triggers,
        consumed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::sample_tweets;

    fn cfg(words: &[&str]) -> SensorConfig {
        SensorConfig {
            keywords: words.iter().map(|s| s.to_string()).collect(),
            predicate: words.iter().map(|s| s.to_string()).collect(),
            threshold_count: Some(1),
            target: "X".into(),
        }
    }

    #[test]
    fn tokenize_examples() {
        let toks = tokenize("The new policies are pure insanity!");
        assert_eq!(toks.last().unwrap(), &("insanity".to_string(), Span { start: 26, end: 34 }));
        assert_eq!(toks[0], ("the".to_string(), Span { start: 0, end: 3 }));
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("a-b"),
            vec![("a".into(), Span { start: 0, end: 1 }), ("b".into(), Span { start: 2, end: 3 })]
        );
        // spans are character offsets, not bytes
        assert_eq!(tokenize("é x")[1].1, Span { start: 2, end: 3 });
    }

    #[test]
    fn counter_examples() {
        let sensor = SensorDescriptor::new("kw", SensorKind::Counter);
        let tweets = sample_tweets();
        let sig = run_counter(&sensor, &cfg(&["attack"]), &tweets).unwrap();
        assert_eq!(sig.count, 1);
        assert_eq!(sig.triggers[0].term, "attack");
        assert!(sig.averages.is_none());
        assert_eq!(run_counter(&sensor, &cfg(&["zzz"]), &tweets).unwrap().count, 0);

        let item = DataItem::new("f", crate::model::DataKind::File, tweets[0].timestamp, "a a a");
        assert_eq!(run_counter(&sensor, &cfg(&["a"]), &[item]).unwrap().count, 3);
        assert!(matches!(
            run_counter(&sensor, &cfg(&[]), &tweets),
            Err(SensorError::NoKeywords { .. })
        ));
    }

    #[test]
    fn event_detector_examples() {
        let sensor = SensorDescriptor::new("ev", SensorKind::EventDetector);
        let tweets = sample_tweets();
        let sig = run_event_detector(&sensor, &cfg(&["insanity"]), &tweets).unwrap().unwrap();
        assert_eq!(sig.count, 1);
        let mut high = cfg(&["insanity"]);
        high.threshold_count = Some(5);
        assert!(run_event_detector(&sensor, &high, &tweets).unwrap().is_none());
        assert!(run_event_detector(&sensor, &cfg(&["insanity"]), &[]).unwrap().is_none());
        high.threshold_count = Some(0);
        assert!(run_event_detector(&sensor, &high, &tweets).is_err());
    }

    #[test]
    fn repository_examples() {
        let sensor = SensorDescriptor::new("repo", SensorKind::Repository);
        let tweets = sample_tweets();
        let kept = run_repository(&sensor, &cfg(&["attack"]), &tweets).unwrap();
        assert_eq!(kept.len(), 1);
        assert!(kept[0].text.contains("attack"));
        // whole-token: "This" is not "the"
        assert_eq!(run_repository(&sensor, &cfg(&["the"]), &tweets).unwrap(), tweets[..1]);
        assert_eq!(run_repository(&sensor, &cfg(&["THE", "this"]), &tweets).unwrap(), tweets);
        assert!(run_repository(&sensor, &cfg(&["the"]), &[]).unwrap().is_empty());

        let sig = repository_signal(&sensor, &cfg(&["attack"]), &tweets).unwrap();
        assert_eq!(sig.consumed_ids, vec![kept[0].id.clone()]);
    }

    #[test]
    fn chaining_limited_to_depth_two() {
        let tweets = sample_tweets();
        let first = run_counter(
            &SensorDescriptor::new("kw", SensorKind::Counter),
            &cfg(&["attack", "insanity"]),
            &tweets,
        )
        .unwrap();
        let chained_sensor = SensorDescriptor::new("chained", SensorKind::Counter);
        let second = run_chained_counter(&chained_sensor, &cfg(&["attack"]), &first).unwrap();
        assert_eq!(second.count, 1);
        assert_eq!(second.consumed_ids[0], first.id);
        assert!(matches!(
            run_chained_counter(&chained_sensor, &cfg(&["attack"]), &second),
            Err(SensorError::ChainTooDeep(_))
        ));
    }
}
