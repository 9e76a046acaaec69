//! Shared generators and independent oracles for integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use splain_core::fusion::{fuse, generate_warning, GenerationPolicy, Metric};
use splain_core::id::{mint_id, EntityKind, IdTag};
use splain_core::model::{
    DataItem, DataKind, Entity, MethodReference, SensorDescriptor, SensorKind, Warning,
};
use splain_core::outrage::{run_outrage_sensor, LexiconEntry};
use splain_core::sensor::{repository_signal, run_chained_counter, run_counter, run_event_detector, SensorConfig};
use splain_core::store::EntityStore;

pub const WORDS: &[&str] = &[
    "attack", "insanity", "outrage", "policy", "wallet", "breach", "leak", "calm", "vote", "server",
    "the", "a", "is", "on", "my", "new", "pure", "change", "exploit", "ransom",
];

pub const TARGETS: &[&str] = &["X", "Y", "Z"];

pub fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..12);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push_str([" ", ", ", "! ", " - "][rng.gen_range(0..4)]);
        }
        let w = WORDS[rng.gen_range(0..WORDS.len())];
        if rng.gen_bool(0.2) {
            let mut c = w.chars();
            let first = c.next().unwrap().to_ascii_uppercase();
            out.push(first);
            out.extend(c);
        } else {
            out.push_str(w);
        }
    }
    if rng.gen_bool(0.5) {
        out.push('.');
    }
    out
}

pub fn random_items(rng: &mut ChaCha8Rng, n: usize) -> Vec<DataItem> {
    let base = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    (0..n)
        .map(|i| {
            let kind = [DataKind::Tweet, DataKind::File, DataKind::Website][rng.gen_range(0..3)];
            let ts = base + Duration::seconds(rng.gen_range(0..600));
            DataItem::new(&format!("feed-{i}"), kind, ts, &random_text(rng))
        })
        .collect()
}

pub fn random_lexicon(rng: &mut ChaCha8Rng) -> Vec<LexiconEntry> {
    let mut words: Vec<&str> = WORDS.to_vec();
    words.shuffle(rng);
    let n = rng.gen_range(1..8);
    words[..n]
        .iter()
        .map(|w| LexiconEntry {
            term: (*w).to_owned(),
            affect: rng.gen_range(0.0..=1.0),
            intensity: rng.gen_range(0.0..=1.0),
            outrage: rng.gen_bool(0.7).then(|| rng.gen_range(0.0..=1.0)),
            method: rng.gen_bool(0.6).then(|| MethodReference {
                model_name: "circumplex".into(),
                citation: "Russell 1980".into(),
                training_data_note: String::new(),
            }),
        })
        .collect()
}

fn random_keywords(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut words: Vec<&str> = WORDS.to_vec();
    words.shuffle(rng);
    words[..rng.gen_range(1..6)].iter().map(|w| w.to_string()).collect()
}

/// A store built bottom-up from real sensor runs, so integrity holds by
/// construction. Stays within ~100 entities.
pub fn random_store(rng: &mut ChaCha8Rng) -> EntityStore {
    let n = rng.gen_range(1..12);
    let items = random_items(rng, n);
    let mut store = EntityStore::new();
    for item in &items {
        store.insert(item.clone()).unwrap();
    }

    let count_policy = GenerationPolicy {
        metric: Metric::Count,
        threshold: 1.0,
        level_cutoffs: [2.0, 5.0],
        fusion_window: rng.gen_range(0..300),
    };
    let outrage_policy = GenerationPolicy {
        metric: Metric::OutrageAvg,
        threshold: 0.05,
        level_cutoffs: [0.4, 0.7],
        fusion_window: count_policy.fusion_window,
    };

    let mut warnings: Vec<Warning> = Vec::new();
    let mut first_signal = None;
    let n_sensors = rng.gen_range(1..6);
    for s in 0..n_sensors {
        let kind = SensorKind::ALL[rng.gen_range(0..4)];
        let mut sensor = SensorDescriptor::new(&format!("sensor{s}"), kind);
        if rng.gen_bool(0.25) {
            sensor = sensor.with_methodology(MethodReference {
                model_name: format!("model{s}"),
                citation: "internal report".into(),
                training_data_note: "archived forum posts".into(),
            });
        }
        let target = TARGETS[rng.gen_range(0..TARGETS.len())];
        let config = SensorConfig {
            keywords: random_keywords(rng),
            threshold_count: Some(rng.gen_range(1..3)),
            predicate: random_keywords(rng),
            target: target.into(),
        };
        let chained = kind == SensorKind::Counter && first_signal.is_some() && rng.gen_bool(0.3);
        let signal = match kind {
            SensorKind::Counter if chained => Some(run_chained_counter(&sensor, &config, first_signal.as_ref().unwrap()).unwrap()),
            SensorKind::Counter => Some(run_counter(&sensor, &config, &items).unwrap()),
            SensorKind::EventDetector => run_event_detector(&sensor, &config, &items).unwrap(),
            SensorKind::Repository => Some(repository_signal(&sensor, &config, &items).unwrap()),
            SensorKind::Scorer => run_outrage_sensor(&sensor, &random_lexicon(rng), &items, target).unwrap(),
        };
        let Some(signal) = signal.filter(|s| !s.consumed_ids.is_empty()) else {
            continue;
        };
        store.insert(sensor).unwrap();
        store.insert(signal.clone()).unwrap();
        let policy = if kind == SensorKind::Scorer { &outrage_policy } else { &count_policy };
        if let Some(w) = generate_warning(policy, &signal).unwrap() {
            store.insert(w.clone()).unwrap();
            warnings.push(w);
        }
        if first_signal.is_none() && !chained {
            first_signal = Some(signal);
        }
    }
    for f in fuse(&warnings, &count_policy) {
        store.insert(f).unwrap();
    }
    store
}

/// Replaces the `index`-th outgoing reference of `entity` with an id that no
/// store holds. Returns `None` when the entity has fewer references.
pub fn dangle(entity: &Entity, index: usize) -> Option<Entity> {
    let fresh = |kind: EntityKind| mint_id(kind, format!("dangling-{index}").as_bytes()).unwrap();
    let mut e = entity.clone();
    let slot: &mut IdTag = match &mut e {
        Entity::Data(_) | Entity::Sensor(_) => return None,
        Entity::Signal(s) => {
            let c = s.consumed_ids.len();
            match index {
                0 => &mut s.sensor_id,
                i if i <= c => &mut s.consumed_ids[i - 1],
                i => &mut s.triggers.get_mut(i - 1 - c)?.data_id,
            }
        }
        Entity::Warning(w) if index == 0 => &mut w.signal_id,
        Entity::Warning(_) => return None,
        Entity::Fused(f) => f.warning_ids.get_mut(index)?,
    };
    *slot = fresh(slot.kind());
    Some(e)
}

/// Copy of `store` with one entity replaced.
pub fn with_replaced(store: &EntityStore, key: &IdTag, replacement: Entity) -> EntityStore {
    let mut out = EntityStore::new();
    for (k, e) in store.entries() {
        if k == key {
            out.insert_under(k.clone(), replacement.clone());
        } else {
            out.insert_under(k.clone(), e.clone());
        }
    }
    out
}

/// Independent mean oracle: splits on non-alphanumerics, looks terms up in a
/// hash map, and sums raw fractions in one pass.
pub fn mean_oracle(lexicon: &[LexiconEntry], items: &[DataItem]) -> Option<[f64; 3]> {
    let table: HashMap<&str, &LexiconEntry> = lexicon.iter().map(|e| (e.term.as_str(), e)).collect();
    let mut sums = [0.0; 3];
    let mut n = 0usize;
    for item in items {
        for word in item.text.split(|c: char| !c.is_alphanumeric()) {
            if word.is_empty() {
                continue;
            }
            if let Some(e) = table.get(word.to_lowercase().as_str()) {
                let outrage = e
                    .outrage
                    .unwrap_or_else(|| ((e.affect * e.affect + e.intensity * e.intensity) / 2.0).sqrt().min(1.0));
                sums[0] += e.affect;
                sums[1] += e.intensity;
                sums[2] += outrage;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sums.map(|s| s / n as f64))
}

/// 1 − Π(1 − cᵢ), computed directly.
pub fn noisy_or_oracle(cs: &[f64]) -> f64 {
    1.0 - cs.iter().map(|c| 1.0 - c).product::<f64>()
}

const PATHS: &[&str] = &["sensor.name", "signal.averages.affect", "t.term", "x", "data.text", "fused.window.end"];
const LITERALS: &[&str] = &["The ", " value of ", "{", "}", "\n", "% ", "a{b", "é ", " #1: "];

/// Random template source in canonical form, with nested blocks.
pub fn random_template_source(rng: &mut ChaCha8Rng, depth: usize) -> String {
    let mut out = String::new();
    let n = rng.gen_range(1..6);
    let mut last_literal = false;
    for _ in 0..n {
        let choice = rng.gen_range(0..if depth > 0 { 4 } else { 2 });
        match choice {
            0 if !last_literal => {
                let lit = LITERALS[rng.gen_range(0..LITERALS.len())];
                out.push_str(&lit.replace('{', "{{"));
                last_literal = true;
                continue;
            }
            0 | 1 => {
                out.push('{');
                out.push_str(PATHS[rng.gen_range(0..PATHS.len())]);
                for _ in 0..rng.gen_range(0..3) {
                    out.push('|');
                    out.push_str(["pct", "upper", "int"][rng.gen_range(0..3)]);
                }
                out.push('}');
            }
            2 => {
                out.push_str(&format!("{{#for t in {}}}", PATHS[rng.gen_range(0..PATHS.len())]));
                out.push_str(&random_template_source(rng, depth - 1));
                out.push_str("{/for}");
            }
            _ => {
                out.push_str(&format!("{{#if {}}}", PATHS[rng.gen_range(0..PATHS.len())]));
                out.push_str(&random_template_source(rng, depth - 1));
                out.push_str("{/if}");
            }
        }
        last_literal = false;
    }
    out
}
