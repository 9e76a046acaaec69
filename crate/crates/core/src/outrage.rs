//! Lexicon-driven outrage scorer.
//!
//! Each lexicon term carries affect and intensity fractions (the two axes of
//! the circumplex model) and, normally, a precomputed outrage fraction. A
//! trigger is one occurrence of a lexicon term; a signal reports the
//! unweighted mean of the trigger scores.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::model::{
    AverageScores, DataItem, MethodReference, SensorDescriptor, SensorKind, SensorSignal,
    TimeWindow, Trigger, TriggerScores,
};
use crate::sensor::{assemble_signal, canonical_order, tokenize};

#[derive(Debug, Error)]
pub enum OutrageError {
    #[error("invalid lexicon: duplicate term {0:?}")]
    DuplicateTerm(String),
    #[error("invalid lexicon: {0}")]
    InvalidEntry(String),
    #[error("cannot average an empty trigger list")]
    EmptyAggregate,
    #[error("trigger {0:?} has no scores")]
    Unscored(String),
    #[error("sensor {0} is not a scorer")]
    NotScorer(String),
    #[error("lexicon file: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub term: String,
    pub affect: f64,
    pub intensity: f64,
    pub outrage: Option<f64>,
    pub method: Option<MethodReference>,
}

impl LexiconEntry {
    fn check(&self) -> Result<(), OutrageError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.term.is_empty() || self.term != crate::sensor::normalize_token(&self.term) {
            return Err(OutrageError::InvalidEntry(format!(
                "term {:?} must be a lowercase alphanumeric token",
                self.term
            )));
        }
        if !in_unit(self.affect) || !in_unit(self.intensity) || !self.outrage.is_none_or(in_unit) {
            return Err(OutrageError::InvalidEntry(format!(
                "scores for {:?} must lie in [0,1]",
                self.term
            )));
        }
        if let Some(m) = &self.method {
            if m.model_name.is_empty() {
                return Err(OutrageError::InvalidEntry(format!("empty model name for {:?}", self.term)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, serde::Deserialize)]
struct LexiconRow {
    term: String,
    affect: f64,
    intensity: f64,
    outrage: Option<f64>,
    model_name: Option<String>,
    citation: Option<String>,
}

/// Reads `term,affect,intensity,outrage,model_name,citation` rows.
pub fn read_lexicon<R: Read>(reader: R) -> Result<Vec<LexiconEntry>, OutrageError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut entries = Vec::new();
    for row in rdr.deserialize::<LexiconRow>() {
        let row = row?;
        let method = row
            .model_name
            .filter(|m| !m.is_empty())
            .map(|model_name| MethodReference {
                model_name,
                citation: row.citation.unwrap_or_default(),
                training_data_note: String::new(),
            });
        let entry = LexiconEntry {
            term: row.term,
            affect: row.affect,
            intensity: row.intensity,
            outrage: row.outrage,
            method,
        };
        entry.check()?;
        entries.push(entry);
    }
    check_unique(&entries)?;
    Ok(entries)
}

pub fn load_lexicon(path: &Path) -> Result<Vec<LexiconEntry>, OutrageError> {
    read_lexicon(std::fs::File::open(path)?)
}

fn check_unique(lexicon: &[LexiconEntry]) -> Result<(), OutrageError> {
    let mut seen = HashSet::new();
    for e in lexicon {
        if !seen.insert(e.term.as_str()) {
            return Err(OutrageError::DuplicateTerm(e.term.clone()));
        }
    }
    Ok(())
}

/// Outrage from the lexicon when present, else the circumplex radius scaled
/// so the `(1, 1)` corner maps to 1.
pub fn score_trigger(entry: &LexiconEntry) -> TriggerScores {
    let outrage = entry.outrage.unwrap_or_else(|| {
        (entry.affect.hypot(entry.intensity) / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
    });
    TriggerScores {
        affect: entry.affect,
        intensity: entry.intensity,
        outrage,
    }
}

/// One scored trigger per token of `item` that matches a lexicon term.
pub fn detect_triggers(lexicon: &[LexiconEntry], item: &DataItem) -> Result<Vec<Trigger>, OutrageError> {
    check_unique(lexicon)?;
    let triggers = tokenize(&item.text)
        .into_iter()
        .filter_map(|(tok, span)| {
            lexicon.iter().find(|e| e.term == tok).map(|entry| Trigger {
                term: tok,
                data_id: item.id.clone(),
                span,
                scores: Some(score_trigger(entry)),
                method: entry.method.clone(),
            })
        })
        .collect();
    Ok(triggers)
}

/// Unweighted mean of the raw trigger fractions.
pub fn aggregate_scores(triggers: &[Trigger]) -> Result<AverageScores, OutrageError> {
    if triggers.is_empty() {
        return Err(OutrageError::EmptyAggregate);
    }
    let mut sum = [0.0f64; 3];
    for t in triggers {
        let s = t.scores.ok_or_else(|| OutrageError::Unscored(t.term.clone()))?;
        sum[0] += s.affect;
        sum[1] += s.intensity;
        sum[2] += s.outrage;
    }
    let n = triggers.len() as f64;
    Ok(AverageScores {
        affect: sum[0] / n,
        intensity: sum[1] / n,
        outrage: sum[2] / n,
        n: triggers.len() as u64,
    })
}

/// Runs the scorer over `items`. Returns `None` when nothing matched.
pub fn run_outrage_sensor(
    sensor: &SensorDescriptor,
    lexicon: &[LexiconEntry],
    items: &[DataItem],
    target: &str,
) -> Result<Option<SensorSignal>, OutrageError> {
    if sensor.kind != SensorKind::Scorer {
        return Err(OutrageError::NotScorer(sensor.name.clone()));
    }
    let mut triggers = Vec::new();
    let mut matched = Vec::new();
    for item in canonical_order(items) {
        let found = detect_triggers(lexicon, item)?;
        if !found.is_empty() {
            matched.push(item);
            triggers.extend(found);
        }
    }
    if triggers.is_empty() {
        return Ok(None);
    }
    let averages = aggregate_scores(&triggers)?;
    Ok(Some(assemble_signal(
        sensor,
        target,
        TimeWindow::spanning(matched.iter().map(|i| i.timestamp)),
        triggers.len() as u64,
        Some(averages),
        triggers,
        matched.iter().map(|i| i.id.clone()).collect(),
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{sample_lexicon, sample_tweets};
    use proptest::prelude::*;

    fn entry(term: &str, affect: f64, intensity: f64, outrage: Option<f64>) -> LexiconEntry {
        LexiconEntry {
            term: term.into(),
            affect,
            intensity,
            outrage,
            method: None,
        }
    }

    #[test]
    fn score_trigger_examples() {
        let s = score_trigger(&entry("insanity", 0.46, 0.558, Some(0.7166)));
        assert_eq!((s.affect, s.intensity, s.outrage), (0.46, 0.558, 0.7166));
        let s = score_trigger(&entry("attack", 0.60, 0.41, Some(0.7015)));
        assert_eq!((s.affect, s.intensity, s.outrage), (0.60, 0.41, 0.7015));
        assert_eq!(score_trigger(&entry("t", 0.0, 0.0, None)).outrage, 0.0);
        assert_eq!(score_trigger(&entry("t", 1.0, 1.0, None)).outrage, 1.0);
    }

    #[test]
    fn detect_examples() {
        let tweets = sample_tweets();
        let found = detect_triggers(&sample_lexicon(), &tweets[0]).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].term, "insanity");

        let twice = DataItem::new("t", crate::model::DataKind::Tweet, tweets[0].timestamp, "insanity insanity");
        let found = detect_triggers(&sample_lexicon(), &twice).unwrap();
        assert_eq!(found.len(), 2);
        assert_eq!(found[0].scores, found[1].scores);

        assert!(detect_triggers(&[], &tweets[0]).unwrap().is_empty());

        let mut dup = sample_lexicon();
        dup.push(dup[0].clone());
        assert!(matches!(detect_triggers(&dup, &tweets[0]), Err(OutrageError::DuplicateTerm(_))));
    }

    #[test]
    fn aggregate_examples() {
        let tweets = sample_tweets();
        let lex = sample_lexicon();
        let mut triggers = detect_triggers(&lex, &tweets[0]).unwrap();
        triggers.extend(detect_triggers(&lex, &tweets[1]).unwrap());
        let avg = aggregate_scores(&triggers).unwrap();
        assert!((avg.affect - 0.53).abs() < 1e-12);
        assert!((avg.intensity - 0.484).abs() < 1e-12);
        assert!((avg.outrage - 0.70905).abs() < 1e-12);
        assert_eq!(avg.n, 2);

        let one = aggregate_scores(&triggers[..1]).unwrap();
        assert_eq!((one.affect, one.intensity, one.outrage, one.n), (0.46, 0.558, 0.7166, 1));

        let copies = vec![triggers[1].clone(); 7];
        let avg = aggregate_scores(&copies).unwrap();
        assert!((avg.outrage - 0.7015).abs() < 1e-15);

        assert!(matches!(aggregate_scores(&[]), Err(OutrageError::EmptyAggregate)));
    }

    #[test]
    fn sensor_run() {
        let sensor = SensorDescriptor::new("outrage", SensorKind::Scorer);
        let sig = run_outrage_sensor(&sensor, &sample_lexicon(), &sample_tweets(), "X").unwrap().unwrap();
        assert_eq!(sig.count, 2);
        assert_eq!(sig.consumed_ids.len(), 2);
        assert_eq!(sig.target, "X");
        let none = run_outrage_sensor(&sensor, &sample_lexicon(), &sample_tweets()[..0], "X").unwrap();
        assert!(none.is_none());
        let counter = SensorDescriptor::new("c", SensorKind::Counter);
        assert!(run_outrage_sensor(&counter, &sample_lexicon(), &sample_tweets(), "X").is_err());
    }

    #[test]
    fn lexicon_csv() {
        let text = "term,affect,intensity,outrage,model_name,citation\n\
                    insanity,0.46,0.558,0.7166,circumplex,Russell 1980\n\
                    rage,0.9,0.8,,circumplex,Russell 1980\n";
        let lex = read_lexicon(text.as_bytes()).unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex[0].outrage, Some(0.7166));
        assert_eq!(lex[1].outrage, None);
        assert_eq!(lex[1].method.as_ref().unwrap().citation, "Russell 1980");

        let bad = "term,affect,intensity,outrage,model_name,citation\nx,1.5,0,,,\n";
        assert!(matches!(read_lexicon(bad.as_bytes()), Err(OutrageError::InvalidEntry(_))));
        let dup = "term,affect,intensity,outrage,model_name,citation\nx,0,0,,,\nx,0,0,,,\n";
        assert!(matches!(read_lexicon(dup.as_bytes()), Err(OutrageError::DuplicateTerm(_))));
    }

    proptest! {
        #[test]
        fn fallback_is_monotone(a in 0.0f64..=1.0, i in 0.0f64..=1.0, da in 0.0f64..=1.0, di in 0.0f64..=1.0) {
            let base = score_trigger(&entry("t", a, i, None)).outrage;
            let up = score_trigger(&entry("t", (a + da).min(1.0), (i + di).min(1.0), None)).outrage;
            prop_assert!(up >= base);
            prop_assert!((0.0..=1.0).contains(&up));
        }

        #[test]
        fn averages_bounded_and_permutation_invariant(
            scores in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0), 1..40),
            seed in any::<u64>(),
        ) {
            let item = &sample_tweets()[0];
            let triggers: Vec<Trigger> = scores.iter().map(|&(a, i, o)| Trigger {
                term: "t".into(),
                data_id: item.id.clone(),
                span: crate::model::Span { start: 0, end: 1 },
                scores: Some(TriggerScores { affect: a, intensity: i, outrage: o }),
                method: None,
            }).collect();
            let avg = aggregate_scores(&triggers).unwrap();
            type Dim = fn(&TriggerScores) -> f64;
            let dims: [(f64, Dim); 3] = [
                (avg.affect, |s| s.affect),
                (avg.intensity, |s| s.intensity),
                (avg.outrage, |s| s.outrage),
            ];
            for (value, get) in dims {
                let vals: Vec<f64> = triggers.iter().map(|t| get(&t.scores.unwrap())).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(value >= lo - 1e-12 && value <= hi + 1e-12);
            }
            let mut shuffled = triggers.clone();
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let other = aggregate_scores(&shuffled).unwrap();
            prop_assert!((other.affect - avg.affect).abs() < 1e-12);
            prop_assert!((other.intensity - avg.intensity).abs() < 1e-12);
            prop_assert!((other.outrage - avg.outrage).abs() < 1e-12);
        }
    }
}
