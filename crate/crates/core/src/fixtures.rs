//! The two-tweet outrage scenario used by tests, the CLI fixtures and the
//! acceptance suite.

use chrono::{TimeZone, Utc};

use crate::model::{DataItem, DataKind, MethodReference};
use crate::outrage::LexiconEntry;

pub const INSANITY_TWEET: &str = "The new policies are pure insanity!";
pub const ATTACK_TWEET: &str = "This change is an attack on my wallet.";

pub fn sample_tweets() -> Vec<DataItem> {
    vec![
        DataItem::new(
            "twitter",
            DataKind::Tweet,
            Utc.with_ymd_and_hms(2019, 6, 1, 12, 0, 0).unwrap(),
            INSANITY_TWEET,
        ),
        DataItem::new(
            "twitter",
            DataKind::Tweet,
            Utc.with_ymd_and_hms(2019, 6, 1, 12, 0, 10).unwrap(),
            ATTACK_TWEET,
        ),
    ]
}

pub fn circumplex() -> MethodReference {
    MethodReference {
        model_name: "circumplex".into(),
        citation: "Russell 1980".into(),
        training_data_note: String::new(),
    }
}

pub fn sample_lexicon() -> Vec<LexiconEntry> {
    vec![
        LexiconEntry {
            term: "insanity".into(),
            affect: 0.46,
            intensity: 0.558,
            outrage: Some(0.7166),
            method: Some(circumplex()),
        },
        LexiconEntry {
            term: "attack".into(),
            affect: 0.60,
            intensity: 0.41,
            outrage: Some(0.7015),
            method: Some(circumplex()),
        },
    ]
}
