//! Warning generation from signals and fusion of related warnings.

use std::collections::BTreeMap;

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::id::{mint_id, EntityKind};
use crate::model::{FusedWarning, SensorSignal, ThreatLevel, TimeWindow, Warning};

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("invalid policy for signal {signal}: {reason}")]
    InvalidPolicyForSignal { signal: String, reason: String },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Count,
    OutrageAvg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationPolicy {
    pub metric: Metric,
    pub threshold: f64,
    /// `[low→medium, medium→high]`, strictly ascending.
    pub level_cutoffs: [f64; 2],
    /// Seconds a warning may trail its cluster and still join it.
    pub fusion_window: u64,
}

impl GenerationPolicy {
    pub fn validate(&self) -> Result<(), FusionError> {
        let [lo, hi] = self.level_cutoffs;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(FusionError::InvalidPolicy(format!("cutoffs {lo} and {hi} are not ascending")));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(FusionError::InvalidPolicy(format!("threshold {} must be positive", self.threshold)));
        }
        if self.metric == Metric::OutrageAvg && self.threshold > 1.0 {
            return Err(FusionError::InvalidPolicy("outrage threshold must be a fraction".into()));
        }
        Ok(())
    }

    pub fn level_for(&self, value: f64) -> ThreatLevel {
        let [lo, hi] = self.level_cutoffs;
        if value >= hi {
            ThreatLevel::High
        } else if value >= lo {
            ThreatLevel::Medium
        } else {
            ThreatLevel::Low
        }
    }
}

/// Emits a warning when the policy metric reaches the threshold.
///
/// Confidence is the outrage average itself, or `min(count / (2 × threshold), 1)`
/// for the count metric. The warning is issued at the end of the signal window.
pub fn generate_warning(policy: &GenerationPolicy, signal: &SensorSignal) -> Result<Option<Warning>, FusionError> {
    let (value, confidence) = match policy.metric {
        Metric::OutrageAvg => {
            let avg = signal.averages.ok_or_else(|| FusionError::InvalidPolicyForSignal {
                signal: signal.id.to_string(),
                reason: "outrage_avg needs averaged scores".into(),
            })?;
            (avg.outrage, avg.outrage)
        }
        Metric::Count => {
            let count = signal.count as f64;
            (count, (count / (2.0 * policy.threshold)).min(1.0))
        }
    };
    if value < policy.threshold {
        return Ok(None);
    }
    let Some(window) = signal.window else {
        return Ok(None);
    };
    let seed = format!("{}\u{1f}{:?}\u{1f}{}", signal.id, policy.metric, policy.threshold);
    Ok(Some(Warning {
        id: mint_id(EntityKind::Warning, seed.as_bytes()).expect("non-empty seed"),
        signal_id: signal.id.clone(),
        target: signal.target.clone(),
        threat_level: policy.level_for(value),
        confidence: confidence.clamp(0.0, 1.0),
        issued_at: window.end,
    }))
}

/// Noisy-OR: `1 − Π(1 − cᵢ)`, folded as `acc + c·(1 − acc)` so a single
/// confidence passes through unchanged.
pub fn combine_confidence(confidences: &[f64]) -> f64 {
    if confidences.iter().any(|&c| c >= 1.0) {
        return 1.0;
    }
    confidences
        .iter()
        .fold(0.0, |acc, &c| acc + c * (1.0 - acc))
        .clamp(0.0, 1.0)
}

/// Groups warnings by target, then clusters each target's warnings in
/// chronological order: a warning joins the open cluster iff it was issued no
/// later than the cluster's last issue time plus `fusion_window` seconds.
pub fn fuse(warnings: &[Warning], policy: &GenerationPolicy) -> Vec<FusedWarning> {
    let mut by_target: BTreeMap<&str, Vec<&Warning>> = BTreeMap::new();
    for w in warnings {
        by_target.entry(w.target.as_str()).or_default().push(w);
    }
    let gap = Duration::seconds(policy.fusion_window.min(i64::MAX as u64) as i64);
    let mut fused = Vec::new();
    for (target, mut group) in by_target {
        group.sort_by(|a, b| (a.issued_at, &a.id).cmp(&(b.issued_at, &b.id)));
        let mut clusters: Vec<Vec<&Warning>> = Vec::new();
        for w in group {
            match clusters.last_mut() {
                Some(open) if w.issued_at <= open.last().unwrap().issued_at + gap => open.push(w),
                _ => clusters.push(vec![w]),
            }
        }
        fused.extend(clusters.into_iter().map(|members| fuse_cluster(target, &members)));
    }
    fused
}

fn fuse_cluster(target: &str, members: &[&Warning]) -> FusedWarning {
    let warning_ids: Vec<_> = members.iter().map(|w| w.id.clone()).collect();
    let seed: Vec<String> = warning_ids.iter().map(ToString::to_string).collect();
    let confidences: Vec<f64> = members.iter().map(|w| w.confidence).collect();
    FusedWarning {
        id: mint_id(EntityKind::Fused, seed.join("\u{1f}").as_bytes()).expect("non-empty seed"),
        target: target.to_owned(),
        threat_level: members.iter().map(|w| w.threat_level).max().expect("non-empty cluster"),
        confidence: combine_confidence(&confidences),
        window: TimeWindow::spanning(members.iter().map(|w| w.issued_at)).expect("non-empty cluster"),
        warning_ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AverageScores;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn policy(metric: Metric, threshold: f64, window: u64) -> GenerationPolicy {
        GenerationPolicy {
            metric,
            threshold,
            level_cutoffs: [0.6, 0.8],
            fusion_window: window,
        }
    }

    fn outrage_signal(outrage: f64) -> SensorSignal {
        let at = Utc.with_ymd_and_hms(2019, 6, 1, 12, 0, 0).unwrap();
        SensorSignal {
            id: mint_id(EntityKind::Signal, b"sig").unwrap(),
            sensor_id: mint_id(EntityKind::Sensor, b"sen").unwrap(),
            target: "X".into(),
            window: Some(TimeWindow::instant(at)),
            count: 2,
            averages: Some(AverageScores {
                affect: 0.53,
                intensity: 0.484,
                outrage,
                n: 2,
            }),
            triggers: vec![],
            consumed_ids: vec![],
        }
    }

    fn warning(target: &str, secs: u32, confidence: f64, level: ThreatLevel) -> Warning {
        Warning {
            id: mint_id(EntityKind::Warning, format!("{target}{secs}{confidence}").as_bytes()).unwrap(),
            signal_id: mint_id(EntityKind::Signal, b"s").unwrap(),
            target: target.into(),
            threat_level: level,
            confidence,
            issued_at: Utc.with_ymd_and_hms(2019, 6, 1, 12, 0, secs).unwrap(),
        }
    }

    #[test]
    fn generate_examples() {
        let sig = outrage_signal(0.70905);
        let w = generate_warning(&policy(Metric::OutrageAvg, 0.5, 60), &sig).unwrap().unwrap();
        assert_eq!(w.threat_level, ThreatLevel::Medium);
        assert_eq!(w.confidence, 0.70905);
        assert!(generate_warning(&policy(Metric::OutrageAvg, 0.9, 60), &sig).unwrap().is_none());

        let mut zero = sig.clone();
        zero.count = 0;
        assert!(generate_warning(&policy(Metric::Count, 1.0, 60), &zero).unwrap().is_none());

        let mut counted = sig.clone();
        counted.averages = None;
        counted.count = 3;
        let w = generate_warning(&policy(Metric::Count, 2.0, 60), &counted).unwrap().unwrap();
        assert_eq!(w.confidence, 0.75);
        assert_eq!(w.threat_level, ThreatLevel::High);
        assert!(matches!(
            generate_warning(&policy(Metric::OutrageAvg, 0.5, 60), &counted),
            Err(FusionError::InvalidPolicyForSignal { .. })
        ));
    }

    #[test]
    fn policy_validation() {
        assert!(policy(Metric::OutrageAvg, 0.5, 60).validate().is_ok());
        let mut p = policy(Metric::OutrageAvg, 0.5, 60);
        p.level_cutoffs = [0.8, 0.8];
        assert!(p.validate().is_err());
        assert!(policy(Metric::Count, 0.0, 60).validate().is_err());
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_confidence(&[0.5, 0.5]), 0.75);
        assert_eq!(combine_confidence(&[0.3141]), 0.3141);
        assert_eq!(combine_confidence(&[1.0, 0.2]), 1.0);
        assert_eq!(combine_confidence(&[0.2, 1.0]), 1.0);
    }

    #[test]
    fn fuse_examples() {
        let a = warning("X", 0, 0.70905, ThreatLevel::Medium);
        let b = warning("X", 10, 0.5, ThreatLevel::Low);
        let fused = fuse(&[a.clone(), b.clone()], &policy(Metric::OutrageAvg, 0.5, 60));
        assert_eq!(fused.len(), 1);
        // 1 - (1 - 0.70905)(1 - 0.5)
        assert!((fused[0].confidence - 0.854525).abs() < 1e-12);
        assert_eq!(fused[0].threat_level, ThreatLevel::Medium);
        assert_eq!(fused[0].window.start, a.issued_at);
        assert_eq!(fused[0].window.end, b.issued_at);

        let split = fuse(&[a.clone(), b.clone()], &policy(Metric::OutrageAvg, 0.5, 1));
        assert_eq!(split.len(), 2);
        assert!(split.iter().all(|f| f.warning_ids.len() == 1));

        let y = warning("Y", 0, 0.5, ThreatLevel::Low);
        let fused = fuse(&[a, y], &policy(Metric::OutrageAvg, 0.5, 3600));
        assert_eq!(fused.len(), 2);
    }

    proptest! {
        #[test]
        fn fused_level_is_monotone(levels in prop::collection::vec(0u8..3, 1..10)) {
            let to_level = |l: u8| [ThreatLevel::Low, ThreatLevel::Medium, ThreatLevel::High][l as usize];
            let ws: Vec<Warning> = levels.iter().enumerate()
                .map(|(i, &l)| warning("X", i as u32, 0.5, to_level(l)))
                .collect();
            let p = policy(Metric::OutrageAvg, 0.5, 60);
            let before = fuse(&ws[..ws.len() - 1], &p).first().map(|f| f.threat_level);
            let after = fuse(&ws, &p)[0].threat_level;
            if let Some(b) = before {
                prop_assert!(after >= b);
            }
        }
    }
}
