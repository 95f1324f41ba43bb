use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::assistant::{Assistant, AssistantDecision, AssistantQuery, GroundTruth};
use crate::dataset::DatasetEntry;
use crate::DeltaAction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("cannot evaluate on an empty set")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of entries whose failure flag was predicted correctly.
    pub binary_success: f64,
    /// Fraction of entries with the exact failure type (mode and axis);
    /// success entries count when no failure was predicted.
    pub type_accuracy: f64,
    /// Mean cosine between predicted and true recovery over failure entries.
    pub mean_cosine: f64,
    pub entries: usize,
    pub failure_entries: usize,
}

/// Cosine over the 7 action components; 0 when either side is all zero.
pub fn cosine(a: &DeltaAction, b: &DeltaAction) -> f64 {
    let (x, y) = (a.to_array(), b.to_array());
    let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

fn score(e: &DatasetEntry, d: &AssistantDecision) -> (bool, bool, Option<f64>) {
    let flag = d.is_failure == e.is_failure;
    if !e.is_failure {
        return (flag, !d.is_failure, None);
    }
    let typed = d.is_failure && d.failure_type == e.failure_type;
    let cos = match (d.recovery.filter(|_| d.is_failure), e.recovery) {
        (Some(p), Some(t)) => cosine(&p, &t),
        _ => 0.0,
    };
    (flag, typed, Some(cos))
}

/// Scores `assistant` on labeled entries. Assistant errors count as a
/// no-failure answer.
pub fn evaluate_assistant(assistant: &dyn Assistant, entries: &[DatasetEntry]) -> Result<Metrics, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut flags, mut typed, mut cos_sum, mut n_fail) = (0usize, 0usize, 0.0, 0usize);
    for e in entries {
        let query = AssistantQuery {
            task: e.task,
            instruction: &e.instruction,
            frames: &e.frames,
            ground_truth: Some(GroundTruth::Entry(e)),
        };
        let d = assistant.decide(&query).unwrap_or_else(|err| {
            log::warn!("{}: {err}", assistant.name());
            AssistantDecision::no_failure("")
        });
        let (f, t, c) = score(e, &d);
        flags += usize::from(f);
        typed += usize::from(t);
        if let Some(c) = c {
            cos_sum += c;
            n_fail += 1;
        }
    }
    let n = entries.len() as f64;
    Ok(Metrics {
        binary_success: flags as f64 / n,
        type_accuracy: typed as f64 / n,
        mean_cosine: if n_fail == 0 { 0.0 } else { cos_sum / n_fail as f64 },
        entries: entries.len(),
        failure_entries: n_fail,
    })
}
