use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetEntry;
use crate::failure::FailureMode;
use crate::planner::Frame;
use crate::recovery::c_window;
use crate::sim::ObservationFrame;
use crate::tasks::TaskId;
use crate::{delta_action, DeltaAction};

/// What an assistant reports about the latest observation window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssistantDecision {
    pub sub_task: String,
    pub is_failure: bool,
    pub failure_type: Option<FailureMode>,
    pub recovery: Option<DeltaAction>,
}

impl AssistantDecision {
    pub fn no_failure(sub_task: impl Into<String>) -> Self {
        Self { sub_task: sub_task.into(), is_failure: false, failure_type: None, recovery: None }
    }

    pub fn failure(sub_task: impl Into<String>, mode: FailureMode, recovery: DeltaAction) -> Self {
        Self {
            sub_task: sub_task.into(),
            is_failure: true,
            failure_type: Some(mode),
            recovery: Some(recovery),
        }
    }
}

/// Privileged view of a running episode.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeTruth<'a> {
    pub fault: Option<FailureMode>,
    /// The injected fault has started to act and has not been corrected.
    pub fault_active: bool,
    /// Stage the policy is executing.
    pub stage: &'a str,
    pub deviated_stage: &'a str,
    /// Frames of the deviated stage in the correct rollout.
    pub correct_segment: &'a [Frame],
    /// Step count at which the deviated stage started.
    pub segment_start: usize,
    /// Steps executed so far.
    pub steps: usize,
}

#[derive(Clone, Copy, Debug)]
pub enum GroundTruth<'a> {
    Entry(&'a DatasetEntry),
    Episode(EpisodeTruth<'a>),
}

/// One consultation: the instruction and the most recent frames, plus
/// ground truth that only privileged assistants may look at.
#[derive(Clone, Copy, Debug)]
pub struct AssistantQuery<'a> {
    pub task: TaskId,
    pub instruction: &'a str,
    pub frames: &'a [ObservationFrame],
    pub ground_truth: Option<GroundTruth<'a>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("assistant error: {0}")]
pub struct AssistantError(pub String);

pub trait Assistant: Sync {
    fn name(&self) -> &str;
    fn decide(&self, query: &AssistantQuery<'_>) -> Result<AssistantDecision, AssistantError>;
}

/// Never reports a failure.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullAssistant;

impl Assistant for NullAssistant {
    fn name(&self) -> &str {
        "null"
    }

    fn decide(&self, _: &AssistantQuery<'_>) -> Result<AssistantDecision, AssistantError> {
        Ok(AssistantDecision::no_failure(""))
    }
}

/// Answers from ground truth.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleAssistant;

impl Assistant for OracleAssistant {
    fn name(&self) -> &str {
        "oracle"
    }

    fn decide(&self, query: &AssistantQuery<'_>) -> Result<AssistantDecision, AssistantError> {
        let truth =
            query.ground_truth.ok_or_else(|| AssistantError("oracle queried without ground truth".into()))?;
        Ok(oracle_assistant_decide(query.frames, &truth))
    }
}

/// The oracle's rule. For dataset entries it repeats the label. In an
/// episode it stays silent until the fault acts, then reports the fault
/// and the delta from the current pose to the correct rollout at the same
/// point of the deviated stage, clamped into the corrective window.
pub fn oracle_assistant_decide(frames: &[ObservationFrame], truth: &GroundTruth<'_>) -> AssistantDecision {
    match truth {
        GroundTruth::Entry(e) => AssistantDecision {
            sub_task: e.sub_task.clone(),
            is_failure: e.is_failure,
            failure_type: e.failure_type,
            recovery: e.recovery,
        },
        GroundTruth::Episode(t) => {
            let (Some(mode), true, Some(last)) = (t.fault, t.fault_active, frames.last()) else {
                return AssistantDecision::no_failure(t.stage);
            };
            let seg = t.correct_segment;
            let Some(window) = c_window(seg.len()) else {
                return AssistantDecision::no_failure(t.stage);
            };
            let local = t.steps.saturating_sub(t.segment_start + 1);
            let c = local.clamp(*window.start(), *window.end());
            let recovery = delta_action(&last.ee_pose, &seg[c].world.ee_pose);
            AssistantDecision::failure(t.deviated_stage, mode, recovery)
        }
    }
}
