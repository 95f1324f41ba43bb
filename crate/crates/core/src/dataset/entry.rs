use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::failure::{FailureCase, FailureMode};
use crate::planner::Trajectory;
use crate::recovery::CandidateRecovery;
use crate::sim::{ObservationFrame, Simulator};
use crate::tasks::TaskId;
use crate::{DeltaAction, WINDOW_FRAMES};

pub const SCHEMA_VERSION: u32 = 1;

/// Where an entry came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    pub stage: usize,
    pub d_index: Option<usize>,
    pub c_index: Option<usize>,
    pub magnitude: Option<f64>,
    /// Global step of the last frame in the window.
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub schema_version: u32,
    pub task: TaskId,
    pub instruction: String,
    pub sub_task: String,
    pub frames: Vec<ObservationFrame>,
    pub is_failure: bool,
    pub failure_type: Option<FailureMode>,
    pub recovery: Option<DeltaAction>,
    pub provenance: Provenance,
}

fn window(sim: &Simulator, traj: &Trajectory, end: usize) -> Result<Vec<ObservationFrame>, DatasetError> {
    if end + 1 < WINDOW_FRAMES || end >= traj.len() {
        return Err(DatasetError::WindowTooShort { step: end });
    }
    Ok(traj.frames[end + 1 - WINDOW_FRAMES..=end].iter().map(|f| sim.observe(&f.world)).collect())
}

/// Failure entry for a verified candidate: the window of the failed
/// rollout ending at the deviated pose.
pub fn build_entry(
    sim: &Simulator,
    case: &FailureCase,
    cand: &CandidateRecovery,
    instruction: &str,
) -> Result<DatasetEntry, DatasetError> {
    if !cand.verified {
        return Err(DatasetError::Contract(format!(
            "{} seed {}: candidate (d {}, c {}) is not verified",
            case.task, case.seed, cand.d_index, cand.c_index
        )));
    }
    let seg = case
        .failed
        .segment(case.spec.stage)
        .ok_or_else(|| DatasetError::Contract("deviated stage was never executed".into()))?;
    let step = seg.start + cand.d_index;
    Ok(DatasetEntry {
        schema_version: SCHEMA_VERSION,
        task: case.task,
        instruction: instruction.to_string(),
        sub_task: case.stage_name().to_string(),
        frames: window(sim, &case.failed, step)?,
        is_failure: true,
        failure_type: Some(case.spec.mode),
        recovery: Some(cand.action),
        provenance: Provenance {
            seed: case.seed,
            stage: case.spec.stage,
            d_index: Some(cand.d_index),
            c_index: Some(cand.c_index),
            magnitude: Some(case.spec.magnitude),
            step,
        },
    })
}

/// Success entry: the ground-truth window ending at `step`.
pub fn build_success_entry(
    sim: &Simulator,
    task: TaskId,
    instruction: &str,
    seed: u64,
    stage_names: &[String],
    traj: &Trajectory,
    step: usize,
) -> Result<DatasetEntry, DatasetError> {
    let frames = window(sim, traj, step)?;
    let stage = traj.stage_of(step).unwrap_or(0);
    Ok(DatasetEntry {
        schema_version: SCHEMA_VERSION,
        task,
        instruction: instruction.to_string(),
        sub_task: stage_names.get(stage).cloned().unwrap_or_default(),
        frames,
        is_failure: false,
        failure_type: None,
        recovery: None,
        provenance: Provenance { seed, stage, d_index: None, c_index: None, magnitude: None, step },
    })
}

impl DatasetEntry {
    /// Checks the structural invariants of an entry.
    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!("schema version {}", self.schema_version));
        }
        if self.frames.len() != WINDOW_FRAMES {
            return Err(format!("{} frames, expected {WINDOW_FRAMES}", self.frames.len()));
        }
        if self.frames.windows(2).any(|w| w[1].step != w[0].step + 1) {
            return Err("frames are not step-consecutive".into());
        }
        if self.frames[WINDOW_FRAMES - 1].step != self.provenance.step as u64 {
            return Err("last frame does not match the labeled step".into());
        }
        let labeled = self.failure_type.is_some() && self.recovery.is_some();
        let unlabeled = self.failure_type.is_none() && self.recovery.is_none();
        match (self.is_failure, labeled, unlabeled) {
            (true, true, _) | (false, _, true) => {}
            _ => return Err("failure flag disagrees with failure_type/recovery".into()),
        }
        if self.recovery.is_some_and(|r| !r.is_finite()) {
            return Err("non-finite recovery".into());
        }
        Ok(())
    }

    /// Ordering key of the canonical file.
    pub fn sort_key(&self) -> (TaskId, u64, bool, usize, usize) {
        (
            self.task,
            self.provenance.seed,
            self.is_failure,
            self.provenance.step,
            self.provenance.c_index.unwrap_or(0),
        )
    }
}
