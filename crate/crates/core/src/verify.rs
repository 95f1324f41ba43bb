//! Replay verification of recovery candidates.

use crate::failure::FailureCase;
use crate::planner::{Executor, PlanError};
use crate::recovery::CandidateRecovery;
use crate::sim::Simulator;
use crate::{apply_delta, interpolate_stage, Pose};

/// Steps needed to reach `to` from `from` without exceeding the speed caps.
pub fn transit_steps(sim: &Simulator, from: &Pose, to: &Pose) -> usize {
    let c = sim.config();
    let lin = (to.position - from.position).norm() / c.max_ee_speed;
    let ang = from.orientation.angle_to(&to.orientation) / c.max_ee_angular;
    let grip = (to.gripper - from.gripper).abs() / c.max_gripper_rate;
    // Tolerate rounding noise right at a step boundary.
    let n = lin.max(ang).max(grip) - 1e-9;
    (n.ceil() as usize).max(1)
}

fn replay(sim: &Simulator, case: &FailureCase, cand: &CandidateRecovery) -> Result<bool, PlanError> {
    let stage = case.spec.stage;
    let failed = case.failed_segment();
    let correct = case.correct_segment();
    if cand.d_index >= failed.len() || cand.c_index >= correct.len() {
        return Ok(false);
    }
    let mut exec = Executor::new(sim, case.correct.initial.clone(), case.plan.horizon);
    for (i, s) in case.plan.stages[..stage].iter().enumerate() {
        if !exec.run_stage(i, s)? {
            return Ok(exec.finish(&case.plan.predicate)?.outcome);
        }
    }
    let mut go = true;
    for f in &failed[..=cand.d_index] {
        go = go && exec.command(stage, &f.command)?;
    }
    let here = exec.world().ee_pose;
    let fix = apply_delta(&here, &cand.action);
    for p in interpolate_stage(&here, &fix, transit_steps(sim, &here, &fix))? {
        go = go && exec.command(stage, &p)?;
    }
    for f in &correct[cand.c_index + 1..] {
        go = go && exec.command(stage, &f.command)?;
    }
    for (i, s) in case.plan.stages.iter().enumerate().skip(stage + 1) {
        if !go {
            break;
        }
        go = exec.run_stage(i, s)?;
    }
    Ok(exec.finish(&case.plan.predicate)?.outcome)
}

/// Replays the failed rollout up to the deviated pose, executes the
/// correction, then resumes the correct plan from the matched pose. Any
/// simulator error counts as a rejection.
pub fn verify_candidate(sim: &Simulator, case: &FailureCase, cand: &CandidateRecovery) -> bool {
    replay(sim, case, cand).unwrap_or_else(|e| {
        log::debug!("{} seed {}: replay error: {e}", case.task, case.seed);
        false
    })
}

/// Marks each candidate with its verification result.
pub fn verify_candidates(sim: &Simulator, case: &FailureCase, cands: &mut [CandidateRecovery]) {
    for c in cands {
        c.verified = verify_candidate(sim, case, c);
    }
}
