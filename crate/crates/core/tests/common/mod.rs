#![allow(dead_code)]

use failsafe::failure::{perturb_stage, FailureCase, FailureMode, FailureSpec, TranslationAxis};
use failsafe::planner::{plan_task, rollout_plan, PlannerConfig};
use failsafe::sim::Simulator;
use failsafe::tasks::{TaskId, TaskSpec};

/// A failure case built by hand from a fixed x offset on one stage.
pub fn x_offset_case(task: TaskId, seed: u64, stage: &str, dx: f64) -> (Simulator, FailureCase) {
    let sim = Simulator::default();
    let cfg = PlannerConfig::default();
    let (plan, world) = plan_task(&sim, &cfg, &TaskSpec::builtin(task), seed).unwrap();
    let spec = FailureSpec {
        mode: FailureMode::Translation(TranslationAxis::X),
        magnitude: dx,
        stage: plan.stage_index(stage).unwrap(),
        insertion: None,
    };
    let perturbed = perturb_stage(&plan, &spec).unwrap();
    let correct = rollout_plan(&sim, &plan, &world).unwrap();
    let failed = rollout_plan(&sim, &perturbed, &world).unwrap();
    let case = FailureCase { task, seed, spec, plan, perturbed, correct, failed };
    (sim, case)
}

pub fn scratch_dir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}
