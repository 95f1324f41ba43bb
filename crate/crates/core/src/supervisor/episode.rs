use std::collections::VecDeque;

use super::assistant::{
    Assistant, AssistantDecision, AssistantQuery, EpisodeTruth, GroundTruth, NullAssistant,
};
use super::trace::TracePoint;
use crate::config::{PipelineConfig, SupervisorConfig};
use crate::failure::{perturb_stage, sample_failure_spec, FailureError, FailureMode, FailureSpec};
use crate::planner::{plan_task, rollout_plan, Plan, Trajectory};
use crate::sim::{ObservationFrame, SimError, Simulator, WorldState};
use crate::tasks::TaskId;
use crate::{apply_delta, interpolate_stage, pose_distance, rng, Pose, WINDOW_FRAMES};

/// Executes the plan stage by stage with one fault injected online.
///
/// Offset faults replace the deviated stage's target. A stall freezes the
/// arm at its insertion point until an intervention. After an intervention
/// the policy re-localizes on the correct rollout and continues from the
/// nearest frame, with the fault cleared.
#[derive(Clone, Debug)]
pub struct FaultyPolicy<'a> {
    plan: &'a Plan,
    perturbed: Option<Plan>,
    correct: &'a Trajectory,
    fault: Option<FailureSpec>,
    stage: Option<usize>,
    stage_start: usize,
    queue: VecDeque<Pose>,
    emitted: usize,
    frozen: Option<Pose>,
    fault_active: bool,
    cleared: bool,
    last: Option<Pose>,
}

impl<'a> FaultyPolicy<'a> {
    pub fn new(
        plan: &'a Plan,
        correct: &'a Trajectory,
        fault: Option<FailureSpec>,
    ) -> Result<Self, FailureError> {
        let perturbed = fault.map(|f| perturb_stage(plan, &f)).transpose()?;
        Ok(Self {
            plan,
            perturbed,
            correct,
            fault,
            stage: None,
            stage_start: 0,
            queue: VecDeque::new(),
            emitted: 0,
            frozen: None,
            fault_active: false,
            cleared: false,
            last: None,
        })
    }

    pub fn fault_active(&self) -> bool {
        self.fault_active
    }

    pub fn stage(&self) -> usize {
        self.stage.unwrap_or(0)
    }

    pub fn last_command(&self) -> Option<Pose> {
        self.last
    }

    fn fault_on(&self, stage: usize) -> Option<&FailureSpec> {
        self.fault.as_ref().filter(|f| f.stage == stage && !self.cleared)
    }

    fn load(&mut self, index: usize, ee: &Pose, steps_done: usize) {
        let stage = &self.plan.stages[index];
        let mut target = stage.target;
        if let Some(f) = self.fault_on(index) {
            if f.mode != FailureMode::NoOps {
                target = self.perturbed.as_ref().expect("fault has a plan").stages[index].target;
                self.fault_active = true;
            }
        }
        self.queue =
            interpolate_stage(ee, &target, stage.steps).expect("plan stages have at least one step").into();
        self.stage = Some(index);
        self.stage_start = steps_done;
        self.emitted = 0;
    }

    /// The next command, or `None` once the plan is exhausted.
    pub fn next_command(&mut self, ee: &Pose, steps_done: usize) -> Option<Pose> {
        if let Some(held) = self.frozen {
            return Some(held);
        }
        loop {
            if let Some(s) = self.stage {
                let stall =
                    self.fault_on(s).filter(|f| f.mode == FailureMode::NoOps).and_then(|f| f.insertion);
                if stall == Some(self.emitted) && !self.queue.is_empty() {
                    self.frozen = Some(*ee);
                    self.fault_active = true;
                    self.last = Some(*ee);
                    return Some(*ee);
                }
                if let Some(p) = self.queue.pop_front() {
                    self.emitted += 1;
                    self.last = Some(p);
                    return Some(p);
                }
            }
            let next = self.stage.map_or(0, |s| s + 1);
            if next >= self.plan.stages.len() {
                return None;
            }
            self.load(next, ee, steps_done);
        }
    }

    /// Continues from the frame of the correct rollout nearest to `ee`,
    /// searching from the start of the deviated (or current) stage.
    pub fn resync(&mut self, ee: &Pose, steps_done: usize) {
        let from_stage = self.fault.map_or(self.stage(), |f| f.stage.min(self.stage()));
        let start = self.correct.segment(from_stage).map_or(0, |r| r.start);
        let frames = &self.correct.frames;
        let score = |p: &Pose| {
            let d = pose_distance(p, ee);
            d.translational + d.angular + (p.gripper - ee.gripper).abs()
        };
        let Some(best) = (start..frames.len())
            .min_by(|&a, &b| score(&frames[a].world.ee_pose).total_cmp(&score(&frames[b].world.ee_pose)))
        else {
            return;
        };
        let stage = self.correct.stage_of(best).unwrap_or(0);
        let seg = self.correct.segment(stage).unwrap_or(best..best + 1);
        self.queue = frames[best + 1..seg.end].iter().map(|f| f.command).collect();
        self.stage = Some(stage);
        self.emitted = best + 1 - seg.start;
        self.stage_start = steps_done.saturating_sub(self.emitted);
        self.frozen = None;
        self.fault_active = false;
        self.cleared = true;
    }
}

/// A scene, its correct rollout and the fault to inject.
#[derive(Clone, Debug)]
pub struct EpisodeSetup {
    pub task: TaskId,
    pub seed: u64,
    pub instruction: String,
    pub plan: Plan,
    pub initial: WorldState,
    pub correct: Trajectory,
    pub fault: Option<FailureSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    pub total_steps: usize,
    pub interventions: usize,
    pub queries: usize,
    /// Initial pose followed by the pose after every step.
    pub trace: Vec<TracePoint>,
}

/// Step budget: nominal plan length plus proportional slack plus settle steps.
pub fn episode_budget(plan: &Plan, sup: &SupervisorConfig) -> usize {
    (plan.total_steps() as f64 * (1.0 + sup.budget_slack)).ceil() as usize + sup.settle_steps
}

fn reached(a: &Pose, b: &Pose) -> bool {
    let d = pose_distance(a, b);
    d.translational <= 1e-9 && d.angular <= 1e-9 && (a.gripper - b.gripper).abs() <= 1e-9
}

/// Runs the policy with `assistant` consulted every `cadence` steps.
/// Assistant errors are logged and treated as "no failure".
pub fn run_supervised_episode(
    sim: &Simulator,
    setup: &EpisodeSetup,
    assistant: &dyn Assistant,
    cadence: usize,
    sup: &SupervisorConfig,
) -> Result<EpisodeResult, SimError> {
    let cadence = cadence.max(1);
    let mut policy = FaultyPolicy::new(&setup.plan, &setup.correct, setup.fault)
        .map_err(|e| SimError::InvalidCommand(e.to_string()))?;
    let budget = episode_budget(&setup.plan, sup);
    let deviated = setup.fault.map_or(0, |f| f.stage);
    let correct_segment = setup.correct.segment_frames(deviated);
    let deviated_name = setup.plan.stages[deviated].name.as_str();

    let mut world = setup.initial.clone();
    let mut trace = vec![TracePoint { step: 0, pose: world.ee_pose, intervention: false }];
    let mut window: VecDeque<ObservationFrame> = VecDeque::with_capacity(WINDOW_FRAMES);
    let mut correcting: Option<Pose> = None;
    let mut settle = sup.settle_steps;
    let mut deviated_start = 0;
    let (mut steps, mut queries, mut interventions) = (0, 0, 0);

    while steps < budget {
        let cmd = match correcting {
            Some(t) => t,
            None => match policy.next_command(&world.ee_pose, steps) {
                Some(c) => c,
                None => {
                    if settle == 0 {
                        break;
                    }
                    settle -= 1;
                    policy.last_command().unwrap_or(world.ee_pose)
                }
            },
        };
        if policy.stage() == deviated && !policy.cleared && policy.stage_start <= steps {
            deviated_start = policy.stage_start;
        }
        sim.step_in_place(&mut world, &cmd)?;
        steps += 1;
        trace.push(TracePoint { step: steps, pose: world.ee_pose, intervention: correcting.is_some() });
        if window.len() == WINDOW_FRAMES {
            window.pop_front();
        }
        window.push_back(sim.observe(&world));

        if let Some(t) = correcting {
            if reached(&world.ee_pose, &t) {
                correcting = None;
                policy.resync(&world.ee_pose, steps);
            }
        }

        if steps % cadence == 0 {
            queries += 1;
            let frames = window.make_contiguous();
            let truth = EpisodeTruth {
                fault: setup.fault.map(|f| f.mode),
                fault_active: policy.fault_active(),
                stage: setup.plan.stages[policy.stage()].name.as_str(),
                deviated_stage: deviated_name,
                correct_segment,
                segment_start: deviated_start,
                steps,
            };
            let query = AssistantQuery {
                task: setup.task,
                instruction: &setup.instruction,
                frames,
                ground_truth: Some(GroundTruth::Episode(truth)),
            };
            let decision = assistant.decide(&query).unwrap_or_else(|e| {
                log::warn!("{} seed {}: {e}", setup.task, setup.seed);
                AssistantDecision::no_failure("")
            });
            if let (true, Some(action), None) = (decision.is_failure, decision.recovery, correcting) {
                interventions += 1;
                let target = apply_delta(&world.ee_pose, &action);
                if reached(&world.ee_pose, &target) {
                    policy.resync(&world.ee_pose, steps);
                } else {
                    correcting = Some(target);
                }
            }
        }
    }
    let success = sim
        .evaluate_success(&world, &setup.plan.predicate)
        .map_err(|e| SimError::MalformedScene(e.to_string()))?;
    Ok(EpisodeResult { success, total_steps: steps, interventions, queries, trace })
}

impl EpisodeSetup {
    /// Plans the scene for `(task, seed)`. With `perturbed`, draws faults
    /// from the task's failure list until the unassisted policy fails, up
    /// to the configured number of attempts.
    pub fn prepare(
        cfg: &PipelineConfig,
        sim: &Simulator,
        task: TaskId,
        seed: u64,
        perturbed: bool,
    ) -> Result<Self, FailureError> {
        let spec = cfg.task_spec(task);
        let (plan, initial) = plan_task(sim, &cfg.planner, &spec, seed)?;
        let correct = rollout_plan(sim, &plan, &initial)?;
        if !correct.outcome {
            return Err(FailureError::GroundTruthFailed { task, seed });
        }
        let mut setup =
            EpisodeSetup { task, seed, instruction: spec.instruction, plan, initial, correct, fault: None };
        let entries = cfg.failures();
        let entries = entries.entries(task);
        if !perturbed || entries.is_empty() {
            return Ok(setup);
        }
        for attempt in 0..cfg.supervisor.max_fault_attempts.max(1) {
            let mut r = rng::indexed_stream(seed, &format!("supervise:{task}"), attempt as u64);
            setup.fault = sample_failure_spec(&setup.plan, entries, &mut r)?;
            let bare =
                run_supervised_episode(sim, &setup, &NullAssistant, cfg.supervisor.cadence, &cfg.supervisor)
                    .map_err(crate::planner::PlanError::from)?;
            if !bare.success {
                break;
            }
        }
        Ok(setup)
    }
}
