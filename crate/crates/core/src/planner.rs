//! Stage-waypoint plans and their rollout in the simulator.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::rng;
use crate::sim::{top_down, ObjectRecord, SimError, Simulator, SuccessPredicate, WorldState};
use crate::tasks::{TaskId, TaskSpec};
use crate::{interpolate_stage, Pose, Quat, Transform, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub steps_per_stage: usize,
    pub min_stage_steps: usize,
    /// Extra steps past the nominal plan length before a rollout is cut off.
    pub horizon_slack: usize,
    /// Height of the pre-grasp and pre-push waypoints above the object center.
    pub approach_height: f64,
    /// Height of the grasp point above the object center.
    pub grasp_offset: f64,
    /// Lift height past the success threshold.
    pub lift_margin: f64,
    /// Distance behind the cube where the push starts.
    pub push_backoff: f64,
    /// Distance short of the goal where the push ends.
    pub push_standoff: f64,
    /// Clearance of a carried object above the support it is placed on.
    pub place_clearance: f64,
    pub home: [f64; 3],
    pub max_placement_attempts: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            steps_per_stage: 40,
            min_stage_steps: 14,
            horizon_slack: 5,
            approach_height: 0.1,
            grasp_offset: 0.005,
            lift_margin: 0.012,
            push_backoff: 0.08,
            push_standoff: 0.03,
            place_clearance: 0.012,
            home: [0.0, 0.0, 0.25],
            max_placement_attempts: 100,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("plan needs at least 2 stages, got {0}")]
    TooFewStages(usize),
    #[error("duplicate stage name '{0}'")]
    DuplicateStage(String),
    #[error("stage '{name}' has {steps} steps, minimum is {min}")]
    StageTooShort { name: String, steps: usize, min: usize },
    #[error("{task}: no valid scene after {attempts} placement attempts")]
    SceneGeneration { task: TaskId, attempts: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A run of `duration` commands that hold the current pose, inserted before
/// the `at`-th interpolated command of a stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hold {
    pub at: usize,
    pub duration: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub target: Pose,
    /// Number of commands, including any held ones.
    pub steps: usize,
    #[serde(default)]
    pub hold: Option<Hold>,
}

impl Stage {
    pub fn new(name: impl Into<String>, target: Pose, steps: usize) -> Self {
        Self { name: name.into(), target, steps, hold: None }
    }

    fn motion_steps(&self) -> usize {
        self.steps - self.hold.map_or(0, |h| h.duration)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub task: TaskId,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub predicate: SuccessPredicate,
    /// Rollouts stop after this many steps.
    pub horizon: usize,
}

impl Plan {
    pub fn new(
        task: TaskId,
        seed: u64,
        stages: Vec<Stage>,
        predicate: SuccessPredicate,
        horizon_slack: usize,
        min_stage_steps: usize,
    ) -> Result<Self, PlanError> {
        if stages.len() < 2 {
            return Err(PlanError::TooFewStages(stages.len()));
        }
        for (i, s) in stages.iter().enumerate() {
            if stages[..i].iter().any(|o| o.name == s.name) {
                return Err(PlanError::DuplicateStage(s.name.clone()));
            }
            if s.steps < min_stage_steps {
                return Err(PlanError::StageTooShort {
                    name: s.name.clone(),
                    steps: s.steps,
                    min: min_stage_steps,
                });
            }
        }
        let horizon = stages.iter().map(|s| s.steps).sum::<usize>() + horizon_slack;
        Ok(Self { task, seed, stages, predicate, horizon })
    }

    pub fn stage_index(&self, name: &str) -> Option<usize> {
        self.stages.iter().position(|s| s.name == name)
    }

    pub fn total_steps(&self) -> usize {
        self.stages.iter().map(|s| s.steps).sum()
    }
}

/// One executed step: the command sent and the state it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub step: usize,
    pub command: Pose,
    pub world: WorldState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub initial: WorldState,
    pub frames: Vec<Frame>,
    /// Index of the last frame of each executed stage.
    pub stage_boundaries: Vec<usize>,
    pub outcome: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame indices of stage `stage`, if it was executed.
    pub fn segment(&self, stage: usize) -> Option<Range<usize>> {
        let end = *self.stage_boundaries.get(stage)? + 1;
        let start = match stage {
            0 => 0,
            _ => self.stage_boundaries[stage - 1] + 1,
        };
        Some(start..end)
    }

    pub fn segment_frames(&self, stage: usize) -> &[Frame] {
        self.segment(stage).map_or(&[], |r| &self.frames[r])
    }

    pub fn stage_of(&self, frame: usize) -> Option<usize> {
        if frame >= self.frames.len() {
            return None;
        }
        Some(self.stage_boundaries.partition_point(|&b| b < frame))
    }

    pub fn final_world(&self) -> &WorldState {
        self.frames.last().map_or(&self.initial, |f| &f.world)
    }
}

/// Feeds commands to the simulator, recording frames and stage boundaries
/// and refusing commands past the horizon.
pub struct Executor<'a> {
    sim: &'a Simulator,
    initial: WorldState,
    world: WorldState,
    frames: Vec<Frame>,
    boundaries: Vec<usize>,
    stage: Option<usize>,
    horizon: usize,
}

impl<'a> Executor<'a> {
    pub fn new(sim: &'a Simulator, initial: WorldState, horizon: usize) -> Self {
        Self {
            sim,
            world: initial.clone(),
            initial,
            frames: Vec::new(),
            boundaries: Vec::new(),
            stage: None,
            horizon,
        }
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() >= self.horizon
    }

    /// Steps once towards `cmd` as part of `stage`; returns false without
    /// stepping once the horizon is reached.
    pub fn command(&mut self, stage: usize, cmd: &Pose) -> Result<bool, SimError> {
        if self.is_full() {
            return Ok(false);
        }
        if self.stage != Some(stage) {
            if self.stage.is_some() && !self.frames.is_empty() {
                self.boundaries.push(self.frames.len() - 1);
            }
            self.stage = Some(stage);
        }
        self.sim.step_in_place(&mut self.world, cmd)?;
        self.frames.push(Frame { step: self.frames.len(), command: *cmd, world: self.world.clone() });
        Ok(true)
    }

    /// Interpolates from the current pose to the stage target, inserting
    /// held commands where the stage asks for them.
    pub fn run_stage(&mut self, index: usize, stage: &Stage) -> Result<bool, PlanError> {
        let path = interpolate_stage(&self.world.ee_pose, &stage.target, stage.motion_steps())?;
        for (i, cmd) in path.iter().enumerate() {
            if let Some(h) = stage.hold.filter(|h| h.at == i) {
                let held = self.world.ee_pose;
                for _ in 0..h.duration {
                    if !self.command(index, &held)? {
                        return Ok(false);
                    }
                }
            }
            if !self.command(index, cmd)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn finish(mut self, predicate: &SuccessPredicate) -> Result<Trajectory, SimError> {
        if !self.frames.is_empty() {
            self.boundaries.push(self.frames.len() - 1);
        }
        let outcome = self.sim.evaluate_success(&self.world, predicate)?;
        Ok(Trajectory {
            initial: self.initial,
            frames: self.frames,
            stage_boundaries: self.boundaries,
            outcome,
        })
    }
}

/// Executes every stage in order from `world`, up to the plan horizon.
pub fn rollout_plan(sim: &Simulator, plan: &Plan, world: &WorldState) -> Result<Trajectory, PlanError> {
    let mut exec = Executor::new(sim, world.clone(), plan.horizon);
    for (i, stage) in plan.stages.iter().enumerate() {
        if !exec.run_stage(i, stage)? {
            break;
        }
    }
    Ok(exec.finish(&plan.predicate)?)
}

struct Placed {
    position: Vec3,
    yaw: f64,
    half_height: f64,
}

/// Samples a scene for `task` and builds its canonical stage sequence.
pub fn plan_task(
    sim: &Simulator,
    cfg: &PlannerConfig,
    task: &TaskSpec,
    seed: u64,
) -> Result<(Plan, WorldState), PlanError> {
    let sc = sim.config();
    let mut rng = rng::stream(seed, task.id.as_str());
    for _ in 0..cfg.max_placement_attempts {
        let sample = task.scene.draw(&mut rng);
        if !task.scene.separated(&sample) {
            continue;
        }
        let mut objects = std::collections::BTreeMap::new();
        let mut placed = Vec::new();
        for (tmpl, &(x, y, yaw)) in task.scene.objects.iter().zip(&sample.placements) {
            let shape = tmpl.kind.shape(sc);
            let half_height = shape.half_height();
            let position = Vec3::new(x, y, sc.table_z + half_height);
            objects.insert(
                tmpl.id.clone(),
                ObjectRecord { shape, pose: Transform::new(position, top_down(yaw)) },
            );
            placed.push(Placed { position, yaw, half_height });
        }
        let goal = sample.goal.map(|(x, y)| Vec3::new(x, y, sc.table_z));
        if goal.is_some_and(|g| !sim.in_workspace(Vec3::new(g.x, g.y, sc.workspace_min[2]))) {
            continue;
        }
        let stages = build_stages(sim, cfg, task.id, &placed, goal);
        if !stages.iter().all(|s| sim.in_workspace(s.target.position)) {
            continue;
        }
        let plan =
            Plan::new(task.id, seed, stages, task.predicate.clone(), cfg.horizon_slack, cfg.min_stage_steps)?;
        let world = WorldState {
            ee_pose: Pose::new(Vec3::from(cfg.home), Quat::identity(), 1.0),
            objects,
            attached: None,
            table_z: sc.table_z,
            goal,
            step_count: 0,
        };
        return Ok((plan, world));
    }
    Err(PlanError::SceneGeneration { task: task.id, attempts: cfg.max_placement_attempts })
}

fn build_stages(
    sim: &Simulator,
    cfg: &PlannerConfig,
    task: TaskId,
    placed: &[Placed],
    goal: Option<Vec3>,
) -> Vec<Stage> {
    let sc = sim.config();
    let n = cfg.steps_per_stage;
    let obj = &placed[0];
    let q = top_down(obj.yaw);
    let at = |p: Vec3, g: f64| Pose::new(p, q, g);
    let above = |p: Vec3, dz: f64| Vec3::new(p.x, p.y, p.z + dz);

    if task == TaskId::PushCube {
        let goal = goal.expect("push scene has a goal");
        let c = obj.position;
        let dir = Vec3::new(goal.x - c.x, goal.y - c.y, 0.0).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        let q = top_down(0.0);
        let behind = c - dir * cfg.push_backoff;
        let end = Vec3::new(goal.x, goal.y, c.z) - dir * cfg.push_standoff;
        return vec![
            Stage::new("approach", Pose::new(above(behind, cfg.approach_height), q, 0.0), n),
            Stage::new("lower", Pose::new(behind, q, 0.0), n),
            Stage::new("push", Pose::new(end, q, 0.0), n),
        ];
    }

    let grasp_point = above(obj.position, cfg.grasp_offset);
    let mut lift_center = sc.table_z + sc.lift_threshold + cfg.lift_margin;
    if let Some(base) = placed.get(1) {
        let base_top = base.position.z + base.half_height;
        lift_center = lift_center.max(base_top + obj.half_height + cfg.place_clearance);
    }
    let lift = Vec3::new(grasp_point.x, grasp_point.y, lift_center + cfg.grasp_offset);
    let mut stages = vec![
        Stage::new("reach", at(above(grasp_point, cfg.approach_height), 1.0), n),
        Stage::new("descend", at(grasp_point, 1.0), n),
        Stage::new("grasp", at(grasp_point, 0.0), n),
        Stage::new("lift", at(lift, 0.0), n),
    ];
    if let Some(base) = placed.get(1) {
        let b = base.position;
        let rest = b.z + base.half_height + obj.half_height + cfg.grasp_offset;
        let over = Vec3::new(b.x, b.y, lift.z);
        let down = Vec3::new(b.x, b.y, rest);
        stages.push(Stage::new("align", at(over, 0.0), n));
        stages.push(Stage::new("lower", at(down, 0.0), n));
        stages.push(Stage::new("release", at(down, 1.0), n));
    }
    stages
}

/// Convenience for tests and tools: plan and roll out the unperturbed task.
pub fn ground_truth(
    sim: &Simulator,
    cfg: &PlannerConfig,
    task: &TaskSpec,
    seed: u64,
) -> Result<(Plan, Trajectory), PlanError> {
    let (plan, world) = plan_task(sim, cfg, task, seed)?;
    let traj = rollout_plan(sim, &plan, &world)?;
    Ok((plan, traj))
}
