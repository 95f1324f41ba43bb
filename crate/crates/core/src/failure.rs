//! Failure injection: perturb one stage of a plan and keep the rollout only
//! if the task then fails.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{plan_task, rollout_plan, Hold, Plan, PlanError, PlannerConfig, Trajectory};
use crate::rng;
use crate::sim::Simulator;
use crate::tasks::{TaskId, TaskSpec};
use crate::{Quat, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TranslationAxis {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RotationAxis {
    Roll,
    Pitch,
    Yaw,
}

/// What goes wrong in the deviated stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "FailureTypeWire", try_from = "FailureTypeWire")]
pub enum FailureMode {
    NoOps,
    Translation(TranslationAxis),
    Rotation(RotationAxis),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FailureTypeWire {
    mode: String,
    axis: Option<String>,
}

impl From<FailureMode> for FailureTypeWire {
    fn from(m: FailureMode) -> Self {
        Self { mode: m.mode_name().to_string(), axis: m.axis_name().map(str::to_string) }
    }
}

impl TryFrom<FailureTypeWire> for FailureMode {
    type Error = String;

    fn try_from(w: FailureTypeWire) -> Result<Self, String> {
        FailureMode::from_parts(&w.mode, w.axis.as_deref())
    }
}

impl FailureMode {
    /// Table order: no-ops, translations x/y/z, rotations about x/y/z.
    pub const ALL: [FailureMode; 7] = [
        FailureMode::NoOps,
        FailureMode::Translation(TranslationAxis::X),
        FailureMode::Translation(TranslationAxis::Y),
        FailureMode::Translation(TranslationAxis::Z),
        FailureMode::Rotation(RotationAxis::Roll),
        FailureMode::Rotation(RotationAxis::Pitch),
        FailureMode::Rotation(RotationAxis::Yaw),
    ];

    pub fn mode_name(self) -> &'static str {
        match self {
            FailureMode::NoOps => "no_ops",
            FailureMode::Translation(_) => "translation",
            FailureMode::Rotation(_) => "rotation",
        }
    }

    pub fn axis_name(self) -> Option<&'static str> {
        match self {
            FailureMode::NoOps => None,
            FailureMode::Translation(TranslationAxis::X) => Some("x"),
            FailureMode::Translation(TranslationAxis::Y) => Some("y"),
            FailureMode::Translation(TranslationAxis::Z) => Some("z"),
            FailureMode::Rotation(RotationAxis::Roll) => Some("roll"),
            FailureMode::Rotation(RotationAxis::Pitch) => Some("pitch"),
            FailureMode::Rotation(RotationAxis::Yaw) => Some("yaw"),
        }
    }

    pub fn from_parts(mode: &str, axis: Option<&str>) -> Result<Self, String> {
        let m = match (mode, axis) {
            ("no_ops", None) => FailureMode::NoOps,
            ("no_ops", Some(a)) => return Err(format!("no_ops takes no axis, got '{a}'")),
            ("translation" | "rotation", None) => return Err(format!("{mode} needs an axis")),
            ("translation", Some(a)) => FailureMode::Translation(match a {
                "x" => TranslationAxis::X,
                "y" => TranslationAxis::Y,
                "z" => TranslationAxis::Z,
                _ => return Err(format!("unknown translation axis '{a}'")),
            }),
            ("rotation", Some(a)) => FailureMode::Rotation(match a {
                "roll" => RotationAxis::Roll,
                "pitch" => RotationAxis::Pitch,
                "yaw" => RotationAxis::Yaw,
                _ => return Err(format!("unknown rotation axis '{a}'")),
            }),
            _ => return Err(format!("unknown mode '{mode}'")),
        };
        Ok(m)
    }

    /// Column label used in distribution tables.
    pub fn label(self) -> &'static str {
        match self {
            FailureMode::NoOps => "No-ops",
            FailureMode::Translation(TranslationAxis::X) => "Trans_x",
            FailureMode::Translation(TranslationAxis::Y) => "Trans_y",
            FailureMode::Translation(TranslationAxis::Z) => "Trans_z",
            FailureMode::Rotation(RotationAxis::Roll) => "Rot_x",
            FailureMode::Rotation(RotationAxis::Pitch) => "Rot_y",
            FailureMode::Rotation(RotationAxis::Yaw) => "Rot_z",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == label)
    }

    fn axis_vector(self) -> Option<Vec3> {
        let v = |x, y, z| Some(Vec3::new(x, y, z));
        match self {
            FailureMode::NoOps => None,
            FailureMode::Translation(TranslationAxis::X) | FailureMode::Rotation(RotationAxis::Roll) => {
                v(1.0, 0.0, 0.0)
            }
            FailureMode::Translation(TranslationAxis::Y) | FailureMode::Rotation(RotationAxis::Pitch) => {
                v(0.0, 1.0, 0.0)
            }
            FailureMode::Translation(TranslationAxis::Z) | FailureMode::Rotation(RotationAxis::Yaw) => {
                v(0.0, 0.0, 1.0)
            }
        }
    }
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.axis_name() {
            Some(a) => write!(f, "{}/{a}", self.mode_name()),
            None => f.write_str(self.mode_name()),
        }
    }
}

/// One configured way to fail: a mode, a magnitude range (m, rad or steps)
/// and the stages it may hit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    #[serde(flatten)]
    pub mode: FailureMode,
    pub range: [f64; 2],
    pub stages: Vec<String>,
}

impl FailureEntry {
    pub fn new(mode: FailureMode, range: [f64; 2], stages: &[&str]) -> Self {
        Self { mode, range, stages: stages.iter().map(|s| s.to_string()).collect() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureConfig {
    pub tasks: BTreeMap<TaskId, Vec<FailureEntry>>,
}

impl FailureConfig {
    pub fn entries(&self, task: TaskId) -> &[FailureEntry] {
        self.tasks.get(&task).map_or(&[], Vec::as_slice)
    }
}

/// A concrete perturbation drawn from a [`FailureEntry`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureSpec {
    pub mode: FailureMode,
    /// Signed offset in meters or radians; the stall length in steps for no-ops.
    pub magnitude: f64,
    pub stage: usize,
    /// Position of the stall within the stage, no-ops only.
    pub insertion: Option<usize>,
}

impl FailureSpec {
    pub fn duration(&self) -> usize {
        match self.mode {
            FailureMode::NoOps => self.magnitude as usize,
            _ => 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FailureError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("stage index {stage} out of range for a plan with {len} stages")]
    StageOutOfRange { stage: usize, len: usize },
    #[error("stage '{0}' is not part of the plan")]
    UnknownStage(String),
    #[error("{task} seed {seed}: unperturbed rollout failed")]
    GroundTruthFailed { task: TaskId, seed: u64 },
}

/// Draws an entry, stage, sign and magnitude uniformly. `None` when the
/// task has no configured failures.
pub fn sample_failure_spec<R: Rng>(
    plan: &Plan,
    entries: &[FailureEntry],
    rng: &mut R,
) -> Result<Option<FailureSpec>, FailureError> {
    if entries.is_empty() {
        return Ok(None);
    }
    let entry = &entries[rng.gen_range(0..entries.len())];
    let name = &entry.stages[rng.gen_range(0..entry.stages.len())];
    let stage = plan.stage_index(name).ok_or_else(|| FailureError::UnknownStage(name.clone()))?;
    let [lo, hi] = entry.range;
    let spec = match entry.mode {
        FailureMode::NoOps => {
            let duration = rng.gen_range(lo.round() as usize..=hi.round() as usize);
            let insertion = rng.gen_range(0..plan.stages[stage].steps);
            FailureSpec { mode: entry.mode, magnitude: duration as f64, stage, insertion: Some(insertion) }
        }
        mode => {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let m = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            FailureSpec { mode, magnitude: sign * m, stage, insertion: None }
        }
    };
    Ok(Some(spec))
}

/// Returns a copy of `plan` with stage `spec.stage` perturbed.
pub fn perturb_stage(plan: &Plan, spec: &FailureSpec) -> Result<Plan, FailureError> {
    let len = plan.stages.len();
    if spec.stage >= len {
        return Err(FailureError::StageOutOfRange { stage: spec.stage, len });
    }
    let mut out = plan.clone();
    let stage = &mut out.stages[spec.stage];
    match spec.mode {
        FailureMode::Translation(_) => {
            let axis = spec.mode.axis_vector().unwrap_or_else(Vec3::zeros);
            stage.target.position += axis * spec.magnitude;
        }
        FailureMode::Rotation(_) => {
            let axis = spec.mode.axis_vector().unwrap_or_else(Vec3::zeros);
            let r = Quat::from_axis_angle(axis, spec.magnitude);
            stage.target.orientation = (r * stage.target.orientation).normalized();
        }
        FailureMode::NoOps => {
            let duration = spec.duration();
            stage.hold = Some(Hold { at: spec.insertion.unwrap_or(0).min(stage.steps - 1), duration });
            stage.steps += duration;
        }
    }
    Ok(out)
}

/// A confirmed failure: the correct and the failed rollout of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct FailureCase {
    pub task: TaskId,
    pub seed: u64,
    pub spec: FailureSpec,
    pub plan: Plan,
    pub perturbed: Plan,
    pub correct: Trajectory,
    pub failed: Trajectory,
}

impl FailureCase {
    pub fn stage_name(&self) -> &str {
        &self.plan.stages[self.spec.stage].name
    }

    /// Frames of the deviated stage in the failed rollout.
    pub fn failed_segment(&self) -> &[crate::planner::Frame] {
        self.failed.segment_frames(self.spec.stage)
    }

    /// Frames of the same stage in the correct rollout.
    pub fn correct_segment(&self) -> &[crate::planner::Frame] {
        self.correct.segment_frames(self.spec.stage)
    }
}

/// Everything one generation attempt produced.
#[derive(Clone, Debug)]
pub struct FailureAttempt {
    pub plan: Plan,
    pub correct: Trajectory,
    pub perturbation: Option<(FailureSpec, Plan, Trajectory)>,
}

impl FailureAttempt {
    /// True when a perturbation was injected but the task still succeeded.
    pub fn is_mild(&self) -> bool {
        self.perturbation.as_ref().is_some_and(|(_, _, t)| t.outcome)
    }

    pub fn into_case(self, task: TaskId, seed: u64) -> Option<FailureCase> {
        let (spec, perturbed, failed) = self.perturbation?;
        if failed.outcome {
            return None;
        }
        Some(FailureCase { task, seed, spec, plan: self.plan, perturbed, correct: self.correct, failed })
    }
}

/// Rolls out the correct plan and one sampled perturbation of it.
pub fn attempt_failure(
    sim: &Simulator,
    planner: &PlannerConfig,
    task: &TaskSpec,
    seed: u64,
    config: &FailureConfig,
) -> Result<FailureAttempt, FailureError> {
    let (plan, world) = plan_task(sim, planner, task, seed)?;
    let correct = rollout_plan(sim, &plan, &world)?;
    if !correct.outcome {
        return Err(FailureError::GroundTruthFailed { task: task.id, seed });
    }
    let mut rng = rng::stream(seed, &format!("failure:{}", task.id));
    let perturbation = match sample_failure_spec(&plan, config.entries(task.id), &mut rng)? {
        None => None,
        Some(spec) => {
            let perturbed = perturb_stage(&plan, &spec)?;
            let failed = rollout_plan(sim, &perturbed, &world)?;
            Some((spec, perturbed, failed))
        }
    };
    Ok(FailureAttempt { plan, correct, perturbation })
}

/// The confirmed failure case for `(task, seed)`, or `None` when the task
/// has no failures configured or the perturbation was too mild.
pub fn generate_failure_case(
    sim: &Simulator,
    planner: &PlannerConfig,
    task: &TaskSpec,
    seed: u64,
    config: &FailureConfig,
) -> Result<Option<FailureCase>, FailureError> {
    Ok(attempt_failure(sim, planner, task, seed, config)?.into_case(task.id, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pick_plan() -> (Simulator, PlannerConfig, TaskSpec, Plan) {
        let sim = Simulator::default();
        let cfg = PlannerConfig::default();
        let task = TaskSpec::builtin(TaskId::PickCube);
        let (plan, _) = plan_task(&sim, &cfg, &task, 4).unwrap();
        (sim, cfg, task, plan)
    }

    fn single(entry: FailureEntry) -> FailureConfig {
        FailureConfig { tasks: [(TaskId::PickCube, vec![entry])].into_iter().collect() }
    }

    #[test]
    fn wire_format() {
        let m = FailureMode::Translation(TranslationAxis::X);
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"mode":"translation","axis":"x"}"#);
        assert_eq!(serde_json::to_string(&FailureMode::NoOps).unwrap(), r#"{"mode":"no_ops","axis":null}"#);
        for m in FailureMode::ALL {
            let s = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<FailureMode>(&s).unwrap(), m);
            assert_eq!(FailureMode::from_label(m.label()), Some(m));
        }
        assert!(serde_json::from_str::<FailureMode>(r#"{"mode":"no_ops","axis":"x"}"#).is_err());
        assert!(serde_json::from_str::<FailureMode>(r#"{"mode":"rotation","axis":null}"#).is_err());
    }

    #[test]
    fn translation_touches_one_stage() {
        let (_, _, _, plan) = pick_plan();
        let spec = FailureSpec {
            mode: FailureMode::Translation(TranslationAxis::X),
            magnitude: 0.05,
            stage: 0,
            insertion: None,
        };
        let out = perturb_stage(&plan, &spec).unwrap();
        let differing: Vec<_> = (0..plan.stages.len()).filter(|&i| plan.stages[i] != out.stages[i]).collect();
        assert_eq!(differing, vec![0]);
        let (a, b) = (plan.stages[0].target.position, out.stages[0].target.position);
        assert_eq!(b.x - a.x, 0.05);
        assert_eq!((a.y, a.z), (b.y, b.z));
    }

    #[test]
    fn rotation_premultiplies_in_world_frame() {
        let (_, _, _, plan) = pick_plan();
        let spec = FailureSpec {
            mode: FailureMode::Rotation(RotationAxis::Roll),
            magnitude: -0.3,
            stage: 2,
            insertion: None,
        };
        let out = perturb_stage(&plan, &spec).unwrap();
        let q0 = plan.stages[2].target.orientation;
        let q1 = out.stages[2].target.orientation;
        let rel = q1 * q0.inverse();
        assert!((rel.angle() - 0.3).abs() < 1e-12);
        assert!(rel.vector().normalized().unwrap().x < -0.999_999);
    }

    #[test]
    fn no_ops_extends_stage() {
        let (_, _, _, plan) = pick_plan();
        let spec = FailureSpec { mode: FailureMode::NoOps, magnitude: 15.0, stage: 1, insertion: Some(7) };
        let out = perturb_stage(&plan, &spec).unwrap();
        assert_eq!(out.total_steps(), plan.total_steps() + 15);
        assert_eq!(out.stages[1].target, plan.stages[1].target);
        assert_eq!(out.horizon, plan.horizon);
        assert_eq!(out.stages[1].hold, Some(Hold { at: 7, duration: 15 }));
    }

    #[test]
    fn out_of_range_stage() {
        let (_, _, _, plan) = pick_plan();
        let spec = FailureSpec { mode: FailureMode::NoOps, magnitude: 10.0, stage: 9, insertion: Some(0) };
        assert_eq!(perturb_stage(&plan, &spec), Err(FailureError::StageOutOfRange { stage: 9, len: 4 }));
    }

    #[test]
    fn sampled_specs_respect_ranges() {
        let (_, _, _, plan) = pick_plan();
        let entries = vec![
            FailureEntry::new(FailureMode::Translation(TranslationAxis::Y), [0.03, 0.1], &["grasp"]),
            FailureEntry::new(FailureMode::NoOps, [10.0, 20.0], &["descend", "lift"]),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut signs = [false; 2];
        for _ in 0..500 {
            let s = sample_failure_spec(&plan, &entries, &mut rng).unwrap().unwrap();
            match s.mode {
                FailureMode::NoOps => {
                    assert!((10..=20).contains(&s.duration()));
                    assert!([1, 3].contains(&s.stage));
                    assert!(s.insertion.unwrap() < 40);
                }
                _ => {
                    assert!((0.03..=0.1).contains(&s.magnitude.abs()));
                    assert_eq!(s.stage, 2);
                    signs[usize::from(s.magnitude > 0.0)] = true;
                }
            }
        }
        assert_eq!(signs, [true, true]);
        assert_eq!(sample_failure_spec(&plan, &[], &mut rng).unwrap(), None);
    }

    #[test]
    fn off_center_grasp_fails() {
        let (sim, cfg, task, plan) = pick_plan();
        let (_, world) = plan_task(&sim, &cfg, &task, 4).unwrap();
        let spec = FailureSpec {
            mode: FailureMode::Translation(TranslationAxis::X),
            magnitude: 0.06,
            stage: plan.stage_index("grasp").unwrap(),
            insertion: None,
        };
        let failed = rollout_plan(&sim, &perturb_stage(&plan, &spec).unwrap(), &world).unwrap();
        assert!(!failed.outcome);
        assert!(failed.final_world().attached.is_none());
    }

    #[test]
    fn empty_entries_are_a_no_op() {
        let (sim, cfg, task, _) = pick_plan();
        let none = FailureConfig::default();
        assert_eq!(generate_failure_case(&sim, &cfg, &task, 4, &none).unwrap(), None);
    }

    #[test]
    fn generated_cases_are_confirmed_and_deterministic() {
        let (sim, cfg, task, _) = pick_plan();
        let config =
            single(FailureEntry::new(FailureMode::Translation(TranslationAxis::X), [0.03, 0.1], &["grasp"]));
        let mut found = 0;
        for seed in 0..20 {
            let a = generate_failure_case(&sim, &cfg, &task, seed, &config).unwrap();
            let b = generate_failure_case(&sim, &cfg, &task, seed, &config).unwrap();
            assert_eq!(a, b);
            if let Some(case) = a {
                assert!(case.correct.outcome && !case.failed.outcome);
                let diff = (0..case.plan.stages.len())
                    .filter(|&i| case.plan.stages[i] != case.perturbed.stages[i])
                    .count();
                assert_eq!(diff, 1);
                found += 1;
            }
        }
        assert!(found > 0);
    }
}
