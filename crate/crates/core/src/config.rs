//! Pipeline configuration: simulator constants, planner settings, dataset
//! and supervision parameters, and the per-task failure lists.
//!
//! The file format is YAML. Rotation ranges may be given in degrees with
//! `unit: deg`; everything is stored in meters, radians and steps.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::failure::{FailureConfig, FailureEntry, FailureMode, RotationAxis, TranslationAxis};
use crate::planner::PlannerConfig;
use crate::sim::SimConfig;
use crate::tasks::{Placement, TaskId, TaskSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Upper bound on recovery candidates collected per failure case.
    pub candidates_per_case: usize,
    /// Failure entries per success entry; 0 keeps the whole success pool.
    pub failure_to_success_ratio: f64,
    /// Success windows drawn from each ground-truth rollout into the pool.
    pub success_windows_per_seed: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { candidates_per_case: 5, failure_to_success_ratio: 2.3, success_windows_per_seed: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisorConfig {
    pub cadence: usize,
    /// Fractional slack on the nominal plan length for the episode budget.
    pub budget_slack: f64,
    pub settle_steps: usize,
    /// Perturbations tried per episode seed to find one the bare policy fails on.
    pub max_fault_attempts: usize,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self { cadence: 10, budget_slack: 0.25, settle_steps: 10, max_fault_attempts: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub instruction: String,
    pub placement: BTreeMap<String, Placement>,
    pub failures: Vec<FailureEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub sim: SimConfig,
    pub planner: PlannerConfig,
    pub dataset: DatasetConfig,
    pub supervisor: SupervisorConfig,
    pub tasks: BTreeMap<TaskId, TaskConfig>,
}

const T_RANGE: [f64; 2] = [0.03, 0.10];
const R_RANGE: [f64; 2] = [0.17, 0.79];
const N_RANGE: [f64; 2] = [10.0, 20.0];

/// Built-in failure lists.
pub fn default_failures(task: TaskId) -> Vec<FailureEntry> {
    use FailureMode::{NoOps, Rotation, Translation};
    use RotationAxis::{Pitch, Roll, Yaw};
    use TranslationAxis::{X, Y, Z};
    let e = FailureEntry::new;
    match task {
        TaskId::PickCube | TaskId::PickCharger => vec![
            e(Translation(X), T_RANGE, &["descend", "grasp"]),
            e(Translation(Y), T_RANGE, &["descend", "grasp"]),
            e(Rotation(Roll), R_RANGE, &["grasp"]),
            e(Rotation(Pitch), R_RANGE, &["grasp"]),
            e(Rotation(Yaw), R_RANGE, &["grasp"]),
            e(NoOps, N_RANGE, &["descend", "grasp", "lift"]),
        ],
        TaskId::PickSphere => vec![
            e(Translation(X), T_RANGE, &["descend", "grasp"]),
            e(Translation(Y), T_RANGE, &["descend", "grasp"]),
            e(Rotation(Roll), R_RANGE, &["grasp"]),
            e(Rotation(Pitch), R_RANGE, &["grasp"]),
            e(NoOps, N_RANGE, &["descend", "grasp", "lift"]),
        ],
        TaskId::PushCube => vec![
            e(Translation(X), T_RANGE, &["lower", "push"]),
            e(Translation(Y), T_RANGE, &["lower", "push"]),
            e(Translation(Z), T_RANGE, &["push"]),
            e(NoOps, N_RANGE, &["approach", "lower", "push"]),
        ],
        TaskId::StackCube => vec![
            e(Translation(X), T_RANGE, &["descend", "grasp", "lower", "release"]),
            e(Translation(Y), T_RANGE, &["descend", "grasp", "lower", "release"]),
            e(Rotation(Roll), R_RANGE, &["grasp"]),
            e(Rotation(Pitch), R_RANGE, &["grasp"]),
            e(Rotation(Yaw), R_RANGE, &["grasp"]),
            e(NoOps, N_RANGE, &["grasp", "lift", "align", "lower", "release"]),
        ],
        TaskId::PlaceSphere => vec![
            e(Translation(X), T_RANGE, &["descend", "grasp", "lower", "release"]),
            e(Translation(Y), T_RANGE, &["descend", "grasp", "lower", "release"]),
            e(Rotation(Roll), R_RANGE, &["grasp"]),
            e(Rotation(Pitch), R_RANGE, &["grasp"]),
            e(NoOps, N_RANGE, &["grasp", "lift", "align", "lower", "release"]),
        ],
    }
}

fn default_task(task: TaskId) -> TaskConfig {
    TaskConfig {
        instruction: task.default_instruction().to_string(),
        placement: BTreeMap::new(),
        failures: default_failures(task),
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            planner: PlannerConfig::default(),
            dataset: DatasetConfig::default(),
            supervisor: SupervisorConfig::default(),
            tasks: TaskId::ALL.into_iter().map(|t| (t, default_task(t))).collect(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    sim: SimConfig,
    #[serde(default)]
    planner: PlannerConfig,
    #[serde(default)]
    dataset: DatasetConfig,
    #[serde(default)]
    supervisor: SupervisorConfig,
    #[serde(default)]
    tasks: BTreeMap<String, RawTask>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    instruction: Option<String>,
    #[serde(default)]
    placement: BTreeMap<String, Placement>,
    failures: Option<Vec<RawFailure>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFailure {
    mode: String,
    axis: Option<String>,
    range: Vec<f64>,
    unit: Option<String>,
    stages: Vec<String>,
}

fn parse_failure(task: TaskId, key: &str, raw: RawFailure) -> Result<FailureEntry, ConfigError> {
    let mode = FailureMode::from_parts(&raw.mode, raw.axis.as_deref())
        .map_err(|m| invalid(format!("{key}.mode"), m))?;
    let rkey = format!("{key}.range");
    let [lo, hi] = <[f64; 2]>::try_from(raw.range.as_slice())
        .map_err(|_| invalid(&rkey, format!("expected [lo, hi], got {} values", raw.range.len())))?;
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(invalid(&rkey, "non-finite bound"));
    }
    if lo <= 0.0 || hi <= 0.0 {
        return Err(invalid(&rkey, format!("non-positive magnitude in [{lo}, {hi}]")));
    }
    if lo > hi {
        return Err(invalid(&rkey, format!("inverted range [{lo}, {hi}]")));
    }
    let ukey = format!("{key}.unit");
    let unit = raw.unit.as_deref();
    let scale = match (mode, unit) {
        (FailureMode::Translation(_), None | Some("m")) => 1.0,
        (FailureMode::Rotation(_), None | Some("rad")) => 1.0,
        (FailureMode::Rotation(_), Some("deg")) => std::f64::consts::PI / 180.0,
        (FailureMode::NoOps, None | Some("steps")) => {
            if lo.fract() != 0.0 || hi.fract() != 0.0 {
                return Err(invalid(&rkey, "no_ops durations must be whole steps"));
            }
            1.0
        }
        (_, Some(u)) => {
            return Err(invalid(ukey, format!("unit '{u}' does not fit mode {}", mode.mode_name())))
        }
    };
    if raw.stages.is_empty() {
        return Err(invalid(format!("{key}.stages"), "no eligible stages"));
    }
    for (j, s) in raw.stages.iter().enumerate() {
        if !task.stage_names().contains(&s.as_str()) {
            return Err(invalid(format!("{key}.stages[{j}]"), format!("unknown stage '{s}' for {task}")));
        }
    }
    Ok(FailureEntry { mode, range: [lo * scale, hi * scale], stages: raw.stages })
}

fn check_range(key: &str, [lo, hi]: [f64; 2]) -> Result<(), ConfigError> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(invalid(key, "non-finite bound"));
    }
    if lo > hi {
        return Err(invalid(key, format!("inverted range [{lo}, {hi}]")));
    }
    Ok(())
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_yaml(&text)
    }

    pub fn from_yaml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig =
            if text.trim().is_empty() { serde_yaml::from_str("{}") } else { serde_yaml::from_str(text) }
                .map_err(|e| ConfigError::Parse(e.to_string()))?;

        let mut cfg = PipelineConfig {
            sim: raw.sim,
            planner: raw.planner,
            dataset: raw.dataset,
            supervisor: raw.supervisor,
            ..Default::default()
        };
        for (name, task) in raw.tasks {
            let key = format!("tasks.{name}");
            let id: TaskId =
                name.parse().map_err(|e: crate::tasks::UnknownTask| invalid(&key, e.to_string()))?;
            let entry = cfg.tasks.get_mut(&id).expect("all tasks have defaults");
            if let Some(instruction) = task.instruction {
                entry.instruction = instruction;
            }
            let template = TaskSpec::builtin(id);
            for (obj, placement) in task.placement {
                let pkey = format!("{key}.placement.{obj}");
                if !template.scene.objects.iter().any(|o| o.id == obj) {
                    return Err(invalid(pkey, format!("unknown object '{obj}'")));
                }
                check_range(&format!("{pkey}.x"), placement.x)?;
                check_range(&format!("{pkey}.y"), placement.y)?;
                check_range(&format!("{pkey}.yaw"), placement.yaw)?;
                entry.placement.insert(obj, placement);
            }
            if let Some(failures) = task.failures {
                entry.failures = failures
                    .into_iter()
                    .enumerate()
                    .map(|(i, f)| parse_failure(id, &format!("{key}.failures[{i}]"), f))
                    .collect::<Result<_, _>>()?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.sim;
        let positive = [
            ("sim.cube_half_extent", s.cube_half_extent),
            ("sim.sphere_radius", s.sphere_radius),
            ("sim.lift_threshold", s.lift_threshold),
            ("sim.goal_radius", s.goal_radius),
            ("sim.stack_xy_tol", s.stack_xy_tol),
            ("sim.stack_z_tol", s.stack_z_tol),
            ("sim.grasp_radius", s.grasp_radius),
            ("sim.contact_radius", s.contact_radius),
            ("sim.max_ee_speed", s.max_ee_speed),
            ("sim.max_ee_angular", s.max_ee_angular),
            ("sim.max_gripper_rate", s.max_gripper_rate),
            ("sim.cameras.focal", s.cameras.focal),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(key, format!("must be positive, got {v}")));
            }
        }
        if s.charger_half_extents.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("sim.charger_half_extents", "must be positive"));
        }
        if !(0.0 < s.grasp_threshold && s.grasp_threshold < s.release_threshold && s.release_threshold < 1.0)
        {
            return Err(invalid("sim.grasp_threshold", "need 0 < grasp_threshold < release_threshold < 1"));
        }
        if (0..3).any(|i| s.workspace_min[i] >= s.workspace_max[i]) {
            return Err(invalid("sim.workspace_min", "must be below workspace_max on every axis"));
        }
        let p = &self.planner;
        if p.min_stage_steps < 1 {
            return Err(invalid("planner.min_stage_steps", "must be at least 1"));
        }
        if p.steps_per_stage < p.min_stage_steps {
            return Err(invalid(
                "planner.steps_per_stage",
                format!("{} is below min_stage_steps {}", p.steps_per_stage, p.min_stage_steps),
            ));
        }
        if self.dataset.candidates_per_case == 0 {
            return Err(invalid("dataset.candidates_per_case", "must be at least 1"));
        }
        let r = self.dataset.failure_to_success_ratio;
        if !(r.is_finite() && r >= 0.0) {
            return Err(invalid("dataset.failure_to_success_ratio", "must be non-negative"));
        }
        if self.supervisor.cadence == 0 {
            return Err(invalid("supervisor.cadence", "must be at least 1"));
        }
        if self.supervisor.budget_slack.is_nan() || self.supervisor.budget_slack < 0.0 {
            return Err(invalid("supervisor.budget_slack", "must be non-negative"));
        }
        Ok(())
    }

    pub fn failures(&self) -> FailureConfig {
        FailureConfig { tasks: self.tasks.iter().map(|(id, t)| (*id, t.failures.clone())).collect() }
    }

    /// The built-in task with this config's instruction and placement overrides.
    pub fn task_spec(&self, id: TaskId) -> TaskSpec {
        let mut spec = TaskSpec::builtin(id);
        if let Some(tc) = self.tasks.get(&id) {
            spec.instruction = tc.instruction.clone();
            for obj in &mut spec.scene.objects {
                if let Some(p) = tc.placement.get(&obj.id) {
                    obj.placement = p.clone();
                }
            }
        }
        spec
    }

    /// SHA-256 of the canonical JSON form of the validated config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

pub fn load_failure_config(path: &Path) -> Result<FailureConfig, ConfigError> {
    Ok(PipelineConfig::load(path)?.failures())
}
