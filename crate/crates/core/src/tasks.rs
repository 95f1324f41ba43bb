//! The six tabletop tasks: identifiers, instructions, scene templates and
//! success predicates.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim::{Shape, SimConfig, SuccessPredicate};
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    PickCube,
    PushCube,
    StackCube,
    PickSphere,
    PlaceSphere,
    PickCharger,
}

impl TaskId {
    pub const ALL: [TaskId; 6] = [
        TaskId::PickCube,
        TaskId::PushCube,
        TaskId::StackCube,
        TaskId::PickSphere,
        TaskId::PlaceSphere,
        TaskId::PickCharger,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::PickCube => "pick_cube",
            TaskId::PushCube => "push_cube",
            TaskId::StackCube => "stack_cube",
            TaskId::PickSphere => "pick_sphere",
            TaskId::PlaceSphere => "place_sphere",
            TaskId::PickCharger => "pick_charger",
        }
    }

    /// Canonical stage names in execution order.
    pub fn stage_names(self) -> &'static [&'static str] {
        match self {
            TaskId::PickCube | TaskId::PickSphere | TaskId::PickCharger => {
                &["reach", "descend", "grasp", "lift"]
            }
            TaskId::PushCube => &["approach", "lower", "push"],
            TaskId::StackCube | TaskId::PlaceSphere => {
                &["reach", "descend", "grasp", "lift", "align", "lower", "release"]
            }
        }
    }

    pub fn default_instruction(self) -> &'static str {
        match self {
            TaskId::PickCube => "Pick up the cube and lift it.",
            TaskId::PushCube => "Push the cube to the goal position.",
            TaskId::StackCube => "Stack the red cube on top of the green cube.",
            TaskId::PickSphere => "Pick up the sphere and lift it.",
            TaskId::PlaceSphere => "Place the sphere on top of the cube.",
            TaskId::PickCharger => "Pick up the charger and lift it.",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown task '{0}'")]
pub struct UnknownTask(pub String);

impl FromStr for TaskId {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| UnknownTask(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Cube,
    Sphere,
    Charger,
}

impl ShapeKind {
    pub fn shape(self, sim: &SimConfig) -> Shape {
        match self {
            ShapeKind::Cube => Shape::Box {
                half_extents: Vec3::new(sim.cube_half_extent, sim.cube_half_extent, sim.cube_half_extent),
            },
            ShapeKind::Sphere => Shape::Sphere { radius: sim.sphere_radius },
            ShapeKind::Charger => Shape::ChargerSlab { half_extents: Vec3::from(sim.charger_half_extents) },
        }
    }
}

/// Uniform placement ranges for one object; `[lo, hi]` in meters and radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub x: [f64; 2],
    pub y: [f64; 2],
    #[serde(default)]
    pub yaw: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectTemplate {
    pub id: String,
    pub kind: ShapeKind,
    pub placement: Placement,
}

/// Goal sampled relative to the pushed object: a heading and a distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalTemplate {
    pub heading: [f64; 2],
    pub distance: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneTemplate {
    pub objects: Vec<ObjectTemplate>,
    /// Minimum horizontal distance between object centers.
    pub min_separation: f64,
    pub goal: Option<GoalTemplate>,
}

/// Sampled scene: object placements (x, y, yaw) and an optional goal.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub placements: Vec<(f64, f64, f64)>,
    pub goal: Option<(f64, f64)>,
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

impl SceneTemplate {
    /// One draw from the placement ranges, without constraint checks.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> SceneSample {
        let placements: Vec<_> = self
            .objects
            .iter()
            .map(|o| {
                let x = uniform(rng, o.placement.x);
                let y = uniform(rng, o.placement.y);
                let yaw = uniform(rng, o.placement.yaw);
                (x, y, yaw)
            })
            .collect();
        let goal = self.goal.as_ref().map(|g| {
            let heading = uniform(rng, g.heading);
            let dist = uniform(rng, g.distance);
            let (x, y, _) = placements[0];
            (x + dist * heading.cos(), y + dist * heading.sin())
        });
        SceneSample { placements, goal }
    }

    pub fn separated(&self, sample: &SceneSample) -> bool {
        let p = &sample.placements;
        (0..p.len()).all(|i| {
            (i + 1..p.len()).all(|j| (p[i].0 - p[j].0).hypot(p[i].1 - p[j].1) >= self.min_separation)
        })
    }
}

/// A task definition: what to say, what to place and when it is done.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub id: TaskId,
    pub instruction: String,
    pub scene: SceneTemplate,
    pub predicate: SuccessPredicate,
}

fn object(id: &str, kind: ShapeKind, x: [f64; 2], y: [f64; 2], yaw: [f64; 2]) -> ObjectTemplate {
    ObjectTemplate { id: id.to_string(), kind, placement: Placement { x, y, yaw } }
}

impl TaskSpec {
    pub fn builtin(id: TaskId) -> Self {
        const XY: [f64; 2] = [-0.12, 0.12];
        const CUBE_YAW: [f64; 2] = [-FRAC_PI_4, FRAC_PI_4];
        let lift = |o: &str| SuccessPredicate::Lift { object: o.into() };
        let (objects, goal, predicate) = match id {
            TaskId::PickCube => (vec![object("cube", ShapeKind::Cube, XY, XY, CUBE_YAW)], None, lift("cube")),
            TaskId::PickSphere => {
                (vec![object("sphere", ShapeKind::Sphere, XY, XY, [0.0, 0.0])], None, lift("sphere"))
            }
            TaskId::PickCharger => (
                vec![object("charger", ShapeKind::Charger, XY, XY, [-FRAC_PI_2, FRAC_PI_2])],
                None,
                lift("charger"),
            ),
            TaskId::PushCube => (
                vec![object("cube", ShapeKind::Cube, [-0.1, 0.05], [-0.1, 0.1], CUBE_YAW)],
                Some(GoalTemplate { heading: [-FRAC_PI_6, FRAC_PI_6], distance: [0.08, 0.15] }),
                SuccessPredicate::Push { object: "cube".into() },
            ),
            TaskId::StackCube => (
                vec![
                    object("cube_a", ShapeKind::Cube, XY, XY, CUBE_YAW),
                    object("cube_b", ShapeKind::Cube, XY, XY, CUBE_YAW),
                ],
                None,
                SuccessPredicate::Stack { top: "cube_a".into(), base: "cube_b".into() },
            ),
            TaskId::PlaceSphere => (
                vec![
                    object("sphere", ShapeKind::Sphere, XY, XY, [0.0, 0.0]),
                    object("cube", ShapeKind::Cube, XY, XY, CUBE_YAW),
                ],
                None,
                SuccessPredicate::Stack { top: "sphere".into(), base: "cube".into() },
            ),
        };
        TaskSpec {
            id,
            instruction: id.default_instruction().to_string(),
            scene: SceneTemplate { objects, min_separation: 0.08, goal },
            predicate,
        }
    }

    /// The object the end effector manipulates first.
    pub fn primary_object(&self) -> &ObjectTemplate {
        &self.scene.objects[0]
    }

    /// The support object of stacking tasks.
    pub fn base_object(&self) -> Option<&ObjectTemplate> {
        self.scene.objects.get(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip_through_strings() {
        for t in TaskId::ALL {
            assert_eq!(t.as_str().parse::<TaskId>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{t}\""));
        }
        assert!("pick_banana".parse::<TaskId>().is_err());
    }

    #[test]
    fn stage_names_are_unique() {
        for t in TaskId::ALL {
            let names = t.stage_names();
            let mut sorted = names.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), names.len(), "{t}");
            assert!(names.len() >= 2);
        }
    }

    #[test]
    fn stacking_tasks_have_a_base() {
        assert_eq!(TaskSpec::builtin(TaskId::StackCube).base_object().unwrap().id, "cube_b");
        assert_eq!(TaskSpec::builtin(TaskId::PlaceSphere).base_object().unwrap().id, "cube");
        assert!(TaskSpec::builtin(TaskId::PickCube).base_object().is_none());
    }
}
