use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{SceneError, Shape};
use crate::labels::Rgb;
use crate::plan::{Action, ActionSchema};

const DEFAULT_SUITE: &str = include_str!("../../data/suite.json");

/// Generalization level a task variation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    L1,
    L2,
    L3,
    L4,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Group::L1 => "L1",
            Group::L2 => "L2",
            Group::L3 => "L3",
            Group::L4 => "L4",
        };
        f.write_str(s)
    }
}

/// One step of a task's plan, naming scene roles rather than concrete objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSlot {
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

/// Success conditions, decidable from the scene and gripper state alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    /// Released object rests on the location within `tol` meters horizontally.
    ObjectWithin { object: String, location: String, tol: f64 },
    JointAtLeast { object: String, threshold: f64 },
    JointAtMost { object: String, threshold: f64 },
    /// Released object's yaw differs from its sampled yaw by `delta` (± `tol`).
    YawTurned { object: String, delta: f64, tol: f64 },
    All { all: Vec<Predicate> },
}

impl Predicate {
    pub fn roles(&self, out: &mut BTreeSet<String>) {
        match self {
            Predicate::ObjectWithin { object, location, .. } => {
                out.insert(object.clone());
                out.insert(location.clone());
            }
            Predicate::JointAtLeast { object, .. }
            | Predicate::JointAtMost { object, .. }
            | Predicate::YawTurned { object, .. } => {
                out.insert(object.clone());
            }
            Predicate::All { all } => all.iter().for_each(|p| p.roles(out)),
        }
    }

    /// Top-level conjuncts.
    pub fn conjuncts(&self) -> Vec<&Predicate> {
        match self {
            Predicate::All { all } => all.iter().collect(),
            p => vec![p],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub role: String,
    pub raw_name: String,
    pub shape: Shape,
    pub color: Rgb,
    #[serde(default)]
    pub color_varies: bool,
    #[serde(default)]
    pub graspable: bool,
    #[serde(default)]
    pub is_location: bool,
    /// Yaw sampling range; full circle when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub x: [f64; 2],
    pub y: [f64; 2],
    /// Inclusive distractor count range.
    pub distractors: [u32; 2],
    pub gripper_home: [f64; 3],
    /// Extra horizontal clearance between bounding circles.
    pub clearance: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Layout {
            x: [-0.14, 0.14],
            y: [-0.18, 0.18],
            distractors: [1, 3],
            gripper_home: [-0.05, 0.0, 0.2],
            clearance: 0.01,
        }
    }
}

/// A task variation, annotated once: plan slots, success predicate and the
/// objects that make up its scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScript {
    pub name: String,
    pub variation: u32,
    pub group: Group,
    /// Template with `{role}` placeholders filled by display names.
    pub instruction: String,
    pub plan: Vec<PlanSlot>,
    pub success: Predicate,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

/// A unit of the plan the oracle drives to completion before moving on.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Press { action: Action, object: String, goal: Predicate },
    PickPlace { object: String, location: String, goal: Predicate },
    Rotate { object: String, goal: Predicate },
}

impl Stage {
    pub fn goal(&self) -> &Predicate {
        match self {
            Stage::Press { goal, .. } | Stage::PickPlace { goal, .. } | Stage::Rotate { goal, .. } => goal,
        }
    }
}

impl TaskScript {
    /// `name/vN`, the key used in manifests and reports.
    pub fn key(&self) -> String {
        format!("{}/v{}", self.name, self.variation)
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    pub fn object_spec(&self, role: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.role == role)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let err = |msg: String| SceneError::InvalidTask { task: self.key(), msg };
        if self.plan.is_empty() {
            return Err(err("plan sequence is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for o in &self.objects {
            if !seen.insert(o.role.clone()) {
                return Err(err(format!("duplicate role '{}'", o.role)));
            }
            o.shape.validate().map_err(|e| err(format!("role '{}': {e}", o.role)))?;
            if crate::labels::refine_name(&o.raw_name).is_none() {
                return Err(err(format!("role '{}' has no display name", o.role)));
            }
        }
        let schema = ActionSchema::default();
        for slot in &self.plan {
            let refs = [slot.object.as_ref(), slot.location.as_ref()];
            for role in refs.into_iter().flatten() {
                if !seen.contains(role) {
                    return Err(err(format!("plan references unknown role '{role}'")));
                }
            }
            schema
                .check_slots(slot.action, slot.object.is_some(), slot.location.is_some())
                .map_err(|e| err(e.to_string()))?;
        }
        let mut pred_roles = BTreeSet::new();
        self.success.roles(&mut pred_roles);
        if let Some(missing) = pred_roles.iter().find(|r| !seen.contains(*r)) {
            return Err(err(format!("success predicate references unknown role '{missing}'")));
        }
        self.stages()?;
        Ok(())
    }

    /// Splits the plan into oracle stages, pairing each with its conjunct of
    /// the success predicate.
    pub fn stages(&self) -> Result<Vec<Stage>, SceneError> {
        let err = |msg: &str| SceneError::InvalidTask { task: self.key(), msg: msg.to_string() };
        let goals = self.success.conjuncts();
        let mut stages = Vec::new();
        let mut i = 0;
        while i < self.plan.len() {
            let goal = goals
                .get(stages.len())
                .map(|g| (*g).clone())
                .ok_or_else(|| err("fewer success conjuncts than plan stages"))?;
            let slot = &self.plan[i];
            match slot.action {
                Action::PushDown | Action::PushForward => {
                    stages.push(Stage::Press {
                        action: slot.action,
                        object: slot.object.clone().ok_or_else(|| err("push without object"))?,
                        goal,
                    });
                    i += 1;
                }
                Action::Grasp => {
                    let object = slot.object.clone().ok_or_else(|| err("grasp without object"))?;
                    let next = self.plan.get(i + 1).ok_or_else(|| err("grasp must be followed by move or rotate"))?;
                    let release = self.plan.get(i + 2).map(|s| s.action);
                    if release != Some(Action::Release) {
                        return Err(err("grasp stage must end with release"));
                    }
                    match next.action {
                        Action::MoveGraspedObject => stages.push(Stage::PickPlace {
                            object,
                            location: next.location.clone().ok_or_else(|| err("move without location"))?,
                            goal,
                        }),
                        Action::RotateGraspedObject => stages.push(Stage::Rotate { object, goal }),
                        _ => return Err(err("grasp must be followed by move or rotate")),
                    }
                    i += 3;
                }
                _ => return Err(err("plan stage must start with grasp or a push")),
            }
        }
        if stages.len() != goals.len() {
            return Err(err("success conjunct count differs from plan stage count"));
        }
        Ok(stages)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSuite {
    pub tasks: Vec<TaskScript>,
}

impl TaskSuite {
    /// The suite shipped with the crate.
    pub fn builtin() -> TaskSuite {
        TaskSuite::from_json(DEFAULT_SUITE).expect("shipped suite is valid")
    }

    pub fn from_json(s: &str) -> Result<TaskSuite, SceneError> {
        let suite: TaskSuite = serde_json::from_str(s).map_err(|e| SceneError::Suite(e.to_string()))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: &std::path::Path) -> Result<TaskSuite, SceneError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SceneError::Suite(format!("{}: {e}", path.display())))?;
        TaskSuite::from_json(&text)
    }

    /// `builtin` or a path to a suite file.
    pub fn resolve(spec: &str) -> Result<TaskSuite, SceneError> {
        if spec == "builtin" || spec == "default" {
            Ok(TaskSuite::builtin())
        } else {
            TaskSuite::load(std::path::Path::new(spec))
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let mut keys = BTreeSet::new();
        for t in &self.tasks {
            t.validate()?;
            if !keys.insert(t.key()) {
                return Err(SceneError::Suite(format!("duplicate task variation {}", t.key())));
            }
        }
        Ok(())
    }

    pub fn find(&self, name: &str, variation: u32) -> Option<&TaskScript> {
        self.tasks.iter().find(|t| t.name == name && t.variation == variation)
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("suite serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn subset(&self, keep: impl Fn(&TaskScript) -> bool) -> TaskSuite {
        TaskSuite { tasks: self.tasks.iter().filter(|t| keep(t)).cloned().collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_suite_validates() {
        let suite = TaskSuite::builtin();
        assert!(suite.tasks.len() >= 5);
        let groups: BTreeSet<Group> = suite.tasks.iter().map(|t| t.group).collect();
        assert_eq!(groups.len(), 4);
        assert_eq!(suite.hash(), TaskSuite::builtin().hash());
    }

    #[test]
    fn stages_follow_plan() {
        let suite = TaskSuite::builtin();
        for t in &suite.tasks {
            let stages = t.stages().unwrap();
            assert_eq!(stages.len(), t.success.conjuncts().len());
        }
    }

    #[test]
    fn empty_plan_rejected() {
        let mut t = TaskSuite::builtin().tasks[0].clone();
        t.plan.clear();
        assert!(matches!(t.validate(), Err(SceneError::InvalidTask { .. })));
    }

    #[test]
    fn unknown_role_rejected() {
        let mut t = TaskSuite::builtin().tasks[0].clone();
        t.plan[0].object = Some("ghost".into());
        assert!(t.validate().is_err());
    }
}
