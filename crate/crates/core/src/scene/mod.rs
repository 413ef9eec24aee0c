//! Deterministic multi-camera tabletop world: scripted tasks, randomized
//! placements, instance-id/depth rendering and kinematic gripper stepping.

mod camera;
mod motion;
mod object;
mod render;
mod sample;
mod task;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use camera::{look_at, CameraModel, CameraMount, CameraRig, RigCamera};
pub use motion::{apply_motion, step_motion, MotionStep, GRASP_RADIUS, MAX_TRANSLATION};
pub use object::{Prismatic, SceneObject, Shape};
pub use render::{render_view, render_views, View, ViewSet};
pub use sample::{sample_scene, MAX_PLACEMENT_ATTEMPTS};
pub use task::{Group, Layout, ObjectSpec, PlanSlot, Predicate, Stage, TaskScript, TaskSuite};

use crate::math::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("task {task}: {msg}")]
    InvalidTask { task: String, msg: String },
    #[error("suite: {0}")]
    Suite(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("task {task} seed {seed}: could not place '{role}' after {attempts} attempts")]
    UnsatisfiableLayout { task: String, seed: u64, role: String, attempts: usize },
    #[error("invalid motion: {0}")]
    InvalidMotion(String),
    #[error("scene has no object for role '{0}'")]
    MissingRole(String),
    #[error("scene has no object with id {0}")]
    MissingObject(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub position: Vec3,
    pub open: bool,
    pub held: Option<u32>,
}

impl GripperState {
    pub fn at(position: Vec3) -> Self {
        GripperState { position, open: true, held: None }
    }

    pub fn is_consistent(&self) -> bool {
        self.held.is_none() || !self.open
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub task: String,
    pub variation: u32,
    pub objects: Vec<SceneObject>,
    /// Task role name to instance id.
    pub roles: BTreeMap<String, u32>,
    /// Yaw of role objects at sampling time.
    pub reference_yaw: BTreeMap<String, f64>,
}

impl Scene {
    pub fn empty(task: &str, variation: u32) -> Self {
        Scene {
            task: task.to_string(),
            variation,
            objects: Vec::new(),
            roles: BTreeMap::new(),
            reference_yaw: BTreeMap::new(),
        }
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: u32) -> Option<&mut SceneObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn role_id(&self, role: &str) -> Result<u32, SceneError> {
        self.roles.get(role).copied().ok_or_else(|| SceneError::MissingRole(role.to_string()))
    }

    pub fn role_object(&self, role: &str) -> Result<&SceneObject, SceneError> {
        let id = self.role_id(role)?;
        self.object(id).ok_or(SceneError::MissingObject(id))
    }

    /// `(id, display name)` for every object with a displayable name.
    pub fn inventory(&self) -> Vec<(u32, String)> {
        self.objects
            .iter()
            .filter_map(|o| crate::labels::display_name(o).ok().map(|n| (o.id, n)))
            .collect()
    }

    pub fn display_name_of_role(&self, role: &str) -> Result<String, SceneError> {
        let o = self.role_object(role)?;
        crate::labels::display_name(o).map_err(|e| SceneError::InvalidTask {
            task: self.task.clone(),
            msg: e.to_string(),
        })
    }

    /// Task instruction with `{role}` placeholders filled in.
    pub fn instruction(&self, task: &TaskScript) -> Result<String, SceneError> {
        let mut text = task.instruction.clone();
        for role in self.roles.keys() {
            let key = format!("{{{role}}}");
            if text.contains(&key) {
                text = text.replace(&key, &self.display_name_of_role(role)?);
            }
        }
        Ok(text)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        for (i, o) in self.objects.iter().enumerate() {
            o.validate().map_err(SceneError::InvalidMotion)?;
            if self.objects[..i].iter().any(|p| p.id == o.id) {
                return Err(SceneError::InvalidMotion(format!("duplicate id {}", o.id)));
            }
        }
        Ok(())
    }
}

/// Evaluates the task's success predicate on the current state.
pub fn check_success(scene: &Scene, gripper: &GripperState, task: &TaskScript) -> Result<bool, SceneError> {
    eval_predicate(&task.success, scene, gripper)
}

/// Largest bottom-to-support gap still counted as resting on the support.
const REST_TOLERANCE: f64 = 0.005;

pub fn eval_predicate(p: &Predicate, scene: &Scene, gripper: &GripperState) -> Result<bool, SceneError> {
    let held = |id: u32| gripper.held == Some(id);
    Ok(match p {
        Predicate::ObjectWithin { object, location, tol } => {
            let o = scene.role_object(object)?;
            let l = scene.role_object(location)?;
            !held(o.id)
                && o.position.horizontal_distance(l.position) <= *tol
                && (o.bottom_z() - l.top_z()).abs() <= REST_TOLERANCE
        }
        Predicate::JointAtLeast { object, threshold } => {
            let o = scene.role_object(object)?;
            let j = o.prismatic().ok_or_else(|| SceneError::InvalidMotion(format!("role '{object}' is not articulated")))?;
            j.open_fraction >= *threshold
        }
        Predicate::JointAtMost { object, threshold } => {
            let o = scene.role_object(object)?;
            let j = o.prismatic().ok_or_else(|| SceneError::InvalidMotion(format!("role '{object}' is not articulated")))?;
            j.open_fraction <= *threshold
        }
        Predicate::YawTurned { object, delta, tol } => {
            let o = scene.role_object(object)?;
            let reference = *scene.reference_yaw.get(object).ok_or_else(|| SceneError::MissingRole(object.clone()))?;
            !held(o.id) && angle_diff(o.yaw, reference + delta).abs() <= *tol
        }
        Predicate::All { all } => {
            for q in all {
                if !eval_predicate(q, scene, gripper)? {
                    return Ok(false);
                }
            }
            true
        }
    })
}

/// Signed difference `a - b` wrapped to (-pi, pi].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut d = (a - b) % two_pi;
    if d <= -std::f64::consts::PI {
        d += two_pi;
    } else if d > std::f64::consts::PI {
        d -= two_pi;
    }
    d
}
