use serde::{Deserialize, Serialize};

use super::{GripperState, Scene, SceneError};
use crate::math::Vec3;

/// Longest gripper translation per motion step, meters.
pub const MAX_TRANSLATION: f64 = 0.05;
/// Closing grasps the nearest graspable object within this distance.
pub const GRASP_RADIUS: f64 = 0.03;
/// Inflation of slider boxes when testing gripper contact.
const CONTACT_MARGIN: f64 = 0.01;
/// A released object may sink this far into a support and still land on it.
const SUPPORT_SLACK: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionStep {
    Translate { delta: Vec3 },
    CloseGripper,
    OpenGripper,
    SlideJoint { object: u32, delta: f64 },
    /// Turns the held object (and gripper) about the vertical axis through the gripper.
    Rotate { yaw: f64 },
}

/// Pure form of [`apply_motion`].
pub fn step_motion(
    scene: &Scene,
    gripper: &GripperState,
    step: &MotionStep,
) -> Result<(Scene, GripperState), SceneError> {
    let mut s = scene.clone();
    let mut g = gripper.clone();
    apply_motion(&mut s, &mut g, step)?;
    Ok((s, g))
}

pub fn apply_motion(scene: &mut Scene, gripper: &mut GripperState, step: &MotionStep) -> Result<(), SceneError> {
    match step {
        MotionStep::Translate { delta } => {
            let mut d = *delta;
            let n = d.norm();
            if n > MAX_TRANSLATION {
                d = d * (MAX_TRANSLATION / n);
            }
            let from = gripper.position;
            let to = from + d;
            push_sliders(scene, gripper, from, to, d);
            gripper.position = to;
            if let Some(id) = gripper.held {
                let o = scene.object_mut(id).ok_or(SceneError::MissingObject(id))?;
                o.position += d;
            }
        }
        MotionStep::CloseGripper => {
            if gripper.held.is_none() {
                gripper.held = scene
                    .objects
                    .iter()
                    .filter(|o| o.graspable)
                    .map(|o| (o.distance_to(gripper.position), o.id))
                    .filter(|(d, _)| *d <= GRASP_RADIUS)
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map(|(_, id)| id);
            }
            gripper.open = false;
        }
        MotionStep::OpenGripper => {
            if let Some(id) = gripper.held.take() {
                settle(scene, id)?;
            }
            gripper.open = true;
        }
        MotionStep::SlideJoint { object, delta } => {
            let o = scene.object_mut(*object).ok_or(SceneError::MissingObject(*object))?;
            let j = o
                .prismatic_mut()
                .ok_or_else(|| SceneError::InvalidMotion(format!("object {object} is not articulated")))?;
            j.open_fraction = (j.open_fraction + delta).clamp(0.0, 1.0);
        }
        MotionStep::Rotate { yaw } => {
            if let Some(id) = gripper.held {
                let pivot = gripper.position;
                let o = scene.object_mut(id).ok_or(SceneError::MissingObject(id))?;
                o.position = pivot + (o.position - pivot).rotate_z(*yaw);
                o.yaw += yaw;
            }
        }
    }
    Ok(())
}

/// A gripper sweeping through a slider can only push it inward.
fn push_sliders(scene: &mut Scene, gripper: &GripperState, from: Vec3, to: Vec3, delta: Vec3) {
    for o in scene.objects.iter_mut() {
        if gripper.held == Some(o.id) {
            continue;
        }
        let (a, b) = (o.to_local(from), o.to_local(to));
        let Some(j) = o.prismatic() else { continue };
        if !j.slider().segment_hits(a, b, CONTACT_MARGIN) {
            continue;
        }
        let axis_world = Vec3::from_array(j.axis).rotate_z(o.yaw);
        let along = delta.dot(axis_world).min(0.0);
        if along < 0.0 {
            let travel = j.travel;
            let j = o.prismatic_mut().expect("checked above");
            j.open_fraction = (j.open_fraction + along / travel).clamp(0.0, 1.0);
        }
    }
}

/// Drops a released object straight down onto the highest support below it.
fn settle(scene: &mut Scene, id: u32) -> Result<(), SceneError> {
    let obj = scene.object(id).ok_or(SceneError::MissingObject(id))?;
    let bottom = obj.bottom_z();
    let center = obj.position;
    let support = scene
        .objects
        .iter()
        .filter(|o| o.id != id && o.footprint_contains(center) && o.top_z() <= bottom + SUPPORT_SLACK)
        .map(|o| o.top_z())
        .fold(0.0, f64::max);
    let obj = scene.object_mut(id).expect("present");
    let lift = obj.position.z - obj.bottom_z();
    obj.position.z = support + lift;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Rgb;
    use crate::scene::{Prismatic, SceneObject, Shape};

    fn block(id: u32, p: Vec3) -> SceneObject {
        SceneObject {
            id,
            raw_name: "block".into(),
            color: Rgb([255, 0, 0]),
            color_varies: true,
            shape: Shape::Box { half_extents: [0.02, 0.02, 0.02] },
            position: p,
            yaw: 0.0,
            graspable: true,
            is_location: false,
        }
    }

    fn scene(objects: Vec<SceneObject>) -> Scene {
        Scene { objects, ..Scene::empty("t", 0) }
    }

    #[test]
    fn open_with_nothing_held() {
        let s = scene(vec![block(1, Vec3::new(0.0, 0.0, 0.02))]);
        let mut g = GripperState::at(Vec3::new(0.0, 0.0, 0.3));
        g.open = false;
        let (s2, g2) = step_motion(&s, &g, &MotionStep::OpenGripper).unwrap();
        assert_eq!(s2, s);
        assert_eq!(g2, GripperState { open: true, ..g });
    }

    #[test]
    fn close_grasps_block_two_cm_above() {
        let s = scene(vec![block(4, Vec3::new(0.0, 0.0, 0.02))]);
        let g = GripperState::at(Vec3::new(0.0, 0.0, 0.06));
        let (_, g2) = step_motion(&s, &g, &MotionStep::CloseGripper).unwrap();
        assert_eq!(g2.held, Some(4));
        assert!(!g2.open);
    }

    #[test]
    fn close_out_of_reach_grasps_nothing() {
        let s = scene(vec![block(4, Vec3::new(0.0, 0.0, 0.02))]);
        let g = GripperState::at(Vec3::new(0.0, 0.0, 0.1));
        let (_, g2) = step_motion(&s, &g, &MotionStep::CloseGripper).unwrap();
        assert_eq!(g2.held, None);
    }

    #[test]
    fn four_steps_cover_twenty_cm() {
        let s = scene(vec![]);
        let mut g = GripperState::at(Vec3::ZERO);
        let goal = Vec3::new(0.2, 0.0, 0.0);
        let mut s2 = s.clone();
        for _ in 0..4 {
            let delta = goal - g.position;
            apply_motion(&mut s2, &mut g, &MotionStep::Translate { delta }).unwrap();
        }
        assert!(g.position.distance(goal) < 1e-12);
    }

    #[test]
    fn held_object_moves_rigidly() {
        let mut s = scene(vec![block(1, Vec3::new(0.0, 0.0, 0.02))]);
        let mut g = GripperState::at(Vec3::new(0.005, 0.0, 0.03));
        apply_motion(&mut s, &mut g, &MotionStep::CloseGripper).unwrap();
        let offset = s.objects[0].position - g.position;
        for d in [Vec3::new(0.03, 0.0, 0.04), Vec3::new(-0.1, 0.2, 0.0), Vec3::new(0.0, 0.0, -0.01)] {
            apply_motion(&mut s, &mut g, &MotionStep::Translate { delta: d }).unwrap();
            let now = s.objects[0].position - g.position;
            assert!(now.distance(offset) < 1e-12);
        }
    }

    #[test]
    fn release_settles_onto_support() {
        let base = SceneObject { shape: Shape::Box { half_extents: [0.03, 0.03, 0.03] }, ..block(1, Vec3::new(0.0, 0.0, 0.03)) };
        let mut s = scene(vec![base, block(2, Vec3::new(0.2, 0.0, 0.02))]);
        let mut g = GripperState::at(Vec3::new(0.2, 0.0, 0.02));
        apply_motion(&mut s, &mut g, &MotionStep::CloseGripper).unwrap();
        apply_motion(&mut s, &mut g, &MotionStep::Translate { delta: Vec3::new(0.0, 0.0, 0.05) }).unwrap();
        for _ in 0..4 {
            apply_motion(&mut s, &mut g, &MotionStep::Translate { delta: Vec3::new(-0.05, 0.0, 0.0) }).unwrap();
        }
        apply_motion(&mut s, &mut g, &MotionStep::OpenGripper).unwrap();
        let top = s.objects[1].clone();
        assert!((top.bottom_z() - 0.06).abs() < 1e-12);
    }

    #[test]
    fn slide_joint_clamps_and_rejects_rigid() {
        let joint = Prismatic {
            body_half_extents: [0.05, 0.05, 0.05],
            slider_half_extents: [0.04, 0.04, 0.03],
            slider_offset: [0.0, 0.0, 0.0],
            axis: [-1.0, 0.0, 0.0],
            travel: 0.1,
            open_fraction: 0.5,
        };
        let drawer = SceneObject { shape: Shape::Prismatic(joint), graspable: false, ..block(1, Vec3::new(0.0, 0.0, 0.05)) };
        let s = scene(vec![drawer, block(2, Vec3::new(0.3, 0.0, 0.02))]);
        let g = GripperState::at(Vec3::ZERO);
        let (s2, _) = step_motion(&s, &g, &MotionStep::SlideJoint { object: 1, delta: 0.9 }).unwrap();
        assert_eq!(s2.objects[0].prismatic().unwrap().open_fraction, 1.0);
        assert!(matches!(
            step_motion(&s, &g, &MotionStep::SlideJoint { object: 2, delta: 0.1 }),
            Err(SceneError::InvalidMotion(_))
        ));
    }

    #[test]
    fn pushing_closes_but_never_pulls() {
        let joint = Prismatic {
            body_half_extents: [0.05, 0.05, 0.05],
            slider_half_extents: [0.04, 0.04, 0.03],
            slider_offset: [0.0, 0.0, 0.0],
            axis: [-1.0, 0.0, 0.0],
            travel: 0.1,
            open_fraction: 1.0,
        };
        let drawer = SceneObject { shape: Shape::Prismatic(joint), graspable: false, ..block(1, Vec3::new(0.0, 0.0, 0.05)) };
        let mut s = scene(vec![drawer]);
        let mut g = GripperState::at(Vec3::new(-0.12, 0.0, 0.05));
        apply_motion(&mut s, &mut g, &MotionStep::Translate { delta: Vec3::new(0.03, 0.0, 0.0) }).unwrap();
        let f = s.objects[0].prismatic().unwrap().open_fraction;
        assert!((f - 0.7).abs() < 1e-12);
        apply_motion(&mut s, &mut g, &MotionStep::Translate { delta: Vec3::new(-0.03, 0.0, 0.0) }).unwrap();
        assert_eq!(s.objects[0].prismatic().unwrap().open_fraction, f);
    }
}
