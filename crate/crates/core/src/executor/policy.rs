use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::geometry::{LabeledPointCloud, PointLabel};
use crate::math::Vec3;
use crate::plan::{Action, GroundedPlan};
use crate::scene::{GripperState, MotionStep, MAX_TRANSLATION};

/// Most motion steps a single plan decomposes into.
pub const MAX_SUBPLAN_STEPS: usize = 5;
/// Length of a push stroke through the target centroid.
pub const PUSH_STROKE: f64 = 0.06;
/// Gap left between a carried object and the surface it is brought over.
const PLACE_CLEARANCE: f64 = 0.005;
/// Carry height assumed when nothing is seen in the gripper.
const DEFAULT_CARRY_HEIGHT: f64 = 0.05;
/// Counts as having reached a target point.
pub const ARRIVE_TOL: f64 = 0.01;
/// Lateral slack around a push stroke within which the stroke is resumed.
const STROKE_CORRIDOR: f64 = 0.015;
/// Margin around the target's bounding box for reclaiming robot points.
const BOX_MARGIN: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("no {0} points in the cloud")]
    NoTargetPoints(&'static str),
}

/// Equal legs of at most `MAX_TRANSLATION` from `from` to `to`.
pub fn translate_legs(from: Vec3, to: Vec3) -> Vec<MotionStep> {
    let d = to - from;
    if d.norm() < 1e-9 {
        return Vec::new();
    }
    let n = (d.norm() / MAX_TRANSLATION - 1e-9).ceil().max(1.0) as usize;
    (0..n).map(|_| MotionStep::Translate { delta: d * (1.0 / n as f64) }).collect()
}

fn required(cloud: &LabeledPointCloud, label: PointLabel) -> Result<Vec3, PolicyError> {
    cloud.centroid(label).ok_or(PolicyError::NoTargetPoints(label.as_str()))
}

/// Target-object centroid. With an empty gripper, robot points inside the
/// target's bounding box (plus a margin) are counted as target too: they were
/// relabeled only because the gripper is close.
fn object_estimate(cloud: &LabeledPointCloud, gripper: &GripperState) -> Result<Vec3, PolicyError> {
    let target: Vec<Vec3> = cloud.points_with(PointLabel::TargetObject).collect();
    if target.is_empty() {
        return Err(PolicyError::NoTargetPoints(PointLabel::TargetObject.as_str()));
    }
    if !gripper.open || gripper.held.is_some() {
        return required(cloud, PointLabel::TargetObject);
    }
    let lo = target.iter().fold(Vec3::new(f64::MAX, f64::MAX, f64::MAX), |a, p| {
        Vec3::new(a.x.min(p.x), a.y.min(p.y), a.z.min(p.z))
    });
    let hi = target.iter().fold(Vec3::new(f64::MIN, f64::MIN, f64::MIN), |a, p| {
        Vec3::new(a.x.max(p.x), a.y.max(p.y), a.z.max(p.z))
    });
    let m = BOX_MARGIN;
    let inside = |p: &Vec3| {
        (lo.x - m..=hi.x + m).contains(&p.x) && (lo.y - m..=hi.y + m).contains(&p.y) && (lo.z - m..=hi.z + m).contains(&p.z)
    };
    let hidden = cloud.points_with(PointLabel::Robot).filter(inside);
    let all: Vec<Vec3> = target.iter().copied().chain(hidden).collect();
    let n = all.len() as f64;
    Ok(all.into_iter().fold(Vec3::ZERO, |a, p| a + p) * (1.0 / n))
}

/// Deterministic stand-in for a learned 3D motion policy.
pub fn motion_policy(
    plan: &GroundedPlan,
    cloud: &LabeledPointCloud,
    gripper: &GripperState,
) -> Result<Vec<MotionStep>, PolicyError> {
    let here = gripper.position;
    let mut steps = match plan.action {
        Action::Grasp => {
            let c = object_estimate(cloud, gripper)?;
            let mut s = if here.distance(c) <= ARRIVE_TOL { Vec::new() } else { translate_legs(here, c) };
            s.push(MotionStep::CloseGripper);
            s
        }
        Action::MoveGraspedObject => {
            let c = required(cloud, PointLabel::TargetLocation)?;
            let top = cloud.top(PointLabel::TargetLocation).expect("centroid implies points");
            // Hang the lowest carried point just above the location's top.
            let below = cloud
                .points_with(PointLabel::Robot)
                .map(|p| p.z)
                .reduce(f64::min)
                .map_or(DEFAULT_CARRY_HEIGHT, |z| here.z - z);
            translate_legs(here, Vec3::new(c.x, c.y, top + below.max(0.0) + PLACE_CLEARANCE))
        }
        Action::RotateGraspedObject => vec![MotionStep::Rotate { yaw: FRAC_PI_2 }],
        Action::PushDown | Action::PushForward => {
            let c = object_estimate(cloud, gripper)?;
            let dir = if plan.action == Action::PushDown { Vec3::new(0.0, 0.0, -1.0) } else { Vec3::new(1.0, 0.0, 0.0) };
            let half = dir * (PUSH_STROKE / 2.0);
            let (start, end) = (c - half, c + half);
            // Resume a stroke in progress rather than backing out to its start.
            let along = (here - start).dot(dir);
            let lateral = (here - start - dir * along).norm();
            if lateral <= STROKE_CORRIDOR && (-ARRIVE_TOL..PUSH_STROKE).contains(&along) {
                translate_legs(here, end)
            } else {
                let mut s = translate_legs(here, start);
                s.extend(translate_legs(start, end));
                s
            }
        }
        Action::Release => vec![MotionStep::OpenGripper],
    };
    steps.truncate(MAX_SUBPLAN_STEPS);
    Ok(steps)
}
