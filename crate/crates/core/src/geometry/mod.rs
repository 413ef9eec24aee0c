//! Masked depth to labeled world-frame point clouds: unprojection, multi-view
//! fusion, four-way categorization and DBSCAN outlier removal.

mod dbscan;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dbscan::{dbscan_filter, dbscan_labels, DbscanParams};

use crate::mask::BinaryMask;
use crate::math::Vec3;
use crate::plan::{GroundedPlan, Slot};
use crate::scene::{CameraModel, GripperState, View, ViewSet};

pub type Point3 = Vec3;

/// Fusion voxel edge, meters.
pub const VOXEL_SIZE: f64 = 0.005;
/// Points this close to the gripper belong to the robot.
pub const ROBOT_RADIUS: f64 = 0.03;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("depth is {depth_w}x{depth_h} but mask is {mask_w}x{mask_h}")]
    ResolutionMismatch { depth_w: u32, depth_h: u32, mask_w: u32, mask_h: u32 },
    #[error("camera is {cam_w}x{cam_h} but depth is {depth_w}x{depth_h}")]
    CameraMismatch { cam_w: u32, cam_h: u32, depth_w: u32, depth_h: u32 },
    #[error("{views} views but {masks} masks and {cameras} cameras")]
    ViewCount { views: usize, masks: usize, cameras: usize },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid DBSCAN parameters: {0}")]
    InvalidParams(String),
}

/// Pixel coordinates and depth of a world point, or `None` behind the camera.
pub fn project(camera: &CameraModel, p: Point3) -> Option<(f64, f64, f64)> {
    let c = camera.world_to_camera(p);
    if c.z <= 0.0 {
        return None;
    }
    Some((camera.fx * c.x / c.z + camera.cx, camera.fy * c.y / c.z + camera.cy, c.z))
}

/// World point seen at pixel `(u, v)` with depth `d`.
pub fn unproject_pixel(camera: &CameraModel, u: f64, v: f64, d: f64) -> Point3 {
    let c = Vec3::new(d * (u - camera.cx) / camera.fx, d * (v - camera.cy) / camera.fy, d);
    camera.camera_to_world(c)
}

/// Unprojects every masked pixel with positive depth, in row-major order.
pub fn unproject(
    depth: &[f32],
    width: u32,
    height: u32,
    mask: &BinaryMask,
    camera: &CameraModel,
) -> Result<Vec<Point3>, GeometryError> {
    if mask.width() != width || mask.height() != height || depth.len() != width as usize * height as usize {
        return Err(GeometryError::ResolutionMismatch {
            depth_w: width,
            depth_h: height,
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }
    if camera.width != width || camera.height != height {
        return Err(GeometryError::CameraMismatch {
            cam_w: camera.width,
            cam_h: camera.height,
            depth_w: width,
            depth_h: height,
        });
    }
    camera.validate().map_err(|e| GeometryError::InvalidCamera(e.to_string()))?;
    let mut out = Vec::new();
    for (i, (&m, &d)) in mask.data().iter().zip(depth).enumerate() {
        if m && d > 0.0 {
            let (u, v) = ((i % width as usize) as f64, (i / width as usize) as f64);
            out.push(unproject_pixel(camera, u, v, d as f64));
        }
    }
    Ok(out)
}

pub fn unproject_view(view: &View, mask: &BinaryMask, camera: &CameraModel) -> Result<Vec<Point3>, GeometryError> {
    unproject(&view.depth, view.width, view.height, mask, camera)
}

fn voxel_key(p: Point3) -> (i64, i64, i64) {
    let k = |x: f64| (x / VOXEL_SIZE).floor() as i64;
    (k(p.x), k(p.y), k(p.z))
}

fn cmp_points(a: &Point3, b: &Point3) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z))
}

/// Lexicographic (x, y, z) order.
pub fn canonical_sort(points: &mut [Point3]) {
    points.sort_by(cmp_points);
}

fn voxel_groups<'a>(points: impl IntoIterator<Item = &'a Point3>) -> BTreeMap<(i64, i64, i64), Vec<Point3>> {
    let mut groups: BTreeMap<_, Vec<Point3>> = BTreeMap::new();
    for &p in points {
        groups.entry(voxel_key(p)).or_default().push(p);
    }
    groups
}

fn centroid_sorted(mut pts: Vec<Point3>) -> Point3 {
    canonical_sort(&mut pts);
    let n = pts.len() as f64;
    pts.into_iter().fold(Vec3::ZERO, |acc, p| acc + p) * (1.0 / n)
}

/// Concatenates the views and merges points sharing a voxel into their
/// centroid. Output is canonically sorted and independent of input order.
pub fn fuse_views(views: &[Vec<Point3>]) -> Vec<Point3> {
    let mut out: Vec<Point3> = voxel_groups(views.iter().flatten()).into_values().map(centroid_sorted).collect();
    canonical_sort(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointLabel {
    TargetObject,
    TargetLocation,
    Robot,
    Obstacle,
}

impl PointLabel {
    pub const ALL: [PointLabel; 4] =
        [PointLabel::TargetObject, PointLabel::TargetLocation, PointLabel::Robot, PointLabel::Obstacle];

    pub fn as_str(self) -> &'static str {
        match self {
            PointLabel::TargetObject => "target-object",
            PointLabel::TargetLocation => "target-location",
            PointLabel::Robot => "robot",
            PointLabel::Obstacle => "obstacle",
        }
    }

    /// Lower wins when a point qualifies for several labels.
    fn rank(self) -> u8 {
        match self {
            PointLabel::Robot => 0,
            PointLabel::TargetObject => 1,
            PointLabel::TargetLocation => 2,
            PointLabel::Obstacle => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledPointCloud {
    points: Vec<Point3>,
    labels: Vec<PointLabel>,
}

impl LabeledPointCloud {
    pub fn new(points: Vec<Point3>, labels: Vec<PointLabel>) -> Result<Self, GeometryError> {
        if points.len() != labels.len() {
            return Err(GeometryError::InvalidParams(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        Ok(LabeledPointCloud { points, labels })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> &[PointLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, label: PointLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn points_with(&self, label: PointLabel) -> impl Iterator<Item = Point3> + '_ {
        self.points.iter().zip(&self.labels).filter(move |(_, &l)| l == label).map(|(&p, _)| p)
    }

    pub fn centroid(&self, label: PointLabel) -> Option<Point3> {
        let pts: Vec<Point3> = self.points_with(label).collect();
        (!pts.is_empty()).then(|| centroid_sorted(pts))
    }

    /// Highest point carrying `label`.
    pub fn top(&self, label: PointLabel) -> Option<f64> {
        self.points_with(label).map(|p| p.z).reduce(f64::max)
    }

    /// `[[x, y, z, label], ...]`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.points
                .iter()
                .zip(&self.labels)
                .map(|(p, l)| serde_json::json!([p.x, p.y, p.z, l.as_str()]))
                .collect(),
        )
    }

    /// Point counts per label.
    pub fn summary(&self) -> BTreeMap<String, usize> {
        PointLabel::ALL.iter().map(|&l| (l.as_str().to_string(), self.count(l))).collect()
    }
}

/// Fused clouds feeding [`categorize`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CloudSources {
    pub object: Vec<Point3>,
    pub location: Vec<Point3>,
    /// Every foreground pixel of every view.
    pub scene: Vec<Point3>,
    /// Points of the object currently in the gripper.
    pub held: Vec<Point3>,
}

/// Labels the union of all source clouds, one point per voxel. A voxel takes
/// the position of the first source that has it (scene, object, location,
/// held) and the best label it qualifies for; proximity to the gripper and
/// membership of the held cloud make a point robot.
pub fn categorize(plan: &GroundedPlan, sources: &CloudSources, gripper: &GripperState) -> LabeledPointCloud {
    let mut cells: BTreeMap<(i64, i64, i64), (Point3, PointLabel)> = BTreeMap::new();
    let mut add = |pts: &[Point3], label: PointLabel| {
        for &p in pts {
            cells
                .entry(voxel_key(p))
                .and_modify(|(_, l)| {
                    if label.rank() < l.rank() {
                        *l = label;
                    }
                })
                .or_insert((p, label));
        }
    };
    add(&sources.scene, PointLabel::Obstacle);
    if plan.reference(Slot::Object).is_some() {
        add(&sources.object, PointLabel::TargetObject);
    }
    if plan.reference(Slot::Location).is_some() {
        add(&sources.location, PointLabel::TargetLocation);
    }
    add(&sources.held, PointLabel::Robot);

    let mut out: Vec<(Point3, PointLabel)> = cells
        .into_values()
        .map(|(p, l)| if p.distance(gripper.position) <= ROBOT_RADIUS { (p, PointLabel::Robot) } else { (p, l) })
        .collect();
    out.sort_by(|a, b| cmp_points(&a.0, &b.0));
    let (points, labels) = out.into_iter().unzip();
    LabeledPointCloud { points, labels }
}

/// Unprojects one mask per view and fuses the results, optionally dropping
/// DBSCAN outliers.
pub fn reference_cloud(
    masks: &[BinaryMask],
    views: &ViewSet,
    cameras: &[CameraModel],
    filter: Option<&DbscanParams>,
) -> Result<Vec<Point3>, GeometryError> {
    if masks.len() != views.len() || cameras.len() != views.len() {
        return Err(GeometryError::ViewCount { views: views.len(), masks: masks.len(), cameras: cameras.len() });
    }
    let per_view = views
        .views
        .par_iter()
        .zip(masks)
        .zip(cameras)
        .map(|((v, m), c)| unproject_view(v, m, c))
        .collect::<Result<Vec<_>, _>>()?;
    let fused = fuse_views(&per_view);
    Ok(match filter {
        Some(p) => dbscan_filter(&fused, p)?,
        None => fused,
    })
}

/// The full grounding-to-3D pipeline for one plan.
pub fn ground_plan(
    plan: &GroundedPlan,
    views: &ViewSet,
    cameras: &[CameraModel],
    gripper: &GripperState,
    filter: Option<&DbscanParams>,
) -> Result<LabeledPointCloud, GeometryError> {
    let cloud_of = |slot: Slot| -> Result<Vec<Point3>, GeometryError> {
        match plan.reference(slot) {
            Some(r) => reference_cloud(&r.masks, views, cameras, filter),
            None => Ok(Vec::new()),
        }
    };
    let foreground: Vec<BinaryMask> = views.views.iter().map(View::foreground).collect();
    let held = match gripper.held {
        Some(id) => reference_cloud(&views.masks_of(id), views, cameras, None)?,
        None => Vec::new(),
    };
    let sources = CloudSources {
        object: cloud_of(Slot::Object)?,
        location: cloud_of(Slot::Location)?,
        scene: reference_cloud(&foreground, views, cameras, None)?,
        held,
    };
    Ok(categorize(plan, &sources, gripper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;
    use crate::plan::{Action, GroundedReference};
    use crate::scene::{look_at, render_views, sample_scene, CameraRig, TaskSuite};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Projection written directly from the pinhole equations, independent of
    /// `CameraModel::world_to_camera`.
    fn oracle_project(cam: &CameraModel, p: Vec3) -> (f64, f64, f64) {
        let r = &cam.rotation.0;
        let t = cam.translation;
        let x = r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + t.x;
        let y = r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + t.y;
        let z = r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + t.z;
        (cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy, z)
    }

    fn random_camera(rng: &mut impl Rng) -> CameraModel {
        let w = rng.gen_range(16..400);
        let h = rng.gen_range(16..400);
        let eye = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.3..1.5));
        let target = Vec3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), 0.0);
        CameraModel::with_fov(w, h, rng.gen_range(0.5..1.8)).looking_at(eye, target)
    }

    #[test]
    fn optical_axis_pixel() {
        let cam = CameraModel::with_fov(64, 48, 1.0);
        let depth = vec![2.0f32; 64 * 48];
        let mask = BinaryMask::from_fn(64, 48, |u, v| u == 32 && v == 24);
        let pts = unproject(&depth, 64, 48, &mask, &cam).unwrap();
        assert_eq!(pts, vec![Vec3::new(0.0, 0.0, 2.0)]);
    }

    #[test]
    fn empty_mask_and_mismatch() {
        let cam = CameraModel::with_fov(8, 8, 1.0);
        let depth = vec![1.0f32; 64];
        assert!(unproject(&depth, 8, 8, &BinaryMask::empty(8, 8), &cam).unwrap().is_empty());
        assert!(matches!(
            unproject(&depth, 8, 8, &BinaryMask::empty(4, 8), &cam),
            Err(GeometryError::ResolutionMismatch { .. })
        ));
    }

    #[test]
    fn zero_depth_skipped() {
        let cam = CameraModel::with_fov(4, 4, 1.0);
        let mut depth = vec![1.0f32; 16];
        depth[5] = 0.0;
        let mask = BinaryMask::from_fn(4, 4, |_, _| true);
        assert_eq!(unproject(&depth, 4, 4, &mask, &cam).unwrap().len(), 15);
    }

    #[test]
    fn roundtrip_random_pixels() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let cam = random_camera(&mut rng);
            let u = rng.gen_range(0..cam.width) as f64;
            let v = rng.gen_range(0..cam.height) as f64;
            let d = rng.gen_range(0.05..3.0);
            let p = unproject_pixel(&cam, u, v, d);
            let (pu, pv, pd) = oracle_project(&cam, p);
            assert!((pu - u).abs() < 0.5 && (pv - v).abs() < 0.5, "{u},{v} -> {pu},{pv}");
            assert!((pd - d).abs() < 1e-6);
            let (qu, qv, qd) = project(&cam, p).unwrap();
            assert!((qu - pu).abs() < 1e-9 && (qv - pv).abs() < 1e-9 && (qd - pd).abs() < 1e-12);
        }
    }

    #[test]
    fn rigid_transform_equivariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let rot = Mat3::rot_z(rng.gen_range(-3.0..3.0)).mul_mat(&Mat3::rot_x(rng.gen_range(-1.0..1.0)));
            let shift = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            // Move the camera by world transform T(x) = rot x + shift.
            let mut moved = cam.clone();
            moved.set_pose(cam.rotation.mul_mat(&rot.transpose()), rot.mul_vec(cam.center()) + shift);
            let (u, v, d) = (rng.gen_range(0..cam.width) as f64, rng.gen_range(0..cam.height) as f64, rng.gen_range(0.1..2.0));
            let a = rot.mul_vec(unproject_pixel(&cam, u, v, d)) + shift;
            let b = unproject_pixel(&moved, u, v, d);
            assert!(a.distance(b) < 1e-9);
        }
    }

    #[test]
    fn fusion_dedups_and_is_order_free() {
        let p = Vec3::new(0.1001, 0.2001, 0.3001);
        assert_eq!(fuse_views(&[vec![p], vec![p]]).len(), 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let views: Vec<Vec<Vec3>> = (0..rng.gen_range(1..5))
                .map(|_| {
                    (0..rng.gen_range(0..60))
                        .map(|_| Vec3::new(rng.gen_range(0.0..0.05), rng.gen_range(0.0..0.05), rng.gen_range(0.0..0.05)))
                        .collect()
                })
                .collect();
            let fused = fuse_views(&views);
            assert!(fused.len() <= views.iter().map(Vec::len).sum());
            let mut rev: Vec<Vec<Vec3>> = views.iter().rev().map(|v| v.iter().rev().cloned().collect()).collect();
            let half = rev.len() / 2;
            rev.rotate_left(half);
            assert_eq!(fuse_views(&rev), fused);
        }
    }

    #[test]
    fn fusion_single_view_is_sorted_identity() {
        let pts = vec![Vec3::new(0.3, 0.0, 0.0), Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.2, 0.0, 0.0)];
        let mut expected = pts.clone();
        canonical_sort(&mut expected);
        let fused = fuse_views(&[pts]);
        for (a, b) in fused.iter().zip(&expected) {
            assert!(a.distance(*b) < 1e-15);
        }
    }

    fn reference(text: &str) -> Option<GroundedReference> {
        Some(GroundedReference::new(text, vec![]))
    }

    fn far_gripper() -> GripperState {
        GripperState::at(Vec3::new(5.0, 5.0, 5.0))
    }

    #[test]
    fn object_only_plan_labels() {
        let obj = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.01, 0.0, 0.0)];
        let other = vec![Vec3::new(0.2, 0.0, 0.0)];
        let loc = vec![Vec3::new(0.4, 0.0, 0.0)];
        let scene: Vec<Vec3> = obj.iter().chain(&other).chain(&loc).cloned().collect();
        let plan = GroundedPlan::new(Action::Grasp, reference("x"), None);
        let cloud = categorize(&plan, &CloudSources { object: obj, location: loc, scene, held: vec![] }, &far_gripper());
        assert_eq!(cloud.count(PointLabel::TargetObject), 2);
        assert_eq!(cloud.count(PointLabel::Obstacle), 2);
        assert_eq!(cloud.len(), 4);
    }

    #[test]
    fn robot_precedence() {
        let g = GripperState::at(Vec3::new(0.0, 0.0, 0.01));
        let obj = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.1, 0.0, 0.0)];
        let plan = GroundedPlan::new(Action::Grasp, reference("x"), None);
        let cloud = categorize(&plan, &CloudSources { object: obj.clone(), scene: obj, ..Default::default() }, &g);
        assert_eq!(cloud.labels(), &[PointLabel::Robot, PointLabel::TargetObject]);
    }

    /// Per-point classification by the stated precedence rules.
    fn oracle_label(p: Vec3, plan: &GroundedPlan, src: &CloudSources, g: &GripperState) -> PointLabel {
        let within = |set: &[Vec3]| set.iter().any(|q| voxel_key(*q) == voxel_key(p));
        if p.distance(g.position) <= ROBOT_RADIUS || within(&src.held) {
            PointLabel::Robot
        } else if plan.object.is_some() && within(&src.object) {
            PointLabel::TargetObject
        } else if plan.location.is_some() && within(&src.location) {
            PointLabel::TargetLocation
        } else {
            PointLabel::Obstacle
        }
    }

    #[test]
    fn crafted_three_object_scene() {
        // Three 4x4x4 voxel-aligned grids, 2 cm apart per point.
        let grid = |c: Vec3| -> Vec<Vec3> {
            let mut v = Vec::new();
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        v.push(c + Vec3::new(i as f64, j as f64, k as f64) * 0.01 + Vec3::new(0.0025, 0.0025, 0.0025));
                    }
                }
            }
            v
        };
        let a = grid(Vec3::new(0.0, 0.0, 0.0));
        let b = grid(Vec3::new(0.2, 0.0, 0.0));
        let c = grid(Vec3::new(0.4, 0.0, 0.0));
        let scene: Vec<Vec3> = a.iter().chain(&b).chain(&c).cloned().collect();
        let g = GripperState { position: Vec3::new(0.0, 0.0, 0.0), open: false, held: Some(1) };
        let src = CloudSources { object: a.clone(), location: b.clone(), scene, held: vec![] };
        let plan = GroundedPlan::new(Action::Release, None, reference("b"));
        let cloud = categorize(&plan, &src, &g);
        // Hand count: points of `a` within 3 cm of the origin are robot (corner
        // offsets 0.25 cm + integer cm), the rest of `a` is obstacle since the
        // plan has no object slot; all of `b` is target location; `c` obstacle.
        let near = a.iter().filter(|p| p.norm() <= 0.03).count();
        assert_eq!(cloud.count(PointLabel::Robot), near);
        assert_eq!(cloud.count(PointLabel::TargetLocation), 64);
        assert_eq!(cloud.count(PointLabel::Obstacle), 64 - near + 64);
        assert_eq!(cloud.count(PointLabel::TargetObject), 0);
        for (p, l) in cloud.points().iter().zip(cloud.labels()) {
            assert_eq!(*l, oracle_label(*p, &plan, &src, &g));
        }
    }

    proptest! {
        #[test]
        fn categorize_partitions(
            pts in proptest::collection::vec((0.0f64..0.1, 0.0f64..0.1, 0.0f64..0.1, 0u8..4), 0..80),
            gx in 0.0f64..0.1,
        ) {
            let mut src = CloudSources::default();
            for &(x, y, z, which) in &pts {
                let p = Vec3::new(x, y, z);
                src.scene.push(p);
                match which {
                    0 => src.object.push(p),
                    1 => src.location.push(p),
                    2 => src.held.push(p),
                    _ => {}
                }
            }
            let g = GripperState::at(Vec3::new(gx, 0.05, 0.05));
            let plan = GroundedPlan::new(Action::Release, None, reference("l"));
            let plan2 = GroundedPlan::new(Action::Grasp, reference("o"), None);
            for plan in [plan, plan2] {
                let cloud = categorize(&plan, &src, &g);
                prop_assert_eq!(cloud.points().len(), cloud.labels().len());
                let total: usize = PointLabel::ALL.iter().map(|&l| cloud.count(l)).sum();
                prop_assert_eq!(total, cloud.len());
                // One point per occupied voxel.
                let voxels: std::collections::BTreeSet<_> = src.scene.iter().map(|p| voxel_key(*p)).collect();
                prop_assert_eq!(cloud.len(), voxels.len());
                for (p, l) in cloud.points().iter().zip(cloud.labels()) {
                    prop_assert_eq!(*l, oracle_label(*p, &plan, &src, &g));
                }
            }
        }
    }

    #[test]
    fn json_dump_shape() {
        let cloud = LabeledPointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0)], vec![PointLabel::Robot]).unwrap();
        assert_eq!(cloud.to_json().to_string(), r#"[[1.0,2.0,3.0,"robot"]]"#);
        assert!(LabeledPointCloud::new(vec![], vec![PointLabel::Robot]).is_err());
    }

    #[test]
    fn rendered_object_centroid_is_close() {
        let suite = TaskSuite::builtin();
        let task = suite.find("pick_and_place", 0).unwrap();
        let scene = sample_scene(task, 3).unwrap();
        let g = GripperState::at(Vec3::new(-0.05, 0.0, 0.3));
        let cams = CameraRig::default().resolve(&g);
        let views = render_views(&scene, &cams);
        let id = scene.role_id("object").unwrap();
        let plan = GroundedPlan::new(Action::Grasp, Some(GroundedReference::new("x", views.masks_of(id))), None);
        let cloud = ground_plan(&plan, &views, &cams, &g, Some(&DbscanParams::default())).unwrap();
        let c = cloud.centroid(PointLabel::TargetObject).unwrap();
        let truth = scene.object(id).unwrap().position;
        assert!(c.distance(truth) < 0.02, "{c:?} vs {truth:?}");
        assert!(cloud.count(PointLabel::Obstacle) > 0);
        // A look-at camera is orthonormal; sanity for the helper used above.
        assert!(look_at(Vec3::new(1.0, 0.0, 1.0), Vec3::ZERO).orthonormality_error() < 1e-12);
    }
}
