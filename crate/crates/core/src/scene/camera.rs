use serde::{Deserialize, Serialize};

use super::{GripperState, SceneError};
use crate::math::{Mat3, Vec3};

/// Pinhole camera. `rotation`/`translation` map world to camera coordinates
/// (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    /// Square-pixel camera with the principal point at the image center.
    pub fn with_fov(width: u32, height: u32, horizontal_fov: f64) -> Self {
        let f = (width as f64 / 2.0) / (horizontal_fov / 2.0).tan();
        CameraModel {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation: Mat3::IDENTITY,
            translation: Vec3::ZERO,
            width,
            height,
        }
    }

    pub fn looking_at(mut self, eye: Vec3, target: Vec3) -> Self {
        self.set_pose(look_at(eye, target), eye);
        self
    }

    /// Places the camera center at `eye` with the given world-to-camera rotation.
    pub fn set_pose(&mut self, rotation: Mat3, eye: Vec3) {
        self.rotation = rotation;
        self.translation = -rotation.mul_vec(eye);
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(SceneError::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::InvalidCamera("resolution must be non-zero".into()));
        }
        if self.rotation.orthonormality_error() > 1e-9 {
            return Err(SceneError::InvalidCamera("rotation is not orthonormal".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        -self.rotation.transpose().mul_vec(self.translation)
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn camera_to_world(&self, p: Vec3) -> Vec3 {
        self.rotation.transpose().mul_vec(p - self.translation)
    }

    /// World direction of the ray through pixel `(u, v)`, scaled so that its
    /// camera-frame z component is 1 (the hit parameter equals depth).
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vec3 {
        let d = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        self.rotation.transpose().mul_vec(d)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// World-to-camera rotation looking from `eye` to `target` with world +z up.
pub fn look_at(eye: Vec3, target: Vec3) -> Mat3 {
    let forward = (target - eye).normalized();
    let mut right = forward.cross(Vec3::new(0.0, 0.0, 1.0));
    if right.norm() < 1e-9 {
        // Looking straight up or down: fix image right to world +x.
        right = Vec3::new(1.0, 0.0, 0.0);
    }
    let right = right.normalized();
    let down = forward.cross(right).normalized();
    Mat3::from_rows(right, down, forward)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mount", rename_all = "snake_case")]
pub enum CameraMount {
    Fixed { camera: CameraModel },
    /// Rides on the gripper, looking straight down from `height` above it.
    Wrist { intrinsics: CameraModel, height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigCamera {
    pub role: String,
    #[serde(flatten)]
    pub mount: CameraMount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: Vec<RigCamera>,
}

impl CameraRig {
    /// Front, left-shoulder, right-shoulder and wrist cameras at `resolution`².
    pub fn default_with_resolution(resolution: u32) -> Self {
        let fixed = |role: &str, eye: Vec3| RigCamera {
            role: role.into(),
            mount: CameraMount::Fixed {
                camera: CameraModel::with_fov(resolution, resolution, 50f64.to_radians())
                    .looking_at(eye, Vec3::new(0.0, 0.0, 0.03)),
            },
        };
        CameraRig {
            cameras: vec![
                fixed("front", Vec3::new(0.75, 0.0, 0.55)),
                fixed("left_shoulder", Vec3::new(-0.35, 0.5, 0.6)),
                fixed("right_shoulder", Vec3::new(-0.35, -0.5, 0.6)),
                RigCamera {
                    role: "wrist".into(),
                    mount: CameraMount::Wrist {
                        intrinsics: CameraModel::with_fov(resolution, resolution, 90f64.to_radians()),
                        height: 0.08,
                    },
                },
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn roles(&self) -> Vec<&str> {
        self.cameras.iter().map(|c| c.role.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.cameras.is_empty() {
            return Err(SceneError::InvalidCamera("rig needs at least one camera".into()));
        }
        for c in &self.cameras {
            match &c.mount {
                CameraMount::Fixed { camera } => camera.validate()?,
                CameraMount::Wrist { intrinsics, height } => {
                    intrinsics.validate()?;
                    if !(*height > 0.0) {
                        return Err(SceneError::InvalidCamera("wrist height must be positive".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Concrete cameras for the current gripper pose.
    pub fn resolve(&self, gripper: &GripperState) -> Vec<CameraModel> {
        self.cameras
            .iter()
            .map(|c| match &c.mount {
                CameraMount::Fixed { camera } => camera.clone(),
                CameraMount::Wrist { intrinsics, height } => {
                    let eye = gripper.position + Vec3::new(0.0, 0.0, *height);
                    let mut cam = intrinsics.clone();
                    cam.set_pose(look_at(eye, gripper.position), eye);
                    cam
                }
            })
            .collect()
    }
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig::default_with_resolution(256)
    }
}
