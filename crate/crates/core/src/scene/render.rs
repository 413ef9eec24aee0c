use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Scene;
use super::camera::CameraModel;
use crate::mask::BinaryMask;
use crate::math::Vec3;

/// Depth (meters along the camera z axis, 0 for background) and instance ids
/// (0 for background) of one camera, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f32>,
    pub ids: Vec<u32>,
}

impl View {
    pub fn blank(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        View { width, height, depth: vec![0.0; n], ids: vec![0; n] }
    }

    pub fn mask_of(&self, id: u32) -> BinaryMask {
        BinaryMask::from_vec(self.width, self.height, self.ids.iter().map(|&i| i == id && id != 0).collect())
            .expect("view buffers match resolution")
    }

    /// Mask of every non-background pixel.
    pub fn foreground(&self) -> BinaryMask {
        BinaryMask::from_vec(self.width, self.height, self.ids.iter().map(|&i| i != 0).collect())
            .expect("view buffers match resolution")
    }

    pub fn contains_id(&self, id: u32) -> bool {
        self.ids.contains(&id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewSet {
    pub views: Vec<View>,
}

impl ViewSet {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// One mask per view for the given instance id.
    pub fn masks_of(&self, id: u32) -> Vec<BinaryMask> {
        self.views.iter().map(|v| v.mask_of(id)).collect()
    }

    pub fn visible(&self, id: u32) -> bool {
        self.views.iter().any(|v| v.contains_id(id))
    }
}

struct Bound {
    index: usize,
    center: Vec3,
    radius_sq: f64,
}

fn first_hit(scene: &Scene, bounds: &[Bound], origin: Vec3, dir: Vec3) -> Option<(f64, u32)> {
    let dd = dir.dot(dir);
    let mut best: Option<(f64, u32)> = None;
    for b in bounds {
        // Cheap bounding-sphere rejection before the exact test.
        let oc = b.center - origin;
        let proj = oc.dot(dir);
        let perp_sq = oc.dot(oc) - proj * proj / dd;
        if perp_sq > b.radius_sq {
            continue;
        }
        let obj = &scene.objects[b.index];
        if let Some(t) = obj.ray_hit(origin, dir) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, obj.id));
            }
        }
    }
    best
}

pub fn render_view(scene: &Scene, camera: &CameraModel) -> View {
    let bounds: Vec<Bound> = scene
        .objects
        .iter()
        .enumerate()
        .map(|(index, o)| {
            let r = o.shape.bounding_radius() * (1.0 + 1e-9) + 1e-9;
            Bound { index, center: o.position, radius_sq: r * r }
        })
        .collect();
    let origin = camera.center();
    let w = camera.width as usize;
    let mut view = View::blank(camera.width, camera.height);
    view.depth
        .par_chunks_mut(w)
        .zip(view.ids.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (depth_row, id_row))| {
            for u in 0..w {
                let dir = camera.pixel_ray(u as f64, v as f64);
                if let Some((t, id)) = first_hit(scene, &bounds, origin, dir) {
                    depth_row[u] = t as f32;
                    id_row[u] = id;
                }
            }
        });
    view
}

/// Ray-casts every camera: each pixel takes the nearest object hit along the
/// ray through its integer coordinates.
pub fn render_views(scene: &Scene, cameras: &[CameraModel]) -> ViewSet {
    ViewSet { views: cameras.iter().map(|c| render_view(scene, c)).collect() }
}
