use serde::{Deserialize, Serialize};

use crate::labels::Rgb;
use crate::math::Vec3;

/// Rays starting closer than this to a surface do not count as hitting it.
const RAY_EPS: f64 = 1e-9;

/// An axis-aligned box in an object's local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LocalBox {
    pub center: Vec3,
    pub half: Vec3,
}

impl LocalBox {
    fn ray_hit(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        let o = (origin - self.center).to_array();
        let d = dir.to_array();
        let h = self.half.to_array();
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for i in 0..3 {
            if d[i] == 0.0 {
                if o[i].abs() > h[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let (mut t0, mut t1) = ((-h[i] - o[i]) * inv, (h[i] - o[i]) * inv);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
            if t_near > t_far {
                return None;
            }
        }
        if t_near > RAY_EPS {
            Some(t_near)
        } else if t_far > RAY_EPS {
            Some(t_far)
        } else {
            None
        }
    }

    fn distance(&self, p: Vec3) -> f64 {
        let q = p - self.center;
        let dx = (q.x.abs() - self.half.x).max(0.0);
        let dy = (q.y.abs() - self.half.y).max(0.0);
        let dz = (q.z.abs() - self.half.z).max(0.0);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    fn contains_xy(&self, p: Vec3) -> bool {
        (p.x - self.center.x).abs() <= self.half.x && (p.y - self.center.y).abs() <= self.half.y
    }

    /// Slab test of the segment `a -> b` against this box inflated by `margin`.
    pub fn segment_hits(&self, a: Vec3, b: Vec3, margin: f64) -> bool {
        let inflated = LocalBox {
            center: self.center,
            half: self.half + Vec3::new(margin, margin, margin),
        };
        if inflated.distance(a) == 0.0 {
            return true;
        }
        let d = b - a;
        match inflated.ray_hit(a, d) {
            Some(t) => t <= 1.0,
            None => false,
        }
    }

    fn corners_xy(&self) -> [Vec3; 4] {
        let c = self.center;
        let h = self.half;
        [
            Vec3::new(c.x - h.x, c.y - h.y, 0.0),
            Vec3::new(c.x + h.x, c.y - h.y, 0.0),
            Vec3::new(c.x - h.x, c.y + h.y, 0.0),
            Vec3::new(c.x + h.x, c.y + h.y, 0.0),
        ]
    }
}

/// A prismatic joint: a fixed body box and a slider box that translates along `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prismatic {
    pub body_half_extents: [f64; 3],
    pub slider_half_extents: [f64; 3],
    /// Slider center at open-fraction 0, in the body frame.
    pub slider_offset: [f64; 3],
    /// Unit direction the slider moves as the open-fraction grows, in the body frame.
    pub axis: [f64; 3],
    pub travel: f64,
    pub open_fraction: f64,
}

impl Prismatic {
    pub(crate) fn body(&self) -> LocalBox {
        LocalBox { center: Vec3::ZERO, half: Vec3::from_array(self.body_half_extents) }
    }

    pub(crate) fn slider_at(&self, fraction: f64) -> LocalBox {
        let axis = Vec3::from_array(self.axis);
        LocalBox {
            center: Vec3::from_array(self.slider_offset) + axis * (self.travel * fraction),
            half: Vec3::from_array(self.slider_half_extents),
        }
    }

    pub(crate) fn slider(&self) -> LocalBox {
        self.slider_at(self.open_fraction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Box { half_extents: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
    Prismatic(Prismatic),
}

impl Shape {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        match self {
            Shape::Box { half_extents } if !positive(half_extents) => {
                Err("box half-extents must be positive".into())
            }
            Shape::Cylinder { radius, height } if !positive(&[*radius, *height]) => {
                Err("cylinder radius and height must be positive".into())
            }
            Shape::Sphere { radius } if !positive(&[*radius]) => {
                Err("sphere radius must be positive".into())
            }
            Shape::Prismatic(p) => {
                if !positive(&p.body_half_extents) || !positive(&p.slider_half_extents) {
                    return Err("prismatic half-extents must be positive".into());
                }
                if !(p.travel.is_finite() && p.travel > 0.0) {
                    return Err("prismatic travel must be positive".into());
                }
                if !(0.0..=1.0).contains(&p.open_fraction) {
                    return Err("open-fraction must lie in [0, 1]".into());
                }
                let axis = Vec3::from_array(p.axis);
                if (axis.norm() - 1.0).abs() > 1e-9 {
                    return Err("prismatic axis must be a unit vector".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Ray hit distance in the local frame (`dir` need not be normalized).
    fn local_ray_hit(&self, o: Vec3, d: Vec3) -> Option<f64> {
        match self {
            Shape::Box { half_extents } => {
                LocalBox { center: Vec3::ZERO, half: Vec3::from_array(*half_extents) }.ray_hit(o, d)
            }
            Shape::Sphere { radius } => {
                let a = d.dot(d);
                let b = 2.0 * o.dot(d);
                let c = o.dot(o) - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t0 = (-b - sq) / (2.0 * a);
                let t1 = (-b + sq) / (2.0 * a);
                [t0, t1].into_iter().find(|t| *t > RAY_EPS)
            }
            Shape::Cylinder { radius, height } => {
                let hz = height / 2.0;
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > RAY_EPS && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let a = d.x * d.x + d.y * d.y;
                if a > 0.0 {
                    let b = 2.0 * (o.x * d.x + o.y * d.y);
                    let c = o.x * o.x + o.y * o.y - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                            let z = o.z + t * d.z;
                            if z.abs() <= hz {
                                consider(t);
                            }
                        }
                    }
                }
                if d.z != 0.0 {
                    for cap in [-hz, hz] {
                        let t = (cap - o.z) / d.z;
                        let x = o.x + t * d.x;
                        let y = o.y + t * d.y;
                        if x * x + y * y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
            Shape::Prismatic(p) => {
                let a = p.body().ray_hit(o, d);
                let b = p.slider().ray_hit(o, d);
                match (a, b) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    fn local_distance(&self, p: Vec3) -> f64 {
        match self {
            Shape::Box { half_extents } => {
                LocalBox { center: Vec3::ZERO, half: Vec3::from_array(*half_extents) }.distance(p)
            }
            Shape::Sphere { radius } => (p.norm() - radius).max(0.0),
            Shape::Cylinder { radius, height } => {
                let radial = ((p.x * p.x + p.y * p.y).sqrt() - radius).max(0.0);
                let vertical = (p.z.abs() - height / 2.0).max(0.0);
                (radial * radial + vertical * vertical).sqrt()
            }
            Shape::Prismatic(j) => j.body().distance(p).min(j.slider().distance(p)),
        }
    }

    fn local_contains_xy(&self, p: Vec3) -> bool {
        match self {
            Shape::Box { half_extents } => {
                LocalBox { center: Vec3::ZERO, half: Vec3::from_array(*half_extents) }.contains_xy(p)
            }
            Shape::Sphere { radius } | Shape::Cylinder { radius, .. } => {
                p.x * p.x + p.y * p.y <= radius * radius
            }
            Shape::Prismatic(j) => j.body().contains_xy(p) || j.slider().contains_xy(p),
        }
    }

    /// Vertical extent relative to the object center: (lowest, highest).
    pub fn z_extent(&self) -> (f64, f64) {
        match self {
            Shape::Box { half_extents } => (-half_extents[2], half_extents[2]),
            Shape::Sphere { radius } => (-radius, *radius),
            Shape::Cylinder { height, .. } => (-height / 2.0, height / 2.0),
            Shape::Prismatic(j) => {
                let b = j.body();
                let s = j.slider();
                (
                    (b.center.z - b.half.z).min(s.center.z - s.half.z),
                    (b.center.z + b.half.z).max(s.center.z + s.half.z),
                )
            }
        }
    }

    /// Radius of the smallest vertical cylinder about the center enclosing the
    /// shape in every joint configuration.
    pub fn horizontal_radius(&self) -> f64 {
        match self {
            Shape::Box { half_extents } => half_extents[0].hypot(half_extents[1]),
            Shape::Sphere { radius } | Shape::Cylinder { radius, .. } => *radius,
            Shape::Prismatic(j) => [j.body(), j.slider_at(0.0), j.slider_at(1.0)]
                .iter()
                .flat_map(|b| b.corners_xy())
                .map(|c| c.x.hypot(c.y))
                .fold(0.0, f64::max),
        }
    }

    /// Radius of a sphere about the center enclosing the shape.
    pub fn bounding_radius(&self) -> f64 {
        let (lo, hi) = self.z_extent();
        self.horizontal_radius().hypot(lo.abs().max(hi.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub raw_name: String,
    pub color: Rgb,
    /// Whether the color changes across task variations (drives display naming).
    #[serde(default)]
    pub color_varies: bool,
    pub shape: Shape,
    pub position: Vec3,
    pub yaw: f64,
    pub graspable: bool,
    pub is_location: bool,
}

impl SceneObject {
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        (p - self.position).rotate_z(-self.yaw)
    }

    pub fn to_world(&self, p: Vec3) -> Vec3 {
        p.rotate_z(self.yaw) + self.position
    }

    /// Nearest intersection distance along `origin + t * dir`.
    pub fn ray_hit(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        let o = self.to_local(origin);
        let d = dir.rotate_z(-self.yaw);
        self.shape.local_ray_hit(o, d)
    }

    /// Euclidean distance from `p` to the solid (zero inside).
    pub fn distance_to(&self, p: Vec3) -> f64 {
        self.shape.local_distance(self.to_local(p))
    }

    pub fn footprint_contains(&self, p: Vec3) -> bool {
        self.shape.local_contains_xy(self.to_local(p))
    }

    pub fn top_z(&self) -> f64 {
        self.position.z + self.shape.z_extent().1
    }

    pub fn bottom_z(&self) -> f64 {
        self.position.z + self.shape.z_extent().0
    }

    pub fn prismatic(&self) -> Option<&Prismatic> {
        match &self.shape {
            Shape::Prismatic(p) => Some(p),
            _ => None,
        }
    }

    pub fn prismatic_mut(&mut self) -> Option<&mut Prismatic> {
        match &mut self.shape {
            Shape::Prismatic(p) => Some(p),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id == 0 {
            return Err(format!("object '{}' uses reserved id 0", self.raw_name));
        }
        if !self.position.is_finite() || !self.yaw.is_finite() {
            return Err(format!("object {} has a non-finite pose", self.id));
        }
        self.shape.validate().map_err(|e| format!("object {}: {e}", self.id))
    }
}
