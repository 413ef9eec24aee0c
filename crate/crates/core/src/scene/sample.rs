use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ObjectSpec, Scene, SceneError, SceneObject, Shape, TaskScript};
use crate::labels::{refine_name, ColorTable};
use crate::math::{mix_seed, Vec3};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// FNV-1a, stable across platforms and releases.
pub(crate) fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn distractor_pool() -> [(&'static str, Shape); 3] {
    [
        ("block", Shape::Box { half_extents: [0.022, 0.022, 0.022] }),
        ("cylinder", Shape::Cylinder { radius: 0.024, height: 0.06 }),
        ("cube", Shape::Box { half_extents: [0.028, 0.028, 0.028] }),
    ]
}

/// Builds a randomized scene for `task`. Deterministic in `(task, seed)`.
pub fn sample_scene(task: &TaskScript, seed: u64) -> Result<Scene, SceneError> {
    task.validate()?;
    let layout = &task.layout;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, stable_hash(&task.name), task.variation as u64]));
    let mut scene = Scene::empty(&task.name, task.variation);

    let mut specs: Vec<ObjectSpec> = task.objects.clone();
    let n_distractors = rng.gen_range(layout.distractors[0]..=layout.distractors[1].max(layout.distractors[0]));
    let table = ColorTable::canonical();
    for k in 0..n_distractors {
        let (base, shape) = distractor_pool().choose(&mut rng).cloned().expect("pool is non-empty");
        // Keep display names unique: skip colors already used by objects of the same kind.
        let taken: Vec<String> = specs
            .iter()
            .filter(|s| refine_name(&s.raw_name).as_deref() == Some(base))
            .map(|s| table.nearest(s.color).to_string())
            .collect();
        let free: Vec<_> = table.entries().iter().filter(|c| !taken.contains(&c.name)).collect();
        let color = free.choose(&mut rng).expect("twenty colors").rgb;
        specs.push(ObjectSpec {
            role: format!("distractor{k}"),
            raw_name: format!("distractor{k}_{base}"),
            shape,
            color,
            color_varies: true,
            graspable: true,
            is_location: false,
            yaw_range: None,
        });
    }

    for (i, spec) in specs.iter().enumerate() {
        let radius = spec.shape.horizontal_radius();
        let rest_z = -spec.shape.z_extent().0;
        let (ylo, yhi) = match spec.yaw_range {
            Some([a, b]) => (a, b),
            None => (-std::f64::consts::PI, std::f64::consts::PI),
        };
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let x = rng.gen_range(layout.x[0]..=layout.x[1]);
            let y = rng.gen_range(layout.y[0]..=layout.y[1]);
            let yaw = if yhi > ylo { rng.gen_range(ylo..yhi) } else { ylo };
            let p = Vec3::new(x, y, rest_z);
            let clear = scene.objects.iter().all(|o| {
                o.position.horizontal_distance(p) >= o.shape.horizontal_radius() + radius + layout.clearance
            });
            if clear {
                placed = Some((p, yaw));
                break;
            }
        }
        let (position, yaw) = placed.ok_or_else(|| SceneError::UnsatisfiableLayout {
            task: task.key(),
            seed,
            role: spec.role.clone(),
            attempts: MAX_PLACEMENT_ATTEMPTS,
        })?;
        let id = i as u32 + 1;
        scene.objects.push(SceneObject {
            id,
            raw_name: spec.raw_name.clone(),
            color: spec.color,
            color_varies: spec.color_varies,
            shape: spec.shape.clone(),
            position,
            yaw,
            graspable: spec.graspable,
            is_location: spec.is_location,
        });
        scene.roles.insert(spec.role.clone(), id);
        scene.reference_yaw.insert(spec.role.clone(), yaw);
    }
    Ok(scene)
}
