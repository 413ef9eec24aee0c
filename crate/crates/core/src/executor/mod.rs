//! Closed-loop execution: plan, ground to 3D, act, replan.

mod planner;
mod policy;
mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use planner::{
    corrupt, oracle_plan, Corruption, CorruptedPlanner, CorruptionConfig, FixedPlanner, GroundTruth, Observation,
    OracleError, OraclePlanner, Planner, PlannerKind, PlannerOutput,
};
pub use policy::{motion_policy, translate_legs, PolicyError, MAX_SUBPLAN_STEPS, PUSH_STROKE};
pub use trace::{read_trace_jsonl, write_trace_jsonl, EpisodeStatus, EpisodeTrace, ParseOutcome, TraceLine, TraceStep};

use crate::geometry::{ground_plan, DbscanParams};
use crate::mask::BinaryMask;
use crate::math::mix_seed;
use crate::plan::{build_prompt, history_text, parse_plan, ActionSchema, PromptSpec};
use crate::scene::{
    apply_motion, check_success, render_views, sample_scene, CameraRig, GripperState, SceneError, TaskScript, ViewSet,
};

/// Motion steps executed per planner call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct ChunkPolicy(usize);

impl TryFrom<usize> for ChunkPolicy {
    type Error = String;

    fn try_from(c: usize) -> Result<Self, String> {
        ChunkPolicy::new(c)
    }
}

impl From<ChunkPolicy> for usize {
    fn from(c: ChunkPolicy) -> usize {
        c.0
    }
}

impl ChunkPolicy {
    pub fn new(c: usize) -> Result<Self, String> {
        if c == 0 {
            return Err("chunk size must be at least 1".into());
        }
        Ok(ChunkPolicy(c))
    }

    pub fn size(self) -> usize {
        self.0
    }
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy(5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    pub chunk: ChunkPolicy,
    pub max_steps: usize,
    pub max_parse_retries: usize,
    /// Guards against loops that never move (e.g. a target that is never seen).
    pub max_planner_calls: usize,
    /// Outlier filtering of reference clouds; `None` disables it.
    pub dbscan: Option<DbscanParams>,
    /// Spurious mask pixels added per reference and view, as a fraction of the
    /// mask's own size.
    pub speckle: f64,
    pub rig: CameraRig,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            chunk: ChunkPolicy::default(),
            max_steps: 25,
            max_parse_retries: 3,
            max_planner_calls: 60,
            dbscan: Some(DbscanParams::default()),
            speckle: 0.0,
            rig: CameraRig::default(),
        }
    }
}

impl ExecConfig {
    pub fn with_chunk(mut self, c: usize) -> Result<Self, String> {
        self.chunk = ChunkPolicy::new(c)?;
        Ok(self)
    }
}

/// Sets `round(rate * |mask|)` uniformly drawn pixels of each mask.
pub fn add_speckle(masks: &mut [Vec<BinaryMask>], rate: f64, rng: &mut impl Rng) {
    if rate <= 0.0 {
        return;
    }
    for stack in masks.iter_mut() {
        for m in stack.iter_mut() {
            let n = (rate * m.count() as f64).round() as usize;
            for _ in 0..n {
                let (u, v) = (rng.gen_range(0..m.width()), rng.gen_range(0..m.height()));
                m.set(u, v, true);
            }
        }
    }
}

/// Runs one seeded episode of `task` to success, failure or budget exhaustion.
pub fn run_episode(
    task: &TaskScript,
    seed: u64,
    planner: &mut dyn Planner,
    cfg: &ExecConfig,
) -> Result<EpisodeTrace, SceneError> {
    cfg.rig.validate()?;
    let schema = ActionSchema::default();
    let mut scene = sample_scene(task, seed)?;
    let home = task.layout.gripper_home;
    let mut gripper = GripperState::at(crate::math::Vec3::new(home[0], home[1], home[2]));
    let instruction = scene.instruction(task)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x5EC]));

    let mut trace = EpisodeTrace::new(task, seed, cfg, instruction.clone());
    let mut history: Vec<String> = Vec::new();
    let mut last_issued: Option<String> = None;
    let mut motion_steps = 0;
    let mut parse_failures = 0;
    let mut status = EpisodeStatus::Failure;

    while motion_steps < cfg.max_steps && trace.steps.len() < cfg.max_planner_calls {
        let cameras = cfg.rig.resolve(&gripper);
        let views: ViewSet = render_views(&scene, &cameras);
        let inventory: Vec<(u32, String)> =
            scene.inventory().into_iter().filter(|(id, _)| views.visible(*id)).collect();
        let prompt = PromptSpec::new(views.len(), instruction.clone(), history.clone())
            .map(|p| build_prompt(&p))
            .unwrap_or_default();
        let obs = Observation {
            instruction: &instruction,
            views: &views,
            history: &history,
            inventory: &inventory,
            truth: Some(GroundTruth { scene: &scene, gripper: &gripper, task }),
        };
        let out = planner.plan(&obs);
        let mut step = TraceStep {
            index: trace.steps.len(),
            keystep: false,
            history: history.clone(),
            prompt,
            raw_output: out.text.clone(),
            parse: ParseOutcome::Error { class: String::new(), message: String::new() },
            cloud: None,
            error: None,
            motion: Vec::new(),
            scene: scene.clone(),
            gripper: gripper.clone(),
        };

        let plan = match parse_plan(&out.text, &out.mask_stacks, &schema) {
            Ok(p) => p,
            Err(e) => {
                step.parse = ParseOutcome::Error { class: e.class().to_string(), message: e.to_string() };
                trace.steps.push(step);
                parse_failures += 1;
                if parse_failures > cfg.max_parse_retries {
                    status = EpisodeStatus::ParseFailureExhausted;
                    break;
                }
                continue;
            }
        };
        parse_failures = 0;
        let text = history_text(&plan);
        step.parse = ParseOutcome::Ok { action: plan.action, history_text: text.clone() };
        step.keystep = last_issued.as_deref() != Some(text.as_str());
        last_issued = Some(text.clone());

        let mut grounded = plan.clone();
        if cfg.speckle > 0.0 {
            let mut stacks = grounded.mask_stacks();
            add_speckle(&mut stacks, cfg.speckle, &mut noise_rng);
            let mut it = stacks.into_iter();
            for r in [grounded.object.as_mut(), grounded.location.as_mut()].into_iter().flatten() {
                r.masks = it.next().expect("one stack per reference");
            }
        }
        let cloud = match ground_plan(&grounded, &views, &cameras, &gripper, cfg.dbscan.as_ref()) {
            Ok(c) => c,
            Err(e) => {
                step.error = Some(e.to_string());
                trace.steps.push(step);
                continue;
            }
        };
        step.cloud = Some(cloud.summary());
        let motions = match motion_policy(&plan, &cloud, &gripper) {
            Ok(m) => m,
            Err(e) => {
                step.error = Some(e.to_string());
                trace.steps.push(step);
                continue;
            }
        };

        let budget = cfg.chunk.size().min(cfg.max_steps - motion_steps);
        let mut succeeded = false;
        for m in motions.into_iter().take(budget) {
            if step.motion.is_empty() && history.last() != Some(&text) {
                history.push(text.clone());
            }
            apply_motion(&mut scene, &mut gripper, &m)?;
            step.motion.push(m);
            motion_steps += 1;
            if check_success(&scene, &gripper, task)? {
                succeeded = true;
                break;
            }
        }
        trace.steps.push(step);
        if succeeded {
            status = EpisodeStatus::Success;
            break;
        }
    }
    trace.finish(status, motion_steps, scene, gripper);
    Ok(trace)
}
