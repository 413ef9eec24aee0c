use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;
use crate::math::mix_seed;
use crate::plan::{serialize_plan, Action, GroundedPlan, GroundedReference, Slot, SEG};
use crate::scene::{eval_predicate, step_motion, GripperState, MotionStep, Scene, SceneError, Stage, TaskScript, ViewSet};

/// Privileged simulator state, available only to the oracle.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a> {
    pub scene: &'a Scene,
    pub gripper: &'a GripperState,
    pub task: &'a TaskScript,
}

/// Everything a planner may look at for one call. `inventory` lists the
/// visible objects' ids and display names, standing in for color images.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub instruction: &'a str,
    pub views: &'a ViewSet,
    pub history: &'a [String],
    pub inventory: &'a [(u32, String)],
    pub truth: Option<GroundTruth<'a>>,
}

/// Raw planner output: plan text with one mask stack per `<seg>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerOutput {
    pub text: String,
    pub mask_stacks: Vec<Vec<BinaryMask>>,
}

impl PlannerOutput {
    pub fn from_plan(plan: &GroundedPlan) -> Self {
        PlannerOutput { text: serialize_plan(plan), mask_stacks: plan.mask_stacks() }
    }
}

pub trait Planner: Send {
    fn plan(&mut self, obs: &Observation) -> PlannerOutput;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("the oracle needs ground truth")]
    NoGroundTruth,
    #[error(transparent)]
    Scene(#[from] SceneError),
}

fn reference(scene: &Scene, views: &ViewSet, role: &str) -> Result<GroundedReference, SceneError> {
    let id = scene.role_id(role)?;
    Ok(GroundedReference::new(scene.display_name_of_role(role)?, views.masks_of(id)))
}

fn release_meets(goal: &crate::scene::Predicate, scene: &Scene, gripper: &GripperState) -> Result<bool, SceneError> {
    let (s, g) = step_motion(scene, gripper, &MotionStep::OpenGripper)?;
    eval_predicate(goal, &s, &g)
}

/// The next plan that drives the first unmet stage of the task toward its goal.
pub fn oracle_plan(
    scene: &Scene,
    gripper: &GripperState,
    task: &TaskScript,
    views: &ViewSet,
) -> Result<GroundedPlan, SceneError> {
    let stages = task.stages()?;
    let mut current = None;
    for s in &stages {
        if !eval_predicate(s.goal(), scene, gripper)? {
            current = Some(s);
            break;
        }
    }
    let Some(stage) = current else {
        return Ok(GroundedPlan::new(Action::Release, None, None));
    };
    let release = GroundedPlan::new(Action::Release, None, None);
    Ok(match stage {
        Stage::Press { action, object, .. } => GroundedPlan::new(*action, Some(reference(scene, views, object)?), None),
        Stage::PickPlace { object, location, goal } => {
            let target = scene.role_id(object)?;
            match gripper.held {
                Some(id) if id == target => {
                    if release_meets(goal, scene, gripper)? {
                        release
                    } else {
                        GroundedPlan::new(Action::MoveGraspedObject, None, Some(reference(scene, views, location)?))
                    }
                }
                Some(_) => release,
                None => GroundedPlan::new(Action::Grasp, Some(reference(scene, views, object)?), None),
            }
        }
        Stage::Rotate { object, goal } => {
            let target = scene.role_id(object)?;
            match gripper.held {
                Some(id) if id == target => {
                    if release_meets(goal, scene, gripper)? {
                        release
                    } else {
                        GroundedPlan::new(Action::RotateGraspedObject, None, None)
                    }
                }
                Some(_) => release,
                None => GroundedPlan::new(Action::Grasp, Some(reference(scene, views, object)?), None),
            }
        }
    })
}

/// Ground-truth planner: reads the simulator state and emits the next plan
/// with instance-id masks.
#[derive(Debug, Clone, Default)]
pub struct OraclePlanner;

impl OraclePlanner {
    pub fn try_plan(&self, obs: &Observation) -> Result<GroundedPlan, OracleError> {
        let t = obs.truth.ok_or(OracleError::NoGroundTruth)?;
        Ok(oracle_plan(t.scene, t.gripper, t.task, obs.views)?)
    }
}

impl Planner for OraclePlanner {
    fn plan(&mut self, obs: &Observation) -> PlannerOutput {
        match self.try_plan(obs) {
            Ok(p) => PlannerOutput::from_plan(&p),
            // Unparseable on purpose: the loop records it as a failed call.
            Err(e) => PlannerOutput { text: format!("oracle error: {e}"), mask_stacks: vec![] },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    pub p_wrong_object: f64,
    pub p_wrong_action: f64,
    pub p_malformed: f64,
    /// Independent draw per call; otherwise one draw fixes the episode.
    pub transient: bool,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig { p_wrong_object: 0.0, p_wrong_action: 0.0, p_malformed: 0.0, transient: true, seed: 0 }
    }
}

impl CorruptionConfig {
    pub fn wrong_object(p: f64, seed: u64) -> Self {
        CorruptionConfig { p_wrong_object: p, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ps = [self.p_wrong_object, self.p_wrong_action, self.p_malformed];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("corruption probabilities must lie in [0, 1]".into());
        }
        if ps.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err("corruption probabilities must sum to at most 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    WrongObject,
    WrongAction,
    Malformed,
}

/// Wraps a planner and perturbs its output at configured rates.
pub struct CorruptedPlanner<P> {
    base: P,
    cfg: CorruptionConfig,
    rng: ChaCha8Rng,
    sticky: Option<Option<Corruption>>,
    /// Corruptions applied so far, one entry per call.
    pub log: Vec<Option<Corruption>>,
}

pub fn corrupt<P: Planner>(base: P, cfg: CorruptionConfig, episode_seed: u64) -> CorruptedPlanner<P> {
    CorruptedPlanner {
        base,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, episode_seed, 0xC0])),
        sticky: None,
        log: Vec::new(),
    }
}

impl<P: Planner> CorruptedPlanner<P> {
    fn draw(&mut self) -> Option<Corruption> {
        let u: f64 = self.rng.gen();
        let c = &self.cfg;
        if u < c.p_wrong_object {
            Some(Corruption::WrongObject)
        } else if u < c.p_wrong_object + c.p_wrong_action {
            Some(Corruption::WrongAction)
        } else if u < c.p_wrong_object + c.p_wrong_action + c.p_malformed {
            Some(Corruption::Malformed)
        } else {
            None
        }
    }

    fn apply(&mut self, kind: Corruption, out: PlannerOutput, obs: &Observation) -> PlannerOutput {
        let schema = crate::plan::ActionSchema::default();
        let parsed = crate::plan::parse_plan(&out.text, &out.mask_stacks, &schema);
        match kind {
            Corruption::Malformed => {
                if out.text.contains(SEG) {
                    PlannerOutput { text: out.text.replace(SEG, ""), mask_stacks: out.mask_stacks }
                } else {
                    // No reference to break: add an empty, unterminated one.
                    PlannerOutput { text: format!("{} <p> </p>", out.text.trim_end_matches('.')), mask_stacks: out.mask_stacks }
                }
            }
            Corruption::WrongObject => {
                let Ok(mut plan) = parsed else { return out };
                let slots: Vec<Slot> = plan.references().map(|(s, _)| s).collect();
                if slots.is_empty() {
                    return out;
                }
                let slot = slots[self.rng.gen_range(0..slots.len())];
                let used: Vec<String> = plan.references().map(|(_, r)| crate::plan::normalize_text(&r.text)).collect();
                let candidates: Vec<&(u32, String)> =
                    obs.inventory.iter().filter(|(_, n)| !used.contains(&crate::plan::normalize_text(n))).collect();
                if candidates.is_empty() {
                    return out;
                }
                let (id, name) = candidates[self.rng.gen_range(0..candidates.len())];
                let r = Some(GroundedReference::new(name.clone(), obs.views.masks_of(*id)));
                match slot {
                    Slot::Object => plan.object = r,
                    Slot::Location => plan.location = r,
                }
                PlannerOutput::from_plan(&plan)
            }
            Corruption::WrongAction => {
                let Ok(plan) = parsed else { return out };
                let swapped = swap_action(&plan, &mut self.rng);
                PlannerOutput::from_plan(&swapped)
            }
        }
    }
}

/// A different action with the same slot signature.
fn swap_action(plan: &GroundedPlan, rng: &mut ChaCha8Rng) -> GroundedPlan {
    let p = plan.clone();
    match plan.action {
        Action::Grasp | Action::PushDown | Action::PushForward => {
            let others: Vec<Action> = [Action::Grasp, Action::PushDown, Action::PushForward]
                .into_iter()
                .filter(|a| *a != plan.action)
                .collect();
            GroundedPlan { action: others[rng.gen_range(0..others.len())], ..p }
        }
        Action::MoveGraspedObject => GroundedPlan { action: Action::Release, ..p },
        Action::Release if plan.location.is_some() => GroundedPlan { action: Action::MoveGraspedObject, ..p },
        Action::Release => GroundedPlan::new(Action::RotateGraspedObject, None, None),
        Action::RotateGraspedObject => GroundedPlan::new(Action::Release, None, None),
    }
}

impl<P: Planner> Planner for CorruptedPlanner<P> {
    fn plan(&mut self, obs: &Observation) -> PlannerOutput {
        let out = self.base.plan(obs);
        let kind = if self.cfg.transient {
            self.draw()
        } else {
            match self.sticky {
                Some(k) => k,
                None => {
                    let k = self.draw();
                    self.sticky = Some(k);
                    k
                }
            }
        };
        self.log.push(kind);
        match kind {
            Some(k) => self.apply(k, out, obs),
            None => out,
        }
    }
}

/// Planner selection used by the harness and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannerKind {
    Oracle,
    Corrupted(CorruptionConfig),
}

impl PlannerKind {
    /// A fresh planner for one episode.
    pub fn build(&self, episode_seed: u64) -> Box<dyn Planner> {
        match self {
            PlannerKind::Oracle => Box::new(OraclePlanner),
            PlannerKind::Corrupted(cfg) => Box::new(corrupt(OraclePlanner, *cfg, episode_seed)),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            PlannerKind::Oracle => Ok(()),
            PlannerKind::Corrupted(c) => c.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::Oracle => "oracle",
            PlannerKind::Corrupted(_) => "corrupted",
        }
    }
}

/// Planner that always returns the same text. Handy for exercising error paths.
#[derive(Debug, Clone)]
pub struct FixedPlanner(pub PlannerOutput);

impl Planner for FixedPlanner {
    fn plan(&mut self, _: &Observation) -> PlannerOutput {
        self.0.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_kind_roundtrips_and_fills_defaults() {
        let k = PlannerKind::Corrupted(CorruptionConfig::wrong_object(0.3, 2));
        let back: PlannerKind = serde_json::from_str(&serde_json::to_string(&k).unwrap()).unwrap();
        assert_eq!(back, k);
        let partial: CorruptionConfig = serde_json::from_str(r#"{"p_malformed": 1.0}"#).unwrap();
        assert_eq!(partial, CorruptionConfig { p_malformed: 1.0, ..Default::default() });
        assert!(serde_json::from_str::<CorruptionConfig>(r#"{"p_wrong": 1.0}"#).is_err());
    }
}
