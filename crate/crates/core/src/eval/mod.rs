//! Offline grounded-planning metrics and online success-rate evaluation.

mod report;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{render_report, ReportFormat};

use crate::datagen::{visit_plan_records, DataError, KeystepRecord};
use crate::executor::{run_episode, EpisodeStatus, ExecConfig, GroundTruth, Observation, PlannerKind};
use crate::math::mix_seed;
use crate::objectives::iou;
use crate::plan::{normalize_text, parse_plan, ActionSchema, GroundedPlan, Slot};
use crate::scene::{SceneError, TaskSuite};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("record {0} names a task that is not in the suite")]
    UnknownTask(String),
    #[error("invalid planner: {0}")]
    Planner(String),
    #[error("invalid result: {0}")]
    Invalid(String),
}

/// Scores of one keystep. `obj` and `grd` are absent when the ground truth
/// has nothing to score them on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeystepScore {
    pub episode: String,
    pub t: usize,
    pub task: String,
    pub variation: u32,
    pub group: String,
    pub act: bool,
    pub obj: Option<bool>,
    /// Mean IoU over (reference, view) pairs where the ground truth is present.
    pub grd: Option<f64>,
    pub parse_error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub keysteps: usize,
    pub act: f64,
    pub obj: f64,
    pub grd: f64,
    /// Keysteps that contributed to `obj` and `grd`.
    pub obj_keysteps: usize,
    pub grd_keysteps: usize,
}

impl GroupMetrics {
    fn from_scores<'a>(scores: impl Iterator<Item = &'a KeystepScore>) -> Self {
        let (mut n, mut act, mut obj, mut grd, mut n_obj, mut n_grd) = (0, 0.0, 0.0, 0.0, 0, 0);
        for s in scores {
            n += 1;
            act += if s.act { 100.0 } else { 0.0 };
            if let Some(o) = s.obj {
                n_obj += 1;
                obj += if o { 100.0 } else { 0.0 };
            }
            if let Some(g) = s.grd {
                n_grd += 1;
                grd += 100.0 * g;
            }
        }
        let mean = |sum: f64, k: usize| if k == 0 { 0.0 } else { sum / k as f64 };
        GroupMetrics {
            keysteps: n,
            act: mean(act, n),
            obj: mean(obj, n_obj),
            grd: mean(grd, n_grd),
            obj_keysteps: n_obj,
            grd_keysteps: n_grd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineResult {
    pub planner: String,
    pub groups: BTreeMap<String, GroupMetrics>,
    pub overall: GroupMetrics,
    pub keysteps: Vec<KeystepScore>,
}

impl OfflineResult {
    /// Aggregates after sorting, so the result does not depend on record order.
    pub fn from_scores(planner: &str, mut keysteps: Vec<KeystepScore>) -> Self {
        keysteps.sort_by(|a, b| (&a.episode, a.t).cmp(&(&b.episode, b.t)));
        let mut groups = BTreeMap::new();
        let names: std::collections::BTreeSet<&str> = keysteps.iter().map(|s| s.group.as_str()).collect();
        for g in names {
            groups.insert(g.to_string(), GroupMetrics::from_scores(keysteps.iter().filter(|s| s.group == g)));
        }
        let overall = GroupMetrics::from_scores(keysteps.iter());
        OfflineResult { planner: planner.to_string(), groups, overall, keysteps }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (g, m) in self.groups.iter().map(|(g, m)| (g.as_str(), m)).chain([("overall", &self.overall)]) {
            for (name, v) in [("Act", m.act), ("Obj", m.obj), ("Grd", m.grd)] {
                if !(0.0..=100.0).contains(&v) {
                    return Err(format!("{name} of {g} is {v}, outside [0, 100]"));
                }
            }
        }
        Ok(())
    }
}

/// Scores a predicted plan (or parse failure) against a keystep's ground truth.
pub fn score_keystep(record: &KeystepRecord, group: &str, predicted: Result<&GroundedPlan, String>) -> KeystepScore {
    let gt = &record.gt_plan;
    let refs: Vec<Slot> = gt.references().map(|(s, _)| s).collect();
    let visible_pairs: usize = gt.references().map(|(_, r)| r.masks.iter().filter(|m| !m.is_empty()).count()).sum();
    let mut score = KeystepScore {
        episode: record.episode.clone(),
        t: record.t,
        task: record.task.clone(),
        variation: record.variation,
        group: group.to_string(),
        act: false,
        obj: (!refs.is_empty()).then_some(false),
        grd: (visible_pairs > 0).then_some(0.0),
        parse_error: None,
    };
    let pred = match predicted {
        Ok(p) => p,
        Err(e) => {
            score.parse_error = Some(e);
            return score;
        }
    };
    score.act = normalize_text(pred.action.phrase()) == normalize_text(gt.action.phrase());
    if !refs.is_empty() {
        score.obj = Some(refs.iter().all(|&slot| {
            let want = gt.reference(slot).expect("slot listed");
            pred.reference(slot).is_some_and(|p| normalize_text(&p.text) == normalize_text(&want.text))
        }));
    }
    if visible_pairs > 0 {
        let mut total = 0.0;
        for (slot, want) in gt.references() {
            for (view, m) in want.masks.iter().enumerate() {
                if m.is_empty() {
                    continue;
                }
                total += pred
                    .reference(slot)
                    .and_then(|p| p.masks.get(view))
                    .and_then(|pm| iou(pm, m).ok())
                    .unwrap_or(0.0);
            }
        }
        score.grd = Some(total / visible_pairs as f64);
    }
    score
}

/// Per-record planner seed, independent of record order.
fn record_seed(r: &KeystepRecord) -> u64 {
    let h = r.episode.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    mix_seed(&[h, r.t as u64])
}

/// Runs the planner on one record with its ground-truth history.
pub fn eval_record(record: &KeystepRecord, suite: &TaskSuite, planner: &PlannerKind) -> Result<KeystepScore, EvalError> {
    let task = suite.find(&record.task, record.variation).ok_or_else(|| EvalError::UnknownTask(record.key()))?;
    let mut p = planner.build(record_seed(record));
    let obs = Observation {
        instruction: &record.instruction,
        views: &record.views,
        history: &record.history,
        inventory: &record.object_inventory,
        truth: Some(GroundTruth { scene: &record.scene, gripper: &record.gripper, task }),
    };
    let out = p.plan(&obs);
    let parsed = parse_plan(&out.text, &out.mask_stacks, &ActionSchema::default());
    Ok(score_keystep(record, &task.group.to_string(), parsed.as_ref().map_err(|e| e.to_string())))
}

pub fn eval_offline_records(records: &[KeystepRecord], suite: &TaskSuite, planner: &PlannerKind) -> Result<OfflineResult, EvalError> {
    planner.validate().map_err(EvalError::Planner)?;
    let scores = records.par_iter().map(|r| eval_record(r, suite, planner)).collect::<Result<Vec<_>, _>>()?;
    Ok(OfflineResult::from_scores(planner.name(), scores))
}

/// Streams a plan dataset from disk through the planner.
pub fn eval_offline(dir: &Path, suite: &TaskSuite, planner: &PlannerKind) -> Result<OfflineResult, EvalError> {
    planner.validate().map_err(EvalError::Planner)?;
    let mut scores = Vec::new();
    let mut failure = None;
    visit_plan_records(dir, |r| {
        match eval_record(&r, suite, planner) {
            Ok(s) => scores.push(s),
            Err(e) => failure = failure.take().or(Some(e)),
        }
        Ok(())
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(OfflineResult::from_scores(planner.name(), scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub run: usize,
    pub episode: usize,
    pub seed: u64,
    pub status: EpisodeStatus,
    pub planner_calls: usize,
    pub motion_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationResult {
    pub task: String,
    pub variation: u32,
    pub group: String,
    pub sr_runs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub episodes: Vec<EpisodeOutcome>,
}

impl VariationResult {
    pub fn key(&self) -> String {
        format!("{}/v{}", self.task, self.variation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineResult {
    pub planner: String,
    pub chunk: usize,
    pub episodes: usize,
    pub runs: usize,
    pub seed: u64,
    pub variations: Vec<VariationResult>,
}

impl OnlineResult {
    /// Mean over variations of the per-variation mean SR.
    pub fn mean_sr(&self) -> f64 {
        if self.variations.is_empty() {
            return 0.0;
        }
        self.variations.iter().map(|v| v.mean).sum::<f64>() / self.variations.len() as f64
    }

    pub fn validate(&self) -> Result<(), String> {
        for v in &self.variations {
            if v.sr_runs.iter().chain([&v.mean]).any(|s| !(0.0..=1.0).contains(s)) {
                return Err(format!("{} has a success rate outside [0, 1]", v.key()));
            }
            if v.sr_runs.len() != self.runs {
                return Err(format!("{} has {} runs, expected {}", v.key(), v.sr_runs.len(), self.runs));
            }
            let (m, s) = mean_std(&v.sr_runs);
            if (m - v.mean).abs() > 1e-9 || (s - v.std).abs() > 1e-9 {
                return Err(format!("{} mean/std disagree with its runs", v.key()));
            }
        }
        Ok(())
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn online_seed(seed: u64, run: usize, episode: usize) -> u64 {
    mix_seed(&[seed, run as u64, episode as u64])
}

/// `runs` × `episodes` seeded episodes per variation.
pub fn eval_online(
    suite: &TaskSuite,
    planner: &PlannerKind,
    cfg: &ExecConfig,
    episodes: usize,
    runs: usize,
    seed: u64,
) -> Result<OnlineResult, EvalError> {
    planner.validate().map_err(EvalError::Planner)?;
    let jobs: Vec<(usize, usize, usize)> = (0..suite.tasks.len())
        .flat_map(|v| (0..runs).flat_map(move |r| (0..episodes).map(move |e| (v, r, e))))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(v, run, episode)| {
            let s = online_seed(seed, run, episode);
            let mut p = planner.build(s);
            let t = run_episode(&suite.tasks[v], s, p.as_mut(), cfg)?;
            Ok(EpisodeOutcome {
                run,
                episode,
                seed: s,
                status: t.status,
                planner_calls: t.planner_calls(),
                motion_steps: t.motion_steps,
            })
        })
        .collect::<Result<Vec<_>, SceneError>>()?;
    let per_variation = runs * episodes;
    let variations = suite
        .tasks
        .iter()
        .enumerate()
        .map(|(v, task)| {
            let eps = outcomes[v * per_variation..(v + 1) * per_variation].to_vec();
            let sr_runs: Vec<f64> = (0..runs)
                .map(|r| {
                    let ok = eps.iter().filter(|o| o.run == r && o.status == EpisodeStatus::Success).count();
                    if episodes == 0 { 0.0 } else { ok as f64 / episodes as f64 }
                })
                .collect();
            let (mean, std) = mean_std(&sr_runs);
            VariationResult {
                task: task.name.clone(),
                variation: task.variation,
                group: task.group.to_string(),
                sr_runs,
                mean,
                std,
                episodes: eps,
            }
        })
        .collect();
    Ok(OnlineResult { planner: planner.name().to_string(), chunk: cfg.chunk.size(), episodes, runs, seed, variations })
}

/// Anything `report` can render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalReport {
    Offline(OfflineResult),
    Online(OnlineResult),
}

impl EvalReport {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            EvalReport::Offline(r) => r.validate(),
            EvalReport::Online(r) => r.validate(),
        }
    }
}
