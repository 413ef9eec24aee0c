//! Dataset construction from oracle episodes: grounded-planning tuples,
//! multi-view referring expressions and composed long-horizon sequences.

mod io;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    decode_f32_grid, decode_u32_grid, encode_f32_grid, encode_u32_grid, read_dataset, read_manifest, visit_plan_records,
    write_dataset, DatasetWriter, GRID_HEADER,
};

use crate::executor::{run_episode, EpisodeStatus, EpisodeTrace, ExecConfig, OraclePlanner, ParseOutcome};
use crate::mask::BinaryMask;
use crate::math::mix_seed;
use crate::plan::{history_text, GroundedPlan};
use crate::scene::{render_views, CameraModel, CameraRig, GripperState, Scene, SceneError, TaskScript, TaskSuite, ViewSet};

const JOINERS: &str = include_str!("../../data/joiners.json");

#[derive(Debug, Error)]
pub enum DataError {
    #[error("oracle episode failed for {task} with seed {seed}: {reason}")]
    Oracle { task: String, seed: u64, reason: String },
    #[error("trace has no planner calls")]
    EmptyTrace,
    #[error("cannot compose two episodes of the same variation {0}")]
    SameVariation(String),
    #[error("long-horizon composition needs at least two task variations")]
    TooFewVariations,
    #[error("task {0} is not in the suite")]
    UnknownTask(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("{file}: {source}")]
    Io { file: String, source: std::io::Error },
    #[error("{file}: byte {offset}: {message}")]
    Corrupt { file: String, offset: u64, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Plan,
    Refexp,
    Long,
}

impl std::str::FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plan" => Ok(DatasetKind::Plan),
            "refexp" => Ok(DatasetKind::Refexp),
            "long" => Ok(DatasetKind::Long),
            _ => Err(format!("unknown dataset kind {s:?} (expected plan, refexp or long)")),
        }
    }
}

/// Ground-truth plan for one keystep of an episode. The views live in binary
/// files on disk, everything else in the record's JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeystepRecord {
    pub episode: String,
    pub t: usize,
    /// Planner-call index within the source episode.
    pub step: usize,
    pub task: String,
    pub variation: u32,
    pub seed: u64,
    pub instruction: String,
    pub history: Vec<String>,
    pub gt_plan: GroundedPlan,
    pub object_inventory: Vec<(u32, String)>,
    pub cameras: Vec<CameraModel>,
    /// Simulator state at the keystep, so privileged planners can be replayed.
    pub scene: Scene,
    pub gripper: GripperState,
    #[serde(skip)]
    pub views: ViewSet,
}

impl KeystepRecord {
    pub fn key(&self) -> String {
        format!("{}/v{}", self.task, self.variation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefExpRecord {
    pub episode: String,
    pub t: usize,
    pub task: String,
    pub variation: u32,
    pub object_id: u32,
    pub query: String,
    pub gt_masks: Vec<BinaryMask>,
    pub cameras: Vec<CameraModel>,
    #[serde(skip)]
    pub views: ViewSet,
}

pub fn refexp_query(display_name: &str) -> String {
    format!("Please segment one of the {display_name}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub kind: DatasetKind,
    pub suite_hash: String,
    pub seed: u64,
    pub episodes_per_variation: usize,
    /// Record count per task variation (or variation pair for `long`).
    pub counts: BTreeMap<String, usize>,
    /// Record files, relative to the dataset root.
    pub files: Vec<String>,
    pub episodes: usize,
    pub mean_keysteps_per_episode: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Plan(Vec<KeystepRecord>),
    Refexp(Vec<RefExpRecord>),
}

impl Records {
    pub fn len(&self) -> usize {
        match self {
            Records::Plan(r) => r.len(),
            Records::Refexp(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Records,
}

/// Planner-call indices at which a new plan was issued.
pub fn extract_keysteps(trace: &EpisodeTrace) -> Result<Vec<usize>, DataError> {
    if trace.steps.is_empty() {
        return Err(DataError::EmptyTrace);
    }
    Ok(trace.keysteps())
}

pub fn episode_id(task: &TaskScript, index: usize) -> String {
    format!("{}-v{}-e{index:04}", task.name, task.variation)
}

/// Seed of episode `index` of a variation. The scene sampler mixes in the task
/// itself, so one stream per index is enough.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    mix_seed(&[seed, index as u64])
}

/// Runs the oracle and fails unless the episode succeeds.
pub fn oracle_episode(task: &TaskScript, seed: u64, cfg: &ExecConfig) -> Result<EpisodeTrace, DataError> {
    let trace = run_episode(task, seed, &mut OraclePlanner, cfg)?;
    if trace.status != EpisodeStatus::Success {
        return Err(DataError::Oracle {
            task: task.key(),
            seed,
            reason: format!("status {:?} after {} motion steps", trace.status, trace.motion_steps),
        });
    }
    Ok(trace)
}

/// One record per keystep of an oracle trace, re-rendering the views from the
/// recorded state and re-deriving the plan with its instance-id masks.
pub fn keystep_records(
    episode: &str,
    task: &TaskScript,
    trace: &EpisodeTrace,
    rig: &CameraRig,
) -> Result<Vec<KeystepRecord>, DataError> {
    let oracle_err = |reason: String| DataError::Oracle { task: task.key(), seed: trace.seed, reason };
    let mut out: Vec<KeystepRecord> = Vec::new();
    for (t, k) in extract_keysteps(trace)?.into_iter().enumerate() {
        let step = &trace.steps[k];
        let ParseOutcome::Ok { history_text: issued, .. } = &step.parse else {
            return Err(oracle_err(format!("keystep {k} did not parse")));
        };
        let cameras = rig.resolve(&step.gripper);
        let views = render_views(&step.scene, &cameras);
        let gt_plan = crate::executor::oracle_plan(&step.scene, &step.gripper, task, &views)?;
        if &history_text(&gt_plan) != issued {
            return Err(oracle_err(format!("replayed plan at step {k} differs from the trace")));
        }
        let history = match out.last() {
            Some(prev) => {
                let mut h = prev.history.clone();
                h.push(history_text(&prev.gt_plan));
                h
            }
            None => Vec::new(),
        };
        out.push(KeystepRecord {
            episode: episode.to_string(),
            t,
            step: k,
            task: task.name.clone(),
            variation: task.variation,
            seed: trace.seed,
            instruction: trace.instruction.clone(),
            history,
            gt_plan,
            object_inventory: step.scene.inventory().into_iter().filter(|(id, _)| views.visible(*id)).collect(),
            cameras,
            scene: step.scene.clone(),
            gripper: step.gripper.clone(),
            views,
        });
    }
    Ok(out)
}

/// One query per inventory object visible in at least one view.
pub fn refexp_records(keystep: &KeystepRecord) -> Vec<RefExpRecord> {
    keystep
        .object_inventory
        .iter()
        .filter(|(id, _)| keystep.views.visible(*id))
        .map(|(id, name)| RefExpRecord {
            episode: keystep.episode.clone(),
            t: keystep.t,
            task: keystep.task.clone(),
            variation: keystep.variation,
            object_id: *id,
            query: refexp_query(name),
            gt_masks: keystep.views.masks_of(*id),
            cameras: keystep.cameras.clone(),
            views: keystep.views.clone(),
        })
        .collect()
}

fn episode_records(task: &TaskScript, i: usize, seed: u64, cfg: &ExecConfig) -> Result<(EpisodeTrace, Vec<KeystepRecord>), DataError> {
    let trace = oracle_episode(task, episode_seed(seed, i), cfg)?;
    let records = keystep_records(&episode_id(task, i), task, &trace, &cfg.rig)?;
    Ok((trace, records))
}

fn oracle_records(
    suite: &TaskSuite,
    episodes: usize,
    seed: u64,
    cfg: &ExecConfig,
) -> Result<Vec<(EpisodeTrace, Vec<KeystepRecord>)>, DataError> {
    let jobs: Vec<(&TaskScript, usize)> =
        suite.tasks.iter().flat_map(|t| (0..episodes).map(move |i| (t, i))).collect();
    jobs.par_iter().map(|&(task, i)| episode_records(task, i, seed, cfg)).collect()
}

fn manifest(kind: DatasetKind, suite: &TaskSuite, episodes: usize, seed: u64, keysteps: usize, n_episodes: usize) -> DatasetManifest {
    DatasetManifest {
        kind,
        suite_hash: suite.hash(),
        seed,
        episodes_per_variation: episodes,
        counts: BTreeMap::new(),
        files: Vec::new(),
        episodes: n_episodes,
        mean_keysteps_per_episode: if n_episodes == 0 { 0.0 } else { keysteps as f64 / n_episodes as f64 },
    }
}

pub fn gen_plan_dataset(suite: &TaskSuite, episodes: usize, seed: u64, cfg: &ExecConfig) -> Result<Dataset, DataError> {
    let records: Vec<KeystepRecord> = oracle_records(suite, episodes, seed, cfg)?.into_iter().flat_map(|(_, r)| r).collect();
    let mut m = manifest(DatasetKind::Plan, suite, episodes, seed, records.len(), suite.tasks.len() * episodes);
    for r in &records {
        *m.counts.entry(r.key()).or_default() += 1;
    }
    m.files = records.iter().map(io::record_file_plan).collect();
    Ok(Dataset { manifest: m, records: Records::Plan(records) })
}

pub fn gen_refexp_dataset(suite: &TaskSuite, episodes: usize, seed: u64, cfg: &ExecConfig) -> Result<Dataset, DataError> {
    let keysteps: Vec<KeystepRecord> =
        oracle_records(suite, episodes, seed, cfg)?.into_iter().flat_map(|(_, r)| r).collect();
    let records: Vec<RefExpRecord> = keysteps.iter().flat_map(refexp_records).collect();
    let mut m = manifest(DatasetKind::Refexp, suite, episodes, seed, keysteps.len(), suite.tasks.len() * episodes);
    for r in &records {
        *m.counts.entry(format!("{}/v{}", r.task, r.variation)).or_default() += 1;
    }
    m.files = records.iter().map(io::record_file_refexp).collect();
    Ok(Dataset { manifest: m, records: Records::Refexp(records) })
}

fn joiners() -> Vec<String> {
    serde_json::from_str(JOINERS).expect("shipped joiner table is valid")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Joins two instructions with the template at `seed mod 4`.
pub fn join_instructions(a: &str, b: &str, seed: u64) -> String {
    let table = joiners();
    let template = &table[(seed % table.len() as u64) as usize];
    let clean = |s: &str| s.trim().trim_end_matches('.').to_string();
    capitalize(&template.replace("{a}", &clean(a)).replace("{b}", &clean(b)))
}

/// Concatenates two episodes' keystep records under a joint instruction. B's
/// histories are prefixed with all of A's plans; views stay with their episode.
pub fn compose_long_horizon(a: &[KeystepRecord], b: &[KeystepRecord], seed: u64) -> Result<Vec<KeystepRecord>, DataError> {
    let (Some(fa), Some(fb)) = (a.first(), b.first()) else {
        return Err(DataError::EmptyTrace);
    };
    if fa.key() == fb.key() {
        return Err(DataError::SameVariation(fa.key()));
    }
    let joint = join_instructions(&fa.instruction, &fb.instruction, seed);
    let episode = format!("{}+{}", fa.episode, fb.episode);
    let a_plans: Vec<String> = a.iter().map(|r| history_text(&r.gt_plan)).collect();
    let mut out = Vec::with_capacity(a.len() + b.len());
    for r in a {
        out.push(KeystepRecord { episode: episode.clone(), instruction: joint.clone(), ..r.clone() });
    }
    for r in b {
        let mut history = a_plans.clone();
        history.extend(r.history.iter().cloned());
        out.push(KeystepRecord {
            episode: episode.clone(),
            t: a.len() + r.t,
            instruction: joint.clone(),
            history,
            ..r.clone()
        });
    }
    Ok(out)
}

/// Long-horizon records from two oracle traces of different variations.
pub fn gen_long_horizon(
    suite: &TaskSuite,
    ep_a: &EpisodeTrace,
    ep_b: &EpisodeTrace,
    seed: u64,
    rig: &CameraRig,
) -> Result<Vec<KeystepRecord>, DataError> {
    if ep_a.key() == ep_b.key() {
        return Err(DataError::SameVariation(ep_a.key()));
    }
    let records = |t: &EpisodeTrace| -> Result<Vec<KeystepRecord>, DataError> {
        let task = suite.find(&t.task, t.variation).ok_or_else(|| DataError::UnknownTask(t.key()))?;
        keystep_records(&format!("{}-s{}", t.key().replace('/', "-"), t.seed), task, t, rig)
    };
    compose_long_horizon(&records(ep_a)?, &records(ep_b)?, seed)
}

/// As many composed pairs as there are source episodes, each joining two
/// randomly drawn episodes of different variations.
pub fn gen_long_dataset(suite: &TaskSuite, episodes: usize, seed: u64, cfg: &ExecConfig) -> Result<Dataset, DataError> {
    let n = suite.tasks.len() * episodes;
    if n > 0 && suite.tasks.len() < 2 {
        return Err(DataError::TooFewVariations);
    }
    let sources = oracle_records(suite, episodes, seed, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x10_46]));
    let mut records = Vec::new();
    let mut m = manifest(DatasetKind::Long, suite, episodes, seed, 0, n);
    for pair in 0..n {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        // Redraw within the other variations only.
        loop {
            j = (j + 1) % n;
            if sources[j].0.key() != sources[i].0.key() {
                break;
            }
        }
        let joined = compose_long_horizon(&sources[i].1, &sources[j].1, mix_seed(&[seed, pair as u64]))?;
        *m.counts.entry(format!("{}+{}", sources[i].0.key(), sources[j].0.key())).or_default() += joined.len();
        records.extend(joined);
    }
    m.mean_keysteps_per_episode = if n == 0 { 0.0 } else { records.len() as f64 / n as f64 };
    m.files = records.iter().map(io::record_file_plan).collect();
    Ok(Dataset { manifest: m, records: Records::Plan(records) })
}

/// Generates straight to disk, holding one episode's records at a time for
/// the plan and refexp kinds. Output is identical to `write_dataset` of the
/// in-memory generators.
pub fn generate_to_dir(
    kind: DatasetKind,
    suite: &TaskSuite,
    episodes: usize,
    seed: u64,
    cfg: &ExecConfig,
    dir: &std::path::Path,
) -> Result<DatasetManifest, DataError> {
    if kind == DatasetKind::Long {
        let data = gen_long_dataset(suite, episodes, seed, cfg)?;
        write_dataset(&data, dir)?;
        return Ok(data.manifest);
    }
    let mut w = DatasetWriter::create(dir)?;
    let mut m = manifest(kind, suite, episodes, seed, 0, suite.tasks.len() * episodes);
    let mut keysteps = 0;
    for task in &suite.tasks {
        for i in 0..episodes {
            let (_, records) = episode_records(task, i, seed, cfg)?;
            keysteps += records.len();
            for r in &records {
                if kind == DatasetKind::Plan {
                    w.plan(r)?;
                    m.files.push(io::record_file_plan(r));
                    *m.counts.entry(r.key()).or_default() += 1;
                } else {
                    for q in refexp_records(r) {
                        w.refexp(&q)?;
                        m.files.push(io::record_file_refexp(&q));
                        *m.counts.entry(r.key()).or_default() += 1;
                    }
                }
            }
        }
    }
    if m.episodes > 0 {
        m.mean_keysteps_per_episode = keysteps as f64 / m.episodes as f64;
    }
    w.finish(&m)?;
    Ok(m)
}

pub fn generate(kind: DatasetKind, suite: &TaskSuite, episodes: usize, seed: u64, cfg: &ExecConfig) -> Result<Dataset, DataError> {
    match kind {
        DatasetKind::Plan => gen_plan_dataset(suite, episodes, seed, cfg),
        DatasetKind::Refexp => gen_refexp_dataset(suite, episodes, seed, cfg),
        DatasetKind::Long => gen_long_dataset(suite, episodes, seed, cfg),
    }
}
