use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::ExecConfig;
use crate::plan::Action;
use crate::scene::{GripperState, MotionStep, Scene, TaskScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeStatus {
    Success,
    Failure,
    ParseFailureExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ParseOutcome {
    Ok { action: Action, history_text: String },
    Error { class: String, message: String },
}

impl ParseOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, ParseOutcome::Ok { .. })
    }
}

/// One planner call and the motion it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    /// A plan different from the previously issued one.
    pub keystep: bool,
    pub history: Vec<String>,
    pub prompt: String,
    pub raw_output: String,
    pub parse: ParseOutcome,
    /// Point counts per label.
    pub cloud: Option<BTreeMap<String, usize>>,
    pub error: Option<String>,
    pub motion: Vec<MotionStep>,
    /// State before the call.
    pub scene: Scene,
    pub gripper: GripperState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub task: String,
    pub variation: u32,
    pub seed: u64,
    pub chunk: usize,
    pub max_steps: usize,
    pub instruction: String,
    pub steps: Vec<TraceStep>,
    pub status: EpisodeStatus,
    pub motion_steps: usize,
    pub final_scene: Option<Scene>,
    pub final_gripper: Option<GripperState>,
}

/// JSONL framing: a header, one line per step, then the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Header { task: String, variation: u32, seed: u64, chunk: usize, max_steps: usize, instruction: String },
    Step(Box<TraceStep>),
    End { status: EpisodeStatus, motion_steps: usize, final_scene: Scene, final_gripper: GripperState },
}

impl EpisodeTrace {
    pub(crate) fn new(task: &TaskScript, seed: u64, cfg: &ExecConfig, instruction: String) -> Self {
        EpisodeTrace {
            task: task.name.clone(),
            variation: task.variation,
            seed,
            chunk: cfg.chunk.size(),
            max_steps: cfg.max_steps,
            instruction,
            steps: Vec::new(),
            status: EpisodeStatus::Failure,
            motion_steps: 0,
            final_scene: None,
            final_gripper: None,
        }
    }

    pub(crate) fn finish(&mut self, status: EpisodeStatus, motion_steps: usize, scene: Scene, gripper: GripperState) {
        self.status = status;
        self.motion_steps = motion_steps;
        self.final_scene = Some(scene);
        self.final_gripper = Some(gripper);
    }

    pub fn key(&self) -> String {
        format!("{}/v{}", self.task, self.variation)
    }

    pub fn planner_calls(&self) -> usize {
        self.steps.len()
    }

    pub fn success(&self) -> bool {
        self.status == EpisodeStatus::Success
    }

    /// Indices of steps that issued a new plan.
    pub fn keysteps(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| s.keystep).map(|s| s.index).collect()
    }

    /// One line per planner call, for debugging.
    pub fn describe(&self) -> String {
        let mut out = format!("{} seed {} chunk {}: {:?} after {} motion steps\n", self.key(), self.seed, self.chunk, self.status, self.motion_steps);
        for s in &self.steps {
            let what = match &s.parse {
                ParseOutcome::Ok { history_text, .. } => history_text.clone(),
                ParseOutcome::Error { class, .. } => format!("parse error ({class})"),
            };
            out.push_str(&format!(
                "  [{}]{} {} -> {} steps{}\n",
                s.index,
                if s.keystep { "*" } else { " " },
                what,
                s.motion.len(),
                s.error.as_ref().map(|e| format!(" error: {e}")).unwrap_or_default()
            ));
        }
        out
    }

    /// Structural checks that must hold for any trace.
    pub fn check_invariants(&self) -> Result<(), String> {
        let total: usize = self.steps.iter().map(|s| s.motion.len()).sum();
        if total != self.motion_steps {
            return Err(format!("motion step count {} disagrees with steps ({total})", self.motion_steps));
        }
        if self.motion_steps > self.max_steps {
            return Err(format!("{} motion steps exceed the budget of {}", self.motion_steps, self.max_steps));
        }
        if self.steps.is_empty() {
            return Err("trace has no planner calls".into());
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.index != i {
                return Err(format!("step {i} has index {}", s.index));
            }
            if s.motion.len() > self.chunk {
                return Err(format!("step {i} executed {} motion steps with chunk {}", s.motion.len(), self.chunk));
            }
        }
        Ok(())
    }

    pub fn to_lines(&self) -> Vec<TraceLine> {
        let mut lines = vec![TraceLine::Header {
            task: self.task.clone(),
            variation: self.variation,
            seed: self.seed,
            chunk: self.chunk,
            max_steps: self.max_steps,
            instruction: self.instruction.clone(),
        }];
        lines.extend(self.steps.iter().cloned().map(|s| TraceLine::Step(Box::new(s))));
        if let (Some(s), Some(g)) = (&self.final_scene, &self.final_gripper) {
            lines.push(TraceLine::End {
                status: self.status,
                motion_steps: self.motion_steps,
                final_scene: s.clone(),
                final_gripper: g.clone(),
            });
        }
        lines
    }

    pub fn from_lines(lines: Vec<TraceLine>) -> Result<Self, String> {
        let mut it = lines.into_iter();
        let Some(TraceLine::Header { task, variation, seed, chunk, max_steps, instruction }) = it.next() else {
            return Err("trace must start with a header line".into());
        };
        let mut t = EpisodeTrace {
            task,
            variation,
            seed,
            chunk,
            max_steps,
            instruction,
            steps: Vec::new(),
            status: EpisodeStatus::Failure,
            motion_steps: 0,
            final_scene: None,
            final_gripper: None,
        };
        for line in it {
            match line {
                TraceLine::Step(s) => t.steps.push(*s),
                TraceLine::End { status, motion_steps, final_scene, final_gripper } => {
                    t.finish(status, motion_steps, final_scene, final_gripper)
                }
                TraceLine::Header { .. } => return Err("duplicate header line".into()),
            }
        }
        Ok(t)
    }
}

pub fn write_trace_jsonl(trace: &EpisodeTrace, mut w: impl Write) -> std::io::Result<()> {
    for line in trace.to_lines() {
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads every trace in a JSONL stream (several episodes may be concatenated).
pub fn read_trace_jsonl(r: impl BufRead) -> Result<Vec<EpisodeTrace>, String> {
    let mut traces = Vec::new();
    let mut current: Vec<TraceLine> = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", n + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", n + 1))?;
        if matches!(parsed, TraceLine::Header { .. }) && !current.is_empty() {
            traces.push(EpisodeTrace::from_lines(std::mem::take(&mut current))?);
        }
        current.push(parsed);
    }
    if !current.is_empty() {
        traces.push(EpisodeTrace::from_lines(current)?);
    }
    Ok(traces)
}
