use serde::{Deserialize, Serialize};

use super::{PlanError, SPECIAL_TOKENS};

pub const IMAGE_TOKEN: &str = "<image>";

pub const SYSTEM_PREAMBLE: &str = "You are a skilled assistant for robot task planning in tabletop environments. \
You can perform the following actions: grasp, move grasped object, rotate grasped object, push down, push forward, and release.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    views: usize,
    instruction: String,
    history: Vec<String>,
}

impl PromptSpec {
    pub fn new(views: usize, instruction: impl Into<String>, history: Vec<String>) -> Result<Self, PlanError> {
        if views == 0 {
            return Err(PlanError::InvalidPrompt("at least one view is required".into()));
        }
        if let Some(h) = history.iter().find(|h| SPECIAL_TOKENS.iter().any(|t| h.contains(t))) {
            return Err(PlanError::InvalidPrompt(format!("history entry '{h}' contains markup")));
        }
        Ok(PromptSpec { views, instruction: instruction.into(), history })
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }

    pub fn history(&self) -> &[String] {
        &self.history
    }
}

/// Planner input text: one image placeholder per view, the fixed preamble,
/// the task, completed plans (if any) and the request for the next plan.
pub fn build_prompt(spec: &PromptSpec) -> String {
    let mut out = String::new();
    for _ in 0..spec.views {
        out.push_str(IMAGE_TOKEN);
        out.push('\n');
    }
    out.push_str(SYSTEM_PREAMBLE);
    out.push_str(" Task: ");
    out.push_str(&spec.instruction);
    out.push('.');
    if !spec.history.is_empty() {
        out.push_str(" You have completed the following action plans: ");
        out.push_str(&spec.history.join(". "));
        out.push('.');
    }
    out.push_str(" Please generate the next action plan.");
    out
}
