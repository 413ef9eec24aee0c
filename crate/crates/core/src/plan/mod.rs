//! The interleaved plan language: prompts in, `<p> ... </p><seg>` plans out.

mod parse;
mod prompt;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;

pub use parse::parse_plan;
pub use prompt::{build_prompt, PromptSpec, SYSTEM_PREAMBLE};

pub const OPEN_REF: &str = "<p>";
pub const CLOSE_REF: &str = "</p>";
pub const SEG: &str = "<seg>";
pub const SPECIAL_TOKENS: [&str; 3] = [OPEN_REF, CLOSE_REF, SEG];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("unknown action in '{0}'")]
    UnknownAction(String),
    #[error("malformed markup: {0}")]
    MalformedMarkup(String),
    #[error("action '{action}' takes {expected} reference(s), found {found}")]
    SlotMismatch { action: Action, expected: String, found: usize },
    #[error("{segs} <seg> token(s) but {stacks} mask stack(s)")]
    MaskCountMismatch { segs: usize, stacks: usize },
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

impl PlanError {
    /// Stable short name of the error class.
    pub fn class(&self) -> &'static str {
        match self {
            PlanError::UnknownAction(_) => "unknown_action",
            PlanError::MalformedMarkup(_) => "malformed_markup",
            PlanError::SlotMismatch { .. } => "slot_mismatch",
            PlanError::MaskCountMismatch { .. } => "mask_count_mismatch",
            PlanError::InvalidPrompt(_) => "invalid_prompt",
            PlanError::InvalidPlan(_) => "invalid_plan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "grasp")]
    Grasp,
    #[serde(rename = "move grasped object")]
    MoveGraspedObject,
    #[serde(rename = "rotate grasped object")]
    RotateGraspedObject,
    #[serde(rename = "push down")]
    PushDown,
    #[serde(rename = "push forward")]
    PushForward,
    #[serde(rename = "release")]
    Release,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::Grasp,
        Action::MoveGraspedObject,
        Action::RotateGraspedObject,
        Action::PushDown,
        Action::PushForward,
        Action::Release,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            Action::Grasp => "grasp",
            Action::MoveGraspedObject => "move grasped object",
            Action::RotateGraspedObject => "rotate grasped object",
            Action::PushDown => "push down",
            Action::PushForward => "push forward",
            Action::Release => "release",
        }
    }

    pub fn from_phrase(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.phrase() == s)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Object,
    Location,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub required: Vec<Slot>,
    #[serde(default)]
    pub optional: Vec<Slot>,
}

impl SlotSpec {
    /// Slots in binding order: required first, then optional.
    pub fn order(&self) -> impl Iterator<Item = Slot> + '_ {
        self.required.iter().chain(self.optional.iter()).copied()
    }
}

/// Which reference slots each action takes. Kept as data so the assignment
/// can be changed from a JSON file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub actions: BTreeMap<Action, SlotSpec>,
}

impl Default for ActionSchema {
    fn default() -> Self {
        use Slot::*;
        let spec = |required: Vec<Slot>, optional: Vec<Slot>| SlotSpec { required, optional };
        ActionSchema {
            actions: BTreeMap::from([
                (Action::Grasp, spec(vec![Object], vec![])),
                (Action::MoveGraspedObject, spec(vec![Location], vec![])),
                (Action::RotateGraspedObject, spec(vec![], vec![])),
                (Action::PushDown, spec(vec![Object], vec![])),
                (Action::PushForward, spec(vec![Object], vec![])),
                (Action::Release, spec(vec![], vec![Location])),
            ]),
        }
    }
}

impl ActionSchema {
    pub fn from_json(s: &str) -> Result<Self, PlanError> {
        let schema: ActionSchema = serde_json::from_str(s).map_err(|e| PlanError::InvalidPlan(e.to_string()))?;
        for (a, spec) in &schema.actions {
            if spec.required.len() + spec.optional.len() > 2 {
                return Err(PlanError::InvalidPlan(format!("action '{a}' has more than two slots")));
            }
        }
        Ok(schema)
    }

    pub fn spec(&self, action: Action) -> &SlotSpec {
        static EMPTY: SlotSpec = SlotSpec { required: Vec::new(), optional: Vec::new() };
        self.actions.get(&action).unwrap_or(&EMPTY)
    }

    /// Whether a plan with the given reference presence fits the action.
    pub fn check_slots(&self, action: Action, object: bool, location: bool) -> Result<(), PlanError> {
        let spec = self.spec(action);
        let allowed = |s: Slot| spec.order().any(|x| x == s);
        let required_ok = spec.required.iter().all(|s| match s {
            Slot::Object => object,
            Slot::Location => location,
        });
        let extra_ok = (!object || allowed(Slot::Object)) && (!location || allowed(Slot::Location));
        if required_ok && extra_ok {
            Ok(())
        } else {
            Err(PlanError::SlotMismatch {
                action,
                expected: self.expected_desc(action),
                found: object as usize + location as usize,
            })
        }
    }

    fn expected_desc(&self, action: Action) -> String {
        let spec = self.spec(action);
        let lo = spec.required.len();
        let hi = lo + spec.optional.len();
        if lo == hi {
            lo.to_string()
        } else {
            format!("{lo}..={hi}")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedReference {
    pub text: String,
    /// One mask per camera, in rig order.
    pub masks: Vec<BinaryMask>,
}

impl GroundedReference {
    pub fn new(text: impl Into<String>, masks: Vec<BinaryMask>) -> Self {
        GroundedReference { text: text.into(), masks }
    }
}

/// One planning step: an action with optional object and location references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedPlan {
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<GroundedReference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<GroundedReference>,
}

impl GroundedPlan {
    pub fn new(action: Action, object: Option<GroundedReference>, location: Option<GroundedReference>) -> Self {
        GroundedPlan { action, object, location }
    }

    pub fn references(&self) -> impl Iterator<Item = (Slot, &GroundedReference)> {
        self.object
            .iter()
            .map(|r| (Slot::Object, r))
            .chain(self.location.iter().map(|r| (Slot::Location, r)))
    }

    pub fn reference(&self, slot: Slot) -> Option<&GroundedReference> {
        match slot {
            Slot::Object => self.object.as_ref(),
            Slot::Location => self.location.as_ref(),
        }
    }

    pub fn validate(&self, schema: &ActionSchema) -> Result<(), PlanError> {
        schema.check_slots(self.action, self.object.is_some(), self.location.is_some())?;
        for (_, r) in self.references() {
            if r.text.trim().is_empty() {
                return Err(PlanError::InvalidPlan("empty reference text".into()));
            }
            if SPECIAL_TOKENS.iter().any(|t| r.text.contains(t)) {
                return Err(PlanError::InvalidPlan(format!("reference '{}' contains markup", r.text)));
            }
        }
        Ok(())
    }

    /// Every reference carries `views` masks of `width`x`height`.
    pub fn check_views(&self, views: usize, width: u32, height: u32) -> Result<(), PlanError> {
        for (_, r) in self.references() {
            if r.masks.len() != views {
                return Err(PlanError::InvalidPlan(format!(
                    "reference '{}' has {} masks for {views} views",
                    r.text,
                    r.masks.len()
                )));
            }
            if r.masks.iter().any(|m| m.width() != width || m.height() != height) {
                return Err(PlanError::InvalidPlan(format!("reference '{}' mask resolution mismatch", r.text)));
            }
        }
        Ok(())
    }

    /// Mask stacks in the order their `<seg>` tokens appear in [`serialize_plan`].
    pub fn mask_stacks(&self) -> Vec<Vec<BinaryMask>> {
        self.references().map(|(_, r)| r.masks.clone()).collect()
    }
}

fn ref_markup(text: &str) -> String {
    format!("{OPEN_REF} {text} {CLOSE_REF}{SEG}")
}

/// Canonical surface form of a plan.
pub fn serialize_plan(plan: &GroundedPlan) -> String {
    let obj = plan.object.as_ref().map(|r| ref_markup(&r.text));
    let loc = plan.location.as_ref().map(|r| ref_markup(&r.text));
    let with = |head: &str, r: Option<String>| match r {
        Some(r) => format!("{head} {r}."),
        None => format!("{head}."),
    };
    match plan.action {
        Action::Grasp => with("Grasp", obj),
        Action::MoveGraspedObject => with("Move the grasped object to", loc),
        Action::RotateGraspedObject => "Rotate the grasped object.".to_string(),
        Action::PushDown => with("Push down", obj),
        Action::PushForward => with("Push forward", obj),
        Action::Release => match loc {
            Some(l) => format!("Release on {l}."),
            None => "Release.".to_string(),
        },
    }
}

fn starts_with_article(text: &str) -> bool {
    matches!(text.split_whitespace().next().map(str::to_lowercase).as_deref(), Some("the" | "a" | "an"))
}

fn with_article(text: &str) -> String {
    if starts_with_article(text) {
        text.to_string()
    } else {
        format!("the {text}")
    }
}

/// Plain-text form used in planning history: no markup, lowercase.
pub fn history_text(plan: &GroundedPlan) -> String {
    let obj = plan.object.as_ref().map(|r| r.text.trim());
    let loc = plan.location.as_ref().map(|r| r.text.trim());
    let text = match (plan.action, obj, loc) {
        (Action::Grasp, Some(o), _) => format!("grasp {}", with_article(o)),
        (Action::PushDown, Some(o), _) => format!("push down {}", with_article(o)),
        (Action::PushForward, Some(o), _) => format!("push forward {}", with_article(o)),
        (Action::MoveGraspedObject, _, Some(l)) => format!("move the grasped object to {l}"),
        (Action::RotateGraspedObject, _, _) => "rotate the grasped object".to_string(),
        (Action::Release, _, Some(l)) => format!("release on {l}"),
        (a, _, _) => a.phrase().to_string(),
    };
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Removes markup tokens from text and normalizes the remainder.
pub fn strip_markup(text: &str) -> String {
    let mut s = text.to_string();
    for t in SPECIAL_TOKENS {
        s = s.replace(t, " ");
    }
    normalize_spacing(&s)
}

fn normalize_spacing(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Comparison form for exact-match metrics: lowercase, single spaces, no
/// leading articles, no trailing period.
pub fn normalize_text(s: &str) -> String {
    let mut words: Vec<String> = s.split_whitespace().map(str::to_lowercase).collect();
    loop {
        let before = words.len();
        if let Some(last) = words.last_mut() {
            let trimmed = last.trim_end_matches('.').to_string();
            if trimmed.len() != last.len() {
                *last = trimmed;
            }
            if last.is_empty() {
                words.pop();
                continue;
            }
        }
        if matches!(words.first().map(String::as_str), Some("the" | "a" | "an")) {
            words.remove(0);
            continue;
        }
        if words.len() == before {
            break;
        }
    }
    words.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grasp(text: &str) -> GroundedPlan {
        GroundedPlan::new(Action::Grasp, Some(GroundedReference::new(text, vec![])), None)
    }

    fn move_to(text: &str) -> GroundedPlan {
        GroundedPlan::new(Action::MoveGraspedObject, None, Some(GroundedReference::new(text, vec![])))
    }

    #[test]
    fn serialize_templates() {
        assert_eq!(serialize_plan(&grasp("red block")), "Grasp <p> red block </p><seg>.");
        assert_eq!(serialize_plan(&GroundedPlan::new(Action::Release, None, None)), "Release.");
        assert_eq!(serialize_plan(&move_to("lamp")), "Move the grasped object to <p> lamp </p><seg>.");
    }

    #[test]
    fn history_examples() {
        assert_eq!(history_text(&grasp("rose light bulb")), "grasp the rose light bulb");
        assert_eq!(history_text(&GroundedPlan::new(Action::Release, None, None)), "release");
        let m = move_to("lamp");
        assert_eq!(history_text(&m), "move the grasped object to lamp");
        // Cross-check: markup-stripped canonical form gives the same text.
        let stripped = strip_markup(&serialize_plan(&m)).to_lowercase();
        assert_eq!(stripped.trim_end_matches('.').trim(), history_text(&m));
    }

    #[test]
    fn history_never_has_markup() {
        for a in Action::ALL {
            let spec = ActionSchema::default().spec(a).clone();
            let mut plan = GroundedPlan::new(a, None, None);
            for s in spec.required {
                match s {
                    Slot::Object => plan.object = Some(GroundedReference::new("Red Cup", vec![])),
                    Slot::Location => plan.location = Some(GroundedReference::new("Tray", vec![])),
                }
            }
            let h = history_text(&plan);
            assert!(SPECIAL_TOKENS.iter().all(|t| !h.contains(t)));
            assert_eq!(h, h.to_lowercase());
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_text("The Red Block."), "red block");
        assert_eq!(normalize_text("red  block"), "red block");
        assert_eq!(normalize_text("the the lamp . ."), "lamp");
        assert_eq!(normalize_text(""), "");
    }

    #[test]
    fn schema_json_roundtrip() {
        let s = ActionSchema::default();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(ActionSchema::from_json(&json).unwrap(), s);
        assert!(json.contains("move grasped object"));
    }

    #[test]
    fn release_location_is_optional() {
        let s = ActionSchema::default();
        s.check_slots(Action::Release, false, false).unwrap();
        s.check_slots(Action::Release, false, true).unwrap();
        assert!(s.check_slots(Action::Release, true, false).is_err());
        assert!(s.check_slots(Action::Grasp, false, false).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "[ a-zA-Z.]{0,30}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
        }
    }
}
