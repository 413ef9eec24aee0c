use super::{
    Action, ActionSchema, GroundedPlan, GroundedReference, PlanError, Slot, CLOSE_REF, OPEN_REF, SEG,
};
use crate::mask::BinaryMask;

/// Words that may sit between the action phrase and its references.
const CONNECTIVES: [&str; 8] = ["to", "on", "onto", "into", "in", "at", "and", "from"];
const ARTICLES: [&str; 3] = ["the", "a", "an"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Token {
    Open,
    Close,
    Seg,
}

/// Splits `text` into the leading action text, the reference spans and the
/// filler text after each reference.
fn scan(text: &str) -> Result<(String, Vec<String>, Vec<String>), PlanError> {
    let mut pieces: Vec<(usize, Token)> = Vec::new();
    for (tok, kind) in [(OPEN_REF, Token::Open), (CLOSE_REF, Token::Close), (SEG, Token::Seg)] {
        pieces.extend(text.match_indices(tok).map(|(i, _)| (i, kind)));
    }
    pieces.sort_by_key(|p| p.0);
    let token_len = |t: Token| match t {
        Token::Open => OPEN_REF.len(),
        Token::Close => CLOSE_REF.len(),
        Token::Seg => SEG.len(),
    };

    let mut prefix: Option<String> = None;
    let mut spans = Vec::new();
    let mut fillers = Vec::new();
    let mut cursor = 0;
    let mut open_at: Option<usize> = None;
    let mut expect_seg = false;
    for (pos, tok) in pieces {
        let between = &text[cursor..pos];
        match tok {
            Token::Open => {
                if open_at.is_some() {
                    return Err(PlanError::MalformedMarkup("nested <p>".into()));
                }
                if expect_seg {
                    return Err(PlanError::MalformedMarkup("</p> not followed by <seg>".into()));
                }
                match prefix {
                    None => prefix = Some(between.to_string()),
                    Some(_) => fillers.push(between.to_string()),
                }
                open_at = Some(pos + OPEN_REF.len());
            }
            Token::Close => {
                let start = open_at.take().ok_or_else(|| PlanError::MalformedMarkup("</p> without <p>".into()))?;
                spans.push(text[start..pos].trim().to_string());
                expect_seg = true;
            }
            Token::Seg => {
                if !expect_seg {
                    return Err(PlanError::MalformedMarkup("<seg> without a preceding reference".into()));
                }
                if !between.trim().is_empty() {
                    return Err(PlanError::MalformedMarkup("</p> not followed by <seg>".into()));
                }
                expect_seg = false;
            }
        }
        cursor = pos + token_len(tok);
    }
    if open_at.is_some() {
        return Err(PlanError::MalformedMarkup("unclosed <p>".into()));
    }
    if expect_seg {
        return Err(PlanError::MalformedMarkup("</p> not followed by <seg>".into()));
    }
    let tail = text[cursor..].to_string();
    match prefix {
        None => Ok((tail, spans, fillers)),
        Some(p) => {
            fillers.push(tail);
            Ok((p, spans, fillers))
        }
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|w| w.trim_end_matches(['.', ',']).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Longest vocabulary phrase at the start of `text`, ignoring articles; any
/// remaining words must be connectives.
fn match_action(text: &str) -> Result<Action, PlanError> {
    let ws: Vec<String> = words(text).into_iter().filter(|w| !ARTICLES.contains(&w.as_str())).collect();
    let mut best: Option<(usize, Action)> = None;
    for a in Action::ALL {
        let phrase: Vec<&str> = a.phrase().split(' ').collect();
        if ws.len() >= phrase.len()
            && ws.iter().zip(&phrase).all(|(w, p)| w == p)
            && best.is_none_or(|(n, _)| phrase.len() > n)
        {
            best = Some((phrase.len(), a));
        }
    }
    let (n, action) = best.ok_or_else(|| PlanError::UnknownAction(text.trim().to_string()))?;
    if ws[n..].iter().all(|w| CONNECTIVES.contains(&w.as_str())) {
        Ok(action)
    } else {
        Err(PlanError::UnknownAction(text.trim().to_string()))
    }
}

fn check_filler(filler: &str) -> Result<(), PlanError> {
    let ok = words(filler)
        .iter()
        .all(|w| CONNECTIVES.contains(&w.as_str()) || ARTICLES.contains(&w.as_str()));
    if ok {
        Ok(())
    } else {
        Err(PlanError::MalformedMarkup(format!("unexpected text '{}' between references", filler.trim())))
    }
}

/// Parses planner output against the action schema, binding the i-th
/// `<seg>` to the i-th mask stack.
pub fn parse_plan(text: &str, mask_stacks: &[Vec<BinaryMask>], schema: &ActionSchema) -> Result<GroundedPlan, PlanError> {
    let (action_text, spans, fillers) = scan(text)?;
    for f in &fillers {
        check_filler(f)?;
    }
    if spans.iter().any(|s| s.is_empty()) {
        return Err(PlanError::MalformedMarkup("empty reference span".into()));
    }
    let action = match_action(&action_text)?;

    let spec = schema.spec(action);
    let slots: Vec<Slot> = spec.order().collect();
    if spans.len() < spec.required.len() || spans.len() > slots.len() {
        return Err(PlanError::SlotMismatch {
            action,
            expected: if spec.optional.is_empty() {
                spec.required.len().to_string()
            } else {
                format!("{}..={}", spec.required.len(), slots.len())
            },
            found: spans.len(),
        });
    }
    if mask_stacks.len() != spans.len() {
        return Err(PlanError::MaskCountMismatch { segs: spans.len(), stacks: mask_stacks.len() });
    }

    let mut plan = GroundedPlan::new(action, None, None);
    for ((slot, span), masks) in slots.into_iter().zip(spans).zip(mask_stacks) {
        let r = Some(GroundedReference::new(span, masks.clone()));
        match slot {
            Slot::Object => plan.object = r,
            Slot::Location => plan.location = r,
        }
    }
    Ok(plan)
}
