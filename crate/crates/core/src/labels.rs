//! Object label clean-up: raw simulator names become short display names,
//! optionally prefixed with the nearest named color.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::SceneObject;

const CANONICAL_TABLE: &str = include_str!("../data/colors.json");

/// Tokens that mark helper objects or decorate names without describing them.
const NOISE_TOKENS: [&str; 2] = ["distractor", "success"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub fn squared_distance(self, other: Rgb) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| {
                let d = a as i32 - b as i32;
                (d * d) as u32
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorEntry {
    pub name: String,
    pub rgb: Rgb,
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("color table must have exactly 20 entries, found {0}")]
    TableSize(usize),
    #[error("duplicate color name '{0}'")]
    DuplicateColor(String),
    #[error("invalid color table: {0}")]
    Json(#[from] serde_json::Error),
    #[error("raw name '{0}' has no displayable part")]
    NoDisplayName(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorTable {
    colors: Vec<ColorEntry>,
}

impl ColorTable {
    pub fn new(colors: Vec<ColorEntry>) -> Result<Self, LabelError> {
        if colors.len() != 20 {
            return Err(LabelError::TableSize(colors.len()));
        }
        for (i, c) in colors.iter().enumerate() {
            if colors[..i].iter().any(|o| o.name == c.name) {
                return Err(LabelError::DuplicateColor(c.name.clone()));
            }
        }
        Ok(Self { colors })
    }

    /// The shipped table of twenty web-color values.
    pub fn canonical() -> &'static ColorTable {
        static TABLE: OnceLock<ColorTable> = OnceLock::new();
        TABLE.get_or_init(|| ColorTable::from_json(CANONICAL_TABLE).expect("shipped color table is valid"))
    }

    pub fn from_json(s: &str) -> Result<Self, LabelError> {
        let t: ColorTable = serde_json::from_str(s)?;
        ColorTable::new(t.colors)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("color table serializes")
    }

    pub fn entries(&self) -> &[ColorEntry] {
        &self.colors
    }

    pub fn get(&self, name: &str) -> Option<Rgb> {
        self.colors.iter().find(|c| c.name == name).map(|c| c.rgb)
    }

    /// Entry minimizing squared RGB distance; the earliest entry wins ties.
    pub fn nearest(&self, rgb: Rgb) -> &str {
        let mut best = &self.colors[0];
        let mut best_d = rgb.squared_distance(best.rgb);
        for c in &self.colors[1..] {
            let d = rgb.squared_distance(c.rgb);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        &best.name
    }
}

pub fn nearest_color(rgb: Rgb) -> &'static str {
    ColorTable::canonical().nearest(rgb)
}

fn non_letters() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[^a-z]+").unwrap())
}

/// Strips digits, separators and helper-marker tokens from a raw object name.
/// Returns `None` when nothing descriptive is left.
pub fn refine_name(raw: &str) -> Option<String> {
    let lowered = raw.to_lowercase();
    let spaced = non_letters().replace_all(&lowered, " ");
    let kept: Vec<&str> = spaced
        .split_whitespace()
        .filter(|tok| !NOISE_TOKENS.contains(tok))
        .collect();
    if kept.is_empty() {
        None
    } else {
        Some(kept.join(" "))
    }
}

pub fn display_name_for(raw: &str, color: Rgb, color_varies: bool) -> Result<String, LabelError> {
    let refined = refine_name(raw).ok_or_else(|| LabelError::NoDisplayName(raw.to_string()))?;
    if color_varies {
        Ok(format!("{} {}", nearest_color(color), refined))
    } else {
        Ok(refined)
    }
}

pub fn display_name(object: &SceneObject) -> Result<String, LabelError> {
    display_name_for(&object.raw_name, object.color, object.color_varies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent brute force: full scan, strict improvement keeps the first minimum.
    fn brute_nearest(rgb: [i64; 3]) -> String {
        let table = [
            ("red", [255, 0, 0]),
            ("maroon", [128, 0, 0]),
            ("lime", [0, 255, 0]),
            ("green", [0, 128, 0]),
            ("blue", [0, 0, 255]),
            ("navy", [0, 0, 128]),
            ("yellow", [255, 255, 0]),
            ("cyan", [0, 255, 255]),
            ("magenta", [255, 0, 255]),
            ("silver", [192, 192, 192]),
            ("gray", [128, 128, 128]),
            ("orange", [255, 165, 0]),
            ("olive", [128, 128, 0]),
            ("purple", [128, 0, 128]),
            ("teal", [0, 128, 128]),
            ("azure", [240, 255, 255]),
            ("violet", [238, 130, 238]),
            ("rose", [255, 0, 127]),
            ("black", [0, 0, 0]),
            ("white", [255, 255, 255]),
        ];
        let dists: Vec<i64> = table
            .iter()
            .map(|(_, c)| (0..3).map(|i| (rgb[i] - c[i]).pow(2)).sum())
            .collect();
        let min = *dists.iter().min().unwrap();
        table[dists.iter().position(|d| *d == min).unwrap()].0.to_string()
    }

    #[test]
    fn canonical_table_order_and_size() {
        let names: Vec<&str> = ColorTable::canonical().entries().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "red", "maroon", "lime", "green", "blue", "navy", "yellow", "cyan", "magenta", "silver",
                "gray", "orange", "olive", "purple", "teal", "azure", "violet", "rose", "black", "white"
            ]
        );
    }

    #[test]
    fn refine_examples() {
        assert_eq!(refine_name("distractor0_cup").as_deref(), Some("cup"));
        assert_eq!(refine_name("cup").as_deref(), Some("cup"));
        assert_eq!(refine_name("success"), None);
        assert_eq!(refine_name("1_jar").as_deref(), Some("jar"));
        assert_eq!(refine_name("  Light_Bulb2 ").as_deref(), Some("light bulb"));
    }

    #[test]
    fn nearest_examples() {
        assert_eq!(nearest_color(Rgb([255, 0, 0])), "red");
        assert_eq!(nearest_color(Rgb([0, 0, 0])), "black");
        assert_eq!(brute_nearest([250, 10, 5]), "red");
        assert_eq!(nearest_color(Rgb([250, 10, 5])), "red");
    }

    #[test]
    fn nearest_is_identity_on_table() {
        for c in ColorTable::canonical().entries() {
            assert_eq!(nearest_color(c.rgb), c.name);
        }
    }

    #[test]
    fn display_examples() {
        assert_eq!(display_name_for("block", Rgb([255, 0, 0]), true).unwrap(), "red block");
        assert_eq!(display_name_for("drawer", Rgb([10, 10, 10]), false).unwrap(), "drawer");
        assert_eq!(format!("{} jar", brute_nearest([0, 0, 128])), "navy jar");
        assert_eq!(display_name_for("1_jar", Rgb([0, 0, 128]), true).unwrap(), "navy jar");
        assert!(matches!(
            display_name_for("success", Rgb([0, 0, 0]), true),
            Err(LabelError::NoDisplayName(_))
        ));
    }

    #[test]
    fn table_json_roundtrip_and_validation() {
        let t = ColorTable::canonical();
        assert_eq!(&ColorTable::from_json(&t.to_json()).unwrap(), t);
        let mut short = t.entries().to_vec();
        short.pop();
        assert!(matches!(ColorTable::new(short), Err(LabelError::TableSize(19))));
        let mut dup = t.entries().to_vec();
        dup[1].name = "red".into();
        assert!(matches!(ColorTable::new(dup), Err(LabelError::DuplicateColor(_))));
    }

    proptest! {
        #[test]
        fn nearest_matches_brute_force(r in 0u8.., g in 0u8.., b in 0u8..) {
            prop_assert_eq!(nearest_color(Rgb([r, g, b])), brute_nearest([r as i64, g as i64, b as i64]));
        }

        #[test]
        fn refine_is_idempotent(raw in "[a-zA-Z0-9_ ]{0,24}") {
            let once = refine_name(&raw);
            let twice = once.as_deref().and_then(refine_name);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn display_names_are_clean(raw in "(distractor|success|[0-9]|_|cup|block|jar| ){1,8}", r in 0u8.., varies: bool) {
            if let Ok(name) = display_name_for(&raw, Rgb([r, 0, 0]), varies) {
                prop_assert!(!name.chars().any(|c| c.is_ascii_digit()));
                prop_assert!(!name.split_whitespace().any(|t| t == "distractor" || t == "success"));
            }
        }
    }
}
