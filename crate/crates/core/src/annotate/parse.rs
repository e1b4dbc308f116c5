//! Reply parsing and the mapping onto model attributes.

use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;

use super::prompts::{block_index, block_of_identifier, BLOCKS};
use super::AnnotateError;
use crate::frame::us::STATE_NAMES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StateResult {
    /// 0-based index into the state list.
    State(u32),
    NotFromUs,
    Unresolved,
}

impl StateResult {
    pub fn label(&self) -> String {
        match self {
            StateResult::State(i) => STATE_NAMES[*i as usize].to_string(),
            StateResult::NotFromUs => "not-from-US".into(),
            StateResult::Unresolved => "unresolved".into(),
        }
    }
}

const DC: u32 = 8;

fn state_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let mut names: Vec<&str> = STATE_NAMES.to_vec();
        names.sort_by_key(|n| std::cmp::Reverse(n.len()));
        let alts: Vec<String> = names.iter().map(|n| regex::escape(n).replace(' ', r"\s+")).collect();
        // DC spellings come first so they win over the state of Washington
        let pattern = format!(r"(?i)\b(?:(washington,?\s*d\.?\s?c\b|washington\s+dc\b)|({}))\b", alts.join("|"));
        Regex::new(&pattern).expect("valid state pattern")
    })
}

/// State named in a reply. "Not from US" wins; otherwise the distinct
/// states matched (whole words, longest first, case-insensitive) must be
/// exactly one.
pub fn parse_location_answer(text: &str) -> StateResult {
    if text.to_lowercase().contains("not from us") {
        return StateResult::NotFromUs;
    }
    let mut found: Option<u32> = None;
    for cap in state_regex().captures_iter(text) {
        let idx = if cap.get(1).is_some() {
            DC
        } else {
            let m = cap.get(2).expect("one alternative matched").as_str();
            let norm = m.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
            STATE_NAMES.iter().position(|s| s.to_lowercase() == norm).expect("matched a listed name") as u32
        };
        match found {
            None => found = Some(idx),
            Some(f) if f == idx => {}
            Some(_) => return StateResult::Unresolved,
        }
    }
    found.map_or(StateResult::Unresolved, StateResult::State)
}

/// Model-facing fields derived from the chosen identifiers. Levels are
/// 0-based in the order of the application schema.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MappedFields {
    pub gender: Option<u32>,
    pub ethnicity: Option<u32>,
    /// Six voting-age bins; `None` for under-18 or missing.
    pub age: Option<u32>,
    pub college_degree: Option<u32>,
    pub household_income: Option<u32>,
    /// R, D, other, stay home.
    pub vote2016: Option<u32>,
    /// R, D, L, G, stay home.
    pub choice: Option<usize>,
    pub excluded: Option<String>,
}

/// Parsed demographic reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DemoAnswer {
    /// Chosen identifier per block, in canonical block order.
    pub identifiers: Vec<Option<String>>,
    pub mapped: MappedFields,
}

impl DemoAnswer {
    pub fn get(&self, key: &str) -> Option<&str> {
        block_index(key).and_then(|i| self.identifiers[i].as_deref())
    }

    pub fn parsed_blocks(&self) -> usize {
        self.identifiers.iter().filter(|i| i.is_some()).count()
    }
}

fn identifier_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b([EASMQHRLTV][0-9]+)\b").expect("valid identifier pattern"))
}

fn number(id: &str) -> u32 {
    id[1..].parse().expect("identifier digits")
}

/// Scans a reply for known identifiers. A block naming two different
/// identifiers is left missing; a reply with no usable block is rejected.
pub fn parse_demo_answer(text: &str) -> Result<DemoAnswer, AnnotateError> {
    let mut seen: Vec<Vec<String>> = vec![Vec::new(); BLOCKS.len()];
    for m in identifier_regex().find_iter(text) {
        let id = m.as_str();
        if let Some(b) = block_of_identifier(id) {
            if !seen[b].iter().any(|s| s == id) {
                seen[b].push(id.to_string());
            }
        }
    }
    let identifiers: Vec<Option<String>> =
        seen.into_iter().map(|v| if v.len() == 1 { v.into_iter().next() } else { None }).collect();
    if identifiers.iter().all(|i| i.is_none()) {
        return Err(AnnotateError::NoBlocks);
    }
    let get = |key: &str| identifiers[block_index(key).expect("known block")].as_deref();
    let mut mapped = MappedFields {
        gender: get("sex").map(|s| number(s) - 1),
        ethnicity: get("ethnicity").map(|s| number(s) - 1),
        college_degree: get("education").map(|s| u32::from(s == "Q3")),
        household_income: get("income").map(|s| number(s) - 1),
        vote2016: get("vote2016").map(|s| match s {
            "L2" => 0,
            "L3" => 1,
            "L4" | "L5" => 2,
            _ => 3,
        }),
        choice: get("vote2020").map(|s| match s {
            "V2" => 0,
            "V3" => 1,
            "V4" => 2,
            "V5" => 3,
            _ => 4,
        }),
        ..MappedFields::default()
    };
    match get("age") {
        Some("A1") => mapped.excluded = Some("under-18".into()),
        Some(a) => mapped.age = Some(number(a) - 2),
        None => {}
    }
    Ok(DemoAnswer { identifiers, mapped })
}
