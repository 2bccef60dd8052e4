use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// CaSiNo allocation in units of (food, water, firewood).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct Deal {
    pub food: u32,
    pub water: u32,
    pub firewood: u32,
}

impl Deal {
    pub const fn new(food: u32, water: u32, firewood: u32) -> Self {
        Self {
            food,
            water,
            firewood,
        }
    }

    pub fn as_array(&self) -> [u32; 3] {
        [self.food, self.water, self.firewood]
    }

    /// True when the two allocations together use exactly `stock` units of
    /// every resource.
    pub fn complements(&self, other: &Deal, stock: u32) -> bool {
        self.food + other.food == stock
            && self.water + other.water == stock
            && self.firewood + other.firewood == stock
    }

    /// The remainder of `stock` per resource, if every component fits.
    pub fn complement(&self, stock: u32) -> Option<Deal> {
        Some(Deal::new(
            stock.checked_sub(self.food)?,
            stock.checked_sub(self.water)?,
            stock.checked_sub(self.firewood)?,
        ))
    }
}

impl fmt::Display for Deal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DEAL: food={}, water={}, firewood={}",
            self.food, self.water, self.firewood
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedAction {
    Utterance,
    StopChoice {
        container: String,
    },
    /// Zero-based index into the speaker's friend list.
    FriendPick {
        friend: usize,
    },
    Deal {
        deal: Deal,
    },
    FormatError {
        reason: String,
    },
}

impl ParsedAction {
    fn format_error(reason: impl Into<String>) -> Self {
        ParsedAction::FormatError {
            reason: reason.into(),
        }
    }

    pub fn is_format_error(&self) -> bool {
        matches!(self, ParsedAction::FormatError { .. })
    }
}

/// What a game accepts as a terminal action.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionGrammar {
    Ckbg {
        containers: Vec<String>,
    },
    /// Each friend as its attribute values.
    Mf {
        friends: Vec<Vec<String>>,
    },
    Casino,
}

pub const STOP_MARKER: &str = "[STOP]";

static SELECT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bSELECT:\s*(\d+)").expect("static regex"));
static DEAL_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*DEAL\s*:").expect("static regex"));
static DEAL_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*DEAL:\s*food=(\d+),\s*water=(\d+),\s*firewood=(\d+)\s*\.?\s*$")
        .expect("static regex")
});

pub fn parse_action(grammar: &ActionGrammar, text: &str) -> ParsedAction {
    match grammar {
        ActionGrammar::Ckbg { containers } => parse_stop(containers, text),
        ActionGrammar::Mf { friends } => parse_pick(friends, text),
        ActionGrammar::Casino => parse_deal(text),
    }
}

fn parse_stop(containers: &[String], text: &str) -> ParsedAction {
    let lower = text.to_lowercase();
    let Some(at) = lower.find(&STOP_MARKER.to_lowercase()) else {
        return ParsedAction::Utterance;
    };
    let tail = &lower[at + STOP_MARKER.len()..];
    let mut spans: Vec<(usize, usize, usize)> = Vec::new();
    for (id, name) in containers.iter().enumerate() {
        let needle = name.to_lowercase();
        if needle.is_empty() {
            continue;
        }
        spans.extend(
            tail.match_indices(&needle)
                .map(|(s, m)| (s, s + m.len(), id)),
        );
    }
    // Longest match: drop spans covered by a longer span of another name.
    let kept: Vec<usize> = spans
        .iter()
        .filter(|&&(s, e, id)| {
            !spans
                .iter()
                .any(|&(s2, e2, id2)| id2 != id && s2 <= s && e <= e2 && e2 - s2 > e - s)
        })
        .map(|&(_, _, id)| id)
        .collect();
    let mut ids = kept.clone();
    ids.sort_unstable();
    ids.dedup();
    match ids.as_slice() {
        [id] => ParsedAction::StopChoice {
            container: containers[*id].clone(),
        },
        [] => ParsedAction::format_error("stop without a known container"),
        _ => ParsedAction::format_error("stop names more than one container"),
    }
}

fn parse_pick(friends: &[Vec<String>], text: &str) -> ParsedAction {
    let mut indices: Vec<usize> = Vec::new();
    for cap in SELECT.captures_iter(text) {
        match cap[1].parse::<usize>() {
            Ok(n) if (1..=friends.len()).contains(&n) => indices.push(n - 1),
            _ => return ParsedAction::format_error(format!("no friend numbered {}", &cap[1])),
        }
    }
    indices.dedup();
    match indices.as_slice() {
        [one] => return ParsedAction::FriendPick { friend: *one },
        [] => {}
        _ => return ParsedAction::format_error("several friends selected"),
    }
    let lower = text.to_lowercase();
    let matching: Vec<usize> = friends
        .iter()
        .enumerate()
        .filter(|(_, values)| {
            !values.is_empty() && values.iter().all(|v| lower.contains(&v.to_lowercase()))
        })
        .map(|(i, _)| i)
        .collect();
    match matching.as_slice() {
        [one] => ParsedAction::FriendPick { friend: *one },
        [] => ParsedAction::Utterance,
        _ => ParsedAction::format_error("description matches several friends"),
    }
}

fn parse_deal(text: &str) -> ParsedAction {
    let mut deals: Vec<Deal> = Vec::new();
    for line in text.lines().filter(|l| DEAL_PREFIX.is_match(l)) {
        let Some(cap) = DEAL_LINE.captures(line) else {
            return ParsedAction::format_error(format!("malformed deal line `{}`", line.trim()));
        };
        let units: Result<Vec<u32>, _> = (1..=3).map(|i| cap[i].parse::<u32>()).collect();
        let Ok(units) = units else {
            return ParsedAction::format_error("deal quantity out of range");
        };
        let deal = Deal::new(units[0], units[1], units[2]);
        if !deals.contains(&deal) {
            deals.push(deal);
        }
    }
    match deals.as_slice() {
        [deal] => ParsedAction::Deal { deal: *deal },
        [] => ParsedAction::Utterance,
        _ => ParsedAction::format_error("conflicting deal lines"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckbg() -> ActionGrammar {
        ActionGrammar::Ckbg {
            containers: vec!["resin container".into(), "opaque Tupperware".into()],
        }
    }

    #[test]
    fn stop_choice() {
        assert_eq!(
            parse_action(&ckbg(), "[STOP] Burglar chosed: opaque Tupperware."),
            ParsedAction::StopChoice {
                container: "opaque Tupperware".into()
            }
        );
        assert!(parse_action(&ckbg(), "[STOP] I pick both containers").is_format_error());
        assert!(
            parse_action(&ckbg(), "[STOP] resin container or opaque tupperware").is_format_error()
        );
        assert_eq!(
            parse_action(&ckbg(), "Where is it?"),
            ParsedAction::Utterance
        );
    }

    #[test]
    fn stop_longest_match() {
        let g = ActionGrammar::Ckbg {
            containers: vec!["box".into(), "wooden box".into()],
        };
        assert_eq!(
            parse_action(&g, "[STOP] the WOODEN BOX"),
            ParsedAction::StopChoice {
                container: "wooden box".into()
            }
        );
    }

    #[test]
    fn deal_grammar() {
        assert_eq!(
            parse_action(&ActionGrammar::Casino, "DEAL: food=2, water=1, firewood=0"),
            ParsedAction::Deal {
                deal: Deal::new(2, 1, 0)
            }
        );
        assert!(parse_action(&ActionGrammar::Casino, "DEAL: food=two").is_format_error());
        assert!(parse_action(
            &ActionGrammar::Casino,
            "DEAL: food=1, water=1, firewood=1\nDEAL: food=2, water=1, firewood=1"
        )
        .is_format_error());
        assert_eq!(
            parse_action(&ActionGrammar::Casino, "I need water."),
            ParsedAction::Utterance
        );
    }

    #[test]
    fn deal_round_trip() {
        let d = Deal::new(3, 0, 2);
        assert_eq!(
            parse_action(&ActionGrammar::Casino, &d.to_string()),
            ParsedAction::Deal { deal: d }
        );
        assert!(d.complements(&Deal::new(0, 3, 1), 3));
        assert_eq!(d.complement(3), Some(Deal::new(0, 3, 1)));
        assert_eq!(Deal::new(4, 0, 0).complement(3), None);
    }

    #[test]
    fn friend_pick() {
        let g = ActionGrammar::Mf {
            friends: vec![
                vec!["Greek".into(), "Assurant".into()],
                vec!["English Language".into(), "Assurant".into()],
            ],
        };
        assert_eq!(
            parse_action(&g, "SELECT: 2"),
            ParsedAction::FriendPick { friend: 1 }
        );
        assert!(parse_action(&g, "SELECT: 3").is_format_error());
        assert_eq!(
            parse_action(&g, "It is the Greek major at Assurant."),
            ParsedAction::FriendPick { friend: 0 }
        );
        assert_eq!(parse_action(&g, "Assurant?"), ParsedAction::Utterance);
    }
}
