//! Conditional-generation templates. Placeholders are `[name]`.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::{Captures, Regex};

use crate::{Error, Result};

pub const CKBG_NOTICE: &str = "Notice:
1. Context: [context]
2. Your opponent's belief state: [user_U]
3. Your belief state: [machine_U]
Based on the context, the opponent's belief state, and your belief state to provide your final choice to the following task: [task].";

pub const MF_NOTICE: &str = "Notice:
1. [name_opponent] currently considers the attributes of the mutual friend to be: **[belief_state_sentence].**
2. You must confirm whether there a friend in your friend list that meet the above criteria; only then can they be identified as a mutual friend.
3. When describing a friend, give all his attribute values.
Please provide your utterance directly.";

pub const CASINO_NOTICE: &str = "Notice:
1. [opponent_name] thinks that you think [belief_state_self].
2. [opponent_name] thinks think [belief_state_opponent].
3. In fact, for you, [belief_state_gt]
Please provide your utterance directly.";

/// All-belief conditioning used by the MindDial baseline.
pub const MINDDIAL_NOTICE: &str = "Notice:
Estimated beliefs for every event (P(true) is your confidence the event holds; P(known) is your confidence that [opponent_name] knows it):
[belief_table]
Please provide your utterance directly.";

pub const COT_INSTRUCTION: &str = "Let's think step by step, then give your reply.";

/// Marker separating reasoning from the reply in chain-of-thought output.
pub const REPLY_DELIMITER: &str = "REPLY:";

pub const COT_FORMAT_HINT: &str =
    "Write your reasoning first, then a line starting with \"REPLY:\" followed by the reply alone.";

pub const CRITIQUE_INSTRUCTION: &str = "Review the draft reply below against your goal and the dialogue so far. List its weaknesses briefly.";

pub const REVISION_INSTRUCTION: &str =
    "Rewrite the draft reply to address the critique. Output only the revised reply.";

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[([A-Za-z][A-Za-z0-9_]*)\]").expect("static regex"));

/// Placeholder names in order of first appearance.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for cap in PLACEHOLDER.captures_iter(template) {
        let name = cap[1].to_owned();
        if !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

/// Substitutes every placeholder in one pass. Slot values are never
/// rescanned, so they may contain bracketed text.
pub fn fill(template: &str, slots: &BTreeMap<String, String>) -> Result<String> {
    if let Some(missing) = placeholders(template)
        .into_iter()
        .find(|name| !slots.contains_key(name))
    {
        return Err(Error::MissingSlot(missing));
    }
    Ok(PLACEHOLDER
        .replace_all(template, |cap: &Captures| slots[&cap[1]].clone())
        .into_owned())
}
