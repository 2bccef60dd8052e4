//! ε-constrained event selection.
//!
//! Selection never scores utterances. Once the feasible set is known every
//! member is equally likely (maximum entropy), so the joint choice of
//! utterance and event reduces to picking the event here and leaving the
//! utterance to the generator.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, IteratorRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{
    BeliefVector, DialogueContext, Perspective, WorldSet, PAYLOAD_ATTRIBUTE, PAYLOAD_VALUE,
};
use crate::epistemic::{check_epsilon, ActKind};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.5;

/// Filler used for a belief slot whose side of the selection fell back.
pub const UNKNOWN_BELIEF: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActConstraint {
    pub act: ActKind,
    epsilon: f64,
}

impl ActConstraint {
    pub fn new(act: ActKind, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self { act, epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "k")]
pub enum SelectionPolicy {
    All,
    UniformOne,
    UniformK(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SelectionResult {
    pub feasible: BTreeSet<usize>,
    pub chosen: Vec<usize>,
    /// The feasible set was empty; generate unconstrained.
    pub fallback: bool,
}

fn check_pair(self_truth: &BeliefVector, opp_knows: &BeliefVector) -> Result<()> {
    if self_truth.perspective != Perspective::SelfTruth {
        return Err(Error::domain(
            "first vector must have the self_truth perspective",
        ));
    }
    if opp_knows.perspective != Perspective::OpponentKnows {
        return Err(Error::domain(
            "second vector must have the opponent_knows perspective",
        ));
    }
    if self_truth.world_set_size() != opp_knows.world_set_size() {
        return Err(Error::domain(format!(
            "vector lengths differ: {} vs {}",
            self_truth.world_set_size(),
            opp_knows.world_set_size()
        )));
    }
    Ok(())
}

/// Events the speaker holds true with confidence `1 - ε` and that the
/// interlocutor does not know (adversarial) or does know (alignment), again
/// with confidence `1 - ε`.
pub fn feasible_set(
    self_truth: &BeliefVector,
    opp_knows: &BeliefVector,
    constraint: ActConstraint,
) -> Result<BTreeSet<usize>> {
    check_pair(self_truth, opp_knows)?;
    let threshold = 1.0 - constraint.epsilon;
    Ok(self_truth
        .values()
        .iter()
        .zip(opp_knows.values())
        .enumerate()
        .filter(|(_, (&truth, &knows))| {
            truth >= threshold
                && match constraint.act {
                    ActKind::Adversarial => 1.0 - knows >= threshold,
                    ActKind::Alignment => knows >= threshold,
                }
        })
        .map(|(i, _)| i)
        .collect())
}

/// Draws conditioning events from the feasible set under `policy`.
pub fn choose(feasible: &BTreeSet<usize>, policy: SelectionPolicy, seed: u64) -> SelectionResult {
    if feasible.is_empty() {
        return SelectionResult {
            feasible: BTreeSet::new(),
            chosen: Vec::new(),
            fallback: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = match policy {
        SelectionPolicy::All => feasible.iter().copied().collect(),
        SelectionPolicy::UniformOne => {
            let items: Vec<usize> = feasible.iter().copied().collect();
            vec![*items.choose(&mut rng).expect("non-empty")]
        }
        SelectionPolicy::UniformK(k) => {
            let mut picked = feasible.iter().copied().choose_multiple(&mut rng, k.max(1));
            picked.sort_unstable();
            picked
        }
    };
    SelectionResult {
        feasible: feasible.clone(),
        chosen,
        fallback: false,
    }
}

/// Number of events in the negotiation world set; the first half are
/// assertive preference statements, the second half their negations.
pub const MIXED_WORLD_SIZE: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MixedSelection {
    pub alignment: SelectionResult,
    pub adversarial: SelectionResult,
}

impl MixedSelection {
    pub fn chosen(&self) -> Vec<usize> {
        self.alignment
            .chosen
            .iter()
            .chain(&self.adversarial.chosen)
            .copied()
            .collect()
    }
}

/// One alignment event from the assertive half and one adversarial event
/// from the negated half, each uniform over its feasible subset.
pub fn mixed_select(
    self_truth: &BeliefVector,
    opp_knows: &BeliefVector,
    epsilon: f64,
    seed: u64,
) -> Result<MixedSelection> {
    check_pair(self_truth, opp_knows)?;
    if self_truth.world_set_size() != MIXED_WORLD_SIZE {
        return Err(Error::domain(format!(
            "mixed selection needs {MIXED_WORLD_SIZE} events, got {}",
            self_truth.world_set_size()
        )));
    }
    let half = MIXED_WORLD_SIZE / 2;
    let align = feasible_set(
        self_truth,
        opp_knows,
        ActConstraint::new(ActKind::Alignment, epsilon)?,
    )?
    .into_iter()
    .filter(|&i| i < half)
    .collect();
    let adv = feasible_set(
        self_truth,
        opp_knows,
        ActConstraint::new(ActKind::Adversarial, epsilon)?,
    )?
    .into_iter()
    .filter(|&i| i >= half)
    .collect();
    Ok(MixedSelection {
        alignment: choose(&align, SelectionPolicy::UniformOne, seed),
        adversarial: choose(&adv, SelectionPolicy::UniformOne, seed.wrapping_add(1)),
    })
}

/// Keeps at most one value per attribute among triple-style events: the one
/// mentioned in the latest turn (ties go to the lower id).
pub fn dedup_latest_per_attribute(
    chosen: &[usize],
    world_set: &WorldSet,
    context: &DialogueContext,
) -> Result<Vec<usize>> {
    let last_mention = |value: &str| {
        let needle = value.to_lowercase();
        context
            .turns
            .iter()
            .rposition(|t| t.text.to_lowercase().contains(&needle))
    };
    let mut best: BTreeMap<String, (Option<usize>, usize)> = BTreeMap::new();
    let mut passthrough = Vec::new();
    for &id in chosen {
        let event = world_set.get(id)?;
        let (Some(attribute), Some(value)) =
            (event.get(PAYLOAD_ATTRIBUTE), event.get(PAYLOAD_VALUE))
        else {
            passthrough.push(id);
            continue;
        };
        let recency = last_mention(value);
        best.entry(attribute.to_owned())
            .and_modify(|cur| {
                if recency > cur.0 || (recency == cur.0 && id < cur.1) {
                    *cur = (recency, id);
                }
            })
            .or_insert((recency, id));
    }
    let mut out: Vec<usize> = best
        .into_values()
        .map(|(_, id)| id)
        .chain(passthrough)
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// How chosen events are rendered into prompt slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConditionTemplate {
    /// Bullet list for the keeper's `machine_U` slot.
    Ckbg,
    /// `Attribute: value` pairs for `belief_state_sentence`.
    Mf,
    /// Self/opponent belief sentences plus the speaker's true preference.
    Casino { ground_truth: String },
}

impl ConditionTemplate {
    pub fn for_game(game: &str, ground_truth: Option<&str>) -> Result<Self> {
        match game {
            "ckbg" => Ok(Self::Ckbg),
            "mf" => Ok(Self::Mf),
            "casino" => Ok(Self::Casino {
                ground_truth: ground_truth.unwrap_or_default().to_owned(),
            }),
            other => Err(Error::domain(format!(
                "unknown condition template `{other}`"
            ))),
        }
    }
}

/// Rendered slot values; `fallback` tells the caller to generate
/// unconstrained.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Condition {
    pub slots: BTreeMap<String, String>,
    pub fallback: bool,
}

fn strip_period(s: &str) -> &str {
    s.trim_end().trim_end_matches('.')
}

pub fn compose_condition(
    chosen: &[usize],
    world_set: &WorldSet,
    template: &ConditionTemplate,
) -> Result<Condition> {
    let events = chosen
        .iter()
        .map(|&id| world_set.get(id))
        .collect::<Result<Vec<_>>>()?;
    let mut slots = BTreeMap::new();
    match template {
        ConditionTemplate::Ckbg => {
            let block = events
                .iter()
                .map(|e| format!("- {}", e.text))
                .collect::<Vec<_>>()
                .join("\n");
            slots.insert("machine_U".to_owned(), block);
        }
        ConditionTemplate::Mf => {
            let sentence = events
                .iter()
                .map(|e| match (e.get(PAYLOAD_ATTRIBUTE), e.get(PAYLOAD_VALUE)) {
                    (Some(a), Some(v)) => format!("{a}: {v}"),
                    _ => strip_period(&e.text).to_owned(),
                })
                .collect::<Vec<_>>()
                .join(", ");
            slots.insert("belief_state_sentence".to_owned(), sentence);
        }
        ConditionTemplate::Casino { ground_truth } => {
            let pick = |negated: bool| {
                events
                    .iter()
                    .find(|e| (e.get("polarity") == Some("isnt")) == negated)
                    .map(|e| strip_period(&e.text).to_owned())
                    .unwrap_or_else(|| UNKNOWN_BELIEF.to_owned())
            };
            slots.insert("belief_state_self".to_owned(), pick(true));
            slots.insert("belief_state_opponent".to_owned(), pick(false));
            slots.insert("belief_state_gt".to_owned(), ground_truth.clone());
        }
    }
    Ok(Condition {
        slots,
        fallback: events.is_empty(),
    })
}
