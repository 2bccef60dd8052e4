//! Supervised data for belief estimators and their evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    suspicion_event, BeliefEstimator, BeliefVector, DialogueContext, Event, LabeledExample,
    Perspective, WorldSet, KNOWN_THRESHOLD, PAYLOAD_ATTRIBUTE, PAYLOAD_INTERLOCUTOR, PAYLOAD_VALUE,
};
use crate::{Error, Result};

/// Payload keys of permutation-style events, scored pairwise.
pub const PAYLOAD_ORDER: &str = "order";
pub const PAYLOAD_OWNER: &str = "negotiator";
pub const PAYLOAD_POLARITY: &str = "polarity";

/// The ground-truth known set valid once `after_turns` turns have been played.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthSnapshot {
    pub after_turns: usize,
    pub known: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthStyle {
    /// One example per world-set event.
    Set,
    /// (interlocutor, attribute, value) events: positives plus corrupted negatives.
    Triple,
}

/// A finished dialogue with its per-event ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSource {
    pub episode_id: String,
    pub context: DialogueContext,
    pub world_set: WorldSet,
    pub perspective: Perspective,
    pub style: TruthStyle,
    pub truth: Vec<TruthSnapshot>,
}

impl TrainingSource {
    fn known_after(&self, turns: usize) -> BTreeSet<usize> {
        self.truth
            .iter()
            .filter(|s| s.after_turns <= turns)
            .max_by_key(|s| s.after_turns)
            .map(|s| s.known.clone())
            .unwrap_or_default()
    }
}

/// Number of final turns dropped, drawn uniformly from `0..=max_clip`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipPolicy {
    pub max_clip: usize,
}

impl Default for ClipPolicy {
    fn default() -> Self {
        Self { max_clip: 3 }
    }
}

/// Turns finished dialogues into labeled examples. Output is a pure function
/// of the inputs and `seed`.
pub fn emit_training_data(
    sources: &[TrainingSource],
    clip: ClipPolicy,
    negative_ratio: usize,
    seed: u64,
) -> Result<Vec<LabeledExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for source in sources {
        if source.truth.is_empty() {
            return Err(Error::Data(format!(
                "episode {} carries no ground truth",
                source.episode_id
            )));
        }
        let k = rng.random_range(0..=clip.max_clip);
        let context = source.context.clipped(k);
        let rendered = context.render_turns();
        let known = source.known_after(context.turns.len());
        match source.style {
            TruthStyle::Set => {
                for event in source.world_set.events() {
                    out.push(LabeledExample {
                        context: rendered.clone(),
                        event: event.clone(),
                        perspective: source.perspective,
                        label: known.contains(&event.id),
                    });
                }
            }
            TruthStyle::Triple => {
                let positives = known
                    .iter()
                    .map(|&id| source.world_set.get(id).cloned())
                    .collect::<Result<Vec<_>>>()?;
                for event in &positives {
                    out.push(LabeledExample {
                        context: rendered.clone(),
                        event: event.clone(),
                        perspective: source.perspective,
                        label: true,
                    });
                    for _ in 0..negative_ratio {
                        match corrupt_triple(event, &source.world_set, &positives, &mut rng) {
                            Some(negative) => out.push(LabeledExample {
                                context: rendered.clone(),
                                event: negative,
                                perspective: source.perspective,
                                label: false,
                            }),
                            None => log::warn!(
                                "episode {}: no corruption available for `{}`",
                                source.episode_id,
                                event.text
                            ),
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn triple_of(event: &Event) -> Option<(&str, &str, &str)> {
    Some((
        event.get(PAYLOAD_INTERLOCUTOR)?,
        event.get(PAYLOAD_ATTRIBUTE)?,
        event.get(PAYLOAD_VALUE)?,
    ))
}

/// Replaces either the attribute or the value of a positive triple so that
/// the result is not itself a positive.
fn corrupt_triple(
    event: &Event,
    world_set: &WorldSet,
    positives: &[Event],
    rng: &mut ChaCha8Rng,
) -> Option<Event> {
    let (who, attribute, value) = triple_of(event)?;
    let is_positive = |a: &str, v: &str| {
        positives
            .iter()
            .filter_map(triple_of)
            .any(|(_, pa, pv)| pa == a && pv == v)
    };
    let mut other_values = BTreeSet::new();
    let mut other_attributes = BTreeSet::new();
    for (_, a, v) in world_set.events().iter().filter_map(triple_of) {
        if a == attribute && v != value && !is_positive(a, v) {
            other_values.insert(v);
        }
        if a != attribute && !is_positive(a, value) {
            other_attributes.insert(a);
        }
    }
    let other_values: Vec<_> = other_values.into_iter().collect();
    let other_attributes: Vec<_> = other_attributes.into_iter().collect();
    let alter_attribute = match (other_values.is_empty(), other_attributes.is_empty()) {
        (true, true) => return None,
        (true, false) => true,
        (false, true) => false,
        (false, false) => rng.random_bool(0.5),
    };
    let corrupted = if alter_attribute {
        suspicion_event(who, other_attributes.choose(rng)?, value)
    } else {
        suspicion_event(who, attribute, other_values.choose(rng)?)
    };
    Some(corrupted)
}

#[derive(Serialize, Deserialize)]
struct ExampleLine {
    context: String,
    event: String,
    perspective: Perspective,
    label: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    payload: BTreeMap<String, String>,
}

/// Writes one JSON document per line: `{context, event, perspective, label}`.
pub fn write_labeled_examples(path: &Path, examples: &[LabeledExample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ex in examples {
        let line = ExampleLine {
            context: ex.context.clone(),
            event: ex.event.text.clone(),
            perspective: ex.perspective,
            label: ex.label,
            payload: ex.event.payload.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labeled_examples(path: &Path) -> Result<Vec<LabeledExample>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ExampleLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(LabeledExample {
            context: parsed.context,
            event: Event {
                id: 0,
                text: parsed.event,
                payload: parsed.payload,
            },
            perspective: parsed.perspective,
            label: parsed.label,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Binary,
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveAccuracy {
    pub n: usize,
    pub accuracy: f64,
}

/// Accuracy of an estimator on a labeled set. The field layout is shared with
/// the estimation service's evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub mode: EvalMode,
    pub n: usize,
    pub accuracy: f64,
    pub per_perspective: BTreeMap<Perspective, PerspectiveAccuracy>,
}

fn report(mode: EvalMode, scores: &[(Perspective, f64)]) -> AccuracyReport {
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let all: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    let mut by: BTreeMap<Perspective, Vec<f64>> = BTreeMap::new();
    for (p, s) in scores {
        by.entry(*p).or_default().push(*s);
    }
    AccuracyReport {
        mode,
        n: all.len(),
        accuracy: mean(&all),
        per_perspective: by
            .into_iter()
            .map(|(p, xs)| {
                (
                    p,
                    PerspectiveAccuracy {
                        n: xs.len(),
                        accuracy: mean(&xs),
                    },
                )
            })
            .collect(),
    }
}

/// Binary mode thresholds each estimate at 0.5 against its label. Pairwise
/// mode groups permutation events sharing a context, perspective and owner,
/// takes the arg-max event as the predicted ordering and scores the fraction
/// of the three item pairs it orders correctly.
pub fn evaluate_estimator(
    estimator: &dyn BeliefEstimator,
    examples: &[LabeledExample],
    mode: EvalMode,
) -> Result<AccuracyReport> {
    if examples.is_empty() {
        return Err(Error::Data("labeled set is empty".into()));
    }
    match mode {
        EvalMode::Binary => {
            let mut scores = Vec::with_capacity(examples.len());
            for ex in examples {
                let context = DialogueContext::from_rendered(&ex.context);
                let ws = WorldSet::new([ex.event.clone()])?;
                let v = estimator.estimate(&context, &ws, ex.perspective)?;
                let predicted = v.values()[0] >= KNOWN_THRESHOLD;
                scores.push((
                    ex.perspective,
                    if predicted == ex.label { 1.0 } else { 0.0 },
                ));
            }
            Ok(report(mode, &scores))
        }
        EvalMode::Pairwise => {
            let mut groups: BTreeMap<(String, Perspective, String), Vec<&LabeledExample>> =
                BTreeMap::new();
            for ex in examples {
                if ex.event.get(PAYLOAD_ORDER).is_none()
                    || ex.event.get(PAYLOAD_POLARITY).is_some_and(|p| p != "is")
                {
                    continue;
                }
                let owner = ex.event.get(PAYLOAD_OWNER).unwrap_or_default().to_owned();
                groups
                    .entry((ex.context.clone(), ex.perspective, owner))
                    .or_default()
                    .push(ex);
            }
            if groups.is_empty() {
                return Err(Error::Data("no permutation events in labeled set".into()));
            }
            let mut scores = Vec::with_capacity(groups.len());
            for ((context, perspective, owner), members) in groups {
                let truth: Vec<_> = members.iter().filter(|e| e.label).collect();
                let [truth] = truth.as_slice() else {
                    return Err(Error::Data(format!(
                        "permutation group for `{owner}` has {} true orderings",
                        truth.len()
                    )));
                };
                let ws = WorldSet::new(members.iter().map(|e| e.event.clone()))?;
                let v = estimator.estimate(
                    &DialogueContext::from_rendered(&context),
                    &ws,
                    perspective,
                )?;
                let best = argmax(&v);
                let predicted = order_of(&members[best].event);
                scores.push((
                    perspective,
                    pairwise_order_agreement(&predicted, &order_of(&truth.event)),
                ));
            }
            Ok(report(mode, &scores))
        }
    }
}

fn argmax(v: &BeliefVector) -> usize {
    let mut best = 0;
    for (i, &x) in v.values().iter().enumerate() {
        if x > v.values()[best] {
            best = i;
        }
    }
    best
}

fn order_of(event: &Event) -> Vec<&str> {
    event
        .get(PAYLOAD_ORDER)
        .unwrap_or_default()
        .split(',')
        .map(str::trim)
        .collect()
}

/// Fraction of item pairs ordered the same way in both rankings (most
/// important first). Items missing from either ranking are ignored.
pub fn pairwise_order_agreement(predicted: &[&str], truth: &[&str]) -> f64 {
    let rank = |order: &[&str], item: &str| order.iter().position(|x| *x == item);
    let mut pairs = 0usize;
    let mut agree = 0usize;
    for (i, a) in truth.iter().enumerate() {
        for b in &truth[i + 1..] {
            let (Some(pa), Some(pb)) = (rank(predicted, a), rank(predicted, b)) else {
                continue;
            };
            pairs += 1;
            if pa < pb {
                agree += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        agree as f64 / pairs as f64
    }
}

/// Size of the symmetric difference between the predicted known set and the
/// ground truth.
pub fn belief_gap(predicted: &BeliefVector, truth: &BTreeSet<usize>) -> usize {
    predicted.known().symmetric_difference(truth).count()
}
