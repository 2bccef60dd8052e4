//! World sets of boolean events and the estimators that score them.
//!
//! A [`BeliefVector`] carries one probability per world-set event, either
//! the speaker's confidence that the event is true ([`Perspective::SelfTruth`])
//! or its confidence that the interlocutor knows it
//! ([`Perspective::OpponentKnows`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod estimator;
mod remote;
mod training;

pub use estimator::{
    keyword_estimate, oracle_estimate, random_estimate, BeliefEstimator, FnEstimator,
    KeywordEstimator, OracleEstimator, RandomEstimator, KEYWORD_THRESHOLD,
};
pub use remote::{
    EstimateRequest, EstimateResponse, RemoteEstimator, RemoteEstimatorConfig, EST_ENDPOINT_VAR,
};
pub use training::{
    belief_gap, emit_training_data, evaluate_estimator, pairwise_order_agreement,
    read_labeled_examples, write_labeled_examples, AccuracyReport, ClipPolicy, EvalMode,
    PerspectiveAccuracy, TrainingSource, TruthSnapshot, TruthStyle, PAYLOAD_ORDER, PAYLOAD_OWNER,
    PAYLOAD_POLARITY,
};

/// Probabilities at or above this value count as "known" / true.
pub const KNOWN_THRESHOLD: f64 = 0.5;

/// Payload keys used by triple-style (interlocutor, attribute, value) events.
pub const PAYLOAD_INTERLOCUTOR: &str = "interlocutor";
pub const PAYLOAD_ATTRIBUTE: &str = "attribute";
pub const PAYLOAD_VALUE: &str = "value";
/// Optional payload key overriding the text the keyword estimator matches.
pub const PAYLOAD_KEYWORDS: &str = "keywords";

/// Surface text of a triple-style event.
pub fn suspicion_text(interlocutor: &str, attribute: &str, value: &str) -> String {
    format!("The {interlocutor} suspects the {attribute} of the mutual friend is {value}.")
}

/// Builds a triple-style event (without an id).
pub fn suspicion_event(interlocutor: &str, attribute: &str, value: &str) -> Event {
    let mut payload = BTreeMap::new();
    payload.insert(PAYLOAD_INTERLOCUTOR.to_owned(), interlocutor.to_owned());
    payload.insert(PAYLOAD_ATTRIBUTE.to_owned(), attribute.to_owned());
    payload.insert(PAYLOAD_VALUE.to_owned(), value.to_owned());
    payload.insert(PAYLOAD_KEYWORDS.to_owned(), value.to_owned());
    Event {
        id: 0,
        text: suspicion_text(interlocutor, attribute, value),
        payload,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub payload: BTreeMap<String, String>,
}

impl Event {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            id: 0,
            text: text.into(),
            payload: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.payload.insert(key.to_owned(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.payload.get(key).map(String::as_str)
    }
}

/// An ordered, non-empty list of events with ids `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Event>", into = "Vec<Event>")]
pub struct WorldSet {
    events: Vec<Event>,
}

impl WorldSet {
    /// Re-numbers the events `0..n` in the given order.
    pub fn new(events: impl IntoIterator<Item = Event>) -> Result<Self> {
        let events: Vec<Event> = events
            .into_iter()
            .enumerate()
            .map(|(id, e)| Event { id, ..e })
            .collect();
        if events.is_empty() {
            return Err(Error::domain("world set is empty"));
        }
        if let Some(e) = events.iter().find(|e| e.text.trim().is_empty()) {
            return Err(Error::domain(format!("event {} has empty text", e.id)));
        }
        Ok(Self { events })
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Result<Self> {
        Self::new(texts.into_iter().map(Event::new))
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn get(&self, id: usize) -> Result<&Event> {
        self.events
            .get(id)
            .ok_or_else(|| Error::domain(format!("unknown event id {id}")))
    }

    pub fn texts(&self) -> Vec<String> {
        self.events.iter().map(|e| e.text.clone()).collect()
    }
}

impl TryFrom<Vec<Event>> for WorldSet {
    type Error = Error;

    fn try_from(events: Vec<Event>) -> Result<Self> {
        if events.iter().enumerate().any(|(i, e)| e.id != i) {
            return Err(Error::domain("world set ids must be 0..n in order"));
        }
        WorldSet::new(events)
    }
}

impl From<WorldSet> for Vec<Event> {
    fn from(ws: WorldSet) -> Self {
        ws.events
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perspective {
    SelfTruth,
    OpponentKnows,
}

impl Perspective {
    pub fn as_str(self) -> &'static str {
        match self {
            Perspective::SelfTruth => "self_truth",
            Perspective::OpponentKnows => "opponent_knows",
        }
    }
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-event probabilities from one perspective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefVector {
    pub perspective: Perspective,
    values: Vec<f64>,
}

impl BeliefVector {
    pub fn new(perspective: Perspective, values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::domain(format!(
                "belief value {v} at {i} outside [0, 1]"
            )));
        }
        Ok(Self {
            perspective,
            values,
        })
    }

    pub fn zeros(perspective: Perspective, n: usize) -> Self {
        Self {
            perspective,
            values: vec![0.0; n],
        }
    }

    /// 1.0 at `members`, 0.0 elsewhere.
    pub fn indicator(
        perspective: Perspective,
        n: usize,
        members: &BTreeSet<usize>,
    ) -> Result<Self> {
        let mut values = vec![0.0; n];
        for &i in members {
            *values
                .get_mut(i)
                .ok_or_else(|| Error::domain(format!("unknown event id {i}")))? = 1.0;
        }
        Ok(Self {
            perspective,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn world_set_size(&self) -> usize {
        self.values.len()
    }

    /// Ids whose probability reaches [`KNOWN_THRESHOLD`].
    pub fn known(&self) -> BTreeSet<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= KNOWN_THRESHOLD)
            .map(|(i, _)| i)
            .collect()
    }

    /// Overwrites the entries at `ids` with `value`.
    pub fn overwrite(&mut self, ids: impl IntoIterator<Item = usize>, value: f64) {
        for i in ids {
            if let Some(v) = self.values.get_mut(i) {
                *v = value;
            }
        }
    }
}

/// The current context and task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueContext {
    pub task: String,
    pub background: String,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
}

impl Turn {
    pub fn new(speaker: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            speaker: speaker.into(),
            text: text.into(),
        }
    }
}

/// Speaker name used for harness insertions into the dialogue.
pub const SYSTEM_SPEAKER: &str = "SYSTEM";

impl DialogueContext {
    pub fn new(task: impl Into<String>, background: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            background: background.into(),
            turns: Vec::new(),
        }
    }

    pub fn push(&mut self, speaker: impl Into<String>, text: impl Into<String>) {
        self.turns.push(Turn::new(speaker, text));
    }

    /// Newline-joined `Speaker: utterance` lines.
    pub fn render_turns(&self) -> String {
        self.turns
            .iter()
            .map(|t| format!("{}: {}", t.speaker, t.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// The context string sent to remote estimators: a `Background:` line
    /// (when there is one) followed by the turn lines.
    pub fn render(&self) -> String {
        let turns = self.render_turns();
        match (self.background.trim().is_empty(), turns.is_empty()) {
            (true, _) => turns,
            (false, true) => format!("Background: {}", self.background),
            (false, false) => format!("Background: {}\n{turns}", self.background),
        }
    }

    /// Inverse of [`Self::render_turns`]; lines without a `Speaker: ` prefix
    /// continue the previous utterance.
    pub fn from_rendered(text: &str) -> Self {
        let mut ctx = DialogueContext::default();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("Background: ") {
                if ctx.turns.is_empty() && ctx.background.is_empty() {
                    ctx.background = rest.to_owned();
                    continue;
                }
            }
            match line.split_once(": ") {
                Some((speaker, utterance))
                    if !speaker.trim().is_empty() && speaker.split_whitespace().count() <= 3 =>
                {
                    ctx.push(speaker, utterance)
                }
                _ => match ctx.turns.last_mut() {
                    Some(last) => {
                        last.text.push('\n');
                        last.text.push_str(line);
                    }
                    None => ctx.push(SYSTEM_SPEAKER, line),
                },
            }
        }
        ctx
    }

    /// A copy without the final `k` turns.
    pub fn clipped(&self, k: usize) -> Self {
        let keep = self.turns.len().saturating_sub(k);
        Self {
            task: self.task.clone(),
            background: self.background.clone(),
            turns: self.turns[..keep].to_vec(),
        }
    }
}

/// One supervised example for a belief estimator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub context: String,
    pub event: Event,
    pub perspective: Perspective,
    pub label: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_set_renumbers() {
        let ws = WorldSet::new(vec![Event::new("a"), Event::new("b")]).unwrap();
        assert_eq!(ws.events()[1].id, 1);
        assert!(WorldSet::new(Vec::new()).is_err());
        assert!(WorldSet::from_texts([" "]).is_err());
    }

    #[test]
    fn world_set_json_checks_ids() {
        let ws = WorldSet::from_texts(["a", "b"]).unwrap();
        let json = serde_json::to_string(&ws).unwrap();
        assert_eq!(serde_json::from_str::<WorldSet>(&json).unwrap(), ws);
        let bad = r#"[{"id":1,"text":"a"}]"#;
        assert!(serde_json::from_str::<WorldSet>(bad).is_err());
    }

    #[test]
    fn belief_vector_range() {
        assert!(BeliefVector::new(Perspective::SelfTruth, vec![0.0, 1.2]).is_err());
        let v = BeliefVector::new(Perspective::SelfTruth, vec![0.5, 0.49, 1.0]).unwrap();
        assert_eq!(v.known(), BTreeSet::from([0, 2]));
    }

    #[test]
    fn context_render_round_trip() {
        let mut ctx = DialogueContext::new("task", "");
        ctx.push("Burglar John", "Where is it?");
        ctx.push("Homeowner Jacob", "In the box: trust me.");
        let text = ctx.render_turns();
        assert_eq!(
            text,
            "Burglar John: Where is it?\nHomeowner Jacob: In the box: trust me."
        );
        let back = DialogueContext::from_rendered(&text);
        assert_eq!(back.turns, ctx.turns);
    }

    #[test]
    fn render_folds_background() {
        let mut ctx = DialogueContext::new("t", "two containers");
        assert_eq!(ctx.render(), "Background: two containers");
        ctx.push("A", "hi");
        assert_eq!(ctx.render(), "Background: two containers\nA: hi");
        let back = DialogueContext::from_rendered(&ctx.render());
        assert_eq!(back.background, "two containers");
        assert_eq!(back.turns.len(), 1);
    }
}
