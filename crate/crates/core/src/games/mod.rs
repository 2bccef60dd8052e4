//! Game environments and their episode loops.
//!
//! Every loop shares one shape: build the speaker's prompt (conditioned
//! according to its [`Method`]), generate, log the turn, parse the action.
//! Generator format errors end the episode with `format_error` set;
//! transport and protocol errors propagate to the caller.

mod agent;
pub mod casino;
pub mod ckbg;
pub mod mf;
mod words;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief::{DialogueContext, TrainingSource, TruthSnapshot};
use crate::generation::templates::{COT_INSTRUCTION, REPLY_DELIMITER};
use crate::generation::{ParsedAction, Prompt, ScriptedGenerator, Stage, Utterance};
use crate::selection::SelectionResult;
use crate::{Error, Result};

pub use crate::generation::GameId;
pub use agent::{Agent, BeliefSource, Method};
pub use casino::{CasinoScenario, Item, Preference};
pub use ckbg::{CkbgCondition, CkbgSetting, ConditionClass, ConditionCount, DatasetSummary};
pub use mf::{JudgeMode, MfScenario};

/// Belief vectors a turn was conditioned on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefLog {
    pub self_truth: Vec<f64>,
    pub opp_knows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnLog {
    pub index: usize,
    pub speaker: String,
    pub stage: Stage,
    pub prompt: Prompt,
    pub raw: String,
    pub text: String,
    pub token_count: usize,
    pub format_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beliefs: Option<BeliefLog>,
    /// One entry per act; two for the mixed negotiation strategy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selections: Vec<SelectionResult>,
    pub action: ParsedAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub game: GameId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<[u32; 2]>,
    /// Dialogue utterances by either side.
    pub turns: usize,
    /// Whitespace tokens of dialogue utterances, per side.
    pub tokens: [usize; 2],
    pub format_error: bool,
    #[serde(default)]
    pub infrastructure_failure: bool,
    pub fallback_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EpisodeOutcome {
    pub fn new(game: GameId) -> Self {
        Self {
            game,
            success: None,
            agreement: None,
            rewards: None,
            turns: 0,
            tokens: [0, 0],
            format_error: false,
            infrastructure_failure: false,
            fallback_count: 0,
            error: None,
        }
    }

    pub fn total_tokens(&self) -> usize {
        self.tokens[0] + self.tokens[1]
    }

    /// Counted in metrics.
    pub fn is_valid(&self) -> bool {
        !self.format_error && !self.infrastructure_failure
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub transcript: Vec<TurnLog>,
    pub outcome: EpisodeOutcome,
}

/// Scenario of any game, tagged by game id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", content = "scenario", rename_all = "lowercase")]
pub enum Scenario {
    Ckbg(CkbgSetting),
    Mf(MfScenario),
    Casino(CasinoScenario),
}

impl Scenario {
    pub fn game(&self) -> GameId {
        match self {
            Scenario::Ckbg(_) => GameId::Ckbg,
            Scenario::Mf(_) => GameId::Mf,
            Scenario::Casino(_) => GameId::Casino,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Scenario::Ckbg(s) => &s.id,
            Scenario::Mf(s) => &s.id,
            Scenario::Casino(s) => &s.id,
        }
    }
}

/// Dialogue turns of a transcript, in order.
pub fn context_from_transcript(transcript: &[TurnLog]) -> DialogueContext {
    let mut context = DialogueContext::default();
    for turn in transcript {
        if turn.stage == Stage::Dialogue && turn.format_ok {
            context.push(turn.speaker.clone(), turn.text.clone());
        }
    }
    context
}

/// Labeled ground truth of one finished dialogue, one source per side and
/// perspective the game's estimators are asked about.
pub fn training_sources(
    scenario: &Scenario,
    context: &DialogueContext,
    episode_id: &str,
) -> Result<Vec<TrainingSource>> {
    match scenario {
        Scenario::Ckbg(s) => ckbg::training_sources(s, context, episode_id),
        Scenario::Mf(s) => mf::training_sources(s, context, episode_id),
        Scenario::Casino(s) => casino::training_sources(s, context, episode_id),
    }
}

/// One snapshot per turn count at which `known` changes.
pub(crate) fn snapshots(
    context: &DialogueContext,
    known: impl Fn(&DialogueContext) -> std::collections::BTreeSet<usize>,
) -> Vec<TruthSnapshot> {
    let mut out: Vec<TruthSnapshot> = Vec::new();
    for t in 0..=context.turns.len() {
        let prefix = DialogueContext {
            turns: context.turns[..t].to_vec(),
            ..context.clone()
        };
        let set = known(&prefix);
        if out.last().is_none_or(|s| s.known != set) {
            out.push(TruthSnapshot {
                after_turns: t,
                known: set,
            });
        }
    }
    out
}

/// What a turn was conditioned on.
#[derive(Debug, Clone, Default)]
pub(crate) struct TurnPlan {
    pub beliefs: Option<BeliefLog>,
    pub selections: Vec<SelectionResult>,
    pub fallback: bool,
}

/// Accumulates the transcript and counters of one episode.
pub(crate) struct Recorder {
    pub outcome: EpisodeOutcome,
    pub transcript: Vec<TurnLog>,
}

impl Recorder {
    pub fn new(game: GameId) -> Self {
        Self {
            outcome: EpisodeOutcome::new(game),
            transcript: Vec::new(),
        }
    }

    /// Generates and logs one turn. `side` is `Some` for dialogue turns,
    /// which count toward turns and tokens. Returns `None` when the turn
    /// ended the episode with a format error.
    pub fn speak(
        &mut self,
        agent: &Agent,
        speaker: &str,
        side: Option<usize>,
        prompt: Prompt,
        plan: TurnPlan,
    ) -> Result<Option<Utterance>> {
        if plan.fallback {
            self.outcome.fallback_count += 1;
        }
        let stage = prompt.meta.stage;
        let (utterance, reason) = match agent.generate(&prompt) {
            Ok(u) if u.format_ok => (u, None),
            Ok(u) => (u, Some("reply delimiter missing".to_owned())),
            Err(Error::Format(msg)) => (
                Utterance {
                    text: String::new(),
                    raw: String::new(),
                    token_count: 0,
                    format_ok: false,
                },
                Some(msg),
            ),
            Err(e) => return Err(e),
        };
        if let Some(side) = side {
            self.outcome.turns += 1;
            self.outcome.tokens[side] += utterance.token_count;
        }
        let action = match &reason {
            Some(r) => ParsedAction::FormatError { reason: r.clone() },
            None => ParsedAction::Utterance,
        };
        self.transcript.push(TurnLog {
            index: self.transcript.len(),
            speaker: speaker.to_owned(),
            stage,
            prompt,
            raw: utterance.raw.clone(),
            text: utterance.text.clone(),
            token_count: utterance.token_count,
            format_ok: utterance.format_ok,
            beliefs: plan.beliefs,
            selections: plan.selections,
            action,
        });
        if reason.is_some() {
            self.outcome.format_error = true;
            return Ok(None);
        }
        Ok(Some(utterance))
    }

    pub fn set_action(&mut self, action: ParsedAction) {
        if action.is_format_error() {
            self.outcome.format_error = true;
        }
        if let Some(last) = self.transcript.last_mut() {
            last.action = action;
        }
    }

    pub fn finish(self) -> Episode {
        Episode {
            transcript: self.transcript,
            outcome: self.outcome,
        }
    }
}

/// Deterministic stand-in agents for every game. Table entries are
/// consulted first; everything else is answered by per-game rules that
/// read the structured facts attached to each prompt.
pub fn rule_generator() -> ScriptedGenerator {
    with_rules(ScriptedGenerator::default())
}

/// Falls back to the rule agents for prompts `table` has no entry for.
pub fn with_rules(table: ScriptedGenerator) -> ScriptedGenerator {
    table.with_rule(Arc::new(rule_reply))
}

fn rule_reply(prompt: &Prompt) -> Result<String> {
    let reply = match prompt.meta.stage {
        Stage::Critique => "The draft serves the goal; keep it.".to_owned(),
        Stage::Revision => prompt
            .meta
            .draft
            .clone()
            .ok_or_else(|| Error::Format("revision prompt carries no draft".into()))?,
        _ => match prompt.meta.game {
            Some(GameId::Ckbg) => ckbg::rule_reply(prompt)?,
            Some(GameId::Mf) => mf::rule_reply(prompt)?,
            Some(GameId::Casino) => casino::rule_reply(prompt)?,
            None => return Err(Error::Format("prompt names no game".into())),
        },
    };
    if prompt.system.contains(COT_INSTRUCTION) && !matches!(prompt.meta.stage, Stage::Revision) {
        return Ok(format!(
            "Reasoning: weigh what the other side knows before replying.\n{REPLY_DELIMITER} {reply}"
        ));
    }
    Ok(reply)
}

pub(crate) fn facts<T: serde::de::DeserializeOwned>(prompt: &Prompt) -> Result<T> {
    serde_json::from_value(prompt.meta.facts.clone())
        .map_err(|e| Error::Format(format!("prompt facts unreadable: {e}")))
}

pub(crate) fn to_facts<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("facts serialize")
}
