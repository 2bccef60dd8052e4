//! Conditional generation: prompt rendering, generator backends, baseline
//! wrappers and action parsing.

mod parse;
mod remote;
mod scripted;
pub mod templates;
mod wrappers;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::belief::{DialogueContext, SYSTEM_SPEAKER};
use crate::text::whitespace_tokens;
use crate::{Error, Result};

pub use parse::{parse_action, ActionGrammar, Deal, ParsedAction};
pub use remote::{
    ChatMessage, ChatRequest, RemoteGenerator, GEN_API_KEY_VAR, GEN_ENDPOINT_VAR, GEN_MODEL_VAR,
};
pub use scripted::{FnGenerator, RuleFn, ScriptKey, ScriptedGenerator};
pub use wrappers::{minddial_condition, minddial_slots, CotGenerator, SelfReflectGenerator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameId {
    Ckbg,
    Mf,
    Casino,
}

impl GameId {
    pub fn as_str(self) -> &'static str {
        match self {
            GameId::Ckbg => "ckbg",
            GameId::Mf => "mf",
            GameId::Casino => "casino",
        }
    }

    pub fn notice_template(self) -> &'static str {
        match self {
            GameId::Ckbg => templates::CKBG_NOTICE,
            GameId::Mf => templates::MF_NOTICE,
            GameId::Casino => templates::CASINO_NOTICE,
        }
    }
}

impl fmt::Display for GameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GameId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ckbg" => Ok(GameId::Ckbg),
            "mf" => Ok(GameId::Mf),
            "casino" => Ok(GameId::Casino),
            other => Err(Error::domain(format!("unknown game `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptRole {
    Interlocutor,
    #[serde(rename = "self")]
    SelfRole,
    System,
}

/// What a generator call is for. Wrappers and scripted rules branch on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[default]
    Dialogue,
    ForcedChoice,
    FinalPick,
    Judge,
    Critique,
    Revision,
}

/// Structured side channel for scripted generators and logs. Remote
/// backends only see `system` and `turns`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PromptMeta {
    pub game: Option<GameId>,
    pub role: String,
    pub turn_index: usize,
    #[serde(default)]
    pub stage: Stage,
    #[serde(default)]
    pub facts: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draft: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub turns: Vec<(PromptRole, String)>,
    pub meta: PromptMeta,
}

impl Prompt {
    pub fn new(
        system: impl Into<String>,
        turns: Vec<(PromptRole, String)>,
        meta: PromptMeta,
    ) -> Result<Self> {
        let system = system.into();
        if system.trim().is_empty() {
            return Err(Error::domain("prompt system text is empty"));
        }
        Ok(Self {
            system,
            turns,
            meta,
        })
    }

    /// Dialogue turns seen from `self_speaker`.
    pub fn turns_from(context: &DialogueContext, self_speaker: &str) -> Vec<(PromptRole, String)> {
        context
            .turns
            .iter()
            .map(|t| {
                let role = if t.speaker == self_speaker {
                    PromptRole::SelfRole
                } else if t.speaker == SYSTEM_SPEAKER {
                    PromptRole::System
                } else {
                    PromptRole::Interlocutor
                };
                (role, t.text.clone())
            })
            .collect()
    }

    pub fn push(&mut self, role: PromptRole, text: impl Into<String>) {
        self.turns.push((role, text.into()));
    }

    /// Appends a paragraph to the system text.
    pub fn with_instruction(mut self, instruction: &str) -> Self {
        self.system.push_str("\n\n");
        self.system.push_str(instruction);
        self
    }
}

/// Fills the game's notice template. `None` for `slots` renders the
/// unconditioned (background only) prompt.
pub fn render_prompt(
    game: GameId,
    background: &str,
    context: &DialogueContext,
    self_speaker: &str,
    slots: Option<&BTreeMap<String, String>>,
    meta: PromptMeta,
) -> Result<Prompt> {
    render_with_template(
        game.notice_template(),
        background,
        context,
        self_speaker,
        slots,
        meta,
    )
}

pub fn render_with_template(
    template: &str,
    background: &str,
    context: &DialogueContext,
    self_speaker: &str,
    slots: Option<&BTreeMap<String, String>>,
    meta: PromptMeta,
) -> Result<Prompt> {
    let system = match slots {
        Some(slots) => {
            let notice = templates::fill(template, slots)?;
            if background.is_empty() {
                notice
            } else {
                format!("{background}\n\n{notice}")
            }
        }
        None => background.to_owned(),
    };
    Prompt::new(system, Prompt::turns_from(context, self_speaker), meta)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    /// Completion exactly as the backend returned it.
    pub raw: String,
    pub token_count: usize,
    pub format_ok: bool,
}

impl Utterance {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            raw: text.clone(),
            token_count: whitespace_tokens(&text),
            text,
            format_ok: true,
        }
    }

    /// Trims surrounding whitespace; rejects empty completions.
    pub fn from_completion(raw: impl Into<String>) -> Result<Self> {
        let raw = raw.into();
        let text = raw.trim();
        if text.is_empty() {
            return Err(Error::Format("empty completion".into()));
        }
        Ok(Self {
            text: text.to_owned(),
            ..Self::new(raw.clone())
        })
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &Prompt) -> Result<Utterance>;
}

impl<G: Generator + ?Sized> Generator for std::sync::Arc<G> {
    fn generate(&self, prompt: &Prompt) -> Result<Utterance> {
        (**self).generate(prompt)
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn generate(&self, prompt: &Prompt) -> Result<Utterance> {
        (**self).generate(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    /// Table lookups from an optional script file, then the built-in rule
    /// agents.
    Scripted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        script: Option<std::path::PathBuf>,
    },
    /// OpenAI-style chat completions. Unset fields come from the
    /// `GEN_*` environment variables.
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default)]
        model: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub backend: Backend,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_turn_tokens")]
    pub max_turn_tokens: u32,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_max_turn_tokens() -> u32 {
    512
}

fn default_retries() -> u32 {
    2
}

fn default_timeout_ms() -> u64 {
    60_000
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Scripted { script: None },
            temperature: 0.0,
            max_turn_tokens: default_max_turn_tokens(),
            retries: default_retries(),
            timeout_ms: default_timeout_ms(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_turn_tokens == 0 {
            return Err(Error::Config("max_turn_tokens must be positive".into()));
        }
        Ok(())
    }
}
