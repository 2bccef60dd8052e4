use std::collections::BTreeMap;

use super::templates::{
    COT_FORMAT_HINT, COT_INSTRUCTION, CRITIQUE_INSTRUCTION, REPLY_DELIMITER, REVISION_INSTRUCTION,
};
use super::{Generator, Prompt, PromptRole, Stage, Utterance};
use crate::belief::{BeliefVector, Perspective, WorldSet};
use crate::{Error, Result};

/// Chain-of-thought baseline: asks for reasoning, emits only the reply.
#[derive(Debug, Clone)]
pub struct CotGenerator<G> {
    inner: G,
}

impl<G: Generator> CotGenerator<G> {
    pub fn new(inner: G) -> Self {
        Self { inner }
    }

    pub fn instruction() -> String {
        format!("{COT_INSTRUCTION} {COT_FORMAT_HINT}")
    }
}

/// Text after the last delimiter, or `None` when the delimiter is absent.
pub(crate) fn split_reply(completion: &str) -> Option<&str> {
    completion
        .rfind(REPLY_DELIMITER)
        .map(|at| completion[at + REPLY_DELIMITER.len()..].trim())
}

impl<G: Generator> Generator for CotGenerator<G> {
    fn generate(&self, prompt: &Prompt) -> Result<Utterance> {
        let wrapped = prompt.clone().with_instruction(&Self::instruction());
        let inner = self.inner.generate(&wrapped)?;
        match split_reply(&inner.text) {
            Some(reply) => {
                let mut out = Utterance::from_completion(reply)?;
                out.raw = inner.raw;
                out.format_ok = inner.format_ok;
                Ok(out)
            }
            None => {
                log::warn!("reply delimiter missing; using the full completion");
                Ok(Utterance {
                    format_ok: false,
                    ..inner
                })
            }
        }
    }
}

/// Self-reflection baseline: draft, critique, revision. Emits the revision.
#[derive(Debug, Clone)]
pub struct SelfReflectGenerator<G> {
    inner: G,
}

impl<G: Generator> SelfReflectGenerator<G> {
    pub fn new(inner: G) -> Self {
        Self { inner }
    }
}

impl<G: Generator> Generator for SelfReflectGenerator<G> {
    fn generate(&self, prompt: &Prompt) -> Result<Utterance> {
        let draft = self.inner.generate(prompt)?;

        let mut critique_prompt = prompt.clone().with_instruction(CRITIQUE_INSTRUCTION);
        critique_prompt.push(PromptRole::System, format!("Draft reply: {}", draft.text));
        critique_prompt.meta.stage = Stage::Critique;
        critique_prompt.meta.draft = Some(draft.text.clone());
        let critique = self.inner.generate(&critique_prompt)?;

        let mut revision_prompt = prompt.clone().with_instruction(REVISION_INSTRUCTION);
        revision_prompt.push(PromptRole::System, format!("Draft reply: {}", draft.text));
        revision_prompt.push(PromptRole::System, format!("Critique: {}", critique.text));
        revision_prompt.meta.stage = Stage::Revision;
        revision_prompt.meta.draft = Some(draft.text.clone());
        let revision = self.inner.generate(&revision_prompt)?;

        Ok(Utterance {
            raw: format!(
                "DRAFT:\n{}\n\nCRITIQUE:\n{}\n\nREVISION:\n{}",
                draft.raw, critique.raw, revision.raw
            ),
            ..revision
        })
    }
}

/// One line per event with both probabilities, unfiltered.
pub fn minddial_condition(
    self_truth: &BeliefVector,
    opp_knows: &BeliefVector,
    world_set: &WorldSet,
) -> Result<String> {
    if self_truth.perspective != Perspective::SelfTruth
        || opp_knows.perspective != Perspective::OpponentKnows
    {
        return Err(Error::domain("belief vectors have the wrong perspectives"));
    }
    let n = world_set.len();
    if self_truth.world_set_size() != n || opp_knows.world_set_size() != n {
        return Err(Error::domain(format!(
            "belief vectors do not match a world set of {n} events"
        )));
    }
    Ok(world_set
        .events()
        .iter()
        .zip(self_truth.values().iter().zip(opp_knows.values()))
        .map(|(e, (t, k))| format!("- {} (P(true)={t:.2}, P(known)={k:.2})", e.text))
        .collect::<Vec<_>>()
        .join("\n"))
}

pub fn minddial_slots(opponent_name: &str, table: String) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("opponent_name".to_owned(), opponent_name.to_owned()),
        ("belief_table".to_owned(), table),
    ])
}
