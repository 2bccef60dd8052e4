use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{GameId, Generator, Prompt, Utterance};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScriptKey {
    pub game: GameId,
    pub role: String,
    pub turn_index: usize,
}

impl ScriptKey {
    pub fn new(game: GameId, role: impl Into<String>, turn_index: usize) -> Self {
        Self {
            game,
            role: role.into(),
            turn_index,
        }
    }
}

#[derive(Deserialize)]
struct ScriptEntry {
    #[serde(flatten)]
    key: ScriptKey,
    text: String,
}

/// Computes a completion from the prompt alone.
pub type RuleFn = Arc<dyn Fn(&Prompt) -> Result<String> + Send + Sync>;

/// Deterministic generator: table lookup on (game, role, turn index), then
/// an optional rule for keys the table does not cover.
#[derive(Clone, Default)]
pub struct ScriptedGenerator {
    table: BTreeMap<ScriptKey, String>,
    rule: Option<RuleFn>,
}

impl fmt::Debug for ScriptedGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScriptedGenerator")
            .field("entries", &self.table.len())
            .field("rule", &self.rule.is_some())
            .finish()
    }
}

impl ScriptedGenerator {
    pub fn new(table: BTreeMap<ScriptKey, String>) -> Self {
        Self { table, rule: None }
    }

    pub fn with_rule(mut self, rule: RuleFn) -> Self {
        self.rule = Some(rule);
        self
    }

    pub fn insert(&mut self, key: ScriptKey, text: impl Into<String>) {
        self.table.insert(key, text.into());
    }

    /// Loads a JSON array of `{game, role, turn_index, text}` entries.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&raw)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(
            entries.into_iter().map(|e| (e.key, e.text)).collect(),
        ))
    }

    fn lookup(&self, prompt: &Prompt) -> Option<&str> {
        let game = prompt.meta.game?;
        let key = ScriptKey::new(game, prompt.meta.role.clone(), prompt.meta.turn_index);
        self.table.get(&key).map(String::as_str)
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&self, prompt: &Prompt) -> Result<Utterance> {
        let text = match (self.lookup(prompt), &self.rule) {
            (Some(text), _) => text.to_owned(),
            (None, Some(rule)) => rule(prompt)?,
            (None, None) => {
                return Err(Error::Format(format!(
                    "no scripted completion for role `{}` turn {}",
                    prompt.meta.role, prompt.meta.turn_index
                )))
            }
        };
        Utterance::from_completion(text)
    }
}

/// Adapts a closure into a generator.
pub struct FnGenerator<F>(pub F);

impl<F> Generator for FnGenerator<F>
where
    F: Fn(&Prompt) -> Result<String> + Send + Sync,
{
    fn generate(&self, prompt: &Prompt) -> Result<Utterance> {
        Utterance::from_completion((self.0)(prompt)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::PromptMeta;

    fn prompt(role: &str, turn: usize) -> Prompt {
        Prompt::new(
            "sys",
            vec![],
            PromptMeta {
                game: Some(GameId::Ckbg),
                role: role.into(),
                turn_index: turn,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn table_lookup() {
        let mut g = ScriptedGenerator::default();
        g.insert(
            ScriptKey::new(GameId::Ckbg, "keeper", 0),
            "The watch is safe.",
        );
        let u = g.generate(&prompt("keeper", 0)).unwrap();
        assert_eq!(u.text, "The watch is safe.");
        assert_eq!(u.token_count, 4);
        assert!(g.generate(&prompt("keeper", 1)).is_err());
    }

    #[test]
    fn rule_fallback() {
        let g = ScriptedGenerator::default().with_rule(Arc::new(|p: &Prompt| {
            Ok(format!("turn {}", p.meta.turn_index))
        }));
        assert_eq!(g.generate(&prompt("burglar", 3)).unwrap().text, "turn 3");
    }

    #[test]
    fn loads_json_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(
            &path,
            r#"[{"game":"mf","role":"a","turn_index":2,"text":"hello there"}]"#,
        )
        .unwrap();
        let g = ScriptedGenerator::from_json_file(&path).unwrap();
        let mut p = prompt("a", 2);
        p.meta.game = Some(GameId::Mf);
        assert_eq!(g.generate(&p).unwrap().text, "hello there");
    }
}
