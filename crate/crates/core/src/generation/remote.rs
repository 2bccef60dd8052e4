//! Chat-completions client. Opponent turns become `user` messages and the
//! agent's own turns `assistant` messages.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, Generator, GeneratorConfig, Prompt, PromptRole, Utterance};
use crate::{Error, Result};

pub const GEN_ENDPOINT_VAR: &str = "GEN_ENDPOINT";
pub const GEN_API_KEY_VAR: &str = "GEN_API_KEY";
pub const GEN_MODEL_VAR: &str = "GEN_MODEL";

const BACKOFF_MS: u64 = 250;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

impl ChatRequest {
    pub fn from_prompt(prompt: &Prompt, model: &str, config: &GeneratorConfig) -> Self {
        let message = |role: &str, content: &str| ChatMessage {
            role: role.to_owned(),
            content: content.to_owned(),
        };
        let mut messages = vec![message("system", &prompt.system)];
        messages.extend(prompt.turns.iter().map(|(role, text)| {
            let role = match role {
                PromptRole::Interlocutor => "user",
                PromptRole::SelfRole => "assistant",
                PromptRole::System => "system",
            };
            message(role, text)
        }));
        Self {
            model: model.to_owned(),
            messages,
            temperature: config.temperature,
            max_tokens: config.max_turn_tokens,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    config: GeneratorConfig,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteGenerator {
    pub fn new(
        config: GeneratorConfig,
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            agent,
        })
    }

    /// Resolves the endpoint, model and key from the config, falling back
    /// to the `GEN_*` environment variables.
    pub fn from_config(config: GeneratorConfig) -> Result<Self> {
        let (endpoint, model) = match &config.backend {
            Backend::Remote { endpoint, model } => (endpoint.clone(), model.clone()),
            Backend::Scripted { .. } => {
                return Err(Error::Config("generator backend is not remote".into()))
            }
        };
        let env = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        let endpoint = endpoint
            .or_else(|| env(GEN_ENDPOINT_VAR))
            .ok_or_else(|| Error::Config(format!("{GEN_ENDPOINT_VAR} is not set")))?;
        let model = model
            .or_else(|| env(GEN_MODEL_VAR))
            .ok_or_else(|| Error::Config(format!("{GEN_MODEL_VAR} is not set")))?;
        Self::new(config, endpoint, model, env(GEN_API_KEY_VAR))
    }

    fn post(&self, request: &ChatRequest) -> Result<String> {
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(BACKOFF_MS * attempt as u64));
            }
            let mut call = self.agent.post(&self.endpoint);
            if let Some(key) = &self.api_key {
                call = call.header("Authorization", &format!("Bearer {key}"));
            }
            match call.send_json(request) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    let body = response
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| Error::Protocol(format!("unreadable body: {e}")))?;
                    if status == 429 || status >= 500 {
                        log::warn!("generator attempt {} got status {status}", attempt + 1);
                        last = format!("status {status}: {body}");
                        continue;
                    }
                    if !(200..300).contains(&status) {
                        return Err(Error::Protocol(format!("status {status}: {body}")));
                    }
                    return Ok(body);
                }
                Err(e) => {
                    log::warn!("generator attempt {} failed: {e}", attempt + 1);
                    last = e.to_string();
                }
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }
}

pub(crate) fn decode_completion(body: &str) -> Result<String> {
    let response: ChatResponse = serde_json::from_str(body)
        .map_err(|e| Error::Protocol(format!("malformed completion body: {e}")))?;
    let choice = response
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| Error::Protocol("completion has no choices".into()))?;
    Ok(choice.message.content.unwrap_or_default())
}

impl Generator for RemoteGenerator {
    fn generate(&self, prompt: &Prompt) -> Result<Utterance> {
        let request = ChatRequest::from_prompt(prompt, &self.model, &self.config);
        let body = self.post(&request)?;
        Utterance::from_completion(decode_completion(&body)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::PromptMeta;

    #[test]
    fn roles_interleave() {
        let p = Prompt::new(
            "sys",
            vec![
                (PromptRole::Interlocutor, "q".into()),
                (PromptRole::SelfRole, "a".into()),
                (PromptRole::System, "s".into()),
            ],
            PromptMeta::default(),
        )
        .unwrap();
        let req = ChatRequest::from_prompt(&p, "m", &GeneratorConfig::default());
        let roles: Vec<_> = req.messages.iter().map(|m| m.role.as_str()).collect();
        assert_eq!(roles, ["system", "user", "assistant", "system"]);
        assert_eq!(req.temperature, 0.0);
        assert_eq!(req.max_tokens, 512);
    }

    #[test]
    fn decode_variants() {
        assert_eq!(
            decode_completion(
                r#"{"choices":[{"message":{"role":"assistant","content":"A B C"}}]}"#
            )
            .unwrap(),
            "A B C"
        );
        assert!(matches!(
            decode_completion(r#"{"choices":[]}"#),
            Err(Error::Protocol(_))
        ));
        assert!(matches!(
            decode_completion("<html>"),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn scripted_backend_is_not_remote() {
        assert!(RemoteGenerator::from_config(GeneratorConfig::default()).is_err());
    }
}
