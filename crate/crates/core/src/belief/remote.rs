//! Client for the estimation service.
//!
//! Request: `{ "context": str, "events": [str], "perspective": "self_truth" | "opponent_knows" }`.
//! Response: `{ "probabilities": [number] }`, one entry per event, each in `[0, 1]`.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BeliefEstimator, BeliefVector, DialogueContext, Perspective, WorldSet};
use crate::{Error, Result};

/// Environment variable naming the estimator endpoint.
pub const EST_ENDPOINT_VAR: &str = "EST_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRequest {
    pub context: String,
    pub events: Vec<String>,
    pub perspective: Perspective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResponse {
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEstimatorConfig {
    /// Full URL requests are POSTed to.
    pub endpoint: String,
    /// Extra attempts after a transport failure.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_retries() -> u32 {
    2
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_backoff_ms() -> u64 {
    200
}

impl RemoteEstimatorConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            retries: default_retries(),
            timeout_ms: default_timeout_ms(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn from_env() -> Result<Self> {
        std::env::var(EST_ENDPOINT_VAR)
            .map(Self::new)
            .map_err(|_| Error::Config(format!("{EST_ENDPOINT_VAR} is not set")))
    }
}

/// Estimator backed by the estimation service. Each call carries its own
/// retry state, so one client can serve concurrent callers.
#[derive(Debug, Clone)]
pub struct RemoteEstimator {
    config: RemoteEstimatorConfig,
    agent: ureq::Agent,
}

impl RemoteEstimator {
    pub fn new(config: RemoteEstimatorConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &RemoteEstimatorConfig {
        &self.config
    }

    fn post(&self, request: &EstimateRequest) -> Result<(u16, String)> {
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(
                    self.config.backoff_ms * attempt as u64,
                ));
            }
            match self.agent.post(&self.config.endpoint).send_json(request) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    let body = response
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| Error::Protocol(format!("unreadable body: {e}")))?;
                    return Ok((status, body));
                }
                Err(e) => {
                    log::warn!("estimator request attempt {} failed: {e}", attempt + 1);
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

/// Validates a service reply against the request it answers.
pub(crate) fn decode_response(
    status: u16,
    body: &str,
    expected_len: usize,
    perspective: Perspective,
) -> Result<BeliefVector> {
    if !(200..300).contains(&status) {
        return Err(Error::Protocol(format!("status {status}: {body}")));
    }
    let response: EstimateResponse = serde_json::from_str(body)
        .map_err(|e| Error::Protocol(format!("malformed response body: {e}")))?;
    if response.probabilities.len() != expected_len {
        return Err(Error::Protocol(format!(
            "expected {expected_len} probabilities, got {}",
            response.probabilities.len()
        )));
    }
    if let Some(p) = response
        .probabilities
        .iter()
        .find(|p| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::Protocol(format!("probability {p} outside [0, 1]")));
    }
    BeliefVector::new(perspective, response.probabilities)
}

impl BeliefEstimator for RemoteEstimator {
    fn estimate(
        &self,
        context: &DialogueContext,
        world_set: &WorldSet,
        perspective: Perspective,
    ) -> Result<BeliefVector> {
        let request = EstimateRequest {
            context: context.render(),
            events: world_set.texts(),
            perspective,
        };
        let (status, body) = self.post(&request)?;
        decode_response(status, &body, world_set.len(), perspective)
    }
}
