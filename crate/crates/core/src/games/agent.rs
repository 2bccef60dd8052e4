use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefEstimator, BeliefVector, DialogueContext, Perspective, WorldSet};
use crate::generation::{CotGenerator, Generator, Prompt, SelfReflectGenerator, Utterance};
use crate::seed::derive_seed;
use crate::selection::{SelectionPolicy, DEFAULT_EPSILON};
use crate::Result;

/// How an agent turns beliefs into a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Beda,
    WoBelief,
    WoBeliefCot,
    WoBeliefReflect,
    RandBelief,
    #[serde(rename = "MINDDIAL")]
    MindDial,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Beda,
        Method::WoBelief,
        Method::WoBeliefCot,
        Method::WoBeliefReflect,
        Method::RandBelief,
        Method::MindDial,
    ];

    /// Filters beliefs through the act constraints before conditioning.
    pub fn selects(self) -> bool {
        matches!(self, Method::Beda | Method::RandBelief)
    }

    /// Reads belief vectors at all.
    pub fn uses_beliefs(self) -> bool {
        matches!(self, Method::Beda | Method::RandBelief | Method::MindDial)
    }

    /// Applies the prompting technique the method stands for.
    pub fn wrap(self, generator: Arc<dyn Generator>) -> Arc<dyn Generator> {
        match self {
            Method::WoBeliefCot => Arc::new(CotGenerator::new(generator)),
            Method::WoBeliefReflect => Arc::new(SelfReflectGenerator::new(generator)),
            _ => generator,
        }
    }
}

/// Where belief vectors come from.
#[derive(Clone)]
pub enum BeliefSource {
    /// Ground truth supplied by the game.
    Oracle,
    Estimator(Arc<dyn BeliefEstimator>),
}

impl fmt::Debug for BeliefSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BeliefSource::Oracle => f.write_str("Oracle"),
            BeliefSource::Estimator(_) => f.write_str("Estimator"),
        }
    }
}

/// One side of a game.
#[derive(Clone)]
pub struct Agent {
    pub method: Method,
    generator: Arc<dyn Generator>,
    pub beliefs: BeliefSource,
    pub epsilon: f64,
    /// Overrides the game's default selection policy.
    pub policy: Option<SelectionPolicy>,
    pub seed: u64,
}

impl fmt::Debug for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Agent")
            .field("method", &self.method)
            .field("beliefs", &self.beliefs)
            .field("epsilon", &self.epsilon)
            .field("policy", &self.policy)
            .field("seed", &self.seed)
            .finish()
    }
}

impl Agent {
    /// Wraps `generator` as the method requires.
    pub fn new(method: Method, generator: Arc<dyn Generator>, beliefs: BeliefSource) -> Self {
        Self {
            method,
            generator: method.wrap(generator),
            beliefs,
            epsilon: DEFAULT_EPSILON,
            policy: None,
            seed: 0,
        }
    }

    /// An agent that never reads beliefs.
    pub fn plain(generator: Arc<dyn Generator>) -> Self {
        Self::new(Method::WoBelief, generator, BeliefSource::Oracle)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_policy(mut self, policy: Option<SelectionPolicy>) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn generate(&self, prompt: &Prompt) -> Result<Utterance> {
        self.generator.generate(prompt)
    }

    pub fn estimate(
        &self,
        context: &DialogueContext,
        world_set: &WorldSet,
        perspective: Perspective,
        truth: &BTreeSet<usize>,
    ) -> Result<BeliefVector> {
        match &self.beliefs {
            BeliefSource::Oracle => BeliefVector::indicator(perspective, world_set.len(), truth),
            BeliefSource::Estimator(e) => e.estimate(context, world_set, perspective),
        }
    }

    pub fn turn_seed(&self, turn: usize) -> u64 {
        derive_seed(&[self.seed, turn as u64])
    }
}
