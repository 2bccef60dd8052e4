use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BeliefVector, DialogueContext, Perspective, WorldSet, PAYLOAD_KEYWORDS};
use crate::text::content_tokens;
use crate::Result;

/// Scores every event of a world set from one perspective.
pub trait BeliefEstimator: Send + Sync {
    fn estimate(
        &self,
        context: &DialogueContext,
        world_set: &WorldSet,
        perspective: Perspective,
    ) -> Result<BeliefVector>;
}

/// Indicator vector of a ground-truth set.
pub fn oracle_estimate(
    ground_truth: &BTreeSet<usize>,
    world_set: &WorldSet,
    perspective: Perspective,
) -> Result<BeliefVector> {
    BeliefVector::indicator(perspective, world_set.len(), ground_truth)
}

/// Ground truth per perspective, returned verbatim.
#[derive(Debug, Clone, Default)]
pub struct OracleEstimator {
    pub self_truth: BTreeSet<usize>,
    pub opponent_knows: BTreeSet<usize>,
}

impl OracleEstimator {
    pub fn new(self_truth: BTreeSet<usize>, opponent_knows: BTreeSet<usize>) -> Self {
        Self {
            self_truth,
            opponent_knows,
        }
    }
}

impl BeliefEstimator for OracleEstimator {
    fn estimate(
        &self,
        _context: &DialogueContext,
        world_set: &WorldSet,
        perspective: Perspective,
    ) -> Result<BeliefVector> {
        let truth = match perspective {
            Perspective::SelfTruth => &self.self_truth,
            Perspective::OpponentKnows => &self.opponent_knows,
        };
        oracle_estimate(truth, world_set, perspective)
    }
}

/// Independent fair coin per event, mapped to {0.0, 1.0}.
pub fn random_estimate(seed: u64, world_set: &WorldSet) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..world_set.len())
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
        .collect()
}

/// Seeded random beliefs; the two perspectives draw from distinct streams.
#[derive(Debug, Clone, Copy)]
pub struct RandomEstimator {
    pub seed: u64,
}

impl BeliefEstimator for RandomEstimator {
    fn estimate(
        &self,
        _context: &DialogueContext,
        world_set: &WorldSet,
        perspective: Perspective,
    ) -> Result<BeliefVector> {
        let seed = match perspective {
            Perspective::SelfTruth => self.seed,
            Perspective::OpponentKnows => self.seed ^ 0x9e37_79b9_7f4a_7c15,
        };
        BeliefVector::new(perspective, random_estimate(seed, world_set))
    }
}

/// Overlap score at or above which the keyword estimator marks an event.
pub const KEYWORD_THRESHOLD: f64 = 0.5;

/// Marks an event as mentioned when at least half of its content tokens
/// occur somewhere in the dialogue turns.
pub fn keyword_estimate(context: &DialogueContext, world_set: &WorldSet) -> Vec<f64> {
    let said = context
        .turns
        .iter()
        .flat_map(|t| content_tokens(&t.text))
        .collect::<BTreeSet<_>>();
    world_set
        .events()
        .iter()
        .map(|event| {
            let source = event.get(PAYLOAD_KEYWORDS).unwrap_or(&event.text);
            let wanted = content_tokens(source);
            if wanted.is_empty() {
                return 0.0;
            }
            let shared = wanted.intersection(&said).count();
            if shared as f64 / wanted.len() as f64 >= KEYWORD_THRESHOLD {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KeywordEstimator;

impl BeliefEstimator for KeywordEstimator {
    fn estimate(
        &self,
        context: &DialogueContext,
        world_set: &WorldSet,
        perspective: Perspective,
    ) -> Result<BeliefVector> {
        BeliefVector::new(perspective, keyword_estimate(context, world_set))
    }
}

/// Adapts a closure into an estimator.
pub struct FnEstimator<F>(pub F);

impl<F> BeliefEstimator for FnEstimator<F>
where
    F: Fn(&DialogueContext, &WorldSet, Perspective) -> Result<BeliefVector> + Send + Sync,
{
    fn estimate(
        &self,
        context: &DialogueContext,
        world_set: &WorldSet,
        perspective: Perspective,
    ) -> Result<BeliefVector> {
        (self.0)(context, world_set, perspective)
    }
}
