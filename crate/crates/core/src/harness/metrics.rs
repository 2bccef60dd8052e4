use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::records::EpisodeRecord;
use crate::games::{EpisodeOutcome, GameId};
use crate::{Error, Result};

pub const TOKEN_CONVENTION: &str = "whitespace tokens of dialogue utterances, both sides";
pub const TURN_CONVENTION: &str = "dialogue utterances by either side";

/// Rates and averages over valid episodes; `None` when undefined.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Percent.
    pub success_rate: Option<f64>,
    pub avg_turns: Option<f64>,
    pub avg_tokens: Option<f64>,
    /// Success rate in percent over average turns.
    pub sr_per_turn: Option<f64>,
    pub sr_per_token: Option<f64>,
    /// Fraction of valid episodes.
    pub agreement_rate: Option<f64>,
    /// Method side's reward, over agreeing episodes.
    pub mean_reward: Option<f64>,
    /// Fallbacks over belief-conditioned turns.
    pub fallback_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub episodes: usize,
    pub valid: usize,
    pub format_errors: usize,
    pub infrastructure_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionMetrics {
    pub repetition: usize,
    pub counts: Counts,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub game: GameId,
    pub token_convention: String,
    pub turn_convention: String,
    pub repetitions: Vec<RepetitionMetrics>,
    pub counts: Counts,
    /// Arithmetic mean of the defined per-repetition values.
    pub mean: Metrics,
}

impl MetricsReport {
    /// No episode survived exclusion.
    pub fn is_empty(&self) -> bool {
        self.counts.valid == 0
    }

    /// Each per-repetition ratio and mean agrees with its components.
    pub fn check_consistency(&self, tol: f64) -> bool {
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= tol,
            (None, None) => true,
            _ => false,
        };
        let ratio = |sr: Option<f64>, avg: Option<f64>| match (sr, avg) {
            (Some(s), Some(a)) if a > 0.0 => Some(s / a),
            _ => None,
        };
        self.repetitions.iter().all(|r| {
            let m = &r.metrics;
            close(m.sr_per_turn, ratio(m.success_rate, m.avg_turns))
                && close(m.sr_per_token, ratio(m.success_rate, m.avg_tokens))
        })
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn ratio(num: f64, den: Option<f64>) -> Option<f64> {
    den.filter(|d| *d > 0.0).map(|d| num / d)
}

/// Metrics of one group of episodes.
pub fn metrics_of(game: GameId, outcomes: &[&EpisodeOutcome], conditioned_turns: usize) -> Metrics {
    let valid: Vec<&&EpisodeOutcome> = outcomes.iter().filter(|o| o.is_valid()).collect();
    if valid.is_empty() {
        return Metrics::default();
    }
    let n = valid.len() as f64;
    let avg_turns = mean(valid.iter().map(|o| o.turns as f64));
    let avg_tokens = mean(valid.iter().map(|o| o.total_tokens() as f64));
    let fallbacks: usize = valid.iter().map(|o| o.fallback_count).sum();
    let fallback_rate =
        (conditioned_turns > 0).then(|| fallbacks as f64 / conditioned_turns as f64);
    let mut m = Metrics {
        avg_turns,
        avg_tokens,
        fallback_rate,
        ..Metrics::default()
    };
    match game {
        GameId::Casino => {
            let agreed: Vec<_> = valid.iter().filter(|o| o.agreement == Some(true)).collect();
            m.agreement_rate = Some(agreed.len() as f64 / n);
            m.mean_reward = mean(agreed.iter().filter_map(|o| o.rewards.map(|r| r[0] as f64)));
        }
        GameId::Ckbg | GameId::Mf => {
            let wins = valid.iter().filter(|o| o.success == Some(true)).count();
            let sr = 100.0 * wins as f64 / n;
            m.success_rate = Some(sr);
            m.sr_per_turn = ratio(sr, avg_turns);
            m.sr_per_token = ratio(sr, avg_tokens);
        }
    }
    m
}

fn counts_of(outcomes: &[&EpisodeOutcome]) -> Counts {
    Counts {
        episodes: outcomes.len(),
        valid: outcomes.iter().filter(|o| o.is_valid()).count(),
        format_errors: outcomes.iter().filter(|o| o.format_error).count(),
        infrastructure_failures: outcomes.iter().filter(|o| o.infrastructure_failure).count(),
    }
}

fn mean_metrics(reps: &[RepetitionMetrics]) -> Metrics {
    let pick = |f: fn(&Metrics) -> Option<f64>| mean(reps.iter().filter_map(|r| f(&r.metrics)));
    Metrics {
        success_rate: pick(|m| m.success_rate),
        avg_turns: pick(|m| m.avg_turns),
        avg_tokens: pick(|m| m.avg_tokens),
        sr_per_turn: pick(|m| m.sr_per_turn),
        sr_per_token: pick(|m| m.sr_per_token),
        agreement_rate: pick(|m| m.agreement_rate),
        mean_reward: pick(|m| m.mean_reward),
        fallback_rate: pick(|m| m.fallback_rate),
    }
}

/// Aggregates records per repetition, excluding format-error and
/// infrastructure-failed episodes.
pub fn compute_metrics(records: &[EpisodeRecord], game: GameId) -> Result<MetricsReport> {
    if let Some(r) = records.iter().find(|r| r.outcome.game != game) {
        return Err(Error::domain(format!(
            "record {}/{} is a {} episode, expected {}",
            r.repetition, r.index, r.outcome.game, game
        )));
    }
    let mut groups: BTreeMap<usize, Vec<&EpisodeRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.repetition).or_default().push(r);
    }
    let repetitions: Vec<RepetitionMetrics> = groups
        .into_iter()
        .map(|(repetition, rs)| {
            let outcomes: Vec<&EpisodeOutcome> = rs.iter().map(|r| &r.outcome).collect();
            let conditioned = rs
                .iter()
                .filter(|r| r.outcome.is_valid())
                .flat_map(|r| &r.transcript)
                .filter(|t| !t.selections.is_empty())
                .count();
            RepetitionMetrics {
                repetition,
                counts: counts_of(&outcomes),
                metrics: metrics_of(game, &outcomes, conditioned),
            }
        })
        .collect();
    let all: Vec<&EpisodeOutcome> = records.iter().map(|r| &r.outcome).collect();
    Ok(MetricsReport {
        game,
        token_convention: TOKEN_CONVENTION.into(),
        turn_convention: TURN_CONVENTION.into(),
        counts: counts_of(&all),
        mean: mean_metrics(&repetitions),
        repetitions,
    })
}
