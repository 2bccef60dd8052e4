//! Experiment orchestration: seeded episode batches, persistence, metrics.
//!
//! Episode `i` of repetition `r` plays scenario `i mod n` with seed
//! `derive_seed([seed, r, i])`, so results do not depend on worker count
//! or scheduling. Records are written in (repetition, index) order.

mod config;
mod metrics;
mod records;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use crate::belief::{
    BeliefEstimator, KeywordEstimator, RandomEstimator, RemoteEstimator, RemoteEstimatorConfig,
    TrainingSource,
};
use crate::games::mf::Judge;
use crate::games::{
    casino, ckbg, context_from_transcript, mf, training_sources, with_rules, Agent, BeliefSource,
    Episode, EpisodeOutcome, GameId, Scenario,
};
use crate::generation::{Backend, Generator, RemoteGenerator, ScriptedGenerator};
use crate::seed::derive_seed;
use crate::{Error, Result};

pub use config::{report_path_for, DatasetConfig, EstimatorChoice, ExperimentConfig};
pub use metrics::{
    compute_metrics, metrics_of, Counts, Metrics, MetricsReport, RepetitionMetrics,
    TOKEN_CONVENTION, TURN_CONVENTION,
};
pub use records::{
    load_records, persist_records, read_dataset, read_jsonl, write_dataset, write_jsonl,
    DatasetLine, EpisodeRecord, JsonlWriter, SCHEMA_VERSION,
};

/// Stream tag separating the plain agent's seed from the method agent's.
const PLAIN_AGENT_STREAM: u64 = 1;
const RANDOM_ESTIMATOR_STREAM: u64 = 2;

pub fn default_max_turns(game: GameId) -> usize {
    match game {
        GameId::Ckbg => ckbg::DEFAULT_MAX_TURNS,
        GameId::Mf => mf::DEFAULT_MAX_TURNS,
        GameId::Casino => casino::DEFAULT_MAX_TURNS,
    }
}

/// `n` freshly generated scenarios of `game`.
pub fn generate_scenarios(
    game: GameId,
    n: usize,
    seed: u64,
    dataset: &DatasetConfig,
) -> Result<Vec<Scenario>> {
    Ok(match game {
        GameId::Ckbg => ckbg::generate_dataset(n, &dataset.condition_count, seed)?
            .0
            .into_iter()
            .map(Scenario::Ckbg)
            .collect(),
        GameId::Mf => mf::generate_scenarios(n, &dataset.mf_shape, seed)?
            .into_iter()
            .map(Scenario::Mf)
            .collect(),
        GameId::Casino => casino::generate_scenarios(n, seed)?
            .into_iter()
            .map(Scenario::Casino)
            .collect(),
    })
}

/// Builds the generator a config asks for.
pub fn build_generator(config: &ExperimentConfig) -> Result<Arc<dyn Generator>> {
    Ok(match &config.generator.backend {
        Backend::Scripted { script } => {
            let table = match script {
                Some(path) => ScriptedGenerator::from_json_file(path)?,
                None => ScriptedGenerator::default(),
            };
            Arc::new(with_rules(table))
        }
        Backend::Remote { .. } => Arc::new(RemoteGenerator::from_config(config.generator.clone())?),
    })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<EpisodeRecord>,
    pub report: MetricsReport,
}

/// A configured experiment, ready to run or replay episodes.
pub struct Runner {
    config: ExperimentConfig,
    fingerprint: String,
    generator: Arc<dyn Generator>,
    remote_estimator: Option<Arc<RemoteEstimator>>,
    scenarios: Vec<Scenario>,
}

impl std::fmt::Debug for Runner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runner")
            .field("config", &self.config)
            .field("fingerprint", &self.fingerprint)
            .field("scenarios", &self.scenarios.len())
            .finish()
    }
}

impl Runner {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let generator = build_generator(&config)?;
        Self::with_generator(config, generator)
    }

    /// Uses `generator` for every agent regardless of the configured backend.
    pub fn with_generator(config: ExperimentConfig, generator: Arc<dyn Generator>) -> Result<Self> {
        config.validate()?;
        let remote_estimator = match config.resolved_estimator() {
            Some(EstimatorChoice::Remote {
                endpoint,
                retries,
                timeout_ms,
            }) => {
                let mut c = match endpoint {
                    Some(e) => RemoteEstimatorConfig::new(e),
                    None => RemoteEstimatorConfig::from_env()?,
                };
                if let Some(r) = retries {
                    c.retries = r;
                }
                if let Some(t) = timeout_ms {
                    c.timeout_ms = t;
                }
                Some(Arc::new(RemoteEstimator::new(c)))
            }
            _ => None,
        };
        let scenarios = match &config.dataset.path {
            Some(path) => {
                let all = read_dataset(path).map_err(|e| match e {
                    Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
                    e => e,
                })?;
                if all.is_empty() {
                    return Err(Error::Config(format!(
                        "{} holds no scenarios",
                        path.display()
                    )));
                }
                if let Some(s) = all.iter().find(|s| s.game() != config.game) {
                    return Err(Error::Config(format!(
                        "{}: scenario {} is a {} scenario, expected {}",
                        path.display(),
                        s.id(),
                        s.game(),
                        config.game
                    )));
                }
                all
            }
            None => generate_scenarios(
                config.game,
                config.n_episodes,
                config.dataset_seed(),
                &config.dataset,
            )?,
        };
        Ok(Self {
            fingerprint: config.fingerprint(),
            config,
            generator,
            remote_estimator,
            scenarios,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn episode_seed(&self, repetition: usize, index: usize) -> u64 {
        derive_seed(&[self.config.seed, repetition as u64, index as u64])
    }

    fn belief_source(&self, episode_seed: u64) -> BeliefSource {
        match self.config.resolved_estimator() {
            None | Some(EstimatorChoice::Oracle) => BeliefSource::Oracle,
            Some(EstimatorChoice::Keyword) => BeliefSource::Estimator(Arc::new(KeywordEstimator)),
            Some(EstimatorChoice::Random) => {
                let seed = derive_seed(&[episode_seed, RANDOM_ESTIMATOR_STREAM]);
                BeliefSource::Estimator(Arc::new(RandomEstimator { seed }))
            }
            Some(EstimatorChoice::Remote { .. }) => {
                let remote = self
                    .remote_estimator
                    .clone()
                    .expect("built with the runner");
                BeliefSource::Estimator(remote as Arc<dyn BeliefEstimator>)
            }
        }
    }

    /// Plays `scenario` with the agents seeded by `episode_seed`.
    pub fn play(&self, scenario: &Scenario, episode_seed: u64) -> Result<Episode> {
        let method_agent = Agent::new(
            self.config.method,
            self.generator.clone(),
            self.belief_source(episode_seed),
        )
        .with_epsilon(self.config.epsilon)
        .with_policy(self.config.policy)
        .with_seed(episode_seed);
        let plain = Agent::plain(self.generator.clone())
            .with_seed(derive_seed(&[episode_seed, PLAIN_AGENT_STREAM]));
        let max_turns = self
            .config
            .max_turns
            .unwrap_or_else(|| default_max_turns(self.config.game));
        match scenario {
            Scenario::Ckbg(s) => ckbg::run_episode(s, &method_agent, &plain, max_turns),
            Scenario::Mf(s) => {
                let judge = Judge::new(self.config.judge, self.generator.clone());
                mf::run_episode(s, [&method_agent, &method_agent], max_turns, &judge)
            }
            Scenario::Casino(s) => casino::run_episode(s, [&method_agent, &plain], max_turns),
        }
    }

    /// Runs one episode. Infrastructure failures yield a record flagged as
    /// such; other errors abort.
    pub fn run_one(&self, repetition: usize, index: usize) -> Result<EpisodeRecord> {
        let scenario = self.scenarios[index % self.scenarios.len()].clone();
        let episode_seed = self.episode_seed(repetition, index);
        let (transcript, outcome) = match self.play(&scenario, episode_seed) {
            Ok(ep) => (ep.transcript, ep.outcome),
            Err(e) if e.is_infrastructure() => {
                let message = format!("episode {repetition}/{index} ({}): {e}", scenario.id());
                log::warn!("{message}; excluded");
                let mut outcome = EpisodeOutcome::new(self.config.game);
                outcome.infrastructure_failure = true;
                outcome.error = Some(message);
                (Vec::new(), outcome)
            }
            Err(e) => return Err(e),
        };
        Ok(EpisodeRecord {
            schema: SCHEMA_VERSION,
            config_fingerprint: self.fingerprint.clone(),
            repetition,
            index,
            episode_seed,
            method: self.config.method,
            scenario,
            transcript,
            outcome,
        })
    }

    /// Re-plays a persisted record.
    pub fn replay(&self, record: &EpisodeRecord) -> Result<Episode> {
        if record.config_fingerprint != self.fingerprint {
            return Err(Error::Config(format!(
                "record was produced by config {}, this runner is {}",
                record.config_fingerprint, self.fingerprint
            )));
        }
        self.play(&record.scenario, record.episode_seed)
    }

    /// Runs every episode, appending records to the configured output as
    /// they complete (in order), then writes the report next to them.
    pub fn run(&self) -> Result<RunOutput> {
        let jobs: Vec<(usize, usize)> = (0..self.config.repetitions)
            .flat_map(|r| (0..self.config.n_episodes).map(move |i| (r, i)))
            .collect();
        let mut writer = JsonlWriter::create(&self.config.output)?;
        let mut records = Vec::with_capacity(jobs.len());
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let (tx, rx) = mpsc::channel::<(usize, Result<EpisodeRecord>)>();
        let mut failure = None;
        std::thread::scope(|scope| {
            for _ in 0..self.config.workers.min(jobs.len()) {
                let tx = tx.clone();
                let (next, stop, jobs) = (&next, &stop, &jobs);
                scope.spawn(move || loop {
                    if stop.load(Ordering::Relaxed) {
                        break;
                    }
                    let job = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(r, i)) = jobs.get(job) else { break };
                    if tx.send((job, self.run_one(r, i))).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            let mut pending = BTreeMap::new();
            let mut expected = 0;
            for (job, result) in rx {
                match result {
                    Ok(record) => {
                        pending.insert(job, record);
                    }
                    Err(e) => {
                        stop.store(true, Ordering::Relaxed);
                        failure.get_or_insert(e);
                    }
                }
                while let Some(record) = pending.remove(&expected) {
                    if failure.is_none() {
                        if let Err(e) = writer.append(&record) {
                            stop.store(true, Ordering::Relaxed);
                            failure = Some(e);
                        }
                    }
                    records.push(record);
                    expected += 1;
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        writer.finish()?;
        let report = compute_metrics(&records, self.config.game)?;
        let path = self.config.report_path();
        std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
        Ok(RunOutput { records, report })
    }
}

/// Runs the experiment a config describes.
pub fn run_experiment(config: ExperimentConfig) -> Result<RunOutput> {
    Runner::new(config)?.run()
}

/// Ground truth of every valid record, ready for training-data emission.
pub fn training_sources_from_records(records: &[EpisodeRecord]) -> Result<Vec<TrainingSource>> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.outcome.is_valid()) {
        let context = context_from_transcript(&r.transcript);
        let id = format!("{}-{}-{}", r.config_fingerprint, r.repetition, r.index);
        out.extend(training_sources(&r.scenario, &context, &id)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::Method;

    fn config(game: GameId, method: Method, dir: &std::path::Path) -> ExperimentConfig {
        let mut c: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "game": game,
            "method": method,
            "n_episodes": 4,
            "repetitions": 2,
            "seed": 11,
            "output": dir.join("records.jsonl"),
        }))
        .unwrap();
        c.validate().unwrap();
        c.workers = 3;
        c
    }

    #[test]
    fn runs_every_game_and_method() {
        let dir = tempfile::tempdir().unwrap();
        for game in [GameId::Ckbg, GameId::Mf, GameId::Casino] {
            for method in Method::ALL {
                let out = run_experiment(config(game, method, dir.path())).unwrap();
                assert_eq!(out.records.len(), 8, "{game} {method:?}");
                assert!(!out.report.is_empty(), "{game} {method:?}");
                assert!(out.report.check_consistency(1e-9));
                let loaded = load_records(&dir.path().join("records.jsonl")).unwrap();
                assert_eq!(loaded, out.records);
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(GameId::Casino, Method::Beda, dir.path());
        let parallel = run_experiment(c.clone()).unwrap().records;
        c.workers = 1;
        let serial = Runner::new(c).unwrap().run().unwrap().records;
        assert_eq!(serial.len(), parallel.len());
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.transcript, b.transcript);
            assert_eq!(a.outcome, b.outcome);
        }
    }

    #[test]
    fn replay_reproduces_transcripts() {
        let dir = tempfile::tempdir().unwrap();
        let runner = Runner::new(config(GameId::Mf, Method::Beda, dir.path())).unwrap();
        let out = runner.run().unwrap();
        for r in &out.records {
            assert_eq!(runner.replay(r).unwrap().transcript, r.transcript);
        }
    }

    #[test]
    fn training_sources_cover_valid_records() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(config(GameId::Ckbg, Method::Beda, dir.path())).unwrap();
        let sources = training_sources_from_records(&out.records).unwrap();
        assert_eq!(sources.len(), 2 * out.report.counts.valid);
    }
}
