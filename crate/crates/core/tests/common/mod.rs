#![allow(dead_code)]

pub mod http;

use std::path::PathBuf;
use std::sync::Arc;

use beda_core::games::casino::{self, CasinoScenario, Preference};
use beda_core::games::ckbg::{self, case_study_setting};
use beda_core::games::mf::{self, Judge, JudgeMode, MfScenario};
use beda_core::games::{rule_generator, Agent, BeliefSource, Episode, Method, TurnLog};
use beda_core::generation::Generator;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Fixture contents; `BLESS=1` rewrites the file from `actual` first.
pub fn golden(name: &str, actual: &str) -> String {
    let path = fixture_path(name);
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn mf_scenario() -> MfScenario {
    MfScenario {
        id: "golden".into(),
        names: ["Alex".into(), "Sam".into()],
        attributes: strings(&["School", "Major", "Hobby"]),
        friends: [
            vec![
                strings(&["University of Redlands", "Greek", "Kayaking"]),
                strings(&["Boston College", "English Language", "Chess"]),
            ],
            vec![
                strings(&["Boston College", "Astrophysics", "Chess"]),
                strings(&["University of Redlands", "Greek", "Kayaking"]),
                strings(&["Ohio State University", "English Language", "Origami"]),
            ],
        ],
        mutual: [0, 1],
    }
}

pub fn casino_scenario() -> CasinoScenario {
    CasinoScenario::new(
        "golden",
        ["Ava".into(), "Ben".into()],
        [Preference::ALL[0], Preference::ALL[5]],
    )
}

pub fn rules() -> Arc<dyn Generator> {
    Arc::new(rule_generator())
}

pub fn oracle_agent(method: Method) -> Agent {
    Agent::new(method, rules(), BeliefSource::Oracle)
}

pub fn ckbg_case_episode(method: Method) -> Episode {
    let keeper = oracle_agent(method);
    let burglar = Agent::plain(rules());
    ckbg::run_episode(
        &case_study_setting(),
        &keeper,
        &burglar,
        ckbg::DEFAULT_MAX_TURNS,
    )
    .unwrap()
}

pub fn mf_episode(method: Method) -> Episode {
    let a = oracle_agent(method);
    let judge = Judge::new(JudgeMode::Rule, rules());
    mf::run_episode(&mf_scenario(), [&a, &a], mf::DEFAULT_MAX_TURNS, &judge).unwrap()
}

pub fn casino_episode(method: Method) -> Episode {
    let a = oracle_agent(method);
    let b = Agent::plain(rules());
    casino::run_episode(&casino_scenario(), [&a, &b], casino::DEFAULT_MAX_TURNS).unwrap()
}

/// First turn whose prompt was conditioned on selected beliefs.
pub fn first_conditioned(episode: &Episode) -> &TurnLog {
    episode
        .transcript
        .iter()
        .find(|t| !t.selections.is_empty() && t.selections.iter().any(|s| !s.fallback))
        .expect("a conditioned turn")
}
