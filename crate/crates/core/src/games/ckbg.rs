//! Conditional keeper-burglar game.
//!
//! A keeper guards a valuable hidden in one of two containers and tries to
//! steer a burglar to the other one. Each setting instantiates up to five
//! condition classes, each known to the keeper, the burglar, or both.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::words::{CONTAINERS, DECOYS, NAMES, VALUABLES};
use super::{facts, to_facts, Agent, BeliefLog, Episode, Recorder, TurnPlan};
use crate::belief::{
    DialogueContext, Event, Perspective, TrainingSource, TruthSnapshot, TruthStyle, WorldSet,
};
use crate::epistemic::ActKind;
use crate::generation::templates::MINDDIAL_NOTICE;
use crate::generation::{
    minddial_condition, minddial_slots, parse_action, render_prompt, render_with_template,
    ActionGrammar, GameId, ParsedAction, Prompt, PromptMeta, PromptRole, Stage,
};
use crate::selection::{
    choose, compose_condition, feasible_set, ActConstraint, ConditionTemplate, SelectionPolicy,
};
use crate::text::article;
use crate::{Error, Result};

pub const KEEPER_ROLE: &str = "keeper";
pub const BURGLAR_ROLE: &str = "burglar";

pub const DEFAULT_MAX_TURNS: usize = 10;

/// Events every setting starts with: existence, two contents, the keeper's
/// goal and its lie propensity.
pub const BASE_EVENTS: usize = 5;

/// Base events the burglar knows: existence, goal, lie propensity.
const BURGLAR_BASE: [usize; 3] = [0, 3, 4];

/// Per-condition assignment: both sides, keeper only, burglar only.
pub const ASSIGN_BOTH: f64 = 0.65;
pub const ASSIGN_KEEPER_ONLY: f64 = 0.175;

pub const MAX_HOURS: u32 = 12;

pub const FORCED_CHOICE_INSTRUCTION: &str =
    "Time is up. Reply with \"[STOP]\" followed by the one container you choose.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConditionClass {
    Informer,
    BurglarInspection,
    KeeperInspection,
    OutsiderInspection,
    Noise,
}

impl ConditionClass {
    pub const ALL: [ConditionClass; 5] = [
        ConditionClass::Informer,
        ConditionClass::BurglarInspection,
        ConditionClass::KeeperInspection,
        ConditionClass::OutsiderInspection,
        ConditionClass::Noise,
    ];

    fn needs_container(self) -> bool {
        self != ConditionClass::Informer
    }

    fn needs_hours(self) -> bool {
        matches!(
            self,
            ConditionClass::BurglarInspection
                | ConditionClass::KeeperInspection
                | ConditionClass::OutsiderInspection
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CkbgCondition {
    pub class: ConditionClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hours: Option<u32>,
    /// The outsider's name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person: Option<String>,
}

impl CkbgCondition {
    pub fn informer() -> Self {
        Self {
            class: ConditionClass::Informer,
            container: None,
            hours: None,
            person: None,
        }
    }

    pub fn inspection(class: ConditionClass, container: usize, hours: u32) -> Self {
        Self {
            class,
            container: Some(container),
            hours: Some(hours),
            person: None,
        }
    }

    pub fn outsider(person: impl Into<String>, container: usize, hours: u32) -> Self {
        Self {
            person: Some(person.into()),
            ..Self::inspection(ConditionClass::OutsiderInspection, container, hours)
        }
    }

    pub fn noise(container: usize) -> Self {
        Self {
            class: ConditionClass::Noise,
            container: Some(container),
            hours: None,
            person: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CkbgSetting {
    pub id: String,
    pub keeper: String,
    pub burglar: String,
    pub containers: [String; 2],
    pub valuable: String,
    pub valuable_container: usize,
    pub decoy: String,
    pub conditions: Vec<CkbgCondition>,
    pub keeper_known: BTreeSet<usize>,
    pub burglar_known: BTreeSet<usize>,
}

fn hours_ago(hours: u32) -> String {
    if hours == 1 {
        "1 hour ago".to_owned()
    } else {
        format!("{hours} hours ago")
    }
}

impl CkbgSetting {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Data(format!("setting {}: {msg}", self.id)));
        if self.containers[0] == self.containers[1] {
            return bad("containers must differ".into());
        }
        if self.valuable_container > 1 {
            return bad(format!(
                "valuable container {} out of range",
                self.valuable_container
            ));
        }
        let mut seen = BTreeSet::new();
        for (i, c) in self.conditions.iter().enumerate() {
            if !seen.insert(c.class) {
                return bad(format!("condition class {:?} appears twice", c.class));
            }
            if c.class.needs_container() && !matches!(c.container, Some(0 | 1)) {
                return bad(format!("condition {i} needs a container index 0 or 1"));
            }
            if c.class.needs_hours() && c.hours.is_none() {
                return bad(format!("condition {i} needs hours"));
            }
            if c.class == ConditionClass::OutsiderInspection && c.person.is_none() {
                return bad(format!("condition {i} needs a person"));
            }
        }
        let n = self.conditions.len();
        if let Some(i) = self
            .keeper_known
            .union(&self.burglar_known)
            .find(|&&i| i >= n)
        {
            return bad(format!("known index {i} out of range"));
        }
        if self.keeper_known.union(&self.burglar_known).count() != n {
            return bad("every condition must be known to at least one side".into());
        }
        Ok(())
    }

    pub fn decoy_container(&self) -> usize {
        1 - self.valuable_container
    }

    pub fn content_of(&self, container: usize) -> &str {
        if container == self.valuable_container {
            &self.valuable
        } else {
            &self.decoy
        }
    }

    pub fn condition_text(&self, index: usize) -> String {
        let c = &self.conditions[index];
        let container = || &self.containers[c.container.unwrap_or(0)];
        let hours = || hours_ago(c.hours.unwrap_or(1));
        let (k, b) = (&self.keeper, &self.burglar);
        match c.class {
            ConditionClass::Informer => {
                format!("The burglar {b} has been informed that the keeper {k} may lie to him.")
            }
            ConditionClass::BurglarInspection => {
                let object = self.content_of(c.container.unwrap_or(0));
                format!(
                    "The burglar {b} opened the {} {} and observed {} {object} inside.",
                    container(),
                    hours(),
                    article(object)
                )
            }
            ConditionClass::KeeperInspection => {
                format!("The keeper {k} opened the {} {}.", container(), hours())
            }
            ConditionClass::OutsiderInspection => format!(
                "The burglar's friend {} opened the {} {}.",
                c.person.as_deref().unwrap_or("someone"),
                container(),
                hours()
            ),
            ConditionClass::Noise => format!("A noise is coming from the {}.", container()),
        }
    }

    /// Ordered world events: the five base events, then one per condition.
    pub fn world_events(&self) -> Result<WorldSet> {
        let [c0, c1] = &self.containers;
        let (k, b) = (&self.keeper, &self.burglar);
        let contains = |i: usize| {
            let item = self.content_of(i);
            format!(
                "The {} contains {} {item}.",
                self.containers[i],
                article(item)
            )
        };
        let mut events = vec![
            Event::new(format!(
                "There is {} {c0} and {} {c1} in the room.",
                article(c0),
                article(c1)
            )),
            Event::new(contains(0)),
            Event::new(contains(1)),
            Event::new(format!("The keeper {k}'s goal is to mislead burglar {b}.")),
            Event::new(format!("The keeper {k} probably lies to the burglar {b}.")),
        ];
        events.extend((0..self.conditions.len()).map(|i| {
            Event::new(self.condition_text(i))
                .with("class", format!("{:?}", self.conditions[i].class))
        }));
        WorldSet::new(events)
    }

    /// World-event ids true for the keeper.
    pub fn keeper_truth(&self) -> BTreeSet<usize> {
        (0..BASE_EVENTS)
            .chain(self.keeper_known.iter().map(|i| BASE_EVENTS + i))
            .collect()
    }

    /// World-event ids the burglar knows.
    pub fn burglar_truth(&self) -> BTreeSet<usize> {
        BURGLAR_BASE
            .into_iter()
            .chain(self.burglar_known.iter().map(|i| BASE_EVENTS + i))
            .collect()
    }

    fn known_class(&self, class: ConditionClass, side: &BTreeSet<usize>) -> Option<&CkbgCondition> {
        side.iter()
            .map(|&i| &self.conditions[i])
            .find(|c| c.class == class)
    }
}

/// Number of condition classes per setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionCount {
    Fixed(usize),
    /// `(count, weight)` pairs; weights need not sum to one.
    Categorical(Vec<(usize, f64)>),
}

impl ConditionCount {
    /// Distribution with mean 2.54.
    pub fn train_preset() -> Self {
        ConditionCount::Categorical(vec![(1, 0.15), (2, 0.30), (3, 0.41), (4, 0.14)])
    }

    pub fn validate(&self) -> Result<()> {
        let max = ConditionClass::ALL.len();
        let check = |k: usize| {
            if k == 0 || k > max {
                Err(Error::Config(format!(
                    "condition count {k} outside 1..={max}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            ConditionCount::Fixed(k) => check(*k),
            ConditionCount::Categorical(weights) => {
                for &(k, w) in weights {
                    check(k)?;
                    if w.is_nan() || w < 0.0 {
                        return Err(Error::Config(format!("negative weight {w}")));
                    }
                }
                if weights.iter().map(|w| w.1).sum::<f64>() <= 0.0 {
                    return Err(Error::Config("condition-count weights sum to zero".into()));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ConditionCount::Fixed(k) => *k as f64,
            ConditionCount::Categorical(w) => {
                let total: f64 = w.iter().map(|p| p.1).sum();
                w.iter().map(|&(k, p)| k as f64 * p).sum::<f64>() / total
            }
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        match self {
            ConditionCount::Fixed(k) => *k,
            ConditionCount::Categorical(w) => {
                let total: f64 = w.iter().map(|p| p.1).sum();
                let mut x = rng.random_range(0.0..total);
                for &(k, p) in w {
                    if x < p {
                        return k;
                    }
                    x -= p;
                }
                w.last().map(|p| p.0).unwrap_or(1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub settings: usize,
    pub conditions: usize,
    /// Condition allocations summed over both sides.
    pub known_conditions: usize,
    pub avg_conditions: f64,
}

impl DatasetSummary {
    pub fn of(settings: &[CkbgSetting]) -> Self {
        let conditions: usize = settings.iter().map(|s| s.conditions.len()).sum();
        let known_conditions = settings
            .iter()
            .map(|s| s.keeper_known.len() + s.burglar_known.len())
            .sum();
        Self {
            settings: settings.len(),
            conditions,
            known_conditions,
            avg_conditions: if settings.is_empty() {
                0.0
            } else {
                conditions as f64 / settings.len() as f64
            },
        }
    }
}

fn pick_distinct<'a>(rng: &mut ChaCha8Rng, list: &[&'a str], n: usize) -> Vec<&'a str> {
    let mut picked = list.iter().copied().choose_multiple(rng, n);
    picked.shuffle(rng);
    picked
}

fn generate_setting(index: usize, count: usize, rng: &mut ChaCha8Rng) -> CkbgSetting {
    let names = pick_distinct(rng, &NAMES, 3);
    let containers = pick_distinct(rng, &CONTAINERS, 2);
    let valuable = *VALUABLES.choose(rng).expect("word list");
    let decoy = *DECOYS.choose(rng).expect("word list");
    let valuable_container = rng.random_range(0..2usize);
    let mut classes = ConditionClass::ALL
        .iter()
        .copied()
        .choose_multiple(rng, count);
    classes.sort_unstable();
    let mut conditions = Vec::with_capacity(count);
    let mut keeper_known = BTreeSet::new();
    let mut burglar_known = BTreeSet::new();
    for (i, class) in classes.into_iter().enumerate() {
        let container = rng.random_range(0..2usize);
        let hours = rng.random_range(1..=MAX_HOURS);
        conditions.push(match class {
            ConditionClass::Informer => CkbgCondition::informer(),
            ConditionClass::Noise => CkbgCondition::noise(container),
            ConditionClass::OutsiderInspection => {
                CkbgCondition::outsider(names[2], container, hours)
            }
            other => CkbgCondition::inspection(other, container, hours),
        });
        let r: f64 = rng.random();
        if r < ASSIGN_BOTH {
            keeper_known.insert(i);
            burglar_known.insert(i);
        } else if r < ASSIGN_BOTH + ASSIGN_KEEPER_ONLY {
            keeper_known.insert(i);
        } else {
            burglar_known.insert(i);
        }
    }
    CkbgSetting {
        id: format!("ckbg-{index:05}"),
        keeper: names[0].to_owned(),
        burglar: names[1].to_owned(),
        containers: [containers[0].to_owned(), containers[1].to_owned()],
        valuable: valuable.to_owned(),
        valuable_container,
        decoy: decoy.to_owned(),
        conditions,
        keeper_known,
        burglar_known,
    }
}

/// Seeded settings plus their summary statistics.
pub fn generate_dataset(
    n_settings: usize,
    count: &ConditionCount,
    seed: u64,
) -> Result<(Vec<CkbgSetting>, DatasetSummary)> {
    if n_settings == 0 {
        return Err(Error::Config("n_settings must be at least 1".into()));
    }
    count.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let settings: Vec<CkbgSetting> = (0..n_settings)
        .map(|i| {
            let k = count.sample(&mut rng);
            generate_setting(i, k, &mut rng)
        })
        .collect();
    let summary = DatasetSummary::of(&settings);
    Ok((settings, summary))
}

fn speaker_labels(setting: &CkbgSetting) -> (String, String) {
    (
        format!("Homeowner {}", setting.keeper),
        format!("Burglar {}", setting.burglar),
    )
}

fn bullets<'a>(texts: impl IntoIterator<Item = &'a str>) -> String {
    let lines: Vec<String> = texts.into_iter().map(|t| format!("- {t}")).collect();
    if lines.is_empty() {
        "- none".to_owned()
    } else {
        lines.join("\n")
    }
}

fn keeper_background(setting: &CkbgSetting, world: &WorldSet) -> Result<String> {
    let cd = &setting.containers[setting.decoy_container()];
    let facts = setting
        .keeper_truth()
        .into_iter()
        .map(|i| world.get(i).map(|e| e.text.as_str()))
        .collect::<Result<Vec<_>>>()?;
    Ok(format!(
        "You are the keeper {k}. The burglar {b} wants to steal your {v}. Your goal is to mislead {b} into opening the {cd}. Never reveal where the {v} is.\nWhat you know:\n{facts}",
        k = setting.keeper,
        b = setting.burglar,
        v = setting.valuable,
        facts = bullets(facts),
    ))
}

fn burglar_background(setting: &CkbgSetting, world: &WorldSet) -> Result<String> {
    let [c0, c1] = &setting.containers;
    let facts = setting
        .burglar_truth()
        .into_iter()
        .map(|i| world.get(i).map(|e| e.text.as_str()))
        .collect::<Result<Vec<_>>>()?;
    Ok(format!(
        "You are the burglar {b}. You want to steal the {v}, which is in either the {c0} or the {c1}. The keeper {k} knows where it is. Talk with {k}; when you are ready, reply with \"[STOP]\" followed by the container you choose.\nWhat you know:\n{facts}",
        k = setting.keeper,
        b = setting.burglar,
        v = setting.valuable,
        facts = bullets(facts),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct KeeperFacts {
    valuable: String,
    decoy_container: String,
    #[serde(default)]
    cited: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BurglarFacts {
    keeper: String,
    valuable: String,
    containers: [String; 2],
    known: Vec<String>,
    informed: bool,
    /// Container the burglar saw the valuable in, directly or by elimination.
    #[serde(default)]
    inspected: Option<String>,
}

fn burglar_facts(setting: &CkbgSetting, world: &WorldSet) -> Result<BurglarFacts> {
    let known = setting
        .burglar_truth()
        .into_iter()
        .map(|i| world.get(i).map(|e| e.text.clone()))
        .collect::<Result<Vec<_>>>()?;
    let inspected = setting
        .known_class(ConditionClass::BurglarInspection, &setting.burglar_known)
        .and_then(|c| c.container)
        .map(|c| {
            let truth = if c == setting.valuable_container {
                c
            } else {
                1 - c
            };
            setting.containers[truth].clone()
        });
    Ok(BurglarFacts {
        keeper: setting.keeper.clone(),
        valuable: setting.valuable.clone(),
        containers: setting.containers.clone(),
        known,
        informed: setting
            .known_class(ConditionClass::Informer, &setting.burglar_known)
            .is_some(),
        inspected,
    })
}

/// Keeper prompt for the current context, with the conditioning it used.
pub(crate) fn keeper_prompt(
    setting: &CkbgSetting,
    world: &WorldSet,
    keeper: &Agent,
    context: &DialogueContext,
    turn_index: usize,
) -> Result<(Prompt, TurnPlan)> {
    let (keeper_label, _) = speaker_labels(setting);
    let background = keeper_background(setting, world)?;
    let self_truth = crate::belief::BeliefVector::indicator(
        Perspective::SelfTruth,
        world.len(),
        &setting.keeper_truth(),
    )?;
    let mut plan = TurnPlan::default();
    let mut slots = None;
    let mut template = None;
    let mut cited = None;
    if keeper.method.uses_beliefs() {
        let opp = keeper.estimate(
            context,
            world,
            Perspective::OpponentKnows,
            &setting.burglar_truth(),
        )?;
        plan.beliefs = Some(BeliefLog {
            self_truth: self_truth.values().to_vec(),
            opp_knows: opp.values().to_vec(),
        });
        if keeper.method.selects() {
            let constraint = ActConstraint::new(ActKind::Adversarial, keeper.epsilon)?;
            let feasible = feasible_set(&self_truth, &opp, constraint)?;
            let policy = keeper.policy.unwrap_or(SelectionPolicy::All);
            let selection = choose(&feasible, policy, keeper.turn_seed(turn_index));
            let condition = compose_condition(&selection.chosen, world, &ConditionTemplate::Ckbg)?;
            plan.fallback = condition.fallback;
            cited = selection
                .chosen
                .iter()
                .find(|&&i| i >= BASE_EVENTS)
                .map(|&i| world.get(i).map(|e| e.text.clone()))
                .transpose()?;
            if !condition.fallback {
                let predicted = opp.known();
                let mut s = condition.slots;
                s.insert("context".into(), dialogue_or_placeholder(context));
                s.insert(
                    "user_U".into(),
                    bullets(predicted.iter().map(|&i| world.events()[i].text.as_str())),
                );
                s.insert("task".into(), keeper_task(setting));
                slots = Some(s);
            }
            plan.selections.push(selection);
        } else {
            let table = minddial_condition(&self_truth, &opp, world)?;
            slots = Some(minddial_slots(&setting.burglar, table));
            template = Some(MINDDIAL_NOTICE);
            cited = setting
                .keeper_truth()
                .into_iter()
                .find(|&i| i >= BASE_EVENTS)
                .map(|i| world.get(i).map(|e| e.text.clone()))
                .transpose()?;
        }
    }
    let meta = PromptMeta {
        game: Some(GameId::Ckbg),
        role: KEEPER_ROLE.into(),
        turn_index,
        stage: Stage::Dialogue,
        facts: to_facts(&KeeperFacts {
            valuable: setting.valuable.clone(),
            decoy_container: setting.containers[setting.decoy_container()].clone(),
            cited,
        }),
        draft: None,
    };
    let prompt = match template {
        Some(t) => {
            render_with_template(t, &background, context, &keeper_label, slots.as_ref(), meta)?
        }
        None => render_prompt(
            GameId::Ckbg,
            &background,
            context,
            &keeper_label,
            slots.as_ref(),
            meta,
        )?,
    };
    Ok((prompt, plan))
}

fn keeper_task(setting: &CkbgSetting) -> String {
    format!(
        "mislead the burglar {} into choosing the {}",
        setting.burglar,
        setting.containers[setting.decoy_container()]
    )
}

fn dialogue_or_placeholder(context: &DialogueContext) -> String {
    if context.turns.is_empty() {
        "(no dialogue yet)".to_owned()
    } else {
        context.render_turns()
    }
}

fn burglar_prompt(
    setting: &CkbgSetting,
    world: &WorldSet,
    context: &DialogueContext,
    turn_index: usize,
    stage: Stage,
) -> Result<Prompt> {
    let (_, burglar_label) = speaker_labels(setting);
    let meta = PromptMeta {
        game: Some(GameId::Ckbg),
        role: BURGLAR_ROLE.into(),
        turn_index,
        stage,
        facts: to_facts(&burglar_facts(setting, world)?),
        draft: None,
    };
    let mut prompt = render_prompt(
        GameId::Ckbg,
        &burglar_background(setting, world)?,
        context,
        &burglar_label,
        None,
        meta,
    )?;
    if stage == Stage::ForcedChoice {
        prompt.push(PromptRole::System, FORCED_CHOICE_INSTRUCTION);
    }
    Ok(prompt)
}

/// Plays one episode. The burglar opens; the keeper (side 0) answers
/// through its method; the episode ends on the burglar's stop or a forced
/// choice once `max_turns` utterances have been made.
pub fn run_episode(
    setting: &CkbgSetting,
    keeper: &Agent,
    burglar: &Agent,
    max_turns: usize,
) -> Result<Episode> {
    if max_turns == 0 {
        return Err(Error::Config("max_turns must be at least 1".into()));
    }
    setting.validate()?;
    let world = setting.world_events()?;
    let grammar = ActionGrammar::Ckbg {
        containers: setting.containers.to_vec(),
    };
    let (keeper_label, burglar_label) = speaker_labels(setting);
    let mut context = DialogueContext::default();
    let mut rec = Recorder::new(GameId::Ckbg);
    let mut choice = None;
    let mut round = 0;
    while rec.outcome.turns < max_turns {
        let prompt = burglar_prompt(setting, &world, &context, round, Stage::Dialogue)?;
        let Some(u) = rec.speak(
            burglar,
            &burglar_label,
            Some(1),
            prompt,
            TurnPlan::default(),
        )?
        else {
            return Ok(rec.finish());
        };
        context.push(burglar_label.clone(), u.text.clone());
        let action = parse_action(&grammar, &u.text);
        rec.set_action(action.clone());
        match action {
            ParsedAction::StopChoice { container } => {
                choice = Some(container);
                break;
            }
            ParsedAction::FormatError { .. } => return Ok(rec.finish()),
            _ => {}
        }
        if rec.outcome.turns >= max_turns {
            break;
        }
        let (prompt, plan) = keeper_prompt(setting, &world, keeper, &context, round)?;
        let Some(u) = rec.speak(keeper, &keeper_label, Some(0), prompt, plan)? else {
            return Ok(rec.finish());
        };
        context.push(keeper_label.clone(), u.text);
        round += 1;
    }
    if choice.is_none() {
        let prompt = burglar_prompt(setting, &world, &context, round, Stage::ForcedChoice)?;
        let Some(u) = rec.speak(
            burglar,
            &burglar_label,
            Some(1),
            prompt,
            TurnPlan::default(),
        )?
        else {
            return Ok(rec.finish());
        };
        match parse_action(&grammar, &u.text) {
            ParsedAction::StopChoice { container } => {
                rec.set_action(ParsedAction::StopChoice {
                    container: container.clone(),
                });
                choice = Some(container);
            }
            ParsedAction::FormatError { reason } => {
                rec.set_action(ParsedAction::FormatError { reason });
            }
            _ => rec.set_action(ParsedAction::FormatError {
                reason: "no choice at the turn limit".into(),
            }),
        }
    }
    if let Some(choice) = choice {
        rec.outcome.success = Some(choice != setting.containers[setting.valuable_container]);
    }
    Ok(rec.finish())
}

/// First container named in `text`, by position.
fn first_container<'a>(containers: &'a [String; 2], text: &str) -> Option<&'a String> {
    let lower = text.to_lowercase();
    containers
        .iter()
        .filter_map(|c| lower.find(&c.to_lowercase()).map(|at| (at, c)))
        .min_by_key(|&(at, c)| (at, std::cmp::Reverse(c.len())))
        .map(|(_, c)| c)
}

pub(crate) fn rule_reply(prompt: &Prompt) -> Result<String> {
    match prompt.meta.role.as_str() {
        KEEPER_ROLE => {
            let f: KeeperFacts = facts(prompt)?;
            let mut text = format!(
                "The {v} is in the {d}. You should open the {d}.",
                v = f.valuable,
                d = f.decoy_container
            );
            if let Some(cited) = f.cited {
                text.push_str(" Note: ");
                text.push_str(&cited);
            }
            Ok(text)
        }
        BURGLAR_ROLE => {
            let f: BurglarFacts = facts(prompt)?;
            let keeper_turns: Vec<&str> = prompt
                .turns
                .iter()
                .filter(|t| t.0 == PromptRole::Interlocutor)
                .map(|t| t.1.as_str())
                .collect();
            let forced = prompt.meta.stage == Stage::ForcedChoice;
            let stop = |c: &str| format!("[STOP] Burglar chosed: {c}.");
            if let Some(c) = &f.inspected {
                if forced || !keeper_turns.is_empty() {
                    return Ok(stop(c));
                }
            }
            let Some(last) = keeper_turns.last() else {
                if forced {
                    return Ok(stop(&f.containers[0]));
                }
                return Ok(format!(
                    "Hi, {}, where is the {}? {} or {}?",
                    f.keeper, f.valuable, f.containers[1], f.containers[0]
                ));
            };
            let Some(recommended) = first_container(&f.containers, last) else {
                if forced {
                    return Ok(stop(&f.containers[0]));
                }
                return Ok(format!(
                    "Which one should I open, the {} or the {}?",
                    f.containers[0], f.containers[1]
                ));
            };
            let cited = last.split_once("Note: ").map(|(_, c)| c.trim());
            let trusted = !f.informed || cited.is_some_and(|c| !f.known.iter().any(|k| k == c));
            let choice = if trusted {
                recommended
            } else {
                f.containers
                    .iter()
                    .find(|c| *c != recommended)
                    .expect("two containers")
            };
            Ok(stop(choice))
        }
        other => Err(Error::Format(format!(
            "no keeper-burglar rule for role `{other}`"
        ))),
    }
}

/// Condition-class event ids listed in a keeper prompt's belief block.
pub fn condition_block_events(setting: &CkbgSetting, system: &str) -> BTreeSet<usize> {
    let Some(block) = system
        .split("3. Your belief state: ")
        .nth(1)
        .and_then(|rest| rest.split("\nBased on the context").next())
    else {
        return BTreeSet::new();
    };
    let texts: BTreeMap<String, usize> = (0..setting.conditions.len())
        .map(|i| (setting.condition_text(i), i))
        .collect();
    block
        .lines()
        .filter_map(|l| l.strip_prefix("- "))
        .filter_map(|t| texts.get(t).copied())
        .collect()
}

/// Keeper-side ground truth: what holds and what the burglar knows.
pub fn training_sources(
    setting: &CkbgSetting,
    context: &DialogueContext,
    episode_id: &str,
) -> Result<Vec<TrainingSource>> {
    let world = setting.world_events()?;
    let source = |perspective: Perspective, known: BTreeSet<usize>| TrainingSource {
        episode_id: format!("{episode_id}/keeper/{}", perspective.as_str()),
        context: context.clone(),
        world_set: world.clone(),
        perspective,
        style: TruthStyle::Set,
        truth: vec![TruthSnapshot {
            after_turns: 0,
            known,
        }],
    };
    Ok(vec![
        source(Perspective::SelfTruth, setting.keeper_truth()),
        source(Perspective::OpponentKnows, setting.burglar_truth()),
    ])
}

/// The setting of the worked keeper-burglar example: the burglar knows
/// world events 1, 4, 5 and 7 (one-based).
pub fn case_study_setting() -> CkbgSetting {
    CkbgSetting {
        id: "case-study".into(),
        keeper: "Jacob".into(),
        burglar: "John".into(),
        containers: ["resin container".into(), "opaque Tupperware".into()],
        valuable: "antique Rolex watch".into(),
        valuable_container: 0,
        decoy: "pen cap".into(),
        conditions: vec![
            CkbgCondition::inspection(ConditionClass::KeeperInspection, 0, 10),
            CkbgCondition::outsider("David", 1, 3),
            CkbgCondition::noise(0),
        ],
        keeper_known: BTreeSet::from([0, 1, 2]),
        burglar_known: BTreeSet::from([1]),
    }
}
