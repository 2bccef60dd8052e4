//! Campsite negotiation over food, water and firewood.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::{IndexedRandom, IteratorRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::words::NAMES;
use super::{facts, snapshots, to_facts, Agent, BeliefLog, Episode, Recorder, TurnPlan};
use crate::belief::{
    BeliefVector, DialogueContext, Event, Perspective, TrainingSource, TruthSnapshot, TruthStyle,
    WorldSet, PAYLOAD_ORDER, PAYLOAD_OWNER, PAYLOAD_POLARITY,
};
use crate::generation::templates::MINDDIAL_NOTICE;
use crate::generation::{
    minddial_condition, minddial_slots, parse_action, render_prompt, render_with_template,
    ActionGrammar, Deal, GameId, ParsedAction, Prompt, PromptMeta, PromptRole,
};
use crate::selection::{compose_condition, mixed_select, ConditionTemplate, MIXED_WORLD_SIZE};
use crate::{Error, Result};

/// Units of each resource on the table.
pub const STOCK: u32 = 3;
/// Points per unit by preference rank.
pub const DEFAULT_POINTS: [u32; 3] = [5, 4, 3];
pub const DEFAULT_MAX_TURNS: usize = 20;
pub const NEGOTIATOR_ROLE: &str = "negotiator";

pub const POLARITY_IS: &str = "is";
pub const POLARITY_ISNT: &str = "isnt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Item {
    Food,
    Water,
    Firewood,
}

impl Item {
    pub fn name(self) -> &'static str {
        match self {
            Item::Food => "food",
            Item::Water => "water",
            Item::Firewood => "firewood",
        }
    }

    fn units(self, deal: &Deal) -> u32 {
        match self {
            Item::Food => deal.food,
            Item::Water => deal.water,
            Item::Firewood => deal.firewood,
        }
    }

    fn from_name(name: &str) -> Option<Item> {
        match name.trim().to_lowercase().as_str() {
            "food" => Some(Item::Food),
            "water" => Some(Item::Water),
            "firewood" => Some(Item::Firewood),
            _ => None,
        }
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A ranking, most important first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[Item; 3]", into = "[Item; 3]")]
pub struct Preference([Item; 3]);

use Item::{Firewood, Food, Water};

impl Preference {
    /// All rankings in world-set order.
    pub const ALL: [Preference; 6] = [
        Preference([Water, Firewood, Food]),
        Preference([Water, Food, Firewood]),
        Preference([Firewood, Water, Food]),
        Preference([Firewood, Food, Water]),
        Preference([Food, Water, Firewood]),
        Preference([Food, Firewood, Water]),
    ];

    pub fn new(order: [Item; 3]) -> Result<Self> {
        let distinct: BTreeSet<Item> = order.iter().copied().collect();
        if distinct.len() != 3 {
            return Err(Error::domain(format!(
                "{order:?} is not a ranking of three resources"
            )));
        }
        Ok(Self(order))
    }

    pub fn items(&self) -> [Item; 3] {
        self.0
    }

    /// Position in [`Preference::ALL`].
    pub fn index(&self) -> usize {
        Self::ALL
            .iter()
            .position(|p| p == self)
            .expect("every ranking is listed")
    }

    /// Comma-separated names, the `order` payload.
    pub fn key(&self) -> String {
        self.0.map(Item::name).join(",")
    }

    pub fn parse_key(key: &str) -> Result<Self> {
        let items: Vec<Item> = key
            .split(',')
            .map(|s| {
                Item::from_name(s).ok_or_else(|| Error::domain(format!("unknown resource `{s}`")))
            })
            .collect::<Result<_>>()?;
        let order: [Item; 3] = items
            .try_into()
            .map_err(|_| Error::domain(format!("`{key}` does not list three resources")))?;
        Self::new(order)
    }

    pub fn sentence(&self) -> String {
        let [a, b, c] = self.0;
        format!("the most important thing is {a}, followed by {b}, and lastly {c}")
    }

    pub fn rank(&self, item: Item) -> usize {
        self.0
            .iter()
            .position(|&i| i == item)
            .expect("ranking covers every item")
    }
}

impl TryFrom<[Item; 3]> for Preference {
    type Error = Error;

    fn try_from(order: [Item; 3]) -> Result<Self> {
        Preference::new(order)
    }
}

impl From<Preference> for [Item; 3] {
    fn from(p: Preference) -> Self {
        p.0
    }
}

fn default_points() -> [u32; 3] {
    DEFAULT_POINTS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CasinoScenario {
    pub id: String,
    pub names: [String; 2],
    pub preferences: [Preference; 2],
    /// Points per unit by rank, most important first.
    #[serde(default = "default_points")]
    pub points: [u32; 3],
}

impl CasinoScenario {
    pub fn new(id: impl Into<String>, names: [String; 2], preferences: [Preference; 2]) -> Self {
        Self {
            id: id.into(),
            names,
            preferences,
            points: DEFAULT_POINTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.names[0] == self.names[1] {
            return Err(Error::Data(format!(
                "scenario {}: negotiator names must differ",
                self.id
            )));
        }
        Ok(())
    }
}

/// Points `preference` earns from `deal` under the default scoring.
pub fn casino_reward(preference: &Preference, deal: &Deal) -> Result<u32> {
    casino_reward_with(DEFAULT_POINTS, preference, deal)
}

pub fn casino_reward_with(points: [u32; 3], preference: &Preference, deal: &Deal) -> Result<u32> {
    if deal.as_array().iter().any(|&u| u > STOCK) {
        return Err(Error::domain(format!(
            "{deal} exceeds the stock of {STOCK}"
        )));
    }
    Ok(preference
        .items()
        .iter()
        .zip(points)
        .map(|(item, p)| item.units(deal) * p)
        .sum())
}

fn preference_event(name: &str, preference: &Preference, negated: bool) -> Event {
    let verb = if negated { "isn't" } else { "is" };
    Event::new(format!(
        "The {name}'s preference {verb}: {}.",
        preference.sentence()
    ))
    .with(PAYLOAD_ORDER, preference.key())
    .with(
        PAYLOAD_POLARITY,
        if negated { POLARITY_ISNT } else { POLARITY_IS },
    )
    .with(PAYLOAD_OWNER, name)
}

/// The 24 preference events: assertive for each negotiator, then negated.
pub fn casino_world_set(name_1: &str, name_2: &str) -> Result<WorldSet> {
    if name_1 == name_2 {
        return Err(Error::domain("negotiator names must differ"));
    }
    let mut events = Vec::with_capacity(MIXED_WORLD_SIZE);
    for negated in [false, true] {
        for name in [name_1, name_2] {
            events.extend(
                Preference::ALL
                    .iter()
                    .map(|p| preference_event(name, p, negated)),
            );
        }
    }
    WorldSet::new(events)
}

const PER_BLOCK: usize = 6;

fn is_id(owner: usize, p: &Preference) -> usize {
    owner * PER_BLOCK + p.index()
}

fn isnt_id(owner: usize, p: &Preference) -> usize {
    2 * PER_BLOCK + owner * PER_BLOCK + p.index()
}

/// Ids of the events true for negotiator `owner`'s own preference.
fn true_events_of(owner: usize, preference: &Preference) -> BTreeSet<usize> {
    std::iter::once(is_id(owner, preference))
        .chain(
            Preference::ALL
                .iter()
                .filter(|p| *p != preference)
                .map(|p| isnt_id(owner, p)),
        )
        .collect()
}

fn events_of(owner: usize) -> impl Iterator<Item = usize> {
    (owner * PER_BLOCK..(owner + 1) * PER_BLOCK)
        .chain(2 * PER_BLOCK + owner * PER_BLOCK..2 * PER_BLOCK + (owner + 1) * PER_BLOCK)
}

/// True once some turn by `speaker` names all three resources in
/// `preference` order, ignoring deal lines.
pub fn preference_revealed(
    context: &DialogueContext,
    speaker: &str,
    preference: &Preference,
) -> bool {
    context
        .turns
        .iter()
        .filter(|t| t.speaker == speaker)
        .any(|t| {
            let prose: String = t
                .text
                .lines()
                .filter(|l| !l.trim_start().to_uppercase().starts_with("DEAL"))
                .collect::<Vec<_>>()
                .join("\n")
                .to_lowercase();
            let at: Option<Vec<usize>> = preference
                .items()
                .iter()
                .map(|i| prose.find(i.name()))
                .collect();
            at.is_some_and(|at| at.windows(2).all(|w| w[0] < w[1]))
        })
}

/// Belief vectors of negotiator `side`. Its own events are exact and the
/// opponent is taken to know its own preference; the rest comes from the
/// agent's belief source.
pub(crate) fn belief_vectors(
    scenario: &CasinoScenario,
    side: usize,
    world: &WorldSet,
    agent: &Agent,
    context: &DialogueContext,
) -> Result<(BeliefVector, BeliefVector)> {
    let other = 1 - side;
    let own_true = true_events_of(side, &scenario.preferences[side]);
    let opp_true = true_events_of(other, &scenario.preferences[other]);
    let mut self_truth = agent.estimate(context, world, Perspective::SelfTruth, &opp_true)?;
    self_truth.overwrite(events_of(side), 0.0);
    self_truth.overwrite(own_true.iter().copied(), 1.0);
    let revealed =
        if preference_revealed(context, &scenario.names[side], &scenario.preferences[side]) {
            own_true
        } else {
            BTreeSet::new()
        };
    let mut opp_knows = agent.estimate(context, world, Perspective::OpponentKnows, &revealed)?;
    opp_knows.overwrite(events_of(other), 0.0);
    opp_knows.overwrite(opp_true.iter().copied(), 1.0);
    Ok((self_truth, opp_knows))
}

/// Per negotiator: which preference events hold, and which the opponent
/// knows as the dialogue unfolds.
pub fn training_sources(
    scenario: &CasinoScenario,
    context: &DialogueContext,
    episode_id: &str,
) -> Result<Vec<TrainingSource>> {
    let world = casino_world_set(&scenario.names[0], &scenario.names[1])?;
    let mut out = Vec::new();
    for side in 0..2 {
        let other = 1 - side;
        let own_true = true_events_of(side, &scenario.preferences[side]);
        let opp_true = true_events_of(other, &scenario.preferences[other]);
        let id = |p: Perspective| format!("{episode_id}/{}/{}", scenario.names[side], p.as_str());
        out.push(TrainingSource {
            episode_id: id(Perspective::SelfTruth),
            context: context.clone(),
            world_set: world.clone(),
            perspective: Perspective::SelfTruth,
            style: TruthStyle::Set,
            truth: vec![TruthSnapshot {
                after_turns: 0,
                known: own_true.union(&opp_true).copied().collect(),
            }],
        });
        let truth = snapshots(context, |c| {
            let mut known = opp_true.clone();
            if preference_revealed(c, &scenario.names[side], &scenario.preferences[side]) {
                known.extend(own_true.iter().copied());
            }
            known
        });
        out.push(TrainingSource {
            episode_id: id(Perspective::OpponentKnows),
            context: context.clone(),
            world_set: world.clone(),
            perspective: Perspective::OpponentKnows,
            style: TruthStyle::Set,
            truth,
        });
    }
    Ok(out)
}

/// Seeded scenarios with independent uniform rankings.
pub fn generate_scenarios(n: usize, seed: u64) -> Result<Vec<CasinoScenario>> {
    if n == 0 {
        return Err(Error::Config("n_scenarios must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let names = NAMES.iter().choose_multiple(&mut rng, 2);
            let a = *Preference::ALL.choose(&mut rng).expect("six rankings");
            let b = *Preference::ALL.choose(&mut rng).expect("six rankings");
            CasinoScenario::new(
                format!("casino-{i:05}"),
                [names[0].to_string(), names[1].to_string()],
                [a, b],
            )
        })
        .collect())
}

fn background(scenario: &CasinoScenario, side: usize) -> String {
    let p = &scenario.preferences[side];
    let [a, b, c] = p.items();
    let [pa, pb, pc] = scenario.points;
    format!(
        "You are {me}, a camper negotiating with {other} over {STOCK} packages each of food, water and firewood. For you, {sentence}. Each package of {a} is worth {pa} points to you, {b} {pb} points, and {c} {pc} points. Propose a split with a line of the form \"DEAL: food=a, water=b, firewood=c\" giving the packages you keep. Agreement is reached when your latest deal and {other}'s latest deal together use every package.",
        me = scenario.names[side],
        other = scenario.names[1 - side],
        sentence = p.sentence(),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct NegotiatorFacts {
    preference: Preference,
    points: [u32; 3],
    /// The opponent ranking the prompt asserts, if any.
    #[serde(default)]
    believed_opponent: Option<Preference>,
}

fn negotiator_prompt(
    scenario: &CasinoScenario,
    side: usize,
    world: &WorldSet,
    agent: &Agent,
    context: &DialogueContext,
    turn_index: usize,
) -> Result<(Prompt, TurnPlan)> {
    let me = &scenario.names[side];
    let other = &scenario.names[1 - side];
    let mut plan = TurnPlan::default();
    let mut slots = None;
    let mut template = None;
    let mut believed_opponent = None;
    if agent.method.uses_beliefs() {
        let (self_truth, opp_knows) = belief_vectors(scenario, side, world, agent, context)?;
        plan.beliefs = Some(BeliefLog {
            self_truth: self_truth.values().to_vec(),
            opp_knows: opp_knows.values().to_vec(),
        });
        if agent.method.selects() {
            let mixed = mixed_select(
                &self_truth,
                &opp_knows,
                agent.epsilon,
                agent.turn_seed(turn_index),
            )?;
            let chosen = mixed.chosen();
            let gt = format!("{}.", scenario.preferences[side].sentence());
            let condition = compose_condition(
                &chosen,
                world,
                &ConditionTemplate::Casino { ground_truth: gt },
            )?;
            plan.fallback = condition.fallback;
            believed_opponent = mixed
                .alignment
                .chosen
                .iter()
                .map(|&id| world.get(id))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .find(|e| e.get(PAYLOAD_OWNER) == Some(other.as_str()))
                .and_then(|e| e.get(PAYLOAD_ORDER))
                .map(Preference::parse_key)
                .transpose()?;
            if !condition.fallback {
                let mut s = condition.slots;
                s.insert("opponent_name".into(), other.clone());
                slots = Some(s);
            }
            plan.selections.push(mixed.alignment);
            plan.selections.push(mixed.adversarial);
        } else {
            let table = minddial_condition(&self_truth, &opp_knows, world)?;
            slots = Some(minddial_slots(other, table));
            template = Some(MINDDIAL_NOTICE);
        }
    }
    let meta = PromptMeta {
        game: Some(GameId::Casino),
        role: NEGOTIATOR_ROLE.into(),
        turn_index,
        stage: Default::default(),
        facts: to_facts(&NegotiatorFacts {
            preference: scenario.preferences[side],
            points: scenario.points,
            believed_opponent,
        }),
        draft: None,
    };
    let bg = background(scenario, side);
    let prompt = match template {
        Some(t) => render_with_template(t, &bg, context, me, slots.as_ref(), meta)?,
        None => render_prompt(GameId::Casino, &bg, context, me, slots.as_ref(), meta)?,
    };
    Ok((prompt, plan))
}

/// Plays one episode. Negotiators alternate, the first name opening, until
/// their latest deals complement each other or `max_turns` is reached.
pub fn run_episode(
    scenario: &CasinoScenario,
    agents: [&Agent; 2],
    max_turns: usize,
) -> Result<Episode> {
    if max_turns == 0 {
        return Err(Error::Config("max_turns must be at least 1".into()));
    }
    scenario.validate()?;
    let world = casino_world_set(&scenario.names[0], &scenario.names[1])?;
    let mut context = DialogueContext::default();
    let mut rec = Recorder::new(GameId::Casino);
    let mut latest: [Option<Deal>; 2] = [None, None];
    let mut own_turns = [0usize; 2];
    while rec.outcome.turns < max_turns {
        let side = rec.outcome.turns % 2;
        let (prompt, plan) = negotiator_prompt(
            scenario,
            side,
            &world,
            agents[side],
            &context,
            own_turns[side],
        )?;
        let Some(u) = rec.speak(
            agents[side],
            &scenario.names[side],
            Some(side),
            prompt,
            plan,
        )?
        else {
            return Ok(rec.finish());
        };
        own_turns[side] += 1;
        context.push(scenario.names[side].clone(), u.text.clone());
        let action = parse_action(&ActionGrammar::Casino, &u.text);
        rec.set_action(action.clone());
        match action {
            ParsedAction::Deal { deal } => latest[side] = Some(deal),
            ParsedAction::FormatError { .. } => return Ok(rec.finish()),
            _ => {}
        }
        if let [Some(a), Some(b)] = latest {
            if a.complements(&b, STOCK) {
                rec.outcome.agreement = Some(true);
                rec.outcome.rewards = Some([
                    casino_reward_with(scenario.points, &scenario.preferences[0], &a)?,
                    casino_reward_with(scenario.points, &scenario.preferences[1], &b)?,
                ]);
                return Ok(rec.finish());
            }
        }
    }
    rec.outcome.agreement = Some(false);
    Ok(rec.finish())
}

fn all_deals() -> impl Iterator<Item = Deal> {
    (0..=STOCK)
        .flat_map(|f| (0..=STOCK).flat_map(move |w| (0..=STOCK).map(move |x| Deal::new(f, w, x))))
}

/// Flat estimate when the opponent's ranking is unknown.
const UNKNOWN_POINTS_PER_UNIT: u32 = 4;

pub(crate) fn rule_reply(prompt: &Prompt) -> Result<String> {
    let f: NegotiatorFacts = facts(prompt)?;
    let k = prompt.meta.turn_index as u32;
    let mine = |d: &Deal| casino_reward_with(f.points, &f.preference, d).unwrap_or(0);
    let theirs = |d: &Deal| {
        let rest = d.complement(STOCK).unwrap_or_default();
        match &f.believed_opponent {
            Some(p) => casino_reward_with(f.points, p, &rest).unwrap_or(0),
            None => rest.as_array().iter().sum::<u32>() * UNKNOWN_POINTS_PER_UNIT,
        }
    };
    let offered = prompt
        .turns
        .iter()
        .rev()
        .filter(|t| t.0 == PromptRole::Interlocutor)
        .find_map(|t| match parse_action(&ActionGrammar::Casino, &t.1) {
            ParsedAction::Deal { deal } => Some(deal),
            _ => None,
        });
    let accept_at = 24u32.saturating_sub(2 * k).max(12);
    if let Some(share) = offered.and_then(|d| d.complement(STOCK)) {
        if mine(&share) >= accept_at {
            return Ok(format!("That works for me.\n{share}"));
        }
    }
    let floor = 12 + 3 * k;
    let proposal = all_deals()
        .filter(|d| theirs(d) >= floor)
        .max_by_key(|d| (mine(d), theirs(d), std::cmp::Reverse(d.as_array())))
        .or_else(|| all_deals().max_by_key(|d| (theirs(d), mine(d))))
        .expect("deal space is non-empty");
    let [a, b, c] = f.preference.items();
    let opening = if prompt.turns.iter().any(|t| t.0 == PromptRole::SelfRole) {
        "How about this?".to_owned()
    } else {
        format!("My priorities: {a} first, then {b}, then {c}.")
    };
    Ok(format!("{opening}\n{proposal}"))
}
