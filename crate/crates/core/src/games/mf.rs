//! Mutual Friends: two players with private friend lists look for the one
//! friend they share.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::{IndexedRandom, IteratorRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::words::mf_schema;
use super::{facts, snapshots, to_facts, Agent, BeliefLog, Episode, Recorder, TurnPlan};
use crate::belief::{
    suspicion_event, BeliefVector, DialogueContext, Perspective, TrainingSource, TruthStyle,
    WorldSet, PAYLOAD_ATTRIBUTE, PAYLOAD_VALUE, SYSTEM_SPEAKER,
};
use crate::epistemic::ActKind;
use crate::generation::templates::MINDDIAL_NOTICE;
use crate::generation::{
    minddial_condition, minddial_slots, parse_action, render_prompt, render_with_template,
    ActionGrammar, GameId, Generator, ParsedAction, Prompt, PromptMeta, PromptRole, Stage,
};
use crate::selection::{
    choose, compose_condition, dedup_latest_per_attribute, feasible_set, ActConstraint,
    ConditionTemplate, SelectionPolicy,
};
use crate::{Error, Result};

pub const DEFAULT_MAX_TURNS: usize = 20;
pub const CONFIRM_TOKEN: &str = "CONFIRM:";
pub const PLAYER_ROLE: &str = "player";
pub const JUDGE_ROLE: &str = "judge";

pub const CONFIRMED_NOTICE: &str = "Both players have identified the mutual friend.";

pub const FINAL_PICK_INSTRUCTION: &str =
    "The dialogue is over. Choose the mutual friend by replying \"SELECT: n\", where n is the friend's number in your list.";

pub const JUDGE_INSTRUCTION: &str =
    "Read the dialogue between two players looking for their mutual friend. Have both players identified the same mutual friend? Answer \"yes\" or \"no\".";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MfScenario {
    pub id: String,
    pub names: [String; 2],
    pub attributes: Vec<String>,
    /// Per player, each friend as one value per attribute.
    pub friends: [Vec<Vec<String>>; 2],
    /// Index of the shared friend in each list.
    pub mutual: [usize; 2],
}

impl MfScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Data(format!("scenario {}: {msg}", self.id)));
        if self.names[0] == self.names[1] {
            return bad("player names must differ".into());
        }
        if self.attributes.is_empty() {
            return bad("no attributes".into());
        }
        for (side, list) in self.friends.iter().enumerate() {
            if list.is_empty() {
                return bad(format!("player {side} has no friends"));
            }
            if let Some(f) = list.iter().find(|f| f.len() != self.attributes.len()) {
                return bad(format!("friend {f:?} does not match the attribute schema"));
            }
            if self.mutual[side] >= list.len() {
                return bad(format!("mutual index {} out of range", self.mutual[side]));
            }
        }
        let shared = self.friends[0]
            .iter()
            .enumerate()
            .flat_map(|(i, f)| {
                self.friends[1]
                    .iter()
                    .enumerate()
                    .filter(move |(_, g)| *g == f)
                    .map(move |(j, _)| [i, j])
            })
            .collect::<Vec<_>>();
        if shared != [self.mutual] {
            return bad(format!(
                "expected exactly one shared friend at {:?}, found {shared:?}",
                self.mutual
            ));
        }
        Ok(())
    }

    pub fn mutual_friend(&self) -> &[String] {
        &self.friends[0][self.mutual[0]]
    }

    fn other(side: usize) -> usize {
        1 - side
    }

    /// Events seen by `owner`: one per attribute value in either list,
    /// attributes in schema order, values in order of first appearance.
    pub fn world_events(&self, owner: usize) -> Result<WorldSet> {
        let interlocutor = &self.names[Self::other(owner)];
        let mut events = Vec::new();
        for (a, attribute) in self.attributes.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for friend in self.friends.iter().flatten() {
                if seen.insert(friend[a].as_str()) {
                    events.push(suspicion_event(interlocutor, attribute, &friend[a]));
                }
            }
        }
        WorldSet::new(events)
    }

    /// Events whose value occurs in `owner`'s own list.
    pub fn self_truth(&self, owner: usize, world: &WorldSet) -> BTreeSet<usize> {
        world
            .events()
            .iter()
            .filter(|e| {
                let (Some(attr), Some(value)) = (e.get(PAYLOAD_ATTRIBUTE), e.get(PAYLOAD_VALUE))
                else {
                    return false;
                };
                let Some(a) = self.attributes.iter().position(|x| x == attr) else {
                    return false;
                };
                self.friends[owner].iter().any(|f| f[a] == value)
            })
            .map(|e| e.id)
            .collect()
    }
}

/// Events whose value the interlocutor has mentioned.
fn mentioned_by(world: &WorldSet, context: &DialogueContext, speaker: &str) -> BTreeSet<usize> {
    let said: Vec<String> = context
        .turns
        .iter()
        .filter(|t| t.speaker == speaker)
        .map(|t| t.text.to_lowercase())
        .collect();
    world
        .events()
        .iter()
        .filter(|e| {
            e.get(PAYLOAD_VALUE)
                .is_some_and(|v| said.iter().any(|s| s.contains(&v.to_lowercase())))
        })
        .map(|e| e.id)
        .collect()
}

/// Per player: which attribute values the other player has mentioned.
pub fn training_sources(
    scenario: &MfScenario,
    context: &DialogueContext,
    episode_id: &str,
) -> Result<Vec<TrainingSource>> {
    (0..2)
        .map(|side| {
            let world = scenario.world_events(side)?;
            let other = &scenario.names[1 - side];
            let truth = snapshots(context, |c| mentioned_by(&world, c, other));
            Ok(TrainingSource {
                episode_id: format!(
                    "{episode_id}/{}/{}",
                    scenario.names[side],
                    Perspective::OpponentKnows.as_str()
                ),
                context: context.clone(),
                world_set: world,
                perspective: Perspective::OpponentKnows,
                style: TruthStyle::Triple,
                truth,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MfShape {
    pub friends_per_list: usize,
    pub attributes: usize,
}

impl Default for MfShape {
    fn default() -> Self {
        Self {
            friends_per_list: 5,
            attributes: 3,
        }
    }
}

const GENERATION_ATTEMPTS: usize = 1000;

/// Seeded scenarios with exactly one shared friend each.
pub fn generate_scenarios(n: usize, shape: &MfShape, seed: u64) -> Result<Vec<MfScenario>> {
    let schema = mf_schema();
    if n == 0 {
        return Err(Error::Config("n_scenarios must be at least 1".into()));
    }
    if shape.attributes == 0 || shape.attributes > schema.len() {
        return Err(Error::Config(format!(
            "attribute count {} outside 1..={}",
            shape.attributes,
            schema.len()
        )));
    }
    if shape.friends_per_list == 0 {
        return Err(Error::Config("friends_per_list must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names_pool = &*super::words::NAMES;
    (0..n)
        .map(|index| {
            let mut picked = (0..schema.len()).choose_multiple(&mut rng, shape.attributes);
            picked.sort_unstable();
            let attributes: Vec<String> = picked.iter().map(|&i| schema[i].0.to_owned()).collect();
            let pools: Vec<&[&str]> = picked.iter().map(|&i| schema[i].1).collect();
            let draw = |rng: &mut ChaCha8Rng| -> Vec<String> {
                pools
                    .iter()
                    .map(|p| p.choose(rng).expect("word list").to_string())
                    .collect()
            };
            let mutual = draw(&mut rng);
            let mut lists: [Vec<Vec<String>>; 2] = [vec![mutual.clone()], vec![mutual.clone()]];
            let mut attempts = 0;
            for side in [0, 1] {
                while lists[side].len() < shape.friends_per_list {
                    attempts += 1;
                    if attempts > GENERATION_ATTEMPTS {
                        return Err(Error::Config(format!(
                            "cannot build {} distinct friends over {} attributes",
                            shape.friends_per_list, shape.attributes
                        )));
                    }
                    let f = draw(&mut rng);
                    if !lists[0].contains(&f) && !lists[1].contains(&f) {
                        lists[side].push(f);
                    }
                }
            }
            let mut mutual_at = [0; 2];
            for side in [0, 1] {
                lists[side].shuffle(&mut rng);
                mutual_at[side] = lists[side]
                    .iter()
                    .position(|f| *f == mutual)
                    .expect("mutual kept");
            }
            let names = names_pool.iter().choose_multiple(&mut rng, 2);
            let scenario = MfScenario {
                id: format!("mf-{index:05}"),
                names: [names[0].to_string(), names[1].to_string()],
                attributes,
                friends: lists,
                mutual: mutual_at,
            };
            scenario.validate()?;
            Ok(scenario)
        })
        .collect()
}

/// How mutual identification is detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    /// Both latest turns carry the confirmation token.
    #[default]
    Rule,
    /// A yes/no query to a generator.
    Generator,
}

#[derive(Clone)]
pub enum Judge {
    Rule,
    Generator(Arc<dyn Generator>),
}

impl std::fmt::Debug for Judge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Judge::Rule => f.write_str("Rule"),
            Judge::Generator(_) => f.write_str("Generator"),
        }
    }
}

impl Judge {
    pub fn new(mode: JudgeMode, generator: Arc<dyn Generator>) -> Self {
        match mode {
            JudgeMode::Rule => Judge::Rule,
            JudgeMode::Generator => Judge::Generator(generator),
        }
    }
}

fn rule_judge(turns: &[&str]) -> bool {
    turns.len() >= 2
        && turns[turns.len() - 2..]
            .iter()
            .all(|t| t.contains(CONFIRM_TOKEN))
}

/// True when both players have identified the mutual friend.
pub fn mf_judge(context: &DialogueContext, judge: &Judge) -> Result<bool> {
    let turns: Vec<&str> = context
        .turns
        .iter()
        .filter(|t| t.speaker != SYSTEM_SPEAKER)
        .map(|t| t.text.as_str())
        .collect();
    let Judge::Generator(generator) = judge else {
        return Ok(rule_judge(&turns));
    };
    let meta = PromptMeta {
        game: Some(GameId::Mf),
        role: JUDGE_ROLE.into(),
        turn_index: turns.len(),
        stage: Stage::Judge,
        facts: serde_json::Value::Null,
        draft: None,
    };
    let prompt = Prompt::new(
        JUDGE_INSTRUCTION,
        vec![(PromptRole::Interlocutor, context.render_turns())],
        meta,
    )?;
    let reply = match generator.generate(&prompt) {
        Ok(u) => u.text,
        Err(Error::Format(msg)) => {
            log::warn!("judge reply unusable: {msg}");
            return Ok(false);
        }
        Err(e) => return Err(e),
    };
    let answer = reply.trim().to_lowercase();
    if answer.starts_with("yes") {
        Ok(true)
    } else {
        if !answer.starts_with("no") {
            log::warn!("judge gave neither yes nor no: {:?}", reply.trim());
        }
        Ok(false)
    }
}

fn describe(attributes: &[String], friend: &[String]) -> String {
    attributes
        .iter()
        .zip(friend)
        .map(|(a, v)| format!("{a}: {v}"))
        .collect::<Vec<_>>()
        .join("; ")
}

fn background(scenario: &MfScenario, side: usize) -> String {
    let other = &scenario.names[1 - side];
    let list = scenario.friends[side]
        .iter()
        .enumerate()
        .map(|(i, f)| format!("{}. {}", i + 1, describe(&scenario.attributes, f)))
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        "You are {me}. You and {other} each have a list of friends, and exactly one friend appears in both lists. Talk with {other} to find that mutual friend.\nYour friends:\n{list}",
        me = scenario.names[side],
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct PlayerFacts {
    attributes: Vec<String>,
    friends: Vec<Vec<String>>,
}

fn player_prompt(
    scenario: &MfScenario,
    side: usize,
    world: &WorldSet,
    agent: &Agent,
    context: &DialogueContext,
    turn_index: usize,
    stage: Stage,
) -> Result<(Prompt, TurnPlan)> {
    let me = &scenario.names[side];
    let other = &scenario.names[1 - side];
    let mut plan = TurnPlan::default();
    let mut slots = None;
    let mut template = None;
    if stage == Stage::Dialogue && agent.method.uses_beliefs() {
        let self_truth = BeliefVector::indicator(
            Perspective::SelfTruth,
            world.len(),
            &scenario.self_truth(side, world),
        )?;
        let opp = agent.estimate(
            context,
            world,
            Perspective::OpponentKnows,
            &mentioned_by(world, context, other),
        )?;
        plan.beliefs = Some(BeliefLog {
            self_truth: self_truth.values().to_vec(),
            opp_knows: opp.values().to_vec(),
        });
        if agent.method.selects() {
            let constraint = ActConstraint::new(ActKind::Alignment, agent.epsilon)?;
            let feasible = feasible_set(&self_truth, &opp, constraint)?;
            let policy = agent.policy.unwrap_or(SelectionPolicy::All);
            let mut selection = choose(&feasible, policy, agent.turn_seed(turn_index));
            selection.chosen = dedup_latest_per_attribute(&selection.chosen, world, context)?;
            let condition = compose_condition(&selection.chosen, world, &ConditionTemplate::Mf)?;
            plan.fallback = condition.fallback;
            if !condition.fallback {
                let mut s = condition.slots;
                s.insert("name_opponent".into(), other.clone());
                slots = Some(s);
            }
            plan.selections.push(selection);
        } else {
            let table = minddial_condition(&self_truth, &opp, world)?;
            slots = Some(minddial_slots(other, table));
            template = Some(MINDDIAL_NOTICE);
        }
    }
    let meta = PromptMeta {
        game: Some(GameId::Mf),
        role: PLAYER_ROLE.into(),
        turn_index,
        stage,
        facts: to_facts(&PlayerFacts {
            attributes: scenario.attributes.clone(),
            friends: scenario.friends[side].clone(),
        }),
        draft: None,
    };
    let bg = background(scenario, side);
    let mut prompt = match template {
        Some(t) => render_with_template(t, &bg, context, me, slots.as_ref(), meta)?,
        None => render_prompt(GameId::Mf, &bg, context, me, slots.as_ref(), meta)?,
    };
    if stage == Stage::FinalPick {
        prompt.push(PromptRole::System, FINAL_PICK_INSTRUCTION);
    }
    Ok((prompt, plan))
}

/// Plays one episode. Players alternate, the first name opening; after
/// each turn the judge checks for mutual identification. At confirmation
/// or the turn limit both players pick a friend.
pub fn run_episode(
    scenario: &MfScenario,
    agents: [&Agent; 2],
    max_turns: usize,
    judge: &Judge,
) -> Result<Episode> {
    if max_turns == 0 {
        return Err(Error::Config("max_turns must be at least 1".into()));
    }
    scenario.validate()?;
    let worlds = [scenario.world_events(0)?, scenario.world_events(1)?];
    let mut context = DialogueContext::default();
    let mut rec = Recorder::new(GameId::Mf);
    let mut own_turns = [0usize; 2];
    while rec.outcome.turns < max_turns {
        let side = rec.outcome.turns % 2;
        let (prompt, plan) = player_prompt(
            scenario,
            side,
            &worlds[side],
            agents[side],
            &context,
            own_turns[side],
            Stage::Dialogue,
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
        context.push(scenario.names[side].clone(), u.text);
        if mf_judge(&context, judge)? {
            context.push(SYSTEM_SPEAKER, CONFIRMED_NOTICE);
            break;
        }
    }
    let mut picks = [0usize; 2];
    for side in [0, 1] {
        let (prompt, plan) = player_prompt(
            scenario,
            side,
            &worlds[side],
            agents[side],
            &context,
            own_turns[side],
            Stage::FinalPick,
        )?;
        let Some(u) = rec.speak(agents[side], &scenario.names[side], None, prompt, plan)? else {
            return Ok(rec.finish());
        };
        let grammar = ActionGrammar::Mf {
            friends: scenario.friends[side].clone(),
        };
        match parse_action(&grammar, &u.text) {
            ParsedAction::FriendPick { friend } => {
                rec.set_action(ParsedAction::FriendPick { friend });
                picks[side] = friend;
            }
            ParsedAction::Utterance => {
                rec.set_action(ParsedAction::FormatError {
                    reason: "final reply selects no friend".into(),
                });
                return Ok(rec.finish());
            }
            other => {
                rec.set_action(other);
                return Ok(rec.finish());
            }
        }
    }
    rec.outcome.success = Some(scenario.friends[0][picks[0]] == scenario.friends[1][picks[1]]);
    Ok(rec.finish())
}

fn parse_tuple(attributes: &[String], body: &str) -> Option<Vec<String>> {
    let mut values: BTreeMap<&str, String> = BTreeMap::new();
    for part in body.split(';') {
        let (attr, value) = part.split_once(':')?;
        values.insert(attr.trim(), value.trim().to_owned());
    }
    attributes
        .iter()
        .map(|a| values.remove(a.as_str()))
        .collect()
}

/// Statements a rule player makes, one per line.
#[derive(Debug, Default)]
struct Heard {
    values: BTreeMap<String, BTreeSet<String>>,
    friends: Option<BTreeSet<Vec<String>>>,
    confirm: Option<Vec<String>>,
}

fn hear<'a>(attributes: &[String], turns: impl IntoIterator<Item = &'a str>) -> Heard {
    let mut heard = Heard::default();
    for turn in turns {
        heard.confirm = None;
        for line in turn.lines().map(str::trim) {
            if let Some(rest) = line.strip_prefix("VALUES ") {
                if let Some((attr, vals)) = rest.split_once(':') {
                    let set = vals.split('|').map(|v| v.trim().to_lowercase()).collect();
                    heard
                        .values
                        .entry(attr.trim().to_owned())
                        .and_modify(|cur| *cur = cur.intersection(&set).cloned().collect())
                        .or_insert(set);
                }
            } else if let Some(rest) = line.strip_prefix("FRIEND:") {
                if let Some(t) = parse_tuple(attributes, rest) {
                    heard.friends.get_or_insert_with(BTreeSet::new).insert(t);
                }
            } else if let Some(rest) = line.strip_prefix(CONFIRM_TOKEN) {
                heard.confirm = parse_tuple(attributes, rest);
            }
        }
    }
    heard
}

fn candidates<'a>(f: &'a PlayerFacts, heard: &Heard) -> Vec<&'a Vec<String>> {
    f.friends
        .iter()
        .filter(|friend| {
            f.attributes.iter().zip(friend.iter()).all(|(a, v)| {
                heard
                    .values
                    .get(a)
                    .is_none_or(|set| set.contains(&v.to_lowercase()))
            })
        })
        .filter(|friend| {
            heard
                .friends
                .as_ref()
                .is_none_or(|set| set.contains(*friend))
        })
        .collect()
}

pub(crate) fn rule_reply(prompt: &Prompt) -> Result<String> {
    if prompt.meta.stage == Stage::Judge {
        let turns: Vec<&str> = prompt
            .turns
            .iter()
            .flat_map(|t| t.1.lines())
            .filter(|l| !l.starts_with(SYSTEM_SPEAKER))
            .collect();
        return Ok(if rule_judge(&turns) { "yes" } else { "no" }.to_owned());
    }
    let f: PlayerFacts = facts(prompt)?;
    let said_by = |role: PromptRole| {
        prompt
            .turns
            .iter()
            .filter(move |t| t.0 == role)
            .map(|t| t.1.as_str())
    };
    let heard = hear(&f.attributes, said_by(PromptRole::Interlocutor));
    let mine = hear(&f.attributes, said_by(PromptRole::SelfRole));
    let pool = candidates(&f, &heard);
    let confirmed = heard
        .confirm
        .as_ref()
        .filter(|t| f.friends.contains(t))
        .or(mine.confirm.as_ref());
    if prompt.meta.stage == Stage::FinalPick {
        let pick = confirmed
            .or(pool.first().copied())
            .or(f.friends.first())
            .ok_or_else(|| Error::Format("empty friend list".into()))?;
        let index = f.friends.iter().position(|x| x == pick).unwrap_or(0);
        return Ok(format!("SELECT: {}", index + 1));
    }
    if let Some(t) = heard.confirm.as_ref().filter(|t| f.friends.contains(t)) {
        return Ok(format!("{CONFIRM_TOKEN} {}", describe(&f.attributes, t)));
    }
    if let [only] = pool.as_slice() {
        return Ok(format!("{CONFIRM_TOKEN} {}", describe(&f.attributes, only)));
    }
    let fresh =
        f.attributes.iter().enumerate().find(|(_, attr)| {
            !mine.values.contains_key(*attr) && !heard.values.contains_key(*attr)
        });
    let unsaid = || {
        f.attributes
            .iter()
            .enumerate()
            .find(|(_, attr)| !mine.values.contains_key(*attr))
    };
    if let Some((a, attr)) = fresh.or_else(unsaid) {
        let mut values: Vec<&str> = Vec::new();
        for friend in &pool {
            if !values.contains(&friend[a].as_str()) {
                values.push(&friend[a]);
            }
        }
        return Ok(format!("VALUES {attr}: {}", values.join(" | ")));
    }
    Ok(pool
        .iter()
        .map(|friend| format!("FRIEND: {}", describe(&f.attributes, friend)))
        .collect::<Vec<_>>()
        .join("\n"))
}
