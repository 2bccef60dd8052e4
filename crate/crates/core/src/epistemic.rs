//! Partition semantics for knowledge and probabilistic belief.
//!
//! States are opaque string identifiers mapped to dense indices in the order
//! they were supplied; events are bit sets over those indices. Inclusion in
//! the knowledge operator is non-strict: an agent knows `E` at `x` iff the
//! cell containing `x` is a subset of `E` (so `K(W) = W`).

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on the normalization of a prior.
pub const PRIOR_TOLERANCE: f64 = 1e-9;

/// Largest state space the brute-force enumeration accepts (2^16 subsets).
pub const MAX_ENUMERATION_STATES: usize = 16;

/// A set of states, stored as a bit set over the owning model's state order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct StateEvent {
    words: Vec<u64>,
    universe: usize,
}

impl StateEvent {
    pub fn empty(universe: usize) -> Self {
        Self {
            words: vec![0; universe.div_ceil(64)],
            universe,
        }
    }

    pub fn full(universe: usize) -> Self {
        let mut event = Self::empty(universe);
        for i in 0..universe {
            event.insert(i);
        }
        event
    }

    /// Builds an event from the low `universe` bits of `mask`.
    pub fn from_mask(universe: usize, mask: u64) -> Self {
        assert!(universe <= 64, "mask form supports at most 64 states");
        let mut event = Self::empty(universe);
        if universe > 0 {
            let keep = if universe == 64 {
                u64::MAX
            } else {
                (1u64 << universe) - 1
            };
            event.words[0] = mask & keep;
        }
        event
    }

    pub fn from_indices(universe: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut event = Self::empty(universe);
        for i in indices {
            event.insert(i);
        }
        event
    }

    /// The bit mask of this event, for universes of at most 64 states.
    pub fn mask(&self) -> u64 {
        assert!(self.universe <= 64, "mask form supports at most 64 states");
        self.words.first().copied().unwrap_or(0)
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn insert(&mut self, index: usize) {
        assert!(index < self.universe, "state index {index} out of range");
        self.words[index / 64] |= 1 << (index % 64);
    }

    pub fn contains(&self, index: usize) -> bool {
        index < self.universe && self.words[index / 64] & (1 << (index % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.universe).filter(move |&i| self.contains(i))
    }

    pub fn is_subset(&self, other: &StateEvent) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn union(&self, other: &StateEvent) -> StateEvent {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &StateEvent) -> StateEvent {
        self.zip_with(other, |a, b| a & b)
    }

    /// Set complement within the universe.
    pub fn complement(&self) -> StateEvent {
        let mut out = StateEvent::empty(self.universe);
        for i in 0..self.universe {
            if !self.contains(i) {
                out.insert(i);
            }
        }
        out
    }

    fn zip_with(&self, other: &StateEvent, f: impl Fn(u64, u64) -> u64) -> StateEvent {
        assert_eq!(
            self.universe, other.universe,
            "events over different state spaces"
        );
        StateEvent {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            universe: self.universe,
        }
    }
}

impl fmt::Debug for StateEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActKind {
    Adversarial,
    Alignment,
}

/// An ordered, duplicate-free list of state identifiers.
#[derive(Debug, Clone)]
struct StateSpace {
    states: Vec<String>,
    index: HashMap<String, usize>,
}

impl StateSpace {
    fn new(states: Vec<String>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::domain("state list is empty"));
        }
        let mut index = HashMap::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::domain(format!("duplicate state `{s}`")));
            }
        }
        Ok(Self { states, index })
    }

    fn lookup(&self, state: &str) -> Result<usize> {
        self.index
            .get(state)
            .copied()
            .ok_or_else(|| Error::domain(format!("unknown state `{state}`")))
    }

    fn len(&self) -> usize {
        self.states.len()
    }
}

/// Cells of an information partition plus a state → cell lookup.
#[derive(Debug, Clone)]
struct Partition {
    cells: Vec<StateEvent>,
    cell_of: Vec<usize>,
}

impl Partition {
    fn new<S: AsRef<str>>(space: &StateSpace, cells: &[Vec<S>]) -> Result<Self> {
        let n = space.len();
        let mut cell_of = vec![usize::MAX; n];
        let mut out = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::domain(format!("partition cell {c} is empty")));
            }
            let mut event = StateEvent::empty(n);
            for s in cell {
                let i = space.lookup(s.as_ref())?;
                if cell_of[i] != usize::MAX {
                    return Err(Error::domain(format!(
                        "state `{}` appears in more than one cell",
                        s.as_ref()
                    )));
                }
                cell_of[i] = c;
                event.insert(i);
            }
            out.push(event);
        }
        if let Some(i) = cell_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::domain(format!(
                "state `{}` is not covered by the partition",
                space.states[i]
            )));
        }
        Ok(Self {
            cells: out,
            cell_of,
        })
    }

    fn knowledge(&self, event: &StateEvent) -> StateEvent {
        self.cells
            .iter()
            .filter(|cell| cell.is_subset(event))
            .fold(StateEvent::empty(event.universe()), |acc, cell| {
                acc.union(cell)
            })
    }
}

fn validate_prior(prior: &[f64], n: usize) -> Result<()> {
    if prior.len() != n {
        return Err(Error::domain(format!(
            "prior has {} entries for {n} states",
            prior.len()
        )));
    }
    if let Some(p) = prior
        .iter()
        .find(|p| !(p.is_finite() && **p >= 0.0 && **p <= 1.0))
    {
        return Err(Error::domain(format!("prior value {p} outside [0, 1]")));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > PRIOR_TOLERANCE {
        return Err(Error::domain(format!("prior sums to {total}, expected 1")));
    }
    Ok(())
}

/// Clamped so rounding never pushes a probability past 1.
fn sum_over(prior: &[f64], event: &StateEvent) -> f64 {
    event.iter().map(|i| prior[i]).sum::<f64>().min(1.0)
}

/// One agent's view of a finite state space: its information partition and
/// its prior over states.
#[derive(Debug, Clone)]
pub struct PartitionModel {
    space: StateSpace,
    partition: Partition,
    prior: Vec<f64>,
}

impl PartitionModel {
    /// `prior[i]` is the probability of `states[i]`.
    pub fn new<S: AsRef<str>>(states: &[S], cells: &[Vec<S>], prior: Vec<f64>) -> Result<Self> {
        let space = StateSpace::new(states.iter().map(|s| s.as_ref().to_owned()).collect())?;
        let partition = Partition::new(&space, cells)?;
        validate_prior(&prior, space.len())?;
        Ok(Self {
            space,
            partition,
            prior,
        })
    }

    pub fn with_uniform_prior<S: AsRef<str>>(states: &[S], cells: &[Vec<S>]) -> Result<Self> {
        let n = states.len().max(1);
        Self::new(states, cells, vec![1.0 / n as f64; states.len()])
    }

    pub fn states(&self) -> &[String] {
        &self.space.states
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn cells(&self) -> &[StateEvent] {
        &self.partition.cells
    }

    /// Builds an event of this model from state identifiers.
    pub fn event<S: AsRef<str>>(&self, states: &[S]) -> Result<StateEvent> {
        let mut event = StateEvent::empty(self.space.len());
        for s in states {
            event.insert(self.space.lookup(s.as_ref())?);
        }
        Ok(event)
    }

    /// State identifiers of an event, in model order.
    pub fn names(&self, event: &StateEvent) -> Vec<&str> {
        event
            .iter()
            .map(|i| self.space.states[i].as_str())
            .collect()
    }

    pub fn cell_of(&self, state: &str) -> Result<StateEvent> {
        let i = self.space.lookup(state)?;
        Ok(self.partition.cells[self.partition.cell_of[i]].clone())
    }

    pub fn knows_at(&self, state: &str, event: &StateEvent) -> Result<bool> {
        self.check(event)?;
        Ok(self.cell_of(state)?.is_subset(event))
    }

    /// `K(E)`: the states at which the agent knows `event`.
    pub fn knowledge(&self, event: &StateEvent) -> StateEvent {
        self.partition.knowledge(event)
    }

    pub fn negate(&self, event: &StateEvent) -> StateEvent {
        event.complement()
    }

    pub fn probability(&self, event: &StateEvent) -> f64 {
        sum_over(&self.prior, event)
    }

    fn check(&self, event: &StateEvent) -> Result<()> {
        if event.universe() != self.space.len() {
            return Err(Error::domain("event belongs to a different state space"));
        }
        Ok(())
    }
}

/// Two agents over a shared state space; only the speaker's prior is modeled.
#[derive(Debug, Clone)]
pub struct TwoAgentModel {
    space: StateSpace,
    partition_a: Partition,
    partition_b: Partition,
    prior_a: Vec<f64>,
}

impl TwoAgentModel {
    pub fn new<S: AsRef<str>>(
        states: &[S],
        cells_a: &[Vec<S>],
        cells_b: &[Vec<S>],
        prior_a: Vec<f64>,
    ) -> Result<Self> {
        let space = StateSpace::new(states.iter().map(|s| s.as_ref().to_owned()).collect())?;
        let partition_a = Partition::new(&space, cells_a)?;
        let partition_b = Partition::new(&space, cells_b)?;
        validate_prior(&prior_a, space.len())?;
        Ok(Self {
            space,
            partition_a,
            partition_b,
            prior_a,
        })
    }

    pub fn states(&self) -> &[String] {
        &self.space.states
    }

    pub fn prior_a(&self) -> &[f64] {
        &self.prior_a
    }

    /// Agent A's view: A's partition with A's prior.
    pub fn agent_a(&self) -> PartitionModel {
        PartitionModel {
            space: self.space.clone(),
            partition: self.partition_a.clone(),
            prior: self.prior_a.clone(),
        }
    }

    /// Agent B's partition, evaluated under A's prior.
    pub fn agent_b(&self) -> PartitionModel {
        PartitionModel {
            space: self.space.clone(),
            partition: self.partition_b.clone(),
            prior: self.prior_a.clone(),
        }
    }

    pub fn event<S: AsRef<str>>(&self, states: &[S]) -> Result<StateEvent> {
        let mut event = StateEvent::empty(self.space.len());
        for s in states {
            event.insert(self.space.lookup(s.as_ref())?);
        }
        Ok(event)
    }

    /// `K_B(E)`.
    pub fn knowledge_b(&self, event: &StateEvent) -> StateEvent {
        self.partition_b.knowledge(event)
    }

    /// `P_A(E)`.
    pub fn probability_a(&self, event: &StateEvent) -> f64 {
        sum_over(&self.prior_a, event)
    }

    /// Whether telling `event` is an ε-act of the given kind from A to B.
    pub fn act_feasible(&self, event: &StateEvent, act: ActKind, epsilon: f64) -> Result<bool> {
        check_epsilon(epsilon)?;
        if event.universe() != self.space.len() {
            return Err(Error::domain("event belongs to a different state space"));
        }
        Ok(self.feasible_unchecked(event, act, 1.0 - epsilon))
    }

    fn feasible_unchecked(&self, event: &StateEvent, act: ActKind, threshold: f64) -> bool {
        if self.probability_a(event) < threshold {
            return false;
        }
        let known_b = self.knowledge_b(event);
        let second = match act {
            ActKind::Adversarial => known_b.complement(),
            ActKind::Alignment => known_b,
        };
        self.probability_a(&second) >= threshold
    }

    /// Every subset of the state space that passes [`Self::act_feasible`],
    /// in ascending bit-mask order.
    pub fn feasible_events_bruteforce(
        &self,
        act: ActKind,
        epsilon: f64,
    ) -> Result<Vec<StateEvent>> {
        check_epsilon(epsilon)?;
        let n = self.space.len();
        if n > MAX_ENUMERATION_STATES {
            return Err(Error::Capacity(format!(
                "{n} states exceed the enumeration limit of {MAX_ENUMERATION_STATES}"
            )));
        }
        let threshold = 1.0 - epsilon;
        Ok((0u64..1 << n)
            .map(|mask| StateEvent::from_mask(n, mask))
            .filter(|e| self.feasible_unchecked(e, act, threshold))
            .collect())
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::domain(format!("epsilon {epsilon} outside [0, 1)")));
    }
    Ok(())
}
