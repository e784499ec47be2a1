//! Nondeterministic Büchi automata: validation, pruning, reachability,
//! affected-edge collection, and enumeration of candidate lasso paths.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::cost::Cost;
use crate::formula::{Conjunct, GuardDnf};
use crate::types::{PenaltyMap, PredId, PredTable, StateId};

/// A nondeterministic Büchi automaton over guarded transitions. Guards are
/// stored in disjunctive normal form; apply literals carry the robot
/// currently bound to each predicate, which task reallocation rewrites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nba {
    state_names: Vec<String>,
    initial: BTreeSet<StateId>,
    accepting: BTreeSet<StateId>,
    transitions: BTreeMap<(StateId, StateId), GuardDnf>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NbaError {
    #[error("duplicate state id {0:?}")]
    DuplicateState(String),
    #[error("transition references undeclared state {0:?}")]
    DanglingState(String),
    #[error("no initial state declared")]
    NoInitialState,
    #[error("no accepting state declared")]
    NoAcceptingState,
    #[error("transition declares an empty guard")]
    EmptyGuard,
}

impl Nba {
    pub fn new(
        states: Vec<(String, bool, bool)>,
        transitions: Vec<(String, String, GuardDnf)>,
    ) -> Result<Nba, NbaError> {
        let mut names = Vec::new();
        let mut by_name: BTreeMap<String, StateId> = BTreeMap::new();
        let mut initial = BTreeSet::new();
        let mut accepting = BTreeSet::new();
        for (name, is_initial, is_accepting) in states {
            if by_name.contains_key(&name) {
                return Err(NbaError::DuplicateState(name));
            }
            let id = StateId(names.len());
            by_name.insert(name.clone(), id);
            names.push(name);
            if is_initial {
                initial.insert(id);
            }
            if is_accepting {
                accepting.insert(id);
            }
        }
        if initial.is_empty() {
            return Err(NbaError::NoInitialState);
        }
        if accepting.is_empty() {
            return Err(NbaError::NoAcceptingState);
        }
        let mut map = BTreeMap::new();
        for (from, to, guard) in transitions {
            let from = *by_name
                .get(&from)
                .ok_or(NbaError::DanglingState(from.clone()))?;
            let to = *by_name
                .get(&to)
                .ok_or(NbaError::DanglingState(to.clone()))?;
            if guard.is_empty() {
                return Err(NbaError::EmptyGuard);
            }
            map.insert((from, to), guard);
        }
        Ok(Nba {
            state_names: names,
            initial,
            accepting,
            transitions: map,
        })
    }

    pub fn state_count(&self) -> usize {
        self.state_names.len()
    }

    pub fn state_name(&self, id: StateId) -> &str {
        &self.state_names[id.0]
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.state_names
            .iter()
            .position(|n| n == name)
            .map(StateId)
    }

    pub fn initial(&self) -> impl Iterator<Item = StateId> + '_ {
        self.initial.iter().copied()
    }

    pub fn accepting(&self) -> impl Iterator<Item = StateId> + '_ {
        self.accepting.iter().copied()
    }

    pub fn is_accepting(&self, id: StateId) -> bool {
        self.accepting.contains(&id)
    }

    pub fn guard(&self, from: StateId, to: StateId) -> Option<&GuardDnf> {
        self.transitions.get(&(from, to))
    }

    pub fn guard_mut(&mut self, from: StateId, to: StateId) -> Option<&mut GuardDnf> {
        self.transitions.get_mut(&(from, to))
    }

    pub fn transitions(&self) -> impl Iterator<Item = (StateId, StateId, &GuardDnf)> {
        self.transitions.iter().map(|(&(f, t), g)| (f, t, g))
    }

    pub fn successors(&self, from: StateId) -> impl Iterator<Item = StateId> + '_ {
        self.transitions
            .range((from, StateId(0))..=(from, StateId(usize::MAX)))
            .map(|(&(_, to), _)| to)
    }

    /// Removes conjuncts that demand two skills of one robot at once; guards
    /// left without disjuncts drop their transition. Idempotent.
    pub fn prune(&self) -> Nba {
        let mut pruned = self.clone();
        pruned.transitions.retain(|_, guard| {
            guard.disjuncts.retain(|c| !c.demands_two_skills());
            !guard.disjuncts.is_empty()
        });
        pruned
    }

    /// Self-loops whose guards are neither constant true nor built from avoid
    /// literals only. On such automata the re-planner loses its optimality
    /// guarantee, so callers surface these as warnings.
    pub fn offending_self_loops(&self) -> Vec<StateId> {
        self.transitions
            .iter()
            .filter(|(&(f, t), guard)| f == t && !guard.avoid_only())
            .map(|(&(f, _), _)| f)
            .collect()
    }

    /// Forward closure from `from`, including `from` itself.
    pub fn reachable_from(&self, from: StateId) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(cur) = queue.pop_front() {
            for next in self.successors(cur) {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    /// The edges within reach of `current` whose guard mentions `pred`, in
    /// state-id order. These are the transitions a failure of `pred` affects.
    pub fn failed_edges(&self, current: StateId, pred: PredId) -> FailedEdgeSet {
        let reachable = self.reachable_from(current);
        let edges = self
            .transitions
            .iter()
            .filter(|(&(f, t), guard)| {
                reachable.contains(&f) && reachable.contains(&t) && guard.mentions(pred)
            })
            .map(|(&e, _)| e)
            .collect();
        FailedEdgeSet { pred, edges }
    }
}

/// The transitions affected by one failed predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailedEdgeSet {
    pub pred: PredId,
    pub edges: Vec<(StateId, StateId)>,
}

/// A candidate accepting lasso: a loop-free prefix from the current state to
/// an accepting state, a cycle returning to it, and one guard disjunct chosen
/// per transition. `path` stores prefix and cycle merged at the shared
/// accepting state; the only consecutive repeat allowed is a cycle consisting
/// solely of the accepting self-loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lasso {
    pub path: Vec<StateId>,
    pub prefix_len: usize,
    pub choices: Vec<usize>,
    pub cost: Cost,
}

impl Lasso {
    pub fn anchor(&self) -> StateId {
        self.path[self.prefix_len - 1]
    }

    pub fn prefix(&self) -> &[StateId] {
        &self.path[..self.prefix_len]
    }

    pub fn cycle(&self) -> &[StateId] {
        &self.path[self.prefix_len - 1..]
    }

    pub fn edges(&self) -> impl Iterator<Item = ((StateId, StateId), usize)> + '_ {
        self.path
            .windows(2)
            .zip(&self.choices)
            .map(|(w, &d)| ((w[0], w[1]), d))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no accepting state is reachable from {0:?}")]
pub struct NoAcceptingPath(pub String);

/// The penalty charged for enabling one disjunct: the summed penalties of its
/// unassigned predicates.
pub fn disjunct_cost(conjunct: &Conjunct, preds: &PredTable, penalties: &PenaltyMap) -> Cost {
    conjunct
        .unassigned()
        .map(|p| penalties.penalty(preds, p))
        .sum()
}

/// Enumerates every candidate lasso from `current`, costed by the summed
/// penalties of unassigned predicates along the chosen disjuncts, ordered by
/// ascending cost then lexicographically. Prefix paths and cycles are simple;
/// exhaustive enumeration keeps the optimality arguments testable.
pub fn enumerate_lassos(
    nba: &Nba,
    current: StateId,
    preds: &PredTable,
    penalties: &PenaltyMap,
) -> Result<Vec<Lasso>, NoAcceptingPath> {
    let mut prefixes: Vec<Vec<StateId>> = Vec::new();
    let mut stack = vec![current];
    let mut visited = BTreeSet::from([current]);
    collect_prefixes(nba, &mut stack, &mut visited, &mut prefixes);

    let anchors: BTreeSet<StateId> = prefixes.iter().map(|p| *p.last().unwrap()).collect();
    let mut cycles: BTreeMap<StateId, Vec<Vec<StateId>>> = BTreeMap::new();
    for &anchor in &anchors {
        cycles.insert(anchor, collect_cycles(nba, anchor));
    }

    let mut lassos = Vec::new();
    for prefix in &prefixes {
        let anchor = *prefix.last().unwrap();
        for cycle in &cycles[&anchor] {
            let mut path = prefix.clone();
            path.extend_from_slice(&cycle[1..]);
            expand_choices(nba, &path, prefix.len(), preds, penalties, &mut lassos);
        }
    }
    if lassos.is_empty() {
        return Err(NoAcceptingPath(nba.state_name(current).to_owned()));
    }
    lassos.sort_by(|a, b| {
        a.cost
            .cmp(&b.cost)
            .then_with(|| a.path.cmp(&b.path))
            .then_with(|| a.choices.cmp(&b.choices))
    });
    Ok(lassos)
}

fn collect_prefixes(
    nba: &Nba,
    stack: &mut Vec<StateId>,
    visited: &mut BTreeSet<StateId>,
    out: &mut Vec<Vec<StateId>>,
) {
    let cur = *stack.last().unwrap();
    if nba.is_accepting(cur) {
        out.push(stack.clone());
    }
    for next in nba.successors(cur).collect::<Vec<_>>() {
        if next == cur || visited.contains(&next) {
            continue;
        }
        visited.insert(next);
        stack.push(next);
        collect_prefixes(nba, stack, visited, out);
        stack.pop();
        visited.remove(&next);
    }
}

/// Simple cycles anchor -> ... -> anchor. A bare self-loop yields the
/// two-element cycle.
fn collect_cycles(nba: &Nba, anchor: StateId) -> Vec<Vec<StateId>> {
    let mut out = Vec::new();
    if nba.guard(anchor, anchor).is_some() {
        out.push(vec![anchor, anchor]);
    }
    let mut stack = vec![anchor];
    let mut visited = BTreeSet::new();
    cycle_dfs(nba, anchor, &mut stack, &mut visited, &mut out);
    out
}

fn cycle_dfs(
    nba: &Nba,
    anchor: StateId,
    stack: &mut Vec<StateId>,
    visited: &mut BTreeSet<StateId>,
    out: &mut Vec<Vec<StateId>>,
) {
    let cur = *stack.last().unwrap();
    for next in nba.successors(cur).collect::<Vec<_>>() {
        if next == anchor {
            if stack.len() > 1 {
                let mut cycle = stack.clone();
                cycle.push(anchor);
                out.push(cycle);
            }
            continue;
        }
        if next == cur || visited.contains(&next) {
            continue;
        }
        visited.insert(next);
        stack.push(next);
        cycle_dfs(nba, anchor, stack, visited, out);
        stack.pop();
        visited.remove(&next);
    }
}

fn expand_choices(
    nba: &Nba,
    path: &[StateId],
    prefix_len: usize,
    preds: &PredTable,
    penalties: &PenaltyMap,
    out: &mut Vec<Lasso>,
) {
    let per_edge: Vec<Vec<Cost>> = path
        .windows(2)
        .map(|w| {
            let guard = nba.guard(w[0], w[1]).expect("path follows transitions");
            guard
                .disjuncts
                .iter()
                .map(|c| disjunct_cost(c, preds, penalties))
                .collect()
        })
        .collect();
    let mut choices = vec![0usize; per_edge.len()];
    expand_rec(&per_edge, 0, Cost::ZERO, &mut choices, &mut |choices, cost| {
        out.push(Lasso {
            path: path.to_vec(),
            prefix_len,
            choices: choices.to_vec(),
            cost,
        });
    });
}

fn expand_rec(
    per_edge: &[Vec<Cost>],
    idx: usize,
    acc: Cost,
    choices: &mut Vec<usize>,
    emit: &mut impl FnMut(&[usize], Cost),
) {
    if idx == per_edge.len() {
        emit(choices, acc);
        return;
    }
    for (d, &cost) in per_edge[idx].iter().enumerate() {
        choices[idx] = d;
        expand_rec(per_edge, idx + 1, acc + cost, choices, emit);
    }
}
