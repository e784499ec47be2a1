//! Deterministic plan synthesis on the product of team configuration,
//! applied skills, and automaton state.
//!
//! Plans are built lasso by lasso: candidate state paths come from
//! [`enumerate_lassos`](crate::automaton::enumerate_lassos) in ascending
//! violation order, and each transition is realized as a motion segment in
//! which only the robots bound to the chosen disjunct move while the rest
//! hold position. Costs order lexicographically by violation, then step
//! count, then total traveled distance.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::automaton::{enumerate_lassos, Lasso, Nba};
use crate::cost::Cost;
use crate::formula::{edge_violation, label, presence_safe, satisfies, GuardEnv};
use crate::types::{PenaltyMap, RobotId, SkillId, StateId};
use crate::world::{CapabilityMatrix, Cell, WorldModel};

/// One step of a team plan: per-robot cells, per-robot applied skills, and
/// the automaton state the team occupies during the step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeamState {
    pub cells: Vec<Cell>,
    pub skills: Vec<SkillId>,
    pub q: StateId,
}

impl TeamState {
    pub fn idle(cells: Vec<Cell>, q: StateId) -> TeamState {
        let n = cells.len();
        TeamState {
            cells,
            skills: vec![SkillId::IDLE; n],
            q,
        }
    }
}

/// A prefix-suffix team plan. The suffix cycles: the successor of its last
/// state is its first state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeamPlan {
    pub prefix: Vec<TeamState>,
    pub suffix: Vec<TeamState>,
    /// Disjunct enabled at each concatenated step (prefix then suffix).
    pub choices: Vec<usize>,
    pub violation: Cost,
}

impl TeamPlan {
    /// Number of states in one prefix plus one suffix cycle.
    pub fn horizon(&self) -> usize {
        self.prefix.len() + self.suffix.len()
    }

    /// State at concatenated index `k` (prefix followed by one suffix cycle).
    pub fn state(&self, k: usize) -> &TeamState {
        if k < self.prefix.len() {
            &self.prefix[k]
        } else {
            &self.suffix[k - self.prefix.len()]
        }
    }

    /// Successor index of `k`, wrapping from the suffix end to its start.
    pub fn next_index(&self, k: usize) -> usize {
        if k + 1 < self.horizon() {
            k + 1
        } else {
            self.prefix.len()
        }
    }

    /// Maps an execution step (which may run past one suffix cycle) onto a
    /// concatenated index.
    pub fn wrap_index(&self, t: usize) -> usize {
        if t < self.horizon() {
            t
        } else {
            let k = self.suffix.len();
            self.prefix.len() + (t - self.prefix.len()) % k
        }
    }

    pub fn states(&self) -> impl Iterator<Item = &TeamState> {
        self.prefix.iter().chain(self.suffix.iter())
    }

    /// Total per-robot Manhattan distance traveled over prefix and one
    /// suffix cycle including the wrap step.
    pub fn travel_distance(&self) -> u64 {
        let mut total = 0;
        for k in 0..self.horizon() {
            let a = self.state(k);
            let b = self.state(self.next_index(k));
            total += a
                .cells
                .iter()
                .zip(&b.cells)
                .map(|(&x, &y)| x.manhattan(y))
                .sum::<u64>();
        }
        total
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("mission cannot be realized from the given configuration")]
    Infeasible,
    #[error("no accepting state reachable")]
    NoAcceptingPath,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("segment cannot be realized")]
    SegmentInfeasible,
}

/// Search context shared by the planning entry points.
#[derive(Clone, Copy)]
pub struct PlannerCtx<'a> {
    pub world: &'a WorldModel,
    pub caps: &'a CapabilityMatrix,
    pub env: &'a GuardEnv<'a>,
    pub penalties: &'a PenaltyMap,
}

/// Where a motion segment must end.
#[derive(Debug, Clone)]
pub enum SegmentGoal<'a> {
    /// Append the entry state of the corridor's final automaton state.
    Reach,
    /// End exactly at this state (used to splice into a reused sub-plan).
    Exact(&'a TeamState),
    /// Travel back to these cells after the corridor's final transition so
    /// the sequence closes into a cycle; the duplicate closing state is not
    /// emitted.
    Loop(&'a [Cell]),
}

/// A realized motion segment: states with the disjunct each step enables.
#[derive(Debug, Clone)]
pub struct Segment {
    pub states: Vec<TeamState>,
    pub choices: Vec<usize>,
}

/// Sum of per-step violation scores from concatenated index `from` through
/// the end of one suffix cycle, including the wrap transition.
pub fn plan_violation(plan: &TeamPlan, from: usize, nba: &Nba, ctx: &PlannerCtx) -> Cost {
    let mut total = Cost::ZERO;
    for k in from..plan.horizon() {
        let state = plan.state(k);
        let next = plan.state(plan.next_index(k));
        let skills = masked_skills(&state.skills, ctx.caps);
        let symbol = match label(&state.cells, &skills, ctx.world, ctx.caps) {
            Ok(s) => s,
            Err(_) => return Cost::INFINITE,
        };
        let guard = match nba.guard(state.q, next.q) {
            Some(g) => g,
            None => return Cost::INFINITE,
        };
        total = total + edge_violation(&symbol, guard, ctx.env, ctx.penalties);
    }
    total
}

/// Skills a robot can no longer apply collapse to idling.
pub fn masked_skills(skills: &[SkillId], caps: &CapabilityMatrix) -> Vec<SkillId> {
    skills
        .iter()
        .enumerate()
        .map(|(i, &s)| if caps.has(RobotId(i), s) { s } else { SkillId::IDLE })
        .collect()
}

/// Synthesizes a minimum-violation plan from `start` at automaton state
/// `from`. Candidate lassos are tried in ascending violation order; within
/// the first realizable cost tier the plan with the fewest steps, then least
/// travel, wins.
pub fn synthesize(
    nba: &Nba,
    ctx: &PlannerCtx,
    start: &[Cell],
    from: StateId,
) -> Result<TeamPlan, PlanError> {
    let lassos =
        enumerate_lassos(nba, from, ctx.env.preds, ctx.penalties).map_err(|_| PlanError::NoAcceptingPath)?;
    let mut i = 0;
    while i < lassos.len() {
        let tier_cost = lassos[i].cost;
        let mut best: Option<TeamPlan> = None;
        while i < lassos.len() && lassos[i].cost == tier_cost {
            if let Ok(plan) = realize_lasso(nba, ctx, start, &lassos[i]) {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        (plan.violation, plan.horizon(), plan.travel_distance())
                            < (b.violation, b.horizon(), b.travel_distance())
                    }
                };
                if better {
                    best = Some(plan);
                }
            }
            i += 1;
        }
        if let Some(plan) = best {
            return Ok(plan);
        }
    }
    Err(PlanError::Infeasible)
}

/// Realizes one candidate lasso into a full prefix-suffix plan.
pub fn realize_lasso(
    nba: &Nba,
    ctx: &PlannerCtx,
    start: &[Cell],
    lasso: &Lasso,
) -> Result<TeamPlan, SegmentError> {
    let pre = lasso.prefix();
    let pre_choices = &lasso.choices[..lasso.prefix_len - 1];
    let cycle = lasso.cycle();
    let cycle_choices = &lasso.choices[lasso.prefix_len - 1..];

    let prefix_seg = realize_segment(nba, ctx, start, pre, pre_choices, SegmentGoal::Reach)?;
    let entry = prefix_seg.states.last().expect("reach appends entry");
    let entry_cells = entry.cells.clone();
    let suffix_seg = realize_segment(
        nba,
        ctx,
        &entry_cells,
        cycle,
        cycle_choices,
        SegmentGoal::Loop(&entry_cells),
    )?;

    let mut prefix = prefix_seg.states;
    prefix.pop();
    let mut choices = prefix_seg.choices;
    choices.pop();
    let suffix = suffix_seg.states;
    choices.extend(suffix_seg.choices);

    let mut plan = TeamPlan {
        prefix,
        suffix,
        choices,
        violation: Cost::ZERO,
    };
    plan.violation = plan_violation(&plan, 0, nba, ctx);
    if plan.violation.is_infinite() {
        return Err(SegmentError::SegmentInfeasible);
    }
    Ok(plan)
}

/// Realizes the motion connecting one corridor of automaton states, starting
/// at `start_cells` in `corridor[0]`.
///
/// Robots bound to a positive literal of the edge's chosen disjunct travel to
/// their stations and apply their skills on arrival; all other robots hold
/// position. Travel steps must satisfy the self-loop guard, every state must
/// respect the hard safety constraints, and unassigned predicates are
/// treated as true.
pub fn realize_segment(
    nba: &Nba,
    ctx: &PlannerCtx,
    start_cells: &[Cell],
    corridor: &[StateId],
    choices: &[usize],
    goal: SegmentGoal,
) -> Result<Segment, SegmentError> {
    assert_eq!(choices.len() + 1, corridor.len());
    let n = start_cells.len();
    let mut states = vec![TeamState::idle(start_cells.to_vec(), corridor[0])];
    let mut out_choices = vec![0usize];

    for (i, &d) in choices.iter().enumerate() {
        let q = corridor[i];
        let q_next = corridor[i + 1];
        let guard = nba.guard(q, q_next).ok_or(SegmentError::SegmentInfeasible)?;
        let conjunct = guard
            .disjuncts
            .get(d)
            .ok_or(SegmentError::SegmentInfeasible)?;

        // Stations for the robots this transition mentions.
        let mut stations: BTreeMap<RobotId, (Cell, SkillId)> = BTreeMap::new();
        for (pred, robot) in conjunct.positive_applies() {
            let Some(robot) = robot else { continue };
            let apply = ctx.env.preds.apply(pred);
            if !ctx.caps.has(robot, apply.skill) {
                return Err(SegmentError::SegmentInfeasible);
            }
            let cell = ctx.world.region_cell(apply.region);
            if stations.insert(robot, (cell, apply.skill)).is_some() {
                return Err(SegmentError::SegmentInfeasible);
            }
        }

        let cur = states.last().unwrap().cells.clone();
        let forbidden = travel_forbidden(nba, ctx, q, n);
        let mut paths: Vec<Vec<Cell>> = Vec::with_capacity(n);
        for r in 0..n {
            match stations.get(&RobotId(r)) {
                Some(&(cell, _)) => {
                    let path = ctx
                        .world
                        .shortest_path(cur[r], cell, &forbidden[r])
                        .ok_or(SegmentError::SegmentInfeasible)?;
                    paths.push(path);
                }
                None => paths.push(vec![cur[r]]),
            }
        }
        let travel = paths.iter().map(|p| p.len() - 1).max().unwrap_or(0);

        let fire_skills: Vec<SkillId> = (0..n)
            .map(|r| stations.get(&RobotId(r)).map(|&(_, s)| s).unwrap_or(SkillId::IDLE))
            .collect();

        if travel == 0 && states.len() == 1 && i == 0 {
            // Fire immediately from the segment's first state.
            states[0].skills = fire_skills;
            out_choices[0] = d;
        } else {
            for step in 1..=travel.max(1) {
                let cells: Vec<Cell> = paths
                    .iter()
                    .map(|p| p[step.min(p.len() - 1)])
                    .collect();
                let firing = step == travel.max(1);
                let state = TeamState {
                    cells,
                    skills: if firing {
                        fire_skills.clone()
                    } else {
                        vec![SkillId::IDLE; n]
                    },
                    q,
                };
                if firing {
                    states.push(state);
                    out_choices.push(d);
                } else {
                    let loop_d = self_loop_choice(nba, ctx, &state)
                        .ok_or(SegmentError::SegmentInfeasible)?;
                    states.push(state);
                    out_choices.push(loop_d);
                }
            }
            // Every pre-fire state (including the inherited segment start
            // when this is the first edge) must hold the self-loop.
            let fire_at = states.len() - 1;
            let check_from = if i == 0 { 0 } else { fire_at };
            for k in check_from..fire_at {
                let d_loop =
                    self_loop_choice(nba, ctx, &states[k]).ok_or(SegmentError::SegmentInfeasible)?;
                out_choices[k] = d_loop;
            }
        }

        // The firing state must enable the chosen disjunct.
        let fire = states.last().unwrap();
        if !state_enables(ctx, fire, conjunct) {
            return Err(SegmentError::SegmentInfeasible);
        }
    }

    finish_segment(nba, ctx, corridor, goal, &mut states, &mut out_choices)?;
    Ok(Segment {
        states,
        choices: out_choices,
    })
}

fn finish_segment(
    nba: &Nba,
    ctx: &PlannerCtx,
    corridor: &[StateId],
    goal: SegmentGoal,
    states: &mut Vec<TeamState>,
    out_choices: &mut Vec<usize>,
) -> Result<(), SegmentError> {
    let q_last = *corridor.last().unwrap();
    let cur = states.last().unwrap().cells.clone();
    match goal {
        SegmentGoal::Reach => {
            states.push(TeamState::idle(cur, q_last));
            out_choices.push(0);
        }
        SegmentGoal::Exact(target) => {
            assert_eq!(target.q, q_last);
            if corridor.len() > 1 {
                // The last state fired into q_last; enter it explicitly.
                states.push(TeamState::idle(cur, q_last));
                out_choices.push(0);
            }
            travel_within(nba, ctx, q_last, &target.cells, states, out_choices)?;
            // The arrival state becomes the splice point; its skills belong
            // to the plan being reused from here on.
            let at = states.last_mut().unwrap();
            if at.cells != target.cells {
                return Err(SegmentError::SegmentInfeasible);
            }
            at.skills = target.skills.clone();
        }
        SegmentGoal::Loop(home) => {
            if cur != home {
                states.push(TeamState::idle(cur, q_last));
                out_choices.push(0);
                travel_within(nba, ctx, q_last, home, states, out_choices)?;
                // Drop the state duplicating the cycle start; its
                // predecessor steps into the start cell directly.
                states.pop();
                out_choices.pop();
            }
        }
    }
    Ok(())
}

/// Moves every robot to `target` cells under the self-loop of `q`.
fn travel_within(
    nba: &Nba,
    ctx: &PlannerCtx,
    q: StateId,
    target: &[Cell],
    states: &mut Vec<TeamState>,
    out_choices: &mut Vec<usize>,
) -> Result<(), SegmentError> {
    let cur = states.last().unwrap().cells.clone();
    if cur == target {
        return Ok(());
    }
    let n = cur.len();
    let forbidden = travel_forbidden(nba, ctx, q, n);
    let mut paths = Vec::with_capacity(n);
    for r in 0..n {
        let path = ctx
            .world
            .shortest_path(cur[r], target[r], &forbidden[r])
            .ok_or(SegmentError::SegmentInfeasible)?;
        paths.push(path);
    }
    let travel = paths.iter().map(|p| p.len() - 1).max().unwrap_or(0);
    // The state we depart from must hold the self-loop.
    let d_loop =
        self_loop_choice(nba, ctx, states.last().unwrap()).ok_or(SegmentError::SegmentInfeasible)?;
    *out_choices.last_mut().unwrap() = d_loop;
    for step in 1..=travel {
        let cells: Vec<Cell> = paths.iter().map(|p| p[step.min(p.len() - 1)]).collect();
        let state = TeamState::idle(cells, q);
        let d = self_loop_choice(nba, ctx, &state).ok_or(SegmentError::SegmentInfeasible)?;
        states.push(state);
        out_choices.push(d);
    }
    Ok(())
}

/// Cells each robot must keep away from while traveling inside `q`:
/// mobility-avoid regions of the self-loop guard that scope the robot. This
/// only guides path search; every state is still validated afterwards.
fn travel_forbidden(nba: &Nba, ctx: &PlannerCtx, q: StateId, n: usize) -> Vec<BTreeSet<Cell>> {
    let mut forbidden = vec![BTreeSet::new(); n];
    let Some(guard) = nba.guard(q, q) else {
        return forbidden;
    };
    for conjunct in &guard.disjuncts {
        for pred in conjunct.avoid_literals() {
            let avoid = ctx.env.preds.avoid(pred);
            if ctx.env.mobility != Some(avoid.skill) {
                continue;
            }
            let cell = ctx.world.region_cell(avoid.region);
            match avoid.subject {
                Some(robot) => {
                    if ctx.env.teams.contains(avoid.scope_skill, robot) {
                        forbidden[robot.0].insert(cell);
                    }
                }
                None => {
                    for robot in ctx.env.teams.team(avoid.scope_skill) {
                        forbidden[robot.0].insert(cell);
                    }
                }
            }
        }
    }
    forbidden
}

/// The first self-loop disjunct the state satisfies, if any.
fn self_loop_choice(nba: &Nba, ctx: &PlannerCtx, state: &TeamState) -> Option<usize> {
    let guard = nba.guard(state.q, state.q)?;
    let skills = masked_skills(&state.skills, ctx.caps);
    let symbol = label(&state.cells, &skills, ctx.world, ctx.caps).ok()?;
    guard.disjuncts.iter().position(|conjunct| {
        satisfies(&symbol, conjunct, ctx.env)
            && presence_safe(&state.cells, conjunct, ctx.env, ctx.world)
    })
}

/// Whether a state's symbol enables a conjunct, including the position-level
/// hard safety constraints.
pub fn state_enables(ctx: &PlannerCtx, state: &TeamState, conjunct: &crate::formula::Conjunct) -> bool {
    let skills = masked_skills(&state.skills, ctx.caps);
    let Ok(symbol) = label(&state.cells, &skills, ctx.world, ctx.caps) else {
        return false;
    };
    satisfies(&symbol, conjunct, ctx.env)
        && presence_safe(&state.cells, conjunct, ctx.env, ctx.world)
}
