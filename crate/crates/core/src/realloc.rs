//! Minimum-violation task reallocation after skill failures: per-disjunct
//! reassignment contexts, breadth-first search over the handover graph, and
//! guard revision across every affected transition.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::automaton::Nba;
use crate::cost::Cost;
use crate::formula::{Conjunct, GuardEnv, Literal};
use crate::types::{PenaltyMap, PredId, RegionId, RobotId, SkillId, StateId};
use crate::world::CapabilityMatrix;

/// Per-disjunct reassignment bookkeeping.
///
/// `busy` maps each robot to the predicate currently bound to it in the
/// conjunct (negated literals and the failed predicate excluded),
/// `forbidden` lists the (skill, region) fragments whose generation by a
/// robot would falsify the conjunct, and `free` collects the robots with no
/// binding here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReassignContext {
    pub robots: BTreeSet<RobotId>,
    pub busy: BTreeMap<RobotId, PredId>,
    pub forbidden: BTreeMap<RobotId, BTreeSet<(SkillId, RegionId)>>,
    pub free: BTreeSet<RobotId>,
}

impl ReassignContext {
    pub fn assigned(&self, robot: RobotId) -> Option<PredId> {
        self.busy.get(&robot).copied()
    }

    pub fn is_free(&self, robot: RobotId) -> bool {
        !self.busy.contains_key(&robot)
    }

    pub fn fragment_blocked(&self, robot: RobotId, skill: SkillId, region: RegionId) -> bool {
        self.forbidden
            .get(&robot)
            .map(|set| set.contains(&(skill, region)))
            .unwrap_or(false)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReallocError {
    #[error("failed predicate does not appear positively in the conjunct")]
    FailedPredicateAbsent,
    #[error("no robot can take over the failed predicate")]
    NoCandidate,
}

/// Builds the reassignment context of one conjunct for one failed predicate.
///
/// The involved robots are those bound in the conjunct plus the avoid-scope
/// teams. A robot's forbidden fragments are the (skill, region) actions that
/// would falsify the conjunct through an avoid or negated literal, counting
/// presence: a sub-task whose satisfaction puts the robot on an avoided
/// mobility cell is forbidden for it too.
pub fn build_context(
    conjunct: &Conjunct,
    env: &GuardEnv,
    failed: PredId,
    robot_count: usize,
) -> Result<ReassignContext, ReallocError> {
    let mut mentions_failed = false;
    let mut robots = BTreeSet::new();
    let mut busy = BTreeMap::new();
    for literal in &conjunct.literals {
        match *literal {
            Literal::Apply {
                pred,
                robot,
                negated,
            } => {
                if pred == failed && !negated {
                    mentions_failed = true;
                }
                if let Some(robot) = robot {
                    robots.insert(robot);
                    if !negated && pred != failed {
                        busy.insert(robot, pred);
                    }
                }
            }
            Literal::Avoid { pred } => {
                let avoid = env.preds.avoid(pred);
                match avoid.subject {
                    Some(robot) => {
                        robots.insert(robot);
                    }
                    None => robots.extend(env.teams.team(avoid.scope_skill)),
                }
            }
        }
    }
    if !mentions_failed {
        return Err(ReallocError::FailedPredicateAbsent);
    }

    let candidate_fragments: BTreeSet<(SkillId, RegionId)> = conjunct
        .positive_applies()
        .map(|(pred, _)| {
            let apply = env.preds.apply(pred);
            (apply.skill, apply.region)
        })
        .collect();
    let mut forbidden: BTreeMap<RobotId, BTreeSet<(SkillId, RegionId)>> = BTreeMap::new();
    for robot in (0..robot_count).map(RobotId) {
        let mut set = BTreeSet::new();
        for &(skill, region) in &candidate_fragments {
            if env.fragment_forbidden(conjunct, robot, skill, region) {
                set.insert((skill, region));
            }
        }
        if !set.is_empty() {
            forbidden.insert(robot, set);
        }
    }

    let free = (0..robot_count)
        .map(RobotId)
        .filter(|r| !busy.contains_key(r))
        .collect();
    Ok(ReassignContext {
        robots,
        busy,
        forbidden,
        free,
    })
}

/// A chain of handovers repairing one failed predicate: robot `robots[k+1]`
/// takes over the sub-task of `robots[k]`, the root's sub-task being the
/// failed predicate itself. `sacrificed` is the predicate left unassigned
/// when no free robot was reachable; the cost is its penalty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReassignPath {
    pub robots: Vec<RobotId>,
    pub cost: Cost,
    pub sacrificed: Option<PredId>,
}

/// Breadth-first search for the cheapest repair of the failed predicate
/// within one conjunct.
///
/// Nodes are robots; an edge a -> a' exists when a' belongs to the team of
/// the skill of a's current sub-task (the failed predicate's skill at the
/// root) and taking that sub-task over would not falsify the conjunct. The
/// first free robot popped terminates the search with cost zero. Otherwise,
/// once the queue empties, the explored robot whose sub-task carries the
/// strictly lowest penalty is sacrificed. The root is not pre-marked
/// explored, so the failed robot may re-enter the chain using a surviving
/// skill; neighbor expansion in ascending robot order keeps runs
/// reproducible.
pub fn bfs_reassign(
    ctx: &ReassignContext,
    failed: PredId,
    root: RobotId,
    env: &GuardEnv,
    penalties: &PenaltyMap,
) -> Result<ReassignPath, ReallocError> {
    let preds = env.preds;
    let handed_pred = |robot: RobotId, is_root: bool| -> Option<PredId> {
        if is_root {
            Some(failed)
        } else {
            ctx.assigned(robot)
        }
    };

    let mut parent: BTreeMap<RobotId, RobotId> = BTreeMap::new();
    let mut explored: BTreeSet<RobotId> = BTreeSet::new();
    let mut queue: VecDeque<(RobotId, bool)> = VecDeque::from([(root, true)]);
    let mut best: Option<(Cost, RobotId)> = None;

    while let Some((robot, is_root)) = queue.pop_front() {
        if !is_root && ctx.is_free(robot) {
            return Ok(ReassignPath {
                robots: chain_from(&parent, root, robot),
                cost: Cost::ZERO,
                sacrificed: None,
            });
        }
        let Some(pred) = handed_pred(robot, is_root) else {
            continue;
        };
        let apply = preds.apply(pred);
        for next in env.teams.team(apply.skill) {
            if next == robot || explored.contains(&next) {
                continue;
            }
            if ctx.fragment_blocked(next, apply.skill, apply.region) {
                continue;
            }
            explored.insert(next);
            parent.insert(next, robot);
            queue.push_back((next, false));
            if let Some(owned) = ctx.assigned(next) {
                let penalty = penalties.penalty(preds, owned);
                if best.map(|(c, _)| penalty < c).unwrap_or(true) {
                    best = Some((penalty, next));
                }
            }
        }
    }

    match best {
        Some((cost, last)) => Ok(ReassignPath {
            robots: chain_from(&parent, root, last),
            cost,
            sacrificed: ctx.assigned(last),
        }),
        None => Err(ReallocError::NoCandidate),
    }
}

fn chain_from(parent: &BTreeMap<RobotId, RobotId>, root: RobotId, last: RobotId) -> Vec<RobotId> {
    let mut chain = vec![last];
    let mut at = last;
    while at != root {
        at = parent[&at];
        chain.push(at);
    }
    if chain.len() == 1 {
        // The root re-entered the chain through a cycle.
        if let Some(&p) = parent.get(&last) {
            let mut at = p;
            chain.push(at);
            while at != root {
                at = parent[&at];
                chain.push(at);
            }
        }
    }
    chain.reverse();
    chain
}

/// One reassignment performed while repairing an affected transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReassignRecord {
    pub pred: PredId,
    pub edge: (StateId, StateId),
    pub disjunct: usize,
    pub path: Vec<RobotId>,
    pub sacrificed: Option<PredId>,
    pub cost: Cost,
}

/// Repairs every affected transition for a batch of failed predicates.
///
/// Each failed predicate is treated independently across every edge whose
/// guard mentions it within reach of `current` and every disjunct where it
/// appears positively bound to a robot that lost the skill: a reassignment
/// chain is searched, the bindings along the chain are rewritten, and the
/// sacrificed predicate (if any) loses its binding. Unassigned bindings
/// persist; predicates sacrificed by earlier repairs are never re-failed.
pub fn repair(
    nba: &Nba,
    current: StateId,
    failed_set: &BTreeSet<PredId>,
    env: &GuardEnv,
    caps: &CapabilityMatrix,
    penalties: &PenaltyMap,
) -> (Nba, Vec<ReassignRecord>) {
    let robot_count = caps.robot_count();
    let mut revised = nba.clone();
    let mut log = Vec::new();
    for &failed in failed_set {
        let affected = revised.failed_edges(current, failed);
        for edge in affected.edges {
            let guard = revised.guard(edge.0, edge.1).expect("edge exists").clone();
            for (d, conjunct) in guard.disjuncts.iter().enumerate() {
                let Some(root) = positive_binding(conjunct, failed) else {
                    continue;
                };
                let apply = env.preds.apply(failed);
                if caps.has(root, apply.skill) {
                    continue;
                }
                let ctx = match build_context(conjunct, env, failed, robot_count) {
                    Ok(ctx) => ctx,
                    Err(_) => continue,
                };
                match bfs_reassign(&ctx, failed, root, env, penalties) {
                    Ok(path) => {
                        apply_chain(&mut revised, edge, d, failed, &path, &ctx);
                        log.push(ReassignRecord {
                            pred: failed,
                            edge,
                            disjunct: d,
                            path: path.robots.clone(),
                            sacrificed: path.sacrificed,
                            cost: path.cost,
                        });
                    }
                    Err(ReallocError::NoCandidate) | Err(ReallocError::FailedPredicateAbsent) => {
                        // Nobody can take the predicate over: it stays
                        // unassigned and its own penalty is charged.
                        rebind(&mut revised, edge, d, failed, None);
                        log.push(ReassignRecord {
                            pred: failed,
                            edge,
                            disjunct: d,
                            path: vec![root],
                            sacrificed: Some(failed),
                            cost: penalties.penalty(env.preds, failed),
                        });
                    }
                }
            }
        }
    }
    (revised, log)
}

/// The robot positively bound to `pred` in the conjunct, if any.
fn positive_binding(conjunct: &Conjunct, pred: PredId) -> Option<RobotId> {
    conjunct
        .positive_applies()
        .find_map(|(p, robot)| (p == pred).then_some(robot))
        .flatten()
}

/// Rewrites the bindings of one disjunct along a reassignment chain.
fn apply_chain(
    nba: &mut Nba,
    edge: (StateId, StateId),
    disjunct: usize,
    failed: PredId,
    path: &ReassignPath,
    ctx: &ReassignContext,
) {
    // robots[k+1] takes the sub-task of robots[k]; the root hands over the
    // failed predicate.
    let chain = &path.robots;
    let mut updates: Vec<(PredId, Option<RobotId>)> = Vec::new();
    for k in 0..chain.len() - 1 {
        let pred = if k == 0 {
            failed
        } else {
            match ctx.assigned(chain[k]) {
                Some(p) => p,
                None => break,
            }
        };
        updates.push((pred, Some(chain[k + 1])));
    }
    if let Some(sacrificed) = path.sacrificed {
        updates.push((sacrificed, None));
    }
    for (pred, robot) in updates {
        rebind(nba, edge, disjunct, pred, robot);
    }
}

fn rebind(
    nba: &mut Nba,
    edge: (StateId, StateId),
    disjunct: usize,
    pred: PredId,
    robot: Option<RobotId>,
) {
    let guard = nba.guard_mut(edge.0, edge.1).expect("edge exists");
    for literal in &mut guard.disjuncts[disjunct].literals {
        if let Literal::Apply {
            pred: p,
            robot: binding,
            negated: false,
        } = literal
        {
            if *p == pred {
                *binding = robot;
            }
        }
    }
}
