//! Boolean guard conditions over atomic predicates, the labeling function,
//! and the per-transition violation score.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::cost::Cost;
use crate::types::{Atom, PenaltyMap, PredId, PredTable, RobotId, SkillId, Symbol};
use crate::world::{CapabilityMatrix, Cell, Teams, WorldModel};

/// One literal of a guard conjunct.
///
/// Apply literals carry the robot currently bound to the predicate; a `None`
/// binding means the predicate was sacrificed during reallocation and is
/// treated as true at planning time while its penalty is charged by the
/// violation score. Avoid literals never carry a negation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Literal {
    Apply {
        pred: PredId,
        robot: Option<RobotId>,
        negated: bool,
    },
    Avoid { pred: PredId },
}

/// A conjunction of literals. An empty conjunct is the constant true.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Conjunct {
    pub literals: Vec<Literal>,
}

impl Conjunct {
    pub fn new(literals: Vec<Literal>) -> Conjunct {
        Conjunct { literals }
    }

    pub fn is_true(&self) -> bool {
        self.literals.is_empty()
    }

    /// Positive apply literals with their current robot bindings.
    pub fn positive_applies(&self) -> impl Iterator<Item = (PredId, Option<RobotId>)> + '_ {
        self.literals.iter().filter_map(|l| match *l {
            Literal::Apply {
                pred,
                robot,
                negated: false,
            } => Some((pred, robot)),
            _ => None,
        })
    }

    pub fn avoid_literals(&self) -> impl Iterator<Item = PredId> + '_ {
        self.literals.iter().filter_map(|l| match *l {
            Literal::Avoid { pred } => Some(pred),
            _ => None,
        })
    }

    /// Predicates left unassigned by reallocation.
    pub fn unassigned(&self) -> impl Iterator<Item = PredId> + '_ {
        self.positive_applies()
            .filter_map(|(pred, robot)| robot.is_none().then_some(pred))
    }

    /// True if some robot is bound to two distinct positive apply predicates,
    /// which a robot cannot satisfy in one step.
    pub fn demands_two_skills(&self) -> bool {
        let mut seen: BTreeSet<RobotId> = BTreeSet::new();
        for (_, robot) in self.positive_applies() {
            if let Some(r) = robot {
                if !seen.insert(r) {
                    return true;
                }
            }
        }
        false
    }
}

/// A transition condition in disjunctive normal form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GuardDnf {
    pub disjuncts: Vec<Conjunct>,
}

impl GuardDnf {
    pub fn new(disjuncts: Vec<Conjunct>) -> GuardDnf {
        GuardDnf { disjuncts }
    }

    /// The constant-true guard: a single empty conjunct.
    pub fn always() -> GuardDnf {
        GuardDnf {
            disjuncts: vec![Conjunct::default()],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.disjuncts.is_empty()
    }

    /// True if the guard is trivially true or built from avoid literals only.
    pub fn avoid_only(&self) -> bool {
        self.disjuncts.iter().all(|c| {
            c.literals
                .iter()
                .all(|l| matches!(l, Literal::Avoid { .. }))
        })
    }

    pub fn mentions(&self, pred: PredId) -> bool {
        self.disjuncts.iter().any(|c| {
            c.literals.iter().any(|l| match *l {
                Literal::Apply { pred: p, .. } => p == pred,
                Literal::Avoid { pred: p } => p == pred,
            })
        })
    }
}

/// Everything needed to evaluate guards: the predicate table, the current
/// skill teams, and which skill (if any) models mobility. A robot performing
/// any action at a region is considered present there, so an avoid predicate
/// over the mobility skill is violated by any action at its region.
#[derive(Debug, Clone, Copy)]
pub struct GuardEnv<'a> {
    pub preds: &'a PredTable,
    pub teams: &'a Teams,
    pub mobility: Option<SkillId>,
}

impl<'a> GuardEnv<'a> {
    pub fn new(preds: &'a PredTable, teams: &'a Teams, mobility: Option<SkillId>) -> Self {
        GuardEnv {
            preds,
            teams,
            mobility,
        }
    }

    fn avoid_scope(&self, pred: PredId) -> Vec<RobotId> {
        let avoid = self.preds.avoid(pred);
        match avoid.subject {
            Some(robot) => {
                if self.teams.contains(avoid.scope_skill, robot) {
                    vec![robot]
                } else {
                    Vec::new()
                }
            }
            None => self.teams.team(avoid.scope_skill).collect(),
        }
    }

    /// True if the symbol violates the avoid predicate. For a mobility-skill
    /// avoid, any action by a scoped robot at the region counts as presence;
    /// otherwise only applying the named skill there violates it.
    pub fn avoid_violated(&self, symbol: &Symbol, pred: PredId) -> bool {
        let avoid = self.preds.avoid(pred);
        let mobility_scoped = self.mobility == Some(avoid.skill);
        self.avoid_scope(pred).into_iter().any(|robot| {
            if mobility_scoped {
                symbol.present_at(robot, avoid.region)
            } else {
                symbol.contains(&Atom {
                    robot,
                    skill: avoid.skill,
                    region: avoid.region,
                })
            }
        })
    }

    /// True if placing `robot` on the given predicate would falsify the
    /// conjunct: the fragment it would generate matches an avoid literal or a
    /// negated apply literal.
    pub fn fragment_forbidden(
        &self,
        conjunct: &Conjunct,
        robot: RobotId,
        skill: SkillId,
        region: crate::types::RegionId,
    ) -> bool {
        for literal in &conjunct.literals {
            match *literal {
                Literal::Avoid { pred } => {
                    let avoid = self.preds.avoid(pred);
                    if avoid.region != region {
                        continue;
                    }
                    let scoped = match avoid.subject {
                        Some(subject) => subject == robot,
                        None => self.teams.contains(avoid.scope_skill, robot),
                    };
                    if !scoped {
                        continue;
                    }
                    if self.mobility == Some(avoid.skill) || avoid.skill == skill {
                        return true;
                    }
                }
                Literal::Apply {
                    pred,
                    robot: Some(bound),
                    negated: true,
                } => {
                    let apply = self.preds.apply(pred);
                    if bound != robot || apply.region != region {
                        continue;
                    }
                    if self.mobility == Some(apply.skill) || apply.skill == skill {
                        return true;
                    }
                }
                _ => {}
            }
        }
        false
    }
}

/// Whether a symbol satisfies one conjunct.
///
/// Bound positive literals need a matching atom, negated literals must find
/// none, avoid literals must be unviolated, and unassigned positive literals
/// are treated as true.
pub fn satisfies(symbol: &Symbol, conjunct: &Conjunct, env: &GuardEnv) -> bool {
    for literal in &conjunct.literals {
        match *literal {
            Literal::Apply {
                pred,
                robot,
                negated,
            } => {
                let matched = robot.is_some_and(|r| {
                    let apply = env.preds.apply(pred);
                    symbol.contains(&Atom {
                        robot: r,
                        skill: apply.skill,
                        region: apply.region,
                    })
                });
                if negated {
                    if matched {
                        return false;
                    }
                } else if robot.is_some() && !matched {
                    return false;
                }
            }
            Literal::Avoid { pred } => {
                if env.avoid_violated(symbol, pred) {
                    return false;
                }
            }
        }
    }
    true
}

/// The completion cost of one conjunct: the total penalty of the predicates
/// that must additionally be treated as true for `symbol` to satisfy it, or
/// the infinite sentinel when no completion exists (the symbol already
/// falsifies a negated or avoid literal).
pub fn conjunct_violation(
    symbol: &Symbol,
    conjunct: &Conjunct,
    env: &GuardEnv,
    penalties: &PenaltyMap,
) -> Cost {
    let mut total = Cost::ZERO;
    for literal in &conjunct.literals {
        match *literal {
            Literal::Apply {
                pred,
                robot,
                negated,
            } => {
                let matched = robot.is_some_and(|r| {
                    let apply = env.preds.apply(pred);
                    symbol.contains(&Atom {
                        robot: r,
                        skill: apply.skill,
                        region: apply.region,
                    })
                });
                if negated {
                    if matched {
                        return Cost::INFINITE;
                    }
                } else if !matched {
                    total = total + penalties.penalty(env.preds, pred);
                }
            }
            Literal::Avoid { pred } => {
                if env.avoid_violated(symbol, pred) {
                    return Cost::INFINITE;
                }
            }
        }
    }
    total
}

/// The violation score of a symbol over a guard: the minimum total penalty of
/// a completion that enables the transition, zero when the symbol already
/// satisfies some disjunct, infinite when no completion exists.
pub fn edge_violation(
    symbol: &Symbol,
    guard: &GuardDnf,
    env: &GuardEnv,
    penalties: &PenaltyMap,
) -> Cost {
    guard
        .disjuncts
        .iter()
        .map(|conjunct| conjunct_violation(symbol, conjunct, env, penalties))
        .min()
        .unwrap_or(Cost::INFINITE)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("robot {} at ({}, {}) is out of bounds", .robot.0, .cell.x, .cell.y)]
    PositionOutOfBounds { robot: RobotId, cell: Cell },
    #[error("robot {} applies skill {} it does not possess", .robot.0, .skill.0)]
    SkillNotPossessed { robot: RobotId, skill: SkillId },
}

/// The labeling function: which atomic actions are actually performed given
/// the team positions and applied skills. A robot applying a nonzero skill on
/// a region cell contributes one atom; idle or off-region robots contribute
/// nothing.
pub fn label(
    positions: &[Cell],
    skills: &[SkillId],
    world: &WorldModel,
    caps: &CapabilityMatrix,
) -> Result<Symbol, LabelError> {
    debug_assert_eq!(positions.len(), skills.len());
    let mut atoms = Vec::new();
    for (i, (&cell, &skill)) in positions.iter().zip(skills).enumerate() {
        let robot = RobotId(i);
        if !world.in_bounds(cell) {
            return Err(LabelError::PositionOutOfBounds { robot, cell });
        }
        if skill.is_idle() {
            continue;
        }
        if !caps.has(robot, skill) {
            return Err(LabelError::SkillNotPossessed { robot, skill });
        }
        if let Some(region) = world.region_at(cell) {
            atoms.push(Atom {
                robot,
                skill,
                region,
            });
        }
    }
    Ok(Symbol::from_atoms(atoms).expect("one atom per robot"))
}

/// Position-level hard-safety check used by the planners: no robot scoped by
/// a mobility avoid literal of the conjunct may occupy the avoided cell, even
/// while idle. Skill-level violations are covered by [`satisfies`].
pub fn presence_safe(
    positions: &[Cell],
    conjunct: &Conjunct,
    env: &GuardEnv,
    world: &WorldModel,
) -> bool {
    for pred in conjunct.avoid_literals() {
        let avoid = env.preds.avoid(pred);
        if env.mobility != Some(avoid.skill) {
            continue;
        }
        let cell = world.region_cell(avoid.region);
        let scope: Vec<RobotId> = match avoid.subject {
            Some(robot) => {
                if env.teams.contains(avoid.scope_skill, robot) {
                    vec![robot]
                } else {
                    Vec::new()
                }
            }
            None => env.teams.team(avoid.scope_skill).collect(),
        };
        if scope.into_iter().any(|r| positions[r.0] == cell) {
            return false;
        }
    }
    true
}
