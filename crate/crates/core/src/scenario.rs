//! Scenario files: world, predicates, penalties, automaton, capabilities,
//! and the failure schedule, parsed from JSON into resolved ids.
//!
//! Predicates are declared under names `"pi:<name>"` (apply) and
//! `"npi:<name>"` (avoid); guard literals reference them as `"pi:<name>"`,
//! `"!pi:<name>"`, and `"npi:<name>"`. Penalties are keyed by the same names.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

use crate::automaton::{Nba, NbaError};
use crate::formula::{Conjunct, GuardDnf, Literal};
use crate::types::{
    ApplyPredicate, AvoidPredicate, PenaltyError, PenaltyMap, PredTable, PredTableError, Predicate,
    RobotId, SkillId,
};
use crate::world::{CapabilityMatrix, Cell, FailureEvent, Loss, WorldError, WorldModel};

pub const APPLY_PREFIX: &str = "pi:";
pub const AVOID_PREFIX: &str = "npi:";

#[derive(Debug, Deserialize)]
struct RawScenario {
    #[serde(default)]
    name: String,
    world: RawWorld,
    skills: Vec<String>,
    #[serde(default)]
    mobility_skill: Option<String>,
    robots: Vec<RawRobot>,
    predicates: BTreeMap<String, RawPredicate>,
    #[serde(default)]
    penalties: BTreeMap<String, f64>,
    automaton: RawAutomaton,
    #[serde(default)]
    failures: Vec<RawFailure>,
    #[serde(default)]
    options: RawOptions,
}

#[derive(Debug, Deserialize)]
struct RawWorld {
    width: i32,
    height: i32,
    #[serde(default)]
    obstacles: Vec<[i32; 2]>,
    regions: BTreeMap<String, [i32; 2]>,
}

#[derive(Debug, Deserialize)]
struct RawRobot {
    name: String,
    start: [i32; 2],
    skills: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawPredicate {
    skill: String,
    region: String,
    /// Assigned robot for apply predicates; restricted robot for avoid
    /// predicates (absent = the whole scope team).
    #[serde(default)]
    robot: Option<String>,
    /// Scope team skill, avoid predicates only.
    #[serde(default)]
    scope: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawAutomaton {
    states: Vec<RawState>,
    transitions: Vec<RawTransition>,
}

#[derive(Debug, Deserialize)]
struct RawState {
    id: String,
    #[serde(default)]
    initial: bool,
    #[serde(default)]
    accepting: bool,
}

#[derive(Debug, Deserialize)]
struct RawTransition {
    from: String,
    to: String,
    dnf: Vec<Vec<String>>,
}

#[derive(Debug, Deserialize)]
struct RawFailure {
    at: usize,
    lose: Vec<String>,
}

#[derive(Debug, Deserialize, Default)]
struct RawOptions {
    #[serde(default)]
    suffix_cycles: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Predicates(#[from] PredTableError),
    #[error(transparent)]
    Penalties(#[from] PenaltyError),
    #[error(transparent)]
    Automaton(#[from] NbaError),
    #[error("unknown skill {0:?}")]
    UnknownSkill(String),
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error("unknown robot {0:?}")]
    UnknownRobot(String),
    #[error("unknown predicate {0:?}")]
    UnknownPredicate(String),
    #[error("predicate name {0:?} must start with \"pi:\" or \"npi:\"")]
    BadPredicateName(String),
    #[error("predicate {0:?}: {1}")]
    BadPredicate(String, String),
    #[error("bad guard literal {0:?}")]
    BadLiteral(String),
    #[error("duplicate robot name {0:?}")]
    DuplicateRobot(String),
    #[error("robot {0:?} starts on a blocked cell")]
    StartBlocked(String),
    #[error("bad failure loss {0:?}, expected \"robot:skill\" or \"robot:*\"")]
    BadLoss(String),
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub world: WorldModel,
    pub skill_names: Vec<String>,
    pub mobility: Option<SkillId>,
    pub robot_names: Vec<String>,
    pub starts: Vec<Cell>,
    pub capabilities: CapabilityMatrix,
    pub preds: PredTable,
    pub penalties: PenaltyMap,
    pub nba: Nba,
    pub failures: Vec<FailureEvent>,
    pub suffix_cycles: usize,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = serde_json::from_str(text)?;
        resolve(raw)
    }

    pub fn robot_count(&self) -> usize {
        self.robot_names.len()
    }

    pub fn skill_name(&self, id: SkillId) -> &str {
        if id.is_idle() {
            "0"
        } else {
            &self.skill_names[id.0 - 1]
        }
    }

    pub fn skill_by_name(&self, name: &str) -> Option<SkillId> {
        self.skill_names
            .iter()
            .position(|n| n == name)
            .map(|i| SkillId(i + 1))
    }

    pub fn robot_by_name(&self, name: &str) -> Option<RobotId> {
        self.robot_names
            .iter()
            .position(|n| n == name)
            .map(RobotId)
    }

    /// Parses one failure loss of the form "robot:skill" or "robot:*".
    pub fn parse_loss(&self, text: &str) -> Result<Loss, ScenarioError> {
        let (robot, skill) = text
            .split_once(':')
            .ok_or_else(|| ScenarioError::BadLoss(text.to_owned()))?;
        let robot = self
            .robot_by_name(robot)
            .ok_or_else(|| ScenarioError::UnknownRobot(robot.to_owned()))?;
        if skill == "*" {
            Ok(Loss::All(robot))
        } else {
            let skill = self
                .skill_by_name(skill)
                .ok_or_else(|| ScenarioError::UnknownSkill(skill.to_owned()))?;
            Ok(Loss::Skill(robot, skill))
        }
    }
}

fn resolve(raw: RawScenario) -> Result<Scenario, ScenarioError> {
    let world = WorldModel::new(
        raw.world.width,
        raw.world.height,
        raw.world.obstacles.iter().map(|&[x, y]| Cell::new(x, y)),
        raw.world
            .regions
            .into_iter()
            .map(|(name, [x, y])| (name, Cell::new(x, y)))
            .collect(),
    )?;

    let skill_names = raw.skills;
    let skill_by_name = |name: &str| -> Result<SkillId, ScenarioError> {
        skill_names
            .iter()
            .position(|n| n == name)
            .map(|i| SkillId(i + 1))
            .ok_or_else(|| ScenarioError::UnknownSkill(name.to_owned()))
    };
    let mobility = raw
        .mobility_skill
        .as_deref()
        .map(skill_by_name)
        .transpose()?;

    let mut robot_names = Vec::new();
    let mut starts = Vec::new();
    let mut rows = Vec::new();
    for robot in &raw.robots {
        if robot_names.contains(&robot.name) {
            return Err(ScenarioError::DuplicateRobot(robot.name.clone()));
        }
        let start = Cell::new(robot.start[0], robot.start[1]);
        if !world.is_free(start) {
            return Err(ScenarioError::StartBlocked(robot.name.clone()));
        }
        let mut row = BTreeSet::new();
        for skill in &robot.skills {
            row.insert(skill_by_name(skill)?);
        }
        robot_names.push(robot.name.clone());
        starts.push(start);
        rows.push(row);
    }
    let capabilities = CapabilityMatrix::new(rows);
    let robot_by_name = |name: &str| -> Result<RobotId, ScenarioError> {
        robot_names
            .iter()
            .position(|n| n == name)
            .map(RobotId)
            .ok_or_else(|| ScenarioError::UnknownRobot(name.to_owned()))
    };
    let region_by_name = |name: &str| {
        world
            .region_by_name(name)
            .ok_or_else(|| ScenarioError::UnknownRegion(name.to_owned()))
    };

    let mut preds = PredTable::default();
    for (name, decl) in &raw.predicates {
        let pred = if name.starts_with(APPLY_PREFIX) {
            let robot = decl.robot.as_deref().ok_or_else(|| {
                ScenarioError::BadPredicate(name.clone(), "apply predicate needs a robot".into())
            })?;
            Predicate::Apply(ApplyPredicate {
                name: name.clone(),
                skill: skill_by_name(&decl.skill)?,
                region: region_by_name(&decl.region)?,
                initial_robot: robot_by_name(robot)?,
            })
        } else if name.starts_with(AVOID_PREFIX) {
            let scope = decl.scope.as_deref().ok_or_else(|| {
                ScenarioError::BadPredicate(name.clone(), "avoid predicate needs a scope".into())
            })?;
            Predicate::Avoid(AvoidPredicate {
                name: name.clone(),
                scope_skill: skill_by_name(scope)?,
                subject: decl.robot.as_deref().map(robot_by_name).transpose()?,
                skill: skill_by_name(&decl.skill)?,
                region: region_by_name(&decl.region)?,
            })
        } else {
            return Err(ScenarioError::BadPredicateName(name.clone()));
        };
        preds.push(pred)?;
    }
    for pred in raw.penalties.keys() {
        if preds.lookup(pred).is_none() {
            return Err(ScenarioError::UnknownPredicate(pred.clone()));
        }
    }
    let penalties = PenaltyMap::build(&preds, &raw.penalties)?;

    let states = raw
        .automaton
        .states
        .into_iter()
        .map(|s| (s.id, s.initial, s.accepting))
        .collect();
    let mut transitions = Vec::new();
    for t in raw.automaton.transitions {
        let mut disjuncts = Vec::new();
        for conj in &t.dnf {
            let mut literals = Vec::new();
            for lit in conj {
                literals.push(parse_literal(lit, &preds)?);
            }
            disjuncts.push(Conjunct::new(literals));
        }
        transitions.push((t.from, t.to, GuardDnf::new(disjuncts)));
    }
    let nba = Nba::new(states, transitions)?;

    // Every apply predicate appearing in a guard needs a declared penalty.
    for (_, _, guard) in nba.transitions() {
        for conj in &guard.disjuncts {
            for literal in &conj.literals {
                if let Literal::Apply { pred, .. } = literal {
                    if penalties.declared(*pred).is_none() {
                        return Err(ScenarioError::Penalties(PenaltyError::Missing(
                            preds.name(*pred).to_owned(),
                        )));
                    }
                }
            }
        }
    }

    let mut failures = Vec::new();
    for f in &raw.failures {
        let mut losses = Vec::new();
        for text in &f.lose {
            let (robot, skill) = text
                .split_once(':')
                .ok_or_else(|| ScenarioError::BadLoss(text.clone()))?;
            let robot = robot_by_name(robot)?;
            if skill == "*" {
                losses.push(Loss::All(robot));
            } else {
                losses.push(Loss::Skill(robot, skill_by_name(skill)?));
            }
        }
        failures.push(FailureEvent {
            time: f.at,
            losses,
        });
    }
    failures.sort_by_key(|f| f.time);

    Ok(Scenario {
        name: raw.name,
        world,
        skill_names,
        mobility,
        robot_names,
        starts,
        capabilities,
        preds,
        penalties,
        nba,
        failures,
        suffix_cycles: raw.options.suffix_cycles.unwrap_or(2),
    })
}

fn parse_literal(text: &str, preds: &PredTable) -> Result<Literal, ScenarioError> {
    let (negated, name) = match text.strip_prefix('!') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let id = preds
        .lookup(name)
        .ok_or_else(|| ScenarioError::UnknownPredicate(name.to_owned()))?;
    match preds.get(id) {
        Predicate::Apply(apply) => Ok(Literal::Apply {
            pred: id,
            robot: Some(apply.initial_robot),
            negated,
        }),
        Predicate::Avoid(_) => {
            // Hard safety constraints appear without negation only.
            if negated {
                return Err(ScenarioError::BadLiteral(text.to_owned()));
            }
            Ok(Literal::Avoid { pred: id })
        }
    }
}
