//! Shared domain identifiers: skills, robots, regions, predicates, symbols.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::Cost;

/// A robot skill. Index 0 is reserved for idling ("apply nothing");
/// 1..=C index into the scenario's skill table.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct SkillId(pub usize);

impl SkillId {
    pub const IDLE: SkillId = SkillId(0);

    pub fn is_idle(self) -> bool {
        self.0 == 0
    }
}

/// A robot, identified by its position in the scenario's robot list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RobotId(pub usize);

/// A region of interest, identified by its position in the region table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionId(pub usize);

/// An atomic predicate, identified by its position in the predicate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PredId(pub usize);

/// An automaton state, identified by its position in the state table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateId(pub usize);

/// A predicate requiring the assigned robot to apply a skill at a region.
///
/// The robot field is the *initial* assignment; reallocation rewrites the
/// per-guard bindings, not this declaration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplyPredicate {
    pub name: String,
    pub skill: SkillId,
    pub region: RegionId,
    pub initial_robot: RobotId,
}

/// A hard safety predicate: a robot of the scope team must not apply a skill
/// at a region. `subject: None` restricts every member of the scope team.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvoidPredicate {
    pub name: String,
    pub scope_skill: SkillId,
    pub subject: Option<RobotId>,
    pub skill: SkillId,
    pub region: RegionId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Apply(ApplyPredicate),
    Avoid(AvoidPredicate),
}

impl Predicate {
    pub fn name(&self) -> &str {
        match self {
            Predicate::Apply(p) => &p.name,
            Predicate::Avoid(p) => &p.name,
        }
    }

    pub fn as_apply(&self) -> Option<&ApplyPredicate> {
        match self {
            Predicate::Apply(p) => Some(p),
            Predicate::Avoid(_) => None,
        }
    }

    pub fn as_avoid(&self) -> Option<&AvoidPredicate> {
        match self {
            Predicate::Avoid(p) => Some(p),
            Predicate::Apply(_) => None,
        }
    }
}

/// All predicates declared by a scenario, with name lookup.
#[derive(Debug, Clone, Default)]
pub struct PredTable {
    preds: Vec<Predicate>,
    by_name: BTreeMap<String, PredId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PredTableError {
    #[error("duplicate predicate name {0:?}")]
    DuplicateName(String),
}

impl PredTable {
    pub fn push(&mut self, pred: Predicate) -> Result<PredId, PredTableError> {
        let name = pred.name().to_owned();
        if self.by_name.contains_key(&name) {
            return Err(PredTableError::DuplicateName(name));
        }
        let id = PredId(self.preds.len());
        self.by_name.insert(name, id);
        self.preds.push(pred);
        Ok(id)
    }

    pub fn get(&self, id: PredId) -> &Predicate {
        &self.preds[id.0]
    }

    pub fn apply(&self, id: PredId) -> &ApplyPredicate {
        self.get(id).as_apply().expect("apply predicate")
    }

    pub fn avoid(&self, id: PredId) -> &AvoidPredicate {
        self.get(id).as_avoid().expect("avoid predicate")
    }

    pub fn lookup(&self, name: &str) -> Option<PredId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: PredId) -> &str {
        self.get(id).name()
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PredId, &Predicate)> {
        self.preds.iter().enumerate().map(|(i, p)| (PredId(i), p))
    }
}

/// Penalty table: a positive finite penalty per apply predicate. Avoid
/// predicates implicitly cost the infinite sentinel.
#[derive(Debug, Clone, Default)]
pub struct PenaltyMap {
    penalties: BTreeMap<PredId, Cost>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PenaltyError {
    #[error("penalty for {0:?} must be positive and finite")]
    NotPositiveFinite(String),
    #[error("penalty given for avoid predicate {0:?}")]
    AvoidPenalty(String),
    #[error("no penalty declared for apply predicate {0:?}")]
    Missing(String),
}

impl PenaltyMap {
    pub fn build(
        table: &PredTable,
        values: &BTreeMap<String, f64>,
    ) -> Result<PenaltyMap, PenaltyError> {
        let mut penalties = BTreeMap::new();
        for (name, &v) in values {
            let id = match table.lookup(name) {
                Some(id) => id,
                None => continue,
            };
            match table.get(id) {
                Predicate::Avoid(_) => return Err(PenaltyError::AvoidPenalty(name.clone())),
                Predicate::Apply(_) => {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(PenaltyError::NotPositiveFinite(name.clone()));
                    }
                    penalties.insert(id, Cost::finite(v));
                }
            }
        }
        Ok(PenaltyMap { penalties })
    }

    /// Penalty of treating a false predicate as true.
    pub fn penalty(&self, table: &PredTable, id: PredId) -> Cost {
        match table.get(id) {
            Predicate::Avoid(_) => Cost::INFINITE,
            Predicate::Apply(p) => match self.penalties.get(&id) {
                Some(&c) => c,
                None => panic!("no penalty declared for {}", p.name),
            },
        }
    }

    pub fn declared(&self, id: PredId) -> Option<Cost> {
        self.penalties.get(&id).copied()
    }
}

/// One entry of a symbol: robot `robot` applies `skill` at `region`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Atom {
    pub robot: RobotId,
    pub skill: SkillId,
    pub region: RegionId,
}

/// The set of atomic actions performed at one step. At most one atom per
/// robot: robots cannot apply two skills at a time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Symbol {
    atoms: BTreeSet<Atom>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("robot {0:?} appears twice in a symbol")]
pub struct DuplicateRobot(pub RobotId);

impl Symbol {
    pub fn empty() -> Symbol {
        Symbol::default()
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = Atom>) -> Result<Symbol, DuplicateRobot> {
        let mut seen = BTreeSet::new();
        let mut set = BTreeSet::new();
        for atom in atoms {
            if !seen.insert(atom.robot) {
                return Err(DuplicateRobot(atom.robot));
            }
            set.insert(atom);
        }
        Ok(Symbol { atoms: set })
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }

    /// True if `robot` performs any action at `region` this step. Applying a
    /// nonzero skill at a region entails presence there.
    pub fn present_at(&self, robot: RobotId, region: RegionId) -> bool {
        self.atoms
            .iter()
            .any(|a| a.robot == robot && a.region == region)
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "({},{},{})", a.robot.0, a.skill.0, a.region.0)?;
        }
        write!(f, "}}")
    }
}
