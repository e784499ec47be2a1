//! Grid environment, motion primitives, robot capabilities, and failures.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{RegionId, RobotId, SkillId};

/// A grid cell.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn new(x: i32, y: i32) -> Cell {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u64 {
        ((self.x - other.x).abs() + (self.y - other.y).abs()) as u64
    }
}

/// Holonomic motion primitives on the 8-connected grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Primitive {
    Stay,
    N,
    S,
    E,
    W,
    NE,
    NW,
    SE,
    SW,
}

impl Primitive {
    pub const ALL: [Primitive; 9] = [
        Primitive::Stay,
        Primitive::N,
        Primitive::S,
        Primitive::E,
        Primitive::W,
        Primitive::NE,
        Primitive::NW,
        Primitive::SE,
        Primitive::SW,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Primitive::Stay => (0, 0),
            Primitive::N => (0, 1),
            Primitive::S => (0, -1),
            Primitive::E => (1, 0),
            Primitive::W => (-1, 0),
            Primitive::NE => (1, 1),
            Primitive::NW => (-1, 1),
            Primitive::SE => (1, -1),
            Primitive::SW => (-1, -1),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("cell ({0}, {1}) is outside the grid")]
    PositionOutOfBounds(i32, i32),
    #[error("move into blocked cell ({0}, {1})")]
    IllegalMove(i32, i32),
    #[error("region cell ({0}, {1}) lies on an obstacle")]
    RegionOnObstacle(i32, i32),
    #[error("two regions share cell ({0}, {1})")]
    RegionOverlap(i32, i32),
}

/// The known environment: grid extents, obstacles, and region cells.
#[derive(Debug, Clone)]
pub struct WorldModel {
    width: i32,
    height: i32,
    obstacles: BTreeSet<Cell>,
    regions: Vec<Cell>,
    region_names: Vec<String>,
    region_at: BTreeMap<Cell, RegionId>,
}

impl WorldModel {
    pub fn new(
        width: i32,
        height: i32,
        obstacles: impl IntoIterator<Item = Cell>,
        regions: Vec<(String, Cell)>,
    ) -> Result<WorldModel, WorldError> {
        let obstacles: BTreeSet<Cell> = obstacles.into_iter().collect();
        let mut world = WorldModel {
            width,
            height,
            obstacles,
            regions: Vec::new(),
            region_names: Vec::new(),
            region_at: BTreeMap::new(),
        };
        for &cell in &world.obstacles {
            if !world.in_bounds(cell) {
                return Err(WorldError::PositionOutOfBounds(cell.x, cell.y));
            }
        }
        for (name, cell) in regions {
            if !world.in_bounds(cell) {
                return Err(WorldError::PositionOutOfBounds(cell.x, cell.y));
            }
            if world.obstacles.contains(&cell) {
                return Err(WorldError::RegionOnObstacle(cell.x, cell.y));
            }
            let id = RegionId(world.regions.len());
            if world.region_at.insert(cell, id).is_some() {
                return Err(WorldError::RegionOverlap(cell.x, cell.y));
            }
            world.regions.push(cell);
            world.region_names.push(name);
        }
        Ok(world)
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && cell.x < self.width && cell.y < self.height
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && !self.obstacles.contains(&cell)
    }

    pub fn obstacles(&self) -> impl Iterator<Item = &Cell> {
        self.obstacles.iter()
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn region_cell(&self, id: RegionId) -> Cell {
        self.regions[id.0]
    }

    pub fn region_name(&self, id: RegionId) -> &str {
        &self.region_names[id.0]
    }

    pub fn region_by_name(&self, name: &str) -> Option<RegionId> {
        self.region_names
            .iter()
            .position(|n| n == name)
            .map(RegionId)
    }

    /// The region occupying `cell`, if any. Predicates are satisfied exactly
    /// at the region's cell.
    pub fn region_at(&self, cell: Cell) -> Option<RegionId> {
        self.region_at.get(&cell).copied()
    }

    /// Applies a motion primitive. Moves out of bounds or into obstacles are
    /// rejected.
    pub fn step(&self, cell: Cell, primitive: Primitive) -> Result<Cell, WorldError> {
        if !self.in_bounds(cell) {
            return Err(WorldError::PositionOutOfBounds(cell.x, cell.y));
        }
        let (dx, dy) = primitive.delta();
        let next = Cell::new(cell.x + dx, cell.y + dy);
        if !self.in_bounds(next) {
            return Err(WorldError::PositionOutOfBounds(next.x, next.y));
        }
        if self.obstacles.contains(&next) {
            return Err(WorldError::IllegalMove(next.x, next.y));
        }
        Ok(next)
    }

    /// Obstacle-free neighbors (including staying put), in primitive order.
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        Primitive::ALL
            .iter()
            .filter_map(move |&p| self.step(cell, p).ok())
    }

    /// Shortest path from `from` to `to` avoiding obstacles and `forbidden`
    /// cells. Returns the cell sequence including both endpoints.
    pub fn shortest_path(
        &self,
        from: Cell,
        to: Cell,
        forbidden: &BTreeSet<Cell>,
    ) -> Option<Vec<Cell>> {
        if !self.is_free(from) || !self.is_free(to) {
            return None;
        }
        if forbidden.contains(&to) || forbidden.contains(&from) {
            return None;
        }
        if from == to {
            return Some(vec![from]);
        }
        let mut parent: BTreeMap<Cell, Cell> = BTreeMap::new();
        let mut queue = VecDeque::new();
        queue.push_back(from);
        parent.insert(from, from);
        while let Some(cur) = queue.pop_front() {
            for next in self.neighbors(cur) {
                if next == cur || parent.contains_key(&next) || forbidden.contains(&next) {
                    continue;
                }
                parent.insert(next, cur);
                if next == to {
                    let mut path = vec![to];
                    let mut at = to;
                    while at != from {
                        at = parent[&at];
                        path.push(at);
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(next);
            }
        }
        None
    }

    /// Cells reachable from `from` over free cells.
    pub fn reachable_cells(&self, from: Cell) -> BTreeSet<Cell> {
        let mut seen = BTreeSet::new();
        if !self.is_free(from) {
            return seen;
        }
        let mut queue = VecDeque::new();
        seen.insert(from);
        queue.push_back(from);
        while let Some(cur) = queue.pop_front() {
            for next in self.neighbors(cur) {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }
}

/// Per-robot skill possession. Failures only clear bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapabilityMatrix {
    rows: Vec<BTreeSet<SkillId>>,
}

impl CapabilityMatrix {
    pub fn new(rows: Vec<BTreeSet<SkillId>>) -> CapabilityMatrix {
        CapabilityMatrix { rows }
    }

    pub fn robot_count(&self) -> usize {
        self.rows.len()
    }

    pub fn has(&self, robot: RobotId, skill: SkillId) -> bool {
        skill.is_idle() || self.rows[robot.0].contains(&skill)
    }

    pub fn skills(&self, robot: RobotId) -> impl Iterator<Item = SkillId> + '_ {
        self.rows[robot.0].iter().copied()
    }

    /// Applies a failure event: the listed bits flip to zero. Idempotent.
    pub fn apply_failure(&self, event: &FailureEvent) -> CapabilityMatrix {
        let mut rows = self.rows.clone();
        for loss in &event.losses {
            match *loss {
                Loss::Skill(robot, skill) => {
                    rows[robot.0].remove(&skill);
                }
                Loss::All(robot) => {
                    rows[robot.0].clear();
                }
            }
        }
        CapabilityMatrix { rows }
    }
}

/// Skill teams: for each skill, the robots that currently possess it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Teams {
    members: BTreeMap<SkillId, BTreeSet<RobotId>>,
}

impl Teams {
    pub fn from_capabilities(caps: &CapabilityMatrix) -> Teams {
        let mut members: BTreeMap<SkillId, BTreeSet<RobotId>> = BTreeMap::new();
        for robot in 0..caps.robot_count() {
            for skill in caps.skills(RobotId(robot)) {
                members.entry(skill).or_default().insert(RobotId(robot));
            }
        }
        Teams { members }
    }

    pub fn team(&self, skill: SkillId) -> impl Iterator<Item = RobotId> + '_ {
        self.members
            .get(&skill)
            .into_iter()
            .flat_map(|s| s.iter().copied())
    }

    pub fn contains(&self, skill: SkillId, robot: RobotId) -> bool {
        self.members
            .get(&skill)
            .map(|s| s.contains(&robot))
            .unwrap_or(false)
    }
}

/// One scheduled loss of capability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Loss {
    Skill(RobotId, SkillId),
    All(RobotId),
}

/// Skills lost at a given step. Losses take effect before the step's motion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureEvent {
    pub time: usize,
    pub losses: Vec<Loss>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_3x3() -> WorldModel {
        WorldModel::new(3, 3, [], vec![]).unwrap()
    }

    #[test]
    fn step_stay_and_east() {
        let w = empty_3x3();
        let c = Cell::new(0, 0);
        assert_eq!(w.step(c, Primitive::Stay).unwrap(), c);
        assert_eq!(w.step(c, Primitive::E).unwrap(), Cell::new(1, 0));
    }

    #[test]
    fn step_into_obstacle_is_illegal() {
        let w = WorldModel::new(3, 3, [Cell::new(1, 0)], vec![]).unwrap();
        assert_eq!(
            w.step(Cell::new(0, 0), Primitive::E),
            Err(WorldError::IllegalMove(1, 0))
        );
        assert_eq!(
            w.step(Cell::new(0, 0), Primitive::W),
            Err(WorldError::PositionOutOfBounds(-1, 0))
        );
    }

    #[test]
    fn composed_steps_stay_free() {
        let w = WorldModel::new(4, 4, [Cell::new(2, 2)], vec![]).unwrap();
        let mut cell = Cell::new(0, 0);
        for p in [Primitive::NE, Primitive::E, Primitive::N, Primitive::N] {
            if let Ok(next) = w.step(cell, p) {
                cell = next;
            }
            assert!(w.is_free(cell));
        }
    }

    #[test]
    fn teams_from_matrix() {
        let caps = CapabilityMatrix::new(vec![
            BTreeSet::from([SkillId(1), SkillId(2)]),
            BTreeSet::from([SkillId(1)]),
            BTreeSet::new(),
        ]);
        let teams = Teams::from_capabilities(&caps);
        let t1: Vec<_> = teams.team(SkillId(1)).collect();
        assert_eq!(t1, vec![RobotId(0), RobotId(1)]);
        assert_eq!(teams.team(SkillId(2)).count(), 1);
        assert_eq!(teams.team(SkillId(3)).count(), 0);
    }

    #[test]
    fn failures_only_shrink_teams() {
        let caps = CapabilityMatrix::new(vec![
            BTreeSet::from([SkillId(1), SkillId(2)]),
            BTreeSet::from([SkillId(1), SkillId(3)]),
        ]);
        let ev = FailureEvent {
            time: 0,
            losses: vec![Loss::Skill(RobotId(0), SkillId(2)), Loss::All(RobotId(1))],
        };
        let after = caps.apply_failure(&ev);
        let before_teams = Teams::from_capabilities(&caps);
        let after_teams = Teams::from_capabilities(&after);
        for skill in [SkillId(1), SkillId(2), SkillId(3)] {
            let b: BTreeSet<_> = before_teams.team(skill).collect();
            let a: BTreeSet<_> = after_teams.team(skill).collect();
            assert!(a.is_subset(&b));
        }
        // Idempotent.
        assert_eq!(after.apply_failure(&ev), after);
    }
}
