//! Intersection models: lanes, permitted movements and the pairwise
//! conflict relation every controller consults.
//!
//! Two four-way intersections ship with the crate ([`IntersectionName::Wgg`]
//! and [`IntersectionName::Wgm`]); further layouts can be loaded from a TOML
//! description file (see [`file`]).

mod builtin;
pub mod file;
pub mod geometry;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::build_intersection;

/// Distance between a lane's stop line and the start of the intersection box.
pub const STOP_LINE_SETBACK: f64 = 2.0;

/// Default radius of the zone where robot vehicles take commands.
pub const DEFAULT_CONTROL_ZONE: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("no movement from lane `{origin}` to lane `{destination}`")]
    NoSuchMovement { origin: String, destination: String },
    #[error("unknown movement `{0}`")]
    UnknownMovement(String),
    #[error("unknown lane `{0}`")]
    UnknownLane(String),
    #[error("invalid intersection description: {0}")]
    Invalid(String),
}

/// Direction of travel of the traffic on a lane.
///
/// The declaration order (N, E, S, W) is the tie-break order used when
/// requests arrive at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Approach {
    #[serde(rename = "NB")]
    Northbound,
    #[serde(rename = "EB")]
    Eastbound,
    #[serde(rename = "SB")]
    Southbound,
    #[serde(rename = "WB")]
    Westbound,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::Northbound,
        Approach::Eastbound,
        Approach::Southbound,
        Approach::Westbound,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Approach::Northbound => "NB",
            Approach::Eastbound => "EB",
            Approach::Southbound => "SB",
            Approach::Westbound => "WB",
        }
    }

    pub fn from_code(code: &str) -> Option<Approach> {
        Approach::ALL.into_iter().find(|a| a.code() == code)
    }

    /// Position in the N, E, S, W order.
    pub fn ordinal(self) -> usize {
        self as usize
    }

    /// Direction after a left turn (right-hand traffic).
    pub fn left(self) -> Approach {
        Approach::ALL[(self.ordinal() + 3) % 4]
    }

    pub fn right(self) -> Approach {
        Approach::ALL[(self.ordinal() + 1) % 4]
    }

    pub fn opposite(self) -> Approach {
        Approach::ALL[(self.ordinal() + 2) % 4]
    }

    /// True for east/west travel.
    pub fn is_east_west(self) -> bool {
        matches!(self, Approach::Eastbound | Approach::Westbound)
    }

    /// Unit heading vector (x east, y north).
    pub fn heading(self) -> (f64, f64) {
        match self {
            Approach::Northbound => (0.0, 1.0),
            Approach::Eastbound => (1.0, 0.0),
            Approach::Southbound => (0.0, -1.0),
            Approach::Westbound => (-1.0, 0.0),
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnType {
    Left,
    Straight,
    Right,
}

impl TurnType {
    pub const ALL: [TurnType; 3] = [TurnType::Left, TurnType::Straight, TurnType::Right];

    /// Turn needed to go from travelling `from` to travelling `to`;
    /// `None` for U-turns.
    pub fn between(from: Approach, to: Approach) -> Option<TurnType> {
        if to == from {
            Some(TurnType::Straight)
        } else if to == from.left() {
            Some(TurnType::Left)
        } else if to == from.right() {
            Some(TurnType::Right)
        } else {
            None
        }
    }
}

impl fmt::Display for TurnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TurnType::Left => "left",
            TurnType::Straight => "straight",
            TurnType::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LaneId(pub String);

impl LaneId {
    pub fn new(id: impl Into<String>) -> Self {
        LaneId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MovementId(pub String);

impl MovementId {
    pub fn new(id: impl Into<String>) -> Self {
        MovementId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MovementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaneRole {
    Entry,
    Exit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: LaneId,
    /// Travel direction of vehicles on this lane.
    pub approach: Approach,
    pub role: LaneRole,
    /// 0 is the leftmost lane.
    pub index: usize,
    #[serde(rename = "length_m")]
    pub length: f64,
    /// For entry lanes the permitted turns; for exit lanes the turns that feed it.
    #[serde(rename = "turns")]
    pub allowed_turns: BTreeSet<TurnType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub id: MovementId,
    pub origin: LaneId,
    pub destination: LaneId,
    pub turn: TurnType,
    /// Path length across the intersection box.
    #[serde(rename = "internal_length_m")]
    pub internal_length: f64,
}

/// Symmetric, irreflexive relation over movement indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictMatrix {
    n: usize,
    cells: Vec<bool>,
}

impl ConflictMatrix {
    pub fn empty(n: usize) -> Self {
        ConflictMatrix {
            n,
            cells: vec![false; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Marks `a` and `b` as conflicting (both orientations). Self pairs are ignored.
    pub fn set(&mut self, a: usize, b: usize) {
        if a != b {
            self.cells[a * self.n + b] = true;
            self.cells[b * self.n + a] = true;
        }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> bool {
        self.cells[a * self.n + b]
    }

    /// Unordered conflicting pairs with `a < b`, in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |a| ((a + 1)..self.n).filter(move |&b| self.get(a, b)).map(move |b| (a, b)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntersectionName {
    #[serde(rename = "WGG")]
    Wgg,
    #[serde(rename = "WGM")]
    Wgm,
    #[serde(untagged)]
    Custom(String),
}

impl IntersectionName {
    pub fn parse(s: &str) -> IntersectionName {
        match s.to_ascii_uppercase().as_str() {
            "WGG" => IntersectionName::Wgg,
            "WGM" => IntersectionName::Wgm,
            _ => IntersectionName::Custom(s.to_string()),
        }
    }
}

impl fmt::Display for IntersectionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntersectionName::Wgg => f.write_str("WGG"),
            IntersectionName::Wgm => f.write_str("WGM"),
            IntersectionName::Custom(s) => f.write_str(s),
        }
    }
}

/// One row of a fixed-time signal plan as stored in the description file.
/// Movements not listed as green or yellow are red.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub duration_s: f64,
    #[serde(default)]
    pub green: Vec<MovementId>,
    #[serde(default)]
    pub yellow: Vec<MovementId>,
}

/// A fully resolved intersection. Immutable once built.
#[derive(Debug, Clone)]
pub struct IntersectionModel {
    pub name: IntersectionName,
    pub lanes: Vec<Lane>,
    pub movements: Vec<Movement>,
    pub conflicts: ConflictMatrix,
    pub control_zone_radius: f64,
    pub signal_phases: Vec<PhaseSpec>,
    lane_index: BTreeMap<LaneId, usize>,
    movement_index: BTreeMap<MovementId, usize>,
    by_lanes: BTreeMap<(usize, usize), usize>,
    movement_lanes: Vec<(usize, usize)>,
}

impl IntersectionModel {
    /// Assembles and validates a model.
    pub fn new(
        name: IntersectionName,
        lanes: Vec<Lane>,
        movements: Vec<Movement>,
        conflicts: ConflictMatrix,
        control_zone_radius: f64,
        signal_phases: Vec<PhaseSpec>,
    ) -> Result<Self, NetError> {
        if !(control_zone_radius > 0.0) {
            return Err(NetError::Invalid("control_zone_radius must be > 0".into()));
        }
        let mut lane_index = BTreeMap::new();
        for (i, lane) in lanes.iter().enumerate() {
            if !(lane.length > 0.0) {
                return Err(NetError::Invalid(format!("lane `{}` has non-positive length", lane.id)));
            }
            if lane.allowed_turns.is_empty() {
                return Err(NetError::Invalid(format!("lane `{}` has no turns", lane.id)));
            }
            if lane_index.insert(lane.id.clone(), i).is_some() {
                return Err(NetError::Invalid(format!("duplicate lane id `{}`", lane.id)));
            }
        }
        if conflicts.len() != movements.len() {
            return Err(NetError::Invalid("conflict matrix size differs from movement count".into()));
        }
        let mut movement_index = BTreeMap::new();
        let mut by_lanes = BTreeMap::new();
        let mut movement_lanes = Vec::with_capacity(movements.len());
        for (i, m) in movements.iter().enumerate() {
            let o = *lane_index
                .get(&m.origin)
                .ok_or_else(|| NetError::UnknownLane(m.origin.0.clone()))?;
            let d = *lane_index
                .get(&m.destination)
                .ok_or_else(|| NetError::UnknownLane(m.destination.0.clone()))?;
            if lanes[o].role != LaneRole::Entry || lanes[d].role != LaneRole::Exit {
                return Err(NetError::Invalid(format!(
                    "movement `{}` must run from an entry lane to an exit lane",
                    m.id
                )));
            }
            if TurnType::between(lanes[o].approach, lanes[d].approach) != Some(m.turn) {
                return Err(NetError::Invalid(format!(
                    "movement `{}` turn `{}` inconsistent with its approaches",
                    m.id, m.turn
                )));
            }
            if !(m.internal_length > 0.0) {
                return Err(NetError::Invalid(format!("movement `{}` has non-positive length", m.id)));
            }
            if movement_index.insert(m.id.clone(), i).is_some() {
                return Err(NetError::Invalid(format!("duplicate movement id `{}`", m.id)));
            }
            if by_lanes.insert((o, d), i).is_some() {
                return Err(NetError::Invalid(format!(
                    "two movements share origin `{}` and destination `{}`",
                    m.origin, m.destination
                )));
            }
            movement_lanes.push((o, d));
        }
        for phase in &signal_phases {
            if !(phase.duration_s > 0.0) {
                return Err(NetError::Invalid("signal phase duration must be > 0".into()));
            }
            for id in phase.green.iter().chain(&phase.yellow) {
                if !movement_index.contains_key(id) {
                    return Err(NetError::UnknownMovement(id.0.clone()));
                }
            }
        }
        Ok(IntersectionModel {
            name,
            lanes,
            movements,
            conflicts,
            control_zone_radius,
            signal_phases,
            lane_index,
            movement_index,
            by_lanes,
            movement_lanes,
        })
    }

    pub fn lane_idx(&self, id: &LaneId) -> Option<usize> {
        self.lane_index.get(id).copied()
    }

    pub fn lane_by_str(&self, id: &str) -> Option<usize> {
        self.lane_index.get(&LaneId::new(id)).copied()
    }

    pub fn movement_idx(&self, id: &MovementId) -> Option<usize> {
        self.movement_index.get(id).copied()
    }

    /// Index of the movement joining two lane indices.
    pub fn movement_between(&self, origin: usize, destination: usize) -> Option<usize> {
        self.by_lanes.get(&(origin, destination)).copied()
    }

    /// (origin lane index, destination lane index) of a movement.
    pub fn movement_lanes(&self, m: usize) -> (usize, usize) {
        self.movement_lanes[m]
    }

    pub fn movement_approach(&self, m: usize) -> Approach {
        self.lanes[self.movement_lanes[m].0].approach
    }

    /// Entry lanes of the given travel direction, ordered by lane index.
    pub fn entry_lanes(&self, approach: Approach) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.lanes.len())
            .filter(|&i| self.lanes[i].role == LaneRole::Entry && self.lanes[i].approach == approach)
            .collect();
        v.sort_by_key(|&i| self.lanes[i].index);
        v
    }

    pub fn all_entry_lanes(&self) -> Vec<usize> {
        Approach::ALL.iter().flat_map(|&a| self.entry_lanes(a)).collect()
    }

    /// Movements leaving `lane`.
    pub fn movements_from(&self, lane: usize) -> Vec<usize> {
        (0..self.movements.len())
            .filter(|&m| self.movement_lanes[m].0 == lane)
            .collect()
    }

    /// Resolves the movement between two lanes.
    pub fn movement_of(&self, origin: &LaneId, destination: &LaneId) -> Result<&Movement, NetError> {
        let missing = || NetError::NoSuchMovement {
            origin: origin.0.clone(),
            destination: destination.0.clone(),
        };
        let o = self.lane_idx(origin).ok_or_else(missing)?;
        let d = self.lane_idx(destination).ok_or_else(missing)?;
        self.movement_between(o, d)
            .map(|m| &self.movements[m])
            .ok_or_else(missing)
    }

    /// Whether two movements may not share the intersection at the same time.
    pub fn conflicts(&self, a: &MovementId, b: &MovementId) -> Result<bool, NetError> {
        let ia = self
            .movement_idx(a)
            .ok_or_else(|| NetError::UnknownMovement(a.0.clone()))?;
        let ib = self
            .movement_idx(b)
            .ok_or_else(|| NetError::UnknownMovement(b.0.clone()))?;
        Ok(self.conflicts.get(ia, ib))
    }

    /// Looks a movement up by origin approach and turn, choosing the lowest
    /// entry lane index when several lanes serve it.
    pub fn find_movement(&self, approach: Approach, turn: TurnType) -> Option<usize> {
        self.entry_lanes(approach)
            .into_iter()
            .flat_map(|lane| self.movements_from(lane))
            .find(|&m| self.movements[m].turn == turn)
    }
}
