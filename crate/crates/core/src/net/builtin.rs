//! Hand-encoded layouts of the two studied intersections.
//!
//! Walnut Grove Rd. runs east-west through both; Goodlett St. (WGG) and
//! Mendenhall Rd. (WGM) run north-south. Lane counts below are inferred
//! and may differ from the real approaches. Lane 0 is always the leftmost lane of its travel direction.
//!
//! ```text
//!                  WGG                                   WGM
//!              SB in | NB out                      SB in  |  NB out
//!              1  0  |  0  1                     2  1  0  |  0  1
//!              v  v  |  ^  ^                     v  v  v  |  ^  ^
//!   WB out 1 <-------+------- WB in 2    WB out 2 <-------+-------- WB in 3
//!   WB out 0 <-------+------- WB in 1    WB out 1 <-------+-------- WB in 2
//!                    |        WB in 0    WB out 0 <-------+-------- WB in 1
//!   ---------------- + ----------------                   |         WB in 0
//!   EB in 0          |                   ---------------- + ----------------
//!   EB in 1 -------->+-------> EB out 0  EB in 0          |
//!   EB in 2 -------->+-------> EB out 1  EB in 1 -------->+-------> EB out 0
//!              v  v  |  ^  ^             EB in 2 -------->+-------> EB out 1
//!              1  0  |  0  1             EB in 3 -------->+-------> EB out 2
//!             SB out | NB in                      v  v    |  ^  ^  ^
//!                                                 1  0    |  0  1  2
//!                                                SB out   |   NB in
//! ```
//!
//! | lane      | WGG turns | WGM turns |
//! |-----------|-----------|-----------|
//! | EB/WB 0   | L         | L         |
//! | EB/WB 1   | S         | S         |
//! | EB/WB 2   | S R       | S         |
//! | EB/WB 3   | -         | S R       |
//! | NB/SB 0   | L         | L         |
//! | NB/SB 1   | S R       | S         |
//! | NB/SB 2   | -         | S R       |
//!
//! WGM's skewed approach angles are represented only through longer
//! crossing paths: straight and left movements are stretched by 20 %.

use std::collections::BTreeSet;

use super::geometry::{min_distance, polyline_length, BoxGeometry, CLEARANCE};
use super::{
    Approach, ConflictMatrix, IntersectionModel, IntersectionName, Lane, LaneId, LaneRole, Movement,
    MovementId, PhaseSpec, TurnType, DEFAULT_CONTROL_ZONE,
};

use TurnType::{Left as L, Right as R, Straight as S};

const LANE_WIDTH: f64 = 3.5;
/// Extra box depth on each side beyond the lanes (curb radius, crosswalks).
const BOX_SETBACK: f64 = 4.0;

/// Observed phase durations in seconds.
pub(crate) const WGG_PHASES: [f64; 9] = [7.0, 4.0, 29.0, 4.0, 20.0, 4.0, 4.0, 40.0, 4.0];
pub(crate) const WGM_PHASES: [f64; 9] = [22.0, 4.0, 80.0, 4.0, 42.0, 4.0, 4.0, 113.0, 4.0];

struct Leg {
    entry: &'static [&'static [TurnType]],
    exits: usize,
}

struct Layout {
    /// Indexed by `Approach::ordinal`.
    legs: [Leg; 4],
    entry_length: f64,
    exit_length: f64,
    crossing_stretch: f64,
    phases: [f64; 9],
}

fn layout(name: &IntersectionName) -> Layout {
    match name {
        IntersectionName::Wgm => {
            let ew = || Leg {
                entry: &[&[L], &[S], &[S], &[S, R]],
                exits: 3,
            };
            let ns = || Leg {
                entry: &[&[L], &[S], &[S, R]],
                exits: 2,
            };
            Layout {
                legs: [ns(), ew(), ns(), ew()],
                entry_length: 150.0,
                exit_length: 100.0,
                crossing_stretch: 1.2,
                phases: WGM_PHASES,
            }
        }
        _ => {
            let ew = || Leg {
                entry: &[&[L], &[S], &[S, R]],
                exits: 2,
            };
            let ns = || Leg {
                entry: &[&[L], &[S, R]],
                exits: 2,
            };
            Layout {
                legs: [ns(), ew(), ns(), ew()],
                entry_length: 150.0,
                exit_length: 100.0,
                crossing_stretch: 1.0,
                phases: WGG_PHASES,
            }
        }
    }
}

fn lane_name(dir: Approach, role: LaneRole, index: usize) -> LaneId {
    let role = match role {
        LaneRole::Entry => "in",
        LaneRole::Exit => "out",
    };
    LaneId(format!("{}_{}_{}", dir.code(), role, index))
}

fn round_cm(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Builds one of the two bundled intersections. Custom names fall back to
/// the WGG layout under that name.
pub fn build_intersection(name: IntersectionName) -> IntersectionModel {
    let lay = layout(&name);
    let leg = |d: Approach| &lay.legs[d.ordinal()];
    let width = |d: Approach| leg(d).entry.len().max(leg(d).exits) as f64 * LANE_WIDTH + BOX_SETBACK;
    let geom = BoxGeometry {
        lane_width: LANE_WIDTH,
        east: width(Approach::Northbound),
        west: width(Approach::Southbound),
        south: width(Approach::Eastbound),
        north: width(Approach::Westbound),
    };

    let mut movements = Vec::new();
    let mut paths = Vec::new();
    let mut exit_turns: Vec<Vec<BTreeSet<TurnType>>> =
        Approach::ALL.iter().map(|&d| vec![BTreeSet::new(); leg(d).exits]).collect();

    for dir in Approach::ALL {
        let entry = leg(dir).entry;
        for (i, turns) in entry.iter().enumerate() {
            for &turn in turns.iter() {
                let to = match turn {
                    TurnType::Left => dir.left(),
                    TurnType::Straight => dir,
                    TurnType::Right => dir.right(),
                };
                let n_out = leg(to).exits;
                // Lanes sharing a turn fan out onto exits left-to-right;
                // right turns take the outermost exit.
                let rank = entry[..i].iter().filter(|t| t.contains(&turn)).count();
                let j = match turn {
                    TurnType::Right => n_out - 1,
                    _ => rank.min(n_out - 1),
                };
                let path = geom.path(dir, i, to, j);
                let stretch = if turn == TurnType::Right { 1.0 } else { lay.crossing_stretch };
                let origin = lane_name(dir, LaneRole::Entry, i);
                let destination = lane_name(to, LaneRole::Exit, j);
                movements.push(Movement {
                    id: MovementId(format!("{origin}>{destination}")),
                    origin,
                    destination,
                    turn,
                    internal_length: round_cm(polyline_length(&path) * stretch),
                });
                exit_turns[to.ordinal()][j].insert(turn);
                paths.push(path);
            }
        }
    }

    let mut conflicts = ConflictMatrix::empty(movements.len());
    for a in 0..movements.len() {
        for b in (a + 1)..movements.len() {
            let (ma, mb) = (&movements[a], &movements[b]);
            let clash = if ma.origin == mb.origin {
                // Same lane: vehicles are already ordered by the queue.
                false
            } else if ma.destination == mb.destination {
                true
            } else {
                min_distance(&paths[a], &paths[b]) < CLEARANCE
            };
            if clash {
                conflicts.set(a, b);
            }
        }
    }

    let mut lanes = Vec::new();
    for dir in Approach::ALL {
        for (i, turns) in leg(dir).entry.iter().enumerate() {
            lanes.push(Lane {
                id: lane_name(dir, LaneRole::Entry, i),
                approach: dir,
                role: LaneRole::Entry,
                index: i,
                length: lay.entry_length,
                allowed_turns: turns.iter().copied().collect(),
            });
        }
        for (j, turns) in exit_turns[dir.ordinal()].iter().enumerate().take(leg(dir).exits) {
            lanes.push(Lane {
                id: lane_name(dir, LaneRole::Exit, j),
                approach: dir,
                role: LaneRole::Exit,
                index: j,
                length: lay.exit_length,
                allowed_turns: turns.clone(),
            });
        }
    }

    let phases = canonical_phases(&movements, &lanes, &lay.phases);
    IntersectionModel::new(name, lanes, movements, conflicts, DEFAULT_CONTROL_ZONE, phases)
        .expect("built-in layout is valid")
}

/// Nine-phase split plan: the four long phases serve NS-left (with the EW
/// right-turn overlap), NS-straight+right, EW-left (with the NS right-turn
/// overlap) and EW-straight+right. Short phases are clearances: movements
/// green on both sides stay green, the rest of the preceding green turns
/// yellow, and a clearance following another clearance is all-red.
fn canonical_phases(movements: &[Movement], lanes: &[Lane], durations: &[f64; 9]) -> Vec<PhaseSpec> {
    let approach_of = |m: &Movement| {
        lanes
            .iter()
            .find(|l| l.id == m.origin)
            .map(|l| l.approach)
            .expect("movement origin exists")
    };
    let select = |ew: bool, turns: &[TurnType]| -> BTreeSet<MovementId> {
        movements
            .iter()
            .filter(|m| approach_of(m).is_east_west() == ew && turns.contains(&m.turn))
            .map(|m| m.id.clone())
            .collect()
    };
    let union = |a: BTreeSet<MovementId>, b: BTreeSet<MovementId>| a.union(&b).cloned().collect();
    let long: [(usize, BTreeSet<MovementId>); 4] = [
        (0, union(select(false, &[L]), select(true, &[R]))),
        (2, select(false, &[S, R])),
        (4, union(select(true, &[L]), select(false, &[R]))),
        (7, select(true, &[S, R])),
    ];

    let mut out = Vec::with_capacity(9);
    for (k, &duration_s) in durations.iter().enumerate() {
        if let Some((_, g)) = long.iter().find(|(pos, _)| *pos == k) {
            out.push(PhaseSpec {
                duration_s,
                green: g.iter().cloned().collect(),
                yellow: Vec::new(),
            });
            continue;
        }
        let prev = long.iter().rev().find(|(pos, _)| *pos < k).unwrap_or(&long[3]);
        let next = long.iter().find(|(pos, _)| *pos > k).unwrap_or(&long[0]);
        let keep: BTreeSet<MovementId> = prev.1.intersection(&next.1).cloned().collect();
        let yellow = if prev.0 + 1 == k {
            prev.1.difference(&next.1).cloned().collect()
        } else {
            Vec::new()
        };
        out.push(PhaseSpec {
            duration_s,
            green: keep.into_iter().collect(),
            yellow,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(model: &IntersectionModel, dir: Approach) -> MovementId {
        model.movements[model.find_movement(dir, TurnType::Straight).unwrap()]
            .id
            .clone()
    }

    fn of(model: &IntersectionModel, dir: Approach, turn: TurnType) -> MovementId {
        model.movements[model.find_movement(dir, turn).unwrap()].id.clone()
    }

    #[test]
    fn wgg_has_all_turns_on_every_approach() {
        let m = build_intersection(IntersectionName::Wgg);
        for dir in Approach::ALL {
            for turn in TurnType::ALL {
                assert!(m.find_movement(dir, turn).is_some(), "{dir} {turn}");
            }
        }
    }

    #[test]
    fn perpendicular_straights_conflict() {
        let m = build_intersection(IntersectionName::Wgg);
        let eb = straight(&m, Approach::Eastbound);
        let nb = straight(&m, Approach::Northbound);
        assert!(m.conflicts(&eb, &nb).unwrap());
    }

    #[test]
    fn reference_conflict_cells() {
        use Approach::*;
        for name in [IntersectionName::Wgg, IntersectionName::Wgm] {
            let m = build_intersection(name);
            let eb_r = of(&m, Eastbound, TurnType::Right);
            let wb_s = of(&m, Westbound, TurnType::Straight);
            assert!(!m.conflicts(&eb_r, &wb_s).unwrap());
            let nb_l = of(&m, Northbound, TurnType::Left);
            let sb_s = of(&m, Southbound, TurnType::Straight);
            assert!(m.conflicts(&nb_l, &sb_s).unwrap());
            assert!(!m.conflicts(&nb_l, &nb_l).unwrap());
        }
    }

    #[test]
    fn wgm_crossings_are_longer() {
        let g = build_intersection(IntersectionName::Wgg);
        let m = build_intersection(IntersectionName::Wgm);
        for dir in Approach::ALL {
            for turn in [TurnType::Straight, TurnType::Left] {
                let lg = g.movements[g.find_movement(dir, turn).unwrap()].internal_length;
                let lm = m.movements[m.find_movement(dir, turn).unwrap()].internal_length;
                assert!(lm > lg, "{dir} {turn}: {lm} <= {lg}");
            }
        }
    }

    #[test]
    fn canonical_plan_shape() {
        let m = build_intersection(IntersectionName::Wgg);
        assert_eq!(m.signal_phases.len(), 9);
        let durations: Vec<f64> = m.signal_phases.iter().map(|p| p.duration_s).collect();
        assert_eq!(durations, WGG_PHASES.to_vec());
        // Phase 6 follows another clearance and is all-red.
        assert!(m.signal_phases[6].green.is_empty() && m.signal_phases[6].yellow.is_empty());
        let ew_s = straight(&m, Approach::Eastbound);
        assert!(m.signal_phases[7].green.contains(&ew_s));
        assert!(m.signal_phases[8].yellow.contains(&ew_s));
    }
}
