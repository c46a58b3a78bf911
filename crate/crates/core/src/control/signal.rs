use crate::dynamics::{Command, Controller, World};
use crate::net::{build_intersection, IntersectionModel, IntersectionName, TurnType};

use super::reservation::{ReservationState, Request};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalColor {
    Green,
    Yellow,
    Red,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalPhase {
    pub duration: f64,
    /// Indexed by movement.
    pub colors: Vec<SignalColor>,
}

/// A fixed-time plan repeating with period `cycle_length`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalProgram {
    pub phases: Vec<SignalPhase>,
    pub cycle_length: f64,
    bounds_ms: Vec<i64>,
}

impl SignalProgram {
    pub fn new(phases: Vec<SignalPhase>) -> Option<SignalProgram> {
        if phases.is_empty() || phases.iter().any(|p| !(p.duration > 0.0)) {
            return None;
        }
        let mut acc = 0i64;
        let bounds_ms = phases
            .iter()
            .map(|p| {
                acc += (p.duration * 1000.0).round() as i64;
                acc
            })
            .collect();
        let cycle_length = phases.iter().map(|p| p.duration).sum();
        Some(SignalProgram {
            phases,
            cycle_length,
            bounds_ms,
        })
    }

    /// Builds the program stored in an intersection description, if any.
    pub fn from_model(model: &IntersectionModel) -> Option<SignalProgram> {
        let phases = model
            .signal_phases
            .iter()
            .map(|spec| {
                let mut colors = vec![SignalColor::Red; model.movements.len()];
                for id in &spec.green {
                    colors[model.movement_idx(id).expect("validated")] = SignalColor::Green;
                }
                for id in &spec.yellow {
                    colors[model.movement_idx(id).expect("validated")] = SignalColor::Yellow;
                }
                SignalPhase {
                    duration: spec.duration_s,
                    colors,
                }
            })
            .collect();
        SignalProgram::new(phases)
    }

    /// Phase active at time `t`. Time is resolved to the millisecond, so
    /// the plan is exactly periodic.
    pub fn phase_at(&self, t: f64) -> usize {
        let cycle = *self.bounds_ms.last().expect("non-empty");
        let ms = ((t * 1000.0).round() as i64).rem_euclid(cycle);
        self.bounds_ms.iter().position(|&b| ms < b).expect("ms below cycle")
    }

    pub fn color(&self, t: f64, movement: usize) -> SignalColor {
        self.phases[self.phase_at(t)].colors[movement]
    }
}

/// The built-in plan of a studied intersection.
pub fn signal_program(name: IntersectionName) -> SignalProgram {
    SignalProgram::from_model(&build_intersection(name)).expect("built-in intersections carry a plan")
}

/// Fixed-time control layered on the reservation table: green movements
/// (and amber or red ones that can no longer stop comfortably) request
/// the box, everything else stops at the line. Right turns are served
/// ahead of other requests.
pub struct SignalController {
    program: SignalProgram,
    res: ReservationState,
    request_radius: f64,
}

impl SignalController {
    pub fn new(program: SignalProgram, request_radius: f64) -> Self {
        SignalController {
            program,
            res: ReservationState::new(),
            request_radius,
        }
    }

    pub fn reservations(&self) -> &ReservationState {
        &self.res
    }
}

/// Whether stopping from `v` within `d` metres needs at most `b`.
pub fn can_stop_comfortably(v: f64, d: f64, b: f64) -> bool {
    if d <= 0.0 {
        return v <= 0.0;
    }
    v * v / (2.0 * d) <= b
}

impl Controller for SignalController {
    fn decide(&mut self, world: &World, commands: &mut [Command]) {
        let t = world.time();
        let model = world.model();
        let b = world.config().idm.comfort_decel;
        self.res.release_cleared(world);
        let mut heads = Vec::new();
        for lane in model.all_entry_lanes() {
            let Some(i) = world.head_of(lane) else { continue };
            let v = &world.vehicles()[i];
            let d = v.to_stop_line();
            let color = self.program.color(t, v.movement);
            let must_go = color != SignalColor::Green && !can_stop_comfortably(v.speed, d, b);
            if color == SignalColor::Green || must_go {
                if d <= self.request_radius {
                    let right = model.movements[v.movement].turn == TurnType::Right;
                    self.res.request(Request {
                        vehicle_id: v.vehicle_id,
                        movement: v.movement,
                        arrival: t,
                        approach: model.lanes[lane].approach,
                        lane_index: model.lanes[lane].index,
                        class: if right { 0 } else { 1 },
                    });
                }
            } else {
                self.res.withdraw(v.vehicle_id);
                if d > 0.0 {
                    self.res.revoke(v.vehicle_id);
                }
            }
            heads.push((i, color));
        }
        self.res.process(model, t);
        for (i, color) in heads {
            let v = &world.vehicles()[i];
            if !self.res.is_granted(v.vehicle_id) && (color != SignalColor::Green || v.to_stop_line() <= self.request_radius) {
                commands[i] = Command::StopAtLine;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_lengths() {
        assert_eq!(signal_program(IntersectionName::Wgg).cycle_length, 116.0);
        assert_eq!(signal_program(IntersectionName::Wgm).cycle_length, 277.0);
    }

    #[test]
    fn starts_in_first_phase_and_repeats() {
        let p = signal_program(IntersectionName::Wgg);
        assert_eq!(p.phase_at(0.0), 0);
        assert_eq!(p.phase_at(6.9), 0);
        assert_eq!(p.phase_at(7.0), 1);
        assert_eq!(p.phase_at(116.0), 0);
        assert_eq!(p.phase_at(115.9), 8);
        assert_eq!(p.phase_at(-0.1), 8);
    }

    #[test]
    fn late_red_proceeds() {
        // 12 m/s at 5 m needs 14.4 m/s².
        assert!(!can_stop_comfortably(12.0, 5.0, 4.5));
        assert!(can_stop_comfortably(12.0, 20.0, 4.5));
        assert!(can_stop_comfortably(0.0, 0.0, 4.5));
    }
}
