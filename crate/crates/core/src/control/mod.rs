//! Intersection control: first-come-first-served reservations for the
//! blackout regime, fixed-time signals, and Stop/Go commands for robot
//! vehicles in mixed traffic.

mod mixed;
mod reservation;
mod signal;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Command, Controller, IdmParams, World, SNAP_DISTANCE};
use crate::net::IntersectionModel;

pub use mixed::{AlwaysGo, DecisionContext, MixedController, RandomPolicy, RvPolicy, ZoneStats};
pub use reservation::{Grant, Request, ReservationState};
pub use signal::{can_stop_comfortably, signal_program, SignalColor, SignalController, SignalPhase, SignalProgram};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("stop requested {0} m from the line while moving")]
    DegenerateDistance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RvCommand {
    Stop,
    Go,
}

impl RvCommand {
    pub fn index(self) -> usize {
        match self {
            RvCommand::Stop => 0,
            RvCommand::Go => 1,
        }
    }

    pub fn from_index(i: usize) -> RvCommand {
        if i == 0 {
            RvCommand::Stop
        } else {
            RvCommand::Go
        }
    }
}

/// Kinematic stopping law `-u² / (2 d)`: constant deceleration that
/// brings speed `u` to rest exactly `d` metres ahead.
pub fn stop_accel(u: f64, d: f64) -> Result<f64, ControlError> {
    if u <= 0.0 {
        return Ok(0.0);
    }
    if d <= SNAP_DISTANCE {
        return Err(ControlError::DegenerateDistance(d));
    }
    Ok(-u * u / (2.0 * d))
}

/// Acceleration override for a robot vehicle `d_int` metres from its
/// stop line, or `None` outside the command zone. `Go` is full throttle;
/// the world still caps it by the safe gap to any leader.
pub fn rv_decide(cmd: RvCommand, speed: f64, d_int: f64, zone: f64, p: &IdmParams) -> Result<Option<f64>, ControlError> {
    if d_int > zone {
        return Ok(None);
    }
    match cmd {
        RvCommand::Go => Ok(Some(p.max_accel)),
        RvCommand::Stop => stop_accel(speed, d_int).map(Some),
    }
}

/// Makes lane heads within `radius` of their stop line request the box,
/// then stops every head without a grant. Heads in `skip` are left alone.
pub(crate) fn fcfs_heads(
    res: &mut ReservationState,
    world: &World,
    commands: &mut [Command],
    radius: f64,
    skip: &dyn Fn(usize) -> bool,
) {
    let model: &IntersectionModel = world.model();
    let t = world.time();
    let mut heads = Vec::new();
    for lane in model.all_entry_lanes() {
        let Some(i) = world.head_of(lane) else { continue };
        if skip(i) {
            continue;
        }
        let v = &world.vehicles()[i];
        if v.to_stop_line() <= radius {
            res.request(Request {
                vehicle_id: v.vehicle_id,
                movement: v.movement,
                arrival: t,
                approach: model.lanes[lane].approach,
                lane_index: model.lanes[lane].index,
                class: 0,
            });
            heads.push(i);
        }
    }
    res.process(model, t);
    for i in heads {
        if !res.is_granted(world.vehicles()[i].vehicle_id) {
            commands[i] = Command::StopAtLine;
        }
    }
}

/// Blackout operation: every approach has equal priority and the box is
/// shared first come, first served.
pub struct FcfsController {
    res: ReservationState,
    request_radius: f64,
}

impl FcfsController {
    pub fn new(request_radius: f64) -> Self {
        FcfsController {
            res: ReservationState::new(),
            request_radius,
        }
    }

    pub fn reservations(&self) -> &ReservationState {
        &self.res
    }
}

impl Controller for FcfsController {
    fn decide(&mut self, world: &World, commands: &mut [Command]) {
        self.res.release_cleared(world);
        fcfs_heads(&mut self.res, world, commands, self.request_radius, &|_| false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_law_values() {
        assert_eq!(stop_accel(10.0, 20.0).unwrap(), -2.5);
        assert_eq!(stop_accel(0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(stop_accel(3.0, 0.05), Err(ControlError::DegenerateDistance(_))));
    }

    #[test]
    fn outside_zone_no_override() {
        let p = IdmParams::default();
        assert_eq!(rv_decide(RvCommand::Stop, 10.0, 45.0, 30.0, &p).unwrap(), None);
        assert_eq!(rv_decide(RvCommand::Go, 10.0, 20.0, 30.0, &p).unwrap(), Some(p.max_accel));
        assert_eq!(rv_decide(RvCommand::Stop, 10.0, 20.0, 30.0, &p).unwrap(), Some(-2.5));
    }
}
