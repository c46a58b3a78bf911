//! Longitudinal vehicle dynamics and the fixed-step simulation world.
//!
//! Vehicles follow a fixed route (entry lane, internal path, exit lane)
//! under the Intelligent Driver Model. Controllers may override the
//! acceleration of individual vehicles through [`Command`]s.

mod world;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::VehicleClass;
use crate::net::STOP_LINE_SETBACK;

pub use world::{ConflictEvent, Controller, NoControl, World};

/// Lower clamp on any IDM deceleration, m/s².
pub const EMERGENCY_DECEL: f64 = 9.0;

/// Speed below which a vehicle counts as waiting, m/s.
pub const WAIT_SPEED: f64 = 0.1;

/// A vehicle told to stop this close to its stop line is placed on it.
pub const SNAP_DISTANCE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-positive gap {0} m")]
    NonPositiveGap(f64),
    #[error("vehicle {follower} overlaps vehicle {leader} (gap {gap:.3} m) at t = {time:.1} s")]
    CollisionDetected {
        time: f64,
        follower: u64,
        leader: u64,
        gap: f64,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdmParams {
    /// Desired speed, m/s.
    pub v0: f64,
    /// Safe time headway, s.
    pub time_headway: f64,
    pub max_accel: f64,
    /// Comfortable deceleration (positive), m/s².
    pub comfort_decel: f64,
    pub delta: f64,
    /// Standstill gap, m.
    pub min_gap: f64,
    pub vehicle_length: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            v0: 13.9,
            time_headway: 1.0,
            max_accel: 2.6,
            comfort_decel: 4.5,
            delta: 4.0,
            min_gap: 2.5,
            vehicle_length: 5.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let all = [
            self.v0,
            self.time_headway,
            self.max_accel,
            self.comfort_decel,
            self.delta,
            self.min_gap,
            self.vehicle_length,
        ];
        if all.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(DynamicsError::Invalid("IDM parameters must be positive and finite".into()));
        }
        if self.delta < 1.0 {
            return Err(DynamicsError::Invalid("IDM delta must be >= 1".into()));
        }
        Ok(())
    }

    /// Desired dynamic gap s*.
    pub fn desired_gap(&self, v: f64, v_lead: f64) -> f64 {
        let dv = v - v_lead;
        self.min_gap + (v * self.time_headway + v * dv / (2.0 * (self.max_accel * self.comfort_decel).sqrt())).max(0.0)
    }
}

/// IDM acceleration. Pass `f64::INFINITY` as the gap on a free road.
pub fn idm_accel(gap: f64, v: f64, v_lead: f64, p: &IdmParams) -> Result<f64, DynamicsError> {
    if !(gap > 0.0) {
        return Err(DynamicsError::NonPositiveGap(gap));
    }
    let free = 1.0 - (v / p.v0).powf(p.delta);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        (p.desired_gap(v, v_lead) / gap).powi(2)
    };
    Ok((p.max_accel * (free - interaction)).max(-EMERGENCY_DECEL))
}

/// IDM with the free-road term pinned to one: full acceleration unless a
/// leader is close.
pub fn go_accel(gap: f64, v: f64, v_lead: f64, p: &IdmParams) -> Result<f64, DynamicsError> {
    if !(gap > 0.0) {
        return Err(DynamicsError::NonPositiveGap(gap));
    }
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        (p.desired_gap(v, v_lead) / gap).powi(2)
    };
    Ok((p.max_accel * (1.0 - interaction)).max(-EMERGENCY_DECEL))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub idm: IdmParams,
    /// Radius of the robot-vehicle command zone, m.
    pub rv_zone: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.1,
            duration: 3600.0,
            seed: 0,
            idm: IdmParams::default(),
            rv_zone: crate::net::DEFAULT_CONTROL_ZONE,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0) || !(self.duration > 0.0) || !(self.rv_zone > 0.0) {
            return Err(DynamicsError::Invalid("dt, duration and rv_zone must be > 0".into()));
        }
        self.idm.validate()
    }

    /// Number of steps covering the duration.
    pub fn steps(&self) -> u64 {
        (self.duration / self.dt - 1e-9).ceil() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VehiclePhase {
    Queued,
    Approaching,
    InIntersection,
    Exiting,
    Done,
}

impl VehiclePhase {
    pub fn name(self) -> &'static str {
        match self {
            VehiclePhase::Queued => "queued",
            VehiclePhase::Approaching => "approaching",
            VehiclePhase::InIntersection => "in_intersection",
            VehiclePhase::Exiting => "exiting",
            VehiclePhase::Done => "done",
        }
    }
}

/// Per-vehicle state. `position` is the front bumper measured along the
/// route from the start of the entry lane.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub vehicle_id: u64,
    pub vclass: VehicleClass,
    pub start_lane: usize,
    pub movement: usize,
    pub end_lane: usize,
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub phase: VehiclePhase,
    pub entry_time: f64,
    pub entry_actual: Option<f64>,
    pub exit_actual: Option<f64>,
    pub waiting_accum: f64,
    pub length: f64,
    /// Lengths of the entry lane, internal path and exit lane.
    pub legs: [f64; 3],
}

impl VehicleState {
    pub fn rear(&self) -> f64 {
        self.position - self.length
    }

    pub fn box_start(&self) -> f64 {
        self.legs[0]
    }

    pub fn box_end(&self) -> f64 {
        self.legs[0] + self.legs[1]
    }

    pub fn route_end(&self) -> f64 {
        self.legs[0] + self.legs[1] + self.legs[2]
    }

    pub fn stop_line(&self) -> f64 {
        self.legs[0] - STOP_LINE_SETBACK
    }

    /// Distance from the front bumper to the stop line; negative once past.
    pub fn to_stop_line(&self) -> f64 {
        self.stop_line() - self.position
    }

    /// Whether any part of the body is on the internal path.
    pub fn occupies_box(&self) -> bool {
        self.position > self.box_start() && self.rear() < self.box_end()
    }

    /// Route offset of leg `k`.
    pub fn leg_offset(&self, k: usize) -> f64 {
        self.legs[..k].iter().sum()
    }

    /// Leg holding the given route coordinate.
    pub fn leg_of(&self, x: f64) -> usize {
        if x < self.legs[0] {
            0
        } else if x < self.legs[0] + self.legs[1] {
            1
        } else {
            2
        }
    }

    pub fn phase_for(&self, x: f64) -> VehiclePhase {
        if x >= self.route_end() {
            VehiclePhase::Done
        } else if x >= self.box_end() {
            VehiclePhase::Exiting
        } else if x >= self.box_start() {
            VehiclePhase::InIntersection
        } else {
            VehiclePhase::Approaching
        }
    }
}

/// Acceleration request for one vehicle for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Command {
    /// Plain car following.
    #[default]
    Follow,
    /// Stop at the stop line (IDM against a virtual standing obstacle,
    /// tightened to the kinematic stopping law when IDM alone would not
    /// make it).
    StopAtLine,
    /// Full acceleration up to the desired speed, still keeping the IDM
    /// safe gap to any leader.
    Go,
    /// The given acceleration, never above car following. A vehicle held
    /// this way right at its stop line is stopped on it.
    Hold(f64),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_flow_equilibrium_is_zero() {
        let p = IdmParams::default();
        assert_eq!(idm_accel(f64::INFINITY, p.v0, 0.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn standstill_at_min_gap_is_zero() {
        let p = IdmParams::default();
        assert_eq!(idm_accel(p.min_gap, 0.0, 0.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn reference_point() {
        let p = IdmParams {
            v0: 15.0,
            time_headway: 1.0,
            max_accel: 2.0,
            comfort_decel: 2.0,
            delta: 4.0,
            min_gap: 2.0,
            vehicle_length: 5.0,
        };
        // s* = 2 + 10 + 10*5/(2*2) = 24.5
        let oracle = 2.0 * (1.0 - (10.0f64 / 15.0).powi(4) - (24.5f64 / 20.0).powi(2));
        let got = idm_accel(20.0, 10.0, 5.0, &p).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - -1.396_311_728).abs() < 1e-6);
    }

    #[test]
    fn gap_must_be_positive() {
        let p = IdmParams::default();
        assert!(matches!(idm_accel(0.0, 1.0, 1.0, &p), Err(DynamicsError::NonPositiveGap(_))));
        assert!(idm_accel(f64::NAN, 1.0, 1.0, &p).is_err());
    }

    #[test]
    fn braking_is_clamped() {
        let p = IdmParams::default();
        assert_eq!(idm_accel(0.01, 13.9, 0.0, &p).unwrap(), -EMERGENCY_DECEL);
    }

    #[test]
    fn go_ignores_desired_speed() {
        let p = IdmParams::default();
        assert_eq!(go_accel(f64::INFINITY, p.v0, 0.0, &p).unwrap(), p.max_accel);
    }
}
