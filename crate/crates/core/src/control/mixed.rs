use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::reservation::{ReservationState, Request};
use super::{fcfs_heads, stop_accel, RvCommand};
use crate::demand::VehicleClass;
use crate::dynamics::{Command, Controller, VehiclePhase, VehicleState, World, EMERGENCY_DECEL};
use crate::learn::{observe, Observation};

/// Aggregate zone state sampled at a decision instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZoneStats {
    /// Mean accumulated wait of vehicles in the command zone, s.
    pub zone_wait: f64,
    /// Cumulative count of vehicles that cleared the box.
    pub discharged: u64,
    /// Cumulative count of conflicting box co-occupancies.
    pub conflicts: u64,
}

impl ZoneStats {
    pub fn sample(world: &World) -> ZoneStats {
        ZoneStats {
            zone_wait: world.zone_mean_wait(world.config().rv_zone),
            discharged: world.discharged(),
            conflicts: world.conflict_events(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionContext {
    pub vehicle_id: u64,
    pub time: f64,
    pub stats: ZoneStats,
}

/// Shared Stop/Go policy queried by every robot vehicle in the zone.
pub trait RvPolicy {
    fn act(&mut self, ctx: &DecisionContext, obs: &Observation) -> RvCommand;

    fn act_batch(&mut self, ctxs: &[DecisionContext], obs: &[Observation]) -> Vec<RvCommand> {
        ctxs.iter().zip(obs).map(|(c, o)| self.act(c, o)).collect()
    }

    /// Called once when a vehicle that received commands leaves the zone.
    fn on_leave(&mut self, _ctx: &DecisionContext) {}
}

#[derive(Debug, Default, Clone, Copy)]
pub struct AlwaysGo;

impl RvPolicy for AlwaysGo {
    fn act(&mut self, _: &DecisionContext, _: &Observation) -> RvCommand {
        RvCommand::Go
    }
}

/// Uniform coin flip per decision.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl RvPolicy for RandomPolicy {
    fn act(&mut self, _: &DecisionContext, _: &Observation) -> RvCommand {
        RvCommand::from_index(self.rng.random_range(0..2))
    }
}

/// Mixed traffic: human drivers use first-come-first-served reservations;
/// robot vehicles inside the command zone follow the policy.
///
/// A robot head told `Go` requests the box and drives at full throttle
/// once granted; until then it is held at the line. `Stop` withdraws any
/// request (or a grant not yet used) and applies the stopping law.
/// Commands are refreshed every `interval` seconds per vehicle.
pub struct MixedController<P> {
    policy: P,
    res: ReservationState,
    interval: f64,
    request_radius: f64,
    memory: BTreeMap<u64, (RvCommand, f64)>,
}

impl<P: RvPolicy> MixedController<P> {
    pub fn new(policy: P, interval: f64, request_radius: f64) -> Self {
        MixedController {
            policy,
            res: ReservationState::new(),
            interval,
            request_radius,
            memory: BTreeMap::new(),
        }
    }

    pub fn policy(&self) -> &P {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut P {
        &mut self.policy
    }

    pub fn into_policy(self) -> P {
        self.policy
    }

    pub fn reservations(&self) -> &ReservationState {
        &self.res
    }

    /// Notifies the policy about every vehicle still holding a command.
    pub fn finish(&mut self, world: &World) {
        let stats = ZoneStats::sample(world);
        for id in std::mem::take(&mut self.memory).into_keys() {
            self.policy.on_leave(&DecisionContext {
                vehicle_id: id,
                time: world.time(),
                stats,
            });
        }
    }
}

fn in_zone(v: &VehicleState, zone: f64) -> bool {
    let d = v.to_stop_line();
    v.vclass == VehicleClass::Rv && v.phase == VehiclePhase::Approaching && d >= 0.0 && d <= zone
}

impl<P: RvPolicy> Controller for MixedController<P> {
    fn decide(&mut self, world: &World, commands: &mut [Command]) {
        let t = world.time();
        let zone = world.config().rv_zone;
        let model = world.model();
        self.res.release_cleared(world);
        let stats = ZoneStats::sample(world);
        let ctx = |id: u64| DecisionContext {
            vehicle_id: id,
            time: t,
            stats,
        };

        let inside: Vec<usize> = (0..world.vehicles().len())
            .filter(|&i| in_zone(&world.vehicles()[i], zone))
            .collect();
        let ids: BTreeSet<u64> = inside.iter().map(|&i| world.vehicles()[i].vehicle_id).collect();
        let gone: Vec<u64> = self.memory.keys().filter(|id| !ids.contains(id)).copied().collect();
        for id in gone {
            self.memory.remove(&id);
            self.policy.on_leave(&ctx(id));
        }

        let due: Vec<usize> = inside
            .iter()
            .copied()
            .filter(|&i| {
                self.memory
                    .get(&world.vehicles()[i].vehicle_id)
                    .is_none_or(|&(_, next)| t >= next - 1e-9)
            })
            .collect();
        if !due.is_empty() {
            let ctxs: Vec<DecisionContext> = due.iter().map(|&i| ctx(world.vehicles()[i].vehicle_id)).collect();
            let obs: Vec<Observation> = due.iter().map(|&i| observe(world, i)).collect();
            let acts = self.policy.act_batch(&ctxs, &obs);
            for (&i, a) in due.iter().zip(acts) {
                self.memory.insert(world.vehicles()[i].vehicle_id, (a, t + self.interval));
            }
        }

        for &i in &inside {
            if !world.is_head(i) {
                continue;
            }
            let v = &world.vehicles()[i];
            match self.memory[&v.vehicle_id].0 {
                RvCommand::Go => {
                    if v.to_stop_line() <= self.request_radius {
                        let lane = &model.lanes[v.start_lane];
                        self.res.request(Request {
                            vehicle_id: v.vehicle_id,
                            movement: v.movement,
                            arrival: t,
                            approach: lane.approach,
                            lane_index: lane.index,
                            class: 0,
                        });
                    }
                }
                RvCommand::Stop => {
                    self.res.withdraw(v.vehicle_id);
                    self.res.revoke(v.vehicle_id);
                }
            }
        }

        let memory = &self.memory;
        fcfs_heads(&mut self.res, world, commands, self.request_radius, &|i| {
            memory.contains_key(&world.vehicles()[i].vehicle_id)
        });

        for &i in &inside {
            let v = &world.vehicles()[i];
            commands[i] = match self.memory[&v.vehicle_id].0 {
                RvCommand::Go if world.is_head(i) && !self.res.is_granted(v.vehicle_id) => Command::StopAtLine,
                RvCommand::Go => Command::Go,
                RvCommand::Stop => Command::Hold(stop_accel(v.speed, v.to_stop_line()).unwrap_or(-EMERGENCY_DECEL)),
            };
        }
    }
}
