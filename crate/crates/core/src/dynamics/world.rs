use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use super::{
    go_accel, idm_accel, Command, DynamicsError, SimConfig, VehiclePhase, VehicleState, SNAP_DISTANCE,
};
use crate::demand::{Scenario, VehicleRecord};
use crate::metrics::{accumulate_wait, co2_rate, EmissionParams, TripRecord};
use crate::net::IntersectionModel;

/// Decides per-vehicle commands once per step, before integration.
pub trait Controller {
    /// `commands[i]` belongs to `world.vehicles()[i]` and starts as
    /// [`Command::Follow`].
    fn decide(&mut self, world: &World, commands: &mut [Command]);
}

/// Plain car following for everyone.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoControl;

impl Controller for NoControl {
    fn decide(&mut self, _: &World, _: &mut [Command]) {}
}

/// Nearest vehicle ahead along a vehicle's route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    pub index: usize,
    pub gap: f64,
    pub speed: f64,
}

/// Two vehicles on conflicting movements inside the box at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictEvent {
    pub time: f64,
    pub a: u64,
    pub b: u64,
}

const CONFLICT_LOG_CAP: usize = 1000;

pub struct World {
    model: Arc<IntersectionModel>,
    cfg: SimConfig,
    emission: EmissionParams,
    step_index: u64,
    pending: Vec<VehicleRecord>,
    next_pending: usize,
    queues: Vec<VecDeque<VehicleState>>,
    vehicles: Vec<VehicleState>,
    finished: Vec<VehicleState>,
    buckets: Vec<Vec<usize>>,
    leaders: Vec<Option<Leader>>,
    heads: Vec<Option<usize>>,
    co2_total: f64,
    discharged: u64,
    conflict_events: u64,
    conflict_log: Vec<ConflictEvent>,
    trajectory: Option<Box<dyn Write + Send>>,
}

impl World {
    pub fn new(model: Arc<IntersectionModel>, scenario: &Scenario, cfg: SimConfig) -> Result<World, DynamicsError> {
        cfg.validate()?;
        for r in &scenario.records {
            model
                .movement_of(&r.start_lane, &r.end_lane)
                .map_err(|e| DynamicsError::Invalid(format!("vehicle {}: {e}", r.vehicle_id)))?;
        }
        let mut pending: Vec<VehicleRecord> = scenario
            .records
            .iter()
            .filter(|r| r.entry_time < cfg.duration)
            .cloned()
            .collect();
        pending.sort_by(|a, b| a.entry_time.total_cmp(&b.entry_time).then(a.vehicle_id.cmp(&b.vehicle_id)));
        let n_lanes = model.lanes.len();
        let n_seg = n_lanes + model.movements.len();
        Ok(World {
            cfg,
            emission: EmissionParams::default(),
            step_index: 0,
            pending,
            next_pending: 0,
            queues: vec![VecDeque::new(); n_lanes],
            vehicles: Vec::new(),
            finished: Vec::new(),
            buckets: vec![Vec::new(); n_seg],
            leaders: Vec::new(),
            heads: vec![None; n_lanes],
            co2_total: 0.0,
            discharged: 0,
            conflict_events: 0,
            conflict_log: Vec::new(),
            trajectory: None,
            model,
        })
    }

    pub fn set_emission_params(&mut self, p: EmissionParams) {
        self.emission = p;
    }

    /// Streams one CSV row per vehicle and step to `out`.
    pub fn set_trajectory_log(&mut self, mut out: Box<dyn Write + Send>) -> std::io::Result<()> {
        writeln!(out, "time_s,vehicle_id,lane,position_m,speed_mps,accel_mps2,phase")?;
        self.trajectory = Some(out);
        Ok(())
    }

    pub fn model(&self) -> &IntersectionModel {
        &self.model
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Simulation clock, rounded to the nanosecond so that step times are
    /// exact decimals.
    pub fn time(&self) -> f64 {
        Self::clock(self.step_index, self.cfg.dt)
    }

    fn clock(k: u64, dt: f64) -> f64 {
        (k as f64 * dt * 1e9).round() / 1e9
    }

    /// Vehicles currently on the network, in insertion order.
    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn finished(&self) -> &[VehicleState] {
        &self.finished
    }

    /// Vehicles due but still waiting for room on their entry lane.
    pub fn queued(&self) -> impl Iterator<Item = &VehicleState> {
        self.queues.iter().flatten()
    }

    pub fn leader(&self, i: usize) -> Option<Leader> {
        self.leaders.get(i).copied().flatten()
    }

    /// Frontmost vehicle whose front is still on entry lane `lane`.
    pub fn head_of(&self, lane: usize) -> Option<usize> {
        self.heads.get(lane).copied().flatten()
    }

    pub fn is_head(&self, i: usize) -> bool {
        self.head_of(self.vehicles[i].start_lane) == Some(i)
    }

    pub fn co2_total(&self) -> f64 {
        self.co2_total
    }

    /// Vehicles whose rear has cleared the box so far.
    pub fn discharged(&self) -> u64 {
        self.discharged
    }

    /// Conflicting pairs found inside the box, summed over steps.
    pub fn conflict_events(&self) -> u64 {
        self.conflict_events
    }

    pub fn conflict_log(&self) -> &[ConflictEvent] {
        &self.conflict_log
    }

    pub fn is_finished(&self) -> bool {
        self.step_index >= self.cfg.steps()
    }

    /// Mean accumulated wait of vehicles before the box and within
    /// `radius` of their stop line; zero when there are none.
    pub fn zone_mean_wait(&self, radius: f64) -> f64 {
        let (sum, n) = self
            .vehicles
            .iter()
            .filter(|v| v.phase == VehiclePhase::Approaching && v.to_stop_line() <= radius)
            .fold((0.0, 0usize), |(s, n), v| (s + v.waiting_accum, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    fn make_state(&self, r: &VehicleRecord) -> Result<VehicleState, DynamicsError> {
        let m = &self.model;
        let mv = m
            .movement_of(&r.start_lane, &r.end_lane)
            .map_err(|e| DynamicsError::Invalid(e.to_string()))?;
        let mi = m.movement_idx(&mv.id).expect("resolved movement has an index");
        let (o, d) = m.movement_lanes(mi);
        Ok(VehicleState {
            vehicle_id: r.vehicle_id,
            vclass: r.vclass,
            start_lane: o,
            movement: mi,
            end_lane: d,
            position: 0.0,
            speed: 0.0,
            accel: 0.0,
            phase: VehiclePhase::Queued,
            entry_time: r.entry_time,
            entry_actual: None,
            exit_actual: None,
            waiting_accum: 0.0,
            length: self.cfg.idm.vehicle_length,
            legs: [m.lanes[o].length, mv.internal_length, m.lanes[d].length],
        })
    }

    /// Puts a vehicle directly onto its route, bypassing the entry queue.
    /// Intended for hand-built test fixtures.
    pub fn place_vehicle(&mut self, r: &VehicleRecord, position: f64, speed: f64) -> Result<usize, DynamicsError> {
        let mut v = self.make_state(r)?;
        if !(position >= v.length) || position >= v.route_end() || !(speed >= 0.0) {
            return Err(DynamicsError::Invalid(format!(
                "cannot place vehicle {} at {position} m with speed {speed}",
                r.vehicle_id
            )));
        }
        v.position = position;
        v.speed = speed;
        v.phase = v.phase_for(position);
        v.entry_actual = Some(self.time());
        self.vehicles.push(v);
        self.rebuild_index()?;
        Ok(self.vehicles.len() - 1)
    }

    fn release_due(&mut self, t: f64) -> Result<(), DynamicsError> {
        while self.next_pending < self.pending.len() && self.pending[self.next_pending].entry_time <= t + 1e-9 {
            let v = self.make_state(&self.pending[self.next_pending])?;
            self.queues[v.start_lane].push_back(v);
            self.next_pending += 1;
        }
        Ok(())
    }

    /// Inserts at most one queued vehicle per lane when its tail has room.
    fn insert_waiting(&mut self, t: f64) -> bool {
        let p = self.cfg.idm;
        let mut tail: Vec<Option<(f64, f64)>> = vec![None; self.queues.len()];
        for v in &self.vehicles {
            if v.rear() < v.legs[0] {
                let slot = &mut tail[v.start_lane];
                if slot.is_none_or(|(r, _)| v.rear() < r) {
                    *slot = Some((v.rear(), v.speed));
                }
            }
        }
        let mut any = false;
        for (lane, q) in self.queues.iter_mut().enumerate() {
            let Some(front) = q.front() else { continue };
            let len = front.length;
            let speed = match tail[lane] {
                None => p.v0,
                Some((rear, _)) if rear < p.min_gap + len => continue,
                Some((rear, v_lead)) => {
                    let room = (rear - len - p.min_gap).max(0.0);
                    p.v0.min((v_lead * v_lead + 2.0 * p.comfort_decel * room).sqrt())
                }
            };
            let mut v = q.pop_front().expect("front exists");
            v.position = len;
            v.speed = speed;
            v.phase = VehiclePhase::Approaching;
            v.entry_actual = Some(t);
            self.vehicles.push(v);
            any = true;
        }
        any
    }

    fn segment(&self, v: &VehicleState, leg: usize) -> usize {
        match leg {
            0 => v.start_lane,
            1 => self.model.lanes.len() + v.movement,
            _ => v.end_lane,
        }
    }

    fn leg_for_segment(&self, v: &VehicleState, seg: usize) -> Option<usize> {
        (0..3).find(|&k| self.segment(v, k) == seg)
    }

    /// Recomputes segment occupancy, leaders and lane heads. Fails on any
    /// overlap between a vehicle and the one ahead of it.
    fn rebuild_index(&mut self) -> Result<(), DynamicsError> {
        for b in &mut self.buckets {
            b.clear();
        }
        for h in &mut self.heads {
            *h = None;
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            let first = v.leg_of(v.rear().max(0.0));
            let last = v.leg_of(v.position);
            for k in first..=last {
                let s = self.segment(v, k);
                self.buckets[s].push(i);
            }
            if last == 0 {
                let h = &mut self.heads[v.start_lane];
                if h.is_none_or(|j| self.vehicles[j].position < v.position) {
                    *h = Some(i);
                }
            }
        }
        let mut leaders = Vec::with_capacity(self.vehicles.len());
        for (i, v) in self.vehicles.iter().enumerate() {
            let mut best: Option<Leader> = None;
            let last = v.leg_of(v.position);
            for k in last.saturating_sub(1)..3 {
                let seg = self.segment(v, k);
                for &j in &self.buckets[seg] {
                    if j == i {
                        continue;
                    }
                    let u = &self.vehicles[j];
                    let kj = self.leg_for_segment(u, seg).expect("bucketed vehicle uses the segment");
                    let front = v.leg_offset(k) + (u.position - u.leg_offset(kj));
                    let ahead = front > v.position || (front == v.position && j < i);
                    if !ahead {
                        continue;
                    }
                    let gap = front - u.length - v.position;
                    if best.is_none_or(|b| gap < b.gap) {
                        best = Some(Leader {
                            index: j,
                            gap,
                            speed: u.speed,
                        });
                    }
                }
            }
            if let Some(l) = best {
                if l.gap <= 0.0 {
                    return Err(DynamicsError::CollisionDetected {
                        time: self.time(),
                        follower: v.vehicle_id,
                        leader: self.vehicles[l.index].vehicle_id,
                        gap: l.gap,
                    });
                }
            }
            leaders.push(best);
        }
        self.leaders = leaders;
        Ok(())
    }

    fn count_conflicts(&mut self, t: f64) {
        let inside: Vec<&VehicleState> = self.vehicles.iter().filter(|v| v.occupies_box()).collect();
        for (x, a) in inside.iter().enumerate() {
            for b in &inside[x + 1..] {
                if self.model.conflicts.get(a.movement, b.movement) {
                    self.conflict_events += 1;
                    if self.conflict_log.len() < CONFLICT_LOG_CAP {
                        self.conflict_log.push(ConflictEvent {
                            time: t,
                            a: a.vehicle_id,
                            b: b.vehicle_id,
                        });
                    }
                }
            }
        }
    }

    fn resolve(&self, i: usize, cmd: Command) -> Result<(f64, bool), DynamicsError> {
        let v = &self.vehicles[i];
        let p = &self.cfg.idm;
        let (gap, v_lead) = match self.leaders[i] {
            Some(l) => (l.gap, l.speed),
            None => (f64::INFINITY, 0.0),
        };
        let follow = idm_accel(gap, v.speed, v_lead, p)?;
        let d = v.to_stop_line();
        let before_line = v.phase == VehiclePhase::Approaching && d >= -1e-9;
        Ok(match cmd {
            Command::Follow => (follow, false),
            Command::Go => {
                let a = go_accel(gap, v.speed, v_lead, p)?;
                (a.min((p.v0 - v.speed) / self.cfg.dt), false)
            }
            Command::StopAtLine if before_line => {
                if d <= SNAP_DISTANCE {
                    return Ok((0.0, true));
                }
                let line = idm_accel(d + p.min_gap, v.speed, 0.0, p)?;
                let line = if line < 0.0 {
                    line.min(-v.speed * v.speed / (2.0 * d))
                } else {
                    line
                };
                (follow.min(line), false)
            }
            Command::StopAtLine => (follow, false),
            Command::Hold(a) => {
                if before_line && d <= SNAP_DISTANCE {
                    return Ok((0.0, true));
                }
                (follow.min(a), false)
            }
        })
    }

    /// Advances the world by one step.
    pub fn step(&mut self, controller: &mut dyn Controller) -> Result<(), DynamicsError> {
        let dt = self.cfg.dt;
        let t = self.time();
        let t_next = Self::clock(self.step_index + 1, dt);
        self.release_due(t)?;
        if self.insert_waiting(t) || self.leaders.len() != self.vehicles.len() {
            self.rebuild_index()?;
        }

        let mut commands = vec![Command::Follow; self.vehicles.len()];
        controller.decide(self, &mut commands);

        let mut plan = Vec::with_capacity(self.vehicles.len());
        for (i, &cmd) in commands.iter().enumerate() {
            let (a, snap) = self.resolve(i, cmd).map_err(|e| match e {
                DynamicsError::NonPositiveGap(gap) => DynamicsError::CollisionDetected {
                    time: t,
                    follower: self.vehicles[i].vehicle_id,
                    leader: self.leaders[i].map(|l| self.vehicles[l.index].vehicle_id).unwrap_or(u64::MAX),
                    gap,
                },
                other => other,
            })?;
            plan.push((a, snap, self.leaders[i].map(|l| l.gap)));
        }

        for (v, (a, snap, gap)) in self.vehicles.iter_mut().zip(plan) {
            let old_speed = v.speed;
            let old_rear = v.rear();
            if snap {
                let room = gap.map_or(f64::INFINITY, |g| (g - 0.01).max(0.0));
                v.position += v.to_stop_line().max(0.0).min(room);
                v.speed = 0.0;
            } else {
                v.speed = (v.speed + a * dt).max(0.0);
                v.position += v.speed * dt;
            }
            v.accel = (v.speed - old_speed) / dt;
            v.phase = v.phase_for(v.position);
            v.waiting_accum = accumulate_wait(v.waiting_accum, v.speed, v.phase, dt);
            self.co2_total += co2_rate(v.speed, v.accel, &self.emission) * dt;
            if old_rear <= v.box_end() && v.rear() > v.box_end() {
                self.discharged += 1;
            }
            if v.phase == VehiclePhase::Done {
                v.exit_actual = Some(t_next);
            }
        }

        if let Some(out) = self.trajectory.as_mut() {
            for v in &self.vehicles {
                let leg = v.leg_of(v.position);
                let name = match leg {
                    0 => self.model.lanes[v.start_lane].id.as_str(),
                    1 => self.model.movements[v.movement].id.as_str(),
                    _ => self.model.lanes[v.end_lane].id.as_str(),
                };
                writeln!(
                    out,
                    "{t_next:.1},{},{name},{:.3},{:.3},{:.3},{}",
                    v.vehicle_id,
                    v.position - v.leg_offset(leg),
                    v.speed,
                    v.accel,
                    v.phase.name()
                )
                .map_err(|e| DynamicsError::Invalid(format!("trajectory log: {e}")))?;
            }
        }

        let (done, active): (Vec<_>, Vec<_>) = std::mem::take(&mut self.vehicles)
            .into_iter()
            .partition(|v| v.phase == VehiclePhase::Done);
        self.finished.extend(done);
        self.vehicles = active;
        self.step_index += 1;
        self.rebuild_index()?;
        self.count_conflicts(t_next);
        Ok(())
    }

    /// Steps until the configured duration is covered.
    pub fn run(&mut self, controller: &mut dyn Controller) -> Result<(), DynamicsError> {
        while !self.is_finished() {
            self.step(controller)?;
        }
        if let Some(out) = self.trajectory.as_mut() {
            out.flush().map_err(|e| DynamicsError::Invalid(format!("trajectory log: {e}")))?;
        }
        Ok(())
    }

    /// One record per vehicle scheduled before the end of the run.
    pub fn trip_log(&self) -> Vec<TripRecord> {
        let m = &self.model;
        let mut out: Vec<TripRecord> = self
            .finished
            .iter()
            .chain(&self.vehicles)
            .chain(self.queues.iter().flatten())
            .map(|v| TripRecord {
                vehicle_id: v.vehicle_id,
                vclass: v.vclass,
                entry_time: v.entry_time,
                entry_actual: v.entry_actual,
                exit_actual: v.exit_actual,
                waiting: v.waiting_accum,
                start_lane: m.lanes[v.start_lane].id.clone(),
                end_lane: m.lanes[v.end_lane].id.clone(),
            })
            .collect();
        out.extend(self.pending[self.next_pending..].iter().map(|r| TripRecord {
            vehicle_id: r.vehicle_id,
            vclass: r.vclass,
            entry_time: r.entry_time,
            entry_actual: None,
            exit_actual: None,
            waiting: 0.0,
            start_lane: r.start_lane.clone(),
            end_lane: r.end_lane.clone(),
        }));
        out.sort_by_key(|t| t.vehicle_id);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{ScenarioName, VehicleClass};
    use crate::net::{build_intersection, IntersectionName, LaneId};

    fn empty(duration: f64) -> (Arc<IntersectionModel>, Scenario) {
        let model = Arc::new(build_intersection(IntersectionName::Wgg));
        let s = Scenario {
            name: ScenarioName::Custom("t".into()),
            intersection: IntersectionName::Wgg,
            records: vec![],
            duration,
        };
        (model, s)
    }

    fn rec(id: u64, t: f64) -> VehicleRecord {
        VehicleRecord {
            vehicle_id: id,
            entry_time: t,
            start_lane: LaneId::new("EB_in_1"),
            end_lane: LaneId::new("EB_out_0"),
            vclass: VehicleClass::Hv,
        }
    }

    #[test]
    fn empty_world_stays_empty() {
        let (m, s) = empty(10.0);
        let mut w = World::new(m, &s, SimConfig { duration: 10.0, ..Default::default() }).unwrap();
        w.run(&mut NoControl).unwrap();
        assert!(w.vehicles().is_empty() && w.finished().is_empty());
        assert_eq!(w.step_index(), 100);
    }

    #[test]
    fn insertion_on_empty_lane_is_on_time() {
        let (m, mut s) = empty(60.0);
        s.records = vec![rec(0, 2.9)];
        let mut w = World::new(m, &s, SimConfig { duration: 60.0, ..Default::default() }).unwrap();
        w.run(&mut NoControl).unwrap();
        let trips = w.trip_log();
        assert_eq!(trips[0].entry_actual, Some(2.9));
        assert!(trips[0].exit_actual.is_some());
    }

    #[test]
    fn simultaneous_arrivals_queue() {
        let (m, mut s) = empty(60.0);
        s.records = (0..3).map(|i| rec(i, 1.0)).collect();
        let mut w = World::new(m, &s, SimConfig { duration: 60.0, ..Default::default() }).unwrap();
        w.run(&mut NoControl).unwrap();
        let trips = w.trip_log();
        assert_eq!(trips[0].entry_actual, Some(1.0));
        assert!(trips[1].entry_actual.unwrap() > 1.0);
        assert!(trips[2].entry_actual.unwrap() > trips[1].entry_actual.unwrap());
    }
}
