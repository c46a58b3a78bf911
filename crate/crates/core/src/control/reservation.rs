use serde::Serialize;

use crate::dynamics::World;
use crate::net::{Approach, IntersectionModel};

/// A lane head asking to cross.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub vehicle_id: u64,
    pub movement: usize,
    /// Time the request was first made.
    pub arrival: f64,
    pub approach: Approach,
    pub lane_index: usize,
    /// Lower classes are served first; equal classes are first come,
    /// first served.
    pub class: u8,
}

impl Request {
    fn key(&self) -> (u8, f64, usize, usize, u64) {
        (self.class, self.arrival, self.approach.ordinal(), self.lane_index, self.vehicle_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grant {
    pub vehicle_id: u64,
    pub movement: usize,
    pub arrival: f64,
    pub granted_at: f64,
}

/// First-come-first-served reservations of the box.
///
/// Requests are examined in queue order and granted when they conflict
/// with no active grant. In strict mode a request must also not conflict
/// with any request still waiting ahead of it, so no vehicle is overtaken
/// by a later conflicting one.
#[derive(Debug, Clone, Default)]
pub struct ReservationState {
    strict: bool,
    pending: Vec<Request>,
    active: Vec<Grant>,
    log: Vec<Grant>,
}

impl ReservationState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn strict() -> Self {
        ReservationState {
            strict: true,
            ..Self::default()
        }
    }

    pub fn pending(&self) -> &[Request] {
        &self.pending
    }

    pub fn active(&self) -> &[Grant] {
        &self.active
    }

    /// Every grant ever issued, in issue order.
    pub fn log(&self) -> &[Grant] {
        &self.log
    }

    pub fn is_pending(&self, id: u64) -> bool {
        self.pending.iter().any(|r| r.vehicle_id == id)
    }

    pub fn is_granted(&self, id: u64) -> bool {
        self.active.iter().any(|g| g.vehicle_id == id)
    }

    /// Queues a request unless the vehicle already holds or awaits one.
    pub fn request(&mut self, r: Request) {
        if !self.is_pending(r.vehicle_id) && !self.is_granted(r.vehicle_id) {
            self.pending.push(r);
        }
    }

    pub fn withdraw(&mut self, id: u64) {
        self.pending.retain(|r| r.vehicle_id != id);
    }

    pub fn revoke(&mut self, id: u64) {
        self.active.retain(|g| g.vehicle_id != id);
    }

    /// Drops grants of vehicles whose rear has left the box and any state
    /// of vehicles no longer on the network.
    pub fn release_cleared(&mut self, world: &World) {
        let present = |id: u64| world.vehicles().iter().find(|v| v.vehicle_id == id);
        self.active
            .retain(|g| present(g.vehicle_id).is_some_and(|v| v.rear() <= v.box_end()));
        self.pending.retain(|r| present(r.vehicle_id).is_some());
    }

    /// Grants every admissible pending request. Returns the ids granted.
    pub fn process(&mut self, model: &IntersectionModel, now: f64) -> Vec<u64> {
        self.pending
            .sort_by(|a, b| a.key().partial_cmp(&b.key()).expect("arrival times are finite"));
        let mut waiting: Vec<usize> = Vec::new();
        let mut granted = Vec::new();
        let mut keep = Vec::with_capacity(self.pending.len());
        for r in std::mem::take(&mut self.pending) {
            let clear = self.active.iter().all(|g| !model.conflicts.get(g.movement, r.movement))
                && (!self.strict || waiting.iter().all(|&m| !model.conflicts.get(m, r.movement)));
            if clear {
                let g = Grant {
                    vehicle_id: r.vehicle_id,
                    movement: r.movement,
                    arrival: r.arrival,
                    granted_at: now,
                };
                self.active.push(g);
                self.log.push(g);
                granted.push(r.vehicle_id);
            } else {
                waiting.push(r.movement);
                keep.push(r);
            }
        }
        self.pending = keep;
        granted
    }

    /// Whether the active grants are pairwise compatible.
    pub fn is_consistent(&self, model: &IntersectionModel) -> bool {
        self.active.iter().enumerate().all(|(i, a)| {
            self.active[i + 1..]
                .iter()
                .all(|b| !model.conflicts.get(a.movement, b.movement))
        })
    }
}
