//! Vehicle demand: dataset rows, scenario files, the summary statistics
//! reported for each recording, and generators for synthetic, scaled and
//! mixed-class demand.

mod io;
pub mod samples;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Approach, IntersectionModel, IntersectionName, LaneId, TurnType};

pub use io::{load_scenario, parse_scenario, save_scenario, write_scenario};
pub(crate) use io::quantize as io_quantize;
pub use synth::{assign_penetration, quotas_from_mix, scale_demand, synthesize_demand, synthesize_from_counts};

/// Length of the recorded scenarios.
pub const DEFAULT_DURATION: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("row {row}, column `{column}`: {message}")]
    Parse { row: u64, column: String, message: String },
    #[error("row {row}: {message}")]
    InvalidMovement { row: u64, message: String },
    #[error("no {turn} movement on the {approach} approach")]
    InfeasibleMix { approach: Approach, turn: TurnType },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum VehicleClass {
    #[default]
    #[serde(rename = "HV")]
    Hv,
    #[serde(rename = "RV")]
    Rv,
}

impl VehicleClass {
    pub fn code(self) -> &'static str {
        match self {
            VehicleClass::Hv => "HV",
            VehicleClass::Rv => "RV",
        }
    }
}

impl FromStr for VehicleClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "" | "HV" => Ok(VehicleClass::Hv),
            "RV" => Ok(VehicleClass::Rv),
            other => Err(format!("unknown vehicle class `{other}` (expected HV or RV)")),
        }
    }
}

/// One dataset row. `entry_time` is when the vehicle reaches the head of
/// its starting lane.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleRecord {
    pub vehicle_id: u64,
    pub entry_time: f64,
    pub start_lane: LaneId,
    pub end_lane: LaneId,
    pub vclass: VehicleClass,
}

impl VehicleRecord {
    /// A vehicle making `turn` from `approach`, using the first lane pair
    /// that serves the movement.
    pub fn on_movement(
        model: &IntersectionModel,
        vehicle_id: u64,
        entry_time: f64,
        approach: Approach,
        turn: TurnType,
        vclass: VehicleClass,
    ) -> Option<VehicleRecord> {
        let m = model.find_movement(approach, turn)?;
        let (o, d) = model.movement_lanes(m);
        Some(VehicleRecord {
            vehicle_id,
            entry_time,
            start_lane: model.lanes[o].id.clone(),
            end_lane: model.lanes[d].id.clone(),
            vclass,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScenarioName {
    WggN,
    WggAn,
    WgmN,
    WgmAn,
    Custom(String),
}

impl ScenarioName {
    pub const RECORDED: [ScenarioName; 4] = [ScenarioName::WggN, ScenarioName::WggAn, ScenarioName::WgmN, ScenarioName::WgmAn];

    pub fn parse(s: &str) -> ScenarioName {
        match s.to_ascii_uppercase().as_str() {
            "WGG-N" => ScenarioName::WggN,
            "WGG-AN" => ScenarioName::WggAn,
            "WGM-N" => ScenarioName::WgmN,
            "WGM-AN" => ScenarioName::WgmAn,
            _ => ScenarioName::Custom(s.to_string()),
        }
    }

    /// Intersection a recorded scenario belongs to.
    pub fn intersection(&self) -> Option<IntersectionName> {
        match self {
            ScenarioName::WggN | ScenarioName::WggAn => Some(IntersectionName::Wgg),
            ScenarioName::WgmN | ScenarioName::WgmAn => Some(IntersectionName::Wgm),
            ScenarioName::Custom(_) => None,
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioName::WggN => f.write_str("WGG-N"),
            ScenarioName::WggAn => f.write_str("WGG-AN"),
            ScenarioName::WgmN => f.write_str("WGM-N"),
            ScenarioName::WgmAn => f.write_str("WGM-AN"),
            ScenarioName::Custom(s) => f.write_str(s),
        }
    }
}

/// A time-sorted demand set for one intersection.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: ScenarioName,
    pub intersection: IntersectionName,
    pub records: Vec<VehicleRecord>,
    pub duration: f64,
}

impl Scenario {
    /// Builds a custom scenario; records are put in time order.
    pub fn new(name: &str, intersection: IntersectionName, records: Vec<VehicleRecord>, duration: f64) -> Scenario {
        let mut s = Scenario {
            name: ScenarioName::Custom(name.to_string()),
            intersection,
            records,
            duration,
        };
        s.sort();
        s
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rv_count(&self) -> usize {
        self.records.iter().filter(|r| r.vclass == VehicleClass::Rv).count()
    }

    /// Keeps only vehicles entering before `t`.
    pub fn truncated(&self, t: f64) -> Scenario {
        Scenario {
            name: self.name.clone(),
            intersection: self.intersection.clone(),
            records: self.records.iter().filter(|r| r.entry_time < t).cloned().collect(),
            duration: t.min(self.duration),
        }
    }

    pub(crate) fn sort(&mut self) {
        self.records
            .sort_by(|a, b| a.entry_time.total_cmp(&b.entry_time).then(a.vehicle_id.cmp(&b.vehicle_id)));
    }
}

/// Vehicle counts by origin approach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DirectionalDemand {
    pub nb: u64,
    pub sb: u64,
    pub eb: u64,
    pub wb: u64,
}

impl DirectionalDemand {
    pub fn new(nb: u64, sb: u64, eb: u64, wb: u64) -> Self {
        DirectionalDemand { nb, sb, eb, wb }
    }

    pub fn total(&self) -> u64 {
        self.nb + self.sb + self.eb + self.wb
    }

    pub fn get(&self, a: Approach) -> u64 {
        match a {
            Approach::Northbound => self.nb,
            Approach::Southbound => self.sb,
            Approach::Eastbound => self.eb,
            Approach::Westbound => self.wb,
        }
    }

    pub fn get_mut(&mut self, a: Approach) -> &mut u64 {
        match a {
            Approach::Northbound => &mut self.nb,
            Approach::Southbound => &mut self.sb,
            Approach::Eastbound => &mut self.eb,
            Approach::Westbound => &mut self.wb,
        }
    }
}

pub type TurningCounts = BTreeMap<(Approach, TurnType), u64>;

/// Per-approach turn fractions; each row sums to one.
pub type TurnMix = BTreeMap<Approach, BTreeMap<TurnType, f64>>;

/// Arrivals per whole minute and their running mean.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySeries {
    pub minute_counts: Vec<u64>,
    pub cumulative_average: Vec<f64>,
}

fn record_approach(model: &IntersectionModel, r: &VehicleRecord) -> Approach {
    let lane = model.lane_idx(&r.start_lane).expect("scenario records are validated");
    model.lanes[lane].approach
}

pub fn directional_demand(s: &Scenario, model: &IntersectionModel) -> DirectionalDemand {
    let mut d = DirectionalDemand::default();
    for r in &s.records {
        *d.get_mut(record_approach(model, r)) += 1;
    }
    d
}

pub fn turning_counts(s: &Scenario, model: &IntersectionModel) -> TurningCounts {
    let mut out = TurningCounts::new();
    for a in Approach::ALL {
        for t in TurnType::ALL {
            out.insert((a, t), 0);
        }
    }
    for r in &s.records {
        let m = model
            .movement_of(&r.start_lane, &r.end_lane)
            .expect("scenario records are validated");
        *out.entry((record_approach(model, r), m.turn)).or_default() += 1;
    }
    out
}

/// Bucketed arrivals. Only full minutes of the scenario get a bucket.
pub fn stability_series(s: &Scenario) -> Result<StabilitySeries, DemandError> {
    if s.duration < 60.0 {
        return Err(DemandError::Invalid(format!(
            "stability needs at least one minute of data, scenario lasts {} s",
            s.duration
        )));
    }
    let minutes = (s.duration / 60.0).floor() as usize;
    let mut minute_counts = vec![0u64; minutes];
    for r in &s.records {
        let k = (r.entry_time / 60.0).floor() as usize;
        if let Some(c) = minute_counts.get_mut(k) {
            *c += 1;
        }
    }
    let mut cumulative_average = Vec::with_capacity(minutes);
    let mut sum = 0u64;
    for (k, c) in minute_counts.iter().enumerate() {
        sum += c;
        cumulative_average.push(sum as f64 / (k + 1) as f64);
    }
    Ok(StabilitySeries {
        minute_counts,
        cumulative_average,
    })
}

/// Checks a record against the intersection; `row` is used in the error.
pub(crate) fn validate_record(model: &IntersectionModel, r: &VehicleRecord, row: u64) -> Result<(), DemandError> {
    model
        .movement_of(&r.start_lane, &r.end_lane)
        .map(|_| ())
        .map_err(|e| DemandError::InvalidMovement {
            row,
            message: e.to_string(),
        })
}
