//! Trip statistics, the instantaneous CO₂ model, reconstruction match
//! rates and comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{Scenario, VehicleClass};
use crate::dynamics::{VehiclePhase, WAIT_SPEED};
use crate::net::LaneId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no vehicle completed its trip")]
    NoCompletedTrips,
    #[error("replay and dataset vehicle sets differ ({0})")]
    VehicleSetMismatch(String),
    #[error("comparison table needs at least one row")]
    EmptyTable,
    #[error("comparison row {0} has an empty label")]
    EmptyLabel(usize),
}

/// Outcome of one vehicle's trip.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub vehicle_id: u64,
    pub vclass: VehicleClass,
    pub entry_time: f64,
    pub entry_actual: Option<f64>,
    pub exit_actual: Option<f64>,
    pub waiting: f64,
    pub start_lane: LaneId,
    pub end_lane: LaneId,
}

impl TripRecord {
    pub fn travel_time(&self) -> Option<f64> {
        Some(self.exit_actual? - self.entry_actual?)
    }
}

/// Adds one step of waiting time when the vehicle is (nearly) stopped
/// before or inside the intersection.
pub fn accumulate_wait(waiting: f64, speed: f64, phase: VehiclePhase, dt: f64) -> f64 {
    if speed < WAIT_SPEED && matches!(phase, VehiclePhase::Approaching | VehiclePhase::InIntersection) {
        waiting + dt
    } else {
        waiting
    }
}

/// Power-based passenger-car CO₂ model.
///
/// `rate = idle_rate + power_rate * max(0, P)` with tractive power
/// `P = v (mass a + rolling + drag v²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionParams {
    /// mg/s at standstill.
    pub idle_rate: f64,
    /// kg.
    pub mass: f64,
    /// N.
    pub rolling: f64,
    /// N s²/m².
    pub drag: f64,
    /// mg per J of tractive work.
    pub power_rate: f64,
}

impl Default for EmissionParams {
    fn default() -> Self {
        EmissionParams {
            idle_rate: 1400.0,
            mass: 1500.0,
            rolling: 147.0,
            drag: 0.42,
            power_rate: 0.27,
        }
    }
}

/// Instantaneous CO₂ emission rate in mg/s.
pub fn co2_rate(v: f64, a: f64, p: &EmissionParams) -> f64 {
    let v = v.max(0.0);
    let power = v * (p.mass * a + p.rolling + p.drag * v * v);
    p.idle_rate + p.power_rate * power.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub avg_travel_time: f64,
    pub avg_wait_time: f64,
    pub co2_per_timestep: f64,
    pub completed: usize,
    pub total: usize,
}

/// Averages over completed trips; CO₂ is the total emitted divided by the
/// number of simulated steps.
pub fn summarize(trips: &[TripRecord], co2_total_mg: f64, steps: u64) -> Result<MetricsSummary, MetricsError> {
    let done: Vec<(f64, f64)> = trips
        .iter()
        .filter_map(|t| t.travel_time().map(|tt| (tt, t.waiting)))
        .collect();
    if done.is_empty() {
        return Err(MetricsError::NoCompletedTrips);
    }
    let n = done.len() as f64;
    Ok(MetricsSummary {
        avg_travel_time: done.iter().map(|d| d.0).sum::<f64>() / n,
        avg_wait_time: done.iter().map(|d| d.1).sum::<f64>() / n,
        co2_per_timestep: if steps == 0 { 0.0 } else { co2_total_mg / steps as f64 },
        completed: done.len(),
        total: trips.len(),
    })
}

/// Reconstruction fidelity counts. Each vehicle counts at most once in
/// `total_mismatch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub n_vehicles: usize,
    pub start_lane_mismatch: usize,
    pub end_lane_mismatch: usize,
    pub timestep_mismatch: usize,
    pub total_mismatch: usize,
}

impl MatchReport {
    pub fn match_rate(&self) -> f64 {
        if self.n_vehicles == 0 {
            return 100.0;
        }
        100.0 * (self.n_vehicles - self.total_mismatch) as f64 / self.n_vehicles as f64
    }
}

fn match_inner(replay: &[TripRecord], dataset: &Scenario, tol: Option<f64>) -> Result<MatchReport, MetricsError> {
    let by_id: BTreeMap<u64, &TripRecord> = replay.iter().map(|t| (t.vehicle_id, t)).collect();
    if by_id.len() != dataset.records.len() || replay.len() != by_id.len() {
        return Err(MetricsError::VehicleSetMismatch(format!(
            "{} replayed vs {} recorded",
            replay.len(),
            dataset.records.len()
        )));
    }
    let mut r = MatchReport {
        n_vehicles: dataset.records.len(),
        start_lane_mismatch: 0,
        end_lane_mismatch: 0,
        timestep_mismatch: 0,
        total_mismatch: 0,
    };
    for rec in &dataset.records {
        let trip = by_id
            .get(&rec.vehicle_id)
            .ok_or_else(|| MetricsError::VehicleSetMismatch(format!("vehicle {} not replayed", rec.vehicle_id)))?;
        let start = trip.start_lane != rec.start_lane;
        let end = trip.end_lane != rec.end_lane;
        let time = match tol {
            Some(tol) => trip.entry_actual.is_none_or(|t| (t - rec.entry_time).abs() > tol),
            None => false,
        };
        r.start_lane_mismatch += start as usize;
        r.end_lane_mismatch += end as usize;
        r.timestep_mismatch += time as usize;
        r.total_mismatch += (start || end || time) as usize;
    }
    Ok(r)
}

/// Compares replayed trips with the dataset. A vehicle that never entered
/// the network counts as a timing mismatch.
pub fn match_report(replay: &[TripRecord], dataset: &Scenario, timestep_tol: f64) -> Result<MatchReport, MetricsError> {
    match_inner(replay, dataset, Some(timestep_tol))
}

/// Start and end lanes only, as used for signalized runs.
pub fn match_report_lanes(replay: &[TripRecord], dataset: &Scenario) -> Result<MatchReport, MetricsError> {
    match_inner(replay, dataset, None)
}

pub const MATCH_CSV_HEADER: &str =
    "scenario,vehicles,start_lane_mismatch,end_lane_mismatch,timestep_mismatch,total_mismatch,match_rate_pct";

pub fn match_csv_row(label: &str, r: &MatchReport) -> String {
    format!(
        "{label},{},{},{},{},{},{:.2}",
        r.n_vehicles,
        r.start_lane_mismatch,
        r.end_lane_mismatch,
        r.timestep_mismatch,
        r.total_mismatch,
        r.match_rate()
    )
}

pub const METRICS_CSV_HEADER: &str = "label,avg_travel_s,avg_wait_s,co2_mg_per_step,completed,total";

pub fn metrics_csv_row(label: &str, m: &MetricsSummary) -> String {
    format!(
        "{label},{:.4},{:.4},{:.4},{},{}",
        m.avg_travel_time, m.avg_wait_time, m.co2_per_timestep, m.completed, m.total
    )
}

/// Renders labelled summaries as an aligned text table and as CSV.
pub fn comparison_table(rows: &[(String, MetricsSummary)]) -> Result<(String, String), MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyTable);
    }
    if let Some(i) = rows.iter().position(|(l, _)| l.trim().is_empty()) {
        return Err(MetricsError::EmptyLabel(i));
    }
    let w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<w$}  {:>15}  {:>13}  {:>15}  {:>9}",
        "label", "avg travel (s)", "avg wait (s)", "CO2/step (mg)", "completed"
    );
    let mut csv = String::from(METRICS_CSV_HEADER);
    csv.push('\n');
    for (label, m) in rows {
        let _ = writeln!(
            text,
            "{:<w$}  {:>15.2}  {:>13.2}  {:>15.2}  {:>4}/{:<4}",
            label, m.avg_travel_time, m.avg_wait_time, m.co2_per_timestep, m.completed, m.total
        );
        csv.push_str(&metrics_csv_row(label, m));
        csv.push('\n');
    }
    Ok((text, csv))
}
