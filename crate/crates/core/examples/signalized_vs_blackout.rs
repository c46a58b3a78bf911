//! The same demand under the fixed-time signal plan and under blackout
//! first-come-first-served operation.

use std::sync::Arc;

use blackout::control::{signal_program, FcfsController, SignalController};
use blackout::demand::{samples::load_sample, ScenarioName};
use blackout::dynamics::{Controller, SimConfig, World};
use blackout::metrics::{comparison_table, summarize, MetricsSummary};
use blackout::net::build_intersection;

fn run(name: &ScenarioName, ctl: &mut dyn Controller) -> Result<MetricsSummary, Box<dyn std::error::Error>> {
    let model = Arc::new(build_intersection(name.intersection().expect("recorded")));
    let s = load_sample(name).expect("bundled");
    let mut w = World::new(model, &s, SimConfig::default())?;
    w.run(ctl)?;
    Ok(summarize(&w.trip_log(), w.co2_total(), w.step_index())?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rows = Vec::new();
    for name in ScenarioName::RECORDED {
        let plan = signal_program(name.intersection().expect("recorded"));
        let cycle = plan.cycle_length;
        rows.push((format!("{name} signalized ({cycle} s cycle)"), run(&name, &mut SignalController::new(plan, 30.0))?));
        rows.push((format!("{name} blackout"), run(&name, &mut FcfsController::new(30.0))?));
    }
    let (table, _csv) = comparison_table(&rows)?;
    println!("{table}");
    Ok(())
}
