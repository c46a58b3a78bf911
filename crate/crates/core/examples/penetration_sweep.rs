//! Average wait against robot-vehicle penetration on the heavier WGG-AN
//! demand, run in parallel. Pass a policy file to use a trained policy;
//! otherwise every robot vehicle is always told to go.

use std::sync::Arc;

use blackout::control::AlwaysGo;
use blackout::demand::{assign_penetration, samples::load_sample, scale_demand, ScenarioName};
use blackout::dynamics::SimConfig;
use blackout::learn::{run_mixed, QPolicy};
use blackout::metrics::{summarize, MetricsSummary};
use blackout::net::build_intersection;
use rayon::prelude::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let policy = std::env::args().nth(1).map(|p| QPolicy::load(p.as_ref())).transpose()?;
    let name = ScenarioName::WggAn;
    let model = Arc::new(build_intersection(name.intersection().expect("recorded")));
    let sim = SimConfig {
        duration: 1000.0,
        ..SimConfig::default()
    };
    let demand = scale_demand(&load_sample(&name).expect("bundled"), &model, 1.25, 1)?.truncated(sim.duration);

    let rates = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let rows: Vec<MetricsSummary> = rates
        .par_iter()
        .map(|&p| {
            let s = assign_penetration(&demand, p, 3).expect("rate in range");
            let world = match &policy {
                Some(q) => run_mixed(model.clone(), &s, sim, q.clone(), 1.0).expect("runs").0,
                None => run_mixed(model.clone(), &s, sim, AlwaysGo, 1.0).expect("runs").0,
            };
            summarize(&world.trip_log(), world.co2_total(), world.step_index()).expect("trips complete")
        })
        .collect();
    println!("{:>5} {:>9} {:>11} {:>12}", "p", "wait s", "travel s", "CO2 mg/step");
    for (p, m) in rates.iter().zip(&rows) {
        println!("{p:>5.1} {:>9.2} {:>11.2} {:>12.0}", m.avg_wait_time, m.avg_travel_time, m.co2_per_timestep);
    }
    Ok(())
}
