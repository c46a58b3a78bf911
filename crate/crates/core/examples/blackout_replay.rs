//! Replays a recorded blackout hour under first-come-first-served
//! right of way and reports reconstruction fidelity.

use std::sync::Arc;

use blackout::control::FcfsController;
use blackout::demand::{samples::load_sample, ScenarioName};
use blackout::dynamics::{SimConfig, World};
use blackout::metrics::{match_report, summarize};
use blackout::net::build_intersection;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = ScenarioName::parse(&std::env::args().nth(1).unwrap_or_else(|| "WGG-N".into()));
    let model = Arc::new(build_intersection(name.intersection().ok_or("unknown sample")?));
    let scenario = load_sample(&name).ok_or("unknown sample")?;
    let sim = SimConfig {
        duration: scenario.duration,
        ..SimConfig::default()
    };
    let mut world = World::new(model, &scenario, sim)?;
    world.run(&mut FcfsController::new(sim.rv_zone))?;

    let trips = world.trip_log();
    for tol in [0.5, 2.0, f64::INFINITY] {
        let r = match_report(&trips, &scenario, tol)?;
        println!(
            "{name} tolerance {tol:>4} s: {} vehicles, {} late entries, match {:.2}%",
            r.n_vehicles,
            r.timestep_mismatch,
            r.match_rate()
        );
    }
    let m = summarize(&trips, world.co2_total(), world.step_index())?;
    println!(
        "avg travel {:.2} s, avg wait {:.2} s, {} of {} trips completed, {} conflicting co-occupancies",
        m.avg_travel_time,
        m.avg_wait_time,
        m.completed,
        m.total,
        world.conflict_events()
    );
    Ok(())
}
