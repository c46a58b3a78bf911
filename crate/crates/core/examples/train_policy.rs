//! Trains a small Stop/Go network on two robot vehicles meeting at the
//! box, saves it, reloads it and compares it with a coin-flip policy.

use std::sync::Arc;

use blackout::control::RandomPolicy;
use blackout::demand::{Scenario, VehicleClass, VehicleRecord};
use blackout::dynamics::SimConfig;
use blackout::learn::{evaluate, run_mixed, train, QPolicy, TrainConfig};
use blackout::metrics::summarize;
use blackout::net::{build_intersection, Approach, IntersectionName, TurnType};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Arc::new(build_intersection(IntersectionName::Wgg));
    let rec = |id, t, a| VehicleRecord::on_movement(&model, id, t, a, TurnType::Straight, VehicleClass::Rv);
    let records = vec![
        rec(0, 0.0, Approach::Northbound).ok_or("lane")?,
        rec(1, 0.5, Approach::Eastbound).ok_or("lane")?,
    ];
    let scenario = Scenario::new("two-rv", IntersectionName::Wgg, records, 60.0);
    let sim = SimConfig {
        duration: 60.0,
        ..SimConfig::default()
    };
    let cfg = TrainConfig {
        iterations: 60,
        hidden: vec![64; 3],
        episode_duration: 60.0,
        warmup: 64,
        target_sync: 5,
        seed: 11,
        ..TrainConfig::default()
    };
    let outcome = train(model.clone(), &scenario, sim, &cfg)?;
    let last = outcome.curve.last().expect("iterations > 0");
    println!("iteration {}: return {:.3}, epsilon {:.2}", last.iteration, last.episode_return, last.epsilon);

    let path = std::env::temp_dir().join("two_rv_policy.bin");
    outcome.policy.save(&path)?;
    let policy = QPolicy::load(&path)?;
    let learned = evaluate(&policy, model.clone(), &scenario, sim)?;
    let (w, _) = run_mixed(model, &scenario, sim, RandomPolicy::new(5), 1.0)?;
    let random = summarize(&w.trip_log(), w.co2_total(), w.step_index())?;
    println!(
        "avg travel time: learned {:.2} s, random {:.2} s (policy saved to {})",
        learned.avg_travel_time,
        random.avg_travel_time,
        path.display()
    );
    Ok(())
}
