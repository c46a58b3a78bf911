//! A single robot vehicle told to stop, then to go: the stopping law
//! halts it at the line and the go command releases it at full throttle.

use std::sync::Arc;

use blackout::control::{stop_accel, DecisionContext, MixedController, RvCommand, RvPolicy};
use blackout::demand::{Scenario, VehicleClass, VehicleRecord};
use blackout::dynamics::{SimConfig, World};
use blackout::learn::Observation;
use blackout::net::{build_intersection, Approach, IntersectionName, TurnType};

/// Stops until `release`, then goes.
struct StopUntil {
    release: f64,
}

impl RvPolicy for StopUntil {
    fn act(&mut self, ctx: &DecisionContext, _: &Observation) -> RvCommand {
        if ctx.time < self.release {
            RvCommand::Stop
        } else {
            RvCommand::Go
        }
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("stopping law: 10 m/s with 20 m to go -> {:.2} m/s^2", stop_accel(10.0, 20.0)?);

    let model = Arc::new(build_intersection(IntersectionName::Wgg));
    let sim = SimConfig {
        duration: 40.0,
        ..SimConfig::default()
    };
    let rv = VehicleRecord::on_movement(&model, 0, 0.0, Approach::Northbound, TurnType::Straight, VehicleClass::Rv)
        .ok_or("no northbound straight")?;
    let scenario = Scenario::new("single-rv", IntersectionName::Wgg, Vec::new(), sim.duration);
    let lane = model.lane_idx(&rv.start_lane).ok_or("unknown lane")?;
    let start = model.lanes[lane].length - 2.0 - 25.0;

    let mut world = World::new(model, &scenario, sim)?;
    world.place_vehicle(&rv, start, 12.0)?;
    let mut ctl = MixedController::new(StopUntil { release: 15.0 }, 1.0, sim.rv_zone);
    while world.time() < sim.duration && !world.vehicles().is_empty() {
        world.step(&mut ctl)?;
        let k = world.step_index();
        if k % 20 == 0 {
            if let Some(v) = world.vehicles().first() {
                println!(
                    "t {:>5.1} s  to line {:>6.2} m  speed {:>5.2} m/s  accel {:>6.2}  {}",
                    world.time(),
                    v.to_stop_line(),
                    v.speed,
                    v.accel,
                    v.phase.name()
                );
            }
        }
    }
    Ok(())
}
