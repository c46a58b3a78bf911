//! Instantaneous CO2 rate over a speed and acceleration grid, and the
//! emissions of a blackout hour against its signalized counterpart.

use std::sync::Arc;

use blackout::control::{signal_program, FcfsController, SignalController};
use blackout::demand::{samples::load_sample, ScenarioName};
use blackout::dynamics::{Controller, SimConfig, World};
use blackout::metrics::{co2_rate, EmissionParams};
use blackout::net::{build_intersection, IntersectionName};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = EmissionParams::default();
    println!("CO2 mg/s by speed (rows, m/s) and acceleration (columns, m/s^2)");
    print!("{:>6}", "");
    let accels = [-4.5, -1.0, 0.0, 1.0, 2.6];
    for a in accels {
        print!("{a:>10.1}");
    }
    println!();
    for v in [0.0, 5.0, 10.0, 13.9] {
        print!("{v:>6.1}");
        for a in accels {
            print!("{:>10.1}", co2_rate(v, a, &p));
        }
        println!();
    }

    let name = ScenarioName::WggAn;
    let model = Arc::new(build_intersection(IntersectionName::Wgg));
    let s = load_sample(&name).expect("bundled");
    let sim = SimConfig::default();
    let run = |ctl: &mut dyn Controller| -> Result<f64, Box<dyn std::error::Error>> {
        let mut w = World::new(model.clone(), &s, sim)?;
        w.run(ctl)?;
        Ok(w.co2_total() / w.step_index() as f64)
    };
    let blackout = run(&mut FcfsController::new(30.0))?;
    let signalized = run(&mut SignalController::new(signal_program(IntersectionName::Wgg), 30.0))?;
    println!("\n{name}: {blackout:.0} mg per step blackout, {signalized:.0} mg per step signalized");
    Ok(())
}
