//! Directional demand, turning counts and arrival stability of the
//! bundled blackout recordings.

use blackout::demand::{directional_demand, samples::load_sample, stability_series, turning_counts, ScenarioName};
use blackout::net::{build_intersection, Approach, TurnType};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:<8} {:>5} {:>5} {:>5} {:>5} {:>6}", "scenario", "NB", "SB", "EB", "WB", "total");
    for name in ScenarioName::RECORDED {
        let model = build_intersection(name.intersection().expect("recorded"));
        let s = load_sample(&name).expect("bundled");
        let d = directional_demand(&s, &model);
        println!("{:<8} {:>5} {:>5} {:>5} {:>5} {:>6}", name.to_string(), d.nb, d.sb, d.eb, d.wb, d.total());
    }

    let name = ScenarioName::WggAn;
    let model = build_intersection(name.intersection().expect("recorded"));
    let s = load_sample(&name).expect("bundled");
    let counts = turning_counts(&s, &model);
    println!("\nturning counts, {name}");
    for a in Approach::ALL {
        let row: Vec<String> = TurnType::ALL
            .iter()
            .map(|&t| format!("{t:?} {}", counts[&(a, t)]))
            .collect();
        println!("  {a}: {}", row.join(", "));
    }

    let series = stability_series(&s)?;
    let last = series.cumulative_average.last().copied().unwrap_or(0.0);
    let max = series.minute_counts.iter().max().copied().unwrap_or(0);
    let min = series.minute_counts.iter().min().copied().unwrap_or(0);
    println!("\narrivals per minute: min {min}, max {max}, running mean settles at {last:.1}");
    Ok(())
}
