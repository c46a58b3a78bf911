//! Demand generation: exact directional quotas, demand scaling and robot
//! vehicle assignment.

use std::collections::BTreeMap;

use blackout::demand::{
    assign_penetration, directional_demand, samples::load_sample, scale_demand, synthesize_demand, DirectionalDemand,
    ScenarioName, TurnMix,
};
use blackout::net::{build_intersection, Approach, IntersectionName, TurnType};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = build_intersection(IntersectionName::Wgg);
    let targets = DirectionalDemand::new(280, 410, 685, 608);
    let mix: TurnMix = Approach::ALL
        .iter()
        .map(|&a| (a, BTreeMap::from([(TurnType::Left, 0.2), (TurnType::Straight, 0.6), (TurnType::Right, 0.2)])))
        .collect();
    let s = synthesize_demand(&model, &targets, &mix, 3600.0, 7)?;
    let d = directional_demand(&s, &model);
    println!("synthetic: NB {} SB {} EB {} WB {} ({} vehicles)", d.nb, d.sb, d.eb, d.wb, s.len());

    let recorded = load_sample(&ScenarioName::WggAn).expect("bundled");
    let heavier = scale_demand(&recorded, &model, 1.25, 1)?;
    let d = directional_demand(&heavier, &model);
    println!("WGG-AN x1.25: NB {} SB {} EB {} WB {} ({} vehicles)", d.nb, d.sb, d.eb, d.wb, heavier.len());

    for p in [0.2, 0.8] {
        let mixed = assign_penetration(&heavier, p, 3)?;
        println!("penetration {p}: {} robot vehicles", mixed.rv_count());
    }
    Ok(())
}
