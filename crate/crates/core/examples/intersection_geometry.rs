//! Lanes, movements and the conflict matrix of the two studied
//! intersections, plus the description-file round trip.

use blackout::net::{build_intersection, file, IntersectionName};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in [IntersectionName::Wgg, IntersectionName::Wgm] {
        let m = build_intersection(name.clone());
        let conflicts = m.conflicts.pairs().count();
        println!(
            "{name}: {} lanes, {} movements, {conflicts} conflicting pairs, {} signal phases",
            m.lanes.len(),
            m.movements.len(),
            m.signal_phases.len()
        );
        for mv in &m.movements {
            println!("  {:<20} {:?} internal {:.1} m", mv.id.as_str(), mv.turn, mv.internal_length);
        }
    }

    let wgg = build_intersection(IntersectionName::Wgg);
    let text = file::to_toml(&wgg);
    let back = file::from_toml(&text)?;
    println!("\ndescription file: {} bytes, reloads identically: {}", text.len(), file::to_toml(&back) == text);
    Ok(())
}
