//! Bundled sample scenarios.
//!
//! The recorded trajectories are not redistributable, so each sample is a
//! synthetic replica with the recording's exact directional totals and a
//! plausible turning split. Arrival times are uniform, except that WGM-N
//! thins its final three minutes to reproduce that recording's late lull.

use super::{parse_scenario, synthesize_from_counts, Scenario, ScenarioName, TurningCounts};
use crate::net::{build_intersection, Approach, TurnType};

const SAMPLE_SEED: u64 = 20_240_101;

/// (approach, [left, straight, right]) for each recorded scenario.
fn table(name: &ScenarioName) -> Option<[(Approach, [u64; 3]); 4]> {
    use Approach::*;
    Some(match name {
        ScenarioName::WggN => [
            (Northbound, [50, 150, 80]),
            (Southbound, [110, 240, 60]),
            (Eastbound, [90, 480, 115]),
            (Westbound, [100, 430, 78]),
        ],
        ScenarioName::WggAn => [
            (Northbound, [90, 200, 135]),
            (Southbound, [220, 215, 194]),
            (Eastbound, [300, 228, 266]),
            (Westbound, [180, 248, 177]),
        ],
        ScenarioName::WgmN => [
            (Northbound, [160, 190, 53]),
            (Southbound, [90, 260, 84]),
            (Eastbound, [80, 370, 77]),
            (Westbound, [110, 470, 89]),
        ],
        ScenarioName::WgmAn => [
            (Northbound, [200, 230, 64]),
            (Southbound, [100, 320, 103]),
            (Eastbound, [95, 440, 90]),
            (Westbound, [120, 480, 100]),
        ],
        ScenarioName::Custom(_) => return None,
    })
}

/// Turning counts the sample for `name` is generated from.
pub fn sample_counts(name: &ScenarioName) -> Option<TurningCounts> {
    let rows = table(name)?;
    let mut out = TurningCounts::new();
    for (a, cells) in rows {
        for (t, n) in TurnType::ALL.into_iter().zip(cells) {
            out.insert((a, t), n);
        }
    }
    Some(out)
}

/// Regenerates a bundled sample from its count table.
pub fn generate_sample(name: &ScenarioName) -> Option<Scenario> {
    let counts = sample_counts(name)?;
    let model = build_intersection(name.intersection()?);
    let mut s = synthesize_from_counts(&model, &counts, 3600.0, SAMPLE_SEED).expect("sample tables are feasible");
    s.name = name.clone();
    if *name == ScenarioName::WgmN {
        for (i, r) in s.records.iter_mut().enumerate() {
            if r.entry_time >= 3420.0 && i % 5 != 0 {
                r.entry_time = ((r.entry_time - 1710.0) * 10.0).round() / 10.0;
            }
        }
        s.records.sort_by(|a, b| a.entry_time.total_cmp(&b.entry_time).then(a.vehicle_id.cmp(&b.vehicle_id)));
        for (i, r) in s.records.iter_mut().enumerate() {
            r.vehicle_id = i as u64;
        }
    }
    Some(s)
}

/// CSV text of a bundled sample.
pub fn sample_csv(name: &ScenarioName) -> Option<&'static str> {
    Some(match name {
        ScenarioName::WggN => include_str!("../../data/WGG-N.csv"),
        ScenarioName::WggAn => include_str!("../../data/WGG-AN.csv"),
        ScenarioName::WgmN => include_str!("../../data/WGM-N.csv"),
        ScenarioName::WgmAn => include_str!("../../data/WGM-AN.csv"),
        ScenarioName::Custom(_) => return None,
    })
}

/// Loads a bundled sample through the regular CSV path.
pub fn load_sample(name: &ScenarioName) -> Option<Scenario> {
    let model = build_intersection(name.intersection()?);
    let text = sample_csv(name)?;
    Some(parse_scenario(text.as_bytes(), &model, name.clone()).expect("bundled samples are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::write_scenario;

    #[test]
    fn bundled_files_match_generator() {
        for name in ScenarioName::RECORDED {
            let s = generate_sample(&name).unwrap();
            let mut buf = Vec::new();
            write_scenario(&s, &mut buf).unwrap();
            let text = String::from_utf8(buf).unwrap();
            if std::env::var_os("BLACKOUT_WRITE_SAMPLES").is_some() {
                let path = format!("{}/data/{name}.csv", env!("CARGO_MANIFEST_DIR"));
                std::fs::write(path, &text).unwrap();
                continue;
            }
            assert_eq!(text, sample_csv(&name).unwrap(), "{name} sample is stale");
        }
    }
}
