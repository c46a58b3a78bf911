use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::io::quantize;
use super::{
    directional_demand, DemandError, DirectionalDemand, Scenario, ScenarioName, TurnMix, TurningCounts, VehicleClass,
    VehicleRecord,
};
use crate::net::{Approach, IntersectionModel, TurnType};

/// Splits each approach total over its turns by largest remainder, so the
/// counts sum to the target exactly. Ties go to the earlier turn.
pub fn quotas_from_mix(targets: &DirectionalDemand, mix: &TurnMix) -> Result<TurningCounts, DemandError> {
    let mut out = TurningCounts::new();
    for a in Approach::ALL {
        let n = targets.get(a);
        let row = mix.get(&a);
        let fracs: Vec<(TurnType, f64)> = TurnType::ALL
            .iter()
            .map(|&t| (t, row.and_then(|r| r.get(&t)).copied().unwrap_or(0.0)))
            .collect();
        if fracs.iter().any(|&(_, f)| !(f >= 0.0) || !f.is_finite()) {
            return Err(DemandError::Invalid(format!("turn fractions for {a} must be finite and >= 0")));
        }
        let sum: f64 = fracs.iter().map(|&(_, f)| f).sum();
        if n > 0 && (sum - 1.0).abs() > 1e-9 {
            return Err(DemandError::Invalid(format!("turn fractions for {a} sum to {sum}, expected 1")));
        }
        let raw: Vec<f64> = fracs.iter().map(|&(_, f)| f * n as f64).collect();
        let mut counts: Vec<u64> = raw.iter().map(|x| x.floor() as u64).collect();
        let short = n - counts.iter().sum::<u64>();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&i, &j| (raw[j] - raw[j].floor()).total_cmp(&(raw[i] - raw[i].floor())).then(i.cmp(&j)));
        for &i in order.iter().take(short as usize) {
            counts[i] += 1;
        }
        for ((t, _), c) in fracs.iter().zip(counts) {
            out.insert((a, *t), c);
        }
    }
    Ok(out)
}

/// Generates exactly `counts[(approach, turn)]` vehicles per cell with
/// arrival times uniform over the duration. Among several lanes serving a
/// cell, one is drawn uniformly per vehicle.
pub fn synthesize_from_counts(
    model: &IntersectionModel,
    counts: &TurningCounts,
    duration: f64,
    seed: u64,
) -> Result<Scenario, DemandError> {
    if !(duration > 0.0) {
        return Err(DemandError::Invalid("duration must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ticks = ((duration * 10.0).round() as u64).max(1);
    let mut draws = Vec::new();
    for (&(approach, turn), &n) in counts {
        if n == 0 {
            continue;
        }
        let options: Vec<usize> = model
            .entry_lanes(approach)
            .into_iter()
            .flat_map(|l| model.movements_from(l))
            .filter(|&m| model.movements[m].turn == turn)
            .collect();
        if options.is_empty() {
            return Err(DemandError::InfeasibleMix { approach, turn });
        }
        for _ in 0..n {
            let m = options[rng.random_range(0..options.len())];
            let tick = rng.random_range(0..ticks);
            draws.push((tick, draws.len(), m));
        }
    }
    draws.sort();
    let records = draws
        .into_iter()
        .enumerate()
        .map(|(i, (tick, _, m))| {
            let mv = &model.movements[m];
            VehicleRecord {
                vehicle_id: i as u64,
                entry_time: tick as f64 / 10.0,
                start_lane: mv.origin.clone(),
                end_lane: mv.destination.clone(),
                vclass: VehicleClass::Hv,
            }
        })
        .collect();
    Ok(Scenario {
        name: ScenarioName::Custom("synthetic".into()),
        intersection: model.name.clone(),
        records,
        duration,
    })
}

/// Demand with exact directional totals and the given turning mix.
pub fn synthesize_demand(
    model: &IntersectionModel,
    targets: &DirectionalDemand,
    mix: &TurnMix,
    duration: f64,
    seed: u64,
) -> Result<Scenario, DemandError> {
    let counts = quotas_from_mix(targets, mix)?;
    synthesize_from_counts(model, &counts, duration, seed)
}

/// Rescales each approach to `round(count * factor)` vehicles. Growth
/// clones randomly chosen records of the same approach with fresh arrival
/// times; shrinkage keeps a random subset.
pub fn scale_demand(s: &Scenario, model: &IntersectionModel, factor: f64, seed: u64) -> Result<Scenario, DemandError> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(DemandError::Invalid(format!("scale factor must be > 0, got {factor}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let current = directional_demand(s, model);
    let mut next_id = s.records.iter().map(|r| r.vehicle_id + 1).max().unwrap_or(0);
    let ticks = ((s.duration * 10.0).round() as u64).max(1);
    let mut records = Vec::new();
    for a in Approach::ALL {
        let mine: Vec<&VehicleRecord> = s
            .records
            .iter()
            .filter(|r| model.lane_idx(&r.start_lane).map(|l| model.lanes[l].approach) == Some(a))
            .collect();
        let have = current.get(a) as usize;
        let want = (have as f64 * factor).round() as usize;
        if want <= have {
            let mut keep = index::sample(&mut rng, have, want).into_vec();
            keep.sort_unstable();
            records.extend(keep.into_iter().map(|i| mine[i].clone()));
        } else {
            records.extend(mine.iter().map(|r| (*r).clone()));
            for _ in have..want {
                let src = mine[rng.random_range(0..have)];
                let tick = rng.random_range(0..ticks);
                records.push(VehicleRecord {
                    vehicle_id: next_id,
                    entry_time: quantize(tick as f64 / 10.0),
                    ..src.clone()
                });
                next_id += 1;
            }
        }
    }
    let mut out = Scenario {
        name: s.name.clone(),
        intersection: s.intersection.clone(),
        records,
        duration: s.duration,
    };
    out.sort();
    Ok(out)
}

/// Marks exactly `round(p * N)` uniformly chosen vehicles as robot
/// vehicles and all others as human-driven.
pub fn assign_penetration(s: &Scenario, p: f64, seed: u64) -> Result<Scenario, DemandError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DemandError::Invalid(format!("penetration must lie in [0, 1], got {p}")));
    }
    let n = s.records.len();
    let k = (p * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = s.clone();
    for r in &mut out.records {
        r.vclass = VehicleClass::Hv;
    }
    for i in index::sample(&mut rng, n, k) {
        out.records[i].vclass = VehicleClass::Rv;
    }
    Ok(out)
}
