use std::collections::BTreeMap;
use std::sync::Arc;

use blackout::control::{
    signal_program, stop_accel, DecisionContext, FcfsController, MixedController, RandomPolicy, Request,
    ReservationState, RvCommand, RvPolicy, SignalController, ZoneStats,
};
use blackout::demand::{assign_penetration, quotas_from_mix, synthesize_from_counts, DirectionalDemand, Scenario, TurnMix};
use blackout::dynamics::{idm_accel, IdmParams, SimConfig, World, EMERGENCY_DECEL};
use blackout::learn::{reward, td_targets, Experience, Mlp, Observation, RewardConfig, FEATURE_CLIP, OBS_DIM};
use blackout::net::{build_intersection, Approach, IntersectionModel, IntersectionName, TurnType};
use proptest::prelude::*;

fn model(wgm: bool) -> Arc<IntersectionModel> {
    Arc::new(build_intersection(if wgm { IntersectionName::Wgm } else { IntersectionName::Wgg }))
}

fn random_scenario(model: &IntersectionModel, per_cell: &[u64], duration: f64, seed: u64) -> Scenario {
    let mut counts = BTreeMap::new();
    let mut k = 0;
    for a in Approach::ALL {
        for t in TurnType::ALL {
            counts.insert((a, t), per_cell[k % per_cell.len()]);
            k += 1;
        }
    }
    synthesize_from_counts(model, &counts, duration, seed).unwrap()
}

/// Records every observation it is shown.
struct Inspect(Vec<Observation>, RandomPolicy);

impl RvPolicy for Inspect {
    fn act(&mut self, ctx: &DecisionContext, obs: &Observation) -> RvCommand {
        self.0.push(*obs);
        self.1.act(ctx, obs)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn idm_stays_within_actuation_limits(gap in 0.01f64..200.0, v in 0.0f64..20.0, vl in 0.0f64..20.0) {
        let p = IdmParams::default();
        let a = idm_accel(gap, v, vl, &p).unwrap();
        prop_assert!(a.is_finite());
        prop_assert!(a <= p.max_accel + 1e-12);
        prop_assert!(a >= -EMERGENCY_DECEL);
    }

    #[test]
    fn idm_never_speeds_up_when_closer(gap in 1.0f64..100.0, shrink in 0.01f64..0.99, v in 0.0f64..15.0, vl in 0.0f64..15.0) {
        let p = IdmParams::default();
        let far = idm_accel(gap, v, vl, &p).unwrap();
        let near = idm_accel(gap * shrink, v, vl, &p).unwrap();
        prop_assert!(near <= far + 1e-12);
    }

    #[test]
    fn stopping_law_stops_at_the_target(u in 0.1f64..25.0, d in 0.2f64..60.0) {
        let a = stop_accel(u, d).unwrap();
        prop_assert!(a < 0.0);
        prop_assert!((u * u / (2.0 * -a) - d).abs() < 1e-9 * d.max(1.0));
    }

    #[test]
    fn reservations_stay_consistent(ops in prop::collection::vec((0u64..12, 0usize..14, prop::bool::ANY), 1..80)) {
        let m = build_intersection(IntersectionName::Wgg);
        let mut r = ReservationState::new();
        for (step, (id, mv, release)) in ops.into_iter().enumerate() {
            if release {
                r.revoke(id);
            } else {
                let lane = m.movement_lanes(mv).0;
                r.request(Request {
                    vehicle_id: id,
                    movement: mv,
                    arrival: step as f64,
                    approach: m.lanes[lane].approach,
                    lane_index: m.lanes[lane].index,
                    class: 0,
                });
            }
            r.process(&m, step as f64);
            prop_assert!(r.is_consistent(&m));
        }
    }

    #[test]
    fn quotas_hit_directional_targets(nb in 0u64..900, sb in 0u64..900, eb in 0u64..900, wb in 0u64..900, l in 0.0f64..1.0, s in 0.0f64..1.0) {
        let s = s * (1.0 - l);
        let row = BTreeMap::from([(TurnType::Left, l), (TurnType::Straight, s), (TurnType::Right, 1.0 - l - s)]);
        let mix: TurnMix = Approach::ALL.iter().map(|&a| (a, row.clone())).collect();
        let targets = DirectionalDemand::new(nb, sb, eb, wb);
        let counts = quotas_from_mix(&targets, &mix).unwrap();
        for a in Approach::ALL {
            let total: u64 = TurnType::ALL.iter().map(|&t| counts[&(a, t)]).sum();
            prop_assert_eq!(total, targets.get(a));
        }
    }

    #[test]
    fn penetration_assigns_exact_counts(n in 1u64..6, p in 0.0f64..=1.0, seed in 0u64..1000) {
        let m = model(false);
        let s = random_scenario(&m, &[n], 120.0, seed);
        let mixed = assign_penetration(&s, p, seed).unwrap();
        prop_assert_eq!(mixed.rv_count(), (p * s.len() as f64).round() as usize);
        prop_assert_eq!(mixed.len(), s.len());
    }

    #[test]
    fn signal_plans_are_periodic(t in 0.0f64..5000.0, wgm in prop::bool::ANY, mv in 0usize..14) {
        let plan = signal_program(if wgm { IntersectionName::Wgm } else { IntersectionName::Wgg });
        let t = (t * 10.0).round() / 10.0;
        prop_assert_eq!(plan.phase_at(t), plan.phase_at(t + plan.cycle_length));
        prop_assert_eq!(plan.color(t, mv), plan.color(t + 3.0 * plan.cycle_length, mv));
    }

    #[test]
    fn reward_is_bounded(wait in 0.0f64..1e4, d0 in 0u64..100, dd in 0u64..25, c0 in 0u64..10, dc in 0u64..3) {
        let before = ZoneStats { zone_wait: 0.0, discharged: d0, conflicts: c0 };
        let after = ZoneStats { zone_wait: wait, discharged: d0 + dd, conflicts: c0 + dc };
        let r = reward(&before, &after, &RewardConfig::default());
        prop_assert!((-6.0..=1.25).contains(&r));
        if dc > 0 {
            prop_assert!(r <= -5.0 + 1.25);
        }
    }

    #[test]
    fn zero_discount_targets_equal_rewards(rs in prop::collection::vec(-6.0f64..1.25, 1..16), seed in 0u64..100) {
        let online = Mlp::new(&[OBS_DIM, 8, 2], seed);
        let target = Mlp::new(&[OBS_DIM, 8, 2], seed + 1);
        let batch: Vec<Experience> = rs
            .iter()
            .map(|&r| Experience { obs: [0.5; OBS_DIM], action: 0, reward: r, next_obs: [0.25; OBS_DIM], done: false })
            .collect();
        prop_assert_eq!(td_targets(&online, &target, &batch, 0.0), rs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn blackout_and_signal_runs_are_collision_free(cells in prop::collection::vec(0u64..8, 12), seed in 0u64..10_000, wgm in prop::bool::ANY) {
        let m = model(wgm);
        let s = random_scenario(&m, &cells, 240.0, seed);
        let sim = SimConfig { duration: 240.0, ..SimConfig::default() };
        let mut w = World::new(m.clone(), &s, sim).unwrap();
        w.run(&mut FcfsController::new(30.0)).unwrap();
        prop_assert_eq!(w.conflict_events(), 0);
        let plan = signal_program(m.name.clone());
        let mut w = World::new(m, &s, sim).unwrap();
        w.run(&mut SignalController::new(plan, 30.0)).unwrap();
        prop_assert_eq!(w.conflict_events(), 0);
    }

    #[test]
    fn observations_are_finite_and_normalised(cells in prop::collection::vec(0u64..8, 12), seed in 0u64..10_000) {
        let m = model(false);
        let s = assign_penetration(&random_scenario(&m, &cells, 180.0, seed), 0.7, seed).unwrap();
        let sim = SimConfig { duration: 180.0, ..SimConfig::default() };
        let mut w = World::new(m, &s, sim).unwrap();
        let mut ctl = MixedController::new(Inspect(Vec::new(), RandomPolicy::new(seed)), 1.0, 30.0);
        w.run(&mut ctl).unwrap();
        prop_assert_eq!(w.conflict_events(), 0);
        for o in &ctl.policy().0 {
            prop_assert!(o.iter().all(|x| x.is_finite() && (0.0..=FEATURE_CLIP).contains(x)));
            prop_assert!(o[8] == 0.0 || o[8] == 1.0);
            prop_assert!(o[9] <= 1.0);
        }
    }
}
