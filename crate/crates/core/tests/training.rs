use std::sync::Arc;

use blackout::demand::{assign_penetration, samples::load_sample, ScenarioName};
use blackout::dynamics::SimConfig;
use blackout::learn::{train, Mlp, TrainConfig};
use blackout::net::{build_intersection, IntersectionName};

fn tiny(iterations: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        hidden: vec![16, 16],
        episode_duration: 60.0,
        warmup: 32,
        batch_size: 16,
        target_sync: 2,
        seed,
        ..TrainConfig::default()
    }
}

fn setup() -> (Arc<blackout::net::IntersectionModel>, blackout::demand::Scenario, SimConfig) {
    let model = Arc::new(build_intersection(IntersectionName::Wgg));
    let s = load_sample(&ScenarioName::WggN).unwrap().truncated(300.0);
    let s = assign_penetration(&s, 0.5, 4).unwrap();
    let sim = SimConfig {
        duration: 300.0,
        ..SimConfig::default()
    };
    (model, s, sim)
}

#[test]
fn zero_iterations_return_the_initial_network() {
    let (model, s, sim) = setup();
    let cfg = tiny(0, 9);
    let out = train(model, &s, sim, &cfg).unwrap();
    assert!(out.curve.is_empty());
    assert_eq!(out.policy.net().to_bytes(), Mlp::new(&cfg.layer_sizes(), cfg.seed).to_bytes());
}

#[test]
fn training_is_reproducible_per_seed() {
    let (model, s, sim) = setup();
    let a = train(model.clone(), &s, sim, &tiny(6, 3)).unwrap();
    let b = train(model.clone(), &s, sim, &tiny(6, 3)).unwrap();
    let c = train(model, &s, sim, &tiny(6, 4)).unwrap();
    assert_eq!(a.policy.net().to_bytes(), b.policy.net().to_bytes());
    assert_eq!(a.curve_csv(), b.curve_csv());
    assert_ne!(a.policy.net().to_bytes(), c.policy.net().to_bytes());
    assert!(a.curve.iter().any(|p| p.loss.is_some()));
}

#[test]
fn scenario_without_robots_is_rejected() {
    let (model, _, sim) = setup();
    let s = load_sample(&ScenarioName::WggN).unwrap().truncated(60.0);
    assert!(train(model, &s, sim, &tiny(1, 0)).is_err());
}
