//! Experiment runner behind the `blackout` binary.
//!
//! Every mode writes its artefacts into the output directory together
//! with `effective-config.toml`, the fully resolved configuration.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::control::{AlwaysGo, FcfsController, SignalController, SignalProgram};
use crate::demand::{
    assign_penetration, directional_demand, load_scenario, samples, scale_demand, stability_series, synthesize_demand,
    synthesize_from_counts, turning_counts, DirectionalDemand, Scenario, ScenarioName, TurnMix,
};
use crate::dynamics::{Controller, SimConfig, World};
use crate::learn::{run_mixed, train, QPolicy};
use crate::metrics::{
    match_csv_row, match_report, match_report_lanes, metrics_csv_row, summarize, MetricsSummary, MATCH_CSV_HEADER,
    METRICS_CSV_HEADER,
};
use crate::net::{build_intersection, file as netfile, Approach, IntersectionModel, IntersectionName, TurnType};

pub use config::{load_config, ConfigError, Mode, RunConfig, SyntheticSpec};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("intersection: {0}")]
    Net(#[from] crate::net::NetError),
    #[error("scenario: {0}")]
    Demand(#[from] crate::demand::DemandError),
    #[error("simulation: {0}")]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error("metrics: {0}")]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("learning: {0}")]
    Learn(#[from] crate::learn::LearnError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

/// Human-readable report and the files written.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub text: String,
    pub files: Vec<String>,
}

struct Output<'a> {
    dir: &'a Path,
    report: RunReport,
}

impl Output<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        fs::write(self.dir.join(name), contents)?;
        self.report.files.push(name.to_string());
        Ok(())
    }
}

fn resolve_intersection(cfg: &RunConfig) -> Result<IntersectionModel, RunError> {
    let from_scenario = cfg
        .scenario
        .as_deref()
        .map(ScenarioName::parse)
        .or_else(|| cfg.synthetic.as_ref().and_then(|s| s.like.as_deref()).map(ScenarioName::parse))
        .and_then(|n| n.intersection());
    match cfg.intersection.as_deref() {
        Some(spec) => match IntersectionName::parse(spec) {
            IntersectionName::Custom(_) => Ok(netfile::load(spec)?),
            name => Ok(build_intersection(name)),
        },
        None => from_scenario.map(build_intersection).ok_or(RunError::Config(ConfigError::Missing {
            field: "intersection",
            mode: cfg.mode,
        })),
    }
}

fn resolve_scenario(cfg: &RunConfig, model: &IntersectionModel) -> Result<Scenario, RunError> {
    if let Some(spec) = &cfg.synthetic {
        return synthetic_scenario(spec, model, cfg.seed);
    }
    let s = cfg.scenario.as_deref().expect("validated");
    if !Path::new(s).exists() {
        let name = ScenarioName::parse(s);
        if let Some(sample) = samples::load_sample(&name) {
            if name.intersection().map(build_intersection).is_some_and(|m| m.name == model.name) {
                return Ok(sample);
            }
            return Err(RunError::Config(ConfigError::Invalid {
                field: "intersection",
                message: format!("sample {name} belongs to a different intersection"),
            }));
        }
    }
    Ok(load_scenario(s, model)?)
}

fn synthetic_scenario(spec: &SyntheticSpec, model: &IntersectionModel, seed: u64) -> Result<Scenario, RunError> {
    if let Some(like) = &spec.like {
        let name = ScenarioName::parse(like);
        let counts = samples::sample_counts(&name).ok_or(ConfigError::Invalid {
            field: "synthetic.like",
            message: format!("no bundled sample named {like}"),
        })?;
        return Ok(synthesize_from_counts(model, &counts, spec.duration, seed)?);
    }
    let [nb, sb, eb, wb] = spec.demand.expect("validated");
    let targets = DirectionalDemand::new(nb, sb, eb, wb);
    let mix: TurnMix = Approach::ALL
        .iter()
        .map(|&a| (a, TurnType::ALL.iter().copied().zip(spec.turn_mix).collect::<BTreeMap<_, _>>()))
        .collect();
    Ok(synthesize_demand(model, &targets, &mix, spec.duration, seed)?)
}

fn sim_config(cfg: &RunConfig, scenario: &Scenario) -> SimConfig {
    SimConfig {
        dt: cfg.dt,
        duration: cfg.duration.unwrap_or(scenario.duration),
        seed: cfg.seed,
        idm: cfg.idm,
        rv_zone: cfg.rv_zone,
    }
}

fn simulate(
    model: Arc<IntersectionModel>,
    scenario: &Scenario,
    sim: SimConfig,
    controller: &mut dyn Controller,
    trajectory: Option<&Path>,
) -> Result<World, RunError> {
    let mut world = World::new(model, scenario, sim)?;
    if let Some(path) = trajectory {
        let f = fs::File::create(path)?;
        world.set_trajectory_log(Box::new(std::io::BufWriter::new(f)))?;
    }
    world.run(controller)?;
    Ok(world)
}

fn summary_of(world: &World) -> Result<MetricsSummary, RunError> {
    Ok(summarize(&world.trip_log(), world.co2_total(), world.step_index())?)
}

fn metrics_csv(rows: &[(String, MetricsSummary)]) -> String {
    let mut s = format!("{METRICS_CSV_HEADER}\n");
    for (label, m) in rows {
        s.push_str(&metrics_csv_row(label, m));
        s.push('\n');
    }
    s
}

fn penetration_label(p: f64) -> String {
    format!("p={p:.2}")
}

/// Runs one configured experiment.
pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    let mut out = Output {
        dir: &cfg.out,
        report: RunReport::default(),
    };
    out.write("effective-config.toml", &cfg.to_toml())?;
    let model = Arc::new(resolve_intersection(cfg)?);
    let mut scenario = resolve_scenario(cfg, &model)?;
    if cfg.scale != 1.0 {
        scenario = scale_demand(&scenario, &model, cfg.scale, cfg.seed)?;
    }
    if let Some(d) = cfg.duration {
        scenario = scenario.truncated(d);
    }
    let sim = sim_config(cfg, &scenario);
    let trajectory = cfg.trajectory.then(|| cfg.out.join("trajectory.csv"));
    let mut text = String::new();

    match cfg.mode {
        Mode::Stats => {
            let d = directional_demand(&scenario, &model);
            let mut csv = String::from("scenario,NB,SB,EB,WB,total\n");
            writeln!(csv, "{},{},{},{},{},{}", scenario.name, d.nb, d.sb, d.eb, d.wb, d.total()).unwrap();
            out.write("stats.csv", &csv)?;
            let mut turns = String::from("approach,turn,count\n");
            for ((a, t), n) in turning_counts(&scenario, &model) {
                writeln!(turns, "{},{t:?},{n}", a.code()).unwrap();
            }
            out.write("turning.csv", &turns)?;
            writeln!(text, "{}: NB {} SB {} EB {} WB {} total {}", scenario.name, d.nb, d.sb, d.eb, d.wb, d.total()).unwrap();
        }
        Mode::Validate => {
            let series = stability_series(&scenario)?;
            let mut csv = String::from("minute,count,cumulative_average\n");
            for (k, (c, avg)) in series.minute_counts.iter().zip(&series.cumulative_average).enumerate() {
                writeln!(csv, "{},{c},{avg:.4}", k + 1).unwrap();
            }
            out.write("stability.csv", &csv)?;
            writeln!(
                text,
                "{}: {} records over {} minutes, {} robot vehicles; schema valid",
                scenario.name,
                scenario.len(),
                series.minute_counts.len(),
                scenario.rv_count()
            )
            .unwrap();
        }
        Mode::Replay => {
            let world = simulate(model.clone(), &scenario, sim, &mut FcfsController::new(cfg.rv_zone), trajectory.as_deref())?;
            let trips = world.trip_log();
            let report = match_report(&trips, &scenario, cfg.timestep_tol)?;
            let summary = summary_of(&world)?;
            out.write("match.csv", &format!("{MATCH_CSV_HEADER}\n{}\n", match_csv_row(&scenario.name.to_string(), &report)))?;
            out.write("metrics.csv", &metrics_csv(&[("blackout".into(), summary)]))?;
            writeln!(text, "match rate {:.2}% over {} vehicles", report.match_rate(), report.n_vehicles).unwrap();
            writeln!(text, "avg wait {:.2} s, avg travel {:.2} s", summary.avg_wait_time, summary.avg_travel_time).unwrap();
        }
        Mode::Signalized => {
            let program = SignalProgram::from_model(&model).ok_or(ConfigError::Invalid {
                field: "intersection",
                message: "intersection has no signal plan".into(),
            })?;
            let mut ctl = SignalController::new(program, cfg.rv_zone);
            let world = simulate(model.clone(), &scenario, sim, &mut ctl, trajectory.as_deref())?;
            let report = match_report_lanes(&world.trip_log(), &scenario)?;
            let signalized = summary_of(&world)?;
            let blackout_world = simulate(model.clone(), &scenario, sim, &mut FcfsController::new(cfg.rv_zone), None)?;
            let blackout = summary_of(&blackout_world)?;
            out.write("match.csv", &format!("{MATCH_CSV_HEADER}\n{}\n", match_csv_row(&scenario.name.to_string(), &report)))?;
            out.write(
                "metrics.csv",
                &metrics_csv(&[("signalized".into(), signalized), ("blackout".into(), blackout)]),
            )?;
            writeln!(text, "lane match rate {:.2}%", report.match_rate()).unwrap();
            writeln!(
                text,
                "avg wait signalized {:.2} s vs blackout {:.2} s",
                signalized.avg_wait_time, blackout.avg_wait_time
            )
            .unwrap();
        }
        Mode::Mixed => {
            let policy = cfg.policy.as_deref().map(QPolicy::load).transpose()?;
            let rates = if cfg.penetration > 0.0 {
                vec![0.0, cfg.penetration]
            } else {
                cfg.penetrations.clone()
            };
            let one = |p: f64| -> Result<(String, MetricsSummary), RunError> {
                let s = assign_penetration(&scenario, p, cfg.seed)?;
                let world = match &policy {
                    Some(q) => run_mixed(model.clone(), &s, sim, q.clone(), cfg.train.decision_interval)?.0,
                    None => run_mixed(model.clone(), &s, sim, AlwaysGo, cfg.train.decision_interval)?.0,
                };
                Ok((penetration_label(p), summary_of(&world)?))
            };
            let rows: Vec<(String, MetricsSummary)> = if cfg.sweep {
                rates.par_iter().map(|&p| one(p)).collect::<Result<_, _>>()?
            } else {
                rates.iter().map(|&p| one(p)).collect::<Result<_, _>>()?
            };
            out.write("metrics.csv", &metrics_csv(&rows))?;
            let policy_name = if policy.is_some() { "trained policy" } else { "always-go policy" };
            writeln!(text, "penetration sweep with the {policy_name}:").unwrap();
            for (label, m) in &rows {
                writeln!(text, "  {label}: avg wait {:.2} s, travel {:.2} s", m.avg_wait_time, m.avg_travel_time).unwrap();
            }
        }
        Mode::Train => {
            let s = assign_penetration(&scenario, cfg.penetration, cfg.seed)?;
            let tcfg = crate::learn::TrainConfig {
                seed: cfg.seed,
                ..cfg.train.clone()
            };
            let outcome = train(model.clone(), &s, sim, &tcfg)?;
            outcome.policy.save(&cfg.out.join("policy.bin"))?;
            out.report.files.push("policy.bin".into());
            out.write("train_curve.csv", &outcome.curve_csv())?;
            let eval = |p: f64, q: Option<&QPolicy>| -> Result<MetricsSummary, RunError> {
                let s = assign_penetration(&scenario, p, cfg.seed)?;
                let world = match q {
                    Some(q) => run_mixed(model.clone(), &s, sim, q.clone(), tcfg.decision_interval)?.0,
                    None => run_mixed(model.clone(), &s, sim, AlwaysGo, tcfg.decision_interval)?.0,
                };
                summary_of(&world)
            };
            let base = eval(0.0, None)?;
            let trained = eval(cfg.penetration, Some(&outcome.policy))?;
            out.write(
                "metrics.csv",
                &metrics_csv(&[
                    (penetration_label(0.0), base),
                    (format!("trained {}", penetration_label(cfg.penetration)), trained),
                ]),
            )?;
            writeln!(
                text,
                "trained {} iterations; avg wait {:.2} s at p=0 vs {:.2} s with the policy at p={:.2}",
                tcfg.iterations, base.avg_wait_time, trained.avg_wait_time, cfg.penetration
            )
            .unwrap();
        }
    }
    if trajectory.is_some() && matches!(cfg.mode, Mode::Replay | Mode::Signalized) {
        out.report.files.push("trajectory.csv".into());
    }
    out.report.text = text;
    Ok(out.report)
}
