use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{reward, LearnError, Mlp, Observation, RewardConfig, TrainConfig, OBS_DIM};
use crate::control::{DecisionContext, MixedController, RvCommand, RvPolicy, ZoneStats};
use crate::demand::Scenario;
use crate::dynamics::{SimConfig, World};
use crate::metrics::{summarize, MetricsSummary};
use crate::net::IntersectionModel;

pub const CURVE_CSV_HEADER: &str = "iteration,episode_return,loss,epsilon";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
}

/// Fixed-capacity ring of transitions sampled uniformly.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Experience>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            data: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, e: Experience) {
        if self.data.len() < self.capacity {
            self.data.push(e);
        } else {
            self.data[self.next] = e;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<Experience> {
        (0..n).map(|_| self.data[rng.random_range(0..self.data.len())]).collect()
    }
}

fn batch_matrix(obs: &[Observation]) -> Array2<f64> {
    Array2::from_shape_fn((obs.len(), OBS_DIM), |(r, c)| obs[r][c])
}

fn argmax(q: &[f64]) -> usize {
    // Ties go to the last action so an untrained zero network says Go.
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v >= q[best] {
            best = i;
        }
    }
    best
}

/// Greedy Stop/Go policy backed by a value network.
#[derive(Debug, Clone, PartialEq)]
pub struct QPolicy {
    net: Mlp,
}

impl QPolicy {
    pub fn new(net: Mlp) -> Self {
        QPolicy { net }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn q_values(&self, obs: &Observation) -> [f64; 2] {
        let q = self.net.forward(batch_matrix(std::slice::from_ref(obs)).view());
        [q[[0, 0]], q[[0, 1]]]
    }

    pub fn greedy(&self, obs: &Observation) -> RvCommand {
        RvCommand::from_index(argmax(&self.q_values(obs)))
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.net.write_to(f)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<QPolicy, LearnError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let net = Mlp::read_from(f)?;
        let sizes = net.sizes();
        if sizes[0] != OBS_DIM || *sizes.last().expect("non-empty") != 2 {
            return Err(LearnError::BadPolicyFile(format!("expected {OBS_DIM} inputs and 2 outputs, got {sizes:?}")));
        }
        Ok(QPolicy { net })
    }
}

fn greedy_batch(net: &Mlp, obs: &[Observation]) -> Vec<usize> {
    let q = net.forward(batch_matrix(obs).view());
    q.rows().into_iter().map(|r| argmax(r.as_slice().expect("standard layout"))).collect()
}

impl RvPolicy for QPolicy {
    fn act(&mut self, _: &DecisionContext, obs: &Observation) -> RvCommand {
        self.greedy(obs)
    }

    fn act_batch(&mut self, _: &[DecisionContext], obs: &[Observation]) -> Vec<RvCommand> {
        greedy_batch(&self.net, obs).into_iter().map(RvCommand::from_index).collect()
    }
}

/// Exploring policy that records one transition per pair of consecutive
/// decisions of each vehicle.
pub struct EpsilonGreedy<'a> {
    net: &'a Mlp,
    epsilon: f64,
    rng: ChaCha8Rng,
    reward: RewardConfig,
    open: BTreeMap<u64, (Observation, usize, ZoneStats)>,
    pub transitions: Vec<Experience>,
}

impl<'a> EpsilonGreedy<'a> {
    pub fn new(net: &'a Mlp, epsilon: f64, seed: u64, reward: RewardConfig) -> Self {
        EpsilonGreedy {
            net,
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
            reward,
            open: BTreeMap::new(),
            transitions: Vec::new(),
        }
    }

    pub fn episode_return(&self) -> f64 {
        self.transitions.iter().map(|e| e.reward).sum()
    }
}

impl RvPolicy for EpsilonGreedy<'_> {
    fn act(&mut self, ctx: &DecisionContext, obs: &Observation) -> RvCommand {
        self.act_batch(std::slice::from_ref(ctx), std::slice::from_ref(obs))[0]
    }

    fn act_batch(&mut self, ctxs: &[DecisionContext], obs: &[Observation]) -> Vec<RvCommand> {
        let greedy = greedy_batch(self.net, obs);
        let mut out = Vec::with_capacity(obs.len());
        for ((ctx, o), g) in ctxs.iter().zip(obs).zip(greedy) {
            let a = if self.rng.random::<f64>() < self.epsilon {
                self.rng.random_range(0..2)
            } else {
                g
            };
            if let Some((prev, pa, stats)) = self.open.insert(ctx.vehicle_id, (*o, a, ctx.stats)) {
                self.transitions.push(Experience {
                    obs: prev,
                    action: pa,
                    reward: reward(&stats, &ctx.stats, &self.reward),
                    next_obs: *o,
                    done: false,
                });
            }
            out.push(RvCommand::from_index(a));
        }
        out
    }

    fn on_leave(&mut self, ctx: &DecisionContext) {
        if let Some((prev, pa, stats)) = self.open.remove(&ctx.vehicle_id) {
            self.transitions.push(Experience {
                obs: prev,
                action: pa,
                reward: reward(&stats, &ctx.stats, &self.reward),
                next_obs: prev,
                done: true,
            });
        }
    }
}

/// Runs a mixed-traffic episode to completion and returns the final
/// world and the policy.
pub fn run_mixed<P: RvPolicy>(
    model: Arc<IntersectionModel>,
    scenario: &Scenario,
    sim: SimConfig,
    policy: P,
    decision_interval: f64,
) -> Result<(World, P), LearnError> {
    let mut world = World::new(model, scenario, sim)?;
    let zone = sim.rv_zone;
    let mut ctl = MixedController::new(policy, decision_interval, zone);
    world.run(&mut ctl)?;
    ctl.finish(&world);
    Ok((world, ctl.into_policy()))
}

/// Greedy rollout with a one-second decision interval.
pub fn evaluate(
    policy: &QPolicy,
    model: Arc<IntersectionModel>,
    scenario: &Scenario,
    sim: SimConfig,
) -> Result<MetricsSummary, LearnError> {
    let (world, _) = run_mixed(model, scenario, sim, policy.clone(), 1.0)?;
    Ok(summarize(&world.trip_log(), world.co2_total(), world.step_index())?)
}

/// Double-DQN regression targets: the online network picks the next
/// action, the target network values it.
pub fn td_targets(online: &Mlp, target: &Mlp, batch: &[Experience], discount: f64) -> Vec<f64> {
    let next: Vec<Observation> = batch.iter().map(|e| e.next_obs).collect();
    let x = batch_matrix(&next);
    let pick = online.forward(x.view());
    let value = target.forward(x.view());
    batch
        .iter()
        .enumerate()
        .map(|(k, e)| {
            if e.done || discount == 0.0 {
                e.reward
            } else {
                let a = argmax(pick.row(k).as_slice().expect("standard layout"));
                e.reward + discount * value[[k, a]]
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub episode_return: f64,
    /// Mean minibatch loss, absent before learning starts.
    pub loss: Option<f64>,
    pub epsilon: f64,
}

impl CurvePoint {
    pub fn csv_row(&self) -> String {
        let loss = self.loss.map(|l| format!("{l:.6}")).unwrap_or_default();
        format!("{},{:.6},{},{:.4}", self.iteration, self.episode_return, loss, self.epsilon)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: QPolicy,
    pub curve: Vec<CurvePoint>,
}

impl TrainOutcome {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from(CURVE_CSV_HEADER);
        s.push('\n');
        for p in &self.curve {
            s.push_str(&p.csv_row());
            s.push('\n');
        }
        s
    }
}

/// A window of `len` seconds starting at a random tenth of a second,
/// shifted to start at zero.
fn episode_window(s: &Scenario, len: f64, rng: &mut ChaCha8Rng) -> Scenario {
    let slack = ((s.duration - len) * 10.0).floor() as i64;
    if slack <= 0 {
        return s.truncated(len);
    }
    let offset = rng.random_range(0..=slack) as f64 / 10.0;
    let mut out = s.clone();
    out.records = s
        .records
        .iter()
        .filter(|r| r.entry_time >= offset && r.entry_time < offset + len)
        .map(|r| {
            let mut r = r.clone();
            r.entry_time = crate::demand::io_quantize(r.entry_time - offset);
            r
        })
        .collect();
    out.duration = len;
    out
}

fn learn_step(
    online: &mut Mlp,
    target: &Mlp,
    opt: &mut super::Adam,
    batch: &[Experience],
    cfg: &TrainConfig,
) -> f64 {
    let y = td_targets(online, target, batch, cfg.discount);
    let obs: Vec<Observation> = batch.iter().map(|e| e.obs).collect();
    let cache = online.forward_cached(batch_matrix(&obs).view());
    let q = cache.output();
    let n = batch.len() as f64;
    let mut d = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for (k, e) in batch.iter().enumerate() {
        let err = q[[k, e.action]] - y[k];
        loss += err * err / n;
        d[[k, e.action]] = 2.0 * err / n;
    }
    let mut g = online.backward(&cache, &d);
    if cfg.max_grad_norm > 0.0 {
        let norm = g.norm();
        if norm > cfg.max_grad_norm {
            g.scale(cfg.max_grad_norm / norm);
        }
    }
    opt.step(online, &g);
    loss
}

/// Trains the shared Stop/Go value network on episodes drawn from
/// `scenario`, whose robot vehicles are already assigned.
pub fn train(
    model: Arc<IntersectionModel>,
    scenario: &Scenario,
    sim: SimConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, LearnError> {
    cfg.validate()?;
    sim.validate()?;
    if scenario.rv_count() == 0 {
        return Err(LearnError::NoRobots);
    }
    let mut online = Mlp::new(&cfg.layer_sizes(), cfg.seed);
    let mut target = online.clone();
    let mut opt = super::Adam::new(&online, cfg.learning_rate);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d9a7);
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut last_loss = f64::NAN;
    let episode_sim = SimConfig {
        duration: cfg.episode_duration,
        ..sim
    };

    for it in 0..cfg.iterations {
        let eps = cfg.epsilon(it);
        let episode = episode_window(scenario, cfg.episode_duration, &mut rng);
        let explorer = EpsilonGreedy::new(&online, eps, rng.random(), cfg.reward);
        let (_, explorer) = run_mixed(model.clone(), &episode, episode_sim, explorer, cfg.decision_interval)?;
        let episode_return = explorer.episode_return();
        for e in explorer.transitions {
            if e.obs.iter().chain(&e.next_obs).all(|x| x.is_finite()) && e.reward.is_finite() {
                buffer.push(e);
            }
        }

        let mut loss = None;
        if buffer.len() >= cfg.warmup.max(cfg.batch_size) {
            let mut total = 0.0;
            for _ in 0..cfg.updates_per_iteration {
                let batch = buffer.sample(&mut rng, cfg.batch_size);
                let l = learn_step(&mut online, &target, &mut opt, &batch, cfg);
                if !l.is_finite() {
                    return Err(LearnError::DivergedLoss {
                        iteration: it,
                        last_loss,
                    });
                }
                last_loss = l;
                total += l;
            }
            if cfg.updates_per_iteration > 0 {
                loss = Some(total / cfg.updates_per_iteration as f64);
            }
        }
        if (it + 1) % cfg.target_sync == 0 {
            target = online.clone();
        }
        curve.push(CurvePoint {
            iteration: it,
            episode_return,
            loss,
            epsilon: eps,
        });
    }
    Ok(TrainOutcome {
        policy: QPolicy::new(online),
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(r: f64, done: bool) -> Experience {
        Experience {
            obs: [0.1; OBS_DIM],
            action: 1,
            reward: r,
            next_obs: [0.3; OBS_DIM],
            done,
        }
    }

    #[test]
    fn zero_discount_target_is_reward() {
        let a = Mlp::new(&[OBS_DIM, 16, 2], 1);
        let b = Mlp::new(&[OBS_DIM, 16, 2], 2);
        let y = td_targets(&a, &b, &[exp(0.7, false), exp(-1.5, false)], 0.0);
        assert_eq!(y, vec![0.7, -1.5]);
        let y = td_targets(&a, &b, &[exp(0.7, true)], 0.99);
        assert_eq!(y, vec![0.7]);
    }

    #[test]
    fn buffer_wraps() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(exp(k as f64, false));
        }
        assert_eq!(b.len(), 3);
        let mut rewards: Vec<f64> = b.data.iter().map(|e| e.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_network_says_go() {
        let p = QPolicy::new(Mlp::zeros(&[OBS_DIM, 4, 2]));
        assert_eq!(p.greedy(&[0.0; OBS_DIM]), RvCommand::Go);
    }
}
