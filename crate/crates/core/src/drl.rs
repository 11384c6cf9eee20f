//! DQN over joint phase configurations with a fixed channel per run.
//!
//! Each step is a one-step episode: the agent picks a configuration, gets the
//! sum-rate normalized by the best sum-rate seen so far, and the episode ends.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{argmax, huber, huber_grad, Activations, Adam, Gradients, Mlp, ReplayBuffer, Transition};
use crate::sysmodel::{ChannelRealization, PhaseConfig, RateObjective, SystemConfig};

/// Per-user, per-group cascade statistics: magnitude and phase of
/// `c_k0^H c_kg / |c_k0|`, i.e. each group's channel projected on group 0.
/// Ordered user-major, `[|z|, arg z]` per group; length 2·G·K.
pub fn raw_channel_features(objective: &RateObjective) -> Vec<f64> {
    let (k_users, groups) = (objective.k_users(), objective.groups());
    let mut out = Vec::with_capacity(2 * groups * k_users);
    for k in 0..k_users {
        let reference = objective.cascade(k, 0);
        let norm = reference.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for g in 0..groups {
            let z: num_complex::Complex<f64> = reference
                .iter()
                .zip(objective.cascade(k, g))
                .map(|(r, c)| r.conj() * c)
                .sum();
            let z = if norm > 0.0 { z / norm } else { z };
            out.push(z.norm());
            out.push(z.arg());
        }
    }
    out
}

/// Zero-mean, unit-variance rescaling of one vector (no-op on constant input).
pub fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    values.iter_mut().for_each(|v| *v = (*v - mean) / scale);
}

/// Bandit environment over the cross product of per-group phase subsets.
#[derive(Debug, Clone)]
pub struct PhaseEnv {
    objective: RateObjective,
    /// `allowed[g]`: phase indices available to group g, ascending.
    allowed: Vec<Vec<usize>>,
    features: Vec<f64>,
    reward_scale: f64,
    previous: Option<usize>,
}

impl PhaseEnv {
    /// Environment over the full `L^G` space.
    pub fn new(real: &ChannelRealization, cfg: &SystemConfig) -> Result<Self> {
        let all = (0..cfg.levels()).collect::<Vec<_>>();
        Self::with_allowed(RateObjective::new(real, cfg)?, vec![all; cfg.groups()])
    }

    pub fn with_allowed(objective: RateObjective, mut allowed: Vec<Vec<usize>>) -> Result<Self> {
        if allowed.len() != objective.groups() {
            return Err(Error::DimensionMismatch(format!(
                "{} phase subsets for {} groups",
                allowed.len(),
                objective.groups()
            )));
        }
        for subset in &mut allowed {
            subset.sort_unstable();
            subset.dedup();
            if subset.is_empty() || subset.iter().any(|&q| q >= objective.levels()) {
                return Err(Error::InvalidConfig(format!("bad phase subset {subset:?}")));
            }
        }
        let size = allowed.iter().try_fold(1usize, |acc, s| acc.checked_mul(s.len()));
        if size.is_none_or(|s| s > 1 << 20) {
            return Err(Error::SpaceTooLarge {
                size: allowed.iter().map(|s| s.len() as u128).product(),
                cap: 1 << 20,
            });
        }
        let mut features = raw_channel_features(&objective);
        standardize(&mut features);
        Ok(Self {
            objective,
            allowed,
            features,
            reward_scale: 0.0,
            previous: None,
        })
    }

    pub fn objective(&self) -> &RateObjective {
        &self.objective
    }

    pub fn allowed(&self) -> &[Vec<usize>] {
        &self.allowed
    }

    pub fn action_count(&self) -> usize {
        self.allowed.iter().map(Vec::len).product()
    }

    pub fn state_len(&self) -> usize {
        self.features.len() + self.action_count()
    }

    pub fn reward_scale(&self) -> f64 {
        self.reward_scale
    }

    /// Joint action index to configuration; the first group is the most
    /// significant digit, so indices follow lexicographic config order.
    pub fn action_config(&self, index: usize) -> Result<PhaseConfig> {
        let len = self.action_count();
        if index >= len {
            return Err(Error::ActionOutOfRange { index, len });
        }
        let mut rest = index;
        let mut out = vec![0; self.allowed.len()];
        for (g, subset) in self.allowed.iter().enumerate().rev() {
            out[g] = subset[rest % subset.len()];
            rest /= subset.len();
        }
        PhaseConfig::new(out, self.objective.levels())
    }

    /// Inverse of [`Self::action_config`]; `None` if some phase is not allowed.
    pub fn action_index(&self, config: &[usize]) -> Option<usize> {
        if config.len() != self.allowed.len() {
            return None;
        }
        let mut index = 0;
        for (subset, q) in self.allowed.iter().zip(config) {
            index = index * subset.len() + subset.binary_search(q).ok()?;
        }
        Some(index)
    }

    /// Sum-rate of an action, without touching the reward scale.
    pub fn action_value(&self, index: usize) -> Result<f64> {
        Ok(self.objective.value(self.action_config(index)?.indices()))
    }

    /// Channel features followed by the one-hot of the previous action.
    pub fn state(&self) -> Vec<f64> {
        self.state_after(self.previous)
    }

    fn state_after(&self, previous: Option<usize>) -> Vec<f64> {
        let mut s = self.features.clone();
        let offset = s.len();
        s.resize(offset + self.action_count(), 0.0);
        if let Some(a) = previous {
            s[offset + a] = 1.0;
        }
        s
    }

    /// Plays one action and returns the next state, the normalized reward and
    /// the raw sum-rate.
    pub fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, f64)> {
        let rate = self.action_value(action)?;
        self.reward_scale = self.reward_scale.max(rate);
        self.previous = Some(action);
        let reward = if self.reward_scale > 0.0 { rate / self.reward_scale } else { 0.0 };
        Ok((self.state(), reward, rate))
    }

    pub fn normalize(&self, rate: f64) -> f64 {
        if self.reward_scale > 0.0 {
            rate / self.reward_scale
        } else {
            0.0
        }
    }
}

/// `(next_state, normalized reward)` for one action.
pub fn env_step(env: &mut PhaseEnv, action: usize) -> Result<(Vec<f64>, f64)> {
    env.step(action).map(|(s, r, _)| (s, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub buffer_capacity: usize,
    pub batch: usize,
    pub lr: f64,
    pub target_sync_period: usize,
    pub learn_start: usize,
    pub huber_delta: f64,
    /// Replace uniform exploration with a one-scan local search from the
    /// greedy action.
    pub heuristic_exploration: bool,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 4000,
            buffer_capacity: 5000,
            batch: 32,
            lr: 1e-3,
            target_sync_period: 100,
            learn_start: 64,
            huber_delta: 1.0,
            heuristic_exploration: false,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0 <= self.epsilon_end && self.epsilon_end <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return bad("epsilon schedule must satisfy 0 <= end <= start <= 1");
        }
        if self.batch == 0 || self.buffer_capacity < self.batch {
            return bad("batch must be positive and fit in the buffer");
        }
        if self.target_sync_period == 0 {
            return bad("target sync period must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.huber_delta > 0.0) {
            return bad("learning rate and Huber delta must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        Ok(())
    }

    /// Linear decay from start to end over `epsilon_decay_steps`.
    pub fn epsilon(&self, step: usize) -> f64 {
        if self.epsilon_decay_steps == 0 {
            return self.epsilon_end;
        }
        let frac = (step as f64 / self.epsilon_decay_steps as f64).min(1.0);
        self.epsilon_start * (1.0 - frac) + self.epsilon_end * frac
    }
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: Adam,
    pub buffer: ReplayBuffer,
    pub cfg: DqnConfig,
    updates: usize,
    acts: Activations,
    grads: Option<Gradients>,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(state_len: usize, actions: usize, cfg: DqnConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut sizes = vec![state_len];
        sizes.extend(&cfg.hidden);
        sizes.push(actions);
        let online = Mlp::new(&sizes, rng)?;
        let target = online.clone();
        let optimizer = Adam::new(&online, cfg.lr);
        let buffer = ReplayBuffer::new(cfg.buffer_capacity);
        Ok(Self {
            online,
            target,
            optimizer,
            buffer,
            cfg,
            updates: 0,
            acts: Activations::default(),
            grads: None,
        })
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.online.forward(state)
    }

    pub fn greedy_action(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(state)?))
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }
}

/// One minibatch TD step. Stored rewards are raw sum-rates and are normalized
/// by the environment's current running max at update time. Returns `None`
/// without learning while the buffer is below `learn_start` or the batch.
pub fn dqn_update<R: Rng + ?Sized>(agent: &mut DqnAgent, env: &PhaseEnv, rng: &mut R) -> Result<Option<f64>> {
    let need = agent.cfg.learn_start.max(agent.cfg.batch);
    if agent.buffer.len() < need {
        return Ok(None);
    }
    let batch = agent.buffer.sample_indices(agent.cfg.batch, rng)?;
    let mut grads = agent.grads.take().unwrap_or_else(|| Gradients::zeros_like(&agent.online));
    grads.clear();
    let (gamma, delta) = (agent.cfg.gamma, agent.cfg.huber_delta);
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut out_grad = vec![0.0; agent.online.output_size()];
    for i in batch {
        let t = agent.buffer.get(i);
        let mut target = env.normalize(t.reward);
        if !t.terminal && gamma > 0.0 {
            target += gamma * agent.target.forward(&t.next_state)?.into_iter().fold(f64::NEG_INFINITY, f64::max);
        }
        agent.online.forward_into(&t.state, &mut agent.acts);
        let err = agent.acts.output()[t.action] - target;
        loss += huber(err, delta) / n;
        out_grad.fill(0.0);
        out_grad[t.action] = huber_grad(err, delta) / n;
        agent.online.accumulate_gradients(&agent.acts, &out_grad, &mut grads)?;
    }
    agent.optimizer.step(&mut agent.online, &grads)?;
    agent.grads = Some(grads);
    agent.updates += 1;
    if agent.updates % agent.cfg.target_sync_period == 0 {
        agent.sync_target();
    }
    Ok(Some(loss))
}

/// Best single-group move from `start` within the allowed subsets, or `start`
/// itself if it is already 1-opt. One neighborhood scan, no iteration.
pub fn heuristic_explore(env: &PhaseEnv, start: usize) -> Result<usize> {
    let config = env.action_config(start)?;
    let mut best = (start, env.objective.value(config.indices()));
    let mut trial = config.indices().to_vec();
    for (g, subset) in env.allowed.iter().enumerate() {
        for &q in subset.iter().filter(|&&q| q != config.indices()[g]) {
            trial[g] = q;
            let v = env.objective.value(&trial);
            if v > best.1 {
                best = (env.action_index(&trial).expect("phase drawn from the subset"), v);
            }
        }
        trial[g] = config.indices()[g];
    }
    Ok(best.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Normalized reward received at each iteration.
    pub reward: Vec<f64>,
    /// Raw sum-rate of the action played.
    pub sum_rate: Vec<f64>,
    /// Best raw sum-rate played so far.
    pub best_so_far: Vec<f64>,
    pub epsilon: Vec<f64>,
    /// Whether the action came from the exploration branch.
    pub explored: Vec<bool>,
    pub duration: Duration,
    pub final_action: usize,
    pub final_config: PhaseConfig,
    pub final_sum_rate: f64,
}

impl TrainLog {
    pub fn iterations(&self) -> usize {
        self.reward.len()
    }

    /// Equality of everything except wall-clock.
    pub fn same_run(&self, other: &TrainLog) -> bool {
        let mut a = self.clone();
        a.duration = other.duration;
        a == *other
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,reward,best_so_far,epsilon,sum_rate")?;
        for i in 0..self.iterations() {
            writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                self.reward[i],
                self.best_so_far[i],
                self.epsilon[i],
                self.sum_rate[i]
            )?;
        }
        Ok(())
    }
}

/// Epsilon-greedy training loop; the final policy is the greedy action at the
/// last state.
pub fn dqn_train<R: Rng + ?Sized>(env: &mut PhaseEnv, cfg: &DqnConfig, iterations: usize, rng: &mut R) -> Result<TrainLog> {
    if iterations == 0 {
        return Err(Error::InvalidConfig("iterations must be at least 1".into()));
    }
    let started = Instant::now();
    let mut agent = DqnAgent::new(env.state_len(), env.action_count(), cfg.clone(), rng)?;
    let mut log = TrainLog {
        reward: Vec::with_capacity(iterations),
        sum_rate: Vec::with_capacity(iterations),
        best_so_far: Vec::with_capacity(iterations),
        epsilon: Vec::with_capacity(iterations),
        explored: Vec::with_capacity(iterations),
        duration: Duration::ZERO,
        final_action: 0,
        final_config: PhaseConfig::zeros(env.allowed.len()),
        final_sum_rate: 0.0,
    };
    let mut best = f64::NEG_INFINITY;
    let mut state = env.state();
    for step in 0..iterations {
        let eps = cfg.epsilon(step);
        let explore = rng.random::<f64>() < eps;
        let action = if !explore {
            agent.greedy_action(&state)?
        } else if cfg.heuristic_exploration {
            heuristic_explore(env, agent.greedy_action(&state)?)?
        } else {
            rng.random_range(0..env.action_count())
        };
        let (next_state, reward, rate) = env.step(action)?;
        agent.buffer.push(Transition {
            state: std::mem::replace(&mut state, next_state.clone()),
            action,
            reward: rate,
            next_state,
            terminal: true,
        });
        dqn_update(&mut agent, env, rng)?;
        best = best.max(rate);
        log.reward.push(reward);
        log.sum_rate.push(rate);
        log.best_so_far.push(best);
        log.epsilon.push(eps);
        log.explored.push(explore);
    }
    log.final_action = agent.greedy_action(&state)?;
    log.final_config = env.action_config(log.final_action)?;
    log.final_sum_rate = env.action_value(log.final_action)?;
    log.duration = started.elapsed();
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::tests::instance;
    use crate::search::{exhaustive_search, random_search};
    use crate::seeded_rng;
    use crate::sysmodel::sample_channels;

    fn env(groups: usize, seed: u64) -> PhaseEnv {
        let cfg = SystemConfig::default().with_elements(groups * 10);
        let real = sample_channels(&cfg, &mut seeded_rng(seed)).unwrap();
        PhaseEnv::new(&real, &cfg).unwrap()
    }

    /// Two arms: the second group in phase or opposed to the first. A single
    /// group would not do, the sum-rate ignores a common phase.
    fn two_action_env(seed: u64) -> PhaseEnv {
        let obj = instance(2, seed);
        PhaseEnv::with_allowed(obj, vec![vec![0], vec![0, 2]]).unwrap()
    }

    #[test]
    fn state_length_at_default() {
        let e = env(4, 0);
        assert_eq!(e.action_count(), 256);
        assert_eq!(e.state().len(), 296);
    }

    #[test]
    fn index_round_trip() {
        let obj = instance(3, 1);
        let e = PhaseEnv::with_allowed(obj, vec![vec![1, 3], vec![0, 1, 2, 3], vec![2]]).unwrap();
        assert_eq!(e.action_count(), 8);
        for i in 0..8 {
            let c = e.action_config(i).unwrap();
            assert_eq!(e.action_index(c.indices()), Some(i));
        }
        assert_eq!(e.action_config(0).unwrap().indices(), &[1, 0, 2]);
        assert_eq!(e.action_config(7).unwrap().indices(), &[3, 3, 2]);
        assert!(matches!(e.action_config(8), Err(Error::ActionOutOfRange { index: 8, len: 8 })));
        assert_eq!(e.action_index(&[0, 0, 2]), None);
    }

    #[test]
    fn full_env_matches_lexicographic_index() {
        let e = env(2, 3);
        for i in 0..16 {
            assert_eq!(e.action_config(i).unwrap(), PhaseConfig::from_index(i, 2, 4));
        }
    }

    #[test]
    fn same_action_same_reward_and_optimum_scores_one() {
        let mut e = env(2, 4);
        let best = exhaustive_search(e.objective()).unwrap();
        let opt = e.action_index(best.best_config.indices()).unwrap();
        let (_, r1) = env_step(&mut e, 5).unwrap();
        let (_, r2) = env_step(&mut e, 5).unwrap();
        assert_eq!(r1, r2);
        let (_, r) = env_step(&mut e, opt).unwrap();
        assert_eq!(r, 1.0);
        let (s, _) = env_step(&mut e, 5).unwrap();
        assert_eq!(&s[s.len() - 16..].iter().position(|&x| x == 1.0), &Some(5));
    }

    #[test]
    fn out_of_range_action_is_rejected() {
        let mut e = env(2, 0);
        assert!(matches!(env_step(&mut e, 16), Err(Error::ActionOutOfRange { .. })));
    }

    #[test]
    fn features_are_standardized() {
        let e = env(4, 2);
        let f = &e.state()[..40];
        let mean = f.iter().sum::<f64>() / 40.0;
        let var = f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 40.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn epsilon_schedule() {
        let c = DqnConfig::default();
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(2000) - 0.525).abs() < 1e-12);
        assert_eq!(c.epsilon(4000), 0.05);
        assert_eq!(c.epsilon(9000), 0.05);
    }

    #[test]
    fn underfull_buffer_skips_learning() {
        let e = env(2, 0);
        let mut rng = seeded_rng(0);
        let mut agent = DqnAgent::new(e.state_len(), 16, DqnConfig::default(), &mut rng).unwrap();
        let before = agent.online.clone();
        assert_eq!(dqn_update(&mut agent, &e, &mut rng).unwrap(), None);
        assert_eq!(agent.online, before);
    }

    #[test]
    fn converged_bandit_has_zero_loss() {
        // gamma = 0 and terminal steps: the target is the reward, so a network
        // whose output bias equals the reward has zero TD error.
        let mut e = two_action_env(0);
        let (_, r, rate) = e.step(1).unwrap();
        assert_eq!(r, 1.0);
        let cfg = DqnConfig {
            gamma: 0.0,
            hidden: vec![],
            batch: 4,
            learn_start: 4,
            ..DqnConfig::default()
        };
        let mut rng = seeded_rng(1);
        let mut agent = DqnAgent::new(e.state_len(), 2, cfg, &mut rng).unwrap();
        let sizes = agent.online.layer_sizes();
        agent.online = Mlp::from_parts(&sizes, vec![vec![0.0; sizes[0] * 2]], vec![vec![0.0, 1.0]]).unwrap();
        for _ in 0..4 {
            agent.buffer.push(Transition {
                state: e.state(),
                action: 1,
                reward: rate,
                next_state: e.state(),
                terminal: true,
            });
        }
        let loss = dqn_update(&mut agent, &e, &mut rng).unwrap().unwrap();
        assert!(loss < 1e-6, "loss {loss}");
    }

    #[test]
    fn target_sync_is_bit_identical() {
        let mut e = env(2, 0);
        let cfg = DqnConfig {
            target_sync_period: 3,
            learn_start: 32,
            ..DqnConfig::default()
        };
        let mut rng = seeded_rng(2);
        let mut agent = DqnAgent::new(e.state_len(), 16, cfg, &mut rng).unwrap();
        for a in 0..40 {
            let state = e.state();
            let (next, _, rate) = e.step(a % 16).unwrap();
            agent.buffer.push(Transition {
                state,
                action: a % 16,
                reward: rate,
                next_state: next,
                terminal: true,
            });
        }
        for i in 1..=6 {
            dqn_update(&mut agent, &e, &mut rng).unwrap().unwrap();
            if i % 3 == 0 {
                assert_eq!(agent.online.params(), agent.target.params());
            } else {
                assert_ne!(agent.online.params(), agent.target.params());
            }
        }
    }

    #[test]
    fn toy_two_action_bandit_learns_the_better_arm() {
        // Rewards are normalized by the running max, so the better arm scores
        // 1.0 and the other its rate ratio.
        let mut wins = 0;
        for seed in 0..20 {
            let mut e = two_action_env(seed);
            let better = if e.action_value(1).unwrap() > e.action_value(0).unwrap() { 1 } else { 0 };
            let log = dqn_train(&mut e, &DqnConfig::default(), 2000, &mut seeded_rng(seed)).unwrap();
            wins += (log.final_action == better) as usize;
        }
        assert!(wins >= 19, "{wins}/20");
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut e = env(2, 5);
            dqn_train(&mut e, &DqnConfig::default(), 300, &mut seeded_rng(9)).unwrap()
        };
        let (a, b) = (run(), run());
        assert!(a.same_run(&b));
        assert_eq!(a.iterations(), 300);
        assert!(a.best_so_far.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_action_scores_one() {
        let obj = instance(2, 0);
        let mut e = PhaseEnv::with_allowed(obj, vec![vec![2], vec![1]]).unwrap();
        let log = dqn_train(&mut e, &DqnConfig::default(), 100, &mut seeded_rng(0)).unwrap();
        assert!(log.reward.iter().all(|&r| r == 1.0));
        assert_eq!(log.final_action, 0);
        assert_eq!(log.final_config.indices(), &[2, 1]);
    }

    #[test]
    fn pure_exploration_matches_random_search() {
        // epsilon pinned at 1 is uniform sampling; compare mean best-so-far at
        // the end of a 200-step budget over 20 seeds against random search.
        let cfg = DqnConfig {
            epsilon_start: 1.0,
            epsilon_end: 1.0,
            ..DqnConfig::default()
        };
        let (mut dqn, mut rnd) = (Vec::new(), Vec::new());
        for seed in 0..20 {
            let mut e = env(3, seed);
            let opt = exhaustive_search(e.objective()).unwrap().best_value;
            let log = dqn_train(&mut e, &cfg, 200, &mut seeded_rng(100 + seed)).unwrap();
            dqn.push(log.best_so_far[199] / opt);
            let r = random_search(e.objective(), 200, &mut seeded_rng(200 + seed)).unwrap();
            rnd.push(r.best_value / opt);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let diffs: Vec<f64> = dqn.iter().zip(&rnd).map(|(a, b)| a - b).collect();
        let d = mean(&diffs);
        let sd = (diffs.iter().map(|x| (x - d).powi(2)).sum::<f64>() / 19.0).sqrt();
        // Paired t statistic well inside a 99% band.
        let t = d / (sd / 20f64.sqrt()).max(1e-12);
        assert!(t.abs() < 2.86, "t = {t}, mean diff {d}");
    }

    #[test]
    fn heuristic_explore_keeps_local_optimum() {
        let e = env(3, 7);
        let obj = e.objective().clone();
        let local = crate::search::local_search(&obj, &PhaseConfig::zeros(3)).unwrap();
        let idx = e.action_index(local.best_config.indices()).unwrap();
        assert_eq!(heuristic_explore(&e, idx).unwrap(), idx);
        let single = PhaseEnv::with_allowed(obj, vec![vec![1], vec![0], vec![3]]).unwrap();
        assert_eq!(heuristic_explore(&single, 0).unwrap(), 0);
    }

    #[test]
    fn csv_has_one_row_per_iteration() {
        let mut e = env(2, 0);
        let log = dqn_train(&mut e, &DqnConfig::default(), 50, &mut seeded_rng(0)).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 51);
        assert!(text.starts_with("iteration,reward,best_so_far,epsilon,sum_rate\n1,"));
    }
}
