//! Two-timescale control: a tabular Q-learning meta-controller picks the
//! transmit power level every `delta_steps` slots, and greedy phase search
//! runs in every slot on a freshly drawn channel.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::search::{default_order, greedy_fixed_sweeps};
use crate::sysmodel::{dbm_to_watts, sample_channels, PhaseConfig, RateObjective, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearningRate {
    Constant(f64),
    /// `1 / n(s, a)` on the n-th update of a pair: a running mean.
    InverseCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchicalConfig {
    /// Slots per meta decision.
    pub delta_steps: usize,
    /// Number of meta decisions.
    pub horizon: usize,
    pub power_levels_dbm: Vec<f64>,
    /// Reward penalty per watt, bits/s/Hz.
    pub power_weight: f64,
    pub greedy_sweeps: usize,
    pub lr: LearningRate,
    pub epsilon: f64,
    pub gamma: f64,
    pub rate_buckets: usize,
    /// Meta decisions with uniform power choices used to fix the bucket range.
    pub calibration_steps: usize,
}

impl Default for HierarchicalConfig {
    fn default() -> Self {
        Self {
            delta_steps: 10,
            horizon: 300,
            power_levels_dbm: vec![20.0, 30.0, 40.0],
            power_weight: 0.0,
            greedy_sweeps: 1,
            lr: LearningRate::InverseCount,
            epsilon: 0.1,
            gamma: 0.5,
            rate_buckets: 10,
            calibration_steps: 30,
        }
    }
}

impl HierarchicalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.delta_steps == 0 || self.horizon == 0 || self.greedy_sweeps == 0 || self.rate_buckets == 0 {
            return bad("slot count, horizon, sweeps and buckets must be positive");
        }
        // A single level is accepted: it reduces to a plain greedy loop.
        if self.power_levels_dbm.is_empty() || self.power_levels_dbm.iter().any(|p| !p.is_finite()) {
            return bad("at least one finite power level is needed");
        }
        if !(self.power_weight >= 0.0 && self.power_weight.is_finite()) {
            return bad("power weight must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.epsilon) || !(0.0..=1.0).contains(&self.gamma) {
            return bad("epsilon and gamma must lie in [0, 1]");
        }
        if let LearningRate::Constant(lr) = self.lr {
            if !(0.0..=1.0).contains(&lr) {
                return bad("learning rate must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Equal-width buckets over a calibrated range; values outside are clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBuckets {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl RateBuckets {
    pub fn bucket(&self, rate: f64) -> usize {
        if self.hi <= self.lo {
            return 0;
        }
        let pos = ((rate - self.lo) / (self.hi - self.lo) * self.count as f64).floor();
        pos.clamp(0.0, (self.count - 1) as f64) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaAgent {
    /// `q[state][action]`, state = bucket · |levels| + current level.
    pub q: Vec<Vec<f64>>,
    pub visits: Vec<Vec<usize>>,
    pub lr: LearningRate,
    pub epsilon: f64,
    pub gamma: f64,
}

impl MetaAgent {
    pub fn new(states: usize, actions: usize, lr: LearningRate, epsilon: f64, gamma: f64) -> Self {
        Self {
            q: vec![vec![0.0; actions]; states],
            visits: vec![vec![0; actions]; states],
            lr,
            epsilon,
            gamma,
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        if rng.random::<f64>() < self.epsilon {
            rng.random_range(0..self.q[state].len())
        } else {
            argmax(&self.q[state])
        }
    }

    /// Greedy action of the visit-weighted mean Q row over visited states.
    pub fn policy(&self) -> usize {
        let actions = self.q[0].len();
        let mut score = vec![0.0; actions];
        for (row, visits) in self.q.iter().zip(&self.visits) {
            let weight: usize = visits.iter().sum();
            for (s, q) in score.iter_mut().zip(row) {
                *s += weight as f64 * q;
            }
        }
        argmax(&score)
    }
}

/// `Q(s,a) += lr·(r + gamma·max Q(s',·) − Q(s,a))`.
pub fn meta_q_update(agent: &mut MetaAgent, state: usize, action: usize, reward: f64, next_state: usize) -> Result<()> {
    let (states, actions) = (agent.q.len(), agent.q[0].len());
    if state >= states || next_state >= states {
        return Err(Error::ActionOutOfRange {
            index: state.max(next_state),
            len: states,
        });
    }
    if action >= actions {
        return Err(Error::ActionOutOfRange { index: action, len: actions });
    }
    if !reward.is_finite() {
        return Err(Error::NonFinite("meta reward"));
    }
    agent.visits[state][action] += 1;
    let lr = match agent.lr {
        LearningRate::Constant(lr) => lr,
        LearningRate::InverseCount => 1.0 / agent.visits[state][action] as f64,
    };
    let future = agent.q[next_state].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let q = &mut agent.q[state][action];
    *q += lr * (reward + agent.gamma * future - *q);
    Ok(())
}

/// The heuristic sub-controller: one slot, a fresh channel, fixed-sweep greedy.
/// Returns the sum-rate and the number of objective evaluations.
pub fn sub_step<R: Rng + ?Sized>(cfg: &SystemConfig, power_w: f64, sweeps: usize, rng: &mut R) -> Result<(f64, usize)> {
    let real = sample_channels(cfg, rng)?;
    let obj = RateObjective::with_groups(&real, cfg.groups(), cfg.levels(), power_w, cfg.noise_w())?;
    let r = greedy_fixed_sweeps(&obj, &PhaseConfig::zeros(cfg.groups()), &default_order(cfg.groups()), sweeps)?;
    Ok((r.best_value, r.evaluations))
}

fn mean_rate<R: Rng + ?Sized>(cfg: &SystemConfig, h: &HierarchicalConfig, level: usize, rng: &mut R) -> Result<(f64, usize)> {
    let power = dbm_to_watts(h.power_levels_dbm[level]);
    let mut total = 0.0;
    let mut evals = 0;
    for _ in 0..h.delta_steps {
        let (rate, e) = sub_step(cfg, power, h.greedy_sweeps, rng)?;
        total += rate;
        evals += e;
    }
    Ok((total / h.delta_steps as f64, evals))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaStep {
    pub state: usize,
    pub level: usize,
    pub power_dbm: f64,
    pub mean_rate: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalLog {
    pub steps: Vec<MetaStep>,
    pub buckets: RateBuckets,
    pub agent: MetaAgent,
    /// Learned power level index.
    pub policy: usize,
    /// Objective evaluations spent in each slot; constant by construction.
    pub evaluations_per_slot: usize,
}

impl HierarchicalLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "meta_step,power_dbm,mean_rate,reward")?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(out, "{},{},{},{}", i + 1, s.power_dbm, s.mean_rate, s.reward)?;
        }
        Ok(())
    }
}

pub fn hierarchical_run<R: Rng + ?Sized>(cfg: &SystemConfig, h: &HierarchicalConfig, rng: &mut R) -> Result<HierarchicalLog> {
    cfg.validate()?;
    h.validate()?;
    let levels = h.power_levels_dbm.len();
    let per_slot = cfg.groups() * cfg.levels() * h.greedy_sweeps;

    // Bucket range from a short run with uniform power choices.
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..h.calibration_steps {
        let (rate, _) = mean_rate(cfg, h, rng.random_range(0..levels), rng)?;
        lo = lo.min(rate);
        hi = hi.max(rate);
    }
    let buckets = RateBuckets {
        lo: if lo.is_finite() { lo } else { 0.0 },
        hi: if hi.is_finite() { hi } else { 0.0 },
        count: h.rate_buckets,
    };

    let mut agent = MetaAgent::new(h.rate_buckets * levels, levels, h.lr, h.epsilon, h.gamma);
    let mut state = 0;
    let mut steps = Vec::with_capacity(h.horizon);
    for _ in 0..h.horizon {
        let level = agent.act(state, rng);
        let (rate, evals) = mean_rate(cfg, h, level, rng)?;
        debug_assert_eq!(evals, per_slot * h.delta_steps);
        let power_w = dbm_to_watts(h.power_levels_dbm[level]);
        let reward = rate - h.power_weight * power_w;
        let next = buckets.bucket(rate) * levels + level;
        meta_q_update(&mut agent, state, level, reward, next)?;
        steps.push(MetaStep {
            state,
            level,
            power_dbm: h.power_levels_dbm[level],
            mean_rate: rate,
            reward,
        });
        state = next;
    }
    Ok(HierarchicalLog {
        steps,
        buckets,
        policy: agent.policy(),
        agent,
        evaluations_per_slot: per_slot,
    })
}

/// Monte-Carlo estimate of each level's mean slot rate, a penalty that makes
/// the middle level the best arm, and the resulting best arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mean_rates: Vec<f64>,
    pub power_weight: f64,
    pub expected_rewards: Vec<f64>,
    pub best_level: usize,
}

/// Needs exactly three levels. With rates R1 < R2 < R3 at powers P1 < P2 < P3
/// the middle arm wins iff (R3−R2)/(P3−P2) < β < (R2−R1)/(P2−P1); β is the
/// geometric mean of those bounds.
pub fn calibrate_three_arms<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    h: &HierarchicalConfig,
    slots: usize,
    rng: &mut R,
) -> Result<Calibration> {
    if h.power_levels_dbm.len() != 3 || slots == 0 {
        return Err(Error::InvalidConfig("calibration needs three power levels and at least one slot".into()));
    }
    let powers: Vec<f64> = h.power_levels_dbm.iter().map(|&p| dbm_to_watts(p)).collect();
    if !(powers[0] < powers[1] && powers[1] < powers[2]) {
        return Err(Error::InvalidConfig("power levels must be increasing".into()));
    }
    let mut mean_rates = Vec::with_capacity(3);
    for &p in &powers {
        let mut total = 0.0;
        for _ in 0..slots {
            total += sub_step(cfg, p, h.greedy_sweeps, rng)?.0;
        }
        mean_rates.push(total / slots as f64);
    }
    let low = (mean_rates[2] - mean_rates[1]) / (powers[2] - powers[1]);
    let high = (mean_rates[1] - mean_rates[0]) / (powers[1] - powers[0]);
    if !(low > 0.0 && high > low) {
        return Err(Error::InvalidConfig(format!("no penalty favors the middle level (bounds {low}, {high})")));
    }
    let beta = (low * high).sqrt();
    let expected_rewards: Vec<f64> = mean_rates.iter().zip(&powers).map(|(r, p)| r - beta * p).collect();
    Ok(Calibration {
        best_level: argmax(&expected_rewards),
        mean_rates,
        power_weight: beta,
        expected_rewards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use rand_distr::{Distribution, Normal};

    fn small() -> (SystemConfig, HierarchicalConfig) {
        let cfg = SystemConfig::default().with_elements(20);
        let h = HierarchicalConfig {
            horizon: 200,
            ..HierarchicalConfig::default()
        };
        (cfg, h)
    }

    #[test]
    fn zero_learning_rate_leaves_q_alone() {
        let mut a = MetaAgent::new(4, 3, LearningRate::Constant(0.0), 0.1, 0.9);
        a.q[1] = vec![1.0, 2.0, 3.0];
        let before = a.q.clone();
        meta_q_update(&mut a, 1, 2, 10.0, 3).unwrap();
        assert_eq!(a.q, before);
    }

    #[test]
    fn constant_rewards_are_a_fixed_point() {
        let mut a = MetaAgent::new(1, 3, LearningRate::Constant(0.2), 0.0, 0.0);
        let r = [1.5, -0.5, 4.0];
        for _ in 0..300 {
            for (i, &ri) in r.iter().enumerate() {
                meta_q_update(&mut a, 0, i, ri, 0).unwrap();
            }
        }
        for (q, r) in a.q[0].iter().zip(r) {
            assert!((q - r).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_count_rate_averages_noisy_rewards() {
        let means = [2.0, 5.0, 3.0];
        let mut rng = seeded_rng(0);
        let mut a = MetaAgent::new(1, 3, LearningRate::InverseCount, 0.0, 0.0);
        for k in 0..5000 {
            let arm = k % 3;
            let r = Normal::new(means[arm], 1.0).unwrap().sample(&mut rng);
            meta_q_update(&mut a, 0, arm, r, 0).unwrap();
        }
        for (q, m) in a.q[0].iter().zip(means) {
            assert!((q - m).abs() < 0.05 * m, "{q} vs {m}");
        }
    }

    #[test]
    fn update_rejects_bad_indices() {
        let mut a = MetaAgent::new(2, 2, LearningRate::Constant(0.1), 0.0, 0.0);
        assert!(meta_q_update(&mut a, 2, 0, 1.0, 0).is_err());
        assert!(meta_q_update(&mut a, 0, 2, 1.0, 0).is_err());
        assert!(meta_q_update(&mut a, 0, 0, f64::NAN, 0).is_err());
    }

    #[test]
    fn buckets_cover_and_clamp() {
        let b = RateBuckets { lo: 10.0, hi: 20.0, count: 10 };
        assert_eq!(b.bucket(10.0), 0);
        assert_eq!(b.bucket(14.99), 4);
        assert_eq!(b.bucket(20.0), 9);
        assert_eq!(b.bucket(-5.0), 0);
        assert_eq!(b.bucket(99.0), 9);
    }

    #[test]
    fn slot_cost_is_fixed() {
        let cfg = SystemConfig::default();
        for seed in 0..5 {
            let (_, evals) = sub_step(&cfg, 1.0, 2, &mut seeded_rng(seed)).unwrap();
            assert_eq!(evals, 4 * 4 * 2);
        }
    }

    #[test]
    fn log_shape() {
        let (cfg, h) = small();
        let log = hierarchical_run(&cfg, &h, &mut seeded_rng(0)).unwrap();
        assert_eq!(log.steps.len(), h.horizon);
        assert!(log.steps.iter().all(|s| s.reward.is_finite() && s.mean_rate.is_finite()));
        assert_eq!(log.evaluations_per_slot, 2 * 4);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), h.horizon + 1);
    }

    #[test]
    fn free_power_means_maximum_power() {
        let (cfg, h) = small();
        let wins = (0..20)
            .filter(|&seed| hierarchical_run(&cfg, &h, &mut seeded_rng(seed)).unwrap().policy == 2)
            .count();
        assert!(wins >= 19, "{wins}/20");
    }

    #[test]
    fn single_level_is_a_plain_greedy_loop() {
        let (cfg, mut h) = small();
        h.power_levels_dbm = vec![30.0];
        h.power_weight = 2.0;
        let log = hierarchical_run(&cfg, &h, &mut seeded_rng(1)).unwrap();
        assert!(log.steps.iter().all(|s| s.level == 0 && (s.reward - (s.mean_rate - 2.0)).abs() < 1e-12));
        assert_eq!(log.policy, 0);
    }

    #[test]
    fn deterministic_given_seed() {
        let (cfg, h) = small();
        let a = hierarchical_run(&cfg, &h, &mut seeded_rng(5)).unwrap();
        let b = hierarchical_run(&cfg, &h, &mut seeded_rng(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_makes_the_middle_arm_best() {
        let (cfg, h) = small();
        let c = calibrate_three_arms(&cfg, &h, 200, &mut seeded_rng(0)).unwrap();
        assert_eq!(c.best_level, 1);
        assert!(c.mean_rates.windows(2).all(|w| w[0] < w[1]));
    }
}
