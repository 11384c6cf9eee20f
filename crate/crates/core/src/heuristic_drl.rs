//! Greedy-pruned DQN: randomized greedy restarts vote for phases per group, the
//! most voted phases form a reduced joint action space, and DQN trains on it.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drl::{dqn_train, DqnConfig, PhaseEnv, TrainLog};
use crate::error::{Error, Result};
use crate::search::{greedy_elementwise, MAX_GREEDY_SWEEPS};
use crate::sysmodel::{PhaseConfig, RateObjective};

pub const DEFAULT_RESTARTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedActionSet {
    /// Allowed phases per group, ascending.
    pub allowed: Vec<Vec<usize>>,
    /// `frequencies[g][q]`: restarts whose final config put group g at phase q.
    pub frequencies: Vec<Vec<usize>>,
    pub levels: usize,
    pub target_rho: f64,
    /// `1 - |reduced| / L^G`.
    pub achieved_rho: f64,
    pub best_greedy: PhaseConfig,
    pub best_greedy_value: f64,
    pub greedy_evaluations: usize,
    #[serde(with = "secs")]
    pub greedy_duration: Duration,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

impl ReducedActionSet {
    pub fn joint_size(&self) -> usize {
        self.allowed.iter().map(Vec::len).product()
    }

    pub fn contains(&self, config: &[usize]) -> bool {
        config.len() == self.allowed.len() && self.allowed.iter().zip(config).all(|(s, q)| s.contains(q))
    }

    /// Cross product of the subsets in lexicographic order.
    pub fn joint_list(&self) -> Vec<PhaseConfig> {
        let mut out = vec![Vec::new()];
        for subset in &self.allowed {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    subset.iter().map(move |&q| {
                        let mut c = prefix.clone();
                        c.push(q);
                        c
                    })
                })
                .collect();
        }
        out.into_iter()
            .map(|c| PhaseConfig::new(c, self.levels).expect("phases in range"))
            .collect()
    }

    pub fn env(&self, objective: RateObjective) -> Result<PhaseEnv> {
        PhaseEnv::with_allowed(objective, self.allowed.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Phases of each group ordered by descending frequency, ties to the smaller index.
fn ranked(frequencies: &[Vec<usize>]) -> Vec<Vec<usize>> {
    frequencies
        .iter()
        .map(|f| {
            let mut order: Vec<usize> = (0..f.len()).collect();
            order.sort_by_key(|&q| (std::cmp::Reverse(f[q]), q));
            order
        })
        .collect()
}

fn target_size(target_rho: f64, total: usize) -> usize {
    // Guard against 0.3 * 256 landing a hair above an integer.
    (((1.0 - target_rho) * total as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Per-group subset sizes from the growth rule: start from the top phase of
/// every group, then repeatedly add the next-ranked phase of the group whose
/// candidate is most frequent (ties: smallest resulting joint size, then lowest
/// group) until the joint size reaches the target.
pub fn grow_subsets(frequencies: &[Vec<usize>], target_rho: f64) -> Vec<Vec<usize>> {
    let order = ranked(frequencies);
    let levels = frequencies.first().map_or(0, Vec::len);
    let total = levels.pow(frequencies.len() as u32);
    let target = target_size(target_rho, total);
    let mut sizes = vec![1usize; frequencies.len()];
    while sizes.iter().product::<usize>() < target {
        let product: usize = sizes.iter().product();
        let g = (0..sizes.len())
            .filter(|&g| sizes[g] < levels)
            .min_by_key(|&g| {
                let freq = frequencies[g][order[g][sizes[g]]];
                let grown = product / sizes[g] * (sizes[g] + 1);
                (std::cmp::Reverse(freq), grown, g)
            })
            .expect("target never exceeds the full space");
        sizes[g] += 1;
    }
    order
        .into_iter()
        .zip(sizes)
        .map(|(o, n)| {
            let mut s = o[..n].to_vec();
            s.sort_unstable();
            s
        })
        .collect()
}

/// Rotates every phase by the same step so group 0 sits at phase 0. The
/// sum-rate ignores a common rotation, and without this the L rotated copies
/// of one local optimum split its votes evenly across phases.
pub fn canonical(config: &PhaseConfig, levels: usize) -> PhaseConfig {
    let shift = config.indices().first().copied().unwrap_or(0);
    let rotated = config.indices().iter().map(|&q| (q + levels - shift) % levels).collect();
    PhaseConfig::new(rotated, levels).expect("phases in range")
}

/// Runs `restarts` greedy passes from random configs and group orders, tallies
/// the final phases (in canonical rotation), and keeps the most frequent ones. The best greedy config
/// is always kept, so the achieved ratio can fall below the target.
pub fn reduce_action_space<R: Rng + ?Sized>(
    objective: &RateObjective,
    target_rho: f64,
    restarts: usize,
    rng: &mut R,
) -> Result<ReducedActionSet> {
    if !(0.0..1.0).contains(&target_rho) {
        return Err(Error::InvalidConfig(format!("target reduction {target_rho} outside [0, 1)")));
    }
    if restarts == 0 {
        return Err(Error::InvalidConfig("at least one greedy restart is needed".into()));
    }
    let (groups, levels) = (objective.groups(), objective.levels());
    let started = Instant::now();
    let starts: Vec<(PhaseConfig, Vec<usize>)> = (0..restarts)
        .map(|_| {
            let init = (0..groups).map(|_| rng.random_range(0..levels)).collect();
            let mut order: Vec<usize> = (0..groups).collect();
            order.shuffle(rng);
            (PhaseConfig::new(init, levels).expect("phases in range"), order)
        })
        .collect();
    let results = starts
        .par_iter()
        .map(|(init, order)| greedy_elementwise(objective, init, order, MAX_GREEDY_SWEEPS))
        .collect::<Result<Vec<_>>>()?;

    let finals: Vec<PhaseConfig> = results.iter().map(|r| canonical(&r.best_config, levels)).collect();
    let mut frequencies = vec![vec![0usize; levels]; groups];
    for config in &finals {
        for (g, &q) in config.indices().iter().enumerate() {
            frequencies[g][q] += 1;
        }
    }
    // First restart wins ties so the choice does not depend on thread timing.
    let best = (1..results.len()).fold(0, |b, i| if results[i].best_value > results[b].best_value { i } else { b });
    let mut allowed = grow_subsets(&frequencies, target_rho);
    for (subset, &q) in allowed.iter_mut().zip(finals[best].indices()) {
        if let Err(pos) = subset.binary_search(&q) {
            subset.insert(pos, q);
        }
    }
    let size: usize = allowed.iter().map(Vec::len).product();
    Ok(ReducedActionSet {
        allowed,
        frequencies,
        levels,
        target_rho,
        achieved_rho: 1.0 - size as f64 / levels.pow(groups as u32) as f64,
        best_greedy: finals[best].clone(),
        best_greedy_value: results[best].best_value,
        greedy_evaluations: results.iter().map(|r| r.evaluations).sum(),
        greedy_duration: started.elapsed(),
    })
}

/// DQN on an environment built over a reduced set; same contract as [`dqn_train`].
pub fn heuristic_dqn_train<R: Rng + ?Sized>(
    env: &mut PhaseEnv,
    cfg: &DqnConfig,
    iterations: usize,
    rng: &mut R,
) -> Result<TrainLog> {
    dqn_train(env, cfg, iterations, rng)
}

#[derive(Debug, Clone)]
pub struct HeuristicDrlRun {
    pub reduced: ReducedActionSet,
    pub log: TrainLog,
    /// Greedy pre-runs plus training.
    pub total_duration: Duration,
}

/// The whole pipeline on one channel: pre-runs, reduction, training.
pub fn heuristic_drl<R: Rng + ?Sized>(
    objective: &RateObjective,
    target_rho: f64,
    restarts: usize,
    cfg: &DqnConfig,
    iterations: usize,
    rng: &mut R,
) -> Result<HeuristicDrlRun> {
    let started = Instant::now();
    let reduced = reduce_action_space(objective, target_rho, restarts, rng)?;
    let mut env = reduced.env(objective.clone())?;
    let log = heuristic_dqn_train(&mut env, cfg, iterations, rng)?;
    Ok(HeuristicDrlRun {
        reduced,
        log,
        total_duration: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::exhaustive_search;
    use crate::search::tests::instance;
    use crate::seeded_rng;
    use proptest::prelude::*;

    fn sizes(allowed: &[Vec<usize>]) -> Vec<usize> {
        allowed.iter().map(Vec::len).collect()
    }

    #[test]
    fn canonical_rotation_keeps_the_value() {
        let obj = instance(4, 2);
        let c = PhaseConfig::new(vec![2, 0, 3, 1], 4).unwrap();
        let r = canonical(&c, 4);
        assert_eq!(r.indices(), &[0, 2, 1, 3]);
        assert!((obj.value(c.indices()) - obj.value(r.indices())).abs() < 1e-9);
    }

    #[test]
    fn zero_reduction_keeps_everything() {
        let obj = instance(3, 0);
        let r = reduce_action_space(&obj, 0.0, 10, &mut seeded_rng(0)).unwrap();
        assert_eq!(r.joint_size(), 64);
        assert_eq!(r.achieved_rho, 0.0);
        assert_eq!(r.joint_list().len(), 64);
    }

    #[test]
    fn uniform_frequencies_reach_the_least_product() {
        let freq = vec![vec![5; 4]; 4];
        let s = grow_subsets(&freq, 0.75);
        assert_eq!(s.iter().map(Vec::len).product::<usize>(), 64);
        // Ties go to the smallest resulting product, then the lowest group.
        assert_eq!(sizes(&s), vec![4, 4, 4, 1]);
        assert_eq!(s[0], vec![0, 1, 2, 3]);
        assert_eq!(s[3], vec![0]);
    }

    #[test]
    fn growth_follows_frequency() {
        let freq = vec![vec![0, 9, 1, 0], vec![3, 3, 3, 1], vec![10, 0, 0, 0]];
        // Target ceil(0.25 * 64) = 16. Group 1 fills first (3, 3, then a tie
        // with group 0 at 1 broken by the smaller product), then group 0;
        // group 2 never earns a second phase.
        let s = grow_subsets(&freq, 0.75);
        assert_eq!(s, vec![vec![0, 1, 2, 3], vec![0, 1, 2, 3], vec![0]]);
    }

    #[test]
    fn best_greedy_is_kept_and_sizes_match() {
        let obj = instance(4, 3);
        for rho in [0.5, 0.7, 0.9, 0.95] {
            let r = reduce_action_space(&obj, rho, 50, &mut seeded_rng(1)).unwrap();
            assert!(r.contains(r.best_greedy.indices()));
            let list = r.joint_list();
            assert_eq!(list.len(), r.joint_size());
            let mut dedup = list.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), list.len());
            assert!(r.joint_size() >= target_size(rho, 256));
            assert!((r.achieved_rho - (1.0 - r.joint_size() as f64 / 256.0)).abs() < 1e-15);
            assert_eq!(r.frequencies.iter().map(|f| f.iter().sum::<usize>()).max(), Some(50));
        }
    }

    #[test]
    fn optimum_survives_reduction_on_most_seeds() {
        let mut inside = 0;
        for seed in 0..10 {
            let obj = instance(4, seed);
            let opt = exhaustive_search(&obj).unwrap().best_value;
            let r = reduce_action_space(&obj, 0.7, 50, &mut seeded_rng(seed)).unwrap();
            let best_in_set = r
                .joint_list()
                .iter()
                .map(|c| obj.value(c.indices()))
                .fold(f64::NEG_INFINITY, f64::max);
            inside += (best_in_set >= opt * (1.0 - 1e-12)) as usize;
        }
        assert!(inside >= 8, "{inside}/10");
    }

    #[test]
    fn full_reduction_trains_like_plain_dqn() {
        let obj = instance(2, 4);
        let r = reduce_action_space(&obj, 0.0, 5, &mut seeded_rng(0)).unwrap();
        let cfg = DqnConfig::default();
        let mut a = r.env(obj.clone()).unwrap();
        let mut b = PhaseEnv::with_allowed(obj, vec![(0..4).collect(); 2]).unwrap();
        let la = heuristic_dqn_train(&mut a, &cfg, 200, &mut seeded_rng(3)).unwrap();
        let lb = dqn_train(&mut b, &cfg, 200, &mut seeded_rng(3)).unwrap();
        assert!(la.same_run(&lb));
    }

    #[test]
    fn reduced_space_trains_faster_per_iteration() {
        // 3^4 = 81 joint actions, the nearest product to 77 of 256.
        let cfg = DqnConfig::default();
        for seed in 0..3 {
            let obj = instance(4, seed);
            let mut small = PhaseEnv::with_allowed(obj.clone(), vec![vec![0, 1, 2]; 4]).unwrap();
            let mut full = PhaseEnv::with_allowed(obj, vec![(0..4).collect(); 4]).unwrap();
            assert_eq!(small.action_count(), 81);
            let ls = dqn_train(&mut small, &cfg, 1500, &mut seeded_rng(seed)).unwrap();
            let lf = dqn_train(&mut full, &cfg, 1500, &mut seeded_rng(seed)).unwrap();
            assert!(ls.duration < lf.duration, "seed {seed}: {:?} vs {:?}", ls.duration, lf.duration);
        }
    }

    #[test]
    fn heuristic_exploration_pays_off_on_explore_steps() {
        let cfg_uniform = DqnConfig::default();
        let cfg_heur = DqnConfig {
            heuristic_exploration: true,
            ..DqnConfig::default()
        };
        let mean_explored = |log: &TrainLog| {
            let v: Vec<f64> = log.sum_rate.iter().zip(&log.explored).filter(|p| *p.1).map(|p| *p.0).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (mut heur, mut unif) = (0.0, 0.0);
        for seed in 0..20 {
            let obj = instance(3, seed);
            let r = reduce_action_space(&obj, 0.5, 20, &mut seeded_rng(seed)).unwrap();
            let mut e1 = r.env(obj.clone()).unwrap();
            let mut e2 = r.env(obj).unwrap();
            heur += mean_explored(&heuristic_dqn_train(&mut e1, &cfg_heur, 300, &mut seeded_rng(seed)).unwrap());
            unif += mean_explored(&heuristic_dqn_train(&mut e2, &cfg_uniform, 300, &mut seeded_rng(seed)).unwrap());
        }
        assert!(heur >= unif, "heuristic {heur} vs uniform {unif}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let obj = instance(2, 0);
        assert!(reduce_action_space(&obj, 1.0, 5, &mut seeded_rng(0)).is_err());
        assert!(reduce_action_space(&obj, -0.1, 5, &mut seeded_rng(0)).is_err());
        assert!(reduce_action_space(&obj, 0.5, 0, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn report_round_trips_through_json() {
        let obj = instance(2, 1);
        let r = reduce_action_space(&obj, 0.5, 10, &mut seeded_rng(0)).unwrap();
        let back: ReducedActionSet = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.allowed, r.allowed);
        assert_eq!(back.frequencies, r.frequencies);
        assert_eq!(back.achieved_rho, r.achieved_rho);
    }

    proptest! {
        #[test]
        fn subsets_are_nested_in_rho(
            freq in prop::collection::vec(prop::collection::vec(0usize..20, 4), 1..5),
            a in 0.0f64..0.99,
            b in 0.0f64..0.99,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let big = grow_subsets(&freq, lo);
            let small = grow_subsets(&freq, hi);
            for (s, l) in small.iter().zip(&big) {
                prop_assert!(!s.is_empty());
                prop_assert!(s.iter().all(|q| l.contains(q)));
            }
            let total = 4usize.pow(freq.len() as u32);
            prop_assert!(small.iter().map(Vec::len).product::<usize>() >= target_size(hi, total));
        }
    }
}
