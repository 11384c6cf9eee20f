//! Baseline and greedy optimizers over the discrete phase space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sysmodel::{PhaseConfig, RateObjective};

/// Largest space exhaustive search will enumerate by default.
pub const EXHAUSTIVE_CAP: u128 = 1_000_000;
/// Upper bound on greedy passes.
pub const MAX_GREEDY_SWEEPS: usize = 10;

/// Per-group on/off state; an inactive group reflects nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OnOffMask(pub Vec<bool>);

impl OnOffMask {
    pub fn all_on(groups: usize) -> Self {
        Self(vec![true; groups])
    }

    pub fn all_off(groups: usize) -> Self {
        Self(vec![false; groups])
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_config: PhaseConfig,
    /// Set by the on/off optimizer only.
    pub mask: Option<OnOffMask>,
    pub best_value: f64,
    pub evaluations: usize,
    /// `(evaluation index, best value so far)`, non-decreasing in the value.
    pub trajectory: Vec<(usize, f64)>,
}

impl SearchResult {
    /// Re-evaluates the reported configuration from scratch.
    pub fn reevaluate(&self, objective: &RateObjective) -> f64 {
        match &self.mask {
            Some(mask) => objective.value_masked(self.best_config.indices(), mask.as_slice()),
            None => objective.value(self.best_config.indices()),
        }
    }
}

/// Counts evaluations and keeps the best configuration seen.
pub(crate) struct Tracker<'a> {
    objective: &'a RateObjective,
    evaluations: usize,
    best: Option<(Vec<usize>, f64)>,
    trajectory: Vec<(usize, f64)>,
}

impl<'a> Tracker<'a> {
    pub(crate) fn new(objective: &'a RateObjective) -> Self {
        Self {
            objective,
            evaluations: 0,
            best: None,
            trajectory: Vec::new(),
        }
    }

    pub(crate) fn eval(&mut self, indices: &[usize]) -> f64 {
        let value = self.objective.value(indices);
        self.evaluations += 1;
        let improved = match &self.best {
            Some((_, best)) => value > *best,
            None => true,
        };
        if improved {
            self.best = Some((indices.to_vec(), value));
        }
        let best = self.best.as_ref().map_or(value, |b| b.1);
        self.trajectory.push((self.evaluations, best));
        value
    }

    pub(crate) fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub(crate) fn best_value(&self) -> f64 {
        self.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1)
    }

    pub(crate) fn finish(self) -> SearchResult {
        let (config, value) = self.best.expect("at least one evaluation");
        SearchResult {
            best_config: PhaseConfig::new(config, self.objective.levels()).expect("indices in range"),
            mask: None,
            best_value: value,
            evaluations: self.evaluations,
            trajectory: self.trajectory,
        }
    }
}

pub fn exhaustive_search(objective: &RateObjective) -> Result<SearchResult> {
    exhaustive_search_capped(objective, EXHAUSTIVE_CAP)
}

/// Enumerates all L^G configurations in lexicographic order; the first maximum
/// wins ties.
pub fn exhaustive_search_capped(objective: &RateObjective, cap: u128) -> Result<SearchResult> {
    let (groups, levels) = (objective.groups(), objective.levels());
    let size = (levels as u128).checked_pow(groups as u32).unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::SpaceTooLarge { size, cap });
    }
    let mut tracker = Tracker::new(objective);
    for index in 0..size as usize {
        tracker.eval(PhaseConfig::from_index(index, groups, levels).indices());
    }
    Ok(tracker.finish())
}

pub fn random_search<R: Rng + ?Sized>(objective: &RateObjective, iters: usize, rng: &mut R) -> Result<SearchResult> {
    if iters == 0 {
        return Err(Error::InvalidConfig("random_search needs iters >= 1".into()));
    }
    let (groups, levels) = (objective.groups(), objective.levels());
    let mut tracker = Tracker::new(objective);
    let mut config = vec![0; groups];
    for _ in 0..iters {
        for q in config.iter_mut() {
            *q = rng.random_range(0..levels);
        }
        tracker.eval(&config);
    }
    Ok(tracker.finish())
}

/// Element-by-element greedy: each group in `order` takes its best phase with
/// the others frozen. Runs up to `sweeps` passes and stops after a pass that
/// changes nothing.
pub fn greedy_elementwise(
    objective: &RateObjective,
    init: &PhaseConfig,
    order: &[usize],
    sweeps: usize,
) -> Result<SearchResult> {
    greedy_passes(objective, init, order, sweeps, true)
}

/// Greedy with exactly `sweeps` passes, G·L·sweeps evaluations.
pub fn greedy_fixed_sweeps(
    objective: &RateObjective,
    init: &PhaseConfig,
    order: &[usize],
    sweeps: usize,
) -> Result<SearchResult> {
    greedy_passes(objective, init, order, sweeps, false)
}

pub fn default_order(groups: usize) -> Vec<usize> {
    (0..groups).collect()
}

fn check_order(order: &[usize], groups: usize) -> Result<()> {
    let mut seen = vec![false; groups];
    for &g in order {
        if g >= groups || std::mem::replace(&mut seen[g], true) {
            return Err(Error::InvalidConfig(format!("order {order:?} is not a permutation of 0..{groups}")));
        }
    }
    if order.len() != groups {
        return Err(Error::InvalidConfig(format!("order {order:?} is not a permutation of 0..{groups}")));
    }
    Ok(())
}

fn check_init(init: &PhaseConfig, objective: &RateObjective) -> Result<()> {
    if init.len() != objective.groups() || init.indices().iter().any(|&q| q >= objective.levels()) {
        return Err(Error::DimensionMismatch(format!(
            "initial config {:?} does not fit {} groups x {} levels",
            init.indices(),
            objective.groups(),
            objective.levels()
        )));
    }
    Ok(())
}

fn greedy_passes(
    objective: &RateObjective,
    init: &PhaseConfig,
    order: &[usize],
    sweeps: usize,
    stop_when_stable: bool,
) -> Result<SearchResult> {
    if sweeps == 0 {
        return Err(Error::InvalidConfig("greedy needs sweeps >= 1".into()));
    }
    check_init(init, objective)?;
    check_order(order, objective.groups())?;
    let levels = objective.levels();
    let mut tracker = Tracker::new(objective);
    let mut config = init.indices().to_vec();
    let mut current_value = f64::NEG_INFINITY;
    let mut values = vec![0.0; levels];
    for _ in 0..sweeps {
        let mut changed = false;
        for &g in order {
            let incumbent = config[g];
            for (q, v) in values.iter_mut().enumerate() {
                config[g] = q;
                *v = tracker.eval(&config);
            }
            let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pick = if values[incumbent] >= best {
                incumbent
            } else {
                values.iter().position(|&v| v == best).expect("max is present")
            };
            config[g] = pick;
            current_value = values[pick];
            changed |= pick != incumbent;
        }
        if stop_when_stable && !changed {
            break;
        }
    }
    let mut result = tracker.finish();
    // The final greedy state is the best visited state; report it even when a
    // numerically equal configuration was seen earlier.
    result.best_config = PhaseConfig::new(config, levels)?;
    result.best_value = current_value;
    Ok(result)
}

/// Sequential on/off pass over the groups in index order. Each group is compared
/// switched off against switched on at each phase level; the incumbent state
/// wins ties. Phases start from zero.
pub fn greedy_onoff(objective: &RateObjective, init: &OnOffMask) -> Result<SearchResult> {
    let (groups, levels) = (objective.groups(), objective.levels());
    if init.0.len() != groups {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} entries for {groups} groups",
            init.0.len()
        )));
    }
    let mut mask = init.0.clone();
    let mut phases = vec![0; groups];
    let mut evaluations = 0;
    let mut trajectory = Vec::new();
    let mut best_so_far = f64::NEG_INFINITY;
    let mut record = |value: f64, evaluations: &mut usize| {
        *evaluations += 1;
        best_so_far = best_so_far.max(value);
        trajectory.push((*evaluations, best_so_far));
    };
    let mut current = f64::NEG_INFINITY;
    for g in 0..groups {
        let (was_on, was_phase) = (mask[g], phases[g]);
        mask[g] = false;
        let off = objective.value_masked(&phases, &mask);
        record(off, &mut evaluations);
        mask[g] = true;
        let mut on_values = Vec::with_capacity(levels);
        for q in 0..levels {
            phases[g] = q;
            let v = objective.value_masked(&phases, &mask);
            record(v, &mut evaluations);
            on_values.push(v);
        }
        let best_on = on_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let incumbent = if was_on { on_values[was_phase] } else { off };
        let best = best_on.max(off);
        if incumbent >= best {
            mask[g] = was_on;
            phases[g] = was_phase;
            current = incumbent;
        } else if off >= best_on {
            mask[g] = false;
            phases[g] = was_phase;
            current = off;
        } else {
            mask[g] = true;
            phases[g] = on_values.iter().position(|&v| v == best_on).expect("max is present");
            current = best_on;
        }
    }
    Ok(SearchResult {
        best_config: PhaseConfig::new(phases, levels)?,
        mask: Some(OnOffMask(mask)),
        best_value: current,
        evaluations,
        trajectory,
    })
}

/// Best-improvement hill climbing over single-group phase changes; returns a
/// 1-opt local optimum.
pub fn local_search(objective: &RateObjective, init: &PhaseConfig) -> Result<SearchResult> {
    check_init(init, objective)?;
    let levels = objective.levels();
    let mut tracker = Tracker::new(objective);
    let mut config = init.indices().to_vec();
    let mut current = tracker.eval(&config);
    loop {
        let mut best_move: Option<(usize, usize, f64)> = None;
        for g in 0..config.len() {
            let original = config[g];
            for q in (0..levels).filter(|&q| q != original) {
                config[g] = q;
                let v = tracker.eval(&config);
                if v > best_move.map_or(current, |m| m.2) {
                    best_move = Some((g, q, v));
                }
            }
            config[g] = original;
        }
        match best_move {
            Some((g, q, v)) => {
                config[g] = q;
                current = v;
            }
            None => break,
        }
    }
    let mut result = tracker.finish();
    result.best_config = PhaseConfig::new(config, levels)?;
    result.best_value = current;
    Ok(result)
}

/// Every single-group change of `config`.
pub fn neighbors(config: &[usize], levels: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
    (0..config.len()).flat_map(move |g| {
        (0..levels).filter(move |&q| q != config[g]).map(move |q| {
            let mut n = config.to_vec();
            n[g] = q;
            n
        })
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::seeded_rng;
    use crate::sysmodel::{sample_channels, SystemConfig};
    use num_complex::Complex;

    pub(crate) fn instance(groups: usize, seed: u64) -> RateObjective {
        let cfg = SystemConfig {
            n_elements: groups * 10,
            ..SystemConfig::default()
        };
        let real = sample_channels(&cfg, &mut seeded_rng(seed)).unwrap();
        RateObjective::new(&real, &cfg).unwrap()
    }

    fn forced_alignment() -> RateObjective {
        let one = Complex::new(1.0, 0.0);
        let real = crate::sysmodel::ChannelRealization {
            g_bs_ris: vec![vec![one], vec![one]],
            h_ris_user: vec![vec![one, -one]],
            user_distances: vec![1.0],
            pathloss_bs_ris: 1.0,
            pathloss_ris_user: vec![1.0],
        };
        RateObjective::with_groups(&real, 2, 4, 1.0, 1.0).unwrap()
    }

    fn assert_consistent(result: &SearchResult, objective: &RateObjective) {
        let again = result.reevaluate(objective);
        assert!((again - result.best_value).abs() <= 1e-12 * again.abs().max(1.0));
        assert!(result.evaluations >= 1);
        assert!(result.trajectory.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn exhaustive_counts_and_argmax() {
        let obj = instance(1, 0);
        let r = exhaustive_search(&obj).unwrap();
        assert_eq!(r.evaluations, 4);
        let best = (0..4).map(|q| obj.value(&[q])).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_value, best);

        let obj = instance(4, 0);
        let r = exhaustive_search(&obj).unwrap();
        assert_eq!(r.evaluations, 256);
        assert_consistent(&r, &obj);
    }

    #[test]
    fn exhaustive_finds_forced_alignment() {
        let obj = forced_alignment();
        let r = exhaustive_search(&obj).unwrap();
        assert_eq!(r.best_config.indices(), &[0, 2]);
        assert!((r.best_value - 5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_respects_cap() {
        let obj = instance(4, 0);
        assert!(matches!(
            exhaustive_search_capped(&obj, 100),
            Err(Error::SpaceTooLarge { size: 256, cap: 100 })
        ));
    }

    #[test]
    fn random_search_single_sample() {
        let obj = instance(1, 3);
        let mut rng = seeded_rng(1);
        let r = random_search(&obj, 1, &mut rng).unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.best_value, obj.value(r.best_config.indices()));
        assert!(random_search(&obj, 0, &mut rng).is_err());
    }

    #[test]
    fn random_search_covers_small_space() {
        let obj = instance(2, 7);
        let exact = exhaustive_search(&obj).unwrap().best_value;
        let r = random_search(&obj, 16 * 50, &mut seeded_rng(7)).unwrap();
        assert_eq!(r.best_value, exact);
    }

    #[test]
    fn random_search_best_grows_with_budget() {
        let obj = instance(4, 9);
        let mut last = f64::NEG_INFINITY;
        for iters in [1, 4, 16, 64, 256] {
            let r = random_search(&obj, iters, &mut seeded_rng(3)).unwrap();
            assert!(r.best_value >= last);
            last = r.best_value;
            assert_consistent(&r, &obj);
        }
    }

    #[test]
    fn single_group_greedy_is_exhaustive() {
        for seed in 0..5 {
            let obj = instance(1, seed);
            let g = greedy_elementwise(&obj, &PhaseConfig::zeros(1), &[0], 1).unwrap();
            assert_eq!(g.best_value, exhaustive_search(&obj).unwrap().best_value);
            assert_eq!(g.evaluations, 4);
        }
    }

    #[test]
    fn greedy_single_sweep_costs_g_times_l() {
        let obj = instance(4, 1);
        let r = greedy_fixed_sweeps(&obj, &PhaseConfig::zeros(4), &default_order(4), 1).unwrap();
        assert_eq!(r.evaluations, 16);
        let r = greedy_fixed_sweeps(&obj, &PhaseConfig::zeros(4), &default_order(4), 3).unwrap();
        assert_eq!(r.evaluations, 48);
        assert_consistent(&r, &obj);
    }

    #[test]
    fn greedy_never_beats_exhaustive() {
        for seed in 0..30 {
            let obj = instance(3, seed);
            let best = exhaustive_search(&obj).unwrap().best_value;
            let g = greedy_elementwise(&obj, &PhaseConfig::zeros(3), &default_order(3), MAX_GREEDY_SWEEPS).unwrap();
            assert!(g.best_value <= best);
            assert_consistent(&g, &obj);
        }
    }

    // Seed 0 is the first of 0..999 where one sweep from all-zeros stalls
    // strictly below the exhaustive optimum at G=4.
    #[test]
    fn greedy_gets_trapped_on_pinned_seed() {
        let seed = find_first_seed(|obj| {
            let exact = exhaustive_search(obj).unwrap().best_value;
            let g = greedy_elementwise(obj, &PhaseConfig::zeros(4), &default_order(4), 1).unwrap();
            g.best_value < exact
        });
        assert_eq!(seed, GREEDY_TRAP_SEED);
    }

    pub(crate) const GREEDY_TRAP_SEED: u64 = 0;

    fn find_first_seed(pred: impl Fn(&RateObjective) -> bool) -> u64 {
        (0..1000).find(|&s| pred(&instance(4, s))).expect("a trap exists in 0..1000")
    }

    #[test]
    fn greedy_validates_inputs() {
        let obj = instance(2, 0);
        assert!(greedy_elementwise(&obj, &PhaseConfig::zeros(2), &[0, 0], 1).is_err());
        assert!(greedy_elementwise(&obj, &PhaseConfig::zeros(3), &[0, 1], 1).is_err());
        assert!(greedy_elementwise(&obj, &PhaseConfig::zeros(2), &[0, 1], 0).is_err());
    }

    #[test]
    fn greedy_terminates_with_unbounded_sweeps() {
        let obj = instance(4, 5);
        let r = greedy_elementwise(&obj, &PhaseConfig::zeros(4), &default_order(4), usize::MAX).unwrap();
        assert!(r.evaluations % 16 == 0);
        // A stable final pass means the result is 1-opt.
        for n in neighbors(r.best_config.indices(), 4) {
            assert!(obj.value(&n) <= r.best_value);
        }
    }

    #[test]
    fn onoff_switches_groups_on() {
        let obj = instance(3, 2);
        let r = greedy_onoff(&obj, &OnOffMask::all_off(3)).unwrap();
        assert_eq!(obj.value_masked(&[0, 0, 0], &[false; 3]), 0.0);
        assert!(r.mask.as_ref().unwrap().0.iter().any(|&on| on));
        assert!(r.best_value > 0.0);
        assert_eq!(r.evaluations, 3 * 5);
        assert_consistent(&r, &obj);
    }

    #[test]
    fn onoff_dominates_trivial_masks() {
        for seed in 0..10 {
            let obj = instance(2, seed);
            let r = greedy_onoff(&obj, &OnOffMask::all_on(2)).unwrap();
            let masks = [[false, false], [true, false], [false, true], [true, true]];
            let all_on = obj.value_masked(&[0, 0], &[true, true]);
            assert!(r.best_value >= all_on);
            assert!(r.best_value >= 0.0);
            assert!(masks.iter().any(|m| m == r.mask.as_ref().unwrap().as_slice()));
        }
    }

    #[test]
    fn onoff_below_joint_brute_force() {
        for groups in 1..=3 {
            for seed in 0..5 {
                let obj = instance(groups, seed);
                let mut oracle = 0.0f64;
                for bits in 0..(1usize << groups) {
                    let mask: Vec<bool> = (0..groups).map(|g| bits >> g & 1 == 1).collect();
                    for idx in 0..4usize.pow(groups as u32) {
                        let p = PhaseConfig::from_index(idx, groups, 4);
                        oracle = oracle.max(obj.value_masked(p.indices(), &mask));
                    }
                }
                let r = greedy_onoff(&obj, &OnOffMask::all_off(groups)).unwrap();
                assert!(r.best_value <= oracle + 1e-12);
            }
        }
    }

    #[test]
    fn local_search_from_optimum_is_one_scan() {
        let obj = instance(3, 4);
        let best = exhaustive_search(&obj).unwrap();
        let r = local_search(&obj, &best.best_config).unwrap();
        assert_eq!(r.best_config, best.best_config);
        assert_eq!(r.evaluations, 1 + 3 * 3);
    }

    #[test]
    fn single_group_local_search_is_exhaustive() {
        for seed in 0..5 {
            let obj = instance(1, seed);
            let r = local_search(&obj, &PhaseConfig::zeros(1)).unwrap();
            assert_eq!(r.best_value, exhaustive_search(&obj).unwrap().best_value);
        }
    }

    #[test]
    fn local_search_output_is_one_opt() {
        let mut rng = seeded_rng(99);
        for seed in 0..20 {
            let obj = instance(4, seed);
            let init = PhaseConfig::new((0..4).map(|_| rng.random_range(0..4)).collect(), 4).unwrap();
            let r = local_search(&obj, &init).unwrap();
            assert!(r.best_value >= obj.value(init.indices()));
            for n in neighbors(r.best_config.indices(), 4) {
                assert!(obj.value(&n) <= r.best_value);
            }
            assert!(exhaustive_search(&obj).unwrap().best_value >= r.best_value);
            assert_consistent(&r, &obj);
        }
    }

    #[test]
    fn neighborhood_size() {
        assert_eq!(neighbors(&[0, 1, 2, 3], 4).count(), 12);
    }
}
