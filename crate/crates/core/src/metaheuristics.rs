//! Population- and trajectory-based optimizers: particle swarm, genetic
//! algorithm and tabu search over the discrete phase space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{SearchResult, Tracker};
use crate::sysmodel::{PhaseConfig, RateObjective};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoParams {
    pub swarm_size: usize,
    /// Inertia weight.
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub iters: usize,
    pub v_max: f64,
}

impl PsoParams {
    /// Textbook settings for an `levels`-level space.
    pub fn for_levels(levels: usize) -> Self {
        Self {
            swarm_size: 20,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            iters: 100,
            v_max: levels as f64 / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.swarm_size >= 2
            && (0.0..=1.0).contains(&self.inertia)
            && self.cognitive >= 0.0
            && self.social >= 0.0
            && self.v_max > 0.0
            && self.v_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid PSO parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub pop_size: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub elite_count: usize,
    pub iters: usize,
    pub tournament_size: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            pop_size: 20,
            crossover_prob: 0.8,
            mutation_prob: 0.05,
            elite_count: 2,
            iters: 100,
            tournament_size: 3,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        let prob = 0.0..=1.0;
        let ok = prob.contains(&self.crossover_prob)
            && prob.contains(&self.mutation_prob)
            && self.elite_count < self.pop_size
            && self.pop_size % 2 == 0
            && self.tournament_size >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid GA parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabuParams {
    pub tenure: usize,
    pub iters: usize,
    pub aspiration: bool,
}

impl Default for TabuParams {
    fn default() -> Self {
        Self {
            tenure: 5,
            iters: 200,
            aspiration: true,
        }
    }
}

impl TabuParams {
    pub fn validate(&self) -> Result<()> {
        if self.tenure >= 1 {
            Ok(())
        } else {
            Err(Error::InvalidConfig("tabu tenure must be >= 1".into()))
        }
    }
}

/// Global-best particle swarm on continuous positions in `[0, L)^G`; fitness
/// is taken at `floor` of each coordinate after wrapping.
pub fn pso<R: Rng + ?Sized>(objective: &RateObjective, params: &PsoParams, rng: &mut R) -> Result<SearchResult> {
    run_pso(objective, params, rng, |rng| (rng.random(), rng.random())).map(|(result, _)| result)
}

fn discretize(position: &[f64], levels: usize) -> Vec<usize> {
    position.iter().map(|&x| (x.floor() as usize).min(levels - 1)).collect()
}

fn wrap(x: f64, levels: f64) -> f64 {
    let w = x.rem_euclid(levels);
    // rem_euclid can round up to exactly `levels` for tiny negative inputs.
    if w >= levels {
        0.0
    } else {
        w
    }
}

/// PSO with the per-coordinate random coefficients `(r1, r2)` supplied by
/// `coefficients`; also returns the final particle positions.
fn run_pso<R: Rng + ?Sized>(
    objective: &RateObjective,
    params: &PsoParams,
    rng: &mut R,
    mut coefficients: impl FnMut(&mut R) -> (f64, f64),
) -> Result<(SearchResult, Vec<Vec<f64>>)> {
    params.validate()?;
    let (groups, levels) = (objective.groups(), objective.levels());
    let span = levels as f64;
    let mut tracker = Tracker::new(objective);

    let mut positions: Vec<Vec<f64>> = (0..params.swarm_size)
        .map(|_| (0..groups).map(|_| rng.random::<f64>() * span).map(|x| wrap(x, span)).collect())
        .collect();
    let mut velocities: Vec<Vec<f64>> = (0..params.swarm_size)
        .map(|_| (0..groups).map(|_| (2.0 * rng.random::<f64>() - 1.0) * params.v_max).collect())
        .collect();
    let mut pbest = positions.clone();
    let mut pbest_value: Vec<f64> = positions.iter().map(|x| tracker.eval(&discretize(x, levels))).collect();
    let first = argmax(&pbest_value);
    let mut gbest = pbest[first].clone();
    let mut gbest_value = pbest_value[first];
    let mut trajectory = vec![(tracker.evaluations(), gbest_value)];

    for _ in 0..params.iters {
        for i in 0..params.swarm_size {
            for d in 0..groups {
                let (r1, r2) = coefficients(rng);
                let v = params.inertia * velocities[i][d]
                    + params.cognitive * r1 * (pbest[i][d] - positions[i][d])
                    + params.social * r2 * (gbest[d] - positions[i][d]);
                let v = v.clamp(-params.v_max, params.v_max);
                velocities[i][d] = v;
                positions[i][d] = wrap(positions[i][d] + v, span);
            }
            let value = tracker.eval(&discretize(&positions[i], levels));
            if value > pbest_value[i] {
                pbest_value[i] = value;
                pbest[i].clone_from(&positions[i]);
                if value > gbest_value {
                    gbest_value = value;
                    gbest.clone_from(&positions[i]);
                }
            }
        }
        trajectory.push((tracker.evaluations(), gbest_value));
    }
    let mut result = tracker.finish();
    result.best_config = PhaseConfig::new(discretize(&gbest, levels), levels)?;
    result.best_value = gbest_value;
    result.trajectory = trajectory;
    Ok((result, positions))
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Generational GA with tournament selection, one-point crossover, per-gene
/// mutation and elitism. Trajectory holds the best-ever value per generation.
pub fn ga<R: Rng + ?Sized>(objective: &RateObjective, params: &GaParams, rng: &mut R) -> Result<SearchResult> {
    params.validate()?;
    let (groups, levels) = (objective.groups(), objective.levels());
    let mut tracker = Tracker::new(objective);

    let mut population: Vec<(Vec<usize>, f64)> = (0..params.pop_size)
        .map(|_| {
            let genes: Vec<usize> = (0..groups).map(|_| rng.random_range(0..levels)).collect();
            let fitness = tracker.eval(&genes);
            (genes, fitness)
        })
        .collect();
    let mut trajectory = vec![(tracker.evaluations(), tracker.best_value())];

    let tournament = |population: &[(Vec<usize>, f64)], rng: &mut R| -> usize {
        let mut winner = rng.random_range(0..population.len());
        for _ in 1..params.tournament_size {
            let challenger = rng.random_range(0..population.len());
            if population[challenger].1 > population[winner].1 {
                winner = challenger;
            }
        }
        winner
    };

    for _ in 0..params.iters {
        // Stable sort keeps earlier individuals first among equals.
        population.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut next: Vec<(Vec<usize>, f64)> = population[..params.elite_count].to_vec();
        while next.len() < params.pop_size {
            let a = tournament(&population, rng);
            let b = tournament(&population, rng);
            let mut child_a = population[a].0.clone();
            let mut child_b = population[b].0.clone();
            if groups > 1 && rng.random::<f64>() < params.crossover_prob {
                let cut = rng.random_range(1..groups);
                for g in cut..groups {
                    std::mem::swap(&mut child_a[g], &mut child_b[g]);
                }
            }
            for child in [child_a, child_b] {
                if next.len() == params.pop_size {
                    break;
                }
                let mut child = child;
                let mut mutated = false;
                for gene in child.iter_mut() {
                    if levels > 1 && rng.random::<f64>() < params.mutation_prob {
                        let shift = rng.random_range(1..levels);
                        *gene = (*gene + shift) % levels;
                        mutated = true;
                    }
                }
                let fitness = if mutated || !population.iter().any(|p| p.0 == child) {
                    tracker.eval(&child)
                } else {
                    population.iter().find(|p| p.0 == child).map(|p| p.1).expect("present")
                };
                next.push((child, fitness));
            }
        }
        population = next;
        trajectory.push((tracker.evaluations(), tracker.best_value()));
    }
    let mut result = tracker.finish();
    result.trajectory = trajectory;
    Ok(result)
}

/// Tabu search over single-group moves. The attribute `(group, old phase)` of
/// each accepted move is banned for `tenure` steps; a banned move is still
/// allowed when it beats the best value so far and aspiration is on. Stops
/// early when every move is banned.
pub fn tabu(objective: &RateObjective, params: &TabuParams, init: &PhaseConfig) -> Result<SearchResult> {
    params.validate()?;
    let (groups, levels) = (objective.groups(), objective.levels());
    if init.len() != groups || init.indices().iter().any(|&q| q >= levels) {
        return Err(Error::DimensionMismatch(format!("initial config {:?} does not fit", init.indices())));
    }
    let mut tracker = Tracker::new(objective);
    let mut current = init.indices().to_vec();
    tracker.eval(&current);
    let mut trajectory = vec![(tracker.evaluations(), tracker.best_value())];
    // banned_until[g][q]: the move setting group g to phase q is tabu while step < banned_until.
    let mut banned_until = vec![vec![0usize; levels]; groups];

    for step in 0..params.iters {
        let best_ever = tracker.best_value();
        let mut chosen: Option<(usize, usize, f64)> = None;
        for g in 0..groups {
            let original = current[g];
            for q in (0..levels).filter(|&q| q != original) {
                current[g] = q;
                let value = tracker.eval(&current);
                let is_tabu = step < banned_until[g][q];
                let admissible = !is_tabu || (params.aspiration && value > best_ever);
                if admissible && chosen.is_none_or(|c| value > c.2) {
                    chosen = Some((g, q, value));
                }
            }
            current[g] = original;
        }
        trajectory.push((tracker.evaluations(), tracker.best_value()));
        let Some((g, q, _)) = chosen else { break };
        let old = current[g];
        current[g] = q;
        banned_until[g][old] = (step + 1).saturating_add(params.tenure);
    }
    let mut result = tracker.finish();
    result.trajectory = trajectory;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::tests::instance;
    use crate::search::{exhaustive_search, local_search};
    use crate::seeded_rng;

    #[test]
    fn parameter_validation() {
        assert!(PsoParams { swarm_size: 1, ..PsoParams::for_levels(4) }.validate().is_err());
        assert!(PsoParams { inertia: 1.5, ..PsoParams::for_levels(4) }.validate().is_err());
        assert!(GaParams { pop_size: 7, ..GaParams::default() }.validate().is_err());
        assert!(GaParams { elite_count: 20, ..GaParams::default() }.validate().is_err());
        assert!(TabuParams { tenure: 0, ..TabuParams::default() }.validate().is_err());
        assert!(GaParams::default().validate().is_ok());
    }

    #[test]
    fn pure_social_pull_collapses_swarm() {
        let obj = instance(3, 1);
        let params = PsoParams {
            inertia: 0.0,
            cognitive: 0.0,
            social: 0.5,
            iters: 200,
            ..PsoParams::for_levels(4)
        };
        let (result, positions) = run_pso(&obj, &params, &mut seeded_rng(4), |_| (0.0, 1.0)).unwrap();
        let target = result.best_config.indices().to_vec();
        for p in positions {
            assert_eq!(discretize(&p, 4), target);
        }
    }

    #[test]
    fn pso_near_optimal_on_small_space() {
        let mut hits = 0;
        for seed in 0..10 {
            let obj = instance(2, seed);
            let exact = exhaustive_search(&obj).unwrap().best_value;
            let r = pso(&obj, &PsoParams::for_levels(4), &mut seeded_rng(seed)).unwrap();
            assert!(r.best_value <= exact);
            assert!(r.trajectory.windows(2).all(|w| w[1].1 >= w[0].1));
            assert_eq!(r.best_value, obj.value(r.best_config.indices()));
            if r.best_value >= 0.99 * exact {
                hits += 1;
            }
        }
        assert!(hits >= 9, "{hits}/10");
    }

    #[test]
    fn ga_without_variation_preserves_best() {
        let obj = instance(4, 2);
        let params = GaParams {
            mutation_prob: 0.0,
            crossover_prob: 0.0,
            elite_count: 19,
            ..GaParams::default()
        };
        let r = ga(&obj, &params, &mut seeded_rng(1)).unwrap();
        let first = r.trajectory[0].1;
        assert!(r.trajectory.iter().all(|&(_, v)| v == first));
        // No new individual is ever created, so nothing beyond the initial population is evaluated.
        assert_eq!(r.evaluations, params.pop_size);
    }

    #[test]
    fn ga_elitism_is_monotone_and_near_optimal() {
        let mut hits = 0;
        for seed in 0..10 {
            let obj = instance(4, seed);
            let exact = exhaustive_search(&obj).unwrap().best_value;
            let r = ga(&obj, &GaParams::default(), &mut seeded_rng(seed)).unwrap();
            assert!(r.trajectory.windows(2).all(|w| w[1].1 >= w[0].1));
            assert!(r.best_value <= exact);
            assert_eq!(r.best_value, obj.value(r.best_config.indices()));
            if r.best_value >= 0.98 * exact {
                hits += 1;
            }
        }
        assert!(hits >= 8, "{hits}/10");
    }

    #[test]
    fn fully_blocked_tabu_stops_after_visiting_everything() {
        // With one group, the first scan covers the whole space; an endless
        // tenure then bans every move back and the search halts.
        for seed in 0..5 {
            let obj = instance(1, seed);
            let init = PhaseConfig::zeros(1);
            let params = TabuParams {
                tenure: usize::MAX,
                iters: 1000,
                aspiration: false,
            };
            let r = tabu(&obj, &params, &init).unwrap();
            let first_scan = (0..4).map(|q| obj.value(&[q])).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(r.best_value, first_scan);
            assert!(r.evaluations < 1 + 1000 * 3);
        }
    }

    #[test]
    fn tabu_escapes_local_optimum_on_pinned_seed() {
        let init = PhaseConfig::zeros(4);
        let params = TabuParams {
            tenure: 3,
            iters: 200,
            aspiration: true,
        };
        let escapes = |seed: u64| {
            let obj = instance(4, seed);
            let ls = local_search(&obj, &init).unwrap().best_value;
            let exact = exhaustive_search(&obj).unwrap().best_value;
            ls < exact && tabu(&obj, &params, &init).unwrap().best_value > ls
        };
        let seed = (0..1000).find(|&s| escapes(s)).unwrap();
        assert_eq!(seed, TABU_ESCAPE_SEED);
    }

    const TABU_ESCAPE_SEED: u64 = 0;

    #[test]
    fn tabu_trajectory_monotone_and_dominates_local_search() {
        let mut rng = seeded_rng(8);
        for seed in 0..20 {
            let obj = instance(3, seed);
            let init = PhaseConfig::new((0..3).map(|_| rng.random_range(0..4)).collect(), 4).unwrap();
            let t = tabu(&obj, &TabuParams::default(), &init).unwrap();
            let l = local_search(&obj, &init).unwrap();
            assert!(t.trajectory.windows(2).all(|w| w[1].1 >= w[0].1));
            assert!(t.best_value >= l.best_value);
            assert_eq!(t.best_value, obj.value(t.best_config.indices()));
        }
    }

    #[test]
    fn metaheuristics_are_deterministic() {
        let obj = instance(4, 6);
        let p1 = pso(&obj, &PsoParams::for_levels(4), &mut seeded_rng(3)).unwrap();
        let p2 = pso(&obj, &PsoParams::for_levels(4), &mut seeded_rng(3)).unwrap();
        assert_eq!(p1, p2);
        let g1 = ga(&obj, &GaParams::default(), &mut seeded_rng(3)).unwrap();
        let g2 = ga(&obj, &GaParams::default(), &mut seeded_rng(3)).unwrap();
        assert_eq!(g1, g2);
    }
}
