//! Swap matching with externalities.
//!
//! Users (left side) are assigned to resources (right side) with capacity
//! quotas. Utilities are evaluated on the whole assignment, so a user's payoff
//! may depend on who else shares its resource. The solver only exchanges the
//! resources of two users, which keeps every load fixed.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{default_order, greedy_elementwise, MAX_GREEDY_SWEEPS};
use crate::sysmodel::{sample_channels, ChannelRealization, PhaseConfig, RateObjective, SystemConfig};

/// Maps a complete assignment (`assignment[user] = resource`) to per-user utilities.
pub trait Utility {
    fn utilities(&self, assignment: &[usize]) -> Vec<f64>;
}

impl<F> Utility for F
where
    F: Fn(&[usize]) -> Vec<f64>,
{
    fn utilities(&self, assignment: &[usize]) -> Vec<f64> {
        self(assignment)
    }
}

#[derive(Debug, Clone)]
pub struct MatchingInstance<U> {
    pub n_left: usize,
    pub n_right: usize,
    pub quotas: Vec<usize>,
    pub utility: U,
}

impl<U: Utility> MatchingInstance<U> {
    pub fn new(n_left: usize, quotas: Vec<usize>, utility: U) -> Result<Self> {
        let capacity: usize = quotas.iter().sum();
        if capacity < n_left {
            return Err(Error::InvalidConfig(format!(
                "total quota {capacity} cannot hold {n_left} users"
            )));
        }
        Ok(Self {
            n_left,
            n_right: quotas.len(),
            quotas,
            utility,
        })
    }

    pub fn total_utility(&self, matching: &Matching) -> f64 {
        self.utility.utilities(&matching.assignment).iter().sum()
    }

    pub fn check_feasible(&self, matching: &Matching) -> Result<()> {
        if matching.assignment.len() != self.n_left {
            return Err(Error::InfeasibleMatching(format!(
                "{} assignments for {} users",
                matching.assignment.len(),
                self.n_left
            )));
        }
        let mut load = vec![0; self.n_right];
        for &r in &matching.assignment {
            if r >= self.n_right {
                return Err(Error::InfeasibleMatching(format!("resource {r} does not exist")));
            }
            load[r] += 1;
        }
        if let Some(r) = (0..self.n_right).find(|&r| load[r] > self.quotas[r]) {
            return Err(Error::InfeasibleMatching(format!(
                "resource {r} holds {} users over its quota {}",
                load[r], self.quotas[r]
            )));
        }
        Ok(())
    }

    /// Whether swapping the resources of `u` and `v` passes the acceptance rule:
    /// neither user loses, at least one gains, and total utility rises.
    /// Returns the total-utility change when it does.
    fn swap_gain(&self, assignment: &mut [usize], before: &[f64], u: usize, v: usize) -> Option<(Vec<f64>, f64)> {
        assignment.swap(u, v);
        let after = self.utility.utilities(assignment);
        assignment.swap(u, v);
        let pairwise = after[u] >= before[u] && after[v] >= before[v] && (after[u] > before[u] || after[v] > before[v]);
        let delta = after.iter().sum::<f64>() - before.iter().sum::<f64>();
        (pairwise && delta > 0.0).then_some((after, delta))
    }

    /// True when no pair of users on different resources has an acceptable swap.
    pub fn is_exchange_stable(&self, matching: &Matching) -> bool {
        let mut assignment = matching.assignment.clone();
        let before = self.utility.utilities(&assignment);
        for u in 0..self.n_left {
            for v in u + 1..self.n_left {
                if assignment[u] != assignment[v] && self.swap_gain(&mut assignment, &before, u, v).is_some() {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub assignment: Vec<usize>,
}

impl Matching {
    pub fn new(assignment: Vec<usize>) -> Self {
        Self { assignment }
    }

    pub fn loads(&self, n_right: usize) -> Vec<usize> {
        let mut load = vec![0; n_right];
        for &r in &self.assignment {
            load[r] += 1;
        }
        load
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapRecord {
    pub round: usize,
    pub users: (usize, usize),
    /// Resources held by `users` before the swap.
    pub resources: (usize, usize),
    pub total_before: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapOutcome {
    pub matching: Matching,
    pub log: Vec<SwapRecord>,
    pub rounds: usize,
    /// False when `max_rounds` ran out before a scan without accepted swaps.
    pub converged: bool,
    pub total_utility: f64,
}

/// Swap matching: scans user pairs in a random order each round and applies
/// every acceptable swap, until a full round accepts none.
pub fn swap_matching<U: Utility, R: Rng + ?Sized>(
    inst: &MatchingInstance<U>,
    init: &Matching,
    max_rounds: usize,
    rng: &mut R,
) -> Result<SwapOutcome> {
    inst.check_feasible(init)?;
    let mut assignment = init.assignment.clone();
    let mut utilities = inst.utility.utilities(&assignment);
    let mut log = Vec::new();
    let mut pairs: Vec<(usize, usize)> = (0..inst.n_left)
        .flat_map(|u| (u + 1..inst.n_left).map(move |v| (u, v)))
        .collect();
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        rounds += 1;
        pairs.shuffle(rng);
        let mut accepted = false;
        for &(u, v) in &pairs {
            if assignment[u] == assignment[v] {
                continue;
            }
            if let Some((after, delta)) = inst.swap_gain(&mut assignment, &utilities, u, v) {
                log.push(SwapRecord {
                    round: rounds,
                    users: (u, v),
                    resources: (assignment[u], assignment[v]),
                    total_before: utilities.iter().sum(),
                    delta,
                });
                assignment.swap(u, v);
                utilities = after;
                accepted = true;
            }
        }
        if !accepted {
            converged = true;
            break;
        }
    }
    Ok(SwapOutcome {
        total_utility: utilities.iter().sum(),
        matching: Matching::new(assignment),
        log,
        rounds,
        converged,
    })
}

/// Largest assignment space the brute-force oracle will enumerate.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000;

/// Exact maximizer of total utility over feasible assignments; the
/// lexicographically smallest assignment wins ties.
pub fn brute_force_matching<U: Utility>(inst: &MatchingInstance<U>) -> Result<Matching> {
    let size = (inst.n_right as u128).checked_pow(inst.n_left as u32).unwrap_or(u128::MAX);
    if size > BRUTE_FORCE_CAP {
        return Err(Error::SpaceTooLarge {
            size,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut assignment = vec![0; inst.n_left];
    let mut load = vec![0usize; inst.n_right];
    for index in 0..size as usize {
        let mut rest = index;
        for slot in assignment.iter_mut().rev() {
            *slot = rest % inst.n_right;
            rest /= inst.n_right;
        }
        load.iter_mut().for_each(|l| *l = 0);
        assignment.iter().for_each(|&r| load[r] += 1);
        if load.iter().zip(&inst.quotas).any(|(l, q)| l > q) {
            continue;
        }
        let total: f64 = inst.utility.utilities(&assignment).iter().sum();
        if best.as_ref().is_none_or(|b| total > b.1) {
            best = Some((assignment.clone(), total));
        }
    }
    best.map(|(a, _)| Matching::new(a))
        .ok_or_else(|| Error::InfeasibleMatching("no feasible assignment".into()))
}

/// Users sharing a resource split its power equally and interfere with each
/// other through `coupling`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceUtility {
    /// `gains[user][resource]`, linear.
    pub gains: Vec<Vec<f64>>,
    pub power: f64,
    pub noise: f64,
    pub coupling: f64,
}

impl InterferenceUtility {
    /// Exponentially distributed gains with unit mean.
    pub fn random<R: Rng + ?Sized>(n_left: usize, n_right: usize, rng: &mut R) -> Self {
        let gains = (0..n_left)
            .map(|_| (0..n_right).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect())
            .collect();
        Self {
            gains,
            power: 10.0,
            noise: 1.0,
            coupling: 0.1,
        }
    }
}

impl Utility for InterferenceUtility {
    fn utilities(&self, assignment: &[usize]) -> Vec<f64> {
        let n_right = self.gains.first().map_or(0, Vec::len);
        let mut load = vec![0usize; n_right];
        let mut received = vec![0.0; n_right];
        for (u, &r) in assignment.iter().enumerate() {
            load[r] += 1;
            received[r] += self.gains[u][r];
        }
        assignment
            .iter()
            .enumerate()
            .map(|(u, &r)| {
                let share = self.power / load[r] as f64;
                let own = share * self.gains[u][r];
                let interference = self.coupling * share * (received[r] - self.gains[u][r]);
                (1.0 + own / (self.noise + interference)).log2()
            })
            .collect()
    }
}

/// Users associate with one of several surfaces. The users on a surface are
/// served together by zero-forcing with the power split equally among them,
/// and the surface's phases come from element-wise greedy on that user subset.
#[derive(Debug, Clone)]
pub struct RisAssociationUtility {
    /// One realization per surface, covering every user.
    pub realizations: Vec<ChannelRealization>,
    pub cfg: SystemConfig,
}

impl RisAssociationUtility {
    /// Greedy phases and per-user rates on surface `ris` for the users in `subset`.
    pub fn serve(&self, ris: usize, subset: &[usize]) -> (PhaseConfig, Vec<f64>) {
        let groups = self.cfg.groups();
        if subset.is_empty() {
            return (PhaseConfig::zeros(groups), Vec::new());
        }
        let real = self.realizations[ris].select_users(subset);
        let objective = RateObjective::with_groups(
            &real,
            groups,
            self.cfg.levels(),
            self.cfg.tx_power_w(),
            self.cfg.noise_w(),
        )
        .expect("quota keeps each subset within the antenna count");
        let greedy = greedy_elementwise(&objective, &PhaseConfig::zeros(groups), &default_order(groups), MAX_GREEDY_SWEEPS)
            .expect("valid greedy inputs");
        let rates = objective.rates(greedy.best_config.indices(), None).per_user_rates;
        (greedy.best_config, rates)
    }
}

impl Utility for RisAssociationUtility {
    fn utilities(&self, assignment: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; assignment.len()];
        for ris in 0..self.realizations.len() {
            let subset: Vec<usize> = (0..assignment.len()).filter(|&u| assignment[u] == ris).collect();
            let (_, rates) = self.serve(ris, &subset);
            for (&u, r) in subset.iter().zip(rates) {
                out[u] = r;
            }
        }
        out
    }
}

/// Draws one realization per surface and builds the association instance.
/// Each surface accepts at most `min(quota, M)` users.
pub fn build_ris_association_instance<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    n_ris: usize,
    quota: usize,
    rng: &mut R,
) -> Result<MatchingInstance<RisAssociationUtility>> {
    let realizations = (0..n_ris)
        .map(|_| sample_channels(cfg, rng))
        .collect::<Result<Vec<_>>>()?;
    ris_association_from_realizations(cfg, realizations, quota)
}

pub fn ris_association_from_realizations(
    cfg: &SystemConfig,
    realizations: Vec<ChannelRealization>,
    quota: usize,
) -> Result<MatchingInstance<RisAssociationUtility>> {
    cfg.validate()?;
    if realizations.iter().any(|r| r.k_users() != cfg.k_users || r.n_elements() != cfg.n_elements) {
        return Err(Error::DimensionMismatch("realization does not match the config".into()));
    }
    let quota = quota.min(cfg.m_antennas);
    let quotas = vec![quota; realizations.len()];
    MatchingInstance::new(
        cfg.k_users,
        quotas,
        RisAssociationUtility {
            realizations,
            cfg: cfg.clone(),
        },
    )
}

/// Round-robin initial assignment `user -> user % n_right`, feasible whenever
/// quotas are balanced.
pub fn round_robin(n_left: usize, n_right: usize) -> Matching {
    Matching::new((0..n_left).map(|u| u % n_right).collect())
}
