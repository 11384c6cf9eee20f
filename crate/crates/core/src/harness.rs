//! Seeded, replicated experiment recipes and their on-disk outputs.
//!
//! Replicate k of an experiment uses seed `base + k`: the channel is drawn
//! first from that stream and every algorithm continues from a copy of the
//! stream state after the draw, so all algorithms see the same channel.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::drl::{dqn_train, DqnConfig, PhaseEnv, TrainLog};
use crate::error::{Error, Result};
use crate::heuristic_drl::{heuristic_drl, DEFAULT_RESTARTS};
use crate::hierarchical::{calibrate_three_arms, hierarchical_run, HierarchicalConfig, LearningRate};
use crate::matching::{brute_force_matching, round_robin, swap_matching, InterferenceUtility, MatchingInstance};
use crate::metaheuristics::{ga, pso, tabu, GaParams, PsoParams, TabuParams};
use crate::search::{default_order, exhaustive_search, greedy_elementwise, local_search, random_search, MAX_GREEDY_SWEEPS};
use crate::supervised::{evaluate_supervised, generate_dataset, train_supervised, Labeler, Task, TrainConfig};
use crate::sysmodel::{channel_stats, sample_channels, PhaseConfig, RateObjective, SystemConfig};
use crate::{seeded_rng, SimRng};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Smoothing window and plateau tail used for convergence speed.
pub const SMOOTHING_WINDOW: usize = 100;
pub const PLATEAU_TAIL: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    SweepElements,
    Convergence,
    Runtime,
    ReductionSweep,
    MatchingDemo,
    Supervised,
    Hierarchical,
    ChannelStats,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::SweepElements,
        Command::Convergence,
        Command::Runtime,
        Command::ReductionSweep,
        Command::MatchingDemo,
        Command::Supervised,
        Command::Hierarchical,
        Command::ChannelStats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SweepElements => "sweep-elements",
            Command::Convergence => "convergence",
            Command::Runtime => "runtime",
            Command::ReductionSweep => "reduction-sweep",
            Command::MatchingDemo => "matching-demo",
            Command::Supervised => "supervised",
            Command::Hierarchical => "hierarchical",
            Command::ChannelStats => "channel-stats",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown command {s:?}")))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algo {
    Exhaustive,
    /// One uniformly random configuration.
    Random,
    /// Best of `iterations` uniformly random configurations.
    RandomSearch,
    Greedy,
    LocalSearch,
    Pso,
    Ga,
    Tabu,
    Dqn,
    HeuristicDrl,
}

impl Algo {
    pub const ALL: [Algo; 10] = [
        Algo::Exhaustive,
        Algo::Random,
        Algo::RandomSearch,
        Algo::Greedy,
        Algo::LocalSearch,
        Algo::Pso,
        Algo::Ga,
        Algo::Tabu,
        Algo::Dqn,
        Algo::HeuristicDrl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Exhaustive => "exhaustive",
            Algo::Random => "random",
            Algo::RandomSearch => "random-search",
            Algo::Greedy => "greedy",
            Algo::LocalSearch => "local-search",
            Algo::Pso => "pso",
            Algo::Ga => "ga",
            Algo::Tabu => "tabu",
            Algo::Dqn => "dqn",
            Algo::HeuristicDrl => "heuristic-drl",
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, Algo::Dqn | Algo::HeuristicDrl)
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub system: SystemConfig,
    pub elements: Vec<usize>,
    pub algos: Vec<Algo>,
    pub iterations: usize,
    pub runs: usize,
    pub seed: u64,
    pub jobs: usize,
    pub rho: f64,
    pub rho_sweep: Vec<f64>,
    pub restarts: usize,
    pub dqn: DqnConfig,
    pub rows: usize,
    pub labeler: Labeler,
    pub task: Task,
    pub train: TrainConfig,
    pub hierarchical: HierarchicalConfig,
    /// Calibrate the power penalty so the middle of three levels is best.
    pub auto_power_weight: bool,
    pub calibration_slots: usize,
    pub matching_users: usize,
    pub matching_resources: usize,
    pub matching_quota: usize,
    pub samples: usize,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        let (elements, algos) = match command {
            Command::SweepElements => (vec![20, 30, 40], vec![Algo::Exhaustive, Algo::Random, Algo::Dqn, Algo::HeuristicDrl]),
            Command::Convergence => (vec![40], vec![Algo::Dqn, Algo::HeuristicDrl]),
            Command::Runtime => (vec![40], vec![Algo::Exhaustive, Algo::Greedy, Algo::Dqn, Algo::HeuristicDrl]),
            Command::ReductionSweep => (vec![40], vec![Algo::HeuristicDrl]),
            Command::Supervised => (vec![20], vec![]),
            _ => (vec![40], vec![]),
        };
        Self {
            command,
            system: SystemConfig::default(),
            elements,
            algos,
            iterations: 8000,
            runs: 10,
            seed: 0,
            jobs: 1,
            rho: 0.7,
            rho_sweep: vec![0.1, 0.3, 0.5, 0.7, 0.9, 0.95],
            restarts: DEFAULT_RESTARTS,
            dqn: DqnConfig::default(),
            rows: 5000,
            labeler: Labeler::greedy(),
            task: Task::ConfigClassification,
            train: TrainConfig::default(),
            hierarchical: HierarchicalConfig::default(),
            auto_power_weight: true,
            calibration_slots: 2000,
            matching_users: 6,
            matching_resources: 3,
            matching_quota: 2,
            samples: 100_000,
            out: PathBuf::from("results"),
        }
    }

    /// Applies one `key=value` setting. Unknown keys and unparsable values
    /// are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value {v:?} for {key}")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            let out = v.split(',').map(|x| num(key, x)).collect::<Result<Vec<T>>>()?;
            if out.is_empty() {
                return Err(Error::InvalidConfig(format!("empty list for {key}")));
            }
            Ok(out)
        }
        let v = value.trim();
        let s = &mut self.system;
        match key.trim() {
            "m_antennas" => s.m_antennas = num(key, v)?,
            "k_users" => s.k_users = num(key, v)?,
            "n_elements" | "elements" => {
                self.elements = list(key, v)?;
                s.n_elements = self.elements[0];
            }
            "group_size" => s.group_size = num(key, v)?,
            "phase_bits" => s.phase_bits = num(key, v)?,
            "d_bs_ris" => s.d_bs_ris = num(key, v)?,
            "d_ris_user_min" => s.d_ris_user_min = num(key, v)?,
            "d_ris_user_max" => s.d_ris_user_max = num(key, v)?,
            "rician_k" => s.rician_k = num(key, v)?,
            "pathloss_exp_bs_ris" => s.pathloss_exp_bs_ris = num(key, v)?,
            "pathloss_exp_ris_user" => s.pathloss_exp_ris_user = num(key, v)?,
            "pathloss_ref_db" => s.pathloss_ref_db = num(key, v)?,
            "tx_power_dbm" => s.tx_power_dbm = num(key, v)?,
            "noise_dbm" => s.noise_dbm = num(key, v)?,
            "algos" => {
                self.algos = v.split(',').map(|a| a.trim().parse()).collect::<Result<_>>()?;
            }
            "iterations" => self.iterations = num(key, v)?,
            "runs" => self.runs = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "jobs" => self.jobs = num(key, v)?,
            "rho" => self.rho = num(key, v)?,
            "rho_sweep" => self.rho_sweep = list(key, v)?,
            "restarts" => self.restarts = num(key, v)?,
            "dqn_hidden" => self.dqn.hidden = list(key, v)?,
            "dqn_gamma" => self.dqn.gamma = num(key, v)?,
            "dqn_epsilon_start" => self.dqn.epsilon_start = num(key, v)?,
            "dqn_epsilon_end" => self.dqn.epsilon_end = num(key, v)?,
            "dqn_epsilon_decay" => self.dqn.epsilon_decay_steps = num(key, v)?,
            "dqn_buffer" => self.dqn.buffer_capacity = num(key, v)?,
            "dqn_batch" => self.dqn.batch = num(key, v)?,
            "dqn_lr" => self.dqn.lr = num(key, v)?,
            "dqn_target_sync" => self.dqn.target_sync_period = num(key, v)?,
            "dqn_learn_start" => self.dqn.learn_start = num(key, v)?,
            "heuristic_exploration" => self.dqn.heuristic_exploration = num(key, v)?,
            "rows" => self.rows = num(key, v)?,
            "labeler" => self.labeler = v.parse()?,
            "task" => {
                self.task = match v {
                    "classification" => Task::ConfigClassification,
                    "regression" => Task::RateRegression,
                    _ => return Err(Error::InvalidConfig(format!("unknown task {v:?}"))),
                }
            }
            "epochs" => self.train.max_epochs = num(key, v)?,
            "train_batch" => self.train.batch = num(key, v)?,
            "train_lr" => self.train.lr = num(key, v)?,
            "patience" => self.train.patience = num(key, v)?,
            "train_hidden" => self.train.hidden = list(key, v)?,
            "delta_steps" => self.hierarchical.delta_steps = num(key, v)?,
            "horizon" => self.hierarchical.horizon = num(key, v)?,
            "power_levels" => self.hierarchical.power_levels_dbm = list(key, v)?,
            "power_weight" => {
                self.auto_power_weight = v == "auto";
                if !self.auto_power_weight {
                    self.hierarchical.power_weight = num(key, v)?;
                }
            }
            "greedy_sweeps" => self.hierarchical.greedy_sweeps = num(key, v)?,
            "meta_epsilon" => self.hierarchical.epsilon = num(key, v)?,
            "meta_gamma" => self.hierarchical.gamma = num(key, v)?,
            "meta_lr" => {
                self.hierarchical.lr = match v {
                    "inverse" => LearningRate::InverseCount,
                    _ => LearningRate::Constant(num(key, v)?),
                }
            }
            "rate_buckets" => self.hierarchical.rate_buckets = num(key, v)?,
            "calibration_slots" => self.calibration_slots = num(key, v)?,
            "matching_users" => self.matching_users = num(key, v)?,
            "matching_resources" => self.matching_resources = num(key, v)?,
            "matching_quota" => self.matching_quota = num(key, v)?,
            "samples" => self.samples = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key=value` file; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key=value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.runs == 0 || self.jobs == 0 || self.iterations == 0 || self.restarts == 0 {
            return bad("runs, jobs, iterations and restarts must be positive".into());
        }
        for &n in &self.elements {
            self.system.clone().with_elements(n).validate()?;
        }
        if !(0.0..1.0).contains(&self.rho) || self.rho_sweep.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("reduction ratios must lie in [0, 1)".into());
        }
        self.dqn.validate()?;
        self.hierarchical.validate()?;
        if self.auto_power_weight && self.command == Command::Hierarchical && self.hierarchical.power_levels_dbm.len() != 3 {
            return bad("power_weight=auto needs exactly three power levels".into());
        }
        if self.command == Command::ChannelStats && self.samples < 1000 {
            return bad("channel statistics need at least 1000 samples".into());
        }
        if self.matching_resources == 0 || self.matching_quota * self.matching_resources < self.matching_users {
            return bad("matching quotas cannot seat every user".into());
        }
        Ok(())
    }

    fn join<T: ToString>(v: &[T]) -> String {
        v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
    }

    /// Every setting as `key=value`, one per line, in a fixed order.
    /// Feeding the echo back through [`Self::apply_file`] reproduces the config.
    pub fn echo(&self) -> String {
        let s = &self.system;
        let h = &self.hierarchical;
        let d = &self.dqn;
        let task = match self.task {
            Task::ConfigClassification => "classification",
            Task::RateRegression => "regression",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("command", self.command.to_string()),
            ("version", VERSION.to_string()),
            ("m_antennas", s.m_antennas.to_string()),
            ("k_users", s.k_users.to_string()),
            ("elements", Self::join(&self.elements)),
            ("group_size", s.group_size.to_string()),
            ("phase_bits", s.phase_bits.to_string()),
            ("d_bs_ris", s.d_bs_ris.to_string()),
            ("d_ris_user_min", s.d_ris_user_min.to_string()),
            ("d_ris_user_max", s.d_ris_user_max.to_string()),
            ("rician_k", s.rician_k.to_string()),
            ("pathloss_exp_bs_ris", s.pathloss_exp_bs_ris.to_string()),
            ("pathloss_exp_ris_user", s.pathloss_exp_ris_user.to_string()),
            ("pathloss_ref_db", s.pathloss_ref_db.to_string()),
            ("tx_power_dbm", s.tx_power_dbm.to_string()),
            ("noise_dbm", s.noise_dbm.to_string()),
            ("algos", Self::join(&self.algos)),
            ("iterations", self.iterations.to_string()),
            ("runs", self.runs.to_string()),
            ("seed", self.seed.to_string()),
            ("jobs", self.jobs.to_string()),
            ("rho", self.rho.to_string()),
            ("rho_sweep", Self::join(&self.rho_sweep)),
            ("restarts", self.restarts.to_string()),
            ("dqn_hidden", Self::join(&d.hidden)),
            ("dqn_gamma", d.gamma.to_string()),
            ("dqn_epsilon_start", d.epsilon_start.to_string()),
            ("dqn_epsilon_end", d.epsilon_end.to_string()),
            ("dqn_epsilon_decay", d.epsilon_decay_steps.to_string()),
            ("dqn_buffer", d.buffer_capacity.to_string()),
            ("dqn_batch", d.batch.to_string()),
            ("dqn_lr", d.lr.to_string()),
            ("dqn_target_sync", d.target_sync_period.to_string()),
            ("dqn_learn_start", d.learn_start.to_string()),
            ("heuristic_exploration", d.heuristic_exploration.to_string()),
            ("rows", self.rows.to_string()),
            ("labeler", self.labeler.to_string()),
            ("task", task.to_string()),
            ("epochs", self.train.max_epochs.to_string()),
            ("train_batch", self.train.batch.to_string()),
            ("train_lr", self.train.lr.to_string()),
            ("patience", self.train.patience.to_string()),
            ("train_hidden", Self::join(&self.train.hidden)),
            ("delta_steps", h.delta_steps.to_string()),
            ("horizon", h.horizon.to_string()),
            ("power_levels", Self::join(&h.power_levels_dbm)),
            (
                "power_weight",
                if self.auto_power_weight { "auto".into() } else { h.power_weight.to_string() },
            ),
            ("greedy_sweeps", h.greedy_sweeps.to_string()),
            ("meta_epsilon", h.epsilon.to_string()),
            ("meta_gamma", h.gamma.to_string()),
            (
                "meta_lr",
                match h.lr {
                    LearningRate::InverseCount => "inverse".into(),
                    LearningRate::Constant(lr) => lr.to_string(),
                },
            ),
            ("rate_buckets", h.rate_buckets.to_string()),
            ("calibration_slots", self.calibration_slots.to_string()),
            ("matching_users", self.matching_users.to_string()),
            ("matching_resources", self.matching_resources.to_string()),
            ("matching_quota", self.matching_quota.to_string()),
            ("samples", self.samples.to_string()),
            ("out", self.out.display().to_string()),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    fn system_for(&self, elements: usize) -> SystemConfig {
        self.system.clone().with_elements(elements)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
    }
}

/// One algorithm on one channel.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub algo: Algo,
    pub elements: usize,
    pub run: usize,
    pub seed: u64,
    pub target_rho: Option<f64>,
    /// Final sum-rate: the best config found, or the greedy policy's config
    /// after training for the learning agents.
    pub sum_rate: f64,
    pub config: PhaseConfig,
    pub exhaustive: f64,
    pub seconds: f64,
    /// Pre-run share of `seconds` for the pruned agent.
    pub greedy_seconds: Option<f64>,
    pub achieved_rho: Option<f64>,
    pub log: Option<TrainLog>,
}

impl Outcome {
    pub fn ratio(&self) -> f64 {
        self.sum_rate / self.exhaustive
    }
}

/// Channel of replicate `seed` at `elements`, plus the stream to continue from.
pub fn replicate_channel(system: &SystemConfig, seed: u64) -> Result<(RateObjective, PhaseEnv, SimRng)> {
    let mut rng = seeded_rng(seed);
    let real = sample_channels(system, &mut rng)?;
    let obj = RateObjective::new(&real, system)?;
    let env = PhaseEnv::new(&real, system)?;
    Ok((obj, env, rng))
}

/// Runs `algo` on replicate `run` (seed = base + run). Wall-clock covers the
/// algorithm call only.
pub fn run_algorithm(cfg: &ExperimentConfig, algo: Algo, elements: usize, run: usize, rho: f64) -> Result<Outcome> {
    let seed = cfg.seed + run as u64;
    let system = cfg.system_for(elements);
    let (obj, mut env, stream) = replicate_channel(&system, seed)?;
    let exhaustive = exhaustive_search(&obj)?.best_value;
    let mut rng = stream;
    let zeros = PhaseConfig::zeros(obj.groups());
    let started = Instant::now();
    let mut greedy_seconds = None;
    let mut achieved_rho = None;
    let mut log = None;
    let (config, sum_rate) = match algo {
        Algo::Exhaustive => {
            let r = exhaustive_search(&obj)?;
            (r.best_config, r.best_value)
        }
        Algo::Random => {
            let r = random_search(&obj, 1, &mut rng)?;
            (r.best_config, r.best_value)
        }
        Algo::RandomSearch => {
            let r = random_search(&obj, cfg.iterations, &mut rng)?;
            (r.best_config, r.best_value)
        }
        Algo::Greedy => {
            let r = greedy_elementwise(&obj, &zeros, &default_order(obj.groups()), MAX_GREEDY_SWEEPS)?;
            (r.best_config, r.best_value)
        }
        Algo::LocalSearch => {
            let r = local_search(&obj, &zeros)?;
            (r.best_config, r.best_value)
        }
        Algo::Pso => {
            let r = pso(&obj, &PsoParams::for_levels(obj.levels()), &mut rng)?;
            (r.best_config, r.best_value)
        }
        Algo::Ga => {
            let r = ga(&obj, &GaParams::default(), &mut rng)?;
            (r.best_config, r.best_value)
        }
        Algo::Tabu => {
            let r = tabu(&obj, &TabuParams::default(), &zeros)?;
            (r.best_config, r.best_value)
        }
        Algo::Dqn => {
            let l = dqn_train(&mut env, &cfg.dqn, cfg.iterations, &mut rng)?;
            let out = (l.final_config.clone(), l.final_sum_rate);
            log = Some(l);
            out
        }
        Algo::HeuristicDrl => {
            let h = heuristic_drl(&obj, rho, cfg.restarts, &cfg.dqn, cfg.iterations, &mut rng)?;
            greedy_seconds = Some(h.reduced.greedy_duration.as_secs_f64());
            achieved_rho = Some(h.reduced.achieved_rho);
            let out = (h.log.final_config.clone(), h.log.final_sum_rate);
            log = Some(h.log);
            out
        }
    };
    let seconds = started.elapsed().as_secs_f64();
    Ok(Outcome {
        algo,
        elements,
        run,
        seed,
        target_rho: (algo == Algo::HeuristicDrl).then_some(rho),
        sum_rate,
        config,
        exhaustive,
        seconds,
        greedy_seconds,
        achieved_rho,
        log,
    })
}

/// First iteration (1-based) at which the trailing `window` mean of `series`
/// reaches `fraction` of the plateau, the mean of the last `tail` values.
/// Returns the series length if it never does.
pub fn iterations_to_fraction(series: &[f64], window: usize, fraction: f64, tail: usize) -> usize {
    let n = series.len();
    if n == 0 {
        return 0;
    }
    let window = window.clamp(1, n);
    let tail = tail.clamp(1, n);
    let plateau = series[n - tail..].iter().sum::<f64>() / tail as f64;
    let mut sum: f64 = series[..window - 1].iter().sum();
    for i in window - 1..n {
        sum += series[i];
        if sum / window as f64 >= fraction * plateau {
            return i + 1;
        }
        sum -= series[i + 1 - window];
    }
    n
}

pub fn tail_mean(series: &[f64], tail: usize) -> f64 {
    let tail = tail.clamp(1, series.len().max(1));
    series[series.len().saturating_sub(tail)..].iter().sum::<f64>() / tail as f64
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoSummary {
    pub algorithm: String,
    pub elements: usize,
    pub target_rho: Option<f64>,
    pub runs: usize,
    pub mean_sum_rate: f64,
    pub std_sum_rate: f64,
    pub mean_ratio_to_exhaustive: f64,
    pub mean_achieved_rho: Option<f64>,
    pub mean_iterations_to_90: Option<f64>,
    pub mean_last_1000_sum_rate: Option<f64>,
    pub mean_wall_clock_seconds: f64,
    pub mean_greedy_seconds: Option<f64>,
}

impl AlgoSummary {
    pub fn from_outcomes(outcomes: &[&Outcome]) -> Self {
        let first = outcomes[0];
        let rates: Vec<f64> = outcomes.iter().map(|o| o.sum_rate).collect();
        let opt = |f: &dyn Fn(&Outcome) -> Option<f64>| {
            let v: Vec<f64> = outcomes.iter().filter_map(|o| f(o)).collect();
            (v.len() == outcomes.len()).then(|| mean(&v))
        };
        Self {
            algorithm: first.algo.to_string(),
            elements: first.elements,
            target_rho: first.target_rho,
            runs: outcomes.len(),
            mean_sum_rate: mean(&rates),
            std_sum_rate: std_dev(&rates),
            mean_ratio_to_exhaustive: mean(&outcomes.iter().map(|o| o.ratio()).collect::<Vec<_>>()),
            mean_achieved_rho: opt(&|o| o.achieved_rho),
            mean_iterations_to_90: opt(&|o| {
                o.log
                    .as_ref()
                    .map(|l| iterations_to_fraction(&l.sum_rate, SMOOTHING_WINDOW, 0.9, PLATEAU_TAIL) as f64)
            }),
            mean_last_1000_sum_rate: opt(&|o| o.log.as_ref().map(|l| tail_mean(&l.sum_rate, PLATEAU_TAIL))),
            mean_wall_clock_seconds: mean(&outcomes.iter().map(|o| o.seconds).collect::<Vec<_>>()),
            mean_greedy_seconds: opt(&|o| o.greedy_seconds),
        }
    }
}

/// One algorithm on one replicate; the per-iteration logs live in `runs/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub elements: usize,
    pub target_rho: Option<f64>,
    pub run: usize,
    pub seed: u64,
    pub sum_rate: f64,
    pub exhaustive: f64,
    pub config: Vec<usize>,
    pub achieved_rho: Option<f64>,
    pub iterations_to_90: Option<usize>,
    pub wall_clock_seconds: f64,
}

impl From<&Outcome> for RunRecord {
    fn from(o: &Outcome) -> Self {
        Self {
            algorithm: o.algo.to_string(),
            elements: o.elements,
            target_rho: o.target_rho,
            run: o.run,
            seed: o.seed,
            sum_rate: o.sum_rate,
            exhaustive: o.exhaustive,
            config: o.config.indices().to_vec(),
            achieved_rho: o.achieved_rho,
            iterations_to_90: o
                .log
                .as_ref()
                .map(|l| iterations_to_fraction(&l.sum_rate, SMOOTHING_WINDOW, 0.9, PLATEAU_TAIL)),
            wall_clock_seconds: o.seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub runs: usize,
    pub summaries: Vec<AlgoSummary>,
    pub per_run: Vec<RunRecord>,
    /// Recipe-specific results.
    pub extra: serde_json::Value,
}

/// Creates the output tree (`out/`, `out/curves/`, `out/runs/`).
pub fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("curves"))?;
    fs::create_dir_all(dir.join("runs"))?;
    let probe = dir.join(".write-check");
    fs::write(&probe, b"")?;
    fs::remove_file(probe)?;
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(contents)?;
    Ok(())
}

/// Runs the configured recipe, writes `config.echo`, the CSV curves and
/// `summary.json` under `cfg.out`, and returns the record.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    cfg.validate()?;
    prepare_output(&cfg.out)?;
    write_file(&cfg.out.join("config.echo"), cfg.echo().as_bytes())?;
    let pool = cfg.pool()?;
    let (summaries, per_run, extra) = pool.install(|| match cfg.command {
        Command::SweepElements | Command::Convergence | Command::Runtime => algorithm_grid(cfg),
        Command::ReductionSweep => reduction_sweep(cfg),
        Command::MatchingDemo => matching_demo(cfg),
        Command::Supervised => supervised_recipe(cfg),
        Command::Hierarchical => hierarchical_recipe(cfg),
        Command::ChannelStats => channel_stats_recipe(cfg),
    })?;
    let record = ExperimentRecord {
        version: VERSION.to_string(),
        command: cfg.command.to_string(),
        seed: cfg.seed,
        runs: cfg.runs,
        summaries,
        per_run,
        extra,
    };
    write_file(&cfg.out.join("summary.json"), serde_json::to_string_pretty(&record)?.as_bytes())?;
    Ok(record)
}

type RecipeOutput = Result<(Vec<AlgoSummary>, Vec<RunRecord>, serde_json::Value)>;

/// Every (elements, run, algorithm) cell, computed in parallel and returned in
/// grid order.
fn grid(cfg: &ExperimentConfig, rhos: &[f64]) -> Result<Vec<Outcome>> {
    let mut cells = Vec::new();
    for &n in &cfg.elements {
        for &rho in rhos {
            for run in 0..cfg.runs {
                for &algo in &cfg.algos {
                    cells.push((n, rho, run, algo));
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|&(n, rho, run, algo)| run_algorithm(cfg, algo, n, run, rho))
        .collect()
}

fn group_by<'a, K: Ord>(outcomes: &'a [Outcome], key: impl Fn(&Outcome) -> K) -> BTreeMap<K, Vec<&'a Outcome>> {
    let mut map: BTreeMap<K, Vec<&Outcome>> = BTreeMap::new();
    for o in outcomes {
        map.entry(key(o)).or_default().push(o);
    }
    map
}

fn algorithm_grid(cfg: &ExperimentConfig) -> RecipeOutput {
    let outcomes = grid(cfg, &[cfg.rho])?;
    let curves = cfg.out.join("curves");
    let mut summaries = Vec::new();
    let mut table = String::from("algorithm,elements,runs,mean_sum_rate,std_sum_rate,mean_ratio_to_exhaustive\n");
    for ((algo, n), group) in group_by(&outcomes, |o| (o.algo, o.elements)) {
        let s = AlgoSummary::from_outcomes(&group);
        table += &format!(
            "{},{},{},{},{},{}\n",
            algo, n, s.runs, s.mean_sum_rate, s.std_sum_rate, s.mean_ratio_to_exhaustive
        );
        summaries.push(s);
    }
    for (algo, group) in group_by(&outcomes, |o| o.algo) {
        let mut csv = String::from("elements,run,seed,sum_rate,exhaustive\n");
        for o in &group {
            csv += &format!("{},{},{},{},{}\n", o.elements, o.run, o.seed, o.sum_rate, o.exhaustive);
        }
        write_file(&curves.join(format!("{algo}_sum_rate.csv")), csv.as_bytes())?;
        if cfg.command == Command::Runtime {
            let mut csv = String::from("elements,run,seed,seconds,greedy_seconds\n");
            for o in &group {
                let g = o.greedy_seconds.map_or(String::new(), |g| g.to_string());
                csv += &format!("{},{},{},{},{}\n", o.elements, o.run, o.seed, o.seconds, g);
            }
            write_file(&curves.join(format!("{algo}_wall_clock.csv")), csv.as_bytes())?;
        }
    }
    write_file(&cfg.out.join("sum_rate_vs_elements.csv"), table.as_bytes())?;
    write_training_curves(cfg, &outcomes)?;
    Ok((summaries, outcomes.iter().map(RunRecord::from).collect(), json!({})))
}

/// Per-run training logs and the run-averaged reward curve of each learning agent.
fn write_training_curves(cfg: &ExperimentConfig, outcomes: &[Outcome]) -> Result<()> {
    for ((algo, n), group) in group_by(outcomes, |o| (o.algo, o.elements)) {
        let logs: Vec<&TrainLog> = group.iter().filter_map(|o| o.log.as_ref()).collect();
        if logs.is_empty() {
            continue;
        }
        let suffix = if cfg.elements.len() > 1 { format!("_n{n}") } else { String::new() };
        for (o, log) in group.iter().zip(&logs) {
            let mut buf = Vec::new();
            log.write_csv(&mut buf)?;
            let rho = o.target_rho.map_or(String::new(), |r| format!("_rho{r}"));
            write_file(&cfg.out.join("runs").join(format!("{algo}{suffix}{rho}_run{}.csv", o.run)), &buf)?;
        }
        let iters = logs[0].iterations();
        let k = logs.len() as f64;
        let mut csv = String::from("iteration,reward,sum_rate,best_so_far\n");
        for i in 0..iters {
            let avg = |f: &dyn Fn(&TrainLog) -> f64| logs.iter().map(|l| f(l)).sum::<f64>() / k;
            csv += &format!(
                "{},{},{},{}\n",
                i + 1,
                avg(&|l| l.reward[i]),
                avg(&|l| l.sum_rate[i]),
                avg(&|l| l.best_so_far[i])
            );
        }
        write_file(&cfg.out.join("curves").join(format!("{algo}{suffix}_reward.csv")), csv.as_bytes())?;
    }
    Ok(())
}

fn reduction_sweep(cfg: &ExperimentConfig) -> RecipeOutput {
    let sweep_cfg = ExperimentConfig {
        algos: vec![Algo::HeuristicDrl],
        ..cfg.clone()
    };
    let outcomes = grid(&sweep_cfg, &cfg.rho_sweep)?;
    let mut per_run = String::from("target_rho,elements,run,seed,achieved_rho,sum_rate,exhaustive\n");
    let mut table = String::from("target_rho,elements,runs,mean_achieved_rho,mean_sum_rate,std_sum_rate,mean_ratio_to_exhaustive\n");
    let mut summaries = Vec::new();
    for o in &outcomes {
        per_run += &format!(
            "{},{},{},{},{},{},{}\n",
            o.target_rho.unwrap_or(0.0),
            o.elements,
            o.run,
            o.seed,
            o.achieved_rho.unwrap_or(0.0),
            o.sum_rate,
            o.exhaustive
        );
    }
    // Keyed by the position in the sweep list to keep its order.
    for (_, group) in group_by(&outcomes, |o| {
        let rho = o.target_rho.unwrap_or(0.0);
        (o.elements, cfg.rho_sweep.iter().position(|&r| r == rho))
    }) {
        let s = AlgoSummary::from_outcomes(&group);
        table += &format!(
            "{},{},{},{},{},{},{}\n",
            s.target_rho.unwrap_or(0.0),
            s.elements,
            s.runs,
            s.mean_achieved_rho.unwrap_or(0.0),
            s.mean_sum_rate,
            s.std_sum_rate,
            s.mean_ratio_to_exhaustive
        );
        summaries.push(s);
    }
    write_file(&cfg.out.join("curves").join("heuristic-drl_reduction.csv"), per_run.as_bytes())?;
    write_file(&cfg.out.join("reduction_tradeoff.csv"), table.as_bytes())?;
    Ok((
        summaries,
        outcomes.iter().map(RunRecord::from).collect(),
        json!({ "rho_sweep": cfg.rho_sweep }),
    ))
}

fn matching_demo(cfg: &ExperimentConfig) -> RecipeOutput {
    let rows = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let seed = cfg.seed + run as u64;
            let mut rng = seeded_rng(seed);
            let utility = InterferenceUtility::random(cfg.matching_users, cfg.matching_resources, &mut rng);
            let inst = MatchingInstance::new(cfg.matching_users, vec![cfg.matching_quota; cfg.matching_resources], utility)?;
            let init = round_robin(cfg.matching_users, cfg.matching_resources);
            let swap = swap_matching(&inst, &init, 1000, &mut rng)?;
            let brute = brute_force_matching(&inst)?;
            let best = inst.total_utility(&brute);
            Ok((run, seed, swap.total_utility, best, swap.rounds, inst.is_exchange_stable(&swap.matching)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("run,seed,swap_utility,optimal_utility,ratio,rounds,exchange_stable\n");
    for &(run, seed, swap, best, rounds, stable) in &rows {
        csv += &format!("{run},{seed},{swap},{best},{},{rounds},{stable}\n", swap / best);
    }
    write_file(&cfg.out.join("curves").join("matching_utility.csv"), csv.as_bytes())?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.2 / r.3).collect();
    Ok((
        Vec::new(),
        Vec::new(),
        json!({
            "instances": rows.len(),
            "mean_ratio_to_optimal": mean(&ratios),
            "all_exchange_stable": rows.iter().all(|r| r.5),
        }),
    ))
}

fn supervised_recipe(cfg: &ExperimentConfig) -> RecipeOutput {
    let system = cfg.system_for(cfg.elements[0]);
    let mut rng = seeded_rng(cfg.seed);
    let mut ds = generate_dataset(&system, cfg.rows, cfg.labeler, &mut rng)?;
    let started = Instant::now();
    let model = train_supervised(&ds, cfg.task, &cfg.train, &mut rng)?;
    let train_seconds = started.elapsed().as_secs_f64();
    let metrics = evaluate_supervised(&model, &ds, &model.split.test)?;
    ds.standardization = Some(model.standardizer.clone());
    ds.save(&cfg.out.join("dataset.csv"))?;
    model.net.save(&cfg.out.join("model.json"))?;
    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for (i, e) in model.curve.iter().enumerate() {
        csv += &format!("{},{},{}\n", i + 1, e.train_loss, e.val_loss);
    }
    write_file(&cfg.out.join("curves").join("supervised_loss.csv"), csv.as_bytes())?;
    let extra = json!({
        "labeler": cfg.labeler.to_string(),
        "rows": cfg.rows,
        "test_rows": model.split.test.len(),
        "best_epoch": model.best_epoch + 1,
        "metrics": metrics,
        "generation_seconds": ds.generation_seconds,
        "train_seconds": train_seconds,
    });
    write_file(&cfg.out.join("metrics.json"), serde_json::to_string_pretty(&extra)?.as_bytes())?;
    Ok((Vec::new(), Vec::new(), extra))
}

fn hierarchical_recipe(cfg: &ExperimentConfig) -> RecipeOutput {
    let system = cfg.system_for(cfg.elements[0]);
    let mut h = cfg.hierarchical.clone();
    let calibration = if cfg.auto_power_weight {
        let c = calibrate_three_arms(&system, &h, cfg.calibration_slots, &mut seeded_rng(cfg.seed))?;
        h.power_weight = c.power_weight;
        Some(c)
    } else {
        None
    };
    let logs = (0..cfg.runs)
        .into_par_iter()
        .map(|run| hierarchical_run(&system, &h, &mut seeded_rng(cfg.seed + run as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("run,meta_step,power_dbm,mean_rate,reward\n");
    for (run, log) in logs.iter().enumerate() {
        for (i, s) in log.steps.iter().enumerate() {
            csv += &format!("{run},{},{},{},{}\n", i + 1, s.power_dbm, s.mean_rate, s.reward);
        }
    }
    write_file(&cfg.out.join("curves").join("hierarchical_reward.csv"), csv.as_bytes())?;
    let policies: Vec<f64> = logs.iter().map(|l| h.power_levels_dbm[l.policy]).collect();
    Ok((
        Vec::new(),
        Vec::new(),
        json!({
            "power_weight": h.power_weight,
            "calibration": calibration,
            "learned_power_dbm": policies,
            "evaluations_per_slot": logs[0].evaluations_per_slot,
        }),
    ))
}

fn channel_stats_recipe(cfg: &ExperimentConfig) -> RecipeOutput {
    let system = SystemConfig {
        seed: cfg.seed,
        ..cfg.system_for(cfg.elements[0])
    };
    let stats = channel_stats(&system, cfg.samples)?;
    let mut csv = String::from("link,mean_power,configured_pathloss,power_ratio,k_factor\n");
    for (name, l) in [("bs_ris", &stats.bs_ris), ("ris_user", &stats.ris_user)] {
        csv += &format!("{name},{},{},{},{}\n", l.mean_power, l.configured_pathloss, l.power_ratio, l.k_factor);
    }
    write_file(&cfg.out.join("curves").join("channel_stats.csv"), csv.as_bytes())?;
    Ok((
        Vec::new(),
        Vec::new(),
        json!({ "stats": stats, "configured_k_factor": system.rician_k }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut a = ExperimentConfig::new(Command::Runtime);
        a.set("elements", "20,30").unwrap();
        a.set("algos", "greedy,dqn").unwrap();
        a.set("power_weight", "2.5").unwrap();
        a.set("labeler", "greedy:1").unwrap();
        let mut b = ExperimentConfig::new(Command::Runtime);
        let echo: String = a.echo().lines().filter(|l| !l.starts_with("command=") && !l.starts_with("version=")).map(|l| format!("{l}\n")).collect();
        b.apply_file(&echo).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_settings_are_rejected() {
        let mut c = ExperimentConfig::new(Command::SweepElements);
        assert!(c.set("nonsense", "1").is_err());
        assert!(c.set("runs", "many").is_err());
        assert!(c.set("algos", "dqn,annealing").is_err());
        assert!(c.apply_file("runs 3").is_err());
        c.set("runs", "0").unwrap();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new(Command::SweepElements);
        c.set("elements", "25").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn file_comments_and_blank_lines() {
        let mut c = ExperimentConfig::new(Command::SweepElements);
        c.apply_file("# defaults\n\nruns = 3 # three\nseed=7\n").unwrap();
        assert_eq!((c.runs, c.seed), (3, 7));
    }

    #[test]
    fn convergence_metric() {
        let mut s = vec![1.0; 50];
        s.extend(vec![10.0; 150]);
        // Plateau 10; a window of 10 first averages >= 9 once nine tens are in.
        assert_eq!(iterations_to_fraction(&s, 10, 0.9, 100), 59);
        assert_eq!(iterations_to_fraction(&[1.0; 20], 5, 0.9, 5), 5);
        assert_eq!(tail_mean(&s, 100), 10.0);
    }

    #[test]
    fn statistics() {
        assert_eq!(std_dev(&[3.0]), 0.0);
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - 1.2909944487358056).abs() < 1e-15);
    }

    #[test]
    fn replicates_share_the_channel() {
        let mut cfg = ExperimentConfig::new(Command::SweepElements);
        cfg.iterations = 50;
        let a = run_algorithm(&cfg, Algo::Exhaustive, 20, 3, 0.7).unwrap();
        let b = run_algorithm(&cfg, Algo::Greedy, 20, 3, 0.7).unwrap();
        assert_eq!(a.exhaustive, b.exhaustive);
        assert_eq!(a.seed, 3);
        assert!(b.sum_rate <= a.sum_rate);
        assert_eq!(a.sum_rate, a.exhaustive);
    }
}
