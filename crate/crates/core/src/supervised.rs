//! Heuristic-labelled datasets and MLP predictors of the phase configuration
//! (classification over the joint space) or of the achievable sum-rate.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drl::raw_channel_features;
use crate::error::{Error, Result};
use crate::heuristic_drl::canonical;
use crate::metaheuristics::{tabu, TabuParams};
use crate::nn::{argmax, softmax, Activations, Adam, Gradients, Mlp};
use crate::search::{default_order, exhaustive_search, greedy_elementwise, EXHAUSTIVE_CAP, MAX_GREEDY_SWEEPS};
use crate::sysmodel::{sample_channels, PhaseConfig, RateObjective, SystemConfig};
use crate::seeded_rng;

const SCHEMA: &str = "ris-dataset/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Labeler {
    /// Element-by-element greedy from all-zeros with at most `sweeps` passes.
    Greedy { sweeps: usize },
    Tabu,
    Exhaustive,
}

impl Labeler {
    pub fn greedy() -> Self {
        Labeler::Greedy {
            sweeps: MAX_GREEDY_SWEEPS,
        }
    }

    pub fn label(&self, objective: &RateObjective) -> Result<(PhaseConfig, f64)> {
        let init = PhaseConfig::zeros(objective.groups());
        let r = match *self {
            Labeler::Greedy { sweeps } => greedy_elementwise(objective, &init, &default_order(objective.groups()), sweeps)?,
            Labeler::Tabu => tabu(objective, &TabuParams::default(), &init)?,
            Labeler::Exhaustive => exhaustive_search(objective)?,
        };
        Ok((r.best_config, r.best_value))
    }
}

impl fmt::Display for Labeler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Labeler::Greedy { sweeps } => write!(f, "greedy:{sweeps}"),
            Labeler::Tabu => write!(f, "tabu"),
            Labeler::Exhaustive => write!(f, "exhaustive"),
        }
    }
}

impl FromStr for Labeler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Labeler::greedy()),
            "tabu" => Ok(Labeler::Tabu),
            "exhaustive" => Ok(Labeler::Exhaustive),
            _ => match s.strip_prefix("greedy:").map(str::parse) {
                Some(Ok(sweeps)) if sweeps > 0 => Ok(Labeler::Greedy { sweeps }),
                _ => Err(Error::InvalidConfig(format!("unknown labeler {s:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// Seed of the row's channel draw; the realization is rebuilt from it.
    pub seed: u64,
    /// Raw (unstandardized) channel features, length 2·G·K.
    pub features: Vec<f64>,
    pub label: PhaseConfig,
    pub rate: f64,
}

/// Per-dimension affine map to zero mean and unit variance; constant
/// dimensions get scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut n = 0.0f64;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for s in samples {
            if sum.is_empty() {
                sum = vec![0.0; s.len()];
                sq = vec![0.0; s.len()];
            }
            n += 1.0;
            for (i, &x) in s.iter().enumerate() {
                sum[i] += x;
                sq[i] += x * x;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n.max(1.0)).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n.max(1.0) - m * m).max(0.0);
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema: String,
    labeler: Labeler,
    system: SystemConfig,
    feature_len: usize,
    rows: usize,
    generation_seconds: f64,
    standardization: Option<Standardizer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub system: SystemConfig,
    pub labeler: Labeler,
    pub rows: Vec<Row>,
    pub generation_seconds: f64,
    /// Filled in from the training split once a model has been fitted.
    pub standardization: Option<Standardizer>,
}

impl Dataset {
    pub fn feature_len(&self) -> usize {
        self.rows.first().map_or(0, |r| r.features.len())
    }

    pub fn classes(&self) -> usize {
        self.system.space_size() as usize
    }

    pub fn objective(&self, row: &Row) -> Result<RateObjective> {
        row_objective(&self.system, row.seed)
    }

    /// Writes a JSON header line followed by CSV rows
    /// `seed,rate,label,f0,f1,...` with the label as dash-separated phases.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            schema: SCHEMA.into(),
            labeler: self.labeler,
            system: self.system.clone(),
            feature_len: self.feature_len(),
            rows: self.rows.len(),
            generation_seconds: self.generation_seconds,
            standardization: self.standardization.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        let names: Vec<String> = (0..self.feature_len()).map(|i| format!("f{i}")).collect();
        writeln!(out, "seed,rate,label,{}", names.join(","))?;
        for row in &self.rows {
            let label: Vec<String> = row.label.indices().iter().map(usize::to_string).collect();
            let feats: Vec<String> = row.features.iter().map(f64::to_string).collect();
            writeln!(out, "{},{},{},{}", row.seed, row.rate, label.join("-"), feats.join(","))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || lines.next().transpose().map_err(Error::from);
        let header: Header = serde_json::from_str(&next()?.ok_or_else(|| Error::Format("empty dataset file".into()))?)?;
        if header.schema != SCHEMA {
            return Err(Error::Format(format!("unknown schema {:?}", header.schema)));
        }
        header.system.validate()?;
        next()?.ok_or_else(|| Error::Format("missing column header".into()))?;
        let levels = header.system.levels();
        let bad = |n: usize, what: &str| Error::Format(format!("row {n}: {what}"));
        let mut rows = Vec::with_capacity(header.rows);
        while let Some(line) = next()? {
            let n = rows.len() + 1;
            let mut fields = line.split(',');
            let mut field = || fields.next().ok_or_else(|| bad(n, "too few fields"));
            let seed = field()?.parse().map_err(|_| bad(n, "bad seed"))?;
            let rate = field()?.parse().map_err(|_| bad(n, "bad rate"))?;
            let label = field()?
                .split('-')
                .map(str::parse)
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map_err(|_| bad(n, "bad label"))?;
            let features = fields
                .map(str::parse)
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| bad(n, "bad feature"))?;
            if features.len() != header.feature_len || label.len() != header.system.groups() {
                return Err(bad(n, "wrong width"));
            }
            rows.push(Row {
                seed,
                features,
                label: PhaseConfig::new(label, levels)?,
                rate,
            });
        }
        if rows.len() != header.rows {
            return Err(Error::Format(format!("header announces {} rows, found {}", header.rows, rows.len())));
        }
        Ok(Self {
            system: header.system,
            labeler: header.labeler,
            rows,
            generation_seconds: header.generation_seconds,
            standardization: header.standardization,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(std::fs::File::open(path)?))
    }
}

fn row_objective(cfg: &SystemConfig, seed: u64) -> Result<RateObjective> {
    let real = sample_channels(cfg, &mut seeded_rng(seed))?;
    RateObjective::new(&real, cfg)
}

/// Draws `n_rows` independent channels (one seed per row from `rng`) and labels
/// each with the chosen heuristic.
pub fn generate_dataset<R: Rng + ?Sized>(cfg: &SystemConfig, n_rows: usize, labeler: Labeler, rng: &mut R) -> Result<Dataset> {
    cfg.validate()?;
    if n_rows == 0 {
        return Err(Error::InvalidConfig("a dataset needs at least one row".into()));
    }
    if labeler == Labeler::Exhaustive && cfg.space_size() > EXHAUSTIVE_CAP {
        return Err(Error::SpaceTooLarge {
            size: cfg.space_size(),
            cap: EXHAUSTIVE_CAP,
        });
    }
    let seeds: Vec<u64> = (0..n_rows).map(|_| rng.random()).collect();
    let started = Instant::now();
    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let obj = row_objective(cfg, seed)?;
            let (label, rate) = labeler.label(&obj)?;
            Ok(Row {
                seed,
                features: raw_channel_features(&obj),
                label,
                rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        system: cfg.clone(),
        labeler,
        rows,
        generation_seconds: started.elapsed().as_secs_f64(),
        standardization: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    ConfigClassification,
    RateRegression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            max_epochs: 200,
            batch: 64,
            lr: 1e-3,
            patience: 10,
        }
    }
}

/// Seeded 80/10/10 partition of row indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn new<R: Rng + ?Sized>(n_rows: usize, rng: &mut R) -> Result<Self> {
        let mut idx: Vec<usize> = (0..n_rows).collect();
        idx.shuffle(rng);
        let n_train = n_rows * 8 / 10;
        let n_val = n_rows / 10;
        if n_train == 0 || n_val == 0 || n_rows - n_train - n_val == 0 {
            return Err(Error::DegenerateDataset(format!("{n_rows} rows cannot be split 80/10/10")));
        }
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Ok(Self { train: idx, val, test })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub task: Task,
    pub net: Mlp,
    pub standardizer: Standardizer,
    /// Regression target mean and scale (bits/s/Hz); identity for classification.
    pub target_shift: (f64, f64),
    pub split: Split,
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
    pub groups: usize,
    pub levels: usize,
}

/// What a model says about one row.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Config(PhaseConfig),
    Rate(f64),
}

pub trait Predictor: Sync {
    fn predict(&self, row: &Row) -> Prediction;
}

impl<F: Fn(&Row) -> Prediction + Sync> Predictor for F {
    fn predict(&self, row: &Row) -> Prediction {
        self(row)
    }
}

impl Predictor for TrainedModel {
    fn predict(&self, row: &Row) -> Prediction {
        let out = self
            .net
            .forward(&self.standardizer.apply(&row.features))
            .expect("feature width fixed by the dataset");
        match self.task {
            Task::ConfigClassification => Prediction::Config(PhaseConfig::from_index(argmax(&out), self.groups, self.levels)),
            Task::RateRegression => Prediction::Rate(out[0] * self.target_shift.1 + self.target_shift.0),
        }
    }
}

/// Training class of a label: its canonical rotation, since rotated configs
/// have the same rate and would otherwise split one answer over L classes.
fn class_of(label: &PhaseConfig, levels: usize) -> usize {
    canonical(label, levels).to_index(levels)
}

/// Adam on minibatches with early stopping on validation loss; returns the
/// best-validation checkpoint. Standardization constants come from the
/// training split only and the test split is never read.
pub fn train_supervised<R: Rng + ?Sized>(ds: &Dataset, task: Task, cfg: &TrainConfig, rng: &mut R) -> Result<TrainedModel> {
    if cfg.batch == 0 || cfg.max_epochs == 0 {
        return Err(Error::InvalidConfig("batch and epochs must be positive".into()));
    }
    let split = Split::new(ds.rows.len(), rng)?;
    let (groups, levels) = (ds.system.groups(), ds.system.levels());
    let standardizer = Standardizer::fit(split.train.iter().map(|&i| ds.rows[i].features.as_slice()));
    let target_shift = match task {
        Task::ConfigClassification => (0.0, 1.0),
        Task::RateRegression => {
            let t = Standardizer::fit(split.train.iter().map(|&i| std::slice::from_ref(&ds.rows[i].rate)));
            (t.mean[0], t.scale[0])
        }
    };
    let inputs: Vec<Vec<f64>> = ds.rows.iter().map(|r| standardizer.apply(&r.features)).collect();
    let classes = levels.pow(groups as u32);
    let out_width = match task {
        Task::ConfigClassification => classes,
        Task::RateRegression => 1,
    };
    let mut sizes = vec![ds.feature_len()];
    sizes.extend(&cfg.hidden);
    sizes.push(out_width);
    let mut net = Mlp::new(&sizes, rng)?;
    let mut adam = Adam::new(&net, cfg.lr);
    let mut grads = Gradients::zeros_like(&net);
    let mut acts = Activations::default();

    // Loss and output gradient of one row.
    let loss_grad = |out: &[f64], i: usize, grad: &mut Vec<f64>| -> f64 {
        let row = &ds.rows[i];
        match task {
            Task::ConfigClassification => {
                let class = class_of(&row.label, levels);
                *grad = softmax(out);
                let loss = -grad[class].max(1e-300).ln();
                grad[class] -= 1.0;
                loss
            }
            Task::RateRegression => {
                let err = out[0] - (row.rate - target_shift.0) / target_shift.1;
                *grad = vec![err];
                0.5 * err * err
            }
        }
    };
    let mean_loss = |net: &Mlp, rows: &[usize]| -> f64 {
        let mut g = Vec::new();
        let total: f64 = rows
            .iter()
            .map(|&i| loss_grad(&net.forward(&inputs[i]).expect("width checked"), i, &mut g))
            .sum();
        total / rows.len() as f64
    };

    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut curve = Vec::new();
    let mut order = split.train.clone();
    let mut grad = Vec::new();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            grads.clear();
            for &i in chunk {
                net.forward_into(&inputs[i], &mut acts);
                train_loss += loss_grad(acts.output(), i, &mut grad);
                grad.iter_mut().for_each(|g| *g /= chunk.len() as f64);
                net.accumulate_gradients(&acts, &grad, &mut grads)?;
            }
            adam.step(&mut net, &grads)?;
        }
        let val_loss = mean_loss(&net, &split.val);
        curve.push(EpochStats {
            train_loss: train_loss / order.len() as f64,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, net.clone(), epoch);
        } else if epoch - best.2 >= cfg.patience {
            break;
        }
    }
    Ok(TrainedModel {
        task,
        net: best.1,
        standardizer,
        target_shift,
        split,
        curve,
        best_epoch: best.2,
        groups,
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rows: usize,
    /// Fraction of rows whose predicted config equals the label up to a common rotation.
    pub top1: Option<f64>,
    /// Mean of sum_rate(predicted) / label rate, re-evaluated on each row's channel.
    pub rate_ratio: Option<f64>,
    /// Rate prediction error, bits/s/Hz.
    pub rmse: Option<f64>,
}

pub fn evaluate_supervised(model: &dyn Predictor, ds: &Dataset, rows: &[usize]) -> Result<Metrics> {
    if rows.is_empty() {
        return Err(Error::DegenerateDataset("no rows to evaluate".into()));
    }
    let levels = ds.system.levels();
    let outcomes = rows
        .par_iter()
        .map(|&i| {
            let row = &ds.rows[i];
            Ok(match model.predict(row) {
                Prediction::Config(c) => {
                    let rate = ds.objective(row)?.value(c.indices());
                    let hit = class_of(&c, levels) == class_of(&row.label, levels);
                    (Some((hit, rate / row.rate)), None)
                }
                Prediction::Rate(r) => (None, Some((r - row.rate).powi(2))),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let configs: Vec<(bool, f64)> = outcomes.iter().filter_map(|o| o.0).collect();
    let errors: Vec<f64> = outcomes.iter().filter_map(|o| o.1).collect();
    let mean = |it: &mut dyn Iterator<Item = f64>| it.sum::<f64>() / n;
    Ok(Metrics {
        rows: rows.len(),
        top1: (!configs.is_empty()).then(|| mean(&mut configs.iter().map(|c| c.0 as u8 as f64))),
        rate_ratio: (!configs.is_empty()).then(|| mean(&mut configs.iter().map(|c| c.1))),
        rmse: (!errors.is_empty()).then(|| mean(&mut errors.iter().copied()).sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(groups: usize) -> SystemConfig {
        SystemConfig::default().with_elements(groups * 10)
    }

    fn dataset(groups: usize, n: usize, labeler: Labeler, seed: u64) -> Dataset {
        generate_dataset(&small_cfg(groups), n, labeler, &mut seeded_rng(seed)).unwrap()
    }

    #[test]
    fn single_group_greedy_equals_exhaustive() {
        let g = dataset(1, 40, Labeler::greedy(), 0);
        let e = dataset(1, 40, Labeler::Exhaustive, 0);
        for (a, b) in g.rows.iter().zip(&e.rows) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.rate, b.rate);
        }
    }

    #[test]
    fn labels_are_recheckable_and_deterministic() {
        let a = dataset(3, 30, Labeler::Tabu, 4);
        let b = dataset(3, 30, Labeler::Tabu, 4);
        assert_eq!(a.rows, b.rows);
        for row in &a.rows {
            let obj = a.objective(row).unwrap();
            assert_eq!(obj.value(row.label.indices()), row.rate);
            assert_eq!(row.features.len(), 30);
        }
    }

    #[test]
    fn tabu_labels_beat_one_sweep_greedy() {
        let t = dataset(3, 500, Labeler::Tabu, 1);
        let g = dataset(3, 500, Labeler::Greedy { sweeps: 1 }, 1);
        let mean = |d: &Dataset| d.rows.iter().map(|r| r.rate).sum::<f64>() / 500.0;
        assert!(mean(&t) >= mean(&g), "{} < {}", mean(&t), mean(&g));
    }

    #[test]
    fn exhaustive_labeler_respects_the_cap() {
        let cfg = SystemConfig {
            n_elements: 110,
            ..SystemConfig::default()
        };
        assert!(matches!(
            generate_dataset(&cfg, 1, Labeler::Exhaustive, &mut seeded_rng(0)),
            Err(Error::SpaceTooLarge { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let d = dataset(2, 12, Labeler::greedy(), 2);
        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("seed,rate,label,f0,"));
        assert_eq!(Dataset::read(buf.as_slice()).unwrap(), d);
        let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(Dataset::read(truncated.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn labeler_names_parse() {
        for l in [Labeler::greedy(), Labeler::Greedy { sweeps: 1 }, Labeler::Tabu, Labeler::Exhaustive] {
            assert_eq!(l.to_string().parse::<Labeler>().unwrap(), l);
        }
        assert_eq!("greedy".parse::<Labeler>().unwrap(), Labeler::greedy());
        assert!("annealing".parse::<Labeler>().is_err());
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let s = Split::new(103, &mut seeded_rng(0)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (82, 10, 11));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert!(matches!(Split::new(5, &mut seeded_rng(0)), Err(Error::DegenerateDataset(_))));
    }

    #[test]
    fn single_label_dataset_is_learned_quickly() {
        let mut d = dataset(2, 100, Labeler::greedy(), 3);
        let fixed = PhaseConfig::new(vec![0, 2], 4).unwrap();
        for row in &mut d.rows {
            row.label = fixed.clone();
        }
        let cfg = TrainConfig {
            max_epochs: 5,
            patience: 100,
            batch: 16,
            lr: 1e-2,
            ..TrainConfig::default()
        };
        let m = train_supervised(&d, Task::ConfigClassification, &cfg, &mut seeded_rng(0)).unwrap();
        for &i in &m.split.train {
            assert_eq!(m.predict(&d.rows[i]), Prediction::Config(fixed.clone()));
        }
    }

    #[test]
    fn constant_rate_regression_converges() {
        let mut d = dataset(2, 100, Labeler::greedy(), 3);
        for row in &mut d.rows {
            row.rate = 7.5;
        }
        let cfg = TrainConfig {
            max_epochs: 3000,
            patience: 3000,
            batch: 100,
            ..TrainConfig::default()
        };
        let m = train_supervised(&d, Task::RateRegression, &cfg, &mut seeded_rng(0)).unwrap();
        // Fitted rows only: 80 points in 20 dimensions leave the net free to
        // be nonzero between them, so held-out rows are not expected to match.
        let rmse = evaluate_supervised(&m, &d, &m.split.train).unwrap().rmse.unwrap();
        assert!(rmse < 1e-2, "rmse {rmse}");
        assert!(m.curve[m.best_epoch].train_loss < 1e-3 * m.curve[0].train_loss);
    }

    #[test]
    fn oracle_and_fixed_predictors() {
        let d = dataset(2, 60, Labeler::Exhaustive, 5);
        let all: Vec<usize> = (0..60).collect();
        let oracle = |row: &Row| Prediction::Config(row.label.clone());
        let m = evaluate_supervised(&oracle, &d, &all).unwrap();
        assert_eq!((m.top1, m.rate_ratio), (Some(1.0), Some(1.0)));

        let fixed_cfg = PhaseConfig::new(vec![1, 3], 4).unwrap();
        let fixed = |_: &Row| Prediction::Config(fixed_cfg.clone());
        let m = evaluate_supervised(&fixed, &d, &all).unwrap();
        let direct = d
            .rows
            .iter()
            .map(|r| d.objective(r).unwrap().value(&[1, 3]) / r.rate)
            .sum::<f64>()
            / 60.0;
        assert!((m.rate_ratio.unwrap() - direct).abs() < 1e-12);
        assert!(m.rate_ratio.unwrap() > 0.0 && m.rate_ratio.unwrap() <= 1.0);
    }

    #[test]
    fn training_never_reads_the_test_split() {
        let d = dataset(2, 200, Labeler::greedy(), 6);
        let cfg = TrainConfig {
            max_epochs: 15,
            ..TrainConfig::default()
        };
        let a = train_supervised(&d, Task::ConfigClassification, &cfg, &mut seeded_rng(1)).unwrap();
        // Scramble everything on test rows: labels, rates and features.
        let mut poisoned = d.clone();
        for &i in &a.split.test {
            let row = &mut poisoned.rows[i];
            row.label = PhaseConfig::new(vec![3, 3], 4).unwrap();
            row.rate = -1.0;
            row.features.iter_mut().for_each(|f| *f = 1e6);
        }
        let b = train_supervised(&poisoned, Task::ConfigClassification, &cfg, &mut seeded_rng(1)).unwrap();
        assert_eq!(a.split, b.split);
        assert_eq!(a.standardizer, b.standardizer);
        assert_eq!(a.net, b.net);
        assert_eq!(a.best_epoch, b.best_epoch);
        let refit = Standardizer::fit(a.split.train.iter().map(|&i| d.rows[i].features.as_slice()));
        assert_eq!(a.standardizer, refit);
        // The checkpoint returned is the best validation epoch.
        let best = a.curve.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(a.curve[a.best_epoch].val_loss, best);
    }
}
