//! Experiment orchestration: repeated stratified splits, NULL-class runs and
//! active-learning curves, with reports that carry their own configuration.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{run_session, ALConfig, SessionReport, Strategy};
use crate::classify::{fit, ClassifierConfig, NullRule, Prediction, ScaleMode, Scales};
use crate::data::{stratified_indices, LabeledDataset};
use crate::error::{Error, Result};
use crate::metric::PointCloud;
use crate::stats::Aggregate;

/// Seed of run `run` derived from a base seed (SplitMix64 step).
pub fn run_seed(seed: u64, run: usize) -> u64 {
    let mut z = seed.wrapping_add((run as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Rows are true labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        Confusion { labels, counts: vec![vec![0; k]; k] }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            row.iter_mut().zip(o).for_each(|(a, b)| *a += b);
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let hits: usize = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        hits as f64 / self.total().max(1) as f64
    }

    /// Fraction of row `truth` predicted correctly.
    pub fn recall(&self, truth: usize) -> f64 {
        let row: usize = self.counts[truth].iter().sum();
        self.counts[truth][truth] as f64 / row.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub runs: usize,
    pub standardize: bool,
    pub dedup_train: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub dataset: String,
    pub classifier: String,
    pub runs: Vec<RunRecord>,
    pub aggregate: Aggregate,
}

/// Mean accuracy curve of one strategy over repeated sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub dataset: String,
    pub strategy: Strategy,
    /// Mean number of labeled points after each iteration.
    pub labeled: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Accuracy per run and iteration; shorter runs repeat their last value.
    pub per_run: Vec<Vec<f64>>,
    /// Accuracy once half the budget has been spent, one value per run.
    pub at_half_budget: Vec<f64>,
    pub half_budget: Aggregate,
}

/// An externally produced accuracy row shown next to this crate's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub dataset: String,
    pub classifier: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub seed: u64,
    pub split: SplitSpec,
    /// Every parameter that influenced the results.
    pub config: serde_json::Value,
    #[serde(default)]
    pub cells: Vec<Cell>,
    #[serde(default)]
    pub curves: Vec<Curve>,
    #[serde(default)]
    pub baselines: Vec<BaselineRow>,
}

impl ExperimentReport {
    /// Whether every aggregate matches the per-run records it summarizes.
    pub fn aggregates_consistent(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 || (a.is_nan() && b.is_nan());
        let cells = self.cells.iter().all(|c| {
            let agg = Aggregate::of(&c.runs.iter().map(|r| r.accuracy).collect::<Vec<_>>());
            agg.n == c.aggregate.n && close(agg.mean, c.aggregate.mean) && close(agg.std, c.aggregate.std)
        });
        let curves = self.curves.iter().all(|c| {
            let agg = Aggregate::of(&c.at_half_budget);
            let means = (0..c.mean.len()).all(|i| {
                let col: Vec<f64> = c.per_run.iter().map(|r| r[i]).collect();
                close(crate::stats::mean(&col), c.mean[i]) && close(crate::stats::std_dev(&col), c.std[i])
            });
            means && close(agg.mean, c.half_budget.mean)
        });
        cells && curves
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Learning curves as long-format CSV: dataset, strategy, iteration, labeled, mean, std.
    pub fn write_curves_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dataset", "strategy", "iteration", "labeled", "mean_accuracy", "std_accuracy"])?;
        for c in &self.curves {
            for i in 0..c.mean.len() {
                w.write_record([
                    c.dataset.clone(),
                    c.strategy.to_string(),
                    i.to_string(),
                    format!("{}", c.labeled[i]),
                    format!("{}", c.mean[i]),
                    format!("{}", c.std[i]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads `dataset,classifier,mean,std` rows.
pub fn load_baselines(path: impl AsRef<Path>) -> Result<Vec<BaselineRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationBench {
    pub runs: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub standardize: bool,
    pub dedup_train: bool,
    pub classifier: ClassifierConfig,
}

impl Default for ClassificationBench {
    fn default() -> Self {
        ClassificationBench {
            runs: 10,
            train_fraction: 0.7,
            seed: 0,
            standardize: false,
            dedup_train: true,
            classifier: ClassifierConfig::default(),
        }
    }
}

fn prepare(data: &LabeledDataset, train: &[usize], test: &[usize], bench: &ClassificationBench) -> Result<(LabeledDataset, LabeledDataset)> {
    let (mut tr, mut te) = (data.subset(train), data.subset(test));
    if bench.standardize {
        let moments = tr.feature_moments();
        tr = tr.standardized(&moments)?;
        te = te.standardized(&moments)?;
    }
    if bench.dedup_train {
        tr = tr.dedup_within_class().0;
    }
    Ok((tr, te))
}

/// Evaluates the weighting classifier on `runs` seeded stratified splits of each dataset.
pub fn run_classification_bench(datasets: &[(String, LabeledDataset)], bench: &ClassificationBench) -> Result<ExperimentReport> {
    if bench.runs == 0 {
        return Err(Error::invalid("runs must be positive"));
    }
    let cells = datasets
        .iter()
        .map(|(name, data)| {
            let runs = (0..bench.runs)
                .into_par_iter()
                .map(|run| {
                    let seed = run_seed(bench.seed, run);
                    let split = stratified_indices(&data.labels, data.n_classes(), bench.train_fraction, seed)?;
                    let (train, test) = prepare(data, &split.train, &split.test, bench)?;
                    let model = fit(&train, &bench.classifier)?;
                    let mut confusion = Confusion::new(data.label_names.clone());
                    let mut hits = 0;
                    for (p, &truth) in model.predict_many(&test.cloud)?.iter().zip(&test.labels) {
                        if let Prediction::Label(l) = *p {
                            confusion.add(truth, l);
                            hits += usize::from(l == truth);
                        }
                    }
                    let accuracy = hits as f64 / test.len().max(1) as f64;
                    Ok(RunRecord { run, seed, train_size: train.len(), test_size: test.len(), accuracy, confusion })
                })
                .collect::<Result<Vec<_>>>()?;
            let aggregate = Aggregate::of(&runs.iter().map(|r| r.accuracy).collect::<Vec<_>>());
            Ok(Cell { dataset: name.clone(), classifier: "weighting".into(), runs, aggregate })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        id: format!("classification-{}", bench.seed),
        seed: bench.seed,
        split: SplitSpec {
            train_fraction: bench.train_fraction,
            runs: bench.runs,
            standardize: bench.standardize,
            dedup_train: bench.dedup_train,
        },
        config: serde_json::to_value(bench)?,
        cells,
        curves: Vec::new(),
        baselines: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullClassBench {
    /// The two training classes, as label ids of the source dataset.
    pub train_classes: (usize, usize),
    pub held_out: usize,
    pub null_rule: NullRule,
    pub t: f64,
    pub splits: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for NullClassBench {
    fn default() -> Self {
        NullClassBench {
            train_classes: (6, 9),
            held_out: 1,
            null_rule: NullRule::new(1.0 - 1e-11),
            t: 1.0,
            splits: 10,
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullClassReport {
    pub config: NullClassBench,
    /// Rows and columns ordered NULL, first class, second class; summed over splits.
    pub confusion: Confusion,
    pub per_split: Vec<Confusion>,
    pub null_rate: f64,
    pub class_rates: (f64, f64),
}

/// Trains on two classes and tests on them plus a held-out class that should come out NULL.
///
/// Each split takes the train fraction of the two classes (duplicates removed);
/// the test set is the remainder plus the same fraction complement of the held-out class.
pub fn run_null_class_bench(data: &LabeledDataset, bench: &NullClassBench) -> Result<NullClassReport> {
    let (a, b) = bench.train_classes;
    let k = data.n_classes();
    if a >= k || b >= k || bench.held_out >= k || a == b || bench.held_out == a || bench.held_out == b {
        return Err(Error::invalid("train classes and held-out class must be distinct labels of the dataset"));
    }
    if bench.splits == 0 {
        return Err(Error::invalid("splits must be positive"));
    }
    let names = vec!["NULL".to_string(), data.label_names[a].clone(), data.label_names[b].clone()];
    let pair: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == a || data.labels[i] == b).collect();
    let held: Vec<usize> = data.class_indices(bench.held_out);
    let pair_labels: Vec<usize> = pair.iter().map(|&i| usize::from(data.labels[i] == b)).collect();
    let config = ClassifierConfig {
        scales: Scales::Shared(bench.t),
        scale_mode: ScaleMode::Percentile,
        null: Some(bench.null_rule),
        ..Default::default()
    };
    let per_split = (0..bench.splits)
        .into_par_iter()
        .map(|s| {
            let seed = run_seed(bench.seed, s);
            let split = stratified_indices(&pair_labels, 2, bench.train_fraction, seed)?;
            let rows: Vec<usize> = split.train.iter().map(|&r| pair[r]).collect();
            let train = LabeledDataset::new(
                data.cloud.subset(&rows),
                split.train.iter().map(|&r| pair_labels[r]).collect(),
                names[1..].to_vec(),
            )?
            .dedup_within_class()
            .0;
            let model = fit(&train, &config)?;
            let mut held_order = held.clone();
            held_order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let n_held = held.len() - (held.len() as f64 * bench.train_fraction).round() as usize;
            let mut confusion = Confusion::new(names.clone());
            let mut tested: Vec<(usize, usize)> = split.test.iter().map(|&r| (pair[r], pair_labels[r] + 1)).collect();
            tested.extend(held_order[..n_held].iter().map(|&i| (i, 0)));
            for (i, truth) in tested {
                let col = match model.predict(data.point(i))? {
                    Prediction::Null => 0,
                    Prediction::Label(l) => l + 1,
                };
                confusion.add(truth, col);
            }
            Ok(confusion)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut confusion = Confusion::new(names);
    per_split.iter().for_each(|c| confusion.merge(c));
    Ok(NullClassReport {
        config: bench.clone(),
        null_rate: confusion.recall(0),
        class_rates: (confusion.recall(1), confusion.recall(2)),
        confusion,
        per_split,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALBench {
    pub runs: usize,
    pub pool_fraction: f64,
    pub budget: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub batch: usize,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
}

impl Default for ALBench {
    fn default() -> Self {
        ALBench {
            runs: 100,
            pool_fraction: 0.67,
            budget: 40,
            gamma: crate::active::DEFAULT_GAMMA,
            lambda: crate::active::DEFAULT_LAMBDA,
            batch: crate::active::DEFAULT_BATCH,
            seed: 0,
            strategies: Strategy::ALL.to_vec(),
        }
    }
}

/// Accuracy of the first record with at least `target` labels beyond the initial set.
fn accuracy_after(report: &SessionReport, target: usize) -> f64 {
    let initial = report.initial.len();
    let hit = report.history.iter().find(|r| r.labeled >= initial + target).or(report.history.last());
    hit.and_then(|r| r.accuracy).unwrap_or(f64::NAN)
}

fn curve(dataset: &str, strategy: Strategy, sessions: &[SessionReport], budget: usize) -> Curve {
    let len = sessions.iter().map(|s| s.history.len()).max().unwrap_or(0);
    let pad = |v: Vec<f64>| -> Vec<f64> {
        let last = *v.last().unwrap_or(&f64::NAN);
        (0..len).map(|i| *v.get(i).unwrap_or(&last)).collect()
    };
    let per_run: Vec<Vec<f64>> = sessions.iter().map(|s| pad(s.accuracies())).collect();
    let labeled: Vec<Vec<f64>> = sessions.iter().map(|s| pad(s.history.iter().map(|r| r.labeled as f64).collect())).collect();
    let column = |rows: &[Vec<f64>], i: usize| rows.iter().map(|r| r[i]).collect::<Vec<_>>();
    let at_half_budget: Vec<f64> = sessions.iter().map(|s| accuracy_after(s, budget / 2)).collect();
    Curve {
        dataset: dataset.to_string(),
        strategy,
        labeled: (0..len).map(|i| crate::stats::mean(&column(&labeled, i))).collect(),
        mean: (0..len).map(|i| crate::stats::mean(&column(&per_run, i))).collect(),
        std: (0..len).map(|i| crate::stats::std_dev(&column(&per_run, i))).collect(),
        half_budget: Aggregate::of(&at_half_budget),
        at_half_budget,
        per_run,
    }
}

/// Runs every strategy on `runs` seeded pool/test splits of each dataset.
///
/// Within a run all strategies share the split and the initial labeled set.
pub fn run_al_bench(datasets: &[(String, LabeledDataset)], bench: &ALBench) -> Result<ExperimentReport> {
    if bench.runs == 0 || bench.strategies.is_empty() {
        return Err(Error::invalid("need at least one run and one strategy"));
    }
    let mut curves = Vec::new();
    for (name, data) in datasets {
        for &strategy in &bench.strategies {
            let sessions = (0..bench.runs)
                .into_par_iter()
                .map(|run| {
                    let seed = run_seed(bench.seed, run);
                    let split = stratified_indices(&data.labels, data.n_classes(), bench.pool_fraction, seed)?;
                    let config = ALConfig {
                        strategy,
                        gamma: bench.gamma,
                        lambda: bench.lambda,
                        batch: bench.batch,
                        budget: Some(bench.budget),
                        seed,
                    };
                    run_session(&data.subset(&split.train), &data.subset(&split.test), &config)
                })
                .collect::<Result<Vec<_>>>()?;
            curves.push(curve(name, strategy, &sessions, bench.budget));
        }
    }
    Ok(ExperimentReport {
        id: format!("active-learning-{}", bench.seed),
        seed: bench.seed,
        split: SplitSpec { train_fraction: bench.pool_fraction, runs: bench.runs, standardize: false, dedup_train: false },
        config: serde_json::to_value(bench)?,
        cells: Vec::new(),
        curves,
        baselines: Vec::new(),
    })
}

/// First two principal components of a cloud, for display.
pub fn project_2d(cloud: &PointCloud) -> Vec<[f64; 2]> {
    let (n, d) = (cloud.len(), cloud.dim());
    let mean: Vec<f64> = (0..d).map(|k| cloud.points().map(|p| p[k]).sum::<f64>() / n as f64).collect();
    let centered = nalgebra::DMatrix::from_fn(n, d, |i, k| cloud.point(i)[k] - mean[k]);
    let cov = centered.transpose() * &centered;
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axis = |r: usize| -> Option<Vec<f64>> {
        order.get(r).map(|&c| {
            let v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            // Sign convention: the largest-magnitude component is positive.
            let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            v.iter().map(|x| if big < 0.0 { -x } else { *x }).collect()
        })
    };
    let (a, b) = (axis(0), axis(1));
    (0..n)
        .map(|i| {
            let row = centered.row(i);
            let proj = |v: &Option<Vec<f64>>| v.as_ref().map_or(0.0, |v| row.iter().zip(v).map(|(x, y)| x * y).sum());
            [proj(&a), proj(&b)]
        })
        .collect()
}
