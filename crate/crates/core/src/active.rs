//! Pool-based active learning with a kernel ridge (LS-SVM) learner.
//!
//! The weighting strategy partitions the whole pool by predicted label and,
//! within each predicted class, queries the unlabeled points of smallest and
//! largest `|w|`. Uncertainty sampling and random sampling serve as baselines.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cholesky::{dot, Cholesky};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metric::{check_scale, Metric, PointCloud};
use crate::weighting::weighting;

pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_LAMBDA: f64 = 1e-3;
pub const DEFAULT_BATCH: usize = 4;
const TIE_TOLERANCE: f64 = 1e-12;

/// One binary LS-SVM `f(x) = K(x, L)' a + b` with the Laplacian kernel `exp(-gamma |x - y|_1)`.
#[derive(Debug, Clone, PartialEq)]
struct Binary {
    coef: Vec<f64>,
    bias: f64,
}

/// Kernel ridge classifier over a labeled set; one-vs-rest when there are more than two classes.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRidgeModel {
    support: PointCloud,
    n_classes: usize,
    machines: Vec<Binary>,
    gamma: f64,
    lambda: f64,
}

fn kernel_cloud(points: &PointCloud, gamma: f64) -> Result<PointCloud> {
    points.clone().with_metric(Metric::L1).with_scale(gamma)
}

/// Fits the classifier to `labels[i]` at `points[i]`.
///
/// Requires at least one example of every class in `0..n_classes` and `lambda >= 0`.
pub fn train_classifier(
    points: &PointCloud,
    labels: &[usize],
    n_classes: usize,
    gamma: f64,
    lambda: f64,
) -> Result<KernelRidgeModel> {
    check_scale(gamma)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!("ridge parameter must be finite and >= 0, got {lambda}")));
    }
    if labels.len() != points.len() {
        return Err(Error::invalid(format!("{} labels for {} points", labels.len(), points.len())));
    }
    if n_classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(Error::invalid(format!("label {l} outside 0..{n_classes}")));
        }
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::in_class(c, Error::invalid("no labeled example")));
    }
    let support = kernel_cloud(points, gamma)?;
    let m = support.len();
    let factor = Cholesky::from_fn(m, |i, j| if i == j { 1.0 + lambda } else { (-support.distance(i, j)).exp() })?;
    let u = factor.solve(&vec![1.0; m]);
    let u_sum: f64 = u.iter().sum();
    let positives: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
    let machines = positives
        .iter()
        .map(|&c| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            let v = factor.solve(&y);
            let bias = v.iter().sum::<f64>() / u_sum;
            Binary { coef: v.iter().zip(&u).map(|(v, u)| v - bias * u).collect(), bias }
        })
        .collect();
    Ok(KernelRidgeModel { support, n_classes, machines, gamma, lambda })
}

impl KernelRidgeModel {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// `w_0` in `f(x) = K(x, L)' w - w_0`, one per binary machine.
    pub fn offsets(&self) -> Vec<f64> {
        self.machines.iter().map(|b| -b.bias).collect()
    }

    pub fn coefficients(&self) -> Vec<&[f64]> {
        self.machines.iter().map(|b| b.coef.as_slice()).collect()
    }

    /// Decision values: one for a binary model, one per class otherwise.
    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        let k = self.support.similarity_column(x);
        self.machines.iter().map(|b| dot(&k, &b.coef) + b.bias).collect()
    }

    pub fn predict_from(&self, f: &[f64]) -> usize {
        if self.n_classes == 2 {
            return usize::from(f[0] >= 0.0);
        }
        let mut best = 0;
        for c in 1..f.len() {
            if f[c] > f[best] {
                best = c;
            }
        }
        best
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        self.predict_from(&self.decision(x))
    }

    /// `|f(x)|` for a binary model, the gap between the two largest decision values otherwise.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let f = self.decision(x);
        if f.len() == 1 {
            return f[0].abs();
        }
        let mut sorted = f;
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted[0] - sorted[1]
    }

    pub fn accuracy(&self, test: &LabeledDataset) -> f64 {
        let hits = (0..test.len()).filter(|&i| self.predict(test.point(i)) == test.labels[i]).count();
        hits as f64 / test.len().max(1) as f64
    }
}

/// Weighting-vector query: min and max `|w|` over unlabeled points of each predicted class.
///
/// `predicted` holds the model's label for every pool point. Repeated points in a
/// predicted class share one weight. Classes whose weighting fails contribute nothing.
/// Weights within a relative `1e-12` of each other tie and go to the lower index.
pub fn weighting_query(
    pool: &PointCloud,
    predicted: &[usize],
    unlabeled: &[bool],
    n_classes: usize,
    gamma: f64,
    batch: usize,
) -> Vec<usize> {
    let mut mins = Vec::new();
    let mut maxs = Vec::new();
    for c in 0..n_classes {
        let members: Vec<usize> = (0..pool.len()).filter(|&i| predicted[i] == c).collect();
        if !members.iter().any(|&i| unlabeled[i]) {
            continue;
        }
        let Some(weights) = class_weights(pool, &members, gamma, c) else { continue };
        let mut lo: Option<(f64, usize)> = None;
        let mut hi: Option<(f64, usize)> = None;
        for (&i, &w) in members.iter().zip(&weights) {
            if !unlabeled[i] {
                continue;
            }
            let a = w.abs();
            if lo.is_none_or(|(v, _)| a < v - TIE_TOLERANCE * v) {
                lo = Some((a, i));
            }
            if hi.is_none_or(|(v, _)| a > v + TIE_TOLERANCE * v) {
                hi = Some((a, i));
            }
        }
        mins.extend(lo.map(|(_, i)| i));
        maxs.extend(hi.map(|(_, i)| i));
    }
    let mut seen = BTreeSet::new();
    mins.into_iter().chain(maxs).filter(|&i| seen.insert(i)).take(batch).collect()
}

fn class_weights(pool: &PointCloud, members: &[usize], gamma: f64, class: usize) -> Option<Vec<f64>> {
    let mut unique: Vec<usize> = Vec::new();
    let mut slot: HashMap<Vec<u64>, usize> = HashMap::new();
    let rep: Vec<usize> = members
        .iter()
        .map(|&i| {
            let key = pool.point(i).iter().map(|v| (v + 0.0).to_bits()).collect();
            *slot.entry(key).or_insert_with(|| {
                unique.push(i);
                unique.len() - 1
            })
        })
        .collect();
    let cloud = kernel_cloud(&pool.subset(&unique), gamma).ok()?;
    match weighting(&cloud) {
        Ok(state) => Some(rep.iter().map(|&r| state.weights()[r]).collect()),
        Err(e) => {
            log::warn!("weighting of predicted class {class} failed, skipping it this round: {e}");
            None
        }
    }
}

/// The `batch` unlabeled points with the smallest margin; ties by index.
pub fn uncertainty_query(model: &KernelRidgeModel, pool: &PointCloud, unlabeled: &[bool], batch: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> =
        (0..pool.len()).filter(|&i| unlabeled[i]).map(|i| (model.margin(pool.point(i)), i)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(batch).map(|(_, i)| i).collect()
}

pub fn random_query(rng: &mut ChaCha8Rng, unlabeled: &[bool], batch: usize) -> Vec<usize> {
    let candidates: Vec<usize> = (0..unlabeled.len()).filter(|&i| unlabeled[i]).collect();
    candidates.choose_multiple(rng, batch).copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Weighting,
    Uncertainty,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Weighting, Strategy::Uncertainty, Strategy::Random];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Weighting => "weighting",
            Strategy::Uncertainty => "uncertainty",
            Strategy::Random => "random",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weighting" | "magnitude" => Ok(Strategy::Weighting),
            "uncertainty" => Ok(Strategy::Uncertainty),
            "random" => Ok(Strategy::Random),
            other => Err(Error::invalid(format!(
                "unknown strategy `{other}` (expected weighting, uncertainty or random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALConfig {
    pub strategy: Strategy,
    pub gamma: f64,
    pub lambda: f64,
    pub batch: usize,
    /// Labels to acquire beyond the initial set; `None` runs until the pool is exhausted.
    pub budget: Option<usize>,
    pub seed: u64,
}

impl Default for ALConfig {
    fn default() -> Self {
        ALConfig {
            strategy: Strategy::Weighting,
            gamma: DEFAULT_GAMMA,
            lambda: DEFAULT_LAMBDA,
            batch: DEFAULT_BATCH,
            budget: None,
            seed: 0,
        }
    }
}

impl ALConfig {
    pub fn validate(&self) -> Result<()> {
        check_scale(self.gamma).map_err(|_| Error::invalid(format!("gamma must be positive, got {}", self.gamma)))?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub labeled: usize,
    pub queried: Vec<usize>,
    pub accuracy: Option<f64>,
}

/// Why a label submission was refused. The session is unchanged in every case.
#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("no queries are pending")]
    NothingPending,
    #[error("index {0} is not in the current query batch")]
    NotQueried(usize),
    #[error("index {0} is labeled more than once")]
    Duplicate(usize),
    #[error("label {label} for index {index} is outside 0..{n_classes}")]
    UnknownLabel { index: usize, label: usize, n_classes: usize },
    #[error("missing labels for queried indices {0:?}")]
    Incomplete(Vec<usize>),
    #[error(transparent)]
    Model(#[from] Error),
}

/// An active-learning loop over a fixed pool, advanced one labeled batch at a time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ALSession {
    config: ALConfig,
    pool: PointCloud,
    label_names: Vec<String>,
    test: Option<LabeledDataset>,
    revealed: Vec<Option<usize>>,
    initial: Vec<usize>,
    pending: Vec<usize>,
    history: Vec<IterationRecord>,
    rng: ChaCha8Rng,
    #[serde(skip)]
    model: Option<KernelRidgeModel>,
}

pub const CHECKPOINT_FORMAT: &str = "magnitude-al-session";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    session: ALSession,
}

impl ALSession {
    /// Starts a session with the given initial labels (possibly none).
    ///
    /// Until every class has a label, queries are drawn at random.
    pub fn new(
        pool: PointCloud,
        label_names: Vec<String>,
        test: Option<LabeledDataset>,
        initial: &[(usize, usize)],
        config: ALConfig,
    ) -> Result<Self> {
        config.validate()?;
        let k = label_names.len();
        if k < 2 {
            return Err(Error::invalid("active learning needs at least two classes"));
        }
        if let Some(t) = &test {
            if t.dim() != pool.dim() || t.n_classes() != k {
                return Err(Error::invalid("test set does not match the pool's dimension or label set"));
            }
        }
        let mut revealed = vec![None; pool.len()];
        for &(i, l) in initial {
            if i >= pool.len() || l >= k {
                return Err(Error::invalid(format!("initial label ({i}, {l}) out of range")));
            }
            if revealed[i].replace(l).is_some() {
                return Err(Error::invalid(format!("index {i} labeled twice")));
            }
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut s = ALSession {
            config,
            pool,
            label_names,
            test,
            revealed,
            initial: initial.iter().map(|&(i, _)| i).collect(),
            pending: Vec::new(),
            history: Vec::new(),
            rng,
            model: None,
        };
        s.retrain()?;
        s.history.push(IterationRecord { iteration: 0, labeled: s.labeled_count(), queried: Vec::new(), accuracy: s.test_accuracy() });
        Ok(s)
    }

    /// Starts from one randomly chosen point per class of a fully labeled pool.
    pub fn with_stratified_start(pool: &LabeledDataset, test: Option<LabeledDataset>, config: ALConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_1a11);
        let mut initial = Vec::new();
        for c in 0..pool.n_classes() {
            let members = pool.class_indices(c);
            let &i = members
                .choose(&mut rng)
                .ok_or_else(|| Error::in_class(c, Error::invalid("class has no pool points")))?;
            initial.push((i, c));
        }
        initial.sort_unstable();
        Self::new(pool.cloud.clone(), pool.label_names.clone(), test, &initial, config)
    }

    pub fn config(&self) -> &ALConfig {
        &self.config
    }

    pub fn pool(&self) -> &PointCloud {
        &self.pool
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn model(&self) -> Option<&KernelRidgeModel> {
        self.model.as_ref()
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn iteration(&self) -> usize {
        self.history.len() - 1
    }

    pub fn initial(&self) -> &[usize] {
        &self.initial
    }

    pub fn pending(&self) -> &[usize] {
        &self.pending
    }

    pub fn revealed(&self) -> &[Option<usize>] {
        &self.revealed
    }

    /// Labeled pool indices in ascending order.
    pub fn labeled(&self) -> Vec<usize> {
        (0..self.pool.len()).filter(|&i| self.revealed[i].is_some()).collect()
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.pool.len()).filter(|&i| self.revealed[i].is_none()).collect()
    }

    pub fn labeled_count(&self) -> usize {
        self.revealed.iter().filter(|l| l.is_some()).count()
    }

    /// Labels acquired beyond the initial set.
    pub fn spent(&self) -> usize {
        self.labeled_count() - self.initial.len()
    }

    pub fn remaining_budget(&self) -> usize {
        let open = self.pool.len() - self.labeled_count();
        self.config.budget.map_or(open, |b| b.saturating_sub(self.spent()).min(open))
    }

    pub fn is_done(&self) -> bool {
        self.pending.is_empty() && self.remaining_budget() == 0
    }

    pub fn predictions(&self) -> Option<Vec<usize>> {
        let model = self.model.as_ref()?;
        Some(self.pool.points().map(|x| model.predict(x)).collect())
    }

    pub fn test_accuracy(&self) -> Option<f64> {
        Some(self.model.as_ref()?.accuracy(self.test.as_ref()?))
    }

    fn retrain(&mut self) -> Result<()> {
        let labeled = self.labeled();
        let labels: Vec<usize> = labeled.iter().map(|&i| self.revealed[i].unwrap()).collect();
        let mut present = vec![false; self.n_classes()];
        labels.iter().for_each(|&l| present[l] = true);
        self.model = if present.iter().all(|&p| p) {
            Some(train_classifier(&self.pool.subset(&labeled), &labels, self.n_classes(), self.config.gamma, self.config.lambda)?)
        } else {
            None
        };
        Ok(())
    }

    /// The batch awaiting labels, computing a new one if none is pending.
    pub fn next_queries(&mut self) -> &[usize] {
        if self.pending.is_empty() {
            let room = self.remaining_budget().min(self.config.batch);
            if room > 0 {
                self.pending = self.select(room);
            }
        }
        &self.pending
    }

    fn select(&mut self, room: usize) -> Vec<usize> {
        let unlabeled: Vec<bool> = self.revealed.iter().map(Option::is_none).collect();
        let Some(model) = &self.model else {
            return random_query(&mut self.rng, &unlabeled, room);
        };
        let chosen = match self.config.strategy {
            Strategy::Weighting => {
                let predicted: Vec<usize> = self.pool.points().map(|x| model.predict(x)).collect();
                weighting_query(&self.pool, &predicted, &unlabeled, self.n_classes(), self.config.gamma, room)
            }
            Strategy::Uncertainty => uncertainty_query(model, &self.pool, &unlabeled, room),
            Strategy::Random => random_query(&mut self.rng, &unlabeled, room),
        };
        if chosen.is_empty() {
            log::warn!("{} strategy produced no queries; falling back to uncertainty sampling", self.config.strategy);
            return uncertainty_query(model, &self.pool, &unlabeled, room);
        }
        chosen
    }

    /// Applies labels for exactly the pending batch, retrains and records the iteration.
    pub fn apply_labels(&mut self, labels: &[(usize, usize)]) -> std::result::Result<&IterationRecord, SubmitError> {
        if self.pending.is_empty() {
            return Err(SubmitError::NothingPending);
        }
        let mut given: HashMap<usize, usize> = HashMap::new();
        for &(index, label) in labels {
            if !self.pending.contains(&index) {
                return Err(SubmitError::NotQueried(index));
            }
            if label >= self.n_classes() {
                return Err(SubmitError::UnknownLabel { index, label, n_classes: self.n_classes() });
            }
            if given.insert(index, label).is_some() {
                return Err(SubmitError::Duplicate(index));
            }
        }
        let missing: Vec<usize> = self.pending.iter().copied().filter(|i| !given.contains_key(i)).collect();
        if !missing.is_empty() {
            return Err(SubmitError::Incomplete(missing));
        }
        let before = self.revealed.clone();
        for (&i, &l) in &given {
            self.revealed[i] = Some(l);
        }
        if let Err(e) = self.retrain() {
            self.revealed = before;
            self.retrain().ok();
            return Err(e.into());
        }
        let queried = std::mem::take(&mut self.pending);
        self.history.push(IterationRecord {
            iteration: self.history.len(),
            labeled: self.labeled_count(),
            queried,
            accuracy: self.test_accuracy(),
        });
        Ok(self.history.last().unwrap())
    }

    /// Queries and answers one batch from `truth`; returns `false` once the session is done.
    pub fn step_with_oracle(&mut self, truth: &[usize]) -> Result<bool> {
        let batch: Vec<(usize, usize)> = self.next_queries().iter().map(|&i| (i, truth[i])).collect();
        if batch.is_empty() {
            return Ok(false);
        }
        self.apply_labels(&batch).map_err(|e| match e {
            SubmitError::Model(e) => e,
            other => Error::invalid(other.to_string()),
        })?;
        Ok(true)
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        let cp = Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, session: self.clone() };
        Ok(serde_json::to_string(&cp)?)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text)?;
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!("unsupported checkpoint {} v{}", cp.format, cp.version)));
        }
        let mut s = cp.session;
        s.config.validate()?;
        if s.revealed.len() != s.pool.len() || s.history.is_empty() {
            return Err(Error::invalid("checkpoint is inconsistent"));
        }
        s.retrain()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub config: ALConfig,
    pub pool_size: usize,
    pub initial: Vec<usize>,
    pub history: Vec<IterationRecord>,
}

impl SessionReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.accuracy.unwrap_or(f64::NAN)).collect()
    }
}

/// Runs a session to completion with ground-truth labels from `pool`.
pub fn run_session(pool: &LabeledDataset, test: &LabeledDataset, config: &ALConfig) -> Result<SessionReport> {
    let mut s = ALSession::with_stratified_start(pool, Some(test.clone()), config.clone())?;
    while s.step_with_oracle(&pool.labels)? {}
    Ok(SessionReport { config: config.clone(), pool_size: pool.len(), initial: s.initial.clone(), history: s.history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, stratified_split};
    use super::Strategy;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn blobs(seed: u64, per_class: usize) -> LabeledDataset {
        gen_blobs(&[vec![-3.0, 0.0], vec![3.0, 0.0]], 1.0, per_class, seed).unwrap()
    }

    #[test]
    fn two_points_are_separated() {
        let pts = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 2.0]], Metric::L2).unwrap();
        for gamma in [0.01, 0.1, 5.0] {
            let m = train_classifier(&pts, &[0, 1], 2, gamma, 1e-6).unwrap();
            assert!(m.decision(&[0.0, 0.0])[0] < 0.0 && m.decision(&[1.0, 2.0])[0] > 0.0);
        }
    }

    #[test]
    fn large_ridge_flattens_the_decision() {
        let d = blobs(1, 20);
        let m = train_classifier(&d.cloud, &d.labels, 2, 0.1, 1e9).unwrap();
        assert!(m.coefficients()[0].iter().all(|a| a.abs() < 1e-8));
        let f: Vec<f64> = d.cloud.points().map(|x| m.decision(x)[0]).collect();
        assert!(f.iter().all(|v| (v - f[0]).abs() < 1e-6));
    }

    #[test]
    fn matches_dense_lssvm_and_fits_blobs() {
        let d = blobs(3, 50);
        let m = train_classifier(&d.cloud, &d.labels, 2, 0.1, 1e-3).unwrap();
        let n = d.len();
        let mut a = DMatrix::zeros(n + 1, n + 1);
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            a[(0, i + 1)] = 1.0;
            a[(i + 1, 0)] = 1.0;
            rhs[i + 1] = if d.labels[i] == 1 { 1.0 } else { -1.0 };
            for j in 0..n {
                let l1: f64 = d.point(i).iter().zip(d.point(j)).map(|(x, y)| (x - y).abs()).sum();
                a[(i + 1, j + 1)] = (-0.1 * l1).exp() + if i == j { 1e-3 } else { 0.0 };
            }
        }
        let sol = a.lu().solve(&rhs).unwrap();
        assert!((m.offsets()[0] + sol[0]).abs() < 1e-6);
        for i in 0..n {
            assert!((m.coefficients()[0][i] - sol[i + 1]).abs() < 1e-6 * (1.0 + sol[i + 1].abs()));
        }
        assert!(m.accuracy(&d) >= 0.99);
    }

    #[test]
    fn duplicates_without_ridge_are_singular() {
        let pts = PointCloud::from_rows(&[[0.0], [0.0], [1.0]], Metric::L2).unwrap();
        let e = train_classifier(&pts, &[0, 0, 1], 2, 0.1, 0.0).unwrap_err();
        assert!(matches!(e, Error::IllConditioned { .. }));
        assert!(train_classifier(&pts, &[0, 0, 0], 2, 0.1, 1e-3).is_err());
    }

    #[test]
    fn one_vs_rest_predicts_three_blobs() {
        let d = gen_blobs(&[vec![0.0, 0.0], vec![8.0, 0.0], vec![0.0, 8.0]], 1.0, 30, 4).unwrap();
        let m = train_classifier(&d.cloud, &d.labels, 3, 0.1, 1e-3).unwrap();
        assert_eq!(m.machines.len(), 3);
        assert!(m.accuracy(&d) >= 0.98);
    }

    #[test]
    fn single_predicted_class_yields_at_most_two() {
        let pool = PointCloud::from_rows(&[[0.0], [1.0], [3.0], [7.0]], Metric::L2).unwrap();
        let q = weighting_query(&pool, &[1, 1, 1, 1], &[true; 4], 2, 0.1, 4);
        assert!(q.len() <= 2 && !q.is_empty());
    }

    #[test]
    fn collinear_class_queries_middle_and_endpoint() {
        let pool = PointCloud::from_rows(&[[0.0], [1.0], [2.0], [50.0]], Metric::L2).unwrap();
        let q = weighting_query(&pool, &[1, 1, 1, 0], &[true, true, true, false], 2, 0.5, 4);
        assert_eq!(q, vec![1, 0]);
    }

    #[test]
    fn repeated_points_share_a_weight() {
        let pool = PointCloud::from_rows(&[[0.0], [1.0], [1.0], [2.0]], Metric::L2).unwrap();
        let q = weighting_query(&pool, &[0, 0, 0, 0], &[false, false, true, true], 2, 0.5, 4);
        assert_eq!(q, vec![2, 3]);
    }

    #[test]
    fn uncertainty_ties_and_order() {
        let pts = PointCloud::from_rows(&[[0.0], [10.0]], Metric::L2).unwrap();
        let m = train_classifier(&pts, &[0, 1], 2, 0.1, 1e3).unwrap();
        let flat = KernelRidgeModel {
            machines: vec![Binary { coef: vec![0.0, 0.0], bias: 0.0 }],
            ..m.clone()
        };
        let pool = PointCloud::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]], Metric::L2).unwrap();
        assert_eq!(uncertainty_query(&flat, &pool, &[true; 6], 4), vec![0, 1, 2, 3]);
        let m = train_classifier(&pts, &[0, 1], 2, 0.1, 1e-6).unwrap();
        let q = uncertainty_query(&m, &pool, &[true; 6], 6);
        let mut oracle: Vec<(f64, usize)> = (0..6).map(|i| (m.decision(pool.point(i))[0].abs(), i)).collect();
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        assert_eq!(q, oracle.iter().map(|p| p.1).collect::<Vec<_>>());
    }

    #[test]
    fn budget_zero_has_initial_record_only() {
        let d = blobs(5, 30);
        let (pool, test) = stratified_split(&d, 0.67, 1).unwrap();
        let r = run_session(&pool, &test, &ALConfig { budget: Some(0), ..Default::default() }).unwrap();
        assert_eq!(r.history.len(), 1);
        assert!(r.history[0].accuracy.is_some());
    }

    #[test]
    fn full_budget_equals_full_pool_training() {
        let d = blobs(6, 25);
        let (pool, test) = stratified_split(&d, 0.67, 2).unwrap();
        for strategy in Strategy::ALL {
            let config = ALConfig { strategy, budget: Some(pool.len()), seed: 3, ..Default::default() };
            let r = run_session(&pool, &test, &config).unwrap();
            assert_eq!(r.history.last().unwrap().labeled, pool.len());
            let full = train_classifier(&pool.cloud, &pool.labels, 2, 0.1, 1e-3).unwrap().accuracy(&test);
            assert!((r.history.last().unwrap().accuracy.unwrap() - full).abs() <= 1e-12);
        }
    }

    #[test]
    fn submissions_are_validated() {
        let d = blobs(7, 20);
        let mut s = ALSession::with_stratified_start(&d, None, ALConfig::default()).unwrap();
        assert!(matches!(s.apply_labels(&[]), Err(SubmitError::NothingPending)));
        let q = s.next_queries().to_vec();
        assert_eq!(q.len(), 4);
        let stale = s.unlabeled().into_iter().find(|i| !q.contains(i)).unwrap();
        assert!(matches!(s.apply_labels(&[(stale, 0)]), Err(SubmitError::NotQueried(_))));
        assert!(matches!(s.apply_labels(&[(q[0], 0)]), Err(SubmitError::Incomplete(_))));
        assert!(matches!(s.apply_labels(&[(q[0], 9)]), Err(SubmitError::UnknownLabel { .. })));
        assert!(matches!(s.apply_labels(&[(q[0], 0), (q[0], 1)]), Err(SubmitError::Duplicate(_))));
        assert_eq!(s.iteration(), 0);
        let answers: Vec<(usize, usize)> = q.iter().map(|&i| (i, d.labels[i])).collect();
        s.apply_labels(&answers).unwrap();
        assert_eq!(s.iteration(), 1);
        assert_eq!(s.labeled_count(), 6);
    }

    #[test]
    fn interactive_start_bootstraps_randomly() {
        let d = blobs(8, 10);
        let mut s = ALSession::new(d.cloud.clone(), d.label_names.clone(), None, &[], ALConfig::default()).unwrap();
        assert!(s.model().is_none());
        while s.model().is_none() {
            let ans: Vec<(usize, usize)> = s.next_queries().iter().map(|&i| (i, d.labels[i])).collect();
            s.apply_labels(&ans).unwrap();
        }
        assert!(s.predictions().is_some());
    }

    #[test]
    fn checkpoint_resumes_identically() {
        let d = blobs(9, 30);
        let (pool, test) = stratified_split(&d, 0.67, 4).unwrap();
        let config = ALConfig { strategy: Strategy::Random, budget: Some(16), seed: 5, ..Default::default() };
        let mut a = ALSession::with_stratified_start(&pool, Some(test), config).unwrap();
        a.step_with_oracle(&pool.labels).unwrap();
        a.next_queries();
        let mut b = ALSession::from_checkpoint(&a.to_checkpoint().unwrap()).unwrap();
        while a.step_with_oracle(&pool.labels).unwrap() {}
        while b.step_with_oracle(&pool.labels).unwrap() {}
        assert_eq!(a.history(), b.history());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn pool_partition_and_batches(seed in 0u64..500, strategy in 0usize..3) {
            let d = gen_blobs(&[vec![-2.0, 0.0], vec![2.0, 0.0], vec![0.0, 3.0]], 1.0, 12, seed).unwrap();
            let config = ALConfig { strategy: Strategy::ALL[strategy], budget: Some(20), seed, ..Default::default() };
            let mut s = ALSession::with_stratified_start(&d, None, config).unwrap();
            loop {
                let before = s.labeled_count();
                let q = s.next_queries().to_vec();
                if q.is_empty() { break; }
                prop_assert!(q.len() <= 4);
                prop_assert_eq!(q.iter().collect::<BTreeSet<_>>().len(), q.len());
                prop_assert!(q.iter().all(|&i| s.revealed()[i].is_none()));
                let ans: Vec<(usize, usize)> = q.iter().map(|&i| (i, d.labels[i])).collect();
                s.apply_labels(&ans).unwrap();
                prop_assert_eq!(s.labeled_count(), before + q.len());
                prop_assert_eq!(s.labeled().len() + s.unlabeled().len(), d.len());
            }
            prop_assert_eq!(s.spent(), 20);
        }

        #[test]
        fn random_strategy_ignores_feature_scaling(seed in 0u64..500, factor in 0.1f64..10.0) {
            let d = blobs(seed, 15);
            let (pool, test) = stratified_split(&d, 0.67, seed).unwrap();
            let scale = |ds: &LabeledDataset| {
                let coords: Vec<f64> = ds.cloud.coords().iter().map(|v| v * factor).collect();
                LabeledDataset { cloud: PointCloud::new(coords, 2, Metric::L2).unwrap(), ..ds.clone() }
            };
            let config = ALConfig { strategy: Strategy::Random, budget: Some(8), seed, ..Default::default() };
            let a = run_session(&pool, &test, &config).unwrap();
            let b = run_session(&scale(&pool), &scale(&test), &config).unwrap();
            let qa: Vec<_> = a.history.iter().map(|r| r.queried.clone()).collect();
            let qb: Vec<_> = b.history.iter().map(|r| r.queried.clone()).collect();
            prop_assert_eq!(qa, qb);
        }
    }
}
