//! Classification by weighting vectors.
//!
//! Each class `X_i` keeps its weighting at scale `t_i`. A query point `x` is
//! scored per class by its weight `w_i'` in `{x} ∪ X_i`, obtained from the
//! cached factor with one triangular solve. Interior points get small weights,
//! so by default the class with the smallest scaled weight wins.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metric::{check_scale, Metric, PointCloud};
use crate::weighting::{weighting, WeightingState};

/// How a raw weight `w_i'` is turned into a comparable score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    /// `|w_i'|`.
    #[default]
    Abs,
    /// Fraction of training weights `w_j^i <= w_i'`.
    Percentile,
}

impl fmt::Display for ScaleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScaleMode::Abs => "abs",
            ScaleMode::Percentile => "percentile",
        })
    }
}

impl FromStr for ScaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "abs" => Ok(ScaleMode::Abs),
            "percentile" => Ok(ScaleMode::Percentile),
            other => Err(Error::invalid(format!("unknown scale mode `{other}` (expected abs or percentile)"))),
        }
    }
}

/// Which scaled score selects the predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decide {
    #[default]
    Min,
    Max,
}

impl fmt::Display for Decide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decide::Min => "min",
            Decide::Max => "max",
        })
    }
}

impl FromStr for Decide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(Decide::Min),
            "max" => Ok(Decide::Max),
            other => Err(Error::invalid(format!("unknown decide rule `{other}` (expected min or max)"))),
        }
    }
}

/// Values compared against the NULL threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullBasis {
    /// The raw weights `w_i'`.
    #[default]
    Raw,
    /// The scaled scores.
    Scaled,
}

/// Rejects a point as NULL when every per-class value exceeds `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullRule {
    pub threshold: f64,
    #[serde(default)]
    pub basis: NullBasis,
}

impl NullRule {
    pub fn new(threshold: f64) -> Self {
        NullRule { threshold, basis: NullBasis::Raw }
    }

    pub fn applies(&self, values: &[f64]) -> bool {
        !values.is_empty() && values.iter().all(|&v| v > self.threshold)
    }
}

/// Scale parameters for the per-class weightings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scales {
    Shared(f64),
    PerClass(Vec<f64>),
}

impl Default for Scales {
    fn default() -> Self {
        Scales::Shared(1.0)
    }
}

impl Scales {
    fn resolve(&self, k: usize) -> Result<Vec<f64>> {
        let ts = match self {
            Scales::Shared(t) => vec![*t; k],
            Scales::PerClass(ts) if ts.len() == k => ts.clone(),
            Scales::PerClass(ts) => {
                return Err(Error::invalid(format!("{} per-class scales for {k} classes", ts.len())))
            }
        };
        ts.iter().try_for_each(|&t| check_scale(t))?;
        Ok(ts)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassifierConfig {
    #[serde(default)]
    pub scales: Scales,
    #[serde(default)]
    pub scale_mode: ScaleMode,
    #[serde(default)]
    pub decide: Decide,
    #[serde(default)]
    pub null: Option<NullRule>,
}

impl ClassifierConfig {
    fn validate(&self) -> Result<()> {
        if let Some(rule) = &self.null {
            if !rule.threshold.is_finite() {
                return Err(Error::invalid(format!("null threshold must be finite, got {}", rule.threshold)));
            }
            if self.scale_mode != ScaleMode::Percentile {
                return Err(Error::invalid("a null threshold requires the percentile scale mode"));
            }
        }
        Ok(())
    }
}

/// One class: its training cloud at scale `t` and the cached weighting.
#[derive(Debug, Clone)]
pub struct ClassModel {
    label: usize,
    state: WeightingState,
    sorted_weights: Vec<f64>,
}

impl ClassModel {
    fn new(label: usize, state: WeightingState) -> Self {
        let mut sorted_weights = state.weights().to_vec();
        sorted_weights.sort_by(f64::total_cmp);
        ClassModel { label, state, sorted_weights }
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn t(&self) -> f64 {
        self.state.cloud().scale()
    }

    pub fn state(&self) -> &WeightingState {
        &self.state
    }

    /// Weight of `x` in `{x} ∪ X_i`; a training point gets its own weight.
    pub fn raw_weight(&self, x: &[f64]) -> Result<f64> {
        self.state.cloud().check_point(x)?;
        match self.state.cloud().position_of(x) {
            Some(j) => Ok(self.state.weights()[j]),
            None => Ok(self.state.score_point(x)?.weight),
        }
    }

    pub fn percentile(&self, w: f64) -> f64 {
        self.sorted_weights.partition_point(|&v| v <= w) as f64 / self.sorted_weights.len() as f64
    }

    pub fn scale(&self, w: f64, mode: ScaleMode) -> f64 {
        match mode {
            ScaleMode::Abs => w.abs(),
            ScaleMode::Percentile => self.percentile(w),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prediction {
    Label(usize),
    Null,
}

impl Prediction {
    pub fn label(self) -> Option<usize> {
        match self {
            Prediction::Label(l) => Some(l),
            Prediction::Null => None,
        }
    }
}

/// Per-class raw weights and scaled scores of one query point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
}

/// Index of the winning score; ties go to the lowest index.
pub fn decide(scores: &[f64], rule: Decide) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        let better = match rule {
            Decide::Min => s < scores[best],
            Decide::Max => s > scores[best],
        };
        if better {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct FittedClassifier {
    config: ClassifierConfig,
    classes: Vec<ClassModel>,
    label_names: Vec<String>,
    dim: usize,
    metric: Metric,
}

/// Fits one weighting per class.
///
/// Every class must be nonempty and free of repeated points. Errors raised
/// for a single class are wrapped in [`Error::InClass`].
pub fn fit(data: &LabeledDataset, config: &ClassifierConfig) -> Result<FittedClassifier> {
    config.validate()?;
    let k = data.n_classes();
    if k == 0 {
        return Err(Error::invalid("dataset has no classes"));
    }
    let ts = config.scales.resolve(k)?;
    if let Some(c) = data.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::in_class(c, Error::invalid(format!("class `{}` has no points", data.label_names[c]))));
    }
    let classes = (0..k)
        .into_par_iter()
        .map(|c| {
            let idx = data.class_indices(c);
            let cloud = data.cloud.subset(&idx).with_scale(ts[c])?;
            let state = weighting(&cloud).map_err(|e| match e {
                Error::DegenerateInput { first, second } => {
                    Error::DegenerateInput { first: idx[first], second: idx[second] }
                }
                e => e,
            });
            Ok(ClassModel::new(c, state.map_err(|e| Error::in_class(c, e))?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FittedClassifier {
        config: config.clone(),
        classes,
        label_names: data.label_names.clone(),
        dim: data.dim(),
        metric: data.cloud.metric(),
    })
}

impl FittedClassifier {
    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn classes(&self) -> &[ClassModel] {
        &self.classes
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn score(&self, x: &[f64]) -> Result<Scores> {
        let raw = self
            .classes
            .iter()
            .map(|c| c.raw_weight(x).map_err(|e| Error::in_class(c.label, e)))
            .collect::<Result<Vec<_>>>()?;
        let scaled = self.classes.iter().zip(&raw).map(|(c, &w)| c.scale(w, self.config.scale_mode)).collect();
        Ok(Scores { raw, scaled })
    }

    /// Applies the NULL rule and DECIDE to precomputed scores.
    pub fn decide_scores(&self, scores: &Scores) -> Prediction {
        if let Some(rule) = &self.config.null {
            let values = match rule.basis {
                NullBasis::Raw => &scores.raw,
                NullBasis::Scaled => &scores.scaled,
            };
            if rule.applies(values) {
                return Prediction::Null;
            }
        }
        Prediction::Label(self.classes[decide(&scores.scaled, self.config.decide)].label)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        Ok(self.decide_scores(&self.score(x)?))
    }

    pub fn predict_many(&self, points: &PointCloud) -> Result<Vec<Prediction>> {
        (0..points.len()).into_par_iter().map(|i| self.predict(points.point(i))).collect()
    }

    /// Fraction of `test` points whose prediction equals their label.
    pub fn accuracy(&self, test: &LabeledDataset) -> Result<f64> {
        let pred = self.predict_many(&test.cloud)?;
        let hits = pred.iter().zip(&test.labels).filter(|(p, &l)| p.label() == Some(l)).count();
        Ok(hits as f64 / test.len().max(1) as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            config: self.config.clone(),
            metric: self.metric,
            dim: self.dim,
            label_names: self.label_names.clone(),
            classes: self
                .classes
                .iter()
                .map(|c| ClassRecord {
                    label: c.label,
                    t: c.t(),
                    points: c.state.cloud().points().map(<[f64]>::to_vec).collect(),
                    weights: c.state.weights().to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Rebuilds a model from [`FittedClassifier::to_json`] output.
    ///
    /// Factorizations are recomputed; the stored weights must agree with them.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
                file.format, file.version
            )));
        }
        file.config.validate()?;
        let classes = file
            .classes
            .iter()
            .enumerate()
            .map(|(c, rec)| {
                if rec.label != c {
                    return Err(Error::invalid(format!("class record {c} carries label {}", rec.label)));
                }
                let cloud = PointCloud::from_rows(&rec.points, file.metric)?.with_scale(rec.t)?;
                if cloud.dim() != file.dim {
                    return Err(Error::invalid(format!("class {c} has dimension {}, model {}", cloud.dim(), file.dim)));
                }
                let state = weighting(&cloud).map_err(|e| Error::in_class(c, e))?;
                let drift = state.weights().iter().zip(&rec.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if rec.weights.len() != state.len() || drift > 1e-8 * (1.0 + state.magnitude()) {
                    return Err(Error::invalid(format!("stored weights of class {c} do not match its points")));
                }
                Ok(ClassModel::new(c, state))
            })
            .collect::<Result<Vec<_>>>()?;
        if classes.len() != file.label_names.len() {
            return Err(Error::invalid("class records and label names differ in length"));
        }
        Ok(FittedClassifier { config: file.config, classes, label_names: file.label_names, dim: file.dim, metric: file.metric })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub const MODEL_FORMAT: &str = "magnitude-classifier";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    config: ClassifierConfig,
    metric: Metric,
    dim: usize,
    label_names: Vec<String>,
    classes: Vec<ClassRecord>,
}

#[derive(Serialize, Deserialize)]
struct ClassRecord {
    label: usize,
    t: f64,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// Fold id of every row for a seeded stratified k-fold split.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut offset = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        for (r, &i) in members.iter().enumerate() {
            fold[i] = (offset + r) % folds;
        }
        offset = (offset + members.len()) % folds;
    }
    fold
}

fn check_cv(data: &LabeledDataset, folds: usize) -> Result<()> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if data.len() < folds {
        return Err(Error::invalid(format!("{} points cannot fill {folds} folds", data.len())));
    }
    if let Some(c) = data.class_counts().iter().position(|&n| n < 2) {
        return Err(Error::in_class(c, Error::invalid("cross-validation needs at least 2 points per class")));
    }
    Ok(())
}

fn fold_parts(fold: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    (0..fold.len()).partition(|&i| fold[i] != f)
}

/// Mean stratified k-fold accuracy of the classifier with fixed per-class scales.
///
/// Training folds are reduced to distinct points per class. The NULL rule is ignored.
pub fn cross_validate(
    data: &LabeledDataset,
    scales: &[f64],
    folds: usize,
    seed: u64,
    base: &ClassifierConfig,
) -> Result<f64> {
    check_cv(data, folds)?;
    let fold = stratified_folds(&data.labels, data.n_classes(), folds, seed);
    let config = ClassifierConfig { scales: Scales::PerClass(scales.to_vec()), null: None, ..base.clone() };
    let accs = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (train, val) = fold_parts(&fold, f);
            let model = fit(&data.subset(&train).dedup_within_class().0, &config)?;
            model.accuracy(&data.subset(&val))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::stats::mean(&accs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub scales: Vec<f64>,
    pub cv_accuracy: f64,
    /// Whether every grid combination was evaluated (otherwise coordinate ascent).
    pub exhaustive: bool,
}

/// Largest number of per-class grid combinations searched exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 10_000;

/// Selects per-class scales from `grid` by stratified k-fold cross-validation.
///
/// Small searches enumerate every combination; larger ones run coordinate
/// ascent from the best shared scale. Ties go to the lexicographically
/// smallest grid positions, so with an ascending grid to the smallest `t`.
pub fn tune_scales(
    data: &LabeledDataset,
    grid: &[f64],
    folds: usize,
    seed: u64,
    base: &ClassifierConfig,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::invalid("scale grid is empty"));
    }
    grid.iter().try_for_each(|&t| check_scale(t))?;
    check_cv(data, folds)?;
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let k = data.n_classes();
    let g = grid.len();
    let fold = stratified_folds(&data.labels, k, folds, seed);
    let parts: Vec<(LabeledDataset, LabeledDataset)> = (0..folds)
        .map(|f| {
            let (train, val) = fold_parts(&fold, f);
            (data.subset(&train).dedup_within_class().0, data.subset(&val))
        })
        .collect();

    // table[(f * k + c) * g + j]: scaled scores of fold f's validation points for class c at grid[j].
    let table: Vec<Option<Vec<f64>>> = (0..folds * k * g)
        .into_par_iter()
        .map(|n| {
            let (f, c, j) = (n / (k * g), (n / g) % k, n % g);
            let (train, val) = &parts[f];
            let cloud = train.cloud.subset(&train.class_indices(c)).with_scale(grid[j]).ok()?;
            let model = match weighting(&cloud) {
                Ok(state) => ClassModel::new(c, state),
                Err(e) => {
                    log::debug!("fold {f}, class {c}, t = {}: {e}", grid[j]);
                    return None;
                }
            };
            val.cloud
                .points()
                .map(|x| model.raw_weight(x).map(|w| model.scale(w, base.scale_mode)))
                .collect::<Result<Vec<_>>>()
                .ok()
        })
        .collect();

    let evaluate = |choice: &[usize]| -> f64 {
        let mut total = 0.0;
        for (f, (_, val)) in parts.iter().enumerate() {
            let cols: Option<Vec<&Vec<f64>>> =
                (0..k).map(|c| table[(f * k + c) * g + choice[c]].as_ref()).collect();
            let Some(cols) = cols else { return f64::NEG_INFINITY };
            let mut scores = vec![0.0; k];
            let mut hits = 0;
            for (v, &label) in val.labels.iter().enumerate() {
                for c in 0..k {
                    scores[c] = cols[c][v];
                }
                hits += usize::from(decide(&scores, base.decide) == label);
            }
            total += hits as f64 / val.len() as f64;
        }
        total / folds as f64
    };

    let combos = g.checked_pow(k as u32).filter(|&n| n <= EXHAUSTIVE_LIMIT);
    let mut best = vec![0; k];
    let mut best_acc = f64::NEG_INFINITY;
    if let Some(n) = combos {
        let mut choice = vec![0; k];
        for _ in 0..n {
            let acc = evaluate(&choice);
            if acc > best_acc {
                best_acc = acc;
                best.clone_from(&choice);
            }
            for c in (0..k).rev() {
                choice[c] += 1;
                if choice[c] < g {
                    break;
                }
                choice[c] = 0;
            }
        }
    } else {
        for j in 0..g {
            let acc = evaluate(&vec![j; k]);
            if acc > best_acc {
                best_acc = acc;
                best = vec![j; k];
            }
        }
        let mut improved = best_acc.is_finite();
        while improved {
            improved = false;
            for c in 0..k {
                for j in 0..g {
                    let mut trial = best.clone();
                    trial[c] = j;
                    let acc = evaluate(&trial);
                    if acc > best_acc {
                        best_acc = acc;
                        best = trial;
                        improved = true;
                    }
                }
            }
        }
    }
    if !best_acc.is_finite() {
        return Err(Error::invalid("no grid combination gives a solvable weighting for every class and fold"));
    }
    Ok(TuneResult { scales: best.iter().map(|&j| grid[j]).collect(), cv_accuracy: best_acc, exhaustive: combos.is_some() })
}
