//! Labeled datasets: CSV ingestion, stratified splits and seeded synthetic generators.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Metric, PointCloud};

/// A point cloud with one label id per point, drawn from `0..n_classes()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub cloud: PointCloud,
    pub labels: Vec<usize>,
    /// Original label text for each id.
    pub label_names: Vec<String>,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(cloud: PointCloud, labels: Vec<usize>, label_names: Vec<String>) -> Result<Self> {
        if labels.len() != cloud.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} points",
                labels.len(),
                cloud.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(Error::invalid(format!(
                "label id {bad} outside 0..{}",
                label_names.len()
            )));
        }
        Ok(LabeledDataset { cloud, labels, label_names, feature_names: Vec::new() })
    }

    /// Labels named by their ids.
    pub fn from_ids(cloud: PointCloud, labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |&l| l + 1);
        Self::new(cloud, labels, (0..k).map(|i| i.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn dim(&self) -> usize {
        self.cloud.dim()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.cloud.point(i)
    }

    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }

    /// Rows `indices`, keeping the full label set.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            cloud: self.cloud.subset(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Drops exact repeats of a point within the same class, keeping the first.
    /// Returns the reduced dataset and the kept row indices.
    pub fn dedup_within_class(&self) -> (LabeledDataset, Vec<usize>) {
        let mut seen: HashSet<(usize, Vec<u64>)> = HashSet::new();
        let kept: Vec<usize> = (0..self.len())
            .filter(|&i| {
                // +0.0 and -0.0 compare equal as coordinates.
                let key = self.point(i).iter().map(|v| (v + 0.0).to_bits()).collect();
                seen.insert((self.labels[i], key))
            })
            .collect();
        (self.subset(&kept), kept)
    }

    /// Per-feature `(mean, std)` of this dataset; a zero std is reported as 1.
    pub fn feature_moments(&self) -> Vec<(f64, f64)> {
        let (n, d) = (self.len() as f64, self.dim());
        (0..d)
            .map(|k| {
                let mu = self.cloud.points().map(|p| p[k]).sum::<f64>() / n;
                let var = self.cloud.points().map(|p| (p[k] - mu) * (p[k] - mu)).sum::<f64>() / n;
                let sd = var.sqrt();
                (mu, if sd > 0.0 { sd } else { 1.0 })
            })
            .collect()
    }

    /// Applies `(x - mean) / std` feature-wise with the given moments.
    pub fn standardized(&self, moments: &[(f64, f64)]) -> Result<LabeledDataset> {
        let d = self.dim();
        let coords: Vec<f64> = self
            .cloud
            .coords()
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let (mu, sd) = moments[k % d];
                (v - mu) / sd
            })
            .collect();
        let cloud = PointCloud::new(coords, d, self.cloud.metric())?.with_scale(self.cloud.scale())?;
        Ok(LabeledDataset { cloud, ..self.clone() })
    }
}

/// Which CSV column carries the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "last" {
            return Ok(LabelColumn::Last);
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

struct RawCsv {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_csv(path: &Path) -> Result<RawCsv> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(Error::invalid(format!("{} has no data rows", path.display())));
    }
    Ok(RawCsv { header, rows })
}

fn resolve_column(header: &[String], spec: &LabelColumn) -> Result<usize> {
    match spec {
        LabelColumn::Last => Ok(header.len() - 1),
        LabelColumn::Index(i) if *i < header.len() => Ok(*i),
        LabelColumn::Index(i) => Err(Error::invalid(format!(
            "label column index {i} out of range for {} columns",
            header.len()
        ))),
        LabelColumn::Name(n) => header
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| Error::invalid(format!("no column named `{n}`"))),
    }
}

fn parse_features(raw: &RawCsv, skip: Option<usize>) -> Result<(Vec<f64>, usize, Vec<String>)> {
    let feature_cols: Vec<usize> = (0..raw.header.len()).filter(|&c| Some(c) != skip).collect();
    if feature_cols.is_empty() {
        return Err(Error::invalid("no feature columns"));
    }
    let mut coords = Vec::with_capacity(raw.rows.len() * feature_cols.len());
    for (r, rec) in raw.rows.iter().enumerate() {
        if rec.len() != raw.header.len() {
            return Err(Error::invalid(format!(
                "row {} has {} fields, header has {}",
                r + 1,
                rec.len(),
                raw.header.len()
            )));
        }
        for &c in &feature_cols {
            let cell = &rec[c];
            let v: f64 = cell.parse().map_err(|_| {
                Error::invalid(format!(
                    "row {}, column `{}`: `{cell}` is not a number",
                    r + 1,
                    raw.header[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "row {}, column `{}`: missing or non-finite value `{cell}`",
                    r + 1,
                    raw.header[c]
                )));
            }
            coords.push(v);
        }
    }
    let names = feature_cols.iter().map(|&c| raw.header[c].clone()).collect();
    Ok((coords, feature_cols.len(), names))
}

/// Reads a rectangular numeric CSV with a header row and one label column.
///
/// Label text is mapped to dense ids in sorted order (numerically if every
/// label parses as a number); the mapping is kept in `label_names`.
pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn) -> Result<LabeledDataset> {
    let raw = read_csv(path.as_ref())?;
    let lc = resolve_column(&raw.header, label)?;
    let (coords, dim, feature_names) = parse_features(&raw, Some(lc))?;
    let texts: Vec<String> = raw.rows.iter().map(|r| r[lc].to_string()).collect();
    if let Some(r) = texts.iter().position(|t| t.is_empty()) {
        return Err(Error::invalid(format!("row {}, column `{}`: missing label", r + 1, raw.header[lc])));
    }
    let mut distinct: Vec<String> = texts.iter().cloned().collect::<HashSet<_>>().into_iter().collect();
    if distinct.iter().all(|t| t.parse::<f64>().is_ok()) {
        distinct.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    } else {
        distinct.sort();
    }
    let ids: BTreeMap<&str, usize> = distinct.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let labels = texts.iter().map(|t| ids[t.as_str()]).collect();
    let cloud = PointCloud::new(coords, dim, Metric::L2)?;
    let mut data = LabeledDataset::new(cloud, labels, distinct)?;
    data.feature_names = feature_names;
    Ok(data)
}

/// Reads an all-numeric CSV (header required), optionally ignoring one column.
pub fn load_points_csv(path: impl AsRef<Path>, ignore: Option<&LabelColumn>) -> Result<PointCloud> {
    let raw = read_csv(path.as_ref())?;
    let skip = ignore.map(|s| resolve_column(&raw.header, s)).transpose()?;
    let (coords, dim, _) = parse_features(&raw, skip)?;
    PointCloud::new(coords, dim, Metric::L2)
}

/// Writes a dataset as CSV with a trailing `label` column holding the label names.
pub fn write_csv(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = if data.feature_names.len() == data.dim() {
        data.feature_names.clone()
    } else {
        (0..data.dim()).map(|k| format!("x{k}")).collect()
    };
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.point(i).iter().map(|v| format!("{v}")).collect();
        rec.push(data.label_names[data.labels[i]].clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Row indices of a train/test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class training counts for a stratified split.
///
/// The total is `round(n * fraction)`; it is distributed over classes by the
/// largest-remainder method (ties to the lower class id), then every class is
/// clamped to keep at least one point on each side.
pub fn stratified_counts(class_counts: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = class_counts.iter().sum();
    let total = (n as f64 * fraction).round() as usize;
    let quotas: Vec<f64> = class_counts.iter().map(|&c| c as f64 * fraction).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..class_counts.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let mut missing = total.saturating_sub(counts.iter().sum());
    for &c in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if counts[c] < class_counts[c] {
            counts[c] += 1;
            missing -= 1;
        }
    }
    for (c, &nc) in counts.iter_mut().zip(class_counts) {
        if nc >= 2 {
            *c = (*c).clamp(1, nc - 1);
        }
    }
    counts
}

/// Seeded stratified split of row indices by label.
pub fn stratified_indices(labels: &[usize], n_classes: usize, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must lie in (0, 1), got {fraction}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    labels.iter().enumerate().for_each(|(i, &l)| by_class[l].push(i));
    if let Some(c) = by_class.iter().position(|v| v.len() == 1) {
        return Err(Error::invalid(format!("class {c} has a single point; a stratified split needs at least 2")));
    }
    let counts = stratified_counts(&by_class.iter().map(Vec::len).collect::<Vec<_>>(), fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (members, &k) in by_class.iter_mut().zip(&counts) {
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

pub fn stratified_split(data: &LabeledDataset, fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let s = stratified_indices(&data.labels, data.n_classes(), fraction, seed)?;
    Ok((data.subset(&s.train), data.subset(&s.test)))
}

/// Uniform points in the unit square labeled by the parity of their cell on a
/// `cells x cells` board. `noise` is the probability of flipping a label.
pub fn gen_checkerboard(cells: usize, points: usize, noise: f64, seed: u64) -> Result<LabeledDataset> {
    if cells == 0 || points == 0 {
        return Err(Error::invalid("checkerboard needs at least one cell and one point"));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::invalid(format!("label noise must lie in [0, 1], got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(points * 2);
    let mut labels = Vec::with_capacity(points);
    for _ in 0..points {
        let (x, y): (f64, f64) = (rng.random(), rng.random());
        let mut l = checkerboard_label(cells, x, y);
        if noise > 0.0 && rng.random::<f64>() < noise {
            l = 1 - l;
        }
        coords.extend([x, y]);
        labels.push(l);
    }
    let mut d = LabeledDataset::new(PointCloud::new(coords, 2, Metric::L2)?, labels, vec!["0".into(), "1".into()])?;
    d.feature_names = vec!["x".into(), "y".into()];
    Ok(d)
}

pub fn checkerboard_label(cells: usize, x: f64, y: f64) -> usize {
    let cx = ((x * cells as f64).floor() as usize).min(cells - 1);
    let cy = ((y * cells as f64).floor() as usize).min(cells - 1);
    (cx + cy) % 2
}

/// One isotropic Gaussian component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub mean: Vec<f64>,
    pub std: f64,
    pub n: usize,
}

/// Gaussian clusters plus uniform background points in a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub clusters: Vec<ClusterSpec>,
    pub background: usize,
    pub bounds: (f64, f64),
}

impl Default for MixtureSpec {
    /// Two 150-point clusters at `(±4, 0)` with std 0.5, and 20 uniform points in `[-12, 12]^2`.
    fn default() -> Self {
        MixtureSpec {
            clusters: vec![
                ClusterSpec { mean: vec![-4.0, 0.0], std: 0.5, n: 150 },
                ClusterSpec { mean: vec![4.0, 0.0], std: 0.5, n: 150 },
            ],
            background: 20,
            bounds: (-12.0, 12.0),
        }
    }
}

/// A generated mixture with per-point ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierData {
    /// Cluster id per point; background points get id `clusters.len()`.
    pub data: LabeledDataset,
    pub is_outlier: Vec<bool>,
}

pub fn gen_outlier_mixture(spec: &MixtureSpec, seed: u64) -> Result<OutlierData> {
    let dim = spec.clusters.first().map(|c| c.mean.len()).unwrap_or(2);
    if spec.clusters.iter().any(|c| c.mean.len() != dim || c.std.is_nan() || c.std <= 0.0) {
        return Err(Error::invalid("clusters need a common dimension and a positive std"));
    }
    let (lo, hi) = spec.bounds;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::invalid(format!("empty bounds [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut coords, mut labels) = (Vec::new(), Vec::new());
    for (k, c) in spec.clusters.iter().enumerate() {
        let normal = Normal::new(0.0, c.std).map_err(|e| Error::invalid(e.to_string()))?;
        for _ in 0..c.n {
            coords.extend(c.mean.iter().map(|m| m + normal.sample(&mut rng)));
            labels.push(k);
        }
    }
    for _ in 0..spec.background {
        coords.extend((0..dim).map(|_| rng.random_range(lo..hi)));
        labels.push(spec.clusters.len());
    }
    let mut names: Vec<String> = (0..spec.clusters.len()).map(|k| format!("cluster{k}")).collect();
    names.push("background".into());
    let is_outlier = labels.iter().map(|&l| l == spec.clusters.len()).collect();
    let data = LabeledDataset::new(PointCloud::new(coords, dim, Metric::L2)?, labels, names)?;
    Ok(OutlierData { data, is_outlier })
}

/// Isotropic Gaussian blobs, one class per center.
pub fn gen_blobs(centers: &[Vec<f64>], std: f64, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let clusters = centers.iter().map(|m| ClusterSpec { mean: m.clone(), std, n: per_class }).collect();
    let spec = MixtureSpec { clusters, background: 0, bounds: (0.0, 1.0) };
    let mixed = gen_outlier_mixture(&spec, seed)?;
    let mut d = mixed.data;
    d.label_names.pop();
    Ok(d)
}

/// Two interleaved half circles with Gaussian jitter.
pub fn gen_moons(per_class: usize, noise: f64, seed: u64) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).map_err(|e| Error::invalid(e.to_string()))?;
    let (mut coords, mut labels) = (Vec::new(), Vec::new());
    for class in 0..2 {
        for _ in 0..per_class {
            let a = rng.random_range(0.0..std::f64::consts::PI);
            let (x, y) = if class == 0 { (a.cos(), a.sin()) } else { (1.0 - a.cos(), 0.5 - a.sin()) };
            coords.extend([x + jitter.sample(&mut rng), y + jitter.sample(&mut rng)]);
            labels.push(class);
        }
    }
    LabeledDataset::new(PointCloud::new(coords, 2, Metric::L2)?, labels, vec!["0".into(), "1".into()])
}
