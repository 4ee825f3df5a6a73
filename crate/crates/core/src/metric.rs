//! Point clouds, metrics and the similarity matrix `exp(-t d(x_i, x_j))`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Euclidean distance.
    #[default]
    L2,
    /// Manhattan distance, which turns `exp(-t d)` into the Laplacian kernel.
    L1,
}

impl Metric {
    #[inline]
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::L2 => "l2",
            Metric::L1 => "l1",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" => Ok(Metric::L2),
            "l1" | "manhattan" | "cityblock" => Ok(Metric::L1),
            other => Err(Error::invalid(format!("unknown metric `{other}` (expected l2 or l1)"))),
        }
    }
}

/// An ordered finite set of points in `R^n` together with a metric and a scale `t`.
///
/// The effective distance between points `i` and `j` is `t * d(x_i, x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<f64>,
    dim: usize,
    metric: Metric,
    scale: f64,
}

pub(crate) fn check_scale(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("scale must be a positive finite number, got {t}")));
    }
    Ok(())
}

impl PointCloud {
    /// Builds a cloud from row-major coordinates with scale 1.
    pub fn new(points: Vec<f64>, dim: usize, metric: Metric) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("points must have at least one coordinate"));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "expected a non-empty multiple of {dim} coordinates, got {}",
                points.len()
            )));
        }
        if let Some(k) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate {} at point {}, column {}",
                points[k],
                k / dim,
                k % dim
            )));
        }
        Ok(PointCloud { points, dim, metric, scale: 1.0 })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], metric: Metric) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut points = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::invalid(format!(
                    "row {i} has {} coordinates, expected {dim}",
                    r.len()
                )));
            }
            points.extend_from_slice(r);
        }
        Self::new(points, dim, metric)
    }

    pub fn with_scale(mut self, t: f64) -> Result<Self> {
        check_scale(t)?;
        self.scale = t;
        Ok(self)
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn coords(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    /// Effective (scaled) distance between two points of the cloud.
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.scale * self.metric.distance(self.point(i), self.point(j))
    }

    /// Effective (scaled) distance from point `i` to an arbitrary point.
    #[inline]
    pub fn distance_to(&self, i: usize, x: &[f64]) -> f64 {
        self.scale * self.metric.distance(self.point(i), x)
    }

    /// Similarity of every cloud point to `x`: `exp(-t d(x_i, x))`.
    pub fn similarity_column(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| (-self.distance_to(i, x)).exp()).collect()
    }

    /// Sub-cloud with the given rows, keeping metric and scale.
    pub fn subset(&self, indices: &[usize]) -> PointCloud {
        let mut points = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            points.extend_from_slice(self.point(i));
        }
        PointCloud { points, dim: self.dim, metric: self.metric, scale: self.scale }
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.points.extend_from_slice(x);
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "point has {} coordinates, cloud has {}",
                x.len(),
                self.dim
            )));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {} at column {k}", x[k])));
        }
        Ok(())
    }

    /// Index of a point with exactly the coordinates of `x`, if any.
    pub fn position_of(&self, x: &[f64]) -> Option<usize> {
        self.points().position(|p| p == x)
    }

    /// First pair of exactly coincident points, if any.
    pub fn find_duplicate(&self) -> Option<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let cmp = |a: &usize, b: &usize| -> Ordering {
            for (x, y) in self.point(*a).iter().zip(self.point(*b)) {
                match x.partial_cmp(y).unwrap_or(Ordering::Equal) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            Ordering::Equal
        };
        order.sort_by(cmp);
        order
            .windows(2)
            .filter(|w| self.point(w[0]) == self.point(w[1]))
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
            .min()
    }

    /// Checks that both clouds share metric, scale and dimension.
    pub(crate) fn check_compatible(&self, other: &PointCloud) -> Result<()> {
        if self.dim != other.dim || self.metric != other.metric || self.scale != other.scale {
            return Err(Error::invalid(format!(
                "incompatible clouds: dim {} vs {}, metric {} vs {}, scale {} vs {}",
                self.dim, other.dim, self.metric, other.metric, self.scale, other.scale
            )));
        }
        Ok(())
    }
}

/// Pairwise effective distances `t * d(x_i, x_j)`.
pub fn distance_matrix(cloud: &PointCloud) -> DMatrix<f64> {
    let m = cloud.len();
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..i {
            let v = cloud.distance(i, j);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// The similarity matrix of a cloud, with a handle on the cloud it came from.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix<'a> {
    pub cloud: &'a PointCloud,
    pub entries: DMatrix<f64>,
}

pub fn similarity_matrix(cloud: &PointCloud) -> SimilarityMatrix<'_> {
    let mut entries = distance_matrix(cloud).map(|d| (-d).exp());
    entries.fill_diagonal(1.0);
    SimilarityMatrix { cloud, entries }
}
