//! Outlier detection by weight thresholding and magnitude-gain screening.
//!
//! Points whose `|w|` exceeds `median(w) + 1.5 std(w)` become candidates. Each
//! candidate, in ascending `|w|`, is reinstated when adding it to the current
//! inlier set raises the magnitude by less than `tau`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::PointCloud;
use crate::stats::{median, std_dev};
use crate::weighting::{weighting, WeightingState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutlierOptions {
    /// Measure every candidate against the initial inlier set instead of the growing one.
    #[serde(default)]
    pub freeze_inliers: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Inlier,
    Outlier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub index: usize,
    pub weight: f64,
    /// Magnitude gain, for candidates only.
    pub gamma: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub inliers: Vec<usize>,
    pub outliers: Vec<usize>,
    pub weights: Vec<f64>,
    /// `(index, gamma)` for every candidate, in processing order.
    pub gammas: Vec<(usize, f64)>,
    pub threshold: f64,
    pub tau: f64,
    pub freeze_inliers: bool,
}

impl OutlierReport {
    pub fn is_outlier(&self) -> Vec<bool> {
        let mut flags = vec![false; self.weights.len()];
        self.outliers.iter().for_each(|&i| flags[i] = true);
        flags
    }

    /// One record per point, in index order.
    pub fn records(&self) -> Vec<PointRecord> {
        let mut gamma = vec![None; self.weights.len()];
        self.gammas.iter().for_each(|&(i, g)| gamma[i] = Some(g));
        let flags = self.is_outlier();
        (0..self.weights.len())
            .map(|i| PointRecord {
                index: i,
                weight: self.weights[i],
                gamma: gamma[i],
                verdict: if flags[i] { Verdict::Outlier } else { Verdict::Inlier },
            })
            .collect()
    }
}

/// `Mag(X ∪ {x}) - Mag(X)` without modifying `state`; zero when `x` is already in `X`.
pub fn score_new_point(state: &WeightingState, x: &[f64]) -> Result<f64> {
    state.cloud().check_point(x)?;
    if state.cloud().position_of(x).is_some() {
        return Ok(0.0);
    }
    Ok(state.score_point(x)?.gamma)
}

/// Splits `cloud` into inliers and outliers. `tau` may be `+inf`.
pub fn detect_outliers(cloud: &PointCloud, tau: f64, options: OutlierOptions) -> Result<OutlierReport> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::invalid(format!("tau must be >= 0, got {tau}")));
    }
    if cloud.len() < 3 {
        return Err(Error::invalid(format!("outlier detection needs at least 3 points, got {}", cloud.len())));
    }
    let weights = weighting(cloud)?.weights().to_vec();
    let threshold = median(&weights) + 1.5 * std_dev(&weights);
    let (mut inliers, mut candidates): (Vec<usize>, Vec<usize>) =
        (0..cloud.len()).partition(|&i| weights[i].abs() <= threshold);
    candidates.sort_by(|&a, &b| weights[a].abs().total_cmp(&weights[b].abs()).then(a.cmp(&b)));

    let mut state = if inliers.is_empty() { None } else { Some(weighting(&cloud.subset(&inliers))?) };
    let mut gammas = Vec::with_capacity(candidates.len());
    let mut outliers = Vec::new();
    for &i in &candidates {
        let x = cloud.point(i);
        let gamma = match &state {
            Some(s) => score_new_point(s, x)?,
            None => 1.0,
        };
        gammas.push((i, gamma));
        if gamma < tau {
            inliers.push(i);
            if !options.freeze_inliers {
                match &mut state {
                    Some(s) => {
                        s.push_point(x)?;
                    }
                    None => state = Some(weighting(&cloud.subset(&[i]))?),
                }
            }
        } else {
            outliers.push(i);
        }
    }
    inliers.sort_unstable();
    outliers.sort_unstable();
    Ok(OutlierReport { inliers, outliers, weights, gammas, threshold, tau, freeze_inliers: options.freeze_inliers })
}
