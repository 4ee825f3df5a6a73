//! Direct computation of weighting vectors and magnitude.
//!
//! The weighting `w` solves `zeta w = 1` and the magnitude is `sum(w)`. Both are
//! obtained from a Cholesky factor `zeta = L L^T`; the factor and `L^{-1} 1`
//! are kept so the incremental updates can extend them later.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cholesky::Cholesky;
use crate::error::{Error, Result};
use crate::metric::{check_scale, distance_matrix, PointCloud};

/// A point cloud together with its factorization, weighting vector and magnitude.
#[derive(Debug, Clone)]
pub struct WeightingState {
    pub(crate) cloud: PointCloud,
    /// Factor of `zeta` with rows permuted by `order`.
    pub(crate) factor: Cholesky,
    /// `order[r]` is the cloud index of factor row `r`.
    pub(crate) order: Vec<usize>,
    /// `L^{-1} 1`, in factor order. Its squared norm is the magnitude.
    pub(crate) half: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    pub(crate) magnitude: f64,
    pub(crate) shift: f64,
}

/// Weight and magnitude gain of a candidate point, computed without modifying the state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointScore {
    /// Weight of the candidate in `X ∪ {x}`.
    pub weight: f64,
    /// `Mag(X ∪ {x}) - Mag(X)`.
    pub gamma: f64,
}

/// Computes the weighting of `cloud`.
///
/// Fails with [`Error::DegenerateInput`] on exactly repeated points and with
/// [`Error::IllConditioned`] when the factorization breaks down.
pub fn weighting(cloud: &PointCloud) -> Result<WeightingState> {
    weighting_with_shift(cloud, 0.0)
}

/// Like [`weighting`] but factors `zeta + shift * I`.
///
/// A nonzero shift changes the magnitude; it exists for exploratory use only.
pub fn weighting_with_shift(cloud: &PointCloud, shift: f64) -> Result<WeightingState> {
    if !(shift.is_finite() && shift >= 0.0) {
        return Err(Error::invalid(format!("diagonal shift must be finite and >= 0, got {shift}")));
    }
    if let Some((first, second)) = cloud.find_duplicate() {
        return Err(Error::DegenerateInput { first, second });
    }
    let factor = Cholesky::from_fn(cloud.len(), |i, j| {
        if i == j {
            1.0 + shift
        } else {
            (-cloud.distance(i, j)).exp()
        }
    })?;
    Ok(WeightingState::from_factor(cloud.clone(), factor, (0..cloud.len()).collect(), shift))
}

impl WeightingState {
    pub(crate) fn from_factor(cloud: PointCloud, factor: Cholesky, order: Vec<usize>, shift: f64) -> Self {
        let mut half = vec![1.0; factor.dim()];
        factor.forward_solve_in_place(&mut half);
        let mut permuted = half.clone();
        factor.backward_solve_in_place(&mut permuted);
        let mut weights = vec![0.0; permuted.len()];
        for (r, &i) in order.iter().enumerate() {
            weights[i] = permuted[r];
        }
        let magnitude = weights.iter().sum();
        WeightingState { cloud, factor, order, half, weights, magnitude, shift }
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn factor(&self) -> &Cholesky {
        &self.factor
    }

    /// Cloud index of each factor row.
    pub fn factor_order(&self) -> &[usize] {
        &self.order
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `||zeta w - 1||_inf`, evaluated against a freshly built similarity matrix.
    pub fn residual(&self) -> f64 {
        let m = self.len();
        (0..m)
            .map(|i| {
                let mut s = (1.0 + self.shift) * self.weights[i];
                for j in 0..m {
                    if j != i {
                        s += (-self.cloud.distance(i, j)).exp() * self.weights[j];
                    }
                }
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Similarity of `x` to every point, in factor order.
    pub(crate) fn factor_column(&self, x: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&i| (-self.cloud.distance_to(i, x)).exp()).collect()
    }

    /// Weight of `x` in `X ∪ {x}` and the magnitude gain, via one triangular solve.
    ///
    /// Costs `O(m^2)`; the state is not modified.
    pub fn score_point(&self, x: &[f64]) -> Result<PointScore> {
        self.cloud.check_point(x)?;
        if let Some(first) = self.cloud.position_of(x) {
            return Err(Error::DegenerateInput { first, second: self.len() });
        }
        let mut l = self.factor_column(x);
        self.factor.forward_solve_in_place(&mut l);
        let corner = 1.0 + self.shift;
        let schur = corner - crate::cholesky::dot(&l, &l);
        if !schur.is_finite() || schur <= corner * f64::EPSILON {
            return Err(Error::IllConditioned { pivot: self.len(), value: schur });
        }
        let gain = 1.0 - crate::cholesky::dot(&l, &self.half);
        Ok(PointScore { weight: gain / schur, gamma: gain * gain / schur })
    }
}

/// One entry of a magnitude-function sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeSample {
    pub t: f64,
    /// `None` when the scale could not be solved; see `error`.
    pub magnitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Evaluates `t -> Mag(tX)` over ascending positive scales.
///
/// The cloud's own scale is replaced by each `t`. Scales where the factorization
/// breaks down are reported with `magnitude: None` rather than dropped.
pub fn magnitude_function(cloud: &PointCloud, scales: &[f64]) -> Result<Vec<MagnitudeSample>> {
    for &t in scales {
        check_scale(t)?;
    }
    if scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("scales must be strictly ascending"));
    }
    if let Some((first, second)) = cloud.find_duplicate() {
        return Err(Error::DegenerateInput { first, second });
    }
    let base = distance_matrix(&cloud.clone().with_scale(1.0)?);
    let m = cloud.len();
    Ok(scales
        .par_iter()
        .map(|&t| {
            let solved = Cholesky::from_fn(m, |i, j| if i == j { 1.0 } else { (-t * base[(i, j)]).exp() })
                .map(|f| {
                    let w = f.solve(&vec![1.0; m]);
                    w.iter().sum::<f64>()
                });
            match solved {
                Ok(mag) => MagnitudeSample { t, magnitude: Some(mag), error: None },
                Err(e) => MagnitudeSample { t, magnitude: None, error: Some(e.to_string()) },
            }
        })
        .collect())
}
