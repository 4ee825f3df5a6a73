//! Block updates of weighting vectors via Schur complements.
//!
//! For `Y ⊂ X` with `zeta_X` permuted into blocks `[[zeta_Y, B], [B^T, D]]`,
//! the Schur complement `S = D - B^T zeta_Y^{-1} B` is all that needs to be
//! factored to pass from `w_Y` to `w_X`:
//!
//! ```text
//! w_X = P ([w_Y; 0] + rho 1),   rho 1 = [-zeta_Y^{-1} B u; u],   u = S^{-1} (1 - B^T w_Y)
//! Mag(X) = Mag(Y) + 1^T rho 1
//! ```
//!
//! When a single point is added `S` is a scalar and everything reduces to
//! triangular solves against the cached factor of `zeta_Y`.

use nalgebra::DMatrix;

use crate::cholesky::{dot, Cholesky};
use crate::error::{Error, Result};
use crate::metric::{similarity_matrix, PointCloud};
use crate::weighting::{weighting, WeightingState};

/// Which diagonal block of a 2x2 block matrix is eliminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    /// `M/A = D - C A^{-1} B`.
    A,
    /// `M/D = A - B D^{-1} C`.
    D,
}

/// Schur complement of the `corner` block of `m`, where `A` is the leading
/// `split x split` block. The eliminated block must be symmetric positive definite.
pub fn schur_complement(m: &DMatrix<f64>, split: usize, corner: Corner) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n || split == 0 || split >= n {
        return Err(Error::invalid(format!(
            "cannot split a {}x{} matrix at {split}",
            m.nrows(),
            m.ncols()
        )));
    }
    let (keep, drop): (Vec<usize>, Vec<usize>) = match corner {
        Corner::A => ((split..n).collect(), (0..split).collect()),
        Corner::D => ((0..split).collect(), (split..n).collect()),
    };
    let inv = Cholesky::from_fn(drop.len(), |i, j| m[(drop[i], drop[j])])?;
    let mut out = DMatrix::zeros(keep.len(), keep.len());
    // Columns of the eliminated-to-kept coupling, solved once each.
    let solved: Vec<Vec<f64>> = keep
        .iter()
        .map(|&c| inv.solve(&drop.iter().map(|&r| m[(r, c)]).collect::<Vec<_>>()))
        .collect();
    for (a, &r) in keep.iter().enumerate() {
        let row: Vec<f64> = drop.iter().map(|&k| m[(r, k)]).collect();
        for (b, &c) in keep.iter().enumerate() {
            out[(a, b)] = m[(r, c)] - dot(&row, &solved[b]);
        }
    }
    Ok(out)
}

/// Splits `0..m` into an ordered subset `Y` and its complement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    subset: Vec<usize>,
    complement: Vec<usize>,
}

impl BlockPartition {
    /// `subset` must be strictly ascending and below `m`.
    pub fn new(subset: Vec<usize>, m: usize) -> Result<Self> {
        if subset.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("subset indices must be strictly ascending"));
        }
        if let Some(&bad) = subset.iter().find(|&&i| i >= m) {
            return Err(Error::invalid(format!("subset index {bad} out of range for {m} points")));
        }
        let mut member = vec![false; m];
        subset.iter().for_each(|&i| member[i] = true);
        let complement = (0..m).filter(|&i| !member[i]).collect();
        Ok(BlockPartition { subset, complement })
    }

    /// The leading `k` points form the subset.
    pub fn leading(k: usize, m: usize) -> Result<Self> {
        Self::new((0..k.min(m)).collect(), m)
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn complement(&self) -> &[usize] {
        &self.complement
    }

    pub fn len(&self) -> usize {
        self.subset.len() + self.complement.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `perm[r]` is the original index placed at block position `r`.
    pub fn permutation(&self) -> Vec<usize> {
        self.subset.iter().chain(&self.complement).copied().collect()
    }
}

/// The correction `rho_XY` in block coordinates (subset first, then complement).
#[derive(Debug, Clone)]
pub struct RhoMatrix {
    pub entries: DMatrix<f64>,
    pub partition: BlockPartition,
}

impl RhoMatrix {
    /// `1^T rho 1`.
    pub fn ones_sum(&self) -> f64 {
        self.entries.sum()
    }
}

fn check_subset_state(sub: &WeightingState, full: &PointCloud, indices: &[usize], what: &str) -> Result<()> {
    sub.cloud.check_compatible(full)?;
    if sub.len() != indices.len() {
        return Err(Error::invalid(format!(
            "{what} weighting has {} points but the partition names {}",
            sub.len(),
            indices.len()
        )));
    }
    if let Some(j) = (0..indices.len()).find(|&j| sub.cloud.point(j) != full.point(indices[j])) {
        return Err(Error::invalid(format!(
            "{what} point {j} does not match row {} of the full cloud",
            indices[j]
        )));
    }
    Ok(())
}

fn check_partition(full: &PointCloud, part: &BlockPartition) -> Result<()> {
    if part.len() != full.len() {
        return Err(Error::invalid(format!(
            "partition covers {} points, cloud has {}",
            part.len(),
            full.len()
        )));
    }
    Ok(())
}

/// Coupling between a factored subset and the remaining points of a cloud.
struct Coupling {
    /// `L_Y^{-1} b_c` for each complement point `c`, in the subset's factor order.
    solved: Vec<Vec<f64>>,
    /// Similarity columns `b_c`, in the subset's factor order.
    columns: Vec<Vec<f64>>,
    /// Factor of `S = D - B^T zeta_Y^{-1} B`.
    schur: Cholesky,
}

fn coupling(sub: &WeightingState, full: &PointCloud, subset: &[usize], complement: &[usize]) -> Result<Coupling> {
    let rows: Vec<usize> = sub.order.iter().map(|&j| subset[j]).collect();
    let columns: Vec<Vec<f64>> = complement
        .iter()
        .map(|&c| rows.iter().map(|&r| (-full.distance(r, c)).exp()).collect())
        .collect();
    let solved: Vec<Vec<f64>> = columns
        .iter()
        .map(|b| {
            let mut v = b.clone();
            sub.factor.forward_solve_in_place(&mut v);
            v
        })
        .collect();
    let corner = 1.0 + sub.shift;
    let schur = Cholesky::from_fn(complement.len(), |a, b| {
        let z = if a == b { corner } else { (-full.distance(complement[a], complement[b])).exp() };
        z - dot(&solved[a], &solved[b])
    })
    .map_err(|e| match e {
        Error::IllConditioned { pivot, value } => Error::IllConditioned { pivot: subset.len() + pivot, value },
        e => e,
    })?;
    Ok(Coupling { solved, columns, schur })
}

/// Result of extending a subset weighting to the full cloud.
struct Extended {
    state: WeightingState,
    /// `rho 1` in block coordinates.
    rho_ones: Vec<f64>,
}

fn extend(sub: &WeightingState, full: &PointCloud, part: &BlockPartition) -> Result<Extended> {
    let (subset, complement) = (part.subset(), part.complement());
    let ny = subset.len();
    let cp = coupling(sub, full, subset, complement)?;

    // u = S^{-1} (1 - B^T w_Y); B^T w_Y uses w_Y in factor order.
    let wy_factor: Vec<f64> = sub.order.iter().map(|&j| sub.weights[j]).collect();
    let rhs: Vec<f64> = cp.columns.iter().map(|b| 1.0 - dot(b, &wy_factor)).collect();
    let u = cp.schur.solve(&rhs);

    // zeta_Y^{-1} B u = L^{-T} (sum_c u_c L^{-1} b_c)
    let mut g = vec![0.0; ny];
    for (v, &uc) in cp.solved.iter().zip(&u) {
        for (gi, vi) in g.iter_mut().zip(v) {
            *gi += vi * uc;
        }
    }
    sub.factor.backward_solve_in_place(&mut g);

    let mut rho_ones = vec![0.0; ny + complement.len()];
    for (r, &j) in sub.order.iter().enumerate() {
        rho_ones[j] = -g[r];
    }
    rho_ones[ny..].copy_from_slice(&u);

    let mut weights = vec![0.0; full.len()];
    for (j, &i) in subset.iter().enumerate() {
        weights[i] = sub.weights[j] + rho_ones[j];
    }
    for (c, &i) in complement.iter().enumerate() {
        weights[i] = u[c];
    }

    let mut half = sub.half.clone();
    let tail_rhs: Vec<f64> = cp.solved.iter().map(|v| 1.0 - dot(v, &sub.half)).collect();
    let mut tail = tail_rhs;
    cp.schur.forward_solve_in_place(&mut tail);
    half.extend_from_slice(&tail);

    let mut factor = sub.factor.clone();
    factor.extend_block(&cp.solved, &cp.schur);
    let order: Vec<usize> = sub.order.iter().map(|&j| subset[j]).chain(complement.iter().copied()).collect();

    let magnitude = weights.iter().sum();
    let state = WeightingState { cloud: full.clone(), factor, order, half, weights, magnitude, shift: sub.shift };
    Ok(Extended { state, rho_ones })
}

/// Materializes `rho_XY` for the given partition.
///
/// `weights_y` is the weighting of the subset rows, or `None` when the subset is
/// empty. By convention `rho_XX = 0` and `rho_{X,∅} = zeta_X`; the block-inverse
/// identity `(P zeta P)^{-1} = [[zeta_Y^{-1}, 0], [0, 0]] + rho` holds for every
/// nonempty subset.
pub fn rho(weights_y: Option<&WeightingState>, full_cloud: &PointCloud, part: &BlockPartition) -> Result<RhoMatrix> {
    check_partition(full_cloud, part)?;
    let m = full_cloud.len();
    let sub = match weights_y {
        None if part.subset().is_empty() => {
            let z = similarity_matrix(full_cloud).entries;
            let perm = part.permutation();
            let entries = DMatrix::from_fn(m, m, |a, b| z[(perm[a], perm[b])]);
            return Ok(RhoMatrix { entries, partition: part.clone() });
        }
        None => return Err(Error::invalid("a nonempty subset needs its weighting")),
        Some(s) => s,
    };
    check_subset_state(sub, full_cloud, part.subset(), "subset")?;
    let ny = part.subset().len();
    let k = part.complement().len();
    if k == 0 {
        return Ok(RhoMatrix { entries: DMatrix::zeros(m, m), partition: part.clone() });
    }
    let cp = coupling(sub, full_cloud, part.subset(), part.complement())?;
    // G = zeta_Y^{-1} B with rows in subset order.
    let mut g = DMatrix::zeros(ny, k);
    for (c, v) in cp.solved.iter().enumerate() {
        let mut col = v.clone();
        sub.factor.backward_solve_in_place(&mut col);
        for (r, &j) in sub.order.iter().enumerate() {
            g[(j, c)] = col[r];
        }
    }
    let s_inv = cp.schur.inverse();
    let gs = &g * &s_inv;
    let mut entries = DMatrix::zeros(m, m);
    entries.view_mut((0, 0), (ny, ny)).copy_from(&(&gs * g.transpose()));
    entries.view_mut((0, ny), (ny, k)).copy_from(&(-&gs));
    entries.view_mut((ny, 0), (k, ny)).copy_from(&(-gs.transpose()));
    entries.view_mut((ny, ny), (k, k)).copy_from(&s_inv);
    Ok(RhoMatrix { entries, partition: part.clone() })
}

/// `rho_XY 1` in block coordinates, through matrix-vector products only.
pub fn rho_ones(weights_y: &WeightingState, full_cloud: &PointCloud, part: &BlockPartition) -> Result<Vec<f64>> {
    check_partition(full_cloud, part)?;
    check_subset_state(weights_y, full_cloud, part.subset(), "subset")?;
    if part.complement().is_empty() {
        return Ok(vec![0.0; full_cloud.len()]);
    }
    Ok(extend(weights_y, full_cloud, part)?.rho_ones)
}

/// Extends the weighting of the subset `Y` to all of `full_cloud`.
///
/// Only the `|X \ Y| x |X \ Y|` Schur complement is factored; the cached factor
/// of `zeta_Y` is reused and extended.
pub fn extend_weighting(weights_y: &WeightingState, full_cloud: &PointCloud, part: &BlockPartition) -> Result<WeightingState> {
    check_partition(full_cloud, part)?;
    check_subset_state(weights_y, full_cloud, part.subset(), "subset")?;
    if part.complement().is_empty() {
        return Ok(weights_y.clone());
    }
    Ok(extend(weights_y, full_cloud, part)?.state)
}

impl WeightingState {
    /// Appends `x` in place and returns `Mag(X ∪ {x}) - Mag(X)`.
    ///
    /// One forward solve gives the new factor row and the scalar Schur complement;
    /// one backward solve refreshes the weights. `O(m^2)` per call.
    pub fn push_point(&mut self, x: &[f64]) -> Result<f64> {
        self.cloud.check_point(x)?;
        if let Some(first) = self.cloud.position_of(x) {
            return Err(Error::DegenerateInput { first, second: self.len() });
        }
        let column = self.factor_column(x);
        let (l, schur) = self.factor.append(&column, 1.0 + self.shift)?;
        let gain = 1.0 - dot(&l, &self.half);
        self.half.push(gain / schur.sqrt());

        let m = self.len();
        self.cloud.push(x);
        self.order.push(m);
        let mut w = self.half.clone();
        self.factor.backward_solve_in_place(&mut w);
        self.weights.resize(m + 1, 0.0);
        for (r, &i) in self.order.iter().enumerate() {
            self.weights[i] = w[r];
        }
        self.magnitude = self.weights.iter().sum();
        Ok(gain * gain / schur)
    }

    /// Reorders the cloud so that new point `k` is old point `new_to_old[k]`.
    ///
    /// The factor is untouched; only the index bookkeeping changes.
    pub fn permuted(&self, new_to_old: &[usize]) -> Result<WeightingState> {
        let m = self.len();
        let mut old_to_new = vec![usize::MAX; m];
        if new_to_old.len() != m {
            return Err(Error::invalid("permutation length does not match the cloud"));
        }
        for (k, &o) in new_to_old.iter().enumerate() {
            if o >= m || old_to_new[o] != usize::MAX {
                return Err(Error::invalid("not a permutation"));
            }
            old_to_new[o] = k;
        }
        Ok(WeightingState {
            cloud: self.cloud.subset(new_to_old),
            factor: self.factor.clone(),
            order: self.order.iter().map(|&o| old_to_new[o]).collect(),
            half: self.half.clone(),
            weights: new_to_old.iter().map(|&o| self.weights[o]).collect(),
            magnitude: self.magnitude,
            shift: self.shift,
        })
    }
}

/// Weighting of `X ∪ {x}` and the magnitude gain, leaving the input untouched.
pub fn add_point(weights_x: &WeightingState, x_new: &[f64]) -> Result<(WeightingState, f64)> {
    let mut next = weights_x.clone();
    let gamma = next.push_point(x_new)?;
    Ok((next, gamma))
}

/// Glues the weightings of a partition `Y ⊔ Ȳ` of `full_cloud` into `w_X`.
///
/// ```text
/// w_X|Y = (zeta_X / zeta_Ȳ)^{-1} (1_Y - B w_Ȳ)
/// w_X|Ȳ = (zeta_X / zeta_Y)^{-1} (1_Ȳ - B^T w_Y)
/// ```
pub fn disjoint_gluing(
    weights_y: &WeightingState,
    weights_ybar: &WeightingState,
    full_cloud: &PointCloud,
    part: &BlockPartition,
) -> Result<WeightingState> {
    check_partition(full_cloud, part)?;
    check_subset_state(weights_y, full_cloud, part.subset(), "subset")?;
    if part.complement().is_empty() {
        return Ok(weights_y.clone());
    }
    check_subset_state(weights_ybar, full_cloud, part.complement(), "complement")?;
    let (subset, complement) = (part.subset(), part.complement());

    // zeta_X / zeta_Y, retained as the tail of the combined factor.
    let cy = coupling(weights_y, full_cloud, subset, complement)?;
    let wy_factor: Vec<f64> = weights_y.order.iter().map(|&j| weights_y.weights[j]).collect();
    let rhs: Vec<f64> = cy.columns.iter().map(|b| 1.0 - dot(b, &wy_factor)).collect();
    let on_ybar = cy.schur.solve(&rhs);

    // zeta_X / zeta_Ȳ, for the subset half of the weights.
    let cb = coupling(weights_ybar, full_cloud, complement, subset)?;
    let wb_factor: Vec<f64> = weights_ybar.order.iter().map(|&j| weights_ybar.weights[j]).collect();
    let rhs: Vec<f64> = cb.columns.iter().map(|b| 1.0 - dot(b, &wb_factor)).collect();
    let on_y = cb.schur.solve(&rhs);

    let mut weights = vec![0.0; full_cloud.len()];
    for (j, &i) in subset.iter().enumerate() {
        weights[i] = on_y[j];
    }
    for (c, &i) in complement.iter().enumerate() {
        weights[i] = on_ybar[c];
    }

    let mut half = weights_y.half.clone();
    let mut tail: Vec<f64> = cy.solved.iter().map(|v| 1.0 - dot(v, &weights_y.half)).collect();
    cy.schur.forward_solve_in_place(&mut tail);
    half.extend_from_slice(&tail);
    let mut factor = weights_y.factor.clone();
    factor.extend_block(&cy.solved, &cy.schur);
    let order = weights_y.order.iter().map(|&j| subset[j]).chain(complement.iter().copied()).collect();
    let magnitude = weights.iter().sum();
    Ok(WeightingState { cloud: full_cloud.clone(), factor, order, half, weights, magnitude, shift: weights_y.shift })
}

/// Index pairs `(i, j)` with `x_i == y_j` exactly.
pub fn find_shared(x: &PointCloud, y: &PointCloud) -> Vec<(usize, usize)> {
    (0..y.len()).filter_map(|j| x.position_of(y.point(j)).map(|i| (i, j))).collect()
}

/// The union cloud `Z = X ∪ Y` as `X` followed by the non-shared points of `Y`,
/// plus the position of every `Y` point inside `Z`.
fn union_layout(x: &PointCloud, y: &PointCloud, shared: &[(usize, usize)]) -> Result<(PointCloud, Vec<usize>)> {
    x.check_compatible(y)?;
    let mut y_in_z = vec![usize::MAX; y.len()];
    let mut x_used = vec![false; x.len()];
    for &(i, j) in shared {
        if i >= x.len() || j >= y.len() {
            return Err(Error::invalid(format!("shared pair ({i}, {j}) is out of range")));
        }
        if x_used[i] || y_in_z[j] != usize::MAX {
            return Err(Error::invalid(format!("shared pair ({i}, {j}) repeats an index")));
        }
        if x.point(i) != y.point(j) {
            return Err(Error::invalid(format!(
                "shared pair ({i}, {j}) has different coordinates in the two clouds"
            )));
        }
        x_used[i] = true;
        y_in_z[j] = i;
    }
    let mut coords = x.coords().to_vec();
    let mut next = x.len();
    for (j, slot) in y_in_z.iter_mut().enumerate() {
        if *slot == usize::MAX {
            coords.extend_from_slice(y.point(j));
            *slot = next;
            next += 1;
        }
    }
    let z = PointCloud::new(coords, x.dim(), x.metric())?.with_scale(x.scale())?;
    Ok((z, y_in_z))
}

/// Extends a weighting whose points sit at `positions` inside `z`.
fn extend_into(sub: &WeightingState, z: &PointCloud, positions: &[usize]) -> Result<Extended> {
    let mut sorted: Vec<usize> = (0..positions.len()).collect();
    sorted.sort_by_key(|&k| positions[k]);
    let aligned = sub.permuted(&sorted)?;
    let part = BlockPartition::new(sorted.iter().map(|&k| positions[k]).collect(), z.len())?;
    if part.complement().is_empty() {
        let n = z.len();
        return Ok(Extended { state: aligned, rho_ones: vec![0.0; n] });
    }
    extend(&aligned, z, &part)
}

/// Terms of the corrected inclusion-exclusion identity for `Z = X ∪ Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionExclusion {
    pub mag_x: f64,
    pub mag_y: f64,
    pub mag_intersection: f64,
    /// `1^T rho_ZX 1`
    pub rho_x: f64,
    /// `1^T rho_ZY 1`
    pub rho_y: f64,
    /// `1^T rho_{Z,X∩Y} 1`. For an empty intersection this is taken as `Mag(Z)`,
    /// the value that keeps the identity exact.
    pub rho_intersection: f64,
    /// `Mag(Z)` from the union weighting.
    pub magnitude: f64,
}

impl InclusionExclusion {
    /// `Mag(X) + Mag(Y) - Mag(X∩Y) + rho_ZX + rho_ZY - rho_{Z,X∩Y}`.
    pub fn corrected_magnitude(&self) -> f64 {
        self.mag_x + self.mag_y - self.mag_intersection + self.rho_x + self.rho_y - self.rho_intersection
    }
}

struct UnionTerms {
    z: PointCloud,
    from_x: Extended,
    from_y: Extended,
    from_i: Option<(f64, Extended)>,
}

fn union_terms(wx: &WeightingState, wy: &WeightingState, shared: &[(usize, usize)]) -> Result<UnionTerms> {
    let (z, y_in_z) = union_layout(&wx.cloud, &wy.cloud, shared)?;
    let from_x = extend_into(wx, &z, &(0..wx.len()).collect::<Vec<_>>())?;
    let from_y = extend_into(wy, &z, &y_in_z)?;
    let from_i = if shared.is_empty() {
        None
    } else {
        let mut xi: Vec<usize> = shared.iter().map(|&(i, _)| i).collect();
        xi.sort_unstable();
        let wi = weighting(&wx.cloud.subset(&xi))?;
        Some((wi.magnitude(), extend_into(&wi, &z, &xi)?))
    };
    Ok(UnionTerms { z, from_x, from_y, from_i })
}

/// Weighting of `X ∪ Y` from the weightings of `X` and `Y`.
///
/// `shared` lists index pairs `(i, j)` with `x_i == y_j`; they are the declared
/// intersection. The result is ordered as `X` followed by the non-shared points
/// of `Y`, and combines three subset extensions:
///
/// ```text
/// w_Z = P_ZX([w_X; 0] + rho_ZX 1) + P_ZY([w_Y; 0] + rho_ZY 1) - P_Z,X∩Y([w_X∩Y; 0] + rho_Z,X∩Y 1)
/// ```
///
/// An empty intersection reduces to [`disjoint_gluing`].
pub fn union_weighting(wx: &WeightingState, wy: &WeightingState, shared: &[(usize, usize)]) -> Result<WeightingState> {
    let (z, y_in_z) = union_layout(&wx.cloud, &wy.cloud, shared)?;
    if z.len() == wx.len() {
        return Ok(wx.clone());
    }
    if shared.is_empty() {
        let part = BlockPartition::leading(wx.len(), z.len())?;
        let ybar = wy.permuted(&{
            let mut k: Vec<usize> = (0..wy.len()).collect();
            k.sort_by_key(|&j| y_in_z[j]);
            k
        })?;
        return disjoint_gluing(wx, &ybar, &z, &part);
    }
    let terms = union_terms(wx, wy, shared)?;
    let (_, from_i) = terms.from_i.expect("nonempty intersection");
    let mut state = terms.from_x.state;
    for k in 0..terms.z.len() {
        state.weights[k] += terms.from_y.state.weights[k] - from_i.state.weights[k];
    }
    state.magnitude = state.weights.iter().sum();
    Ok(state)
}

/// Evaluates every term of the corrected inclusion-exclusion identity for magnitude.
pub fn inclusion_exclusion(wx: &WeightingState, wy: &WeightingState, shared: &[(usize, usize)]) -> Result<InclusionExclusion> {
    let terms = union_terms(wx, wy, shared)?;
    let magnitude = union_weighting(wx, wy, shared)?.magnitude();
    let (mag_intersection, rho_intersection) = match &terms.from_i {
        Some((mag, ext)) => (*mag, ext.rho_ones.iter().sum()),
        None => (0.0, magnitude),
    };
    Ok(InclusionExclusion {
        mag_x: wx.magnitude(),
        mag_y: wy.magnitude(),
        mag_intersection,
        rho_x: terms.from_x.rho_ones.iter().sum(),
        rho_y: terms.from_y.rho_ones.iter().sum(),
        rho_intersection,
        magnitude,
    })
}
