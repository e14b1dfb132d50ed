//! Sparse weighted graph construction.
//!
//! Every row `i` of the connectivity distribution solves
//!
//! ```text
//! min_{p ∈ simplex}  Σ_j p_j d_ij + γ_i ‖p‖²
//! ```
//!
//! with `γ_i` set to the largest value that still yields a `k`-sparse
//! solution. The minimizer then has the closed form
//!
//! ```text
//! p_j = (d^(k+1) − d_j)_+ / Σ_{v ≤ k} (d^(k+1) − d^(v))
//! ```
//!
//! where `d^(v)` is the v-th smallest distance of the row. The directed
//! distribution is symmetrized into the undirected graph used by the encoder.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Raw input features, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(Array2<f64>);

impl DataMatrix {
    /// Wraps `values` as-is after validating shape and finiteness.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 samples, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 1 {
            return Err(Error::InvalidInput("need at least 1 feature".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                pos / values.ncols(),
                pos % values.ncols()
            )));
        }
        Ok(Self(values))
    }

    /// Per-feature min-max rescaling into `[0, 1]`; constant features become 0.
    pub fn rescaled(values: Array2<f64>) -> Result<Self> {
        let mut out = Self::new(values)?;
        for mut col in out.0.columns_mut() {
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            let span = hi - lo;
            if span > 0.0 {
                col.mapv_inplace(|v| ((v - lo) / span).clamp(0.0, 1.0));
            } else {
                col.fill(0.0);
            }
        }
        Ok(out)
    }

    pub fn n_samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Symmetric matrix of squared Euclidean distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(Array2<f64>);

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0
            .row(i)
            .to_slice()
            .expect("distance matrix is standard layout")
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// `out[i][j] = ‖z_i − z_j‖²`, computed from coordinate differences so that
/// coincident rows give exact zeros.
pub fn pairwise_sq_distances(z: ArrayView2<'_, f64>) -> Result<DistanceMatrix> {
    let n = z.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 rows, got {n}")));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let zi = z.row(i);
        for j in (i + 1)..n {
            let d = zi
                .iter()
                .zip(z.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .max(0.0);
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    Ok(DistanceMatrix(out))
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 2 || k + 1 > n {
        return Err(Error::Parameter(format!(
            "sparsity k = {k} outside [2, {}] for n = {n}",
            n.saturating_sub(1)
        )));
    }
    Ok(())
}

/// Indices of `row` ordered by (distance, not-self, index). The self index
/// wins ties so that it always enters the support.
fn ranked_indices(row: &[f64], self_index: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| {
        row[a]
            .total_cmp(&row[b])
            .then_with(|| (a != self_index).cmp(&(b != self_index)))
            .then_with(|| a.cmp(&b))
    });
    order
}

fn check_row(row: &[f64], self_index: usize, k: usize) -> Result<()> {
    check_k(k, row.len())?;
    if self_index >= row.len() {
        return Err(Error::Parameter(format!(
            "self index {self_index} out of range for row of length {}",
            row.len()
        )));
    }
    if row.iter().any(|d| d.is_nan()) {
        return Err(Error::InvalidInput("NaN distance".into()));
    }
    Ok(())
}

/// The regularizer `γ = ½(k·d^(k+1) − Σ_{v ≤ k} d^(v))`, the upper end of the
/// range that keeps the row's solution `k`-sparse.
pub fn compute_gamma(row: &[f64], self_index: usize, k: usize) -> Result<f64> {
    check_row(row, self_index, k)?;
    let order = ranked_indices(row, self_index);
    let kth_next = row[order[k]];
    let head: f64 = order[..k].iter().map(|&j| row[j]).sum();
    Ok(0.5 * (k as f64 * kth_next - head))
}

/// Closed-form minimizer for one row, as `(index, probability)` pairs sorted
/// by index. Zero probabilities are not stored.
pub fn solve_connectivity_row(
    row: &[f64],
    self_index: usize,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    check_row(row, self_index, k)?;
    let order = ranked_indices(row, self_index);
    let threshold = row[order[k]];
    let nearest = &order[..k];
    let denom: f64 = nearest.iter().map(|&j| threshold - row[j]).sum();

    let mut out: Vec<(usize, f64)> = if denom > 0.0 {
        nearest
            .iter()
            .map(|&j| (j, (threshold - row[j]) / denom))
            .filter(|&(_, p)| p > 0.0)
            .collect()
    } else {
        // first k+1 distances coincide: the limit of the ratio is uniform
        nearest.iter().map(|&j| (j, 1.0 / k as f64)).collect()
    };
    out.sort_by_key(|&(j, _)| j);
    Ok(out)
}

/// Row-stochastic sparse matrix whose row `i` is `p(· | v_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityDistribution(CsrMatrix);

impl ConnectivityDistribution {
    /// Validates that `matrix` is square, nonnegative and row-stochastic.
    pub fn from_csr(matrix: CsrMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Shape("connectivity matrix must be square".into()));
        }
        for i in 0..matrix.n_rows() {
            let (_, vals) = matrix.row(i);
            if vals.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::InvalidInput(format!("row {i} has a negative entry")));
            }
            let s: f64 = vals.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self(matrix))
    }

    pub fn n(&self) -> usize {
        self.0.n_rows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CsrMatrix {
        self.0
    }
}

/// Solves every row of `distances` independently at sparsity `k`.
pub fn build_distribution(distances: &DistanceMatrix, k: usize) -> Result<ConnectivityDistribution> {
    let n = distances.n();
    check_k(k, n)?;
    let rows = (0..n)
        .map(|i| {
            solve_connectivity_row(distances.row(i), i, k).map_err(|e| Error::Row {
                row: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConnectivityDistribution(CsrMatrix::from_rows(n, rows)?))
}

/// Undirected weighted graph `Ã` with its degrees, normalized adjacency
/// `Â = D̃^{-1/2} Ã D̃^{-1/2}` and Laplacian `L̃ = D̃ − Ã`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    pub adjacency: CsrMatrix,
    pub degrees: Vec<f64>,
    pub normalized: CsrMatrix,
    pub laplacian: CsrMatrix,
}

impl WeightedGraph {
    /// Derives degrees, normalized adjacency and Laplacian from a symmetric
    /// nonnegative adjacency matrix.
    pub fn from_adjacency(adjacency: CsrMatrix) -> Result<Self> {
        if !adjacency.is_square() {
            return Err(Error::Shape("adjacency must be square".into()));
        }
        if !adjacency.is_symmetric() {
            return Err(Error::InvalidInput("adjacency is not symmetric".into()));
        }
        if adjacency.triplets().any(|(_, _, v)| !(v >= 0.0)) {
            return Err(Error::InvalidInput("adjacency has a negative weight".into()));
        }
        let degrees = adjacency.row_sums();
        let normalized = normalize(&adjacency, &degrees)?;
        let laplacian = laplacian(&adjacency, &degrees);
        Ok(Self {
            adjacency,
            degrees,
            normalized,
            laplacian,
        })
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    /// Stored off-diagonal weights that are strictly positive.
    pub fn off_diagonal_weights(&self) -> Vec<f64> {
        self.adjacency
            .triplets()
            .filter(|&(i, j, v)| i != j && v > 0.0)
            .map(|(_, _, v)| v)
            .collect()
    }
}

/// `Ã_ij = (P_ij + P_ji) / 2`, then degrees, `Â` and `L̃`.
pub fn symmetrize(p: &ConnectivityDistribution) -> Result<WeightedGraph> {
    let m = p.matrix();
    let t = m.transpose();
    let rows = (0..m.n_rows())
        .map(|i| {
            let mut row: Vec<(usize, f64)> = Vec::new();
            let (a_idx, a_val) = m.row(i);
            let (b_idx, b_val) = t.row(i);
            let (mut x, mut y) = (0, 0);
            while x < a_idx.len() || y < b_idx.len() {
                let ja = a_idx.get(x).copied().unwrap_or(usize::MAX);
                let jb = b_idx.get(y).copied().unwrap_or(usize::MAX);
                if ja == jb {
                    row.push((ja, (a_val[x] + b_val[y]) / 2.0));
                    x += 1;
                    y += 1;
                } else if ja < jb {
                    row.push((ja, a_val[x] / 2.0));
                    x += 1;
                } else {
                    row.push((jb, b_val[y] / 2.0));
                    y += 1;
                }
            }
            row
        })
        .collect();
    let adjacency = CsrMatrix::from_rows(m.n_cols(), rows)?;
    WeightedGraph::from_adjacency(adjacency)
}

/// `Â_ij = Ã_ij / sqrt(D̃_ii · D̃_jj)`.
pub fn normalize(adjacency: &CsrMatrix, degrees: &[f64]) -> Result<CsrMatrix> {
    if let Some(node) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::DegenerateGraph { node });
    }
    Ok(adjacency.map_values(|i, j, v| v / (degrees[i] * degrees[j]).sqrt()))
}

fn laplacian(adjacency: &CsrMatrix, degrees: &[f64]) -> CsrMatrix {
    let rows = (0..adjacency.n_rows())
        .map(|i| {
            let mut row: Vec<(usize, f64)> = adjacency.row_iter(i).map(|(j, v)| (j, -v)).collect();
            row.push((i, degrees[i]));
            row
        })
        .collect();
    CsrMatrix::from_rows(adjacency.n_cols(), rows).expect("indices in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dense_row(sparse: &[(usize, f64)], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(j, p) in sparse {
            out[j] = p;
        }
        out
    }

    #[test]
    fn distances_two_points() {
        let d = pairwise_sq_distances(array![[0.0], [3.0]].view()).unwrap();
        assert_eq!(d.view(), array![[0.0, 9.0], [9.0, 0.0]]);
    }

    #[test]
    fn distances_identical_rows_are_zero() {
        let z = Array2::from_elem((4, 3), 0.37);
        let d = pairwise_sq_distances(z.view()).unwrap();
        assert!(d.view().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn distances_reject_nan_and_single_row() {
        assert!(pairwise_sq_distances(array![[0.0], [f64::NAN]].view()).is_err());
        assert!(pairwise_sq_distances(array![[0.0, 1.0]].view()).is_err());
    }

    #[test]
    fn gamma_hand_values() {
        assert_eq!(compute_gamma(&[0.0, 1.0, 2.0, 3.0, 9.0], 0, 2).unwrap(), 1.5);
        assert_eq!(compute_gamma(&[0.0, 1.0, 1.0, 1.0], 0, 2).unwrap(), 0.5);
        assert_eq!(compute_gamma(&[0.0; 5], 0, 3).unwrap(), 0.0);
    }

    #[test]
    fn gamma_rejects_bad_k() {
        let row = [0.0, 1.0, 2.0];
        assert!(matches!(compute_gamma(&row, 0, 1), Err(Error::Parameter(_))));
        assert!(matches!(compute_gamma(&row, 0, 3), Err(Error::Parameter(_))));
        assert!(compute_gamma(&row, 0, 2).is_ok());
    }

    #[test]
    fn row_hand_example() {
        let p = solve_connectivity_row(&[0.0, 1.0, 2.0, 3.0, 9.0], 0, 2).unwrap();
        let p = dense_row(&p, 5);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(&p[2..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn row_support_shrinks_under_ties() {
        let p = solve_connectivity_row(&[0.0, 1.0, 1.0, 5.0], 0, 2).unwrap();
        assert_eq!(p, vec![(0, 1.0)]);
    }

    #[test]
    fn row_zero_denominator_is_uniform_and_keeps_self() {
        let p = solve_connectivity_row(&[0.0, 0.0, 0.0, 0.0], 2, 2).unwrap();
        assert_eq!(p, vec![(0, 0.5), (2, 0.5)]);
    }

    #[test]
    fn row_rejects_nan() {
        assert!(solve_connectivity_row(&[0.0, f64::NAN, 1.0], 0, 2).is_err());
    }

    #[test]
    fn duplicate_points_give_uniform_rows() {
        let z = Array2::from_elem((3, 2), 0.5);
        let d = pairwise_sq_distances(z.view()).unwrap();
        let p = build_distribution(&d, 2).unwrap();
        for i in 0..3 {
            let (idx, vals) = p.matrix().row(i);
            assert_eq!(vals, &[0.5, 0.5]);
            assert!(idx.contains(&i));
        }
    }

    #[test]
    fn separated_pairs_link_to_partner() {
        let z = array![[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.0, 5.2]];
        let d = pairwise_sq_distances(z.view()).unwrap();
        let p = build_distribution(&d, 2).unwrap();
        let partner = [1, 0, 3, 2];
        for i in 0..4 {
            let (idx, _) = p.matrix().row(i);
            let mut expect = vec![i, partner[i]];
            expect.sort();
            assert_eq!(idx, &expect[..]);
        }
    }

    #[test]
    fn build_distribution_reports_row_errors() {
        let d = pairwise_sq_distances(array![[0.0], [1.0], [2.0]].view()).unwrap();
        assert!(build_distribution(&d, 3).is_err());
    }

    #[test]
    fn symmetrize_averages() {
        let p = CsrMatrix::from_rows(
            2,
            vec![vec![(0, 0.6), (1, 0.4)], vec![(0, 0.2), (1, 0.8)]],
        )
        .unwrap();
        let g = symmetrize(&ConnectivityDistribution::from_csr(p).unwrap()).unwrap();
        assert!((g.adjacency.get(0, 1) - 0.3).abs() < 1e-15);
        assert_eq!(g.adjacency.get(0, 1), g.adjacency.get(1, 0));
        assert_eq!(g.degrees.len(), 2);
    }

    #[test]
    fn symmetrize_fixed_point() {
        let p = CsrMatrix::from_rows(
            2,
            vec![vec![(0, 0.75), (1, 0.25)], vec![(0, 0.25), (1, 0.75)]],
        )
        .unwrap();
        let g = symmetrize(&ConnectivityDistribution::from_csr(p.clone()).unwrap()).unwrap();
        assert_eq!(g.adjacency, p);
    }

    #[test]
    fn normalize_identity_and_all_ones() {
        let eye = CsrMatrix::identity(3);
        assert_eq!(normalize(&eye, &eye.row_sums()).unwrap(), eye);

        let ones = CsrMatrix::from_dense(array![[1.0, 1.0], [1.0, 1.0]].view(), 0.0);
        let a_hat = normalize(&ones, &ones.row_sums()).unwrap();
        assert_eq!(a_hat.to_dense(), array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn normalize_rejects_zero_degree() {
        let m = CsrMatrix::from_rows(2, vec![vec![(0, 1.0)], vec![]]).unwrap();
        assert!(matches!(
            normalize(&m, &m.row_sums()),
            Err(Error::DegenerateGraph { node: 1 })
        ));
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let adj = CsrMatrix::from_dense(array![[0.5, 0.2, 0.0], [0.2, 0.1, 0.3], [0.0, 0.3, 0.4]].view(), 0.0);
        let g = WeightedGraph::from_adjacency(adj).unwrap();
        for s in g.laplacian.row_sums() {
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn rescale_endpoints_and_constant_columns() {
        let x = DataMatrix::rescaled(array![[0.0, 10.0, 3.0], [5.0, 20.0, 3.0]]).unwrap();
        assert_eq!(x.view(), array![[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]]);
    }
}
