//! Small dense vector helpers shared across modules.

use nalgebra::DMatrix;

/// Relative singular-value cutoff used for every numerical rank decision.
pub const RANK_RTOL: f64 = 1e-10;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn scaled(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `y += s * x`
#[inline]
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Builds an `n × d` matrix from row slices.
pub fn rows_to_matrix<'a, I>(rows: I, d: usize) -> DMatrix<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let data: Vec<f64> = rows.into_iter().flat_map(|r| r.iter().copied()).collect();
    let n = data.len() / d.max(1);
    DMatrix::from_row_slice(n, d, &data)
}

/// Number of singular values above `RANK_RTOL` times the largest one.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * smax).count()
}

/// Orthonormal basis (as columns) of the row space of `m`, using the same
/// relative cutoff as [`numerical_rank`].
pub fn row_space_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::zeros(d, 0);
    }
    // Row space of m = column space of m^T m; use the SVD of m directly.
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax > 0.0 && s > RANK_RTOL * smax)
        .map(|(i, _)| i)
        .collect();
    let mut basis = DMatrix::zeros(d, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        for r in 0..d {
            basis[(r, c)] = v_t[(i, r)];
        }
    }
    basis
}
