//! Small dense linear-algebra helpers shared by the CCA and deep modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below this are lifted before inverting a square root.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Returns `x` with `mean` subtracted from every row.
pub fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    out
}

pub fn add_ridge(m: &mut DMatrix<f64>, reg: f64) {
    for i in 0..m.nrows().min(m.ncols()) {
        m[(i, i)] += reg;
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Symmetric eigendecomposition sorted by descending eigenvalue.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Inverse square root of a symmetric positive semi-definite matrix.
///
/// Eigenvalues are floored at [`EIGEN_FLOOR`]. When `require_definite` is set,
/// a matrix whose smallest eigenvalue is not clearly positive relative to the
/// largest is rejected with [`Error::Singularity`].
pub fn inv_sqrt_psd(m: &DMatrix<f64>, require_definite: bool, what: &str) -> Result<DMatrix<f64>> {
    let (values, vectors) = sorted_symmetric_eigen(m);
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !max.is_finite() || !min.is_finite() {
        return Err(Error::Numerical(format!("{what}: non-finite eigenvalue")));
    }
    if require_definite && (max <= 0.0 || min <= 1e-10 * max) {
        return Err(Error::Singularity(format!(
            "{what} is rank deficient (eigenvalues in [{min:.3e}, {max:.3e}]); use a positive ridge"
        )));
    }
    let scale = DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| 1.0 / v.max(EIGEN_FLOOR).sqrt()),
    );
    let scaled = scale_columns(&vectors, &scale);
    Ok(&scaled * vectors.transpose())
}

/// Multiplies column `j` of `m` by `s[j]`.
pub fn scale_columns(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= s[j];
    }
    out
}

/// Thin SVD with singular triplets sorted by descending singular value.
pub fn sorted_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let svd = m.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return V".into()))?;
    let s = svd.singular_values;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD produced non-finite singular values".into()));
    }
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut us = DMatrix::zeros(u.nrows(), k);
    let mut vs = DMatrix::zeros(v_t.ncols(), k);
    let mut ss = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        vs.set_column(dst, &v_t.row(src).transpose());
        ss[dst] = s[src];
    }
    Ok((us, ss, vs))
}

/// Pearson correlation between two equally long slices.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Gathers the given rows of `m` into a new matrix.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Stacks row vectors into a matrix. All rows must share a width.
pub fn stack_rows(rows: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let width = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Argument("rows have differing widths".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}
