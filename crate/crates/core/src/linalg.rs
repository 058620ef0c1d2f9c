//! Small dense helpers built on nalgebra's SVD.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Threshold below which a singular value counts as zero: `tol * max(sigma_max, 1)`.
pub fn rank_threshold(singular_values: &DVector<f64>, tol: f64) -> f64 {
    tol * singular_values.max().max(1.0)
}

/// Orthonormal bases for the kernel and its orthogonal complement (the row
/// space) of `a`. Returns `(kernel, row_space)` as column matrices.
pub fn kernel_split(a: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let cols = a.ncols();
    if cols == 0 {
        return (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0));
    }
    // nalgebra only returns min(rows, cols) right singular vectors; pad wide
    // matrices so the full right basis comes back.
    let padded = if a.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let thr = rank_threshold(&svd.singular_values, tol);
    let (mut ker, mut row): (Vec<usize>, Vec<usize>) = (Vec::new(), Vec::new());
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= thr {
            ker.push(i);
        } else {
            row.push(i);
        }
    }
    (gather_rows_as_cols(&v_t, &ker), gather_rows_as_cols(&v_t, &row))
}

fn gather_rows_as_cols(v_t: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(v_t.ncols(), idx.len(), |r, c| v_t[(idx[c], r)])
}

/// Numerical rank with the relative threshold used throughout the crate.
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let thr = rank_threshold(&sv, tol);
    sv.iter().filter(|s| **s > thr).count()
}

/// Orthonormal basis of the column space of `a`.
pub fn range_basis(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if a.is_empty() {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let thr = rank_threshold(&svd.singular_values, tol);
    let idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > thr)
        .collect();
    DMatrix::from_fn(a.nrows(), idx.len(), |r, c| u[(r, idx[c])])
}

/// Column-wise concatenation.
pub fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = a.nrows().max(b.nrows());
    let mut out = DMatrix::zeros(rows, a.ncols() + b.ncols());
    if a.ncols() > 0 {
        out.view_mut((0, 0), (rows, a.ncols())).copy_from(a);
    }
    if b.ncols() > 0 {
        out.view_mut((0, a.ncols()), (rows, b.ncols())).copy_from(b);
    }
    out
}

/// Left inverse of a full-column-rank matrix together with its 2-norm
/// condition number.
pub fn left_inverse(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    if a.ncols() == 0 {
        return (DMatrix::zeros(0, a.nrows()), 1.0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut inv_s = DMatrix::zeros(v_t.nrows(), u.ncols());
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > 0.0 {
            inv_s[(i, i)] = 1.0 / s;
        }
    }
    (v_t.transpose() * inv_s * u.transpose(), cond)
}

/// Symmetric part `(a + a^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute entry of `a - a^T`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).amax()
}

/// Least-squares slope, intercept and RMS residual of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    #[allow(unused_imports)]
    use num_traits::Float;
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    Some((slope, intercept, (ss / nf).sqrt()))
}
