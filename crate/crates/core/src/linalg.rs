//! Small dense helpers around a full SVD.

use nalgebra::{DMatrix, DVector};

/// Singular value decomposition with singular values sorted in non-increasing
/// order and a complete set of right singular vectors (one per column of the
/// input), so the trailing columns of `v` span the null space.
#[derive(Debug, Clone)]
pub struct FullSvd {
    /// Non-increasing, length `min(rows, cols)` of the unpadded input
    /// padded up to `cols` with zeros when `rows < cols`.
    pub singular_values: Vec<f64>,
    /// Left singular vectors, one column per singular value that has one
    /// (`rows × min(rows, cols)`).
    pub u: DMatrix<f64>,
    /// Right singular vectors (`cols × cols`).
    pub v: DMatrix<f64>,
}

impl FullSvd {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        if rows == 0 || cols == 0 {
            return Self {
                singular_values: vec![0.0; cols],
                u: DMatrix::zeros(rows, 0),
                v: DMatrix::identity(cols, cols),
            };
        }
        let m = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a[(i, j)]);
        let svd = m.svd().expect("SVD of a finite matrix");
        let k = rows.min(cols);
        let s = svd.S().column_vector();
        let mut singular_values: Vec<f64> = (0..k).map(|i| s[i]).collect();
        singular_values.resize(cols, 0.0);
        let (fu, fv) = (svd.U(), svd.V());
        let mut u = DMatrix::from_fn(rows, k, |i, j| fu[(i, j)]);
        let mut v = DMatrix::from_fn(cols, cols, |i, j| fv[(i, j)]);
        for j in 0..k {
            let col = u.column(j);
            let pivot = col.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                u.column_mut(j).neg_mut();
                v.column_mut(j).neg_mut();
            }
        }
        Self {
            singular_values,
            u,
            v,
        }
    }

    pub fn max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values strictly above `rel_tol · σ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cut = rel_tol * self.max();
        if self.max() <= 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s > cut).count()
    }

    /// Orthonormal basis of the null space (columns of `v` past the rank).
    pub fn null_space(&self, rel_tol: f64) -> DMatrix<f64> {
        let r = self.rank(rel_tol);
        let cols = self.v.ncols();
        self.v.columns(r, cols - r).into_owned()
    }

    /// Orthonormal basis of the row space.
    pub fn row_space(&self, rel_tol: f64) -> DMatrix<f64> {
        let r = self.rank(rel_tol);
        self.v.columns(0, r).into_owned()
    }
}

/// Orthonormal basis of the column span of `a` (Euclidean), dropping
/// directions below `rel_tol · σ_max`.
pub fn column_span(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = FullSvd::new(&a.transpose());
    // Right singular vectors of aᵀ are left singular vectors of a.
    svd.row_space(rel_tol)
}

/// Orthonormal basis of the orthogonal complement of span(`a`) in ℝ^rows.
pub fn complement(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let rows = a.nrows();
    if a.ncols() == 0 {
        return DMatrix::identity(rows, rows);
    }
    FullSvd::new(&a.transpose()).null_space(rel_tol)
}

/// Largest singular value of `a`, zero for empty matrices.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    FullSvd::new(a).max()
}

pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((0, offset), (rows, b.ncols())).copy_from(*b);
        offset += b.ncols();
    }
    out
}

pub fn stack_vectors(parts: &[DVector<f64>]) -> DVector<f64> {
    let len: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut offset = 0;
    for p in parts {
        out.rows_mut(offset, p.len()).copy_from(p);
        offset += p.len();
    }
    out
}

pub fn split_vector(v: &DVector<f64>, sizes: &[usize]) -> Vec<DVector<f64>> {
    let mut offset = 0;
    sizes
        .iter()
        .map(|&s| {
            let part = v.rows(offset, s).into_owned();
            offset += s;
            part
        })
        .collect()
}
