//! Dense/sparse linear-algebra layer.
//!
//! Everything the solvers need lives here: Gram products over dense or
//! compressed-column blocks, a right-looking Cholesky with a relative pivot
//! tolerance, triangular solves against the stored factor, and a general
//! (nonsymmetric) dense eigensolver used by the spectral checks.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CscMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Relative pivot tolerance used by [`cholesky`].
pub const DEFAULT_PIVOT_TOL: f64 = 1e-13;

/// Largest matrix dimension accepted by [`dense_eigs`].
pub const DEFAULT_EIG_CAP: usize = 2000;

/// A matrix block of the partitioned problem, either dense or compressed-column.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockMatrix {
    Dense(DMatrix<f64>),
    Sparse(CscMatrix<f64>),
}

impl BlockMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        BlockMatrix::Dense(DMatrix::zeros(nrows, ncols))
    }

    /// `scale * [I | 0]` with shape `nrows × ncols`, stored sparse.
    pub fn scaled_identity(nrows: usize, ncols: usize, scale: f64) -> Self {
        let k = nrows.min(ncols);
        let mut col_offsets: Vec<usize> = (0..=k).collect();
        col_offsets.resize(ncols + 1, k);
        let csc = CscMatrix::try_from_csc_data(
            nrows,
            ncols,
            col_offsets,
            (0..k).collect(),
            vec![scale; k],
        )
        .expect("valid identity pattern");
        BlockMatrix::Sparse(csc)
    }

    pub fn nrows(&self) -> usize {
        match self {
            BlockMatrix::Dense(m) => m.nrows(),
            BlockMatrix::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            BlockMatrix::Dense(m) => m.ncols(),
            BlockMatrix::Sparse(m) => m.ncols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, BlockMatrix::Sparse(_))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            BlockMatrix::Dense(m) => m.clone(),
            BlockMatrix::Sparse(m) => DMatrix::from(m),
        }
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols(), "mul_vec: length mismatch");
        match self {
            BlockMatrix::Dense(m) => m * x,
            BlockMatrix::Sparse(m) => {
                let mut y = DVector::zeros(m.nrows());
                for (j, col) in m.col_iter().enumerate() {
                    let xj = x[j];
                    if xj == 0.0 {
                        continue;
                    }
                    for (&i, &v) in col.row_indices().iter().zip(col.values()) {
                        y[i] += v * xj;
                    }
                }
                y
            }
        }
    }

    /// `y = A^T x`
    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows(), "tr_mul_vec: length mismatch");
        match self {
            BlockMatrix::Dense(m) => m.tr_mul(x),
            BlockMatrix::Sparse(m) => DVector::from_iterator(
                m.ncols(),
                m.col_iter().map(|col| {
                    col.row_indices()
                        .iter()
                        .zip(col.values())
                        .map(|(&i, &v)| v * x[i])
                        .sum::<f64>()
                }),
            ),
        }
    }

    /// `A^T A`, symmetrized.
    pub fn gram(&self) -> DMatrix<f64> {
        let g = match self {
            BlockMatrix::Dense(m) => m.tr_mul(m),
            BlockMatrix::Sparse(m) => {
                let g = &m.transpose() * m;
                DMatrix::from(&g)
            }
        };
        symmetrize(g)
    }

    /// `A^T (A x)` without forming the Gram matrix.
    pub fn gram_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.tr_mul_vec(&self.mul_vec(x))
    }
}

impl From<DMatrix<f64>> for BlockMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        BlockMatrix::Dense(m)
    }
}

impl From<CscMatrix<f64>> for BlockMatrix {
    fn from(m: CscMatrix<f64>) -> Self {
        BlockMatrix::Sparse(m)
    }
}

/// `(X + X^T) / 2`
pub fn symmetrize(mut x: DMatrix<f64>) -> DMatrix<f64> {
    assert!(x.is_square(), "symmetrize needs a square matrix");
    let n = x.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (x[(i, j)] + x[(j, i)]);
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
    x
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn norm2(v: &DVector<f64>) -> f64 {
    v.norm()
}

/// Lower-triangular Cholesky factor `L` with `L L^T = M`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    l: DMatrix<f64>,
}

impl CholFactor {
    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `M^{-1} v` by forward then backward substitution.
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n() {
            return Err(Error::dim(format!(
                "chol_solve: factor is {}x{}, rhs has length {}",
                self.n(),
                self.n(),
                v.len()
            )));
        }
        let mut x = v.clone();
        self.solve_in_place(x.as_mut_slice());
        Ok(x)
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n();
        let l = self.l.as_slice();
        // L y = v
        for j in 0..n {
            let col = &l[j * n..(j + 1) * n];
            let yj = x[j] / col[j];
            x[j] = yj;
            for i in (j + 1)..n {
                x[i] -= yj * col[i];
            }
        }
        // L^T x = y
        for j in (0..n).rev() {
            let col = &l[j * n..(j + 1) * n];
            let mut s = x[j];
            for i in (j + 1)..n {
                s -= col[i] * x[i];
            }
            x[j] = s / col[j];
        }
    }

    /// `M^{-1} B` column by column. Columns are solved in parallel on the
    /// current rayon pool.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.n() {
            return Err(Error::dim(format!(
                "chol_solve: factor is {}x{}, rhs has {} rows",
                self.n(),
                self.n(),
                b.nrows()
            )));
        }
        let mut out = b.clone();
        let n = self.n();
        if n > 0 {
            out.as_mut_slice()
                .par_chunks_mut(n)
                .for_each(|col| self.solve_in_place(col));
        }
        Ok(out)
    }

    /// `L L^T`
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }
}

/// Cholesky factorization with the default relative pivot tolerance.
pub fn cholesky(m: &DMatrix<f64>) -> Result<CholFactor> {
    cholesky_with_tol(m, DEFAULT_PIVOT_TOL)
}

/// Right-looking Cholesky. Only the lower triangle of `m` is read. A pivot
/// `d <= pivot_tol * max_i m_ii` is rejected.
pub fn cholesky_with_tol(m: &DMatrix<f64>, pivot_tol: f64) -> Result<CholFactor> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "cholesky: matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let max_diag = (0..n).map(|i| m[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let floor = pivot_tol * max_diag;
    let mut l = m.lower_triangle();
    let a = l.as_mut_slice();
    for j in 0..n {
        let d = a[j * n + j];
        if !d.is_finite() || d <= floor {
            return Err(Error::NotPositiveDefinite { pivot: j + 1 });
        }
        let s = d.sqrt();
        for v in &mut a[j * n + j..(j + 1) * n] {
            *v /= s;
        }
        for k in (j + 1)..n {
            let lkj = a[j * n + k];
            if lkj == 0.0 {
                continue;
            }
            let (head, tail) = a.split_at_mut(k * n);
            let src = &head[j * n + k..(j + 1) * n];
            let dst = &mut tail[k..n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d -= lkj * s;
            }
        }
    }
    Ok(CholFactor { l })
}

pub fn chol_solve(f: &CholFactor, v: &DVector<f64>) -> Result<DVector<f64>> {
    f.solve(v)
}

/// True iff [`cholesky`] succeeds.
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    cholesky(m).is_ok()
}

/// Eigenvalues of a general real square matrix (balancing + real Schur).
pub fn dense_eigs(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    dense_eigs_capped(m, DEFAULT_EIG_CAP)
}

pub fn dense_eigs_capped(m: &DMatrix<f64>, cap: usize) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "dense_eigs: matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n > cap {
        return Err(Error::CapExceeded { dim: n, cap });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut b = m.clone();
    nalgebra::linalg::balancing::balance_parlett_reinsch(&mut b);
    let schur = nalgebra::Schur::try_new(b, f64::EPSILON, 100 * n.max(10))
        .ok_or(Error::EigenFailure)?;
    let eigs = schur.complex_eigenvalues();
    Ok(eigs.iter().copied().collect())
}

/// `max |λ|` over [`dense_eigs`].
pub fn spectral_radius_dense(m: &DMatrix<f64>, cap: usize) -> Result<f64> {
    Ok(dense_eigs_capped(m, cap)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}
