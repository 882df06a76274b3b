//! The partitioned ILS instance and its normal equation.
//!
//! The signature matrix `J = diag(I_p, -I_q)` is never stored. Every product
//! with `J` is a sign flip on the `A2`/`b2` block.

use std::borrow::Cow;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{self, BlockMatrix};

/// Above this `n` the Gram matrices are kept as implicit operators.
pub const DEFAULT_DENSE_THRESHOLD: usize = 8192;

/// `min (b - A x)^T J (b - A x)` with `A = [A1; A2]`, `b = [b1; b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedProblem {
    a1: BlockMatrix,
    a2: BlockMatrix,
    b1: DVector<f64>,
    b2: DVector<f64>,
}

impl PartitionedProblem {
    pub fn new(
        a1: impl Into<BlockMatrix>,
        a2: impl Into<BlockMatrix>,
        b1: DVector<f64>,
        b2: DVector<f64>,
    ) -> Result<Self> {
        let (a1, a2) = (a1.into(), a2.into());
        let n = a1.ncols();
        if n == 0 {
            return Err(Error::dim("A1 has no columns"));
        }
        if a2.ncols() != n {
            return Err(Error::dim(format!(
                "A1 has {n} columns but A2 has {}",
                a2.ncols()
            )));
        }
        if b1.len() != a1.nrows() {
            return Err(Error::dim(format!(
                "b1 has length {} but A1 has {} rows",
                b1.len(),
                a1.nrows()
            )));
        }
        if b2.len() != a2.nrows() {
            return Err(Error::dim(format!(
                "b2 has length {} but A2 has {} rows",
                b2.len(),
                a2.nrows()
            )));
        }
        if a1.nrows() + a2.nrows() < n {
            return Err(Error::dim(format!(
                "m = {} is smaller than n = {n}",
                a1.nrows() + a2.nrows()
            )));
        }
        Ok(PartitionedProblem { a1, a2, b1, b2 })
    }

    pub fn a1(&self) -> &BlockMatrix {
        &self.a1
    }

    pub fn a2(&self) -> &BlockMatrix {
        &self.a2
    }

    pub fn b1(&self) -> &DVector<f64> {
        &self.b1
    }

    pub fn b2(&self) -> &DVector<f64> {
        &self.b2
    }

    pub fn p(&self) -> usize {
        self.a1.nrows()
    }

    pub fn q(&self) -> usize {
        self.a2.nrows()
    }

    pub fn m(&self) -> usize {
        self.p() + self.q()
    }

    pub fn n(&self) -> usize {
        self.a1.ncols()
    }

    /// `A^T J b = A1^T b1 - A2^T b2`
    pub fn rhs(&self) -> DVector<f64> {
        self.a1.tr_mul_vec(&self.b1) - self.a2.tr_mul_vec(&self.b2)
    }

    /// `A^T J A x`, applied block-wise.
    pub fn apply_h(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a1.gram_apply(x) - self.a2.gram_apply(x)
    }

    /// Cholesky check on `A1^T A1`. Policy on failure is left to the caller.
    pub fn a1_full_column_rank(&self) -> bool {
        kernels::is_spd(&self.a1.gram())
    }

    /// Whether `A^T J A` is SPD, i.e. the ILS solution is unique.
    pub fn has_unique_solution(&self) -> bool {
        kernels::is_spd(&(self.a1.gram() - self.a2.gram()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyOptions {
    pub dense_threshold: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
        }
    }
}

#[derive(Debug)]
enum GramRepr {
    Explicit(DMatrix<f64>),
    Implicit(BlockMatrix),
}

/// `X^T X`, either formed or kept as the operator `y ↦ X^T (X y)`.
#[derive(Debug, Clone)]
pub struct Gram(Arc<GramRepr>);

impl Gram {
    pub fn explicit(g: DMatrix<f64>) -> Self {
        Gram(Arc::new(GramRepr::Explicit(kernels::symmetrize(g))))
    }

    pub fn implicit(block: BlockMatrix) -> Self {
        Gram(Arc::new(GramRepr::Implicit(block)))
    }

    pub fn n(&self) -> usize {
        match &*self.0 {
            GramRepr::Explicit(g) => g.nrows(),
            GramRepr::Implicit(b) => b.ncols(),
        }
    }

    pub fn is_explicit(&self) -> bool {
        matches!(&*self.0, GramRepr::Explicit(_))
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match &*self.0 {
            GramRepr::Explicit(g) => g * x,
            GramRepr::Implicit(b) => b.gram_apply(x),
        }
    }

    /// The formed matrix; implicit operators are materialized on demand.
    pub fn dense(&self) -> Cow<'_, DMatrix<f64>> {
        match &*self.0 {
            GramRepr::Explicit(g) => Cow::Borrowed(g),
            GramRepr::Implicit(b) => Cow::Owned(b.gram()),
        }
    }
}

/// `A^T J A x = A^T J b` split as `G1 - G2`, with `c = A^T J b`.
#[derive(Debug, Clone)]
pub struct NormalEquation {
    g1: Gram,
    g2: Gram,
    c: DVector<f64>,
}

impl NormalEquation {
    /// Build directly from the Gram matrices, e.g. for fabricated test cases.
    pub fn from_matrices(g1: DMatrix<f64>, g2: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        if !g1.is_square() || g1.shape() != g2.shape() || c.len() != g1.nrows() {
            return Err(Error::dim(format!(
                "G1 {:?}, G2 {:?}, c {}",
                g1.shape(),
                g2.shape(),
                c.len()
            )));
        }
        Ok(NormalEquation {
            g1: Gram::explicit(g1),
            g2: Gram::explicit(g2),
            c,
        })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn g1(&self) -> &Gram {
        &self.g1
    }

    pub fn g2(&self) -> &Gram {
        &self.g2
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn is_explicit(&self) -> bool {
        self.g1.is_explicit() && self.g2.is_explicit()
    }

    /// `H x = (G1 - G2) x`
    pub fn apply_h(&self, x: &DVector<f64>) -> DVector<f64> {
        self.g1.apply(x) - self.g2.apply(x)
    }

    /// `H = G1 - G2` as a dense matrix.
    pub fn h(&self) -> DMatrix<f64> {
        self.g1.dense().into_owned() - self.g2.dense().as_ref()
    }

    /// `‖c - H x‖² / ‖c‖²`
    pub fn res(&self, x: &DVector<f64>) -> Result<f64> {
        let cc = self.c.norm_squared();
        if cc == 0.0 {
            return Err(Error::HomogeneousRhs);
        }
        if x.len() != self.n() {
            return Err(Error::dim(format!(
                "iterate has length {}, expected {}",
                x.len(),
                self.n()
            )));
        }
        Ok((&self.c - self.apply_h(x)).norm_squared() / cc)
    }
}

pub fn assemble_normal(prob: &PartitionedProblem) -> NormalEquation {
    assemble_normal_with(prob, AssemblyOptions::default())
}

pub fn assemble_normal_with(prob: &PartitionedProblem, opts: AssemblyOptions) -> NormalEquation {
    let gram = |b: &BlockMatrix| {
        if prob.n() <= opts.dense_threshold {
            Gram::explicit(b.gram())
        } else {
            Gram::implicit(b.clone())
        }
    };
    NormalEquation {
        g1: gram(prob.a1()),
        g2: gram(prob.a2()),
        c: prob.rhs(),
    }
}

/// `RES = ‖A^T J b - A^T J A x‖² / ‖A^T J b‖²`, computed from the blocks.
pub fn residual_res(prob: &PartitionedProblem, x: &DVector<f64>) -> Result<f64> {
    if x.len() != prob.n() {
        return Err(Error::dim(format!(
            "iterate has length {}, expected {}",
            x.len(),
            prob.n()
        )));
    }
    let c = prob.rhs();
    let cc = c.norm_squared();
    if cc == 0.0 {
        return Err(Error::HomogeneousRhs);
    }
    Ok((&c - prob.apply_h(x)).norm_squared() / cc)
}

/// Reference solution of `H x = c` by Cholesky on `H`.
pub fn direct_solve_oracle(ne: &NormalEquation) -> Result<DVector<f64>> {
    let f = kernels::cholesky(&ne.h()).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::NonUniqueSolution,
        other => other,
    })?;
    f.solve(ne.c())
}
