//! Stationary splitting iterations on the normal equation `H x = c`,
//! `H = G1 - G2`.
//!
//! | method | splitting                                                        |
//! |--------|------------------------------------------------------------------|
//! | SP     | `M = G1`, `N = G2`                                               |
//! | GSP    | `M = αI + G1`, `N = αI + G2`                                     |
//! | ADI    | `M1 = αI + G1`, `N1 = αI + G2`, `M2 = -(βI + G2)`, `N2 = -(βI + G1)` |
//! | DS     | `P = αI + G1`, `R = G2`, `S = αI` (two-step)                     |
//!
//! Every factor is a Cholesky factor computed once in [`build_scheme`].
//! Nothing is inverted explicitly; the DS dense path forms `P^{-1} G2` and
//! `α P^{-1}` column by column through the stored factor.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, CholFactor};
use crate::model::{Gram, NormalEquation};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_K_MAX: usize = 10_000;

pub const GSP_DEFAULT_ALPHA: f64 = 1e-6;
pub const ADI_DEFAULT_ALPHA: f64 = 1e-6;
pub const ADI_DEFAULT_BETA: f64 = 1e15;
/// DS shift for dense random instances (the `ex1` family).
pub const DS_DEFAULT_ALPHA_DENSE: f64 = 1.0;
/// DS shift for TLS-derived instances (the `ex2` family).
pub const DS_DEFAULT_ALPHA_TLS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sp,
    Gsp,
    Adi,
    Ds,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sp, Method::Gsp, Method::Adi, Method::Ds];

    pub fn uses_alpha(self) -> bool {
        !matches!(self, Method::Sp)
    }

    pub fn uses_beta(self) -> bool {
        matches!(self, Method::Adi)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sp => "SP",
            Method::Gsp => "GSP",
            Method::Adi => "ADI",
            Method::Ds => "DS",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sp" => Ok(Method::Sp),
            "gsp" => Ok(Method::Gsp),
            "adi" => Ok(Method::Adi),
            "ds" => Ok(Method::Ds),
            other => Err(Error::param(format!("unknown method `{other}`"))),
        }
    }
}

/// Right-hand operator of a splitting.
#[derive(Debug, Clone)]
enum Operator {
    Gram(Gram),
    Shifted { shift: f64, gram: Gram },
    Dense(DMatrix<f64>),
}

impl Operator {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Operator::Gram(g) => g.apply(x),
            Operator::Shifted { shift, gram } => gram.apply(x) + x * *shift,
            Operator::Dense(m) => m * x,
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        match self {
            Operator::Gram(g) => g.dense().into_owned(),
            Operator::Shifted { shift, gram } => shifted(gram, *shift),
            Operator::Dense(m) => m.clone(),
        }
    }
}

/// `G + shift·I`
fn shifted(g: &Gram, shift: f64) -> DMatrix<f64> {
    let mut m = g.dense().into_owned();
    for i in 0..m.nrows() {
        m[(i, i)] += shift;
    }
    m
}

/// Algorithm-level precomputation for the DS dense path.
#[derive(Debug, Clone)]
pub struct DsPrecomputed {
    /// `P^{-1} G2`
    pub r_bar: DMatrix<f64>,
    /// `α P^{-1}`
    pub s_bar: DMatrix<f64>,
    /// `P^{-1} c`
    pub b1: DVector<f64>,
    c: DVector<f64>,
}

#[derive(Debug, Clone)]
enum Plan {
    Single {
        m: CholFactor,
        n: Operator,
    },
    Adi {
        m1: CholFactor,
        n1: Operator,
        /// factor of `βI + G2 = -M2`
        neg_m2: CholFactor,
        /// `βI + G1 = -N2`
        neg_n2: Operator,
    },
    Ds {
        p: CholFactor,
        r: Operator,
        pre: Option<DsPrecomputed>,
    },
}

/// Dense view of a scheme's defining matrices.
#[derive(Debug, Clone)]
pub enum SchemeMatrices {
    Single {
        m: DMatrix<f64>,
        n: DMatrix<f64>,
    },
    Adi {
        m1: DMatrix<f64>,
        n1: DMatrix<f64>,
        m2: DMatrix<f64>,
        n2: DMatrix<f64>,
    },
    Ds {
        p: DMatrix<f64>,
        r: DMatrix<f64>,
        s: DMatrix<f64>,
    },
}

/// One iteration method, factored and ready to step. Immutable once built.
#[derive(Debug, Clone)]
pub struct SplittingScheme {
    kind: Method,
    alpha: Option<f64>,
    beta: Option<f64>,
    n: usize,
    plan: Plan,
    setup_seconds: f64,
}

fn check_shift(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::param(format!("{name} must be finite and > 0, got {v}")))
    }
}

/// Factor and precompute the scheme `kind` for `ne`. Unset shifts take the
/// method defaults (`GSP_DEFAULT_ALPHA`, `ADI_DEFAULT_*`, `DS_DEFAULT_ALPHA_DENSE`).
pub fn build_scheme(
    ne: &NormalEquation,
    kind: Method,
    alpha: Option<f64>,
    beta: Option<f64>,
) -> Result<SplittingScheme> {
    let start = Instant::now();
    let n = ne.n();
    let (alpha, beta) = match kind {
        Method::Sp => (None, None),
        Method::Gsp => (
            Some(check_shift("alpha", alpha.unwrap_or(GSP_DEFAULT_ALPHA))?),
            None,
        ),
        Method::Ds => (
            Some(check_shift("alpha", alpha.unwrap_or(DS_DEFAULT_ALPHA_DENSE))?),
            None,
        ),
        Method::Adi => {
            let a = check_shift("alpha", alpha.unwrap_or(ADI_DEFAULT_ALPHA))?;
            let b = check_shift("beta", beta.unwrap_or(ADI_DEFAULT_BETA))?;
            if b <= a {
                return Err(Error::param(format!(
                    "ADI requires beta > alpha > 0, got alpha = {a}, beta = {b}"
                )));
            }
            (Some(a), Some(b))
        }
    };

    let plan = match kind {
        Method::Sp => Plan::Single {
            m: kernels::cholesky(&ne.g1().dense())?,
            n: Operator::Gram(ne.g2().clone()),
        },
        Method::Gsp => {
            let a = alpha.unwrap();
            Plan::Single {
                m: kernels::cholesky(&shifted(ne.g1(), a))?,
                n: Operator::Shifted {
                    shift: a,
                    gram: ne.g2().clone(),
                },
            }
        }
        Method::Adi => {
            let (a, b) = (alpha.unwrap(), beta.unwrap());
            Plan::Adi {
                m1: kernels::cholesky(&shifted(ne.g1(), a))?,
                n1: Operator::Shifted {
                    shift: a,
                    gram: ne.g2().clone(),
                },
                neg_m2: kernels::cholesky(&shifted(ne.g2(), b))?,
                neg_n2: Operator::Shifted {
                    shift: b,
                    gram: ne.g1().clone(),
                },
            }
        }
        Method::Ds => {
            let a = alpha.unwrap();
            let p = kernels::cholesky(&shifted(ne.g1(), a))?;
            let pre = if ne.is_explicit() {
                let r_bar = p.solve_matrix(&ne.g2().dense())?;
                let s_bar = p.solve_matrix(&(DMatrix::identity(n, n) * a))?;
                let b1 = p.solve(ne.c())?;
                Some(DsPrecomputed {
                    r_bar,
                    s_bar,
                    b1,
                    c: ne.c().clone(),
                })
            } else {
                None
            };
            Plan::Ds {
                p,
                r: Operator::Gram(ne.g2().clone()),
                pre,
            }
        }
    };

    Ok(SplittingScheme {
        kind,
        alpha,
        beta,
        n,
        plan,
        setup_seconds: start.elapsed().as_secs_f64(),
    })
}

impl SplittingScheme {
    /// A one-step scheme `M x' = N x + c` from arbitrary matrices, bypassing
    /// the consistency guarantees of [`build_scheme`]. `M` must be SPD.
    /// Reports itself as [`Method::Sp`].
    pub fn custom_single(m: &DMatrix<f64>, n: DMatrix<f64>) -> Result<Self> {
        if m.shape() != n.shape() {
            return Err(Error::dim("custom splitting: M and N differ in shape"));
        }
        Ok(SplittingScheme {
            kind: Method::Sp,
            alpha: None,
            beta: None,
            n: m.nrows(),
            plan: Plan::Single {
                m: kernels::cholesky(m)?,
                n: Operator::Dense(n),
            },
            setup_seconds: 0.0,
        })
    }

    pub fn kind(&self) -> Method {
        self.kind
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_two_step(&self) -> bool {
        matches!(self.plan, Plan::Ds { .. })
    }

    /// Wall-clock seconds spent in factorization and precomputation.
    pub fn setup_seconds(&self) -> f64 {
        self.setup_seconds
    }

    pub fn ds_precomputed(&self) -> Option<&DsPrecomputed> {
        match &self.plan {
            Plan::Ds { pre, .. } => pre.as_ref(),
            _ => None,
        }
    }

    /// The defining matrices, with factored matrices reconstructed as `L L^T`.
    pub fn matrices(&self) -> SchemeMatrices {
        match &self.plan {
            Plan::Single { m, n } => SchemeMatrices::Single {
                m: m.reconstruct(),
                n: n.dense(),
            },
            Plan::Adi {
                m1,
                n1,
                neg_m2,
                neg_n2,
            } => SchemeMatrices::Adi {
                m1: m1.reconstruct(),
                n1: n1.dense(),
                m2: -neg_m2.reconstruct(),
                n2: -neg_n2.dense(),
            },
            Plan::Ds { p, r, .. } => SchemeMatrices::Ds {
                p: p.reconstruct(),
                r: r.dense(),
                s: DMatrix::identity(self.n, self.n) * self.alpha.unwrap_or(0.0),
            },
        }
    }

    /// The one-step (or stacked two-step) iteration matrix: `M^{-1} N` for
    /// SP/GSP, `M2^{-1} N2 M1^{-1} N1` for ADI and the `2n × 2n` companion
    /// form `[[P^{-1} R, P^{-1} S], [I, 0]]` for DS.
    pub fn iteration_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.n;
        match &self.plan {
            Plan::Single { m, n: op } => m.solve_matrix(&op.dense()),
            Plan::Adi {
                m1,
                n1,
                neg_m2,
                neg_n2,
            } => {
                let first = m1.solve_matrix(&n1.dense())?;
                neg_m2.solve_matrix(&(neg_n2.dense() * first))
            }
            Plan::Ds { p, r, .. } => {
                let alpha = self.alpha.unwrap_or(0.0);
                let mut w = DMatrix::zeros(2 * n, 2 * n);
                w.view_mut((0, 0), (n, n))
                    .copy_from(&p.solve_matrix(&r.dense())?);
                w.view_mut((0, n), (n, n))
                    .copy_from(&p.solve_matrix(&(DMatrix::identity(n, n) * alpha))?);
                w.view_mut((n, 0), (n, n)).fill_with_identity();
                Ok(w)
            }
        }
    }

    fn check_len(&self, v: &DVector<f64>, what: &str) -> Result<()> {
        if v.len() == self.n {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "{what} has length {}, scheme has n = {}",
                v.len(),
                self.n
            )))
        }
    }

    /// `M^{-1} (N x + c)` for SP/GSP.
    pub fn step_single(&self, x: &DVector<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x, "x")?;
        self.check_len(c, "c")?;
        match &self.plan {
            Plan::Single { m, n } => m.solve(&(n.apply(x) + c)),
            _ => Err(Error::param(format!(
                "step_single called on a {} scheme",
                self.kind
            ))),
        }
    }

    /// Both ADI half-steps.
    pub fn step_adi(&self, x: &DVector<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x, "x")?;
        self.check_len(c, "c")?;
        match &self.plan {
            Plan::Adi {
                m1,
                n1,
                neg_m2,
                neg_n2,
            } => {
                let half = m1.solve(&(n1.apply(x) + c))?;
                // M2 x' = N2 x½ + c  ⇔  (βI + G2) x' = (βI + G1) x½ - c
                neg_m2.solve(&(neg_n2.apply(&half) - c))
            }
            _ => Err(Error::param(format!(
                "step_adi called on a {} scheme",
                self.kind
            ))),
        }
    }

    /// `x^{k+1} = P^{-1} (R x^k + S x^{k-1} + c)`.
    pub fn step_ds(
        &self,
        x_k: &DVector<f64>,
        x_km1: &DVector<f64>,
        c: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_len(x_k, "x_k")?;
        self.check_len(x_km1, "x_km1")?;
        self.check_len(c, "c")?;
        match &self.plan {
            Plan::Ds { p, r, pre } => match pre {
                Some(pre) if pre.c == *c => {
                    let mut next = &pre.r_bar * x_k;
                    next.gemv(1.0, &pre.s_bar, x_km1, 1.0);
                    next += &pre.b1;
                    Ok(next)
                }
                _ => {
                    let alpha = self.alpha.unwrap();
                    p.solve(&(r.apply(x_k) + x_km1 * alpha + c))
                }
            },
            _ => Err(Error::param(format!(
                "step_ds called on a {} scheme",
                self.kind
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub final_res: f64,
    /// Seconds spent in the iteration loop.
    pub elapsed: f64,
    /// Seconds spent building the scheme.
    pub setup_elapsed: f64,
    pub terminated: Termination,
    pub res_history: Option<Vec<f64>>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.terminated == Termination::Converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub tol: f64,
    pub k_max: usize,
    pub record_history: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            tol: DEFAULT_TOL,
            k_max: DEFAULT_K_MAX,
            record_history: false,
        }
    }
}

impl RunOptions {
    pub fn new(tol: f64, k_max: usize) -> Self {
        RunOptions {
            tol,
            k_max,
            record_history: false,
        }
    }

    pub fn with_history(mut self) -> Self {
        self.record_history = true;
        self
    }
}

/// Iterate until `RES < tol` or `k_max` full steps. `RES` is checked on the
/// starting iterate and after every full step; an ADI double sweep counts as
/// one step. `x1` is the second starting vector of DS and defaults to `x0`.
pub fn run(
    s: &SplittingScheme,
    ne: &NormalEquation,
    x0: &DVector<f64>,
    x1: Option<&DVector<f64>>,
    opts: &RunOptions,
) -> Result<SolveReport> {
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::param(format!("tol must be > 0, got {}", opts.tol)));
    }
    if ne.n() != s.n() {
        return Err(Error::dim(format!(
            "scheme has n = {}, normal equation has n = {}",
            s.n(),
            ne.n()
        )));
    }
    s.check_len(x0, "x0")?;
    if let Some(x1) = x1 {
        if !s.is_two_step() {
            return Err(Error::param(format!(
                "{} is a one-step method and takes a single starting vector",
                s.kind()
            )));
        }
        s.check_len(x1, "x1")?;
    }
    let c = ne.c();

    let start = Instant::now();
    let mut prev = x0.clone();
    let mut x = x1.cloned().unwrap_or_else(|| x0.clone());
    let mut res = ne.res(&x)?;
    let mut history = opts.record_history.then(|| vec![res]);
    let mut k = 0;
    while (res.is_nan() || res >= opts.tol) && k < opts.k_max {
        let next = match s.plan {
            Plan::Single { .. } => s.step_single(&x, c)?,
            Plan::Adi { .. } => s.step_adi(&x, c)?,
            Plan::Ds { .. } => s.step_ds(&x, &prev, c)?,
        };
        k += 1;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
        prev = std::mem::replace(&mut x, next);
        res = ne.res(&x)?;
        if !res.is_finite() {
            return Err(Error::Divergence { step: k });
        }
        if let Some(h) = history.as_mut() {
            h.push(res);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();

    Ok(SolveReport {
        x,
        iterations: k,
        final_res: res,
        elapsed,
        setup_elapsed: s.setup_seconds(),
        terminated: if res < opts.tol {
            Termination::Converged
        } else {
            Termination::MaxIter
        },
        res_history: history,
    })
}

/// [`run`] from zero starting vector(s).
pub fn run_from_zero(
    s: &SplittingScheme,
    ne: &NormalEquation,
    opts: &RunOptions,
) -> Result<SolveReport> {
    run(s, ne, &DVector::zeros(ne.n()), None, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_normal, assemble_normal_with, direct_solve_oracle, AssemblyOptions};
    use crate::problems::{gen_random, RandomConfig};

    fn running() -> NormalEquation {
        NormalEquation::from_matrices(
            DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 4.0])),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DVector::from_vec(vec![3.0, 4.0]),
        )
        .unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn close(a: &DVector<f64>, b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn gsp_matrices_on_running_example() {
        let ne = running();
        let s = build_scheme(&ne, Method::Gsp, Some(1.0), None).unwrap();
        let SchemeMatrices::Single { m, n } = s.matrices() else {
            panic!("GSP is single")
        };
        assert!((&m - DMatrix::from_diagonal(&v(&[5.0, 5.0]))).norm() < 1e-14);
        assert_eq!(n, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        assert!((m - n - ne.h()).amax() < 1e-14);
    }

    #[test]
    fn ds_matrices_on_running_example() {
        let ne = running();
        let s = build_scheme(&ne, Method::Ds, Some(1.0), None).unwrap();
        let SchemeMatrices::Ds { p, r, s: sm } = s.matrices() else {
            panic!("DS")
        };
        assert!((&p - DMatrix::from_diagonal(&v(&[5.0, 5.0]))).norm() < 1e-14);
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(sm, DMatrix::identity(2, 2));
        assert!((p - r - sm - DMatrix::from_diagonal(&v(&[3.0, 4.0]))).amax() < 1e-14);
        let pre = s.ds_precomputed().unwrap();
        assert!(close(&pre.b1, &[0.6, 0.8], 1e-15));
    }

    #[test]
    fn adi_parameter_guard() {
        let ne = running();
        let e = build_scheme(&ne, Method::Adi, Some(1.0), Some(0.5));
        assert!(matches!(e, Err(Error::InvalidParameter(_))));
        let e = build_scheme(&ne, Method::Adi, Some(1.0), Some(1.0));
        assert!(matches!(e, Err(Error::InvalidParameter(_))));
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(build_scheme(&ne, Method::Ds, Some(bad), None).is_err());
            assert!(build_scheme(&ne, Method::Gsp, Some(bad), None).is_err());
        }
    }

    #[test]
    fn defaults_applied() {
        let ne = running();
        let s = build_scheme(&ne, Method::Adi, None, None).unwrap();
        assert_eq!((s.alpha(), s.beta()), (Some(1e-6), Some(1e15)));
        let s = build_scheme(&ne, Method::Gsp, None, None).unwrap();
        assert_eq!(s.alpha(), Some(1e-6));
        let s = build_scheme(&ne, Method::Sp, Some(3.0), None).unwrap();
        assert_eq!(s.alpha(), None);
    }

    #[test]
    fn sp_steps_on_running_example() {
        let ne = running();
        let s = build_scheme(&ne, Method::Sp, None, None).unwrap();
        let x1 = s.step_single(&DVector::zeros(2), ne.c()).unwrap();
        assert!(close(&x1, &[0.75, 1.0], 1e-15));
        let x2 = s.step_single(&x1, ne.c()).unwrap();
        assert!(close(&x2, &[0.9375, 1.0], 1e-15));
    }

    #[test]
    fn gsp_fixed_point() {
        let ne = running();
        let s = build_scheme(&ne, Method::Gsp, Some(1.0), None).unwrap();
        let x = s.step_single(&v(&[1.0, 1.0]), ne.c()).unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-15));
    }

    #[test]
    fn adi_step_on_running_example() {
        let ne = running();
        let s = build_scheme(&ne, Method::Adi, Some(1.0), Some(2.0)).unwrap();
        let x = s.step_adi(&DVector::zeros(2), ne.c()).unwrap();
        assert!(close(&x, &[0.2, 0.4], 1e-15), "{x}");
        let fixed = s.step_adi(&v(&[1.0, 1.0]), ne.c()).unwrap();
        assert!(close(&fixed, &[1.0, 1.0], 1e-15));
    }

    #[test]
    fn adi_half_steps_match_hand_values() {
        // x½ = diag(5,5)^{-1} c, then x' = -(βI+G2)^{-1} (N2 x½ + c)
        let half = [3.0 / 5.0, 4.0 / 5.0];
        let n2x = [-6.0 * half[0], -6.0 * half[1]];
        let rhs = [n2x[0] + 3.0, n2x[1] + 4.0];
        let expected = [-rhs[0] / 3.0, -rhs[1] / 2.0];
        let ne = running();
        let s = build_scheme(&ne, Method::Adi, Some(1.0), Some(2.0)).unwrap();
        let x = s.step_adi(&DVector::zeros(2), ne.c()).unwrap();
        assert!(close(&x, &expected, 1e-15));
    }

    #[test]
    fn adi_with_empty_negative_block() {
        let ne = NormalEquation::from_matrices(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DMatrix::zeros(2, 2),
            v(&[1.0, 2.0]),
        )
        .unwrap();
        let s = build_scheme(&ne, Method::Adi, Some(0.1), Some(1.0)).unwrap();
        let SchemeMatrices::Adi { m2, n2, .. } = s.matrices() else {
            panic!()
        };
        assert!((m2 + DMatrix::identity(2, 2)).amax() < 1e-15);
        assert!((n2 + DMatrix::identity(2, 2) + ne.g1().dense().as_ref()).amax() < 1e-15);
        let rep = run_from_zero(&s, &ne, &RunOptions::default()).unwrap();
        assert!(rep.converged());
    }

    #[test]
    fn ds_steps_on_running_example() {
        let ne = running();
        let s = build_scheme(&ne, Method::Ds, Some(1.0), None).unwrap();
        let z = DVector::zeros(2);
        let x2 = s.step_ds(&z, &z, ne.c()).unwrap();
        assert!(close(&x2, &[0.6, 0.8], 1e-15));
        let x3 = s.step_ds(&x2, &z, ne.c()).unwrap();
        assert!(close(&x3, &[0.72, 0.8], 1e-15));
        let one = v(&[1.0, 1.0]);
        assert!(close(&s.step_ds(&one, &one, ne.c()).unwrap(), &[1.0, 1.0], 1e-15));
    }

    #[test]
    fn ds_step_with_foreign_rhs_uses_factor() {
        let ne = running();
        let s = build_scheme(&ne, Method::Ds, Some(1.0), None).unwrap();
        let z = DVector::zeros(2);
        let x = s.step_ds(&z, &z, &v(&[5.0, 10.0])).unwrap();
        assert!(close(&x, &[1.0, 2.0], 1e-15));
    }

    #[test]
    fn wrong_step_kind_is_an_error() {
        let ne = running();
        let ds = build_scheme(&ne, Method::Ds, Some(1.0), None).unwrap();
        let sp = build_scheme(&ne, Method::Sp, None, None).unwrap();
        let z = DVector::zeros(2);
        assert!(ds.step_single(&z, ne.c()).is_err());
        assert!(ds.step_adi(&z, ne.c()).is_err());
        assert!(sp.step_ds(&z, &z, ne.c()).is_err());
        assert!(matches!(
            sp.step_single(&DVector::zeros(3), ne.c()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn run_ds_on_running_example() {
        let ne = running();
        let s = build_scheme(&ne, Method::Ds, Some(1.0), None).unwrap();
        let rep = run_from_zero(&s, &ne, &RunOptions::default().with_history()).unwrap();
        assert!(rep.converged());
        assert!(rep.final_res < 1e-8);
        // ‖e‖ ≤ ‖c - Hx‖ / λ_min(H) = sqrt(RES) · 5 / 3
        assert!((&rep.x - v(&[1.0, 1.0])).norm() <= rep.final_res.sqrt() * 5.0 / 3.0 + 1e-15);
        assert!(rep.iterations > 10 && rep.iterations < 60, "{}", rep.iterations);
        let h = rep.res_history.unwrap();
        assert_eq!(h.len(), rep.iterations + 1);
        assert_eq!(h[0], 1.0);
    }

    #[test]
    fn run_from_exact_solution_stops_immediately() {
        let ne = running();
        let x = v(&[1.0, 1.0]);
        for kind in Method::ALL {
            let s = build_scheme(&ne, kind, Some(0.5), Some(2.0)).unwrap();
            let rep = run(&s, &ne, &x, None, &RunOptions::default()).unwrap();
            assert!(rep.converged());
            assert_eq!(rep.iterations, 0);
        }
    }

    #[test]
    fn divergent_fixture_is_reported() {
        let ne = running();
        let s = SplittingScheme::custom_single(
            &DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 3.0,
        )
        .unwrap();
        let rep = run_from_zero(&s, &ne, &RunOptions::new(1e-8, 50)).unwrap();
        assert_eq!(rep.terminated, Termination::MaxIter);
        assert_eq!(rep.iterations, 50);
        match run_from_zero(&s, &ne, &RunOptions::new(1e-8, 100_000)) {
            Err(Error::Divergence { step }) => assert!(step > 100 && step < 1000),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn run_argument_checks() {
        let ne = running();
        let sp = build_scheme(&ne, Method::Sp, None, None).unwrap();
        let z = DVector::zeros(2);
        assert!(run(&sp, &ne, &z, Some(&z), &RunOptions::default()).is_err());
        assert!(run(&sp, &ne, &z, None, &RunOptions::new(0.0, 10)).is_err());
    }

    #[test]
    fn implicit_ds_path_matches_dense_path() {
        let prob = gen_random(&RandomConfig::new(15, 4)).unwrap();
        let dense = assemble_normal(&prob);
        let lazy = assemble_normal_with(&prob, AssemblyOptions { dense_threshold: 1 });
        let sd = build_scheme(&dense, Method::Ds, Some(0.3), None).unwrap();
        let sl = build_scheme(&lazy, Method::Ds, Some(0.3), None).unwrap();
        assert!(sd.ds_precomputed().is_some() && sl.ds_precomputed().is_none());
        let a = run_from_zero(&sd, &dense, &RunOptions::default()).unwrap();
        let b = run_from_zero(&sl, &lazy, &RunOptions::default()).unwrap();
        assert!(a.converged() && b.converged());
        assert!((a.iterations as i64 - b.iterations as i64).abs() <= 1);
        let x = direct_solve_oracle(&dense).unwrap();
        let lmin = nalgebra::SymmetricEigen::new(dense.h()).eigenvalues.min();
        let bound = b.final_res.sqrt() * dense.c().norm() / lmin;
        assert!((&b.x - &x).norm() <= 1.01 * bound);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("DS".parse::<Method>().unwrap(), Method::Ds);
        assert_eq!("gsp".parse::<Method>().unwrap(), Method::Gsp);
        assert!("sor".parse::<Method>().is_err());
        assert_eq!(Method::Adi.to_string(), "ADI");
    }
}
