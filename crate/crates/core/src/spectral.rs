//! Spectral verification of the two-step DS iteration.
//!
//! The iteration matrix is
//!
//! ```text
//!     W = [ P^{-1} R   P^{-1} S ]      P = αI + G1,  R = G2,  S = αI
//!         [    I          0     ]
//! ```
//!
//! Its spectrum is computed by a general dense eigensolver, not from the
//! scalar quadratic `a λ² - a₂ λ - a₃ = 0`, so that checking every eigenpair
//! against the quadratic is an independent cross-validation. Eigenvectors
//! come from a few steps of complex inverse iteration at each eigenvalue.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, DEFAULT_EIG_CAP};
use crate::model::NormalEquation;
use crate::solvers::SplittingScheme;

/// Eigenpairs whose `‖ℓ2‖ / ‖ℓ‖` falls below this count as `ℓ2 = 0`.
const L2_ZERO_TOL: f64 = 1e-12;
const INVERSE_ITERATION_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub alpha: f64,
    pub n: usize,
    /// `max |λ|` over the spectrum of `W`.
    pub rho: f64,
    /// `max |a λ² - a₂ λ - a₃| / a` over eigenpairs.
    pub eigen_quadratic_max_residual: f64,
    /// All `|λ| < 1`.
    pub unit_disk_all: bool,
    /// `min |λ - 1|`.
    pub lambda_one_gap: f64,
    /// `P + S` and `A^T J A + 2R` both SPD.
    pub shen_ok: bool,
    /// `max ‖ℓ1 - λ ℓ2‖ / ‖ℓ‖` over eigenpairs.
    pub companion_max_residual: f64,
    /// `min (a₁ - a₂) / a₁` over eigenpairs; positive when `G1 - G2` is SPD.
    pub min_rayleigh_margin: f64,
    /// Every per-eigenpair quadratic passes the unit-disk root criterion.
    pub lemma_all: bool,
    /// Eigenpairs with a numerically zero `ℓ2` block.
    pub l2_zero_violations: usize,
    pub eigenvalue_count: usize,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("alpha must be finite and > 0, got {alpha}")))
    }
}

/// Dense `2n × 2n` iteration matrix of the DS scheme.
pub fn build_w(ne: &NormalEquation, alpha: f64) -> Result<DMatrix<f64>> {
    build_w_capped(ne, alpha, DEFAULT_EIG_CAP)
}

pub fn build_w_capped(ne: &NormalEquation, alpha: f64, cap: usize) -> Result<DMatrix<f64>> {
    check_alpha(alpha)?;
    let n = ne.n();
    if 2 * n > cap {
        return Err(Error::CapExceeded { dim: 2 * n, cap });
    }
    let mut p = ne.g1().dense().into_owned();
    for i in 0..n {
        p[(i, i)] += alpha;
    }
    let pf = kernels::cholesky(&p)?;
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    w.view_mut((0, 0), (n, n))
        .copy_from(&pf.solve_matrix(&ne.g2().dense())?);
    w.view_mut((0, n), (n, n))
        .copy_from(&pf.solve_matrix(&(DMatrix::identity(n, n) * alpha))?);
    w.view_mut((n, 0), (n, n)).fill_with_identity();
    Ok(w)
}

pub fn spectral_radius(ne: &NormalEquation, alpha: f64) -> Result<f64> {
    spectral_radius_capped(ne, alpha, DEFAULT_EIG_CAP)
}

pub fn spectral_radius_capped(ne: &NormalEquation, alpha: f64, cap: usize) -> Result<f64> {
    let w = build_w_capped(ne, alpha, cap)?;
    kernels::spectral_radius_dense(&w, cap)
}

/// `ρ` of any scheme's iteration matrix.
pub fn scheme_spectral_radius(s: &SplittingScheme, cap: usize) -> Result<f64> {
    let dim = if s.is_two_step() { 2 * s.n() } else { s.n() };
    if dim > cap {
        return Err(Error::CapExceeded { dim, cap });
    }
    kernels::spectral_radius_dense(&s.iteration_matrix()?, cap)
}

/// Both roots of `x² - p x + q = 0` lie strictly inside the unit disk iff
/// `|q| < 1` and `|p| < 1 + q`.
pub fn unit_disk_roots(p: f64, q: f64) -> bool {
    q.abs() < 1.0 && p.abs() < 1.0 + q
}

/// `2αI + G1` and `G1 + G2` both SPD.
pub fn shen_spd_check(ne: &NormalEquation, alpha: f64) -> bool {
    let g1 = ne.g1().dense();
    let mut ps = g1.clone().into_owned();
    for i in 0..ps.nrows() {
        ps[(i, i)] += 2.0 * alpha;
    }
    let h2r = g1.into_owned() + ne.g2().dense().as_ref();
    kernels::is_spd(&ps) && kernels::is_spd(&h2r)
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Eigenvector of `w` at the computed eigenvalue `lambda`.
fn inverse_iteration(w: &DMatrix<Complex64>, lambda: Complex64, scale: f64) -> DVector<Complex64> {
    let dim = w.nrows();
    let shift = lambda + Complex64::new(1.0, 1.0) * (1e-13 * scale.max(1.0));
    let mut a = w.clone();
    for i in 0..dim {
        a[(i, i)] -= shift;
    }
    let lu = a.lu();
    let mut v = DVector::from_fn(dim, |i, _| {
        let t = (i as f64 + 1.0) * 0.754_877_666;
        Complex64::new(1.0 + t.fract(), 0.5 - (t * 1.3).fract())
    });
    for _ in 0..INVERSE_ITERATION_STEPS {
        let next = match lu.solve(&v) {
            Some(x) if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => x,
            _ => break,
        };
        let norm = next.norm();
        if norm == 0.0 {
            break;
        }
        v = next.unscale(norm);
    }
    v
}

struct PairCheck {
    quad_residual: f64,
    companion: f64,
    margin: f64,
    lemma: bool,
    l2_zero: bool,
}

fn rayleigh(g: &crate::model::Gram, v: &DVector<Complex64>) -> f64 {
    let re = v.map(|z| z.re);
    let im = v.map(|z| z.im);
    re.dot(&g.apply(&re)) + im.dot(&g.apply(&im))
}

fn check_pair(ne: &NormalEquation, alpha: f64, lambda: Complex64, l: &DVector<Complex64>) -> PairCheck {
    let n = ne.n();
    let l1 = l.rows(0, n).into_owned();
    let l2 = l.rows(n, n).into_owned();
    let total = l.norm();
    let l2n = l2.norm();
    let companion = (&l1 - &l2 * lambda).norm() / total;
    if l2n <= L2_ZERO_TOL * total {
        return PairCheck {
            quad_residual: f64::INFINITY,
            companion,
            margin: f64::NEG_INFINITY,
            lemma: false,
            l2_zero: true,
        };
    }
    let ll = l2n * l2n;
    let a1 = rayleigh(ne.g1(), &l2) / ll;
    let a2 = rayleigh(ne.g2(), &l2) / ll;
    let a = alpha + a1;
    let a3 = alpha;
    let quad = lambda * lambda * a - lambda * a2 - a3;
    PairCheck {
        quad_residual: quad.norm() / a,
        companion,
        margin: (a1 - a2) / a1,
        lemma: unit_disk_roots(a2 / a, -a3 / a),
        l2_zero: false,
    }
}

/// Full spectral report for the DS scheme at `alpha`.
pub fn check_eigen_quadratic(ne: &NormalEquation, alpha: f64) -> Result<SpectralReport> {
    check_eigen_quadratic_capped(ne, alpha, DEFAULT_EIG_CAP)
}

pub fn check_eigen_quadratic_capped(
    ne: &NormalEquation,
    alpha: f64,
    cap: usize,
) -> Result<SpectralReport> {
    let w = build_w_capped(ne, alpha, cap)?;
    let eigs = kernels::dense_eigs_capped(&w, cap)?;
    let wc = to_complex(&w);
    let scale = w.norm();
    let checks: Vec<PairCheck> = eigs
        .par_iter()
        .map(|&lambda| {
            let l = inverse_iteration(&wc, lambda, scale);
            check_pair(ne, alpha, lambda, &l)
        })
        .collect();

    let rho = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lambda_one_gap = eigs
        .iter()
        .map(|z| (z - 1.0).norm())
        .fold(f64::INFINITY, f64::min);
    Ok(SpectralReport {
        alpha,
        n: ne.n(),
        rho,
        eigen_quadratic_max_residual: checks.iter().map(|c| c.quad_residual).fold(0.0, f64::max),
        unit_disk_all: eigs.iter().all(|z| z.norm() < 1.0),
        lambda_one_gap,
        shen_ok: shen_spd_check(ne, alpha),
        companion_max_residual: checks.iter().map(|c| c.companion).fold(0.0, f64::max),
        min_rayleigh_margin: checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min),
        lemma_all: checks.iter().all(|c| c.lemma),
        l2_zero_violations: checks.iter().filter(|c| c.l2_zero).count(),
        eigenvalue_count: eigs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::assemble_normal;
    use crate::problems::{gen_random, RandomConfig};
    use proptest::prelude::*;

    fn running() -> NormalEquation {
        NormalEquation::from_matrices(
            DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 4.0])),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DVector::from_vec(vec![3.0, 4.0]),
        )
        .unwrap()
    }

    /// Roots of λ² - pλ + q by the quadratic formula.
    fn roots(p: f64, q: f64) -> [Complex64; 2] {
        let disc = Complex64::new(p * p - 4.0 * q, 0.0).sqrt();
        [(disc + p) / 2.0, (-disc + p) / 2.0]
    }

    #[test]
    fn w_blocks_on_running_example() {
        let w = build_w(&running(), 1.0).unwrap();
        assert_eq!(w.shape(), (4, 4));
        let tl = w.view((0, 0), (2, 2));
        let tr = w.view((0, 2), (2, 2));
        assert!((tl - DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.0]))).amax() < 1e-15);
        assert!((tr - DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.2]))).amax() < 1e-15);
        assert_eq!(w.view((2, 0), (2, 2)), DMatrix::<f64>::identity(2, 2));
        assert_eq!(w.view((2, 2), (2, 2)), DMatrix::<f64>::zeros(2, 2));
    }

    #[test]
    fn w_matches_scheme_iteration_matrix() {
        let prob = gen_random(&RandomConfig::new(9, 2)).unwrap();
        let ne = assemble_normal(&prob);
        let s = crate::solvers::build_scheme(&ne, crate::solvers::Method::Ds, Some(0.7), None).unwrap();
        let a = build_w(&ne, 0.7).unwrap();
        let b = s.iteration_matrix().unwrap();
        assert!((a - b).amax() < 1e-14);
    }

    #[test]
    fn running_example_radius() {
        let ne = running();
        let rho = spectral_radius(&ne, 1.0).unwrap();
        // coordinate 1: λ² - 0.2λ - 0.2 = 0
        let expected = roots(0.2, -0.2)[0].norm();
        assert!((rho - expected).abs() < 1e-12);
        assert!((rho - 0.558_257_569_495_584).abs() < 1e-12);
        // coordinate 2: λ² = 0.2
        let mut mods: Vec<f64> = kernels::dense_eigs(&build_w(&ne, 1.0).unwrap())
            .unwrap()
            .iter()
            .map(|z| z.norm())
            .collect();
        mods.sort_by(f64::total_cmp);
        assert!(mods.iter().filter(|m| (*m - 0.2f64.sqrt()).abs() < 1e-12).count() == 2);
    }

    #[test]
    fn zero_negative_block_gives_plus_minus_pairs() {
        let g1 = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 1.5]);
        let ne = NormalEquation::from_matrices(g1.clone(), DMatrix::zeros(3, 3), DVector::from_vec(vec![1.0, 0.0, 1.0]))
            .unwrap();
        let alpha = 0.4;
        let mu = g1.symmetric_eigenvalues();
        let mut expected: Vec<f64> = mu
            .iter()
            .flat_map(|m| {
                let r = (alpha / (alpha + m)).sqrt();
                [r, -r]
            })
            .collect();
        expected.sort_by(f64::total_cmp);
        let mut got: Vec<f64> = kernels::dense_eigs(&build_w(&ne, alpha).unwrap())
            .unwrap()
            .iter()
            .map(|z| {
                assert!(z.im.abs() < 1e-12);
                z.re
            })
            .collect();
        got.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn alpha_must_be_positive() {
        assert!(build_w(&running(), 0.0).is_err());
        assert!(spectral_radius(&running(), -1.0).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let ne = running();
        assert!(matches!(
            build_w_capped(&ne, 1.0, 3),
            Err(Error::CapExceeded { dim: 4, cap: 3 })
        ));
    }

    #[test]
    fn unit_disk_examples() {
        assert!(unit_disk_roots(0.0, 0.0));
        assert!(!unit_disk_roots(2.0, 1.0));
        assert!(unit_disk_roots(0.2, 0.5));
        for r in roots(0.2, 0.5) {
            assert!((r.norm() - 0.5f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn shen_examples() {
        assert!(shen_spd_check(&running(), 1.0));
        let zero = NormalEquation::from_matrices(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 1.0]))
            .unwrap();
        assert!(!shen_spd_check(&zero, 1.0));
    }

    #[test]
    fn quadratic_check_on_running_example() {
        let rep = check_eigen_quadratic(&running(), 1.0).unwrap();
        assert_eq!(rep.eigenvalue_count, 4);
        assert!(rep.eigen_quadratic_max_residual < 1e-10, "{rep:?}");
        assert!(rep.companion_max_residual < 1e-8);
        assert!(rep.unit_disk_all && rep.shen_ok && rep.lemma_all);
        assert!(rep.lambda_one_gap > 0.4);
        assert_eq!(rep.l2_zero_violations, 0);
        assert!((rep.rho - 0.558_257_569_495_584).abs() < 1e-12);
    }

    #[test]
    fn quadratic_check_on_random_instances() {
        for seed in 0..10 {
            let prob = gen_random(&RandomConfig::new(4 + seed as usize * 3, seed)).unwrap();
            let ne = assemble_normal(&prob);
            for alpha in [1e-3, 1.0, 1e2] {
                let rep = check_eigen_quadratic(&ne, alpha).unwrap();
                assert!(rep.eigen_quadratic_max_residual <= 1e-7, "seed {seed} α {alpha}: {rep:?}");
                assert!(rep.companion_max_residual <= 1e-8);
                assert!(rep.min_rayleigh_margin > 0.0);
                assert!(rep.unit_disk_all && rep.lemma_all && rep.shen_ok);
                assert!(rep.lambda_one_gap > 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn unit_disk_matches_root_moduli(p in -3.0f64..3.0, q in -3.0f64..3.0) {
            let m = roots(p, q).iter().map(|r| r.norm()).fold(0.0, f64::max);
            prop_assume!((m - 1.0).abs() > 1e-9);
            prop_assert_eq!(unit_disk_roots(p, q), m < 1.0);
        }
    }
}
