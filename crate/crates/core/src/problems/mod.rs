//! Seeded instance generators and on-disk persistence.
//!
//! * `ex1`: dense uniform `A1`, `A2 = scale · [I | 0]`.
//! * `ex2`: total least squares reduced to ILS, `A = [B; σ I]`, `b = [d; 0]`,
//!   with `σ` the smallest singular value of `(B, d)`.
//! * `random`: Gaussian blocks with `‖A2^T A2‖ ≤ ratio · λ_min(A1^T A1)`, the
//!   fixture family for property tests.
//!
//! A stored problem is a directory holding `A1.mtx`, `A2.mtx`, `b1.mtx`,
//! `b2.mtx` and a `header.json` sidecar.

pub mod mtx;

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, BlockMatrix};
use crate::model::PartitionedProblem;

pub const EX1_DEFAULT_SCALE: f64 = 7.0;
pub const EX2_DEFAULT_EPSILON: f64 = 1e-3;
/// `auto_scale` sets the `A2` factor to this fraction of `sqrt(λ_min(A1^T A1))`.
pub const AUTO_SCALE_FRACTION: f64 = 0.9;

const HEADER_FILE: &str = "header.json";
const A1_FILE: &str = "A1.mtx";
const A2_FILE: &str = "A2.mtx";
const B1_FILE: &str = "b1.mtx";
const B2_FILE: &str = "b2.mtx";

/// JSON sidecar describing a stored instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemHeader {
    pub generator: String,
    pub p: usize,
    pub q: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Effective `A2` factor of `ex1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_scale: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definite: Option<bool>,
}

impl ProblemHeader {
    pub fn custom(prob: &PartitionedProblem) -> Self {
        ProblemHeader {
            generator: "custom".into(),
            p: prob.p(),
            q: prob.q(),
            n: prob.n(),
            seed: None,
            scale: None,
            auto_scale: None,
            epsilon: None,
            sigma: None,
            definite: None,
        }
    }
}

/// A generated instance with its header and, for `ex2`, the TLS reference.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: PartitionedProblem,
    pub header: ProblemHeader,
    pub tls: Option<TlsReference>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example1Config {
    pub p: usize,
    pub n: usize,
    pub q: usize,
    pub scale: f64,
    pub seed: u64,
    pub auto_scale: bool,
}

impl Example1Config {
    /// `p × n` uniform `A1`, `q = n`, factor 7, no auto-scaling.
    pub fn new(p: usize, n: usize, seed: u64) -> Self {
        Example1Config {
            p,
            n,
            q: n,
            scale: EX1_DEFAULT_SCALE,
            seed,
            auto_scale: false,
        }
    }

    pub fn auto_scaled(mut self) -> Self {
        self.auto_scale = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p < self.n {
            return Err(Error::param(format!(
                "ex1 needs p >= n >= 1, got p = {}, n = {}",
                self.p, self.n
            )));
        }
        if self.q == 0 {
            return Err(Error::param("ex1 needs q >= 1"));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::param(format!("ex1 scale must be >= 0, got {}", self.scale)));
        }
        Ok(())
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random::<f64>())
}

fn uniform_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random::<f64>())
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn normal_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

fn lambda_min(sym: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym).eigenvalues.min()
}

fn lambda_max(sym: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym).eigenvalues.max()
}

/// `ex1` without the SPD gate; returns the problem and the effective factor.
pub fn example1_raw(cfg: &Example1Config) -> Result<(PartitionedProblem, f64)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a1 = uniform_matrix(&mut rng, cfg.p, cfg.n);
    let b1 = uniform_vector(&mut rng, cfg.p);
    let b2 = uniform_vector(&mut rng, cfg.q);
    let scale = if cfg.auto_scale {
        let g1 = kernels::symmetrize(a1.tr_mul(&a1));
        AUTO_SCALE_FRACTION * lambda_min(g1).max(0.0).sqrt()
    } else {
        cfg.scale
    };
    let a2 = BlockMatrix::scaled_identity(cfg.q, cfg.n, scale);
    Ok((PartitionedProblem::new(a1, a2, b1, b2)?, scale))
}

/// Dense uniform instance. With `auto_scale` the `A2` factor becomes
/// `0.9 · sqrt(λ_min(A1^T A1))`; the result must have `A^T J A` SPD.
pub fn gen_example1(cfg: &Example1Config) -> Result<Instance> {
    let (problem, scale) = example1_raw(cfg)?;
    if !problem.has_unique_solution() {
        return Err(Error::InstanceNotSpd);
    }
    Ok(Instance {
        header: ProblemHeader {
            generator: "ex1".into(),
            p: cfg.p,
            q: cfg.q,
            n: cfg.n,
            seed: Some(cfg.seed),
            scale: Some(scale),
            auto_scale: Some(cfg.auto_scale),
            epsilon: None,
            sigma: None,
            definite: None,
        },
        problem,
        tls: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example2Config {
    pub n: usize,
    /// Row count `p` of `B`; `None` means `p = n`.
    pub rows: Option<usize>,
    pub epsilon: f64,
    pub seed: u64,
}

impl Example2Config {
    pub fn new(n: usize, epsilon: f64, seed: u64) -> Self {
        Example2Config {
            n,
            rows: None,
            epsilon,
            seed,
        }
    }

    pub fn with_rows(mut self, p: usize) -> Self {
        self.rows = Some(p);
        self
    }

    pub fn p(&self) -> usize {
        self.rows.unwrap_or(self.n)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param(format!("ex2 needs n >= 2, got {}", self.n)));
        }
        if self.p() < self.n {
            return Err(Error::param(format!(
                "ex2 needs rows >= n, got rows = {}, n = {}",
                self.p(),
                self.n
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(format!("ex2 epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlsReference {
    /// Smallest singular value of `(B, d)`, i.e. `σ_{n+1}`; zero when `p ≤ n`.
    pub sigma: f64,
    /// `(B^T B - σ² I)^{-1} B^T d`, present when `definite`.
    pub x_tls: Option<DVector<f64>>,
    /// Whether `B^T B - σ² I` is SPD.
    pub definite: bool,
}

/// Intermediate matrices of the `ex2` construction.
#[derive(Debug, Clone)]
pub struct Example2Parts {
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DVector<f64>,
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let qr = normal_matrix(rng, n, n).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn example2_parts(cfg: &Example2Config) -> Result<Example2Parts> {
    cfg.validate()?;
    let (n, p) = (cfg.n, cfg.p());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let y = random_orthogonal(&mut rng, p);
    let z = random_orthogonal(&mut rng, n);
    let d_diag = DVector::from_fn(n, |i, _| 1.0 / (i + 1) as f64);
    // Y · [D; 0] · Z^T only touches the first n columns of Y
    let mut yd = y.columns(0, n).into_owned();
    for (j, s) in d_diag.iter().enumerate() {
        yd.column_mut(j).scale_mut(*s);
    }
    let b_tilde = yd * z.transpose();
    let e = normal_matrix(&mut rng, p, n);
    let f = normal_vector(&mut rng, p);
    let b = &b_tilde + e * cfg.epsilon;
    let d = &b_tilde * DVector::from_element(n, 1.0) + f * cfg.epsilon;
    Ok(Example2Parts {
        y,
        z,
        b_tilde,
        b,
        d,
    })
}

/// `σ_{n+1}` of the `p × (n+1)` matrix `(B, d)`. A wide matrix (`p ≤ n`) has
/// a nontrivial null space, so the value is exactly zero.
pub fn smallest_augmented_singular_value(b: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    let (p, n) = b.shape();
    if p <= n {
        return 0.0;
    }
    let mut c = DMatrix::zeros(p, n + 1);
    c.columns_mut(0, n).copy_from(b);
    c.column_mut(n).copy_from(d);
    c.singular_values().min()
}

/// TLS instance reduced to ILS: `A1 = B`, `A2 = σ I_n`, `b1 = d`, `b2 = 0`.
pub fn gen_example2(cfg: &Example2Config) -> Result<Instance> {
    let parts = example2_parts(cfg)?;
    let n = cfg.n;
    let sigma = smallest_augmented_singular_value(&parts.b, &parts.d);

    let mut shifted = kernels::symmetrize(parts.b.tr_mul(&parts.b));
    for i in 0..n {
        shifted[(i, i)] -= sigma * sigma;
    }
    let (definite, x_tls) = match kernels::cholesky(&shifted) {
        Ok(f) => (true, Some(f.solve(&parts.b.tr_mul(&parts.d))?)),
        Err(_) => (false, None),
    };

    let problem = PartitionedProblem::new(
        parts.b,
        BlockMatrix::scaled_identity(n, n, sigma),
        parts.d,
        DVector::zeros(n),
    )?;
    Ok(Instance {
        header: ProblemHeader {
            generator: "ex2".into(),
            p: problem.p(),
            q: problem.q(),
            n,
            seed: Some(cfg.seed),
            scale: None,
            auto_scale: None,
            epsilon: Some(cfg.epsilon),
            sigma: Some(sigma),
            definite: Some(definite),
        },
        problem,
        tls: Some(TlsReference {
            sigma,
            x_tls,
            definite,
        }),
    })
}

/// Gaussian fixture instances with a guaranteed SPD `A^T J A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub seed: u64,
    /// `λ_max(A2^T A2) = ratio · λ_min(A1^T A1)`, in `[0, 1)`.
    pub ratio: f64,
}

impl RandomConfig {
    /// `p = max(4n, 200)`, `q = n`, ratio 0.5.
    pub fn new(n: usize, seed: u64) -> Self {
        RandomConfig {
            n,
            p: (4 * n).max(200),
            q: n,
            seed,
            ratio: 0.5,
        }
    }
}

pub fn gen_random(cfg: &RandomConfig) -> Result<PartitionedProblem> {
    if cfg.n == 0 || cfg.p < cfg.n {
        return Err(Error::param(format!(
            "random needs p >= n >= 1, got p = {}, n = {}",
            cfg.p, cfg.n
        )));
    }
    if !(0.0..1.0).contains(&cfg.ratio) {
        return Err(Error::param(format!("ratio must lie in [0, 1), got {}", cfg.ratio)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a1 = normal_matrix(&mut rng, cfg.p, cfg.n);
    let mut a2 = normal_matrix(&mut rng, cfg.q, cfg.n);
    let b1 = normal_vector(&mut rng, cfg.p);
    let b2 = normal_vector(&mut rng, cfg.q);
    if cfg.q > 0 {
        let top = lambda_max(kernels::symmetrize(a2.tr_mul(&a2)));
        let floor = lambda_min(kernels::symmetrize(a1.tr_mul(&a1)));
        if top > 0.0 {
            a2 *= (cfg.ratio * floor.max(0.0) / top).sqrt();
        }
    }
    let prob = PartitionedProblem::new(a1, a2, b1, b2)?;
    if !prob.has_unique_solution() {
        return Err(Error::InstanceNotSpd);
    }
    Ok(prob)
}

pub fn random_instance(cfg: &RandomConfig) -> Result<Instance> {
    let problem = gen_random(cfg)?;
    Ok(Instance {
        header: ProblemHeader {
            generator: "random".into(),
            seed: Some(cfg.seed),
            ..ProblemHeader::custom(&problem)
        },
        problem,
        tls: None,
    })
}

/// Write the four Matrix Market files and the JSON header into `dir`.
pub fn write_problem(prob: &PartitionedProblem, header: &ProblemHeader, dir: &Path) -> Result<()> {
    if (header.p, header.q, header.n) != (prob.p(), prob.q(), prob.n()) {
        return Err(Error::dim(format!(
            "header says p = {}, q = {}, n = {} but problem is {}/{}/{}",
            header.p,
            header.q,
            header.n,
            prob.p(),
            prob.q(),
            prob.n()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    mtx::write_block(&dir.join(A1_FILE), prob.a1())?;
    mtx::write_block(&dir.join(A2_FILE), prob.a2())?;
    mtx::write_vector(&dir.join(B1_FILE), prob.b1())?;
    mtx::write_vector(&dir.join(B2_FILE), prob.b2())?;
    let path = dir.join(HEADER_FILE);
    let json = serde_json::to_string_pretty(header).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, json + "\n").map_err(|e| Error::Io { path, source: e })
}

pub fn read_header(dir: &Path) -> Result<ProblemHeader> {
    let path = dir.join(HEADER_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })
}

pub fn read_problem(dir: &Path) -> Result<(PartitionedProblem, ProblemHeader)> {
    let header = read_header(dir)?;
    let a1 = mtx::read_block(&dir.join(A1_FILE))?;
    let a2 = mtx::read_block(&dir.join(A2_FILE))?;
    let b1 = mtx::read_vector(&dir.join(B1_FILE))?;
    let b2 = mtx::read_vector(&dir.join(B2_FILE))?;
    let mismatch = |msg: String| Error::Parse {
        path: dir.join(HEADER_FILE),
        msg,
    };
    if header.p + header.q != a1.nrows() + a2.nrows() || header.p != a1.nrows() {
        return Err(mismatch(format!(
            "header p = {}, q = {} but A1, A2 have {} and {} rows",
            header.p,
            header.q,
            a1.nrows(),
            a2.nrows()
        )));
    }
    if header.n != a1.ncols() {
        return Err(mismatch(format!(
            "header n = {} but A1 has {} columns",
            header.n,
            a1.ncols()
        )));
    }
    let prob = PartitionedProblem::new(a1, a2, b1, b2).map_err(|e| mismatch(e.to_string()))?;
    Ok((prob, header))
}
