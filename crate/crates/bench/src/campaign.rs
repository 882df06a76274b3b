//! Method × parameter campaigns over generated or stored instances.
//!
//! A campaign is described by a JSON [`CampaignConfig`]:
//!
//! ```json
//! {
//!   "instances": [
//!     {"generator": "ex1", "p": 400, "n": 110, "seed": 1, "auto_scale": true},
//!     {"generator": "ex2", "n": 64, "epsilon": 1e-3, "seed": 7},
//!     {"generator": "random", "n": 20, "seed": 3},
//!     {"generator": "stored", "path": "problems/run1"}
//!   ],
//!   "methods": [
//!     {"method": "sp"},
//!     {"method": "gsp", "alpha": [1e-6]},
//!     {"method": "adi", "alpha": [1e-6], "beta": [1e15]},
//!     {"method": "ds"}
//!   ],
//!   "tol": 1e-8,
//!   "k_max": 10000,
//!   "repetitions": 3,
//!   "spectral": false
//! }
//! ```
//!
//! Omitted parameter grids fall back to the solver defaults; DS picks
//! `α = 1e-4` on `ex2` instances and `α = 1` otherwise. Rows are emitted
//! instance-major, then in method order, then over the `alpha × beta` grid.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use ils_core::kernels::DEFAULT_EIG_CAP;
use ils_core::model::NormalEquation;
use ils_core::problems::{
    self, Example1Config, Example2Config, ProblemHeader, RandomConfig, EX1_DEFAULT_SCALE,
    EX2_DEFAULT_EPSILON,
};
use ils_core::solvers::{
    run_from_zero, DEFAULT_K_MAX, DEFAULT_TOL, DS_DEFAULT_ALPHA_DENSE, DS_DEFAULT_ALPHA_TLS,
};
use ils_core::spectral::{scheme_spectral_radius, spectral_radius_capped};
use ils_core::{assemble_normal, build_scheme, Error, Method, PartitionedProblem, RunOptions};
use serde::{Deserialize, Serialize};

use crate::stats::median;

pub const CSV_HEADER: [&str; 12] = [
    "method",
    "p",
    "q",
    "n",
    "alpha",
    "beta",
    "it",
    "setup_seconds",
    "loop_seconds",
    "final_res",
    "converged",
    "rho",
];

pub const SWEEP_HEADER: [&str; 7] = [
    "alpha",
    "it",
    "setup_seconds",
    "loop_seconds",
    "rho",
    "converged",
    "final_res",
];

pub const DEFAULT_REPETITIONS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("instance {index}: {source}")]
    Instance {
        index: usize,
        #[source]
        source: Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

/// One solve, as a table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub it: usize,
    pub setup_seconds: Option<f64>,
    pub loop_seconds: Option<f64>,
    pub final_res: f64,
    pub converged: bool,
    pub rho: Option<f64>,
    /// Why the cell produced no regular result; not part of the CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BenchRow {
    pub fn total_seconds(&self) -> Option<f64> {
        Some(self.setup_seconds? + self.loop_seconds?)
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.method.to_string(),
            self.p.to_string(),
            self.q.to_string(),
            self.n.to_string(),
            opt(self.alpha),
            opt(self.beta),
            self.it.to_string(),
            opt(self.setup_seconds),
            opt(self.loop_seconds),
            fmt_f64(self.final_res),
            self.converged.to_string(),
            opt(self.rho),
        ]
    }
}

/// Plain decimals in `[1e-4, 1e15)`, scientific notation otherwise.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "lowercase")]
pub enum InstanceSource {
    Ex1 {
        p: usize,
        n: usize,
        #[serde(default)]
        q: Option<usize>,
        #[serde(default)]
        scale: Option<f64>,
        #[serde(default)]
        auto_scale: bool,
        seed: u64,
    },
    Ex2 {
        n: usize,
        #[serde(default)]
        rows: Option<usize>,
        #[serde(default)]
        epsilon: Option<f64>,
        seed: u64,
    },
    Random {
        n: usize,
        seed: u64,
    },
    Stored {
        path: PathBuf,
    },
}

impl InstanceSource {
    pub fn load(&self) -> ils_core::Result<(PartitionedProblem, ProblemHeader)> {
        match *self {
            InstanceSource::Ex1 {
                p,
                n,
                q,
                scale,
                auto_scale,
                seed,
            } => {
                let cfg = Example1Config {
                    q: q.unwrap_or(n),
                    scale: scale.unwrap_or(EX1_DEFAULT_SCALE),
                    auto_scale,
                    ..Example1Config::new(p, n, seed)
                };
                let inst = problems::gen_example1(&cfg)?;
                Ok((inst.problem, inst.header))
            }
            InstanceSource::Ex2 {
                n,
                rows,
                epsilon,
                seed,
            } => {
                let cfg = Example2Config {
                    rows,
                    ..Example2Config::new(n, epsilon.unwrap_or(EX2_DEFAULT_EPSILON), seed)
                };
                let inst = problems::gen_example2(&cfg)?;
                Ok((inst.problem, inst.header))
            }
            InstanceSource::Random { n, seed } => {
                let inst = problems::random_instance(&RandomConfig::new(n, seed))?;
                Ok((inst.problem, inst.header))
            }
            InstanceSource::Stored { ref path } => problems::read_problem(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodGrid {
    pub method: Method,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
}

impl MethodGrid {
    pub fn new(method: Method) -> Self {
        MethodGrid {
            method,
            alpha: Vec::new(),
            beta: Vec::new(),
        }
    }

    pub fn with_alpha(mut self, alpha: impl Into<Vec<f64>>) -> Self {
        self.alpha = alpha.into();
        self
    }

    pub fn with_beta(mut self, beta: impl Into<Vec<f64>>) -> Self {
        self.beta = beta.into();
        self
    }

    fn cells(&self, header: &ProblemHeader) -> Vec<Cell> {
        let alphas: Vec<Option<f64>> = if !self.method.uses_alpha() {
            vec![None]
        } else if self.alpha.is_empty() {
            vec![default_alpha(self.method, header)]
        } else {
            self.alpha.iter().copied().map(Some).collect()
        };
        let betas: Vec<Option<f64>> = if self.method.uses_beta() && !self.beta.is_empty() {
            self.beta.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        let mut out = Vec::with_capacity(alphas.len() * betas.len());
        for &alpha in &alphas {
            for &beta in &betas {
                out.push(Cell {
                    method: self.method,
                    alpha,
                    beta,
                });
            }
        }
        out
    }
}

/// DS default by instance family; the other methods defer to the solver.
pub fn default_alpha(method: Method, header: &ProblemHeader) -> Option<f64> {
    match method {
        Method::Ds if header.generator == "ex2" => Some(DS_DEFAULT_ALPHA_TLS),
        Method::Ds => Some(DS_DEFAULT_ALPHA_DENSE),
        _ => None,
    }
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

fn default_repetitions() -> usize {
    DEFAULT_REPETITIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub instances: Vec<InstanceSource>,
    pub methods: Vec<MethodGrid>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub spectral: bool,
}

impl CampaignConfig {
    pub fn new(instances: Vec<InstanceSource>, methods: Vec<MethodGrid>) -> Self {
        CampaignConfig {
            instances,
            methods,
            tol: DEFAULT_TOL,
            k_max: DEFAULT_K_MAX,
            repetitions: DEFAULT_REPETITIONS,
            spectral: false,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(|e| CampaignError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let cfg: CampaignConfig = serde_json::from_str(&text).map_err(|e| CampaignError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::Config(m));
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if self.k_max == 0 {
            return bad("k_max must be >= 1".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1".into());
        }
        if self.instances.is_empty() || self.methods.is_empty() {
            return bad("need at least one instance and one method".into());
        }
        for m in &self.methods {
            if !m.method.uses_alpha() && !m.alpha.is_empty() {
                return bad(format!("{} takes no alpha", m.method));
            }
            if !m.method.uses_beta() && !m.beta.is_empty() {
                return bad(format!("{} takes no beta", m.method));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOptions {
    pub tol: f64,
    pub k_max: usize,
    pub repetitions: usize,
    pub spectral: bool,
    pub cap: usize,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            tol: DEFAULT_TOL,
            k_max: DEFAULT_K_MAX,
            repetitions: 1,
            spectral: false,
            cap: DEFAULT_EIG_CAP,
        }
    }
}

/// Solve one cell from zero starting vectors, `repetitions` times, and
/// report the median setup and loop times. Failures become
/// `converged = false` rows.
pub fn run_cell(
    prob: &PartitionedProblem,
    ne: &NormalEquation,
    cell: Cell,
    opts: &CellOptions,
) -> BenchRow {
    let mut row = BenchRow {
        method: cell.method,
        p: prob.p(),
        q: prob.q(),
        n: prob.n(),
        alpha: cell.alpha,
        beta: cell.beta,
        it: 0,
        setup_seconds: None,
        loop_seconds: None,
        final_res: f64::NAN,
        converged: false,
        rho: None,
        error: None,
    };
    let run_opts = RunOptions::new(opts.tol, opts.k_max);
    let (mut setups, mut loops) = (Vec::new(), Vec::new());
    for rep in 0..opts.repetitions.max(1) {
        let scheme = match build_scheme(ne, cell.method, cell.alpha, cell.beta) {
            Ok(s) => s,
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        };
        if rep == 0 {
            row.alpha = scheme.alpha();
            row.beta = scheme.beta();
            if opts.spectral {
                let rho = match (cell.method, scheme.alpha()) {
                    (Method::Ds, Some(a)) => spectral_radius_capped(ne, a, opts.cap),
                    _ => scheme_spectral_radius(&scheme, opts.cap),
                };
                row.rho = rho.ok();
            }
        }
        setups.push(scheme.setup_seconds());
        match run_from_zero(&scheme, ne, &run_opts) {
            Ok(rep_out) => {
                loops.push(rep_out.elapsed);
                if rep == 0 {
                    row.it = rep_out.iterations;
                    row.final_res = rep_out.final_res;
                    row.converged = rep_out.converged();
                }
            }
            Err(Error::Divergence { step }) => {
                row.it = step;
                row.final_res = f64::INFINITY;
                row.error = Some(Error::Divergence { step }.to_string());
                return row;
            }
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        }
    }
    row.setup_seconds = median(&setups);
    row.loop_seconds = median(&loops);
    row
}

/// Rows of a whole campaign in config order. With `parallel`, cells run on
/// worker threads and the timing columns are blanked.
pub fn run_campaign(cfg: &CampaignConfig, parallel: bool) -> Result<Vec<BenchRow>, CampaignError> {
    cfg.validate()?;
    let opts = CellOptions {
        tol: cfg.tol,
        k_max: cfg.k_max,
        repetitions: cfg.repetitions,
        spectral: cfg.spectral,
        cap: DEFAULT_EIG_CAP,
    };
    let mut loaded = Vec::with_capacity(cfg.instances.len());
    for (index, source) in cfg.instances.iter().enumerate() {
        let (prob, header) = source
            .load()
            .map_err(|source| CampaignError::Instance { index, source })?;
        let ne = assemble_normal(&prob);
        loaded.push((prob, header, ne));
    }
    let mut jobs = Vec::new();
    for (i, (_, header, _)) in loaded.iter().enumerate() {
        for m in &cfg.methods {
            for cell in m.cells(header) {
                jobs.push((i, cell));
            }
        }
    }
    if !parallel {
        return Ok(jobs
            .iter()
            .map(|&(i, cell)| run_cell(&loaded[i].0, &loaded[i].2, cell, &opts))
            .collect());
    }

    let opts = CellOptions {
        repetitions: 1,
        ..opts
    };
    let slots: Vec<Mutex<Option<BenchRow>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(i, cell)) = jobs.get(k) else { break };
                let mut row = run_cell(&loaded[i].0, &loaded[i].2, cell, &opts);
                row.setup_seconds = None;
                row.loop_seconds = None;
                *slots[k].lock().unwrap() = Some(row);
            });
        }
    });
    Ok(slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every job ran"))
        .collect())
}

pub fn write_csv<W: Write>(out: W, rows: &[BenchRow]) -> Result<(), CampaignError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_csv_file(path: &Path, rows: &[BenchRow]) -> Result<(), CampaignError> {
    let file = std::fs::File::create(path).map_err(|e| CampaignError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    write_csv(std::io::BufWriter::new(file), rows)
}

/// `points` values from `lo` to `hi`, evenly spaced in `log10`, rounded to
/// 12 significant digits so decade grids come out as exact literals.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, CampaignError> {
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || points == 0 {
        return Err(CampaignError::Config(format!(
            "need 0 < lo <= hi and points >= 1, got lo = {lo}, hi = {hi}, points = {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..points)
        .map(|i| {
            let e = a + (b - a) * i as f64 / (points - 1) as f64;
            format!("{:.11e}", 10f64.powf(e)).parse().unwrap()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub it: usize,
    pub setup_seconds: Option<f64>,
    pub loop_seconds: Option<f64>,
    pub rho: Option<f64>,
    pub converged: bool,
    pub final_res: f64,
}

impl From<&BenchRow> for SweepRow {
    fn from(r: &BenchRow) -> Self {
        SweepRow {
            alpha: r.alpha.unwrap_or(f64::NAN),
            it: r.it,
            setup_seconds: r.setup_seconds,
            loop_seconds: r.loop_seconds,
            rho: r.rho,
            converged: r.converged,
            final_res: r.final_res,
        }
    }
}

/// DS or GSP over an `α` grid; `ρ` is included whenever the eigensolve fits
/// under `opts.cap`.
pub fn sweep_alpha(
    prob: &PartitionedProblem,
    method: Method,
    grid: &[f64],
    opts: &CellOptions,
) -> Result<Vec<SweepRow>, CampaignError> {
    if !matches!(method, Method::Ds | Method::Gsp) {
        return Err(CampaignError::Config(format!(
            "sweep-alpha supports DS and GSP, not {method}"
        )));
    }
    let ne = assemble_normal(prob);
    let opts = CellOptions {
        spectral: true,
        ..*opts
    };
    Ok(grid
        .iter()
        .map(|&a| {
            let cell = Cell {
                method,
                alpha: Some(a),
                beta: None,
            };
            SweepRow::from(&run_cell(prob, &ne, cell, &opts))
        })
        .collect())
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), CampaignError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.alpha),
            r.it.to_string(),
            opt(r.setup_seconds),
            opt(r.loop_seconds),
            opt(r.rho),
            r.converged.to_string(),
            fmt_f64(r.final_res),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub const PRESET_EX1_P: usize = 400;
pub const PRESET_EX1_N: [usize; 4] = [110, 120, 130, 140];
pub const PRESET_EX2_N: [usize; 4] = [64, 128, 256, 512];
pub const PRESET_SEED: u64 = 1;

fn preset_methods(ds_alpha: f64) -> Vec<MethodGrid> {
    vec![
        MethodGrid::new(Method::Sp),
        MethodGrid::new(Method::Gsp).with_alpha([ils_core::solvers::GSP_DEFAULT_ALPHA]),
        MethodGrid::new(Method::Adi)
            .with_alpha([ils_core::solvers::ADI_DEFAULT_ALPHA])
            .with_beta([ils_core::solvers::ADI_DEFAULT_BETA]),
        MethodGrid::new(Method::Ds).with_alpha([ds_alpha]),
    ]
}

fn ex1_preset(n: usize) -> InstanceSource {
    InstanceSource::Ex1 {
        p: PRESET_EX1_P,
        n,
        q: Some(n),
        scale: None,
        auto_scale: true,
        seed: PRESET_SEED,
    }
}

fn ex2_preset(n: usize) -> InstanceSource {
    InstanceSource::Ex2 {
        n,
        rows: None,
        epsilon: Some(EX2_DEFAULT_EPSILON),
        seed: PRESET_SEED,
    }
}

/// Desk-scale dense comparison: `ex1`, `p = 400`, `n = q ∈ {110, …, 140}`.
pub fn paper_desk_table1() -> CampaignConfig {
    CampaignConfig::new(
        PRESET_EX1_N.iter().map(|&n| ex1_preset(n)).collect(),
        preset_methods(DS_DEFAULT_ALPHA_DENSE),
    )
}

/// Desk-scale TLS comparison: `ex2`, `n ∈ {64, …, 512}`.
pub fn paper_desk_table2() -> CampaignConfig {
    CampaignConfig::new(
        PRESET_EX2_N.iter().map(|&n| ex2_preset(n)).collect(),
        preset_methods(DS_DEFAULT_ALPHA_TLS),
    )
}

/// DS `α` sweep on every table-1 instance.
pub fn paper_desk_fig1() -> CampaignConfig {
    let grid = geometric_grid(1e-4, 1e2, 7).unwrap();
    CampaignConfig {
        spectral: true,
        ..CampaignConfig::new(
            PRESET_EX1_N.iter().map(|&n| ex1_preset(n)).collect(),
            vec![MethodGrid::new(Method::Ds).with_alpha(grid)],
        )
    }
}

/// DS `α` sweep on the smallest table-2 instance.
pub fn paper_desk_fig2() -> CampaignConfig {
    let grid = geometric_grid(1e-8, 1e-1, 8).unwrap();
    CampaignConfig {
        spectral: true,
        ..CampaignConfig::new(
            vec![ex2_preset(PRESET_EX2_N[0])],
            vec![MethodGrid::new(Method::Ds).with_alpha(grid)],
        )
    }
}

pub const PRESET_FILES: [&str; 4] = ["table1.csv", "table2.csv", "fig1.csv", "fig2.csv"];

pub fn paper_desk() -> [(&'static str, CampaignConfig); 4] {
    [
        (PRESET_FILES[0], paper_desk_table1()),
        (PRESET_FILES[1], paper_desk_table2()),
        (PRESET_FILES[2], paper_desk_fig1()),
        (PRESET_FILES[3], paper_desk_fig2()),
    ]
}
