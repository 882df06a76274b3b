use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ils_bench::campaign::{self, CellOptions};
use ils_bench::{run_campaign, CampaignConfig, CampaignError};
use ils_core::kernels::DEFAULT_EIG_CAP;
use ils_core::problems::{self, EX1_DEFAULT_SCALE, EX2_DEFAULT_EPSILON};
use ils_core::solvers::{DEFAULT_K_MAX, DEFAULT_TOL};
use ils_core::spectral::check_eigen_quadratic_capped;
use ils_core::{assemble_normal, Error, Method};

const EXIT_USAGE: u8 = 64;
const EXIT_CAP: u8 = 65;
const EXIT_IO: u8 = 66;
const EXIT_SPD_GATE: u8 = 2;
const EXIT_OTHER: u8 = 1;

/// Splitting iterations for indefinite least squares.
#[derive(Parser)]
#[command(name = "ils-split", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded instance and store it as Matrix Market + header.json.
    Generate(GenerateArgs),
    /// Solve a stored instance once from zero and print the row as JSON.
    Solve(SolveArgs),
    /// Run a campaign and write CSV rows.
    Bench(BenchArgs),
    /// Sweep alpha over a geometric grid and write CSV rows.
    SweepAlpha(SweepArgs),
    /// Spectral diagnostics of the DS iteration matrix as JSON.
    Spectral(SpectralArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Ex1,
    Ex2,
    Random,
}

#[derive(Args)]
struct GenerateArgs {
    generator: Generator,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n: usize,
    /// Rows of A1 (`ex1`), rows of B (`ex2`, default n).
    #[arg(long)]
    p: Option<usize>,
    /// Rows of A2 (`ex1`, default n).
    #[arg(long)]
    q: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = EX1_DEFAULT_SCALE)]
    scale: f64,
    #[arg(long)]
    auto_scale: bool,
    #[arg(long, default_value_t = EX2_DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    kmax: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[command(flatten)]
    run: RunArgs,
    /// Also report the spectral radius of the iteration matrix.
    #[arg(long)]
    spectral: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Campaign config (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["paper-desk"])]
    preset: Option<String>,
    /// CSV file, or the output directory for a preset; stdout when omitted
    /// (presets default to `paper-desk/`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run cells concurrently; timing columns are left empty.
    #[arg(long)]
    parallel: bool,
    /// Override the repetition count of the config or preset.
    #[arg(long)]
    repetitions: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_parser = parse_method, default_value = "ds")]
    method: Method,
    #[arg(long)]
    alpha_min: f64,
    #[arg(long)]
    alpha_max: f64,
    /// Grid points; one per decade when omitted.
    #[arg(long)]
    points: Option<usize>,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[arg(long, default_value_t = DEFAULT_EIG_CAP)]
    cap: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectralArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    alpha: f64,
    /// Largest iteration-matrix order the eigensolver accepts.
    #[arg(long, default_value_t = DEFAULT_EIG_CAP)]
    cap: usize,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            msg: msg.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::Dimension(_) => EXIT_USAGE,
            Error::CapExceeded { .. } => EXIT_CAP,
            Error::Io { .. } | Error::Parse { .. } | Error::Json { .. } => EXIT_IO,
            Error::InstanceNotSpd => EXIT_SPD_GATE,
            _ => EXIT_OTHER,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Config(_) => Failure::usage(e.to_string()),
            CampaignError::Instance { source, index } => {
                let inner = Failure::from(source);
                Failure {
                    code: inner.code,
                    msg: format!("instance {index}: {}", inner.msg),
                }
            }
            CampaignError::Io { .. } | CampaignError::Csv(_) => Failure {
                code: EXIT_IO,
                msg: e.to_string(),
            },
            CampaignError::Json { .. } => Failure {
                code: EXIT_IO,
                msg: e.to_string(),
            },
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        msg: format!("{}: {e}", path.display()),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).expect("serializable");
    let mut out = io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| io_failure(Path::new("<stdout>"), e))
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let inst = match a.generator {
        Generator::Ex1 => {
            let p = a.p.ok_or_else(|| Failure::usage("ex1 needs --p"))?;
            problems::gen_example1(&problems::Example1Config {
                p,
                n: a.n,
                q: a.q.unwrap_or(a.n),
                scale: a.scale,
                seed: a.seed,
                auto_scale: a.auto_scale,
            })?
        }
        Generator::Ex2 => {
            let cfg = problems::Example2Config {
                rows: a.p,
                ..problems::Example2Config::new(a.n, a.epsilon, a.seed)
            };
            problems::gen_example2(&cfg)?
        }
        Generator::Random => {
            let mut cfg = problems::RandomConfig::new(a.n, a.seed);
            cfg.p = a.p.unwrap_or(cfg.p);
            cfg.q = a.q.unwrap_or(cfg.q);
            problems::random_instance(&cfg)?
        }
    };
    problems::write_problem(&inst.problem, &inst.header, &a.out)?;
    print_json(&inst.header)
}

fn check_run_args(r: &RunArgs) -> Result<(), Failure> {
    if r.tol.is_nan() || r.tol <= 0.0 || r.kmax == 0 {
        return Err(Failure::usage(format!(
            "need --tol > 0 and --kmax >= 1, got {} and {}",
            r.tol, r.kmax
        )));
    }
    Ok(())
}

fn solve(a: SolveArgs) -> Result<(), Failure> {
    check_run_args(&a.run)?;
    let (prob, header) = problems::read_problem(&a.problem)?;
    let ne = assemble_normal(&prob);
    let alpha = a.alpha.or_else(|| campaign::default_alpha(a.method, &header));
    // surface parameter errors as usage errors rather than rows
    ils_core::build_scheme(&ne, a.method, alpha, a.beta)?;
    let opts = CellOptions {
        tol: a.run.tol,
        k_max: a.run.kmax,
        repetitions: 1,
        spectral: a.spectral,
        cap: DEFAULT_EIG_CAP,
    };
    let cell = campaign::Cell {
        method: a.method,
        alpha,
        beta: a.beta,
    };
    print_json(&campaign::run_cell(&prob, &ne, cell, &opts))
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    if a.repetitions == Some(0) {
        return Err(Failure::usage("--repetitions must be >= 1"));
    }
    if a.preset.is_some() {
        let dir = a.out.unwrap_or_else(|| PathBuf::from("paper-desk"));
        std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
        for (file, mut cfg) in campaign::paper_desk() {
            if let Some(r) = a.repetitions {
                cfg.repetitions = r;
            }
            let rows = run_campaign(&cfg, a.parallel)?;
            let path = dir.join(file);
            campaign::write_csv_file(&path, &rows)?;
            let done = rows.iter().filter(|r| r.converged).count();
            eprintln!("{}: {} rows, {} converged", path.display(), rows.len(), done);
        }
        return Ok(());
    }
    let path = a.config.expect("clap enforces --config or --preset");
    let mut cfg = CampaignConfig::from_path(&path)?;
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    let rows = run_campaign(&cfg, a.parallel)?;
    match a.out {
        Some(out) => campaign::write_csv_file(&out, &rows)?,
        None => campaign::write_csv(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    check_run_args(&a.run)?;
    if a.repetitions == 0 {
        return Err(Failure::usage("--repetitions must be >= 1"));
    }
    let points = match a.points {
        Some(p) => p,
        None if a.alpha_min > 0.0 && a.alpha_max >= a.alpha_min => {
            (a.alpha_max / a.alpha_min).log10().round() as usize + 1
        }
        None => 1,
    };
    let grid = campaign::geometric_grid(a.alpha_min, a.alpha_max, points)?;
    let (prob, _) = problems::read_problem(&a.problem)?;
    let opts = CellOptions {
        tol: a.run.tol,
        k_max: a.run.kmax,
        repetitions: a.repetitions,
        spectral: true,
        cap: a.cap,
    };
    let rows = campaign::sweep_alpha(&prob, a.method, &grid, &opts)?;
    match a.out {
        Some(out) => {
            let file = std::fs::File::create(&out).map_err(|e| io_failure(&out, e))?;
            campaign::write_sweep_csv(io::BufWriter::new(file), &rows)?
        }
        None => campaign::write_sweep_csv(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn spectral(a: SpectralArgs) -> Result<(), Failure> {
    let (prob, _) = problems::read_problem(&a.problem)?;
    let ne = assemble_normal(&prob);
    let report = check_eigen_quadratic_capped(&ne, a.alpha, a.cap)?;
    print_json(&report)
}

fn init_threads() -> Result<(), Failure> {
    let n = ils_bench::threads_from_env().map_err(Failure::usage)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure {
            code: EXIT_OTHER,
            msg: e.to_string(),
        })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = init_threads().and_then(|()| match cli.cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Solve(a) => solve(a),
        Cmd::Bench(a) => bench(a),
        Cmd::SweepAlpha(a) => sweep(a),
        Cmd::Spectral(a) => spectral(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
