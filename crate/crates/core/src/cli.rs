//! Batch front end. Every subcommand reads the same TOML config, writes
//! its CSV artifacts atomically into the output directory and maps
//! failures to exit codes: 1 parse, 2 hypothesis, 3 solver, 4 I/O.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{apply_overrides, parse_config, RunConfig};
use crate::eigen::{estimate_lambda1, EigenEstimate};
use crate::error::Error;
use crate::femspace::P1Space;
use crate::galerkin::{run_hierarchy, SolveReport};
use crate::hypotheses::{
    apriori_radius, check_h1, check_h1prime, check_h2, draw_samples, CheckReport, HypothesisConstants, LambdaTrend,
    RadiusInputs, VIOLATIONS_CSV_HEADER,
};
use crate::mesh::RefinementHierarchy;
use crate::operators::{probe_nonmonotonicity, probe_root, ProblemSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "pq-galerkin", version, about = "Galerkin solver and verifier for competing (p,q)-Laplacian systems")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set problem.mu=[-0.5,-0.5]`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true, env = "PQG_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the meshes of levels `0..=L`.
    Mesh {
        #[arg(long)]
        levels: Option<usize>,
    },
    /// First eigenvalue of the r-Laplacian on levels `0..=L`.
    Eigen {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Audit the growth and dissipativity hypotheses.
    Check,
    /// Solve the level hierarchy and report the diagnostics.
    Solve,
    /// Energy `E(t)` along `t sin(πx) sin(πy)` for one equation.
    Probe {
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, default_value_t = 1)]
        equation: usize,
        #[arg(long, default_value_t = 61)]
        points: usize,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_)
            | Error::Expression { .. }
            | Error::Exponent(_)
            | Error::InvalidArgument(_)
            | Error::LevelOutOfRange { .. }
            | Error::LevelMismatch { .. } => EXIT_PARSE,
            Error::CoercivityViolated { .. } => EXIT_HYPOTHESIS,
            Error::Stagnation { .. }
            | Error::EigenNotConverged { .. }
            | Error::LinearSolve(_)
            | Error::NonFiniteReaction { .. }
            | Error::NonFiniteProbe { .. } => EXIT_SOLVER,
            Error::Io(_) => EXIT_IO,
        };
        Failure::new(code, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code. Progress goes to stdout, failures to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Loads the config named on the command line with overrides applied.
pub fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Failure::new(EXIT_IO, format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let text = apply_overrides(&text, &cli.set)?;
    let mut cfg = parse_config(&text)?;
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> CliResult<i32> {
    let cfg = load_config(cli)?;
    if cfg.workers > 0 {
        // a pool may already exist when several runs share a process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    let out = PathBuf::from(&cfg.output_dir);
    match &cli.command {
        Command::Mesh { levels } => cmd_mesh(&cfg, &out, *levels),
        Command::Eigen { r, levels } => cmd_eigen(&cfg, &out, *r, *levels),
        Command::Check => cmd_check(&cfg, &out),
        Command::Solve => cmd_solve(&cfg, &out),
        Command::Probe { mu, equation, points } => cmd_probe(&cfg, &out, *mu, *equation, *points),
    }
}

/// Writes `contents` to `dir/name` through a temporary file and rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let io = |e: std::io::Error| Failure::new(EXIT_IO, format!("cannot write {}: {e}", dir.join(name).display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
    Ok(())
}

fn hierarchy_to(cfg: &RunConfig, finest: usize) -> CliResult<RefinementHierarchy> {
    Ok(RefinementHierarchy::unit_square(cfg.domain.cells_per_side, finest)?)
}

fn cmd_mesh(cfg: &RunConfig, out: &Path, levels: Option<usize>) -> CliResult<i32> {
    let finest = levels.unwrap_or(cfg.domain.levels - 1);
    let h = hierarchy_to(cfg, finest)?;
    let mut summary = String::from("level,vertices,triangles,dofs,domain_measure\n");
    for m in h.meshes() {
        write_atomic(out, &format!("mesh_level{}.txt", m.level()), &m.to_text())?;
        let _ = writeln!(
            summary,
            "{},{},{},{},{}",
            m.level(),
            m.num_vertices(),
            m.num_triangles(),
            m.num_dofs(),
            m.domain_measure()
        );
    }
    write_atomic(out, "mesh_summary.csv", &summary)?;
    print!("{summary}");
    Ok(EXIT_OK)
}

fn cmd_eigen(cfg: &RunConfig, out: &Path, r: f64, levels: Option<usize>) -> CliResult<i32> {
    let finest = levels.unwrap_or(cfg.domain.levels - 1);
    let h = hierarchy_to(cfg, finest)?;
    let opts = cfg.eigen_options();
    let mut csv = format!("{}\n", EigenEstimate::CSV_HEADER);
    for level in 0..=finest {
        let est = estimate_lambda1(r, &h, level, &opts)?;
        let _ = writeln!(csv, "{}", est.csv_row());
    }
    write_atomic(out, &format!("eigen_r{r}.csv"), &csv)?;
    print!("{csv}");
    Ok(EXIT_OK)
}

/// Eigenvalue estimates, hypothesis reports and the built problem.
pub struct Certification {
    pub spec: ProblemSpec,
    pub constants: HypothesisConstants,
    /// `[p1 coarse, p2 coarse, p1 fine, p2 fine]`
    pub lambdas: Vec<EigenEstimate>,
    pub reports: Vec<CheckReport>,
}

impl Certification {
    pub fn fine_lambda(&self) -> [f64; 2] {
        [self.lambdas[2].lambda, self.lambdas[3].lambda]
    }

    /// A-priori radius from the certified constants and the finest-level
    /// eigenvalues.
    pub fn radius(&self, h: &RefinementHierarchy) -> crate::Result<f64> {
        let spec = &self.spec;
        apriori_radius(&RadiusInputs {
            p: spec.p,
            q: spec.q,
            mu: spec.mu,
            c: self.constants.c,
            d: self.constants.d,
            lambda: self.fine_lambda(),
            gamma_l1_sum: self.constants.gamma_l1[0] + self.constants.gamma_l1[1],
            domain_measure: h.mesh(0)?.domain_measure(),
        })
    }

    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
}

/// Estimates `λ_{1,p_i}` on the coarsest and finest levels and runs every
/// hypothesis check that the constants allow.
pub fn certify(cfg: &RunConfig, h: &RefinementHierarchy) -> CliResult<Certification> {
    let finest = h.finest_level();
    let mesh = h.mesh(finest)?;
    let (spec, constants) = cfg.build(mesh)?;
    let opts = cfg.eigen_options();
    let mut lambdas = Vec::with_capacity(4);
    for level in [0, finest] {
        for p in spec.p {
            lambdas.push(estimate_lambda1(p, h, level, &opts)?);
        }
    }
    let samples = draw_samples(mesh, &cfg.sampling_plan());
    let reactions = [spec.reactions[0].as_ref(), spec.reactions[1].as_ref()];
    let mut reports = vec![check_h1(reactions, spec.p, constants.growth, &constants.sigma, &samples)?];
    if let Some(prime) = &constants.prime {
        reports.push(check_h1prime(reactions, spec.p, prime, &samples)?);
    }
    let trend = LambdaTrend {
        fine: [lambdas[2].lambda, lambdas[3].lambda],
        coarse: Some([lambdas[0].lambda, lambdas[1].lambda]),
    };
    reports.push(check_h2(reactions, spec.p, &constants, &trend, &samples)?);
    Ok(Certification {
        spec,
        constants,
        lambdas,
        reports,
    })
}

fn write_certification(out: &Path, cert: &Certification) -> CliResult<()> {
    let mut report = format!("{}\n", CheckReport::CSV_HEADER);
    let mut violations = format!("{VIOLATIONS_CSV_HEADER}\n");
    for r in &cert.reports {
        let _ = writeln!(report, "{}", r.csv_row());
        violations.push_str(&r.violations_csv());
        println!("{}", r.summary());
    }
    let mut eig = format!("{}\n", EigenEstimate::CSV_HEADER);
    for e in &cert.lambdas {
        let _ = writeln!(eig, "{}", e.csv_row());
    }
    write_atomic(out, "check_report.csv", &report)?;
    write_atomic(out, "check_violations.csv", &violations)?;
    write_atomic(out, "eigen.csv", &eig)
}

fn cmd_check(cfg: &RunConfig, out: &Path) -> CliResult<i32> {
    let h = cfg.hierarchy()?;
    let cert = certify(cfg, &h)?;
    write_certification(out, &cert)?;
    Ok(if cert.passed() { EXIT_OK } else { EXIT_HYPOTHESIS })
}

fn cmd_solve(cfg: &RunConfig, out: &Path) -> CliResult<i32> {
    let c = cfg.constants.c;
    // λ > 0 only lowers the margin further, so this needs no assembly
    if c[0] + c[1] >= 1.0 {
        return Err(Failure::new(
            EXIT_HYPOTHESIS,
            format!(
                "coercivity hypothesis violated: c1 + c2 = {} >= 1 leaves a negative margin for every eigenvalue",
                c[0] + c[1]
            ),
        ));
    }
    let h = cfg.hierarchy()?;
    let cert = certify(cfg, &h)?;
    write_certification(out, &cert)?;
    if !cert.passed() && !cfg.solver.override_hypotheses {
        return Err(Failure::new(
            EXIT_HYPOTHESIS,
            "hypothesis check failed; set solver.override_hypotheses = true to solve anyway",
        ));
    }
    let spec = &cert.spec;
    let radius = cert.radius(&h)?;
    let opts = cfg.solve_options();
    let mut report = run_hierarchy(spec, &h, cfg.domain.levels, radius, &opts)?;
    report.lambda_estimates = cert.lambdas.clone();
    report.hypothesis_reports = cert.reports.clone();
    write_atomic(out, "solve_report.csv", &report.to_csv())?;
    for s in &report.levels {
        let space = P1Space::new(h.mesh(s.level())?);
        write_atomic(
            out,
            &format!("field_level{}.csv", s.level()),
            &space.field_csv(&s.state.u, &s.state.v)?,
        )?;
    }
    print!("{}", report.to_csv());
    println!("a-priori radius R = {radius}");
    let problems = invariant_problems(&report, opts.tol);
    for p in &problems {
        eprintln!("invariant violated: {p}");
    }
    Ok(if problems.is_empty() { EXIT_OK } else { EXIT_SOLVER })
}

/// Failure marker, ball, residual and energy-identity violations.
pub fn invariant_problems(report: &SolveReport, tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(f) = &report.failure {
        out.push(format!("level {} failed: {}", f.level, f.message));
    }
    for (s, gap) in report.levels.iter().zip(&report.energy_gap) {
        if !s.inside_ball {
            out.push(format!("level {}: pair norm {} exceeds R = {}", s.level(), s.pair_norm, s.radius));
        }
        if s.residual_linf > tol {
            out.push(format!("level {}: residual {} above tolerance", s.level(), s.residual_linf));
        }
        if *gap > 10.0 * tol {
            out.push(format!("level {}: energy identity off by {gap}", s.level()));
        }
    }
    out
}

fn cmd_probe(cfg: &RunConfig, out: &Path, mu: Option<f64>, equation: usize, points: usize) -> CliResult<i32> {
    if !(1..=2).contains(&equation) {
        return Err(Failure::new(EXIT_PARSE, format!("equation must be 1 or 2, got {equation}")));
    }
    if points < 2 {
        return Err(Failure::new(EXIT_PARSE, "probe needs at least 2 points"));
    }
    let i = equation - 1;
    let (p, q) = (cfg.problem.p()[i], cfg.problem.q()[i]);
    let mu = mu.unwrap_or(cfg.problem.mu[i]);
    let h = cfg.hierarchy()?;
    let space = P1Space::new(h.mesh(h.finest_level())?);
    let pi = std::f64::consts::PI;
    let f0 = space.interpolate(|x| (pi * x[0]).sin() * (pi * x[1]).sin());
    let root = probe_root(&space, &f0, p, q, mu);
    let centre = root.unwrap_or(1.0);
    let grid: Vec<f64> = (0..points)
        .map(|k| centre * 10f64.powf(-3.0 + 6.0 * k as f64 / (points - 1) as f64))
        .collect();
    let energy = probe_nonmonotonicity(&space, &f0, p, q, mu, &grid)?;
    let mut csv = String::from("t,energy\n");
    for (t, e) in &energy {
        let _ = writeln!(csv, "{t},{e}");
    }
    write_atomic(out, "probe.csv", &csv)?;
    let negative = energy.iter().any(|(_, e)| *e < 0.0);
    let positive = energy.iter().any(|(_, e)| *e > 0.0);
    match root {
        Some(t) => println!("closed-form root t* = {t}"),
        None => println!("no positive root for mu = {mu}"),
    }
    println!("sign change on grid: {}", negative && positive);
    Ok(EXIT_OK)
}
