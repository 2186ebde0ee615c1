//! Command-line pipeline: validate, solve, verify, simulate, bench and the
//! queue demo. Every run writes its artifacts under `--out`; failures print
//! one line of error JSON to stdout and return a nonzero exit status.
//!
//! Exit codes: 0 success, 1 internal or I/O error, 2 usage error,
//! 3 model rejected, 4 no convergence, 5 a requested check failed.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Once};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::dpi_solver::{
    uniformize_shared, value_iterate, verify_dpi, DpiReport, EquilibriumSolution, IterationConfig, SolutionFile,
};
use crate::error::Error;
use crate::evaluator::{exact_value, saddle_certificate, SaddleConfig, SaddleReport, StrategyProfile};
use crate::game_model::{validate_model, GameModel, ValidationReport};
use crate::models::{parse_model, parse_queue_spec, truncate_queue, validate_queue, QueueSpec};
use crate::report::{format_float, to_canonical_json};
use crate::simulator::{
    horizon_bias, mean_and_stderr, path_payoff, simulate_paths, simulate_payoffs, write_paths_csv, SimulationConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_REJECTED: i32 = 3;
pub const EXIT_NO_CONVERGENCE: i32 = 4;
pub const EXIT_CHECK_FAILED: i32 = 5;

/// Environment variable fixing the worker thread count.
pub const THREADS_ENV: &str = "STOPGAME_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "stopgame",
    version,
    about = "Solve zero-sum stochastic games with control and stopping"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model against the standing assumptions.
    Validate(ModelArgs),
    /// Compute the value, saddle-point strategies and stopping regions.
    Solve(SolveArgs),
    /// Check the dynamic-programming inequalities and the saddle property.
    Verify(VerifyArgs),
    /// Monte-Carlo estimate of the equilibrium payoff.
    Simulate(SimulateArgs),
    /// Wall time and iteration count of the queue across truncation levels.
    Bench(BenchArgs),
    /// Solve and verify the controlled queue.
    QueueDemo(SolveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model document (JSON).
    #[arg(long, conflicts_with = "queue_spec")]
    pub model: Option<PathBuf>,
    /// Queue parameter block (JSON); missing fields take the defaults.
    #[arg(long)]
    pub queue_spec: Option<PathBuf>,
    /// Overrides the queue truncation level.
    #[arg(long)]
    pub smax: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Artifact formats to write.
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["json", "csv"])]
    pub format: Vec<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Uniformization slack added to every exit rate.
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Seed for the saddle-point deviation sampler.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Solution document to check; solved afresh when absent.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Tolerance of the inequality checks.
    #[arg(long, default_value_t = 1e-7)]
    pub check_tol: f64,
    /// Tolerance of the deviation and best-response checks.
    #[arg(long, default_value_t = 1e-6)]
    pub saddle_tol: f64,
    /// Random deviations sampled per player.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Initial states; repeat or comma-separate.
    #[arg(long, value_delimiter = ',', default_values = ["0"])]
    pub initial: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest payoff bias allowed from the finite horizon.
    #[arg(long, default_value_t = crate::simulator::DEFAULT_BIAS)]
    pub bias: f64,
    /// Also write every path to `paths.csv`.
    #[arg(long)]
    pub dump_paths: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Truncation levels to solve.
    #[arg(long, value_delimiter = ',', default_values = ["25", "50", "100", "200"])]
    pub smax_grid: Vec<usize>,
}

/// A failure carrying its exit status.
#[derive(Debug)]
struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
    detail: serde_json::Value,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Rejected(_) => EXIT_REJECTED,
            Error::MaxIterExceeded { .. } | Error::MonotonicityViolation { .. } => EXIT_NO_CONVERGENCE,
            Error::Parse(_) | Error::Invalid(_) | Error::Dimension { .. } => EXIT_USAGE,
            _ => EXIT_ERROR,
        };
        let detail = match &e {
            Error::Rejected(v) => json!({ "violations": v }),
            _ => serde_json::Value::Null,
        };
        Failure {
            code,
            kind: e.kind(),
            message: e.to_string(),
            detail,
        }
    }
}

impl Failure {
    fn check(message: impl Into<String>, detail: serde_json::Value) -> Self {
        Failure {
            code: EXIT_CHECK_FAILED,
            kind: "CHECK_FAILED",
            message: message.into(),
            detail,
        }
    }
}

type Outcome = std::result::Result<Vec<PathBuf>, Failure>;

/// Parses `args` (program name first) and runs the pipeline.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    let out_dir = cli.command.out_dir().to_path_buf();
    match execute(&cli.command) {
        Ok(artifacts) => {
            let files: Vec<String> = artifacts.iter().map(|p| p.display().to_string()).collect();
            println!("{}", json!({ "status": "ok", "artifacts": files }));
            EXIT_OK
        }
        Err(f) => {
            let body = json!({
                "status": "error",
                "exit_code": f.code,
                "kind": f.kind,
                "message": f.message,
                "detail": f.detail,
            });
            let _ =
                fs::create_dir_all(&out_dir).and_then(|_| fs::write(out_dir.join("error.json"), format!("{body:#}\n")));
            println!("{body}");
            f.code
        }
    }
}

fn configure_threads() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
            // fails only if a pool already exists, in which case it stays
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    });
}

impl Command {
    fn model_args(&self) -> &ModelArgs {
        match self {
            Command::Validate(m) => m,
            Command::Solve(a) | Command::QueueDemo(a) => &a.model,
            Command::Verify(a) => &a.model,
            Command::Simulate(a) => &a.model,
            Command::Bench(a) => &a.model,
        }
    }

    fn out_dir(&self) -> &Path {
        &self.model_args().out
    }
}

fn execute(cmd: &Command) -> Outcome {
    let margs = cmd.model_args();
    fs::create_dir_all(&margs.out).map_err(Error::from)?;
    match cmd {
        Command::Validate(m) => cmd_validate(m),
        Command::Solve(a) => {
            let problem = Problem::load(&a.model, false)?;
            let sol = problem.solve(&a.solver)?;
            write_solution(&problem, &sol, &a.model)
        }
        Command::QueueDemo(a) => cmd_queue_demo(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

/// A validated model together with its norm weight.
struct Problem {
    model: Arc<GameModel>,
    report: ValidationReport,
}

impl Problem {
    fn load(args: &ModelArgs, default_queue: bool) -> std::result::Result<Self, Failure> {
        let (model, report) = load_unvalidated(args, default_queue)?;
        let report = report.into_result()?;
        Ok(Problem {
            model: Arc::new(model),
            report,
        })
    }

    fn iteration_config(&self, s: &SolverArgs) -> std::result::Result<IterationConfig, Failure> {
        if !(s.tol > 0.0) {
            return Err(Error::Invalid(format!("tol must be positive, got {}", s.tol)).into());
        }
        Ok(IterationConfig {
            tol: s.tol,
            max_iter: s.max_iter,
            weight: Some(self.report.weight()),
            ..IterationConfig::default()
        })
    }

    fn solve(&self, s: &SolverArgs) -> std::result::Result<EquilibriumSolution, Failure> {
        let um = uniformize_shared(self.model.clone(), s.theta)?;
        Ok(value_iterate(&um, &self.iteration_config(s)?)?)
    }

    fn solution(&self, s: &SolverArgs, path: Option<&Path>) -> std::result::Result<EquilibriumSolution, Failure> {
        match path {
            None => self.solve(s),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(Error::from)?;
                let file: SolutionFile =
                    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
                if file.u_star.len() != self.model.num_states() {
                    return Err(Error::Dimension {
                        what: "solution u_star",
                        expected: self.model.num_states(),
                        got: file.u_star.len(),
                    }
                    .into());
                }
                Ok(EquilibriumSolution::from_file(file, self.report.weight())?)
            }
        }
    }
}

fn queue_spec(args: &ModelArgs) -> std::result::Result<QueueSpec, Failure> {
    let mut spec = match &args.queue_spec {
        Some(p) => parse_queue_spec(&fs::read_to_string(p).map_err(Error::from)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?,
        None => QueueSpec::default(),
    };
    if let Some(s) = args.smax {
        spec.s_max = s;
    }
    Ok(spec)
}

fn load_unvalidated(
    args: &ModelArgs,
    default_queue: bool,
) -> std::result::Result<(GameModel, ValidationReport), Failure> {
    if let Some(path) = &args.model {
        let text = fs::read_to_string(path).map_err(Error::from)?;
        let model = parse_model(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let report = validate_model(&model, None);
        return Ok((model, report));
    }
    if args.queue_spec.is_none() && !default_queue {
        return Err(Error::Invalid("one of --model or --queue-spec is required".into()).into());
    }
    let model = truncate_queue(&queue_spec(args)?)?;
    let report = validate_queue(&model)?;
    Ok((model, report))
}

fn wants(args: &ModelArgs, f: Format) -> bool {
    args.format.contains(&f)
}

fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    value: &T,
    written: &mut Vec<PathBuf>,
) -> std::result::Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, to_canonical_json(value)?).map_err(Error::from)?;
    written.push(path);
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: String, written: &mut Vec<PathBuf>) -> std::result::Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(Error::from)?;
    written.push(path);
    Ok(())
}

fn cmd_validate(args: &ModelArgs) -> Outcome {
    let (_, report) = load_unvalidated(args, false)?;
    let mut written = Vec::new();
    write_json(&args.out, "validation.json", &report, &mut written)?;
    if report.is_valid() {
        Ok(written)
    } else {
        Err(Error::Rejected(report.violations).into())
    }
}

fn solution_csv(model: &GameModel, sol: &EquilibriumSolution) -> String {
    let mut header = vec![
        "i".to_string(),
        "u_star".into(),
        "psi1".into(),
        "psi2".into(),
        "classification".into(),
    ];
    header.extend(model.actions_p1().iter().map(|a| format!("phi_{a}")));
    header.extend(model.actions_p2().iter().map(|b| format!("psi_{b}")));
    let mut out = header.join(",") + "\n";
    for i in 0..model.num_states() {
        let mut row = vec![
            i.to_string(),
            format_float(sol.u_star.values[i]),
            format_float(model.psi1()[i]),
            format_float(model.psi2()[i]),
            sol.classification[i].to_string(),
        ];
        row.extend(sol.phi_star[i].iter().chain(&sol.psi_star[i]).map(|&p| format_float(p)));
        out += &row.join(",");
        out.push('\n');
    }
    out
}

fn plot_csv(model: &GameModel, sol: &EquilibriumSolution) -> String {
    let mut out = String::from("i,u_star,psi1,psi2\n");
    for i in 0..model.num_states() {
        out += &format!(
            "{i},{},{},{}\n",
            format_float(sol.u_star.values[i]),
            format_float(model.psi1()[i]),
            format_float(model.psi2()[i])
        );
    }
    out
}

fn write_solution(problem: &Problem, sol: &EquilibriumSolution, args: &ModelArgs) -> Outcome {
    let mut written = Vec::new();
    if wants(args, Format::Json) {
        write_json(&args.out, "solution.json", &sol.to_file(), &mut written)?;
    }
    if wants(args, Format::Csv) {
        write_text(
            &args.out,
            "solution.csv",
            solution_csv(&problem.model, sol),
            &mut written,
        )?;
        write_text(&args.out, "plot.csv", plot_csv(&problem.model, sol), &mut written)?;
    }
    Ok(written)
}

fn run_checks(
    problem: &Problem,
    sol: &EquilibriumSolution,
    theta: f64,
    check_tol: f64,
    saddle: &SaddleConfig,
) -> std::result::Result<(DpiReport, SaddleReport), Failure> {
    let um = uniformize_shared(problem.model.clone(), theta)?;
    let dpi = verify_dpi(&um, sol, check_tol)?;
    let saddle = saddle_certificate(&problem.model, sol, saddle)?;
    Ok((dpi, saddle))
}

fn check_outcome(dpi: &DpiReport, saddle: &SaddleReport, written: Vec<PathBuf>) -> Outcome {
    if dpi.passed() && saddle.passed() {
        return Ok(written);
    }
    let states: Vec<usize> = dpi.violations.iter().map(|v| v.state()).collect();
    Err(Failure::check(
        format!(
            "verification failed: {} inequality violations, saddle check {}",
            dpi.violations.len(),
            if saddle.passed() { "passed" } else { "failed" }
        ),
        json!({ "dpi_violation_states": states, "dpi_violations": dpi.violations, "saddle": saddle }),
    ))
}

fn cmd_verify(a: &VerifyArgs) -> Outcome {
    let problem = Problem::load(&a.model, false)?;
    let sol = problem.solution(&a.solver, a.solution.as_deref())?;
    let saddle_cfg = SaddleConfig {
        samples: a.samples,
        seed: a.seed,
        tol: a.saddle_tol,
        ..SaddleConfig::default()
    };
    let (dpi, saddle) = run_checks(&problem, &sol, a.solver.theta, a.check_tol, &saddle_cfg)?;
    let mut written = Vec::new();
    write_json(&a.model.out, "dpi_report.json", &dpi, &mut written)?;
    write_json(&a.model.out, "saddle_report.json", &saddle, &mut written)?;
    check_outcome(&dpi, &saddle, written)
}

fn cmd_queue_demo(a: &SolveArgs) -> Outcome {
    let problem = Problem::load(&a.model, true)?;
    let sol = problem.solve(&a.solver)?;
    let mut written = write_solution(&problem, &sol, &a.model)?;
    let saddle_cfg = SaddleConfig {
        seed: a.seed,
        ..SaddleConfig::default()
    };
    let (dpi, saddle) = run_checks(&problem, &sol, a.solver.theta, 1e-7, &saddle_cfg)?;
    write_json(&a.model.out, "dpi_report.json", &dpi, &mut written)?;
    write_json(&a.model.out, "saddle_report.json", &saddle, &mut written)?;
    check_outcome(&dpi, &saddle, written)
}

#[derive(Serialize)]
struct PayoffReport {
    method: &'static str,
    paths: usize,
    seed: u64,
    horizon: f64,
    horizon_bias_bound: f64,
    estimates: Vec<InitialEstimate>,
}

#[derive(Serialize)]
struct InitialEstimate {
    initial: usize,
    mean: f64,
    stderr: f64,
    ci95: [f64; 2],
    exact: f64,
    u_star: f64,
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome {
    if a.paths == 0 {
        return Err(Error::Invalid("paths must be at least 1".into()).into());
    }
    let problem = Problem::load(&a.model, false)?;
    let model = &*problem.model;
    if let Some(&bad) = a.initial.iter().find(|&&i| i >= model.num_states()) {
        return Err(Error::Invalid(format!("initial state {bad} outside 0..{}", model.num_states())).into());
    }
    let sol = problem.solution(&a.solver, a.solution.as_deref())?;
    let profile = StrategyProfile::from_equilibrium(&sol);
    let exact = exact_value(model, &profile)?;
    let cfg = SimulationConfig::with_bias(model, a.paths, a.seed, a.bias);

    let mut written = Vec::new();
    let mut estimates = Vec::with_capacity(a.initial.len());
    let mut dumped = Vec::new();
    for &i in &a.initial {
        let payoffs = if a.dump_paths {
            let paths = simulate_paths(model, &profile, &cfg, i)?;
            let payoffs = paths.iter().map(|p| path_payoff(model, p)).collect();
            dumped.extend(paths);
            payoffs
        } else {
            simulate_payoffs(model, &profile, &cfg, i)?
        };
        let (mean, stderr) = mean_and_stderr(&payoffs);
        estimates.push(InitialEstimate {
            initial: i,
            mean,
            stderr,
            ci95: [mean - 1.96 * stderr, mean + 1.96 * stderr],
            exact: exact.values[i],
            u_star: sol.u_star.values[i],
        });
    }
    let report = PayoffReport {
        method: "MONTE_CARLO",
        paths: a.paths,
        seed: a.seed,
        horizon: cfg.horizon_cap,
        horizon_bias_bound: horizon_bias(model, cfg.horizon_cap),
        estimates,
    };
    write_json(&a.model.out, "payoff.json", &report, &mut written)?;
    if a.dump_paths {
        let path = a.model.out.join("paths.csv");
        let file = fs::File::create(&path).map_err(Error::from)?;
        write_paths_csv(model, &dumped, std::io::BufWriter::new(file))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Serialize)]
struct BenchRow {
    s_max: usize,
    states: usize,
    iterations: usize,
    residual: f64,
    wall_seconds: f64,
}

fn cmd_bench(a: &BenchArgs) -> Outcome {
    if a.model.model.is_some() {
        return Err(Error::Invalid("bench runs over queue truncation levels; use --queue-spec".into()).into());
    }
    // fail on a bad spec before any solve
    queue_spec(&a.model)?;
    let mut rows = Vec::new();
    for &s_max in &a.smax_grid {
        let args = ModelArgs {
            smax: Some(s_max),
            ..a.model.clone()
        };
        let problem = Problem::load(&args, true)?;
        let start = Instant::now();
        let sol = problem.solve(&a.solver)?;
        rows.push(BenchRow {
            s_max,
            states: problem.model.num_states(),
            iterations: sol.iterations,
            residual: sol.residual,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    let mut written = Vec::new();
    if wants(&a.model, Format::Json) {
        write_json(&a.model.out, "bench.json", &rows, &mut written)?;
    }
    if wants(&a.model, Format::Csv) {
        let mut text = String::from("s_max,states,iterations,residual,wall_seconds\n");
        for r in &rows {
            text += &format!(
                "{},{},{},{},{}\n",
                r.s_max,
                r.states,
                r.iterations,
                format_float(r.residual),
                format_float(r.wall_seconds)
            );
        }
        write_text(&a.model.out, "bench.csv", text, &mut written)?;
    }
    Ok(written)
}
