//! Command-line front end: `solve`, `verify`, `experiment`, and `example`
//! subcommands over the estimator library.
//!
//! Exit codes: 0 success, 1 usage or input-file error, 2 numeric failure,
//! 3 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use grvml_core::baselines;
use grvml_core::builtin::{self, ExampleReport};
use grvml_core::error::Error;
use grvml_core::estimator::{self, FreeMassAllocation, SolverOptions};
use grvml_core::model::{self, MlSolution, ProblemInstance};
use grvml_core::montecarlo::{self, ExperimentConfig};
use grvml_core::verify;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "grvml",
    version,
    about = "Maximum-likelihood estimation for linear regression with a random measurement matrix"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AllocArg {
    FirstIndex,
    Uniform,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file (JSON).
    #[arg(long)]
    instance: PathBuf,
    /// Where to write the solution (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Bisection stop on |g(nu)|.
    #[arg(long)]
    tol_g: Option<f64>,
    /// Bisection stop on the relative bracket width.
    #[arg(long)]
    tol_nu: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Sign of free components, +1 or -1.
    #[arg(long, allow_hyphen_values = true)]
    free_sign: Option<f64>,
    /// Distribution of free null-space mass.
    #[arg(long, value_enum)]
    alloc: Option<AllocArg>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Instance file (JSON).
    #[arg(long)]
    instance: PathBuf,
    /// Check a stored solution file instead of a fresh solve.
    #[arg(long)]
    against: Option<PathBuf>,
    /// Box half-width for the grid cross-check (default 2(||H^+y|| + 1)).
    #[arg(long)]
    grid_halfwidth: Option<f64>,
    /// Lattice points per axis for the grid cross-check.
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
    /// KKT residual gate.
    #[arg(long, default_value_t = 1e-8)]
    tol_kkt: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// One of: nmse-hist, mse-vs-snr, kappa-sweep, mse-vs-m.
    #[arg(long)]
    preset: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    trials: usize,
    /// Output directory for the CSV and summary files.
    #[arg(long)]
    out: PathBuf,
    /// Variance ratio for the kappa-sweep preset.
    #[arg(long, default_value_t = 0.01)]
    kappa: f64,
    /// Comma-separated SNR grid override in dB.
    #[arg(long)]
    snr_grid: Option<String>,
    /// Comma-separated measurement-count override.
    #[arg(long)]
    m_grid: Option<String>,
}

#[derive(Args)]
struct ExampleArgs {
    /// Bundled example id, 1 to 5.
    #[arg(long, group = "which")]
    id: Option<usize>,
    /// Check the scalar lifting illustration instead.
    #[arg(long, group = "which")]
    fig1: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file and write the solution JSON.
    Solve(SolveArgs),
    /// Run the KKT check (and the grid cross-check when N <= 3).
    Verify(VerifyArgs),
    /// Run a Monte-Carlo preset and write CSV + summary JSON.
    Experiment(ExperimentArgs),
    /// Run a bundled reference instance and compare recorded outputs.
    Example(ExampleArgs),
}

fn main() -> ExitCode {
    // die quietly when the reader of a pipe goes away instead of panicking
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Example(args) => cmd_example(args),
    };
    ExitCode::from(code)
}

fn fmt_s(s: f64) -> String {
    if s == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{s}")
    }
}

fn load_instance_or_usage(path: &PathBuf) -> Result<ProblemInstance, u8> {
    model::load_instance(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_USAGE
    })
}

fn cmd_solve(args: SolveArgs) -> u8 {
    let instance = match load_instance_or_usage(&args.instance) {
        Ok(i) => i,
        Err(code) => return code,
    };
    let mut opts = SolverOptions::default();
    if let Some(v) = args.tol_g {
        opts.bisect_tol_g_abs = v;
    }
    if let Some(v) = args.tol_nu {
        opts.bisect_tol_nu_rel = v;
    }
    if let Some(v) = args.max_iter {
        opts.max_bisect_iters = v;
    }
    if let Some(v) = args.free_sign {
        opts.sign_convention_free = v;
    }
    if let Some(a) = args.alloc {
        opts.free_mass_allocation = match a {
            AllocArg::FirstIndex => FreeMassAllocation::FirstIndex,
            AllocArg::Uniform => FreeMassAllocation::Uniform,
        };
    }
    if let Err(e) = opts.validate() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let solution = match estimator::solve(&instance, &opts) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERIC;
        }
    };
    if let Err(e) = model::save_solution(&solution, &args.out) {
        eprintln!("error: {e}");
        return EXIT_NUMERIC;
    }
    println!(
        "case={:?} nu_star={} S={} objective={} multiplicity={:?}",
        solution.case_tag,
        solution.nu_star,
        fmt_s(solution.certificate.s_value),
        solution.objective_value,
        solution.multiplicity,
    );
    EXIT_OK
}

fn cmd_verify(args: VerifyArgs) -> u8 {
    let instance = match load_instance_or_usage(&args.instance) {
        Ok(i) => i,
        Err(code) => return code,
    };
    let solution: MlSolution = if let Some(path) = &args.against {
        match model::load_solution(path) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        }
    } else {
        match estimator::solve(&instance, &SolverOptions::default()) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_NUMERIC;
            }
        }
    };

    let kkt = match verify::kkt_check(&solution, &instance, args.tol_kkt) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERIC;
        }
    };

    // brute-force cross-check, only tractable in low dimension
    let mut grid_json = serde_json::json!({ "status": "skipped", "reason": "N > 3" });
    let mut grid_ok = true;
    if instance.num_unknowns() <= 3 {
        let halfwidth = args.grid_halfwidth.unwrap_or_else(|| {
            let ls_norm = baselines::ls(instance.mean_matrix(), instance.observation())
                .map(|x| x.norm())
                .unwrap_or(1.0);
            2.0 * (ls_norm + 1.0)
        });
        match verify::grid_minimize(&instance, halfwidth, args.grid_points) {
            Ok((_, grid_value)) => {
                let solver_value = estimator::neg_log_likelihood(&instance, &solution.x_hat);
                grid_ok = solver_value <= grid_value + 1e-4;
                grid_json = serde_json::json!({
                    "status": "ok",
                    "solver_value": solver_value,
                    "grid_value": grid_value,
                    "passed": grid_ok,
                });
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_NUMERIC;
            }
        }
    }

    let overall = kkt.passed && grid_ok;
    let report = serde_json::json!({
        "schema": "grvml.verify/1",
        "kkt": {
            "passed": kkt.passed,
            "tol": args.tol_kkt,
            "max_residual": kkt.max_residual(),
            "stationarity_z": kkt.stationarity_z,
            "primal_feas": kkt.primal_feas,
            "dual_feas_min": kkt.dual_feas_min,
            "comp_slack_max": kkt.comp_slack_max,
            "sign_alignment_ok": kkt.sign_alignment_ok,
        },
        "grid": grid_json,
        "passed": overall,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if overall {
        EXIT_OK
    } else {
        EXIT_VERIFY
    }
}

fn parse_grid_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, u8> {
    text.split(',')
        .map(|s| s.trim().parse::<T>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| {
            eprintln!("error: malformed grid list {text:?}");
            EXIT_USAGE
        })
}

fn cmd_experiment(args: ExperimentArgs) -> u8 {
    let mut config = match args.preset.as_str() {
        "nmse-hist" => ExperimentConfig::nmse_hist(args.seed, args.trials),
        "mse-vs-snr" => ExperimentConfig::mse_vs_snr(args.seed, args.trials),
        "kappa-sweep" => ExperimentConfig::kappa_sweep(args.seed, args.trials, args.kappa),
        "mse-vs-m" => ExperimentConfig::mse_vs_m(args.seed, args.trials),
        other => {
            eprintln!("error: unknown preset {other:?}");
            return EXIT_USAGE;
        }
    };
    if let Some(text) = &args.snr_grid {
        match parse_grid_list::<f64>(text) {
            Ok(grid) => config.snr_grid_db = grid,
            Err(code) => return code,
        }
    }
    if let Some(text) = &args.m_grid {
        match parse_grid_list::<usize>(text) {
            Ok(grid) => config.m_grid = grid,
            Err(code) => return code,
        }
    }

    let run = || montecarlo::run_experiment(&config);
    let result = match thread_cap() {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("thread pool");
            pool.install(run)
        }
        None => run(),
    };
    let result = match result {
        Ok(r) => r,
        Err(e @ Error::DomainViolation(_)) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERIC;
        }
    };

    let (csv_path, summary_path) = match montecarlo::write_outputs(&result, &args.out) {
        Ok(paths) => paths,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERIC;
        }
    };
    for g in &result.grid {
        let axis = match (g.point.snr_db, result.config.preset) {
            (Some(snr), _) => format!("snr={snr}dB"),
            (None, montecarlo::Preset::MseVsM) => format!("M={}", g.point.num_measurements),
            _ => format!("sigma_eps2={}", g.point.sigma_eps2),
        };
        let cells: Vec<String> = g
            .estimators
            .iter()
            .map(|e| format!("{}: mse={:.6e}", e.estimator.name(), e.mse))
            .collect();
        let crb = g
            .crb_trace
            .map(|c| format!(" crb={c:.6e}"))
            .unwrap_or_default();
        println!("point {} ({axis}): {}{}", g.point.index, cells.join(" "), crb);
    }
    println!(
        "wrote {} and {} ({} records, {} failures)",
        csv_path.display(),
        summary_path.display(),
        result.records.len(),
        result.failures.len()
    );
    if result.failure_rate() > 0.01 {
        eprintln!(
            "error: {:.2}% of trials failed numerically",
            100.0 * result.failure_rate()
        );
        return EXIT_NUMERIC;
    }
    EXIT_OK
}

/// Experiment parallelism cap from `GRVML_THREADS`.
fn thread_cap() -> Option<usize> {
    match std::env::var("GRVML_THREADS") {
        Ok(text) => match text.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Some(n),
            _ => {
                eprintln!("warning: ignoring invalid GRVML_THREADS={text:?}");
                None
            }
        },
        Err(_) => None,
    }
}

fn print_report(report: &ExampleReport) {
    println!("== {} ==", report.label);
    if let Some(case) = report.case_tag {
        println!("case={case:?} multiplicity={:?}", report.multiplicity.unwrap());
    }
    println!(
        "{:<24} {:>14} {:>14} {:>10}  status",
        "quantity", "expected", "computed", "|delta|"
    );
    for row in &report.rows {
        println!(
            "{:<24} {:>14} {:>14} {:>10.4}  {}",
            row.quantity,
            fmt_s(row.expected),
            format!("{:.6}", row.computed),
            row.delta,
            if row.pass { "ok" } else { "MISMATCH" }
        );
    }
}

fn cmd_example(args: ExampleArgs) -> u8 {
    let report = if args.fig1 {
        builtin::check_fig1()
    } else {
        let id = match args.id {
            Some(id) => id,
            None => {
                eprintln!("error: pass --id 1..5 or --fig1");
                return EXIT_USAGE;
            }
        };
        match builtin::check_example(id) {
            Ok(r) => r,
            Err(Error::DomainViolation(msg)) => {
                eprintln!("error: {msg}");
                return EXIT_USAGE;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_NUMERIC;
            }
        }
    };
    print_report(&report);
    if report.all_pass {
        EXIT_OK
    } else {
        EXIT_VERIFY
    }
}
