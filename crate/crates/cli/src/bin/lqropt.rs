use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lqropt_cli::experiment::{DARE_MAX_ITER, ExitStatus};
use lqropt_cli::report::num;
use lqropt_cli::{load_config, paper_sec5_config, run_experiment, run_property_suite, write_outputs, ExperimentConfig};
use lqropt_core::dare::DARE_RESIDUAL_TOL;
use lqropt_core::matlin::lambda_min;
use lqropt_core::{classify_gain, evaluate_gain, solve_dare, Error, Mat};

#[derive(Parser)]
#[command(name = "lqropt", version, about = "Policy optimization for indefinite discrete-time LQR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the methods of a JSON config and write traces plus a summary
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the built-in 5-state benchmark (Sigma = I, K0 = 0)
    PaperSec5 {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check every invariant on random certified instances
    PropSuite {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve and certify the Riccati equation of a config, seeded at its K0
    Dare { config: PathBuf },
}

fn exit(status: ExitStatus) -> ExitCode {
    ExitCode::from(status.code() as u8)
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    load_config(path).map_err(|e| {
        eprintln!("{e}");
        exit(ExitStatus::Validation)
    })
}

fn experiment(mut cfg: ExperimentConfig, out: PathBuf) -> ExitCode {
    cfg.output_dir = out;
    let report = run_experiment(&cfg);
    if report.status == ExitStatus::Validation {
        for r in &report.reasons {
            eprintln!("{r}");
        }
        return exit(report.status);
    }
    match write_outputs(&report, &cfg.output_dir) {
        Ok(files) => {
            print!("{}", report.summary);
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("cannot write to {}: {e}", cfg.output_dir.display());
            return ExitCode::FAILURE;
        }
    }
    for r in &report.reasons {
        eprintln!("failed check: {r}");
    }
    exit(report.status)
}

fn prop_suite(seed: u64, count: usize, out: PathBuf) -> ExitCode {
    if count == 0 {
        eprintln!("ValidationError: field `count`: must be at least 1");
        return exit(ExitStatus::Validation);
    }
    let report = run_property_suite(seed, count);
    print!("{}", report.table());
    let path = out.join("prop_suite.csv");
    if let Err(e) = std::fs::create_dir_all(&out).and_then(|_| std::fs::write(&path, report.csv())) {
        eprintln!("cannot write {}: {e}", path.display());
        return ExitCode::FAILURE;
    }
    println!("wrote {}", path.display());
    if report.passed() {
        exit(ExitStatus::Success)
    } else {
        exit(ExitStatus::InvariantViolation)
    }
}

fn print_matrix(name: &str, m: &Mat) {
    println!("{name} =");
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
        println!("  [{}]", cells.join(", "));
    }
}

fn dare(cfg: ExperimentConfig) -> ExitCode {
    let p = &cfg.instance;
    let k0 = match classify_gain(p, &cfg.k0) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("K0: {e}");
            return exit(ExitStatus::Validation);
        }
    };
    let sol = match solve_dare(p, &k0, cfg.dare_tol, DARE_MAX_ITER) {
        Ok(s) => s,
        Err(e @ Error::NoStabilizingSeed { .. }) => {
            eprintln!("{e}");
            return exit(ExitStatus::Validation);
        }
        Err(e) => {
            println!("certificate: FAILED");
            eprintln!("{e}");
            return exit(ExitStatus::ConvergenceFailure);
        }
    };
    println!("certificate: passed");
    println!("iterations: {}", sol.iterations);
    println!(
        "riccati residual: {} (bound {})",
        num(sol.residual),
        num(DARE_RESIDUAL_TOL * (1.0 + sol.xstar.norm()))
    );
    match lambda_min(&sol.hstar) {
        Ok(v) => println!("lambda_1(R + B'X*B): {}", num(v)),
        Err(e) => println!("lambda_1(R + B'X*B): {e}"),
    }
    println!("rho(A - B K*): {}", num(sol.rho_star));
    if let Ok(b) = evaluate_gain(p, &sol.kstar) {
        println!("||N(K*)||_F: {}", num(b.n.norm()));
    }
    println!("f(K*): {}", num(sol.cost(p)));
    print_matrix("X*", &sol.xstar);
    print_matrix("K*", &sol.kstar);
    exit(ExitStatus::Success)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out } => match load(&config) {
            Ok(cfg) => experiment(cfg, out),
            Err(code) => code,
        },
        Command::PaperSec5 { out } => experiment(paper_sec5_config(), out),
        Command::PropSuite { seed, count, out } => prop_suite(seed, count, out),
        Command::Dare { config } => match load(&config) {
            Ok(cfg) => dare(cfg),
            Err(code) => code,
        },
    }
}
