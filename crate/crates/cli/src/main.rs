use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use star_isac::experiment::{self, ExperimentPlanFile, SolverSettings};
use star_isac::scenario::{self, ScenarioConfigFile};
use star_isac::{verify, Error, SolverOptions, SystemVariant};

const EXIT_CONFIG: u8 = 2;
const EXIT_CAP: u8 = 3;

#[derive(Parser)]
#[command(name = "star-isac", version, about = "Secure STAR-RIS ISAC simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one realization and print a JSON summary.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        variant: Option<SystemVariant>,
        /// Channel realization seed; also seeds the solver.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the per-iteration convergence trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a Monte-Carlo sweep plan.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the full-size scenario and realization count as defaults.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Time inner iterations across metasurface sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "128,256,512,1024")]
        ns: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the gradient, projection, beamformer, tau and toy-oracle checks.
    Check {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json { .. } => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

/// Scenario file with an optional `solver` object of solver overrides.
fn load_solve_config(path: &Path) -> Result<(ScenarioConfigFile, SolverOptions), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Failure::Config(format!("{}: expected a JSON object", path.display())))?;
    let settings: SolverSettings = match obj.remove("solver") {
        Some(s) => serde_json::from_value(s).map_err(|e| Failure::Config(format!("solver section: {e}")))?,
        None => SolverSettings::default(),
    };
    let file: ScenarioConfigFile =
        serde_json::from_value(value).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok((file, settings.apply(SolverOptions::default())))
}

fn solve(
    config: &Path,
    variant: Option<SystemVariant>,
    seed: Option<u64>,
    trace: Option<&Path>,
) -> Result<u8, Failure> {
    let (file, mut opts) = load_solve_config(config)?;
    let mut config = file.into_config();
    if let Some(v) = variant {
        config.system_variant = v;
    }
    let seed = seed.unwrap_or(config.rng_seed);
    config.rng_seed = seed;
    config.validate()?;
    opts.solver_seed = seed;
    opts.validate()?;

    let (_, channels) = scenario::realize(&config, seed)?;
    let started = std::time::Instant::now();
    let sol = star_isac::solve_variant(&channels, &config, &opts)?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    if let Some(path) = trace {
        sol.trace.write_csv_file(path)?;
    }
    let summary = json!({
        "variant": sol.variant.as_str(),
        "seed": seed,
        "assr_nats": sol.sum_secrecy_rate,
        "assr_bits": sol.sum_secrecy_rate / std::f64::consts::LN_2,
        "assr_clamped_nats": sol.clamped_sum_secrecy_rate,
        "secrecy_rates": sol.secrecy_rates,
        "augmented": sol.augmented,
        "relative_gap": sol.relative_gap(),
        "sensing_rates": sol.sensing_rates,
        "sensing_threshold": config.sensing_rate_threshold(),
        "total_power": sol.covariances.total_trace(),
        "p_max": config.p_max,
        "converged": sol.converged,
        "inner_iterations": sol.inner_iterations,
        "outer_iterations": sol.outer_iterations,
        "wall_ms": wall_ms,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    if sol.converged {
        Ok(0)
    } else {
        eprintln!("solver stopped at its iteration cap before converging");
        Ok(EXIT_CAP)
    }
}

fn sweep(plan: &Path, out: &Path, paper_scale: bool, workers: Option<usize>) -> Result<u8, Failure> {
    let plan = ExperimentPlanFile::from_json_file(plan)?.resolve(paper_scale)?;
    let rows = match workers {
        Some(n) => experiment::run_experiment_with_workers(&plan, n)?,
        None => experiment::run_experiment(&plan)?,
    };
    let written = experiment::emit_results(&rows, None, out)?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    eprintln!("{} rows, {} failed runs", rows.len(), failures);
    Ok(0)
}

fn bench(ns: &[usize], out: &Path, iterations: usize, seed: u64) -> Result<u8, Failure> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(Failure::Config("--ns needs positive metasurface sizes".into()));
    }
    let base = experiment::bench_scale_file();
    let table = experiment::timing_probe(&base, ns, iterations, seed)?;
    let text = serde_json::to_string_pretty(&table).expect("table serializes");
    std::fs::write(out, text + "\n").map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    for p in &table.points {
        println!("N_S={:<6} median {:>12.0} ns/iter", p.n_ris_elements, p.median_ns);
    }
    match table.slope {
        Some(s) => println!("log-log slope {s:.3}"),
        None => println!("log-log slope absent (fewer than two sizes)"),
    }
    Ok(0)
}

fn check(seed: u64) -> Result<u8, Failure> {
    let outcomes = verify::run_all_checks(seed)?;
    let mut failed = 0;
    for o in &outcomes {
        println!("[{}] {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.passed);
    }
    Ok(u8::from(failed > 0))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve {
            config,
            variant,
            seed,
            trace,
        } => solve(config, *variant, *seed, trace.as_deref()),
        Command::Sweep {
            plan,
            out,
            paper_scale,
            workers,
        } => sweep(plan, out, *paper_scale, *workers),
        Command::Bench {
            ns,
            out,
            iterations,
            seed,
        } => bench(ns, out, *iterations, *seed),
        Command::Check { seed } => check(*seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
