//! Experiment harness: plan rolling trajectories, validate them, roll
//! them out on the simulated plant, and run seeded Monte-Carlo batches.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 solver or
//! plan non-convergence, 3 internal invariant failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rollkit::config::ExperimentConfig;
use rollkit::io;
use rollkit::sim::{run_batch, run_trial, TrialMode};
use rollkit::trajopt::{build_problem, solve, validate_trajectory};

#[derive(Parser)]
#[command(
    name = "rollkit",
    about = "Plan, simulate, and evaluate two-finger in-hand rolling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config and the ROLLKIT_OUT_DIR
    /// environment variable.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the trajectory optimization and write the reference plan.
    Plan {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-validate a plan file against the configuration.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Plan CSV produced by `plan`.
        #[arg(long)]
        plan: PathBuf,
    },
    /// Execute a plan on the simulated plant and write traces.
    Rollout {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        plan: PathBuf,
        /// Controller mode: open-loop | force.
        #[arg(long)]
        mode: String,
        /// Trial seed (perturbations and sensor noise).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Seeded Monte-Carlo comparison of both controller modes.
    Batch {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        plan: PathBuf,
        /// Trials per mode; defaults to the config value.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Write the bundled nominal configuration to a file.
    InitConfig {
        /// Destination path.
        #[arg(long, default_value = "nominal.toml")]
        path: PathBuf,
    },
}

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_NONCONVERGENCE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Plan { common } => cmd_plan(&common),
        Command::Validate { common, plan } => cmd_validate(&common, &plan),
        Command::Rollout {
            common,
            plan,
            mode,
            seed,
        } => cmd_rollout(&common, &plan, &mode, seed),
        Command::Batch {
            common,
            plan,
            trials,
        } => cmd_batch(&common, &plan, trials),
        Command::InitConfig { path } => cmd_init_config(&path),
    };
    ExitCode::from(code)
}

fn load_config(common: &CommonArgs) -> Result<(ExperimentConfig, PathBuf), u8> {
    let config = match ExperimentConfig::from_path(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return Err(EXIT_USAGE);
        }
    };
    let out_dir = common
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("ROLLKIT_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    Ok((config, out_dir))
}

fn cmd_plan(common: &CommonArgs) -> u8 {
    let (config, out_dir) = match load_config(common) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let nlp = match build_problem(&config) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("problem construction failed: {e}");
            return EXIT_USAGE;
        }
    };
    let z0 = nlp.initial_guess();
    let started = std::time::Instant::now();
    let mut trajectory = match solve(&nlp, &z0) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("internal solver failure: {e}");
            return EXIT_INTERNAL;
        }
    };
    let elapsed = started.elapsed();
    let validation = validate_trajectory(&trajectory, &config);
    trajectory.report.max_constraint_violation = validation.max_violation;

    let traj_path = out_dir.join("trajectory.csv");
    let report_path = out_dir.join("plan_report.json");
    if let Err(e) = io::write_trajectory_csv(&traj_path, &trajectory)
        .and_then(|_| io::write_plan_report(&report_path, &trajectory, &validation))
    {
        eprintln!("write failed: {e}");
        return EXIT_INTERNAL;
    }
    println!(
        "plan: {} in {:.2}s, cost {:.6e}, max violation {:.3e}, min friction margin {:.3e}",
        if trajectory.report.converged {
            "converged"
        } else {
            "did NOT converge"
        },
        elapsed.as_secs_f64(),
        trajectory.report.cost,
        validation.max_violation,
        validation.min_friction_margin,
    );
    println!("wrote {} and {}", traj_path.display(), report_path.display());
    if trajectory.report.converged {
        EXIT_OK
    } else {
        EXIT_NONCONVERGENCE
    }
}

fn cmd_validate(common: &CommonArgs, plan: &Path) -> u8 {
    let (config, _) = match load_config(common) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let trajectory = match io::read_trajectory_csv(plan, &config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("plan load failed: {e}");
            return EXIT_USAGE;
        }
    };
    let report = validate_trajectory(&trajectory, &config);
    println!(
        "validate: {} steps, max violation {:.3e}, min friction margin {:.3e}, max attachment error {:.3e}",
        report.steps, report.max_violation, report.min_friction_margin, report.max_attachment_error
    );
    let tol = config.trajopt.constraint_tolerance;
    if report.max_violation <= tol && report.min_friction_margin >= -tol {
        EXIT_OK
    } else {
        EXIT_NONCONVERGENCE
    }
}

fn load_validated_plan(
    config: &ExperimentConfig,
    plan: &Path,
) -> Result<rollkit::trajopt::Trajectory, u8> {
    let mut trajectory = match io::read_trajectory_csv(plan, config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("plan load failed: {e}");
            return Err(EXIT_USAGE);
        }
    };
    let report = validate_trajectory(&trajectory, config);
    trajectory.report.max_constraint_violation = report.max_violation;
    // A stale or corrupted plan must not silently drive the plant.
    let tol = 100.0 * config.trajopt.constraint_tolerance;
    if report.max_violation > tol {
        eprintln!(
            "plan does not validate: max violation {:.3e} exceeds {:.1e}",
            report.max_violation, tol
        );
        return Err(EXIT_NONCONVERGENCE);
    }
    Ok(trajectory)
}

fn cmd_rollout(common: &CommonArgs, plan: &Path, mode: &str, seed: u64) -> u8 {
    let (config, out_dir) = match load_config(common) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let mode: TrialMode = match mode.parse() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("usage error: {e}");
            return EXIT_USAGE;
        }
    };
    let trajectory = match load_validated_plan(&config, plan) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let result = match run_trial(&config, &trajectory, mode, seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("trial failed: {e}");
            return EXIT_INTERNAL;
        }
    };
    let dir = out_dir.join(format!("rollout_{mode}_{seed}"));
    if let Err(e) = io::write_rollout_traces(&dir, &result, config.control.f_des) {
        eprintln!("write failed: {e}");
        return EXIT_INTERNAL;
    }
    println!(
        "rollout [{mode}, seed {seed}]: success={} final |theta - goal| = {:.4} rad, survived {}/{} ticks, theta RMSE {:.4}",
        result.success,
        result.final_theta_error,
        result.steps_survived,
        result.total_ticks,
        result.theta_rmse
    );
    println!("wrote traces under {}", dir.display());
    EXIT_OK
}

fn cmd_batch(common: &CommonArgs, plan: &Path, trials: Option<usize>) -> u8 {
    let (config, out_dir) = match load_config(common) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let trials = trials.unwrap_or(config.sim.trials);
    if trials == 0 {
        eprintln!("usage error: --trials must be at least 1");
        return EXIT_USAGE;
    }
    let trajectory = match load_validated_plan(&config, plan) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let (results, summaries) = match run_batch(&config, &trajectory, trials) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("batch failed: {e}");
            return EXIT_INTERNAL;
        }
    };
    if let Err(e) = io::write_batch_csv(&out_dir.join("trials.csv"), &results).and_then(|_| {
        io::write_batch_report(
            &out_dir.join("batch_report.json"),
            &io::BatchReport {
                trials_per_mode: trials,
                summaries: summaries.clone(),
            },
        )
    }) {
        eprintln!("write failed: {e}");
        return EXIT_INTERNAL;
    }
    // Per-trial traces.
    for r in &results {
        let dir = out_dir.join("trials").join(format!("{}_{}", r.mode, r.seed));
        if let Err(e) = io::write_rollout_traces(&dir, r, config.control.f_des) {
            eprintln!("write failed: {e}");
            return EXIT_INTERNAL;
        }
    }
    println!("mode       trials  success  drops  mean|dtheta|  drop-step histogram");
    for s in &summaries {
        println!(
            "{:<10} {:>6}  {:>6}  {:>5}  {:>11.4}  {:?}",
            s.mode.to_string(),
            s.trials,
            s.successes,
            s.drops,
            s.mean_abs_theta_error,
            s.drop_step_histogram
        );
    }
    println!(
        "wrote {} and {}",
        out_dir.join("trials.csv").display(),
        out_dir.join("batch_report.json").display()
    );
    EXIT_OK
}

fn cmd_init_config(path: &Path) -> u8 {
    if let Err(e) = std::fs::write(path, rollkit::config::NOMINAL_TOML) {
        eprintln!("write failed: {e}");
        return EXIT_INTERNAL;
    }
    println!("wrote {}", path.display());
    EXIT_OK
}
