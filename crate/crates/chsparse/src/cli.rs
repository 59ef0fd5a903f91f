//! Command-line front end: solve | optimize | sweep | check.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 config validation failure,
//! 3 verification-suite failure.

use crate::adjoint::solve_adjoint;
use crate::config::{ConfigError, RunConfig};
use crate::io;
use crate::io::SparsityRow;
use crate::optimizer::{kappa_sweep, minimize};
use crate::state::StateSolver;
use crate::verify::run_property_suites;
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SUITE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "chsparse",
    about = "Sparse optimal control of a viscous Cahn-Hilliard system (1D, logarithmic potential)"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration (required; see configs/default.toml).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Dotted-path config overrides, e.g. --set cost.kappa=0.01 (repeatable).
    #[arg(long = "set", global = true)]
    pub sets: Vec<String>,

    /// Keep every Nth time level in trajectory/adjoint CSVs.
    #[arg(long, global = true)]
    pub snapshot_stride: Option<usize>,

    /// Additionally emit two-column gnuplot profiles.
    #[arg(long, global = true, default_value_t = false)]
    pub profiles: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Forward solve with the configured control; exports the trajectory.
    Solve,
    /// Full optimization run.
    Optimize,
    /// κ sweep with warm starts.
    Sweep,
    /// Run the verification suites.
    Check,
}

fn load_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    // clap cannot mark global arguments required; enforce it here so the
    // omission maps onto the config-error exit code
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path, &cli.sets)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(stride) = cli.snapshot_stride {
        cfg.output.snapshot_stride = stride.max(1);
    }
    Ok(cfg)
}

fn persist_config(cfg: &RunConfig, out: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("resolved_config.toml"), cfg.to_toml_string())
}

fn cell_centers(spec: &crate::problem::ProblemSpec) -> Vec<f64> {
    (0..spec.grid.n_cells()).map(|i| spec.grid.x(i)).collect()
}

pub fn run(cli: &Cli) -> i32 {
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let spec = match cfg.to_problem_spec() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = persist_config(&cfg, &cli.out) {
        eprintln!("cannot write output directory: {e}");
        return EXIT_RUNTIME;
    }

    match cli.command {
        Command::Solve => cmd_solve(&cfg, &spec, cli),
        Command::Optimize => cmd_optimize(&cfg, &spec, cli),
        Command::Sweep => cmd_sweep(&cfg, &spec, cli),
        Command::Check => cmd_check(&cfg, &spec, cli),
    }
}

fn cmd_solve(cfg: &RunConfig, spec: &crate::problem::ProblemSpec, cli: &Cli) -> i32 {
    let u = cfg.control(spec);
    if !u.within_box(spec.bounds.lower, spec.bounds.upper) {
        eprintln!(
            "warning: control leaves the box [{}, {}]",
            spec.bounds.lower, spec.bounds.upper
        );
    }
    let solver = StateSolver::new(spec);
    let traj = match solver.solve(&u) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("forward solve failed: {e}");
            return EXIT_RUNTIME;
        }
    };
    let sep = traj.separation;
    let notes = vec![
        format!("phi_min={} phi_max={}", io::fmt(sep.phi_min), io::fmt(sep.phi_max)),
        format!("margin={}", io::fmt(sep.margin)),
        format!("max_mean_drift={}", io::fmt(sep.max_mean_drift)),
    ];
    let stride = cfg.output.snapshot_stride;
    if let Err(e) = io::write_trajectory_csv(&cli.out.join("trajectory.csv"), &traj, stride, &notes)
    {
        eprintln!("write failed: {e}");
        return EXIT_RUNTIME;
    }
    if cli.profiles {
        let xs = cell_centers(spec);
        let phi_t: Vec<f64> = traj.terminal_phi().values.clone();
        if let Err(e) = io::write_profile(&cli.out.join("profile_phi_final.dat"), &xs, &phi_t) {
            eprintln!("write failed: {e}");
            return EXIT_RUNTIME;
        }
    }
    println!(
        "solved {} steps: phi in [{:.6}, {:.6}], margin {:.3e}, max mean drift {:.3e}",
        spec.n_steps(),
        sep.phi_min,
        sep.phi_max,
        sep.margin,
        sep.max_mean_drift
    );
    EXIT_OK
}

fn cmd_optimize(cfg: &RunConfig, spec: &crate::problem::ProblemSpec, cli: &Cli) -> i32 {
    let opt_cfg = cfg.to_optimizer_config(spec);
    let report = match minimize(spec, &opt_cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("optimization failed: {e}");
            return EXIT_RUNTIME;
        }
    };
    let solver = StateSolver::new(spec);
    let final_state = match solver.solve(&report.control) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("final re-solve failed: {e}");
            return EXIT_RUNTIME;
        }
    };
    let adj = match solve_adjoint(&final_state, &spec.targets, &spec.weights, spec) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("final adjoint failed: {e}");
            return EXIT_RUNTIME;
        }
    };
    let stride = cfg.output.snapshot_stride;
    let row = SparsityRow {
        kappa: spec.weights.kappa,
        zero_fraction: report.sparsity.zero_fraction,
        violations_a: report.sparsity.violations_a,
        violations_b: report.sparsity.violations_b,
        j_total: report.cost.j_total,
        norm_u_l1: report.control.l1_norm(&spec.grid, spec.dt()),
    };
    let writes = [
        io::write_iterations_csv(&cli.out.join("iterations.csv"), &report.iterations),
        io::write_control_csv(&cli.out.join("control.csv"), &report.control),
        io::write_sparsity_csv(&cli.out.join("sparsity.csv"), &[row]),
        io::write_adjoint_csv(&cli.out.join("adjoint.csv"), &adj, stride),
        io::write_trajectory_csv(&cli.out.join("trajectory.csv"), &final_state, stride, &[]),
    ];
    for wres in writes {
        if let Err(e) = wres {
            eprintln!("write failed: {e}");
            return EXIT_RUNTIME;
        }
    }
    if cli.profiles {
        let xs = cell_centers(spec);
        let mid = report.control.slices.len() / 2;
        let profs = [
            ("profile_u_mid.dat", report.control.slices[mid].values.clone()),
            ("profile_phi_final.dat", final_state.terminal_phi().values.clone()),
            ("profile_r_mid.dat", adj.r[mid].values.clone()),
        ];
        for (name, ys) in profs {
            if let Err(e) = io::write_profile(&cli.out.join(name), &xs, &ys) {
                eprintln!("write failed: {e}");
                return EXIT_RUNTIME;
            }
        }
    }
    println!(
        "optimize: converged={} iterations={} J_total={:.8e} stat_res={:.3e} zero_fraction={:.4}",
        report.converged,
        report.iterations.len(),
        report.cost.j_total,
        report.stat_res,
        report.sparsity.zero_fraction
    );
    if report.converged {
        EXIT_OK
    } else {
        eprintln!("optimizer exhausted its iteration budget before reaching stat_tol");
        EXIT_RUNTIME
    }
}

fn cmd_sweep(cfg: &RunConfig, spec: &crate::problem::ProblemSpec, cli: &Cli) -> i32 {
    let opt_cfg = cfg.to_optimizer_config(spec);
    let table = match kappa_sweep(spec, &opt_cfg, &cfg.sweep.kappas) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("sweep failed: {e}");
            return EXIT_RUNTIME;
        }
    };
    if let Err(e) = io::write_sweep_csv(&cli.out.join("sweep.csv"), &table) {
        eprintln!("write failed: {e}");
        return EXIT_RUNTIME;
    }
    for row in &table.rows {
        println!(
            "kappa={:.6e} converged={} iters={} J={:.8e} zero_fraction={:.4} |u|_L1={:.6e}",
            row.kappa,
            row.converged,
            row.iterations,
            row.cost.j_total,
            row.sparsity.zero_fraction,
            row.norm_u_l1
        );
    }
    match table.smallest_zero_kappa {
        Some(k) => println!("smallest swept kappa with u* = 0: {k:.6e}"),
        None => println!("no swept kappa annihilated the control"),
    }
    EXIT_OK
}

fn cmd_check(cfg: &RunConfig, spec: &crate::problem::ProblemSpec, cli: &Cli) -> i32 {
    let opt_cfg = cfg.to_optimizer_config(spec);
    let oracle = match cfg.to_oracle_config() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let report = run_property_suites(spec, &opt_cfg, &oracle);
    if let Err(e) = io::write_suite_csv(&cli.out.join("suite_report.csv"), &report) {
        eprintln!("write failed: {e}");
        return EXIT_RUNTIME;
    }
    print!("{}", io::suite_text_summary(&report));
    if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_SUITE
    }
}
