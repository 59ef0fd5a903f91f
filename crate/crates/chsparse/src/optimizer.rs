//! Proximal-gradient solver for the reduced problem, κ-sweep driver, and
//! the sampled second-order curvature check.
//!
//! The update u⁺ = clip(soft(u - α(r + b3·u), ακ)) has the pointwise
//! projection formula of the first-order optimality system as its fixed
//! points, so the stationarity residual ‖u - Prox(u - α g)‖∞/α (measured at
//! the fixed probe step α0) doubles as the optimality certificate.

use crate::adjoint::{solve_adjoint, AdjointTrajectory};
use crate::grid::Field;
use crate::objective::{
    evaluate_cost, hessian_form_with_xi, prox_control, reduced_gradient, sparsity_report,
    stationarity_residual, CostBreakdown, ObjectiveError, SparsityReport,
};
use crate::problem::{Control, ProblemSpec};
use crate::sensitivity::SensitivitySolver;
use crate::state::{SolverError, StateSolver, StateTrajectory};
use crate::verify::{fd_second_difference, OracleConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Declared-zero threshold for controls produced by the prox map.
pub const TOL_U: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("line-search step underflowed below 1e-12 at iteration {iter}")]
    StepUnderflow { iter: usize },
    #[error("optimizer configuration invalid: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Step, line-search, and stopping parameters.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Initial and maximal step; also the probe step of the stationarity
    /// residual. 1/b3 makes the pure-quadratic case converge in one step.
    pub alpha0: f64,
    pub armijo_factor: f64,
    pub armijo_sigma: f64,
    pub max_iters: usize,
    pub stat_tol: f64,
    pub u_init: Control,
}

impl OptimizerConfig {
    pub fn for_spec(spec: &ProblemSpec) -> Self {
        Self {
            alpha0: 1.0 / spec.weights.b3,
            armijo_factor: 0.5,
            armijo_sigma: 1e-4,
            max_iters: 2000,
            stat_tol: 1e-8,
            u_init: Control::zeros(spec.n_steps(), spec.grid.n_cells()),
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !(self.alpha0 > 0.0) {
            return Err(OptimizerError::BadConfig(format!("alpha0 must be > 0, got {}", self.alpha0)));
        }
        if !(self.armijo_factor > 0.0 && self.armijo_factor < 1.0) {
            return Err(OptimizerError::BadConfig(format!(
                "armijo factor must be in (0,1), got {}",
                self.armijo_factor
            )));
        }
        if !(self.armijo_sigma > 0.0) || !(self.stat_tol > 0.0) {
            return Err(OptimizerError::BadConfig(
                "armijo sigma and stat_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One accepted iteration of the descent loop.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iter: usize,
    pub j_total: f64,
    pub j_smooth: f64,
    pub g_l1: f64,
    pub stat_res: f64,
    pub alpha: f64,
    pub backtracks: usize,
}

/// Full outcome of one optimization run.
#[derive(Debug, Clone)]
pub struct OptimizerReport {
    pub iterations: Vec<IterationRecord>,
    pub control: Control,
    pub cost: CostBreakdown,
    pub stat_res: f64,
    pub sparsity: SparsityReport,
    pub converged: bool,
}

impl OptimizerReport {
    /// All entries at or below the declared-zero threshold.
    pub fn control_is_zero(&self) -> bool {
        self.control.inf_norm() <= TOL_U
    }
}

/// Proximal-gradient descent with Armijo backtracking on the full
/// nonsmooth objective.
pub fn minimize(spec: &ProblemSpec, cfg: &OptimizerConfig) -> Result<OptimizerReport, OptimizerError> {
    cfg.validate()?;
    let weights = &spec.weights;
    let bounds = &spec.bounds;
    let solver = StateSolver::new(spec);
    let dt = spec.dt();

    let mut u = cfg.u_init.project_box(bounds.lower, bounds.upper);
    let initial_state = solver.solve(&u)?;
    let mut cost = evaluate_cost(&initial_state, &u, &spec.targets, weights, &spec.grid, dt)?;
    let mut adjoint = solve_adjoint(&initial_state, &spec.targets, weights, spec)?;
    drop(initial_state);

    let mut alpha = cfg.alpha0;
    let mut records = Vec::new();
    // previous accepted iterate and its gradient, for the BB step estimate
    let mut prev: Option<(Control, Control)> = None;

    'outer: for iter in 0..cfg.max_iters {
        let g = reduced_gradient(&u, &adjoint, weights);
        let stat = stationarity_residual(&u, &g, cfg.alpha0, weights, bounds);
        if stat <= cfg.stat_tol {
            records.push(IterationRecord {
                iter,
                j_total: cost.j_total,
                j_smooth: cost.j_smooth,
                g_l1: cost.g_l1,
                stat_res: stat,
                alpha,
                backtracks: 0,
            });
            break;
        }

        // Barzilai-Borwein trial step <s,s>/<s,y>: tracks the curvature the
        // tracking term adds on top of b3, which a fixed 1/b3 step cannot
        // see (threshold-straddling cells cycle under an overlong step,
        // and the few stiff smooth modes carry curvature orders of
        // magnitude above b3)
        if let Some((u_prev, g_prev)) = &prev {
            let s = u.add_scaled(u_prev, -1.0);
            let y = g.add_scaled(g_prev, -1.0);
            let sy = s.inner(&y, &spec.grid, dt);
            let ss = s.inner(&s, &spec.grid, dt);
            alpha = if sy > 0.0 && ss > 0.0 {
                (ss / sy).clamp(1e-6 * cfg.alpha0, cfg.alpha0)
            } else {
                cfg.alpha0
            };
        }
        prev = Some((u.clone(), g.clone()));

        // near the optimum the genuine decrease per step falls below what a
        // J evaluation can resolve; below that floor acceptance switches to
        // requiring progress in the prox fixed-point residual instead
        let noise = 256.0 * f64::EPSILON * (1.0 + cost.j_total.abs());
        let mut backtracks = 0usize;
        let mut solver_failures = 0usize;
        loop {
            if alpha < 1e-12 {
                if solver_failures > 0 {
                    return Err(OptimizerError::StepUnderflow { iter });
                }
                // cannot make resolvable progress; the closing residual
                // check decides whether this counts as converged
                break 'outer;
            }
            let trial = prox_control(&u, &g, alpha, weights, bounds);
            let diff = trial.add_scaled(&u, -1.0);
            let diff_sq = diff.inner(&diff, &spec.grid, dt);
            if diff_sq == 0.0 {
                // the prox step rounds to u itself; no smaller step moves
                break 'outer;
            }
            let trial_state = match solver.solve(&trial) {
                Ok(s) => s,
                Err(_) => {
                    // trial rejected, step halved
                    alpha *= cfg.armijo_factor;
                    backtracks += 1;
                    solver_failures += 1;
                    continue;
                }
            };
            let trial_cost =
                evaluate_cost(&trial_state, &trial, &spec.targets, weights, &spec.grid, dt)?;
            let required = cfg.armijo_sigma / alpha * diff_sq;
            if trial_cost.j_total <= cost.j_total - required {
                adjoint = solve_adjoint(&trial_state, &spec.targets, weights, spec)?;
                u = trial;
                cost = trial_cost;
                break;
            }
            if required <= noise && trial_cost.j_total <= cost.j_total + noise {
                // noise-floor regime: accept only on strict residual progress
                let trial_adjoint = solve_adjoint(&trial_state, &spec.targets, weights, spec)?;
                let trial_g = reduced_gradient(&trial, &trial_adjoint, weights);
                let trial_stat =
                    stationarity_residual(&trial, &trial_g, cfg.alpha0, weights, bounds);
                if trial_stat < stat {
                    u = trial;
                    cost = trial_cost;
                    adjoint = trial_adjoint;
                    break;
                }
            }
            alpha *= cfg.armijo_factor;
            backtracks += 1;
        }
        records.push(IterationRecord {
            iter,
            j_total: cost.j_total,
            j_smooth: cost.j_smooth,
            g_l1: cost.g_l1,
            stat_res: stat,
            alpha,
            backtracks,
        });
    }

    // convergence is certified by the fixed-point residual of the final
    // iterate alone
    let g = reduced_gradient(&u, &adjoint, weights);
    let final_stat = stationarity_residual(&u, &g, cfg.alpha0, weights, bounds);
    let converged = final_stat <= cfg.stat_tol;

    let delta = 10.0 * cfg.stat_tol / weights.b3;
    let sparsity = sparsity_report(&u, &adjoint.r_control(), weights, TOL_U, delta, bounds);
    Ok(OptimizerReport {
        iterations: records,
        control: u,
        cost,
        stat_res: final_stat,
        sparsity,
        converged,
    })
}

/// One row of the κ-sweep table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub kappa: f64,
    pub converged: bool,
    pub iterations: usize,
    pub cost: CostBreakdown,
    pub stat_res: f64,
    pub sparsity: SparsityReport,
    pub norm_u_l1: f64,
    pub annihilated: bool,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Smallest swept κ whose optimal control is identically zero.
    pub smallest_zero_kappa: Option<f64>,
}

/// Runs the optimizer over an ascending κ list, warm-starting each run from
/// the previous solution.
pub fn kappa_sweep(
    spec: &ProblemSpec,
    cfg: &OptimizerConfig,
    kappas: &[f64],
) -> Result<SweepTable, OptimizerError> {
    if kappas.windows(2).any(|w| w[0] > w[1]) {
        return Err(OptimizerError::BadConfig("kappa list must be ascending".into()));
    }
    let mut rows = Vec::new();
    let mut warm = cfg.u_init.clone();
    for &kappa in kappas {
        let mut run_spec = spec.clone();
        run_spec.weights.kappa = kappa;
        let run_cfg = OptimizerConfig { u_init: warm.clone(), ..cfg.clone() };
        let report = minimize(&run_spec, &run_cfg)?;
        warm = report.control.clone();
        rows.push(SweepRow {
            kappa,
            converged: report.converged,
            iterations: report.iterations.len(),
            cost: report.cost,
            stat_res: report.stat_res,
            sparsity: report.sparsity,
            norm_u_l1: report.control.l1_norm(&spec.grid, spec.dt()),
            annihilated: report.control_is_zero(),
        });
    }
    let smallest_zero_kappa = rows.iter().find(|r| r.annihilated).map(|r| r.kappa);
    Ok(SweepTable { rows, smallest_zero_kappa })
}

/// Per-direction outcome of the sampled curvature check.
#[derive(Debug, Clone, Copy)]
pub struct DirectionRecord {
    /// Fraction of points the cone projection left free (nonzero).
    pub cone_fraction: f64,
    /// Ĵ''(u*)[v, v] on the normalized projected direction.
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GrowthProbe {
    pub scale: f64,
    pub j_probe: f64,
    pub j_star: f64,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct SecondOrderReport {
    pub min_curvature: Option<f64>,
    pub directions: Vec<DirectionRecord>,
    pub skipped: usize,
    /// (quadratic form, FD second difference) pairs for the cross-checked
    /// directions.
    pub fd_checks: Vec<(f64, f64)>,
    pub growth_probes: Vec<GrowthProbe>,
}

/// Samples random directions, projects them onto the discrete critical-cone
/// approximation, and evaluates the second-order quadratic form on each.
/// Three kept directions are cross-checked against the FD second-difference
/// oracle, and quadratic-growth probes are run at the end.
#[allow(clippy::too_many_arguments)]
pub fn second_order_check(
    u_star: &Control,
    base: &StateTrajectory,
    adjoint: &AdjointTrajectory,
    spec: &ProblemSpec,
    n_dirs: usize,
    seed: u64,
    stat_tol: f64,
    oracle: &OracleConfig,
) -> Result<SecondOrderReport, OptimizerError> {
    let weights = &spec.weights;
    let bounds = &spec.bounds;
    let delta = 10.0 * stat_tol / weights.b3;
    let r = adjoint.r_control();
    let n_steps = spec.n_steps();
    let n_cells = spec.grid.n_cells();
    let dt = spec.dt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sens = SensitivitySolver::new(spec, base);

    let mut directions = Vec::new();
    let mut skipped = 0usize;
    let mut min_curvature: Option<f64> = None;
    let mut fd_checks = Vec::new();

    for _ in 0..n_dirs {
        let mut v = Control {
            slices: (0..n_steps)
                .map(|_| Field {
                    values: (0..n_cells)
                        .map(|_| {
                            // Box-Muller standard normal
                            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                            (-2.0 * u1.ln()).sqrt() * u2.cos()
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut free = 0usize;
        for ns in 0..n_steps {
            for i in 0..n_cells {
                let uv = u_star.slices[ns][i];
                let rv = r.slices[ns][i];
                let switch = rv + weights.b3 * uv;
                let vv = &mut v.slices[ns][i];
                if (switch.abs() - weights.kappa).abs() > delta {
                    *vv = 0.0;
                    continue;
                }
                let at_lower = (uv - bounds.lower).abs() <= TOL_U;
                let at_upper = (uv - bounds.upper).abs() <= TOL_U;
                let at_zero = uv.abs() <= TOL_U;
                if at_lower || (at_zero && rv < 0.0) {
                    *vv = vv.max(0.0);
                } else if at_upper || (at_zero && rv > 0.0) {
                    *vv = vv.min(0.0);
                }
                if *vv != 0.0 {
                    free += 1;
                }
            }
        }
        let norm = v.l2q_norm(&spec.grid, dt);
        if norm <= 1e-14 {
            skipped += 1;
            continue;
        }
        let v = v.scaled(1.0 / norm);
        let xi = sens.solve_linearized(&v)?;
        let curvature = hessian_form_with_xi(&xi, &xi, &v, &v, base, adjoint, spec);
        min_curvature = Some(min_curvature.map_or(curvature, |m: f64| m.min(curvature)));
        if fd_checks.len() < 3 {
            let fd2 = fd_second_difference(u_star, &v, spec, oracle)?;
            fd_checks.push((curvature, fd2.value));
        }
        directions.push(DirectionRecord {
            cone_fraction: free as f64 / (n_steps * n_cells) as f64,
            curvature,
        });
    }

    // quadratic-growth probes: admissible perturbations must not undercut
    // the optimal value beyond roundoff when curvature is positive
    let solver = StateSolver::new(spec);
    let j_star = {
        let c = evaluate_cost(base, u_star, &spec.targets, weights, &spec.grid, dt)?;
        c.j_total
    };
    let mut growth_probes = Vec::new();
    for probe in 0..16 {
        let s = if probe % 2 == 0 { 1e-3 } else { 1e-2 };
        let dir = Control {
            slices: (0..n_steps)
                .map(|_| Field {
                    values: (0..n_cells).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                })
                .collect(),
        };
        let u_probe = u_star.add_scaled(&dir, s).project_box(bounds.lower, bounds.upper);
        let probe_state = solver.solve(&u_probe)?;
        let j_probe =
            evaluate_cost(&probe_state, &u_probe, &spec.targets, weights, &spec.grid, dt)?.j_total;
        growth_probes.push(GrowthProbe {
            scale: s,
            j_probe,
            j_star,
            ok: j_probe >= j_star - 1e-12,
        });
    }

    Ok(SecondOrderReport { min_curvature, directions, skipped, fd_checks, growth_probes })
}
