//! Acceptance suite for the default desk-scale instance: one test per
//! criterion, each printing a PASS line with the measured figures.
//!
//! Expensive artifacts (optimizer runs, the zero-control adjoint) are built
//! once and shared across criteria through OnceLock fixtures.

use chsparse::adjoint::{solve_adjoint, AdjointTrajectory};
use chsparse::grid::Field;
use chsparse::objective::{prox_control, reduced_gradient, stationarity_residual};
use chsparse::optimizer::{minimize, second_order_check, OptimizerConfig, OptimizerReport, TOL_U};
use chsparse::problem::{Control, ProblemSpec};
use chsparse::state::{solve_state, StateTrajectory};
use chsparse::verify::{
    duality_entry, gradient_fd_entry, hessian_entry, moreau_yosida_entry, taylor_entry,
    OracleConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

const SEED: u64 = 2024;
/// Ascending κ values for the sparsity criteria, calibrated against the
/// measured zero-control adjoint scale max|r0| = 5.83e-2. The leading 0
/// anchors the dense end of the monotonicity chain; criterion 8 supplies
/// the fully annihilated end at 1.1·max|r0|.
const KAPPA_LIST: [f64; 4] = [0.0, 5e-3, 2e-2, 4e-2];

fn spec() -> &'static ProblemSpec {
    static SPEC: OnceLock<ProblemSpec> = OnceLock::new();
    SPEC.get_or_init(ProblemSpec::default_instance)
}

fn oracle() -> OracleConfig {
    OracleConfig { seed: SEED, ..OracleConfig::default() }
}

/// Forward solve and adjoint at u = 0.
fn zero_base() -> &'static (StateTrajectory, AdjointTrajectory) {
    static BASE: OnceLock<(StateTrajectory, AdjointTrajectory)> = OnceLock::new();
    BASE.get_or_init(|| {
        let s = spec();
        let u = Control::zeros(s.n_steps(), s.grid.n_cells());
        let base = solve_state(&u, s).expect("zero-control solve");
        let adj = solve_adjoint(&base, &s.targets, &s.weights, s).expect("zero-control adjoint");
        (base, adj)
    })
}

/// Converged runs at the pinned κ triple, warm-started ascending.
fn kappa_runs() -> &'static Vec<(f64, OptimizerReport)> {
    static RUNS: OnceLock<Vec<(f64, OptimizerReport)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut out = Vec::new();
        let mut warm = Control::zeros(spec().n_steps(), spec().grid.n_cells());
        for &kappa in &KAPPA_LIST {
            let mut s = spec().clone();
            s.weights.kappa = kappa;
            let mut cfg = OptimizerConfig::for_spec(&s);
            cfg.u_init = warm.clone();
            let report = minimize(&s, &cfg).expect("kappa run");
            warm = report.control.clone();
            out.push((kappa, report));
        }
        out
    })
}

/// Converged run at the instance's own κ (1e-3), used by the second-order
/// criterion.
fn default_run() -> &'static OptimizerReport {
    static RUN: OnceLock<OptimizerReport> = OnceLock::new();
    RUN.get_or_init(|| {
        let s = spec();
        let cfg = OptimizerConfig::for_spec(s);
        minimize(s, &cfg).expect("default optimization")
    })
}

fn random_box_control(s: &ProblemSpec, rng: &mut ChaCha8Rng) -> Control {
    Control {
        slices: (0..s.n_steps())
            .map(|_| Field {
                values: (0..s.grid.n_cells())
                    .map(|_| rng.gen_range(s.bounds.lower..s.bounds.upper))
                    .collect(),
            })
            .collect(),
    }
}

#[test]
fn criterion_01_mass_conservation() {
    let s = spec();
    let mut worst: f64 = zero_base().0.separation.max_mean_drift;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0xc0de);
    for _ in 0..4 {
        let u = random_box_control(s, &mut rng);
        let traj = solve_state(&u, s).expect("forward solve");
        worst = worst.max(traj.separation.max_mean_drift);
    }
    // and the optimal controls produced elsewhere in the suite
    for (_, report) in kappa_runs() {
        let traj = solve_state(&report.control, s).expect("re-solve");
        worst = worst.max(traj.separation.max_mean_drift);
    }
    assert!(worst <= 1e-12, "max mean drift {worst:.3e} exceeds 1e-12");
    println!("criterion 1 (mass conservation): PASS - max |mean(phi_k) - m0| = {worst:.3e}");
}

#[test]
fn criterion_02_separation_margin() {
    let s = spec();
    let mut min_margin = zero_base().0.separation.margin;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x5e9a);
    for _ in 0..8 {
        let u = random_box_control(s, &mut rng);
        let traj = solve_state(&u, s).expect("forward solve");
        min_margin = min_margin.min(traj.separation.margin);
    }
    assert!(min_margin > 1e-3, "margin {min_margin:.3e} not above 1e-3");
    println!("criterion 2 (separation): PASS - min margin over 9 solves = {min_margin:.6e}");
}

#[test]
fn criterion_03_moreau_yosida_properties() {
    let entry = moreau_yosida_entry(spec());
    assert!(entry.passed, "{}", entry.details);
    println!("criterion 3 (Moreau-Yosida properties): PASS - {}", entry.details);
}

#[test]
fn criterion_04_taylor_orders() {
    let entry = taylor_entry(spec(), SEED);
    assert!(entry.passed, "{}", entry.details);
    println!("criterion 4 (linearized/bilinearized Taylor): PASS - {}", entry.details);
}

#[test]
fn criterion_05_gradient_exactness() {
    let dual = duality_entry(spec(), SEED);
    assert!(dual.passed, "duality: {}", dual.details);
    let fd = gradient_fd_entry(spec(), SEED, &oracle());
    assert!(fd.passed, "fd gradient: {}", fd.details);
    println!(
        "criterion 5 (adjoint duality / gradient exactness): PASS - duality {}; fd {}",
        dual.details, fd.details
    );
}

#[test]
fn criterion_06_second_derivative_formula() {
    let entry = hessian_entry(spec(), SEED, &oracle());
    assert!(entry.passed, "{}", entry.details);
    println!("criterion 6 (second-derivative formula): PASS - {}", entry.details);
}

#[test]
fn criterion_07_sparsity_characterization() {
    let runs = kappa_runs();
    let s = spec();
    let mut prev_zero = -1.0;
    let mut prev_l1 = f64::INFINITY;
    let mut lines = Vec::new();
    for (kappa, report) in runs {
        assert!(report.converged, "kappa {kappa}: not converged");
        if *kappa > 0.0 {
            // the characterization u = 0 <=> |r| <= kappa is vacuous at
            // kappa = 0; the report marks it skipped there
            assert_eq!(report.sparsity.violations_a, Some(0), "kappa {kappa}: direction a");
            assert_eq!(report.sparsity.violations_b, Some(0), "kappa {kappa}: direction b");
        } else {
            assert!(report.sparsity.violations_a.is_none());
        }
        assert!(report.sparsity.bounds_hypothesis, "bounds must straddle zero");
        let zf = report.sparsity.zero_fraction;
        let l1 = report.control.l1_norm(&s.grid, s.dt());
        assert!(zf > prev_zero, "zero_fraction not strictly increasing at kappa {kappa}");
        assert!(l1 < prev_l1, "L1 norm not strictly decreasing at kappa {kappa}");
        prev_zero = zf;
        prev_l1 = l1;
        lines.push(format!("kappa={kappa:.1e}: zero_fraction={zf:.4} |u|_L1={l1:.4e}"));
    }
    println!("criterion 7 (sparsity characterization): PASS - {}", lines.join("; "));
}

#[test]
fn criterion_08_large_kappa_annihilation() {
    let s = spec();
    let (_, adj0) = zero_base();
    let kappa_big = 1.1 * adj0.r_control().inf_norm();
    let mut run_spec = s.clone();
    run_spec.weights.kappa = kappa_big;
    let mut cfg = OptimizerConfig::for_spec(&run_spec);
    // nonzero admissible start so the annihilation is not vacuous
    cfg.u_init = Control {
        slices: vec![
            Field::from_fn(&s.grid, |x| (std::f64::consts::PI * x).cos());
            s.n_steps()
        ],
    };
    let report = minimize(&run_spec, &cfg).expect("large-kappa run");
    assert!(report.converged);
    assert!(
        report.control.inf_norm() <= 1e-10,
        "control not annihilated: |u|_inf = {:.3e}",
        report.control.inf_norm()
    );
    // projection-formula fixed point at u = 0: prox(0 - alpha(r + 0)) = 0
    let base = solve_state(&report.control, &run_spec).expect("re-solve");
    let adj = solve_adjoint(&base, &run_spec.targets, &run_spec.weights, &run_spec).unwrap();
    let g = reduced_gradient(&report.control, &adj, &run_spec.weights);
    for &alpha in &[1.0, cfg.alpha0] {
        let prox = prox_control(&report.control, &g, alpha, &run_spec.weights, &run_spec.bounds);
        assert!(
            prox.inf_norm() <= 1e-12,
            "prox moved away from zero at alpha {alpha}"
        );
    }
    println!(
        "criterion 8 (large-kappa annihilation): PASS - kappa = {kappa_big:.4e}, |u*|_inf = {:.1e}, {} iterations",
        report.control.inf_norm(),
        report.iterations.len()
    );
}

#[test]
fn criterion_09_projection_fixed_point() {
    let s = spec();
    let mut worst_unit = 0.0f64;
    let mut worst_scaled = 0.0f64;
    for (kappa, report) in kappa_runs() {
        let mut run_spec = s.clone();
        run_spec.weights.kappa = *kappa;
        let base = solve_state(&report.control, &run_spec).expect("re-solve");
        let adj = solve_adjoint(&base, &run_spec.targets, &run_spec.weights, &run_spec).unwrap();
        let g = reduced_gradient(&report.control, &adj, &run_spec.weights);
        // the unscaled fixed-point residual at alpha = 1 ...
        let prox1 = prox_control(&report.control, &g, 1.0, &run_spec.weights, &run_spec.bounds);
        let diff = prox1.add_scaled(&report.control, -1.0);
        worst_unit = worst_unit.max(diff.inf_norm());
        // ... and the optimizer's own scaled certificate at alpha0
        let alpha0 = 1.0 / run_spec.weights.b3;
        worst_scaled = worst_scaled.max(stationarity_residual(
            &report.control,
            &g,
            alpha0,
            &run_spec.weights,
            &run_spec.bounds,
        ));
    }
    assert!(worst_unit <= 1e-8, "fixed-point residual {worst_unit:.3e} above 1e-8");
    assert!(worst_scaled <= 1e-8, "scaled residual {worst_scaled:.3e} above 1e-8");
    println!(
        "criterion 9 (projection fixed point): PASS - max ||u - prox(u)||_inf = {worst_unit:.3e} (scaled {worst_scaled:.3e})"
    );
}

#[test]
fn criterion_10_second_order_probe() {
    let s = spec();
    let report = default_run();
    assert!(report.converged, "default run must converge first");
    let base = solve_state(&report.control, s).expect("re-solve");
    let adj = solve_adjoint(&base, &s.targets, &s.weights, s).unwrap();
    let so = second_order_check(
        &report.control,
        &base,
        &adj,
        s,
        64,
        SEED ^ 0x2a2a,
        1e-8,
        &oracle(),
    )
    .expect("second-order check");
    let minc = so.min_curvature.expect("critical cone should not be empty here");
    assert!(minc > 0.0, "min curvature {minc:.3e} not positive");
    for (form, fd2) in &so.fd_checks {
        let rel = (form - fd2).abs() / form.abs().max(1.0);
        assert!(rel <= 1e-4, "fd cross-check off: form {form:.6e} fd {fd2:.6e}");
    }
    assert_eq!(so.growth_probes.len(), 16);
    for p in &so.growth_probes {
        assert!(
            p.ok,
            "growth probe failed at s={}: J(probe) {:.12e} < J* {:.12e} - 1e-12",
            p.scale, p.j_probe, p.j_star
        );
    }
    println!(
        "criterion 10 (second-order probe): PASS - min curvature {minc:.6e} over {} directions ({} skipped), 16 growth probes ok",
        so.directions.len(),
        so.skipped
    );
}

#[test]
fn declared_zero_threshold_matches_reporting() {
    // the annihilation assertions above lean on TOL_U; pin its value here
    assert_eq!(TOL_U, 1e-10);
}
