//! Forward time integration of the state system.
//!
//! Per step, w is advanced by the exact exponential update (the variation of
//! constants formula is exact for piecewise-constant controls), then the
//! coupled pair (φ, μ) is solved fully implicitly:
//!
//! ```text
//!   (φ - φⁿ)/dt = Δ_h μ
//!   τ (φ - φⁿ)/dt - Δ_h φ + f'(φ) = μ + w
//! ```
//!
//! Eliminating μ from the second equation leaves one nonlinear system in φ
//! with pentadiagonal Newton matrix S = I/dt - Δ_h·diag(τ/dt + f''(φ)) + Δ_h².
//! Zero row sums of Δ_h make the discrete mass mean(φ) invariant; the Newton
//! update is mathematically mean-free and its floating-point mean dust is
//! removed so conservation holds to ~1e-14 across all time levels.

use crate::grid::{mean_value, neumann_laplacian, BandedOperator, CoreError, Field};
use crate::problem::{Control, ProblemSpec};
use thiserror::Error;

/// Distance from ±1 that iterates must keep during the Newton solve.
pub const WALL_GAP: f64 = 1e-9;

/// Newton residual targets on ‖dt·F‖∞ / (1 + ‖φⁿ‖∞): iterate toward
/// `NEWTON_TARGET` while progress lasts, require at least `NEWTON_REQUIRED`.
/// The tight target keeps solver error out of 1e-6-level gradient checks.
const NEWTON_TARGET: f64 = 1e-13;
const NEWTON_REQUIRED: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 50;
const BACKTRACK_FACTOR: f64 = 0.5;
const MAX_BACKTRACKS: usize = 30;
const FALLBACK_EPS: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("Newton iteration diverged at time step {time_index} (residual {residual:.3e})")]
    NewtonDiverged { time_index: usize, residual: f64 },
    #[error("order parameter forced within 1e-9 of ±1 at time step {time_index}; dt too large or forcing inadmissible")]
    SeparationBreach { time_index: usize },
    #[error("control has {got} time slices, expected {expected}")]
    ControlShape { expected: usize, got: usize },
    #[error("initial datum must satisfy -1 < phi0 < 1 strictly (min {min}, max {max})")]
    BadInitialData { min: f64, max: f64 },
    #[error("physical parameters invalid: {0}")]
    BadParams(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Viscosity, relaxation coefficient field, and time discretization.
#[derive(Debug, Clone)]
pub struct PhysParams {
    pub tau: f64,
    pub gamma: Field,
    pub horizon: f64,
    pub n_steps: usize,
}

impl PhysParams {
    pub fn new(tau: f64, gamma: Field, horizon: f64, n_steps: usize) -> Result<Self, SolverError> {
        if !(tau > 0.0) {
            return Err(SolverError::BadParams(format!("tau must be positive, got {tau}")));
        }
        let gamma0 = gamma.min();
        if !(gamma0 > 0.0) {
            return Err(SolverError::BadParams(format!(
                "gamma must be uniformly positive, min is {gamma0}"
            )));
        }
        if !(horizon > 0.0) || n_steps == 0 {
            return Err(SolverError::BadParams(format!(
                "need horizon > 0 and n_steps >= 1, got {horizon}, {n_steps}"
            )));
        }
        Ok(Self { tau, gamma, horizon, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }
}

/// Initial order parameter and forcing, with φ0 strictly separated from ±1.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub phi0: Field,
    pub w0: Field,
}

impl InitialData {
    pub fn new(phi0: Field, w0: Field) -> Result<Self, SolverError> {
        let (min, max) = (phi0.min(), phi0.max());
        if !(min > -1.0 && max < 1.0) {
            return Err(SolverError::BadInitialData { min, max });
        }
        Ok(Self { phi0, w0 })
    }
}

/// Space-time extrema of φ and the separation margin, plus solver
/// diagnostics gathered during the sweep.
#[derive(Debug, Clone, Copy)]
pub struct SeparationReport {
    pub phi_min: f64,
    pub phi_max: f64,
    /// min(phi_min + 1, 1 - phi_max); positive for every returned trajectory.
    pub margin: f64,
    /// max over levels of |mean(φ_k) - mean(φ0)|.
    pub max_mean_drift: f64,
    pub max_newton_iters: usize,
    /// Newton had to fall back to the Yosida-regularized step somewhere.
    pub used_regularized_fallback: bool,
    /// The supplied control left the configured box (allowed; the finite
    /// difference oracles probe outside on purpose).
    pub control_outside_box: bool,
}

/// Discrete trajectory of (φ, μ, w) on time levels 0..=n_steps.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub phi: Vec<Field>,
    pub mu: Vec<Field>,
    pub w: Vec<Field>,
    pub separation: SeparationReport,
}

impl StateTrajectory {
    pub fn n_levels(&self) -> usize {
        self.phi.len()
    }

    pub fn terminal_phi(&self) -> &Field {
        self.phi.last().expect("trajectory has at least the initial level")
    }
}

/// Exact integrator for γ ∂t w + w = u over one step with u held constant:
/// w⁺ = e^{-dt/γ} w + (1 - e^{-dt/γ}) u, per cell.
pub fn step_w(w_n: &Field, u_n: &Field, dt: f64, gamma: &Field) -> Field {
    assert!(dt > 0.0);
    let mut out = Field::zeros(w_n.len());
    for i in 0..w_n.len() {
        let e = (-dt / gamma[i]).exp();
        out[i] = e * w_n[i] + (1.0 - e) * u_n[i];
    }
    out
}

/// A stalled iterate this close to ±1 marks a separation failure rather
/// than a generic Newton breakdown.
fn stalled_at_wall(phi: &Field) -> bool {
    phi.inf_norm() >= 1.0 - 1e3 * WALL_GAP
}

#[derive(Clone, Copy)]
enum StepMode {
    Exact,
    Regularized(f64),
}

enum NewtonOutcome {
    Converged(Field, usize),
    /// residual at the last iterate, and whether that iterate sat against
    /// the separation wall
    Stalled(f64, bool),
    Pinned,
}

/// Owns the operators and coefficient tables for one problem instance.
/// Instances are single-threaded; run several for concurrent solves.
pub struct StateSolver<'a> {
    spec: &'a ProblemSpec,
    lap: BandedOperator,
    lap2: BandedOperator,
    /// e^{-dt/γ_i} per cell, shared by the w update and its transpose.
    exp_fac: Vec<f64>,
}

impl<'a> StateSolver<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Self {
        let lap = neumann_laplacian(&spec.grid);
        let lap2 = lap.mul(&lap);
        let dt = spec.dt();
        let exp_fac = spec.phys.gamma.values.iter().map(|g| (-dt / g).exp()).collect();
        Self { spec, lap, lap2, exp_fac }
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    pub fn laplacian(&self) -> &BandedOperator {
        &self.lap
    }

    pub fn laplacian_squared(&self) -> &BandedOperator {
        &self.lap2
    }

    pub fn exp_factors(&self) -> &[f64] {
        &self.exp_fac
    }

    fn f_prime(&self, phi: &Field, mode: StepMode) -> Field {
        let p = &self.spec.potential;
        let mut out = Field::zeros(phi.len());
        match mode {
            StepMode::Exact => {
                for i in 0..phi.len() {
                    let r = phi[i];
                    out[i] = p.f1_deriv(r, 1).expect("iterates stay inside (-1,1)")
                        + p.f2_deriv(r, 1);
                }
            }
            StepMode::Regularized(eps) => {
                for i in 0..phi.len() {
                    let r = phi[i];
                    out[i] =
                        p.yosida_deriv(r, eps).expect("yosida derivative is global") + p.f2_deriv(r, 1);
                }
            }
        }
        out
    }

    fn f_second_coef(&self, phi: &Field, mode: StepMode) -> Vec<f64> {
        let p = &self.spec.potential;
        let tau_dt = self.spec.phys.tau / self.spec.dt();
        match mode {
            StepMode::Exact => phi
                .values
                .iter()
                .map(|&r| tau_dt + p.f1_deriv(r, 2).expect("inside (-1,1)") + p.f2_deriv(r, 2))
                .collect(),
            StepMode::Regularized(eps) => phi
                .values
                .iter()
                .map(|&r| tau_dt + p.yosida_second(r, eps).unwrap() + p.f2_deriv(r, 2))
                .collect(),
        }
    }

    /// μ(φ) = τ(φ-φⁿ)/dt - Δ_h φ + f'(φ) - w.
    fn chemical_potential(&self, phi: &Field, phi_n: &Field, w: &Field, mode: StepMode) -> Field {
        let dt = self.spec.dt();
        let tau = self.spec.phys.tau;
        let mut mu = self.f_prime(phi, mode);
        let lap_phi = self.lap.apply(phi);
        for i in 0..phi.len() {
            mu[i] += tau * (phi[i] - phi_n[i]) / dt - lap_phi[i] - w[i];
        }
        mu
    }

    /// F(φ) = (φ-φⁿ)/dt - Δ_h μ(φ); the step solves F = 0.
    fn residual(&self, phi: &Field, phi_n: &Field, w: &Field, mode: StepMode) -> Field {
        let dt = self.spec.dt();
        let mu = self.chemical_potential(phi, phi_n, w, mode);
        let mut f = self.lap.apply(&mu);
        for i in 0..phi.len() {
            f[i] = (phi[i] - phi_n[i]) / dt - f[i];
        }
        f
    }

    /// Damped Newton with fraction-to-boundary step clamping (exact mode) and
    /// Armijo-style residual decrease. `start` is the initial iterate.
    fn newton(&self, start: &Field, phi_n: &Field, w_next: &Field, mode: StepMode) -> NewtonOutcome {
        let dt = self.spec.dt();
        let n = phi_n.len();
        let grid = &self.spec.grid;
        let scale = 1.0 + phi_n.inf_norm();
        let target = NEWTON_TARGET * scale;
        // evaluating F routes phi through two Laplacians, so the residual
        // cannot drop below ~eps*dt*lambda_max^2; on fine grids that floor
        // sits above the nominal requirement and bounds what "converged"
        // can honestly mean
        let lam_max = 4.0 / (grid.h() * grid.h());
        let fp_floor = 0.1 * f64::EPSILON * dt * lam_max * lam_max;
        let acceptable = (NEWTON_REQUIRED.max(fp_floor)) * scale;
        let mean_n = mean_value(phi_n, grid);
        let wall = 1.0 - WALL_GAP;
        let exact = matches!(mode, StepMode::Exact);

        let mut phi = start.clone();
        let correction = mean_n - mean_value(&phi, grid);
        for v in &mut phi.values {
            *v += correction;
        }
        let mut res = dt * self.residual(&phi, phi_n, w_next, mode).inf_norm();

        for it in 0..NEWTON_MAX_ITERS {
            if res <= target {
                return NewtonOutcome::Converged(phi, it);
            }
            let coef = self.f_second_coef(&phi, mode);
            let mut s = self.lap2.add_scaled(&self.lap.mul_diag_right(&coef), -1.0);
            s.shift_diagonal(1.0 / dt);
            let lu = match s.lu() {
                Ok(lu) => lu,
                Err(_) => return NewtonOutcome::Stalled(res, stalled_at_wall(&phi)),
            };
            let neg_f = {
                let mut v = self.residual(&phi, phi_n, w_next, mode);
                for x in &mut v.values {
                    *x = -*x;
                }
                v
            };
            let mut delta = neg_f.clone();
            lu.solve_in_place(&mut delta.values);
            // one refinement pass: at fine grids dt·Δ² makes S ill enough
            // that the raw update error alone floors the residual
            let mut corr = Field::zeros(n);
            s.apply_into(&delta.values, &mut corr.values);
            for i in 0..n {
                corr[i] = neg_f[i] - corr[i];
            }
            lu.solve_in_place(&mut corr.values);
            for i in 0..n {
                delta[i] += corr[i];
            }

            // step clamping: largest α keeping every component strictly
            // inside the wall (only the exact potential has one)
            let mut alpha: f64 = 1.0;
            if exact {
                for i in 0..n {
                    if delta[i] > 0.0 {
                        alpha = alpha.min(0.999 * (wall - phi[i]) / delta[i]);
                    } else if delta[i] < 0.0 {
                        alpha = alpha.min(0.999 * (-wall - phi[i]) / delta[i]);
                    }
                }
                if !(alpha > 1e-12) {
                    return NewtonOutcome::Pinned;
                }
            }

            let mut accepted = false;
            for _ in 0..=MAX_BACKTRACKS {
                let mut trial = Field::zeros(n);
                for i in 0..n {
                    trial[i] = phi[i] + alpha * delta[i];
                }
                // the exact update is mean-free; remove its fp mean dust
                let c = mean_n - mean_value(&trial, grid);
                for v in &mut trial.values {
                    *v += c;
                }
                if exact && trial.inf_norm() >= 1.0 {
                    alpha *= BACKTRACK_FACTOR;
                    continue;
                }
                let trial_res = dt * self.residual(&trial, phi_n, w_next, mode).inf_norm();
                if trial_res <= (1.0 - 1e-4 * alpha) * res || trial_res <= target {
                    phi = trial;
                    res = trial_res;
                    accepted = true;
                    break;
                }
                alpha *= BACKTRACK_FACTOR;
            }
            if !accepted {
                // quadratic tail: stagnation at an acceptable residual is
                // convergence, not failure
                if res <= acceptable {
                    return NewtonOutcome::Converged(phi, it);
                }
                return NewtonOutcome::Stalled(res, stalled_at_wall(&phi));
            }
        }
        if res <= acceptable {
            return NewtonOutcome::Converged(phi, NEWTON_MAX_ITERS);
        }
        let wall = stalled_at_wall(&phi);
        NewtonOutcome::Stalled(res, wall)
    }

    fn near_wall(&self, phi: &Field) -> bool {
        phi.inf_norm() >= 1.0 - WALL_GAP - 1e-12
    }

    /// One implicit (φ, μ) step given the already-updated w. Returns
    /// (φ⁺, μ⁺, newton iterations, used fallback).
    pub fn step_state(
        &self,
        phi_n: &Field,
        w_next: &Field,
        time_index: usize,
    ) -> Result<(Field, Field, usize, bool), SolverError> {
        match self.newton(phi_n, phi_n, w_next, StepMode::Exact) {
            NewtonOutcome::Converged(phi, iters) => {
                self.finish_step(phi, phi_n, w_next, time_index, iters, false)
            }
            NewtonOutcome::Pinned => Err(SolverError::SeparationBreach { time_index }),
            NewtonOutcome::Stalled(..) => {
                // retry through the Moreau-Yosida regularized potential,
                // then polish with the exact one
                let seed =
                    match self.newton(phi_n, phi_n, w_next, StepMode::Regularized(FALLBACK_EPS)) {
                        NewtonOutcome::Converged(phi, _) => phi,
                        NewtonOutcome::Pinned | NewtonOutcome::Stalled(_, true) => {
                            return Err(SolverError::SeparationBreach { time_index })
                        }
                        NewtonOutcome::Stalled(res, false) => {
                            return Err(SolverError::NewtonDiverged { time_index, residual: res })
                        }
                    };
                let mut clipped = seed;
                for v in &mut clipped.values {
                    *v = v.clamp(-1.0 + 1e-6, 1.0 - 1e-6);
                }
                match self.newton(&clipped, phi_n, w_next, StepMode::Exact) {
                    NewtonOutcome::Converged(phi, iters) => {
                        self.finish_step(phi, phi_n, w_next, time_index, iters, true)
                    }
                    NewtonOutcome::Pinned => Err(SolverError::SeparationBreach { time_index }),
                    // a stall with the iterate against the wall is the
                    // separation failure mode, not a solver defect
                    NewtonOutcome::Stalled(_, true) => {
                        Err(SolverError::SeparationBreach { time_index })
                    }
                    NewtonOutcome::Stalled(res, false) => {
                        Err(SolverError::NewtonDiverged { time_index, residual: res })
                    }
                }
            }
        }
    }

    fn finish_step(
        &self,
        phi: Field,
        phi_n: &Field,
        w_next: &Field,
        time_index: usize,
        iters: usize,
        fell_back: bool,
    ) -> Result<(Field, Field, usize, bool), SolverError> {
        if self.near_wall(&phi) {
            return Err(SolverError::SeparationBreach { time_index });
        }
        let mu = self.chemical_potential(&phi, phi_n, w_next, StepMode::Exact);
        Ok((phi, mu, iters, fell_back))
    }

    /// μ at t = 0 from the compatibility system
    /// (I - τΔ_h) μ0 = -Δ_h φ0 + f'(φ0) - w0, obtained by combining both
    /// state equations at the initial time.
    fn initial_mu(&self) -> Result<Field, SolverError> {
        let spec = self.spec;
        let phi0 = &spec.initial.phi0;
        let mut rhs = self.f_prime(phi0, StepMode::Exact);
        let lap_phi0 = self.lap.apply(phi0);
        for i in 0..phi0.len() {
            rhs[i] += -lap_phi0[i] - spec.initial.w0[i];
        }
        let a = BandedOperator::identity(phi0.len()).add_scaled(&self.lap, -spec.phys.tau);
        Ok(a.solve(&rhs)?)
    }

    /// Runs the full forward sweep for the given control.
    pub fn solve(&self, u: &Control) -> Result<StateTrajectory, SolverError> {
        let spec = self.spec;
        let n_steps = spec.n_steps();
        if u.n_steps() != n_steps {
            return Err(SolverError::ControlShape { expected: n_steps, got: u.n_steps() });
        }
        let grid = &spec.grid;
        let m0 = mean_value(&spec.initial.phi0, grid);

        let mut phi = Vec::with_capacity(n_steps + 1);
        let mut mu = Vec::with_capacity(n_steps + 1);
        let mut w = Vec::with_capacity(n_steps + 1);
        phi.push(spec.initial.phi0.clone());
        mu.push(self.initial_mu()?);
        w.push(spec.initial.w0.clone());

        let mut phi_min = spec.initial.phi0.min();
        let mut phi_max = spec.initial.phi0.max();
        let mut max_drift = 0.0f64;
        let mut max_iters = 0usize;
        let mut fell_back = false;

        for n in 0..n_steps {
            let mut w_next = Field::zeros(grid.n_cells());
            for i in 0..grid.n_cells() {
                let e = self.exp_fac[i];
                w_next[i] = e * w[n][i] + (1.0 - e) * u.slices[n][i];
            }
            let (phi_next, mu_next, iters, fb) = self.step_state(&phi[n], &w_next, n + 1)?;
            phi_min = phi_min.min(phi_next.min());
            phi_max = phi_max.max(phi_next.max());
            max_drift = max_drift.max((mean_value(&phi_next, grid) - m0).abs());
            max_iters = max_iters.max(iters);
            fell_back |= fb;
            phi.push(phi_next);
            mu.push(mu_next);
            w.push(w_next);
        }

        let separation = SeparationReport {
            phi_min,
            phi_max,
            margin: (phi_min + 1.0).min(1.0 - phi_max),
            max_mean_drift: max_drift,
            max_newton_iters: max_iters,
            used_regularized_fallback: fell_back,
            control_outside_box: !u.within_box(spec.bounds.lower, spec.bounds.upper),
        };
        Ok(StateTrajectory { phi, mu, w, separation })
    }
}

/// Convenience wrapper building a solver for one call.
pub fn solve_state(u: &Control, spec: &ProblemSpec) -> Result<StateTrajectory, SolverError> {
    StateSolver::new(spec).solve(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::objective::{BoxBounds, CostWeights};
    use crate::potential::PotentialParams;
    use crate::problem::Targets;

    pub(crate) fn small_spec(n_cells: usize, n_steps: usize, horizon: f64) -> ProblemSpec {
        use std::f64::consts::PI;
        let grid = Grid::new(1.0, n_cells).unwrap();
        let potential = PotentialParams::new(1.0, 2.5).unwrap();
        let gamma = Field::constant(n_cells, 0.5);
        let phys = PhysParams::new(0.1, gamma, horizon, n_steps).unwrap();
        let phi0 = Field::from_fn(&grid, |x| 0.2 * (PI * x).cos());
        let initial = InitialData::new(phi0, Field::zeros(n_cells)).unwrap();
        let targets = Targets::from_fn(&grid, n_steps, horizon / n_steps as f64, |x, _| {
            0.4 * (PI * x).cos()
        });
        ProblemSpec {
            grid,
            potential,
            phys,
            initial,
            bounds: BoxBounds::new(-5.0, 5.0).unwrap(),
            targets,
            weights: CostWeights::new(1.0, 0.5, 1e-2, 1e-3).unwrap(),
        }
    }

    #[test]
    fn initial_data_validation() {
        assert!(InitialData::new(Field::constant(4, 0.3), Field::zeros(4)).is_ok());
        assert!(InitialData::new(Field::constant(4, 1.0), Field::zeros(4)).is_err());
        assert!(InitialData::new(Field::constant(4, -1.01), Field::zeros(4)).is_err());
    }

    #[test]
    fn step_w_exact_decay() {
        let gamma = Field::constant(4, 0.5);
        let w0 = Field::constant(4, 2.0);
        let w1 = step_w(&w0, &Field::zeros(4), 0.1, &gamma);
        let expected = 2.0 * (-0.1 / 0.5f64).exp();
        for i in 0..4 {
            assert!((w1[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn step_w_constant_forcing() {
        let gamma = Field::constant(4, 0.25);
        let w1 = step_w(&Field::zeros(4), &Field::constant(4, 3.0), 0.05, &gamma);
        let expected = 3.0 * (1.0 - (-0.05 / 0.25f64).exp());
        for i in 0..4 {
            assert!((w1[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn step_w_approaches_fixed_point() {
        let gamma = Field::constant(2, 0.5);
        let mut w = Field::zeros(2);
        let u = Field::constant(2, 1.5);
        for _ in 0..200 {
            w = step_w(&w, &u, 0.05, &gamma);
        }
        for i in 0..2 {
            assert!((w[i] - 1.5).abs() < 1e-8, "w converges to u geometrically");
        }
    }

    #[test]
    fn homogeneous_steady_state() {
        // constant φ with zero forcing is a fixed point: all gradients
        // vanish and μ = f'(m0)
        let mut spec = small_spec(16, 4, 0.1);
        spec.initial = InitialData::new(Field::constant(16, 0.1), Field::zeros(16)).unwrap();
        let solver = StateSolver::new(&spec);
        let traj = solver.solve(&Control::zeros(4, 16)).unwrap();
        let f_prime_m0 = spec.potential.f_deriv(0.1, 1).unwrap();
        for k in 0..=4 {
            for i in 0..16 {
                assert!((traj.phi[k][i] - 0.1).abs() < 1e-12, "phi stays constant");
            }
        }
        for k in 1..=4 {
            for i in 0..16 {
                assert!((traj.mu[k][i] - f_prime_m0).abs() < 1e-10, "mu = f'(m0)");
            }
        }
    }

    #[test]
    fn mass_conservation_tight() {
        let spec = small_spec(32, 32, 0.25);
        let solver = StateSolver::new(&spec);
        let dt = spec.dt();
        let u = Control::from_fn(&spec.grid, 32, dt, |x, t| {
            3.0 * (2.0 * std::f64::consts::PI * x).cos() * (1.0 + t)
        });
        let traj = solver.solve(&u).unwrap();
        assert!(
            traj.separation.max_mean_drift <= 1e-12,
            "drift {} exceeds 1e-12",
            traj.separation.max_mean_drift
        );
    }

    #[test]
    fn separation_margin_positive_under_strong_forcing() {
        let spec = small_spec(32, 32, 0.25);
        let solver = StateSolver::new(&spec);
        let traj = solver.solve(&Control::constant(32, 32, 5.0)).unwrap();
        assert!(traj.separation.margin > 0.0);
        assert!(traj.separation.phi_max < 1.0 && traj.separation.phi_min > -1.0);
    }

    #[test]
    fn control_shape_checked() {
        let spec = small_spec(16, 8, 0.1);
        let solver = StateSolver::new(&spec);
        assert!(matches!(
            solver.solve(&Control::zeros(4, 16)),
            Err(SolverError::ControlShape { expected: 8, got: 4 })
        ));
    }

    #[test]
    fn absurd_forcing_breaches_separation() {
        // far outside any admissible box, with spatial structure so the
        // forcing actually drives phi (a constant w only shifts mu):
        // f1' cannot balance it and the iterates pin against the wall
        let spec = small_spec(16, 8, 0.1);
        let solver = StateSolver::new(&spec);
        let u = Control::from_fn(&spec.grid, 8, spec.dt(), |x, _| {
            1.0e4 * (std::f64::consts::PI * x).cos()
        });
        match solver.solve(&u) {
            Err(SolverError::SeparationBreach { time_index }) => {
                assert!(time_index >= 1);
            }
            other => panic!("expected SeparationBreach, got {other:?}"),
        }
    }

    fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|v| v * v).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(a, b)| a * b).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn one_step_error_decays_with_dt() {
        // single step of size dt versus the same interval integrated with
        // dt/100 substeps; backward Euler's one-step error is O(dt^2), the
        // fitted slope must clear first order
        let mut errs = Vec::new();
        let mut dts = Vec::new();
        for k in 4..=8 {
            let dt = 1.0 / (1 << k) as f64;
            let spec = small_spec(16, 1, dt);
            let solver = StateSolver::new(&spec);
            let one = solver.solve(&Control::constant(1, 16, 1.0)).unwrap();

            let fine = small_spec(16, 100, dt);
            let fsolver = StateSolver::new(&fine);
            let reference = fsolver.solve(&Control::constant(100, 16, 1.0)).unwrap();

            let err = (0..16)
                .map(|i| (one.terminal_phi()[i] - reference.terminal_phi()[i]).abs())
                .fold(0.0f64, f64::max);
            errs.push(err.ln());
            dts.push(dt.ln());
        }
        let slope = fit_slope(&dts, &errs);
        assert!(slope >= 0.9, "one-step error slope {slope} below first order");
    }

    #[test]
    fn global_first_order_convergence() {
        // global error versus a dt/16 reference over 4 refinements
        let mut errs = Vec::new();
        let mut dts = Vec::new();
        for &n_steps in &[8usize, 16, 32, 64] {
            let spec = small_spec(32, n_steps, 0.25);
            let solver = StateSolver::new(&spec);
            let u = Control::from_fn(&spec.grid, n_steps, spec.dt(), |x, _| {
                2.0 * (std::f64::consts::PI * x).cos()
            });
            let coarse = solver.solve(&u).unwrap();

            let fine_spec = small_spec(32, n_steps * 16, 0.25);
            let fsolver = StateSolver::new(&fine_spec);
            let uf = Control::from_fn(&fine_spec.grid, n_steps * 16, fine_spec.dt(), |x, _| {
                2.0 * (std::f64::consts::PI * x).cos()
            });
            let reference = fsolver.solve(&uf).unwrap();

            let err = (0..32)
                .map(|i| (coarse.terminal_phi()[i] - reference.terminal_phi()[i]).abs())
                .fold(0.0f64, f64::max);
            errs.push(err.ln());
            dts.push(spec.dt().ln());
        }
        let slope = fit_slope(&dts, &errs);
        assert!(slope >= 0.9, "global error slope {slope} below first order");
    }
}
