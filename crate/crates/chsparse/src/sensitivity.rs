//! Linearized and bilinearized sweeps: the exact directional derivatives of
//! the discrete forward map.
//!
//! The step operator is the converged Newton Jacobian of the forward step,
//! with f''(φ) and f'''(φ) frozen at the implicit level of the base
//! trajectory. That choice is what lets the adjoint (its transpose) produce
//! reduced gradients exact for the discrete objective.
//!
//! Linearized system, stepped per level m:
//!
//! ```text
//!   v_m  = e^{-dt/γ} v_{m-1} + (1 - e^{-dt/γ}) h_{m-1}
//!   S_m ξ_m = B ξ_{m-1} - Δ_h v_m,      η_m recovered afterwards
//! ```
//!
//! with S_m = I/dt - Δ_h·diag(τ/dt + f''(φ_m)) + Δ_h² and
//! B = I/dt - (τ/dt)Δ_h. The bilinearized solve reuses the same stepping
//! with source σ_m = -f'''(φ_m)·ξ^h_m·ξ^k_m in place of v and z ≡ 0.

use crate::grid::{mean_value, BandedOperator, Field};
use crate::problem::{Control, ProblemSpec};
use crate::state::{SolverError, StateSolver, StateTrajectory};

/// Solution (ξ, η, v) of the linearized system on time levels 0..=n_steps.
#[derive(Debug, Clone)]
pub struct LinearizedTrajectory {
    pub xi: Vec<Field>,
    pub eta: Vec<Field>,
    pub v: Vec<Field>,
}

impl LinearizedTrajectory {
    pub fn terminal_xi(&self) -> &Field {
        self.xi.last().expect("has initial level")
    }
}

/// Solution (ψ, ν, z) of the bilinearized system; z is identically zero and
/// stored as exact zero fields.
#[derive(Debug, Clone)]
pub struct BilinearizedTrajectory {
    pub psi: Vec<Field>,
    pub nu: Vec<Field>,
    pub z: Vec<Field>,
}

/// Shared stepping machinery over one base trajectory.
pub struct SensitivitySolver<'a> {
    spec: &'a ProblemSpec,
    base: &'a StateTrajectory,
    lap: BandedOperator,
    lap2: BandedOperator,
    exp_fac: Vec<f64>,
}

impl<'a> SensitivitySolver<'a> {
    pub fn new(spec: &'a ProblemSpec, base: &'a StateTrajectory) -> Self {
        let state_solver = StateSolver::new(spec);
        Self {
            spec,
            base,
            lap: state_solver.laplacian().clone(),
            lap2: state_solver.laplacian_squared().clone(),
            exp_fac: state_solver.exp_factors().to_vec(),
        }
    }

    fn n_cells(&self) -> usize {
        self.spec.grid.n_cells()
    }

    /// S_m for the base level m.
    fn step_matrix(&self, level: usize) -> BandedOperator {
        let dt = self.spec.dt();
        let tau = self.spec.phys.tau;
        let p = &self.spec.potential;
        let coef: Vec<f64> = self.base.phi[level]
            .values
            .iter()
            .map(|&r| tau / dt + p.f1_deriv(r, 2).expect("base separated") + p.f2_deriv(r, 2))
            .collect();
        let mut s = self.lap2.add_scaled(&self.lap.mul_diag_right(&coef), -1.0);
        s.shift_diagonal(1.0 / dt);
        s
    }

    /// One linear step: solves S_m x_m = B x_prev - Δ_h source, removes the
    /// floating-point mean dust (the exact step is mean-preserving), and
    /// returns (x_m, recovered second variable).
    fn linear_step(
        &self,
        level: usize,
        x_prev: &Field,
        source: &Field,
    ) -> Result<(Field, Field), SolverError> {
        let n = self.n_cells();
        let dt = self.spec.dt();
        let tau = self.spec.phys.tau;
        let p = &self.spec.potential;

        let lap_prev = self.lap.apply(x_prev);
        let lap_src = self.lap.apply(source);
        let mut rhs = Field::zeros(n);
        for i in 0..n {
            rhs[i] = x_prev[i] / dt - (tau / dt) * lap_prev[i] - lap_src[i];
        }
        let s = self.step_matrix(level);
        let mut x = s.solve(&rhs)?;
        let dust = mean_value(x_prev, &self.spec.grid) - mean_value(&x, &self.spec.grid);
        for v in &mut x.values {
            *v += dust;
        }

        // second variable: η_m = τ(ξ_m-ξ_{m-1})/dt - Δ_h ξ_m + f''(φ_m) ξ_m - source
        let lap_x = self.lap.apply(&x);
        let mut eta = Field::zeros(n);
        for i in 0..n {
            let fpp = p.f1_deriv(self.base.phi[level][i], 2).unwrap()
                + p.f2_deriv(self.base.phi[level][i], 2);
            eta[i] = tau * (x[i] - x_prev[i]) / dt - lap_x[i] + fpp * x[i] - source[i];
        }
        Ok((x, eta))
    }

    /// Directional derivative of the control-to-state map along `h`.
    pub fn solve_linearized(&self, h: &Control) -> Result<LinearizedTrajectory, SolverError> {
        let n_steps = self.spec.n_steps();
        if h.n_steps() != n_steps {
            return Err(SolverError::ControlShape { expected: n_steps, got: h.n_steps() });
        }
        let n = self.n_cells();
        let mut xi = vec![Field::zeros(n)];
        let mut eta = vec![Field::zeros(n)];
        let mut v = vec![Field::zeros(n)];

        for m in 1..=n_steps {
            let mut v_next = Field::zeros(n);
            for i in 0..n {
                let e = self.exp_fac[i];
                v_next[i] = e * v[m - 1][i] + (1.0 - e) * h.slices[m - 1][i];
            }
            let (xi_next, eta_next) = self.linear_step(m, &xi[m - 1], &v_next)?;
            xi.push(xi_next);
            eta.push(eta_next);
            v.push(v_next);
        }
        Ok(LinearizedTrajectory { xi, eta, v })
    }

    /// Second directional derivative along (h, k), given the two first-order
    /// solutions. z vanishes identically and is stored as exact zeros.
    pub fn solve_bilinearized_with(
        &self,
        xi_h: &LinearizedTrajectory,
        xi_k: &LinearizedTrajectory,
    ) -> Result<BilinearizedTrajectory, SolverError> {
        let n_steps = self.spec.n_steps();
        let n = self.n_cells();
        let p = &self.spec.potential;
        let mut psi = vec![Field::zeros(n)];
        let mut nu = vec![Field::zeros(n)];
        let mut z = vec![Field::zeros(n)];

        for m in 1..=n_steps {
            let mut source = Field::zeros(n);
            for i in 0..n {
                let f3 = p.f1_deriv(self.base.phi[m][i], 3).expect("base separated")
                    + p.f2_deriv(self.base.phi[m][i], 3);
                source[i] = -f3 * xi_h.xi[m][i] * xi_k.xi[m][i];
            }
            let (psi_next, nu_next) = self.linear_step(m, &psi[m - 1], &source)?;
            psi.push(psi_next);
            nu.push(nu_next);
            z.push(Field::zeros(n));
        }
        Ok(BilinearizedTrajectory { psi, nu, z })
    }

    /// Convenience form computing ξ^h and ξ^k internally.
    pub fn solve_bilinearized(
        &self,
        h: &Control,
        k: &Control,
    ) -> Result<BilinearizedTrajectory, SolverError> {
        let xi_h = self.solve_linearized(h)?;
        let xi_k = self.solve_linearized(k)?;
        self.solve_bilinearized_with(&xi_h, &xi_k)
    }
}

/// One-call wrappers mirroring the solver entry points.
pub fn solve_linearized(
    h: &Control,
    base: &StateTrajectory,
    spec: &ProblemSpec,
) -> Result<LinearizedTrajectory, SolverError> {
    SensitivitySolver::new(spec, base).solve_linearized(h)
}

pub fn solve_bilinearized(
    h: &Control,
    k: &Control,
    base: &StateTrajectory,
    spec: &ProblemSpec,
) -> Result<BilinearizedTrajectory, SolverError> {
    SensitivitySolver::new(spec, base).solve_bilinearized(h, k)
}
