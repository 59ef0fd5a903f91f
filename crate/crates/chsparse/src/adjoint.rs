//! Backward-in-time adjoint sweep: the exact transpose of the discrete
//! linearized stepping, producing the reduced-gradient field r.
//!
//! Per step m (descending), with D_m = diag(f''(φ_m)) and tracking residual
//! a_m = b1(φ_m - φ_Q\[m\]):
//!
//! ```text
//!   rhs_m = (p + τq)_{m+1} + dt·a_m
//!   [I - τΔ_h + dt·Δ_h² - dt·Δ_h D_m] q_m = -Δ_h rhs_m
//!   p_m = rhs_m + dt·Δ_h q_m - dt·D_m q_m - τ q_m
//! ```
//!
//! which is the (p, q) form of the transposed step matrix (the sweep matrix
//! equals dt·S_m together with the exact identity S_m Δ_h = Δ_h S_mᵀ). The
//! multiplier pair satisfies q_m = -Δ_h p_m by construction, so q_m is
//! mean-free and p_m needs no gauge fixing. r is recovered by the backward
//! exponential accumulation that is the exact transpose of the forward w
//! update, and the resulting r + b3·u is the gradient of the discrete
//! smooth cost to solver roundoff.
//!
//! Storage convention: index m < n_steps holds the multiplier of the step
//! spanning (t_m, t_{m+1}]; index n_steps holds the exact terminal data
//! (p+τq)(T) = b2(φ(T) - φ_Ω), r(T) = 0, with q(T) from the compatible
//! elliptic system (I - τΔ_h) q(T) = -Δ_h (p+τq)(T).

use crate::grid::{BandedOperator, Field};
use crate::objective::CostWeights;
use crate::problem::{Control, ProblemSpec, Targets};
use crate::state::{SolverError, StateSolver, StateTrajectory};

/// Discrete adjoint (p, q, r) with p + τq stored explicitly.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub p: Vec<Field>,
    pub q: Vec<Field>,
    pub r: Vec<Field>,
    pub combo: Vec<Field>,
}

impl AdjointTrajectory {
    pub fn n_levels(&self) -> usize {
        self.r.len()
    }

    /// r restricted to the control slices 0..n_steps, the part that pairs
    /// with a control increment in the reduced gradient.
    pub fn r_control(&self) -> Control {
        Control { slices: self.r[..self.r.len() - 1].to_vec() }
    }

    /// Multiplier of the step spanning (t_m, t_{m+1}], m in 0..n_steps;
    /// this is the q that enters the second-order quadratic form at level
    /// m+1 of the base trajectory.
    pub fn q_step(&self, m: usize) -> &Field {
        &self.q[m]
    }
}

/// Backward sweep over a separated base trajectory.
pub fn solve_adjoint(
    base: &StateTrajectory,
    targets: &Targets,
    weights: &CostWeights,
    spec: &ProblemSpec,
) -> Result<AdjointTrajectory, SolverError> {
    let n_steps = spec.n_steps();
    let n = spec.grid.n_cells();
    let dt = spec.dt();
    let tau = spec.phys.tau;
    let p_pot = &spec.potential;
    let solver = StateSolver::new(spec);
    let lap = solver.laplacian();
    let lap2 = solver.laplacian_squared();
    let exp_fac = solver.exp_factors();

    let mut p = vec![Field::zeros(n); n_steps + 1];
    let mut q = vec![Field::zeros(n); n_steps + 1];
    let mut r = vec![Field::zeros(n); n_steps + 1];
    let mut combo = vec![Field::zeros(n); n_steps + 1];

    // terminal level: exact data, with q(T) from the compatible elliptic solve
    let mut c = Field::zeros(n);
    for i in 0..n {
        c[i] = weights.b2 * (base.phi[n_steps][i] - targets.phi_omega[i]);
    }
    {
        let a_term = BandedOperator::identity(n).add_scaled(lap, -tau);
        let rhs = {
            let mut v = lap.apply(&c);
            for x in &mut v.values {
                *x = -*x;
            }
            v
        };
        let q_term = a_term.solve(&rhs)?;
        let mut p_term = Field::zeros(n);
        for i in 0..n {
            p_term[i] = c[i] - tau * q_term[i];
        }
        combo[n_steps] = c.clone();
        q[n_steps] = q_term;
        p[n_steps] = p_term;
        // r[n_steps] stays zero: r(T) = 0 exactly
    }

    let mut carry = c;
    let mut acc = Field::zeros(n); // R_m = Σ_{j>=m} E^{j-m} dt q_j
    for m in (1..=n_steps).rev() {
        let phi_m = &base.phi[m];
        let mut rhs = Field::zeros(n);
        for i in 0..n {
            rhs[i] = carry[i] + dt * weights.b1 * (phi_m[i] - targets.phi_q[m][i]);
        }

        let coef: Vec<f64> = phi_m
            .values
            .iter()
            .map(|&v| {
                tau + dt * (p_pot.f1_deriv(v, 2).expect("base separated") + p_pot.f2_deriv(v, 2))
            })
            .collect();
        let mut a = lap2.clone();
        a.scale(dt);
        let a = {
            let mut a = a.add_scaled(&lap.mul_diag_right(&coef), -1.0);
            a.shift_diagonal(1.0);
            a
        };
        let neg_lap_rhs = {
            let mut v = lap.apply(&rhs);
            for x in &mut v.values {
                *x = -*x;
            }
            v
        };
        let q_m = a.solve(&neg_lap_rhs)?;

        let lap_q = lap.apply(&q_m);
        let mut p_m = Field::zeros(n);
        for i in 0..n {
            let fpp = p_pot.f1_deriv(phi_m[i], 2).unwrap() + p_pot.f2_deriv(phi_m[i], 2);
            p_m[i] = rhs[i] + dt * lap_q[i] - dt * fpp * q_m[i] - tau * q_m[i];
        }
        let mut combo_m = Field::zeros(n);
        for i in 0..n {
            combo_m[i] = p_m[i] + tau * q_m[i];
        }

        for i in 0..n {
            acc[i] = exp_fac[i] * acc[i] + dt * q_m[i];
            r[m - 1][i] = (1.0 - exp_fac[i]) * acc[i] / dt;
        }
        carry = combo_m.clone();
        q[m - 1] = q_m;
        p[m - 1] = p_m;
        combo[m - 1] = combo_m;
    }

    Ok(AdjointTrajectory { p, q, r, combo })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, mean_value, neumann_laplacian, Grid};
    use crate::objective::BoxBounds;
    use crate::potential::PotentialParams;
    use crate::sensitivity::SensitivitySolver;
    use crate::state::{solve_state, InitialData, PhysParams};
    use rand::{Rng, SeedableRng};

    fn spec(n_cells: usize, n_steps: usize) -> ProblemSpec {
        use std::f64::consts::PI;
        let grid = Grid::new(1.0, n_cells).unwrap();
        let phys =
            PhysParams::new(0.1, Field::constant(n_cells, 0.5), 0.25, n_steps).unwrap();
        let phi0 = Field::from_fn(&grid, |x| 0.2 * (PI * x).cos());
        let dt = phys.dt();
        let targets = Targets::from_fn(&grid, n_steps, dt, |x, _| 0.4 * (PI * x).cos());
        ProblemSpec {
            grid,
            potential: PotentialParams::new(1.0, 2.5).unwrap(),
            phys,
            initial: InitialData::new(phi0, Field::zeros(n_cells)).unwrap(),
            bounds: BoxBounds::new(-5.0, 5.0).unwrap(),
            targets,
            weights: CostWeights::new(1.0, 0.5, 1e-2, 1e-3).unwrap(),
        }
    }

    fn random_control(n_steps: usize, n_cells: usize, seed: u64, amp: f64) -> Control {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Control {
            slices: (0..n_steps)
                .map(|_| Field {
                    values: (0..n_cells).map(|_| rng.gen_range(-amp..amp)).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn zero_weights_give_zero_adjoint() {
        let spec = spec(16, 8);
        let base = solve_state(&Control::zeros(8, 16), &spec).unwrap();
        let weights = CostWeights::new(0.0, 0.0, 1e-2, 0.0).unwrap();
        let adj = solve_adjoint(&base, &spec.targets, &weights, &spec).unwrap();
        for m in 0..=8 {
            assert_eq!(adj.p[m].inf_norm(), 0.0);
            assert_eq!(adj.q[m].inf_norm(), 0.0);
            assert_eq!(adj.r[m].inf_norm(), 0.0);
        }
    }

    #[test]
    fn perfectly_tracked_state_gives_zero_adjoint() {
        let spec_base = spec(16, 8);
        let u = random_control(8, 16, 20, 1.0);
        let base = solve_state(&u, &spec_base).unwrap();
        let targets = Targets { phi_q: base.phi.clone(), phi_omega: base.phi[8].clone() };
        let weights = CostWeights::new(1.0, 0.0, 1e-2, 0.0).unwrap();
        let adj = solve_adjoint(&base, &targets, &weights, &spec_base).unwrap();
        for m in 0..=8 {
            assert_eq!(adj.q[m].inf_norm(), 0.0);
            assert_eq!(adj.r[m].inf_norm(), 0.0);
        }
    }

    #[test]
    fn terminal_conditions_exact() {
        let spec = spec(16, 8);
        let u = random_control(8, 16, 21, 1.0);
        let base = solve_state(&u, &spec).unwrap();
        let adj = solve_adjoint(&base, &spec.targets, &spec.weights, &spec).unwrap();
        assert_eq!(adj.r[8].inf_norm(), 0.0, "r(T) = 0");
        for i in 0..16 {
            let expected = spec.weights.b2 * (base.phi[8][i] - spec.targets.phi_omega[i]);
            assert_eq!(adj.combo[8][i], expected, "(p + tau q)(T) terminal datum");
        }
    }

    #[test]
    fn p_and_q_satisfy_elliptic_relation() {
        let spec = spec(32, 16);
        let u = random_control(16, 32, 22, 2.0);
        let base = solve_state(&u, &spec).unwrap();
        let adj = solve_adjoint(&base, &spec.targets, &spec.weights, &spec).unwrap();
        let lap = neumann_laplacian(&spec.grid);
        let q_scale = adj.q.iter().map(Field::inf_norm).fold(0.0f64, f64::max);
        for m in 0..=16 {
            let lap_p = lap.apply(&adj.p[m]);
            for i in 0..32 {
                assert!(
                    (-lap_p[i] - adj.q[m][i]).abs() <= 1e-7 * q_scale.max(1e-12),
                    "-Δp = q at level {m}, cell {i}"
                );
            }
            assert!(mean_value(&adj.q[m], &spec.grid).abs() <= 1e-10 * q_scale.max(1e-12));
            for i in 0..32 {
                let combo = adj.p[m][i] + spec.phys.tau * adj.q[m][i];
                assert!((combo - adj.combo[m][i]).abs() <= 1e-12 * combo.abs().max(1.0));
            }
        }
    }

    #[test]
    fn duality_against_linearized() {
        // <r, h>_Q equals the tracking pairing of xi^h; the defining
        // property of the discrete adjoint
        let spec = spec(24, 16);
        let u = random_control(16, 24, 23, 1.0);
        let base = solve_state(&u, &spec).unwrap();
        let adj = solve_adjoint(&base, &spec.targets, &spec.weights, &spec).unwrap();
        let sens = SensitivitySolver::new(&spec, &base);
        let dt = spec.dt();

        for seed in 0..5 {
            let h = random_control(16, 24, 100 + seed, 1.0);
            let lin = sens.solve_linearized(&h).unwrap();
            let lhs = adj.r_control().inner(&h, &spec.grid, dt);
            let mut rhs = 0.0;
            for m in 1..=16 {
                let mut diff = Field::zeros(24);
                for i in 0..24 {
                    diff[i] = base.phi[m][i] - spec.targets.phi_q[m][i];
                }
                rhs += spec.weights.b1 * dt * inner(&lin.xi[m], &diff, &spec.grid);
            }
            let mut term = Field::zeros(24);
            for i in 0..24 {
                term[i] = base.phi[16][i] - spec.targets.phi_omega[i];
            }
            rhs += spec.weights.b2 * inner(&lin.xi[16], &term, &spec.grid);
            let denom = lhs.abs().max(1e-30);
            assert!(
                (lhs - rhs).abs() / denom <= 1e-10,
                "duality mismatch: {lhs} vs {rhs} (rel {})",
                (lhs - rhs).abs() / denom
            );
        }
    }
}
