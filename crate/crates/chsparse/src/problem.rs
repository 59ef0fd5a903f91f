//! Problem data shared across the solver stack: space-time controls,
//! tracking targets, and the complete problem specification.

use crate::grid::{kahan_sum, CoreError, Field, Grid};
use crate::objective::{BoxBounds, CostWeights};
use crate::potential::PotentialParams;
use crate::state::{InitialData, PhysParams};

/// Space-time control, piecewise constant in time: slice n holds the value
/// on [t_n, t_{n+1}), n = 0..n_steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub slices: Vec<Field>,
}

impl Control {
    pub fn zeros(n_steps: usize, n_cells: usize) -> Self {
        Self { slices: (0..n_steps).map(|_| Field::zeros(n_cells)).collect() }
    }

    pub fn constant(n_steps: usize, n_cells: usize, c: f64) -> Self {
        Self { slices: (0..n_steps).map(|_| Field::constant(n_cells, c)).collect() }
    }

    /// Samples `f(x, t)` at cell centers and left slice endpoints t_n.
    pub fn from_fn(grid: &Grid, n_steps: usize, dt: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            slices: (0..n_steps)
                .map(|n| Field::from_fn(grid, |x| f(x, n as f64 * dt)))
                .collect(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.slices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.slices.first().map_or(0, Field::len)
    }

    pub fn inf_norm(&self) -> f64 {
        self.slices.iter().map(Field::inf_norm).fold(0.0, f64::max)
    }

    /// L¹(Q) norm Σ |u|·h·dt.
    pub fn l1_norm(&self, grid: &Grid, dt: f64) -> f64 {
        let per_slice = self
            .slices
            .iter()
            .map(|s| kahan_sum(s.values.iter().map(|v| v.abs())));
        kahan_sum(per_slice) * grid.h() * dt
    }

    /// L²(Q) inner product Σ u·v·h·dt.
    pub fn inner(&self, other: &Self, grid: &Grid, dt: f64) -> f64 {
        assert_eq!(self.n_steps(), other.n_steps());
        let per_slice = self.slices.iter().zip(&other.slices).map(|(a, b)| {
            kahan_sum(a.values.iter().zip(&b.values).map(|(x, y)| x * y))
        });
        kahan_sum(per_slice) * grid.h() * dt
    }

    pub fn l2q_norm(&self, grid: &Grid, dt: f64) -> f64 {
        self.inner(self, grid, dt).sqrt()
    }

    /// s * self.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            slices: self
                .slices
                .iter()
                .map(|sl| Field { values: sl.values.iter().map(|v| s * v).collect() })
                .collect(),
        }
    }

    /// self + s * other.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        assert_eq!(self.n_steps(), other.n_steps());
        Self {
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| Field {
                    values: a.values.iter().zip(&b.values).map(|(x, y)| x + s * y).collect(),
                })
                .collect(),
        }
    }

    /// Pointwise projection onto [lb, ub].
    pub fn project_box(&self, lb: f64, ub: f64) -> Self {
        Self {
            slices: self
                .slices
                .iter()
                .map(|s| Field { values: s.values.iter().map(|v| v.clamp(lb, ub)).collect() })
                .collect(),
        }
    }

    pub fn within_box(&self, lb: f64, ub: f64) -> bool {
        self.slices
            .iter()
            .all(|s| s.values.iter().all(|&v| v >= lb && v <= ub))
    }
}

/// Tracking targets: φ_Q over the time levels (level m is the target paired
/// with state level m in the quadrature; level 0 never enters the cost) and
/// the terminal target φ_Ω.
#[derive(Debug, Clone)]
pub struct Targets {
    pub phi_q: Vec<Field>,
    pub phi_omega: Field,
}

impl Targets {
    /// Builds targets from a profile `f(x, t)` sampled at the time levels;
    /// φ_Ω is the profile at t = T.
    pub fn from_fn(grid: &Grid, n_steps: usize, dt: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let phi_q: Vec<Field> = (0..=n_steps)
            .map(|m| Field::from_fn(grid, |x| f(x, m as f64 * dt)))
            .collect();
        let phi_omega = phi_q[n_steps].clone();
        Self { phi_q, phi_omega }
    }
}

/// Complete description of one control problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub grid: Grid,
    pub potential: PotentialParams,
    pub phys: PhysParams,
    pub initial: InitialData,
    pub bounds: BoxBounds,
    pub targets: Targets,
    pub weights: CostWeights,
}

impl ProblemSpec {
    /// Validates cross-shape consistency (the individual pieces validate
    /// their own invariants at construction).
    pub fn validate(&self) -> Result<(), CoreError> {
        let n = self.grid.n_cells();
        for (name, len) in [
            ("gamma", self.phys.gamma.len()),
            ("phi0", self.initial.phi0.len()),
            ("w0", self.initial.w0.len()),
            ("phi_omega", self.targets.phi_omega.len()),
        ] {
            if len != n {
                return Err(CoreError::InvalidGrid(format!(
                    "{name} has {len} cells, grid has {n}"
                )));
            }
        }
        if self.targets.phi_q.len() != self.phys.n_steps + 1 {
            return Err(CoreError::InvalidGrid(format!(
                "phi_q has {} time levels, expected {}",
                self.targets.phi_q.len(),
                self.phys.n_steps + 1
            )));
        }
        if self.targets.phi_q.iter().any(|f| f.len() != n) {
            return Err(CoreError::InvalidGrid("phi_q level with wrong cell count".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.phys.dt()
    }

    pub fn n_steps(&self) -> usize {
        self.phys.n_steps
    }

    /// The desk-scale tracking instance used throughout the tests and as
    /// the shipped default configuration.
    pub fn default_instance() -> Self {
        use std::f64::consts::PI;
        let grid = Grid::new(1.0, 128).unwrap();
        let n_steps = 256;
        let horizon = 0.5;
        let potential = PotentialParams::new(1.0, 2.5).unwrap();
        let gamma = Field::constant(grid.n_cells(), 0.5);
        let phys = PhysParams::new(0.1, gamma, horizon, n_steps).unwrap();
        let phi0 = Field::from_fn(&grid, |x| 0.2 * (PI * x).cos());
        let w0 = Field::zeros(grid.n_cells());
        let initial = InitialData::new(phi0, w0).unwrap();
        let targets =
            Targets::from_fn(&grid, n_steps, phys.dt(), |x, _t| 0.4 * (PI * x).cos());
        let weights = CostWeights::new(1.0, 0.5, 1e-2, 1e-3).unwrap();
        let bounds = BoxBounds::new(-5.0, 5.0).unwrap();
        let spec = Self { grid, potential, phys, initial, bounds, targets, weights };
        spec.validate().expect("default instance is consistent");
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_is_consistent() {
        let spec = ProblemSpec::default_instance();
        assert_eq!(spec.grid.n_cells(), 128);
        assert_eq!(spec.n_steps(), 256);
        assert!((spec.dt() - 0.5 / 256.0).abs() < 1e-18);
    }

    #[test]
    fn control_norms() {
        let grid = Grid::new(1.0, 8).unwrap();
        let u = Control::constant(4, 8, -2.0);
        let dt = 0.25;
        assert!((u.l1_norm(&grid, dt) - 2.0).abs() < 1e-14); // |Q| = 1, |u| = 2
        assert!((u.l2q_norm(&grid, dt) - 2.0).abs() < 1e-14);
        assert_eq!(u.inf_norm(), 2.0);
    }

    #[test]
    fn box_projection() {
        let grid = Grid::new(1.0, 4).unwrap();
        let u = Control::from_fn(&grid, 2, 0.5, |x, t| 10.0 * (x - 0.5) + t);
        let p = u.project_box(-1.0, 1.0);
        assert!(p.within_box(-1.0, 1.0));
        assert!(!u.within_box(-1.0, 1.0));
    }
}
