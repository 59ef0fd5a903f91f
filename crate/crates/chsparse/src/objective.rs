//! Cost evaluation, reduced gradient, the pointwise prox/projection map,
//! sparsity analysis, and the second-order quadratic form.
//!
//! Space-time quadrature is piecewise-constant cell sums (value·h·dt)
//! throughout, matching the control parameterization; the state tracking
//! term samples levels 1..=n_steps (the level that holds on each backward
//! Euler interval), which is exactly the convention the discrete adjoint
//! transposes.

use crate::adjoint::AdjointTrajectory;
use crate::grid::{inner, kahan_sum, Field, Grid};
use crate::problem::{Control, ProblemSpec, Targets};
use crate::sensitivity::{LinearizedTrajectory, SensitivitySolver};
use crate::state::{SolverError, StateTrajectory};
use thiserror::Error;

/// κ below this is treated as "no L¹ term": sparsity characterizations are
/// skipped rather than evaluated against a vacuous threshold.
pub const NUMERICAL_ZERO_KAPPA: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cost weights need b1, b2, kappa >= 0 and b3 > 0 (got b1={b1}, b2={b2}, b3={b3}, kappa={kappa})")]
    BadWeights { b1: f64, b2: f64, b3: f64, kappa: f64 },
    #[error("box bounds need lower <= upper, got [{lower}, {upper}]")]
    BadBounds { lower: f64, upper: f64 },
    #[error("subdifferential multiplier undefined for kappa = 0; skip the sparsity analysis")]
    KappaZero,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Weights (b1, b2, b3, κ) of the cost functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub kappa: f64,
}

impl CostWeights {
    pub fn new(b1: f64, b2: f64, b3: f64, kappa: f64) -> Result<Self, ObjectiveError> {
        if !(b1 >= 0.0 && b2 >= 0.0 && b3 > 0.0 && kappa >= 0.0) {
            return Err(ObjectiveError::BadWeights { b1, b2, b3, kappa });
        }
        Ok(Self { b1, b2, b3, kappa })
    }
}

/// Constant control box [lower, upper]. The sparsity theorems additionally
/// assume lower < 0 < upper; that is checked where it matters, not here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBounds {
    pub lower: f64,
    pub upper: f64,
}

impl BoxBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, ObjectiveError> {
        if !(lower <= upper) {
            return Err(ObjectiveError::BadBounds { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    /// lower < 0 < upper, the sparsity-theorem hypothesis.
    pub fn straddles_zero(&self) -> bool {
        self.lower < 0.0 && 0.0 < self.upper
    }
}

/// Smooth part, L¹ part, and total of the cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub j_smooth: f64,
    pub g_l1: f64,
    pub j_total: f64,
}

/// Evaluates the cost functional for a solved trajectory.
pub fn evaluate_cost(
    state: &StateTrajectory,
    u: &Control,
    targets: &Targets,
    weights: &CostWeights,
    grid: &Grid,
    dt: f64,
) -> Result<CostBreakdown, ObjectiveError> {
    let n_steps = u.n_steps();
    if state.phi.len() != n_steps + 1 {
        return Err(ObjectiveError::ShapeMismatch(format!(
            "state has {} levels, control implies {}",
            state.phi.len(),
            n_steps + 1
        )));
    }
    if targets.phi_q.len() != n_steps + 1 {
        return Err(ObjectiveError::ShapeMismatch(format!(
            "targets have {} levels, expected {}",
            targets.phi_q.len(),
            n_steps + 1
        )));
    }
    let n = grid.n_cells();
    if state.phi[0].len() != n || u.n_cells() != n {
        return Err(ObjectiveError::ShapeMismatch("cell count mismatch".into()));
    }

    let track: f64 = kahan_sum((1..=n_steps).map(|m| {
        kahan_sum(
            state.phi[m]
                .values
                .iter()
                .zip(&targets.phi_q[m].values)
                .map(|(a, b)| (a - b) * (a - b)),
        )
    })) * grid.h()
        * dt;
    let terminal: f64 = kahan_sum(
        state.phi[n_steps]
            .values
            .iter()
            .zip(&targets.phi_omega.values)
            .map(|(a, b)| (a - b) * (a - b)),
    ) * grid.h();
    let quad: f64 = kahan_sum(
        u.slices
            .iter()
            .map(|s| kahan_sum(s.values.iter().map(|v| v * v))),
    ) * grid.h()
        * dt;

    let j_smooth = 0.5 * (weights.b1 * track + weights.b2 * terminal + weights.b3 * quad);
    let g_l1 = u.l1_norm(grid, dt);
    Ok(CostBreakdown { j_smooth, g_l1, j_total: j_smooth + weights.kappa * g_l1 })
}

/// Gradient of the smooth reduced cost: g = r + b3·u (pointwise; the κ-term
/// is handled by the prox map, not here).
pub fn reduced_gradient(u: &Control, adjoint: &AdjointTrajectory, weights: &CostWeights) -> Control {
    let r = adjoint.r_control();
    assert_eq!(r.n_steps(), u.n_steps(), "adjoint does not match the control");
    Control {
        slices: u
            .slices
            .iter()
            .zip(&r.slices)
            .map(|(us, rs)| Field {
                values: us
                    .values
                    .iter()
                    .zip(&rs.values)
                    .map(|(uv, rv)| rv + weights.b3 * uv)
                    .collect(),
            })
            .collect(),
    }
}

/// Scalar soft-threshold then box clip: the unique minimizer of
/// (1/2α)(v - (u_old - α·g))² + κ|v| over [lb, ub].
pub fn prox_point(
    g_r: f64,
    u_old: f64,
    alpha: f64,
    weights: &CostWeights,
    lb: f64,
    ub: f64,
) -> Result<f64, ObjectiveError> {
    if lb > ub {
        return Err(ObjectiveError::BadBounds { lower: lb, upper: ub });
    }
    assert!(alpha > 0.0, "prox step must be positive");
    Ok(prox_point_unchecked(g_r, u_old, alpha, weights.kappa, lb, ub))
}

#[inline]
fn prox_point_unchecked(g_r: f64, u_old: f64, alpha: f64, kappa: f64, lb: f64, ub: f64) -> f64 {
    let y = u_old - alpha * g_r;
    let t = alpha * kappa;
    let soft = if y > t {
        y - t
    } else if y < -t {
        y + t
    } else {
        0.0
    };
    soft.clamp(lb, ub)
}

/// Pointwise prox step over a whole control given the smooth gradient.
pub fn prox_control(
    u: &Control,
    g: &Control,
    alpha: f64,
    weights: &CostWeights,
    bounds: &BoxBounds,
) -> Control {
    assert_eq!(u.n_steps(), g.n_steps());
    Control {
        slices: u
            .slices
            .iter()
            .zip(&g.slices)
            .map(|(us, gs)| Field {
                values: us
                    .values
                    .iter()
                    .zip(&gs.values)
                    .map(|(&uv, &gv)| {
                        prox_point_unchecked(gv, uv, alpha, weights.kappa, bounds.lower, bounds.upper)
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// ‖u - Prox(u - α·g)‖∞ / α: zero exactly at fixed points of the
/// projection formula.
pub fn stationarity_residual(
    u: &Control,
    g: &Control,
    alpha: f64,
    weights: &CostWeights,
    bounds: &BoxBounds,
) -> f64 {
    let prox = prox_control(u, g, alpha, weights, bounds);
    let mut worst = 0.0f64;
    for (us, ps) in u.slices.iter().zip(&prox.slices) {
        for (uv, pv) in us.values.iter().zip(&ps.values) {
            worst = worst.max((uv - pv).abs());
        }
    }
    worst / alpha
}

/// The subdifferential multiplier λ ∈ ∂‖u‖_L¹: sign(u) off the zero set,
/// and the variational-inequality value -(r + b3·u)/κ clipped to [-1, 1]
/// on it.
pub fn subgradient_lambda(
    u: &Control,
    r: &Control,
    weights: &CostWeights,
) -> Result<Control, ObjectiveError> {
    if weights.kappa <= NUMERICAL_ZERO_KAPPA {
        return Err(ObjectiveError::KappaZero);
    }
    assert_eq!(u.n_steps(), r.n_steps());
    Ok(Control {
        slices: u
            .slices
            .iter()
            .zip(&r.slices)
            .map(|(us, rs)| Field {
                values: us
                    .values
                    .iter()
                    .zip(&rs.values)
                    .map(|(&uv, &rv)| {
                        if uv > 0.0 {
                            1.0
                        } else if uv < 0.0 {
                            -1.0
                        } else {
                            (-(rv + weights.b3 * uv) / weights.kappa).clamp(-1.0, 1.0)
                        }
                    })
                    .collect(),
            })
            .collect(),
    })
}

/// Counts of violations of the two directions of the sparsity
/// characterization u = 0 ⟺ |r| ≤ κ, with a tolerance band δ around κ.
#[derive(Debug, Clone, Copy)]
pub struct SparsityReport {
    pub kappa: f64,
    pub delta: f64,
    pub tol_u: f64,
    /// #{|u| ≤ tol_u} / #points.
    pub zero_fraction: f64,
    /// Points with |u| > tol_u but |r| ≤ κ - δ; `None` when κ is
    /// numerically zero and the characterization is vacuous.
    pub violations_a: Option<usize>,
    /// Points with |u| ≤ tol_u but |r| > κ + δ.
    pub violations_b: Option<usize>,
    /// Whether the constant bounds straddle zero (theorem hypothesis).
    pub bounds_hypothesis: bool,
}

/// Checks the pointwise sparsity characterization on a (u, r) pair.
pub fn sparsity_report(
    u: &Control,
    r: &Control,
    weights: &CostWeights,
    tol_u: f64,
    delta: f64,
    bounds: &BoxBounds,
) -> SparsityReport {
    assert_eq!(u.n_steps(), r.n_steps());
    let mut zeros = 0usize;
    let mut total = 0usize;
    let mut va = 0usize;
    let mut vb = 0usize;
    for (us, rs) in u.slices.iter().zip(&r.slices) {
        for (&uv, &rv) in us.values.iter().zip(&rs.values) {
            total += 1;
            let is_zero = uv.abs() <= tol_u;
            if is_zero {
                zeros += 1;
                if rv.abs() > weights.kappa + delta {
                    vb += 1;
                }
            } else if rv.abs() <= weights.kappa - delta {
                va += 1;
            }
        }
    }
    let degenerate = weights.kappa <= NUMERICAL_ZERO_KAPPA;
    SparsityReport {
        kappa: weights.kappa,
        delta,
        tol_u,
        zero_fraction: zeros as f64 / total.max(1) as f64,
        violations_a: (!degenerate).then_some(va),
        violations_b: (!degenerate).then_some(vb),
        bounds_hypothesis: bounds.straddles_zero(),
    }
}

/// Second derivative of the smooth reduced cost as a bilinear form:
///
/// ```text
///   Ĵ''(u)[h,k] = ΣΣ (b1 - f'''(φ_m) q_m) ξ^h_m ξ^k_m h dt
///              + b2 Σ ξ^h(T) ξ^k(T) h + b3 ΣΣ h k h dt
/// ```
///
/// where q_m is the adjoint multiplier of step m. Per-step multipliers make
/// this the exact second derivative of the discrete objective, which is
/// what the finite-difference cross-checks compare against.
pub fn hessian_form_with_xi(
    xi_h: &LinearizedTrajectory,
    xi_k: &LinearizedTrajectory,
    h: &Control,
    k: &Control,
    base: &StateTrajectory,
    adjoint: &AdjointTrajectory,
    spec: &ProblemSpec,
) -> f64 {
    let n_steps = spec.n_steps();
    let grid = &spec.grid;
    let dt = spec.dt();
    let w = &spec.weights;
    let p = &spec.potential;

    let track = kahan_sum((1..=n_steps).map(|m| {
        let q_m = adjoint.q_step(m - 1);
        kahan_sum((0..grid.n_cells()).map(|i| {
            let f3 = p.f1_deriv(base.phi[m][i], 3).expect("base separated")
                + p.f2_deriv(base.phi[m][i], 3);
            (w.b1 - f3 * q_m[i]) * xi_h.xi[m][i] * xi_k.xi[m][i]
        }))
    })) * grid.h()
        * dt;
    let terminal = w.b2 * inner(xi_h.terminal_xi(), xi_k.terminal_xi(), grid);
    let control = w.b3 * h.inner(k, grid, dt);
    track + terminal + control
}

/// Convenience form running the two linearized solves internally.
pub fn hessian_quadratic_form(
    h: &Control,
    k: &Control,
    base: &StateTrajectory,
    adjoint: &AdjointTrajectory,
    spec: &ProblemSpec,
) -> Result<f64, ObjectiveError> {
    let sens = SensitivitySolver::new(spec, base);
    let xi_h = sens.solve_linearized(h)?;
    let xi_k = sens.solve_linearized(k)?;
    Ok(hessian_form_with_xi(&xi_h, &xi_k, h, k, base, adjoint, spec))
}
