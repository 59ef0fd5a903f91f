//! Cell-centered 1D grid, discrete fields, the mirror-ghost Neumann
//! Laplacian, and banded linear solves.
//!
//! Everything downstream (time stepping, sensitivities, adjoint) is built on
//! the pieces in this module. The Laplacian has exactly zero row sums, which
//! is what makes discrete mass conservation exact rather than approximate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular or numerically indefinite banded system ({context})")]
    SingularSystem { context: String },
}

/// Uniform cell-centered grid on Ω = (0, length).
///
/// Cell centers sit at x_i = (i + 1/2)·h, i = 0..n_cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n_cells: usize,
    length: f64,
    h: f64,
}

impl Grid {
    /// Builds a uniform grid. Rejects nonpositive lengths and fewer than
    /// 4 cells (the Laplacian stencil and the refinement tests need room).
    pub fn new(length: f64, n_cells: usize) -> Result<Self, CoreError> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(CoreError::InvalidGrid(format!(
                "length must be positive and finite, got {length}"
            )));
        }
        if n_cells < 4 {
            return Err(CoreError::InvalidGrid(format!(
                "n_cells must be at least 4, got {n_cells}"
            )));
        }
        Ok(Self { n_cells, length, h: length / n_cells as f64 })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Cell width h = length / n_cells.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Center coordinate of cell i.
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }
}

/// Spatial function sampled at cell centers: one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    /// Samples `f(x)` at the cell centers of `grid`.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self { values: (0..grid.n_cells()).map(|i| f(grid.x(i))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

/// Compensated (Kahan) sum; the diagnostics in this crate compare means and
/// inner products at 1e-12 and below, where naive summation noise matters.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Mean value (1/|Ω|)·Σ f_i·h of a cell-centered field.
pub fn mean_value(f: &Field, grid: &Grid) -> f64 {
    kahan_sum(f.values.iter().copied()) * grid.h() / grid.length()
}

/// L²(Ω) inner product h·Σ f_i·g_i.
pub fn inner(f: &Field, g: &Field, grid: &Grid) -> f64 {
    kahan_sum(f.values.iter().zip(&g.values).map(|(a, b)| a * b)) * grid.h()
}

/// L²(Ω) norm.
pub fn l2_norm(f: &Field, grid: &Grid) -> f64 {
    inner(f, f, grid).sqrt()
}

/// Banded matrix with `kl` sub- and `ku` superdiagonals, row-major compact
/// storage. Row i holds entries for columns i-kl ..= i+ku.
#[derive(Debug, Clone)]
pub struct BandedOperator {
    n: usize,
    kl: usize,
    ku: usize,
    rows: Vec<f64>,
}

impl BandedOperator {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, rows: vec![0.0; n * (kl + ku + 1)] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0, 0);
        m.rows.fill(1.0);
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn stride(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku && j < self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.rows[i * self.stride() + (j + self.kl - i)]
        } else {
            0.0
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(self.in_band(i, j), "({i},{j}) outside band");
        let s = self.stride();
        self.rows[i * s + (j + self.kl - i)] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(self.in_band(i, j), "({i},{j}) outside band");
        let s = self.stride();
        self.rows[i * s + (j + self.kl - i)] += v;
    }

    /// y = A·x.
    pub fn apply(&self, x: &Field) -> Field {
        assert_eq!(x.len(), self.n, "apply: field length mismatch");
        let mut y = Field::zeros(self.n);
        self.apply_into(&x.values, &mut y.values);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let s = self.stride();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.rows[i * s + (j + self.kl - i)] * x[j];
            }
            y[i] = acc;
        }
    }

    /// Exact row sum (no tolerance); the Neumann Laplacian must return 0.0
    /// for every row.
    pub fn row_sum(&self, i: usize) -> f64 {
        let s = self.stride();
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        (lo..=hi).map(|j| self.rows[i * s + (j + self.kl - i)]).sum()
    }

    /// C = A + s·B. Result bandwidth is the union of both bands.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        assert_eq!(self.n, other.n);
        let kl = self.kl.max(other.kl);
        let ku = self.ku.max(other.ku);
        let mut c = Self::zeros(self.n, kl, ku);
        for i in 0..self.n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(self.n - 1);
            for j in lo..=hi {
                let v = self.get(i, j) + s * other.get(i, j);
                c.set(i, j, v);
            }
        }
        c
    }

    /// C = A·B (bandwidths add).
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let kl = self.kl + other.kl;
        let ku = self.ku + other.ku;
        let mut c = Self::zeros(self.n, kl, ku);
        for i in 0..self.n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(self.n - 1);
            for j in lo..=hi {
                let klo = j.saturating_sub(other.kl).max(i.saturating_sub(self.kl));
                let khi = (j + other.ku).min(i + self.ku).min(self.n - 1);
                let mut acc = 0.0;
                for k in klo..=khi {
                    acc += self.get(i, k) * other.get(k, j);
                }
                c.set(i, j, acc);
            }
        }
        c
    }

    /// C = A·diag(d): scales column j by d\[j\]. Bandwidth unchanged.
    pub fn mul_diag_right(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.n);
        let mut c = self.clone();
        let s = c.stride();
        for i in 0..c.n {
            let lo = i.saturating_sub(c.kl);
            let hi = (i + c.ku).min(c.n - 1);
            for j in lo..=hi {
                c.rows[i * s + (j + c.kl - i)] *= d[j];
            }
        }
        c
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.rows {
            *v *= s;
        }
    }

    /// Adds s to every diagonal entry.
    pub fn shift_diagonal(&mut self, s: f64) {
        let stride = self.stride();
        for i in 0..self.n {
            self.rows[i * stride + self.kl] += s;
        }
    }

    /// LU factorization with partial pivoting (band storage, classic
    /// `bandec` scheme). Fails on a zero pivot, which is how the pure
    /// Neumann Laplacian (constant nullspace) is rejected.
    pub fn lu(&self) -> Result<BandedLu, CoreError> {
        BandedLu::factor(self)
    }

    /// Solves A·x = rhs by banded LU with one step of iterative refinement.
    pub fn solve(&self, rhs: &Field) -> Result<Field, CoreError> {
        if rhs.len() != self.n {
            return Err(CoreError::DimensionMismatch { expected: self.n, got: rhs.len() });
        }
        let lu = self.lu()?;
        let mut x = rhs.clone();
        lu.solve_in_place(&mut x.values);
        // one refinement pass tightens the residual to ~1e-15 relative
        let mut r = Field::zeros(self.n);
        self.apply_into(&x.values, &mut r.values);
        for i in 0..self.n {
            r.values[i] = rhs.values[i] - r.values[i];
        }
        lu.solve_in_place(&mut r.values);
        for i in 0..self.n {
            x.values[i] += r.values[i];
        }
        Ok(x)
    }
}

/// Factored form of a [`BandedOperator`]: L has `kl` subdiagonals, U has
/// `kl + ku` superdiagonals (fill-in from pivoting).
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    mm: usize,          // kl + ku + 1 working row width (post fill-in)
    upper: Vec<f64>,    // n x mm, row k starts at its pivot column
    lower: Vec<f64>,    // n x kl elimination multipliers
    pivot: Vec<usize>,
}

impl BandedLu {
    fn factor(a: &BandedOperator) -> Result<Self, CoreError> {
        let n = a.n;
        let kl = a.kl;
        let ku = a.ku;
        let mm = kl + ku + 1;
        let mut upper = vec![0.0; n * mm];
        let mut lower = vec![0.0; n * kl.max(1)];
        let mut pivot = vec![0usize; n];

        // load band storage, shifting the top kl rows left so that column 0
        // of each working row is the leftmost stored entry of that row
        for i in 0..n {
            let shift = kl.saturating_sub(i);
            for j in 0..mm {
                let src = a.rows[i * mm + j];
                if j >= shift {
                    upper[i * mm + (j - shift)] = src;
                }
            }
        }

        let scale = a.rows.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let tiny = scale * 1e-300;

        let mut l = kl;
        for k in 0..n {
            if l < n {
                l += 1;
            }
            // partial pivot over rows k..l in working column 0
            let mut ip = k;
            let mut pmax = upper[k * mm].abs();
            for i in (k + 1)..l {
                let v = upper[i * mm].abs();
                if v > pmax {
                    pmax = v;
                    ip = i;
                }
            }
            pivot[k] = ip;
            if pmax <= tiny {
                return Err(CoreError::SingularSystem {
                    context: format!("zero pivot at elimination step {k}"),
                });
            }
            if ip != k {
                for j in 0..mm {
                    upper.swap(k * mm + j, ip * mm + j);
                }
            }
            let pk = upper[k * mm];
            for i in (k + 1)..l {
                let m = upper[i * mm] / pk;
                lower[k * kl.max(1) + (i - k - 1)] = m;
                for j in 1..mm {
                    upper[i * mm + (j - 1)] = upper[i * mm + j] - m * upper[k * mm + j];
                }
                upper[i * mm + (mm - 1)] = 0.0;
            }
        }
        Ok(Self { n, kl, mm, upper, lower, pivot })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let (n, kl, mm) = (self.n, self.kl, self.mm);
        let mut l = kl;
        for k in 0..n {
            let ip = self.pivot[k];
            if ip != k {
                b.swap(k, ip);
            }
            if l < n {
                l += 1;
            }
            for i in (k + 1)..l {
                b[i] -= self.lower[k * kl.max(1) + (i - k - 1)] * b[k];
            }
        }
        let mut l = 1;
        for i in (0..n).rev() {
            let mut sum = b[i];
            for k in 1..l {
                sum -= self.upper[i * mm + k] * b[i + k];
            }
            b[i] = sum / self.upper[i * mm];
            if l < mm && i + l < n + 1 {
                l += 1;
            }
        }
    }
}

/// Discrete Neumann Laplacian via mirror ghost cells: interior stencil
/// (1, -2, 1)/h², boundary rows (-1, 1)/h² and (1, -1)/h². Row sums are
/// exactly zero, so constants are in the kernel and ∫Δ_h v = 0 discretely.
pub fn neumann_laplacian(grid: &Grid) -> BandedOperator {
    let n = grid.n_cells();
    let c = 1.0 / (grid.h() * grid.h());
    let mut lap = BandedOperator::zeros(n, 1, 1);
    lap.set(0, 0, -c);
    lap.set(0, 1, c);
    for i in 1..n - 1 {
        lap.set(i, i - 1, c);
        lap.set(i, i, -2.0 * c);
        lap.set(i, i + 1, c);
    }
    lap.set(n - 1, n - 2, c);
    lap.set(n - 1, n - 1, -c);
    lap
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_spacing() {
        let g = Grid::new(1.0, 100).unwrap();
        assert_eq!(g.h(), 0.01);
        let g = Grid::new(2.0, 4).unwrap();
        assert_eq!(g.h(), 0.5);
        // h * n_cells recovers length to one ulp
        let g = Grid::new(1.0, 3000).unwrap();
        assert!((g.h() * g.n_cells() as f64 - 1.0).abs() <= f64::EPSILON);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(Grid::new(1.0, 2).is_err());
        assert!(Grid::new(0.0, 100).is_err());
        assert!(Grid::new(-1.0, 100).is_err());
    }

    #[test]
    fn laplacian_boundary_stencil() {
        let g = Grid::new(2.0, 4).unwrap(); // h = 0.5, 1/h^2 = 4
        let lap = neumann_laplacian(&g);
        assert_eq!(lap.get(0, 0), -4.0);
        assert_eq!(lap.get(0, 1), 4.0);
        assert_eq!(lap.get(0, 2), 0.0);
        assert_eq!(lap.get(0, 3), 0.0);
    }

    #[test]
    fn laplacian_row_sums_exactly_zero() {
        let g = Grid::new(1.0, 37).unwrap();
        let lap = neumann_laplacian(&g);
        for i in 0..g.n_cells() {
            assert_eq!(lap.row_sum(i), 0.0, "row {i}");
        }
    }

    #[test]
    fn laplacian_kills_constants() {
        let g = Grid::new(1.0, 16).unwrap();
        let lap = neumann_laplacian(&g);
        let y = lap.apply(&Field::constant(16, 3.7));
        for v in &y.values {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn laplacian_cosine_eigenfunction_second_order() {
        // v_i = cos(pi x_i / L) is a discrete eigenvector; the eigenvalue
        // approaches -(pi/L)^2 at second order in h.
        let mut errs = Vec::new();
        for &n in &[32usize, 64, 128, 256] {
            let g = Grid::new(1.0, n).unwrap();
            let lap = neumann_laplacian(&g);
            let v = Field::from_fn(&g, |x| (std::f64::consts::PI * x).cos());
            let lv = lap.apply(&v);
            let lam = -(std::f64::consts::PI).powi(2);
            let err = (0..n)
                .map(|i| (lv[i] - lam * v[i]).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.5 && ratio < 4.5, "expected O(h^2): ratio {ratio}");
        }
    }

    #[test]
    fn mean_value_cases() {
        let g = Grid::new(1.0, 64).unwrap();
        assert!((mean_value(&Field::constant(64, 2.5), &g) - 2.5).abs() < 1e-14);
        let v = Field::from_fn(&g, |x| (std::f64::consts::PI * x).cos());
        assert!(mean_value(&v, &g).abs() < 1e-14, "cosine mean vanishes by symmetry");
        let g4 = Grid::new(1.0, 4).unwrap();
        let alt = Field { values: vec![1.0, -1.0, 1.0, -1.0] };
        assert_eq!(mean_value(&alt, &g4), 0.0);
    }

    #[test]
    fn solve_identity_shift() {
        let g = Grid::new(1.0, 8).unwrap();
        let lap = neumann_laplacian(&g);
        let mut a = lap.clone();
        a.scale(0.0);
        a.shift_diagonal(1.0);
        let rhs = Field::from_fn(&g, |x| x * x - 0.3);
        let x = a.solve(&rhs).unwrap();
        for i in 0..8 {
            assert!((x[i] - rhs[i]).abs() < 1e-15);
        }
    }

    /// Dense LU with partial pivoting; test-only oracle.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let (ip, _) = (k..n)
                .map(|i| (i, m[i][k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            m.swap(k, ip);
            x.swap(k, ip);
            assert!(m[k][k].abs() > 0.0, "oracle: singular");
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..n {
                    let v = m[k][j];
                    m[i][j] -= f * v;
                }
                x[i] -= f * x[k];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let v = x[j];
                x[i] -= m[i][j] * v;
            }
            x[i] /= m[i][i];
        }
        x
    }

    #[test]
    fn solve_against_dense_oracle() {
        let g = Grid::new(1.0, 8).unwrap();
        let lap = neumann_laplacian(&g);
        let a = BandedOperator::identity(8).add_scaled(&lap, -1.0); // I - Lap
        let dense: Vec<Vec<f64>> =
            (0..8).map(|i| (0..8).map(|j| a.get(i, j)).collect()).collect();
        let rhs = Field { values: vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.0, 2.0, -0.5] };
        let x = a.solve(&rhs).unwrap();
        let y = dense_solve(&dense, &rhs.values);
        for i in 0..8 {
            assert!((x[i] - y[i]).abs() < 1e-12, "cell {i}: {} vs {}", x[i], y[i]);
        }
    }

    #[test]
    fn pure_neumann_laplacian_is_singular() {
        let g = Grid::new(1.0, 16).unwrap();
        let lap = neumann_laplacian(&g);
        let rhs = Field::constant(16, 1.0);
        match lap.solve(&rhs) {
            Err(CoreError::SingularSystem { .. }) => {}
            other => panic!("expected singular-system error, got {other:?}"),
        }
    }

    #[test]
    fn pentadiagonal_solve_recovers_rhs() {
        // exercises fill-in + pivoting on the kind of operator the Newton
        // step assembles: I/dt - Lap*diag(c) + Lap^2
        let g = Grid::new(1.0, 24).unwrap();
        let lap = neumann_laplacian(&g);
        let c: Vec<f64> = (0..24).map(|i| 50.0 + (i as f64).sin()).collect();
        let lap2 = lap.mul(&lap);
        let mut a = lap2.add_scaled(&lap.mul_diag_right(&c), -1.0);
        a.shift_diagonal(512.0);
        let rhs = Field::from_fn(&g, |x| (3.0 * x).sin());
        let x = a.solve(&rhs).unwrap();
        let back = a.apply(&x);
        let scale = rhs.inf_norm();
        for i in 0..24 {
            assert!((back[i] - rhs[i]).abs() <= 1e-12 * scale);
        }
    }

    proptest! {
        #[test]
        fn laplacian_symmetry(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::new(1.0, 32).unwrap();
            let lap = neumann_laplacian(&g);
            let u = Field { values: (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect() };
            let v = Field { values: (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect() };
            let lhs = inner(&lap.apply(&u), &v, &g);
            let rhs = inner(&u, &lap.apply(&v), &g);
            let bound = 1e-12 * l2_norm(&u, &g) * l2_norm(&v, &g) / (g.h() * g.h());
            prop_assert!((lhs - rhs).abs() <= bound.max(1e-12));
        }

        #[test]
        fn laplacian_mean_free_output(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::new(1.0, 32).unwrap();
            let lap = neumann_laplacian(&g);
            let v = Field { values: (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect() };
            let m = mean_value(&lap.apply(&v), &g);
            // row sums are exactly zero; only per-row apply roundoff remains,
            // of size ~ eps * |v| / h^2
            prop_assert!(m.abs() <= 64.0 * f64::EPSILON * v.inf_norm() / (g.h() * g.h()));
        }

        #[test]
        fn solve_then_apply_recovers(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::new(1.0, 32).unwrap();
            let lap = neumann_laplacian(&g);
            let mut a = BandedOperator::identity(32).add_scaled(&lap, -1.0);
            a.shift_diagonal(0.0);
            let rhs = Field { values: (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect() };
            let x = a.solve(&rhs).unwrap();
            let back = a.apply(&x);
            let scale = rhs.inf_norm().max(1e-30);
            for i in 0..32 {
                prop_assert!((back[i] - rhs[i]).abs() <= 1e-12 * scale);
            }
        }
    }
}
